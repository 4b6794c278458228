//! Weight and checkpoint files on disk.

use mgff::mgff_core::train::Sgd;
use mgff::mgff_core::{FeatureMatrix, MgffTdnn, ModelConfig, Tensor};
use mgff::weights::{load_checkpoint, load_model, save_checkpoint, save_model, OptimizerState};
use mgff::Error;

#[test]
fn saved_model_embeds_like_the_original() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("desk.mgff");
    let m = MgffTdnn::new(ModelConfig::desk_scale(), 5).unwrap();
    save_model(&path, &m).unwrap();
    let back = load_model(&path).unwrap();
    let f = FeatureMatrix::new(Tensor::from_fn(&[80, 40], |i| {
        ((i % 23) as f64 - 11.0) * 0.2
    }))
    .unwrap();
    let (a, b) = (m.embed(&f).unwrap(), back.embed(&f).unwrap());
    let diff = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-4 * a.norm(), "{diff}");
    let again = dir.path().join("again.mgff");
    save_model(&again, &back).unwrap();
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(&again).unwrap()
    );
}

#[test]
fn checkpoint_keeps_optimizer_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.mgff");
    let mut m = MgffTdnn::new(ModelConfig::micro(), 1).unwrap();
    m.attach_classifier(3).unwrap();
    let velocity = m
        .store()
        .ids()
        .map(|id| Some(m.store().get(id).map(|v| v * 0.5)))
        .collect();
    let state = OptimizerState {
        step: 42,
        sgd: Sgd::from_velocities(velocity),
    };
    save_checkpoint(&path, &m, &state).unwrap();
    let (back, restored) = load_checkpoint(&path).unwrap();
    assert_eq!(restored.step, 42);
    assert_eq!(restored.sgd.velocities(), state.sgd.velocities());
    assert_eq!(back.classifier().unwrap().num_classes, 3);
}

#[test]
fn missing_and_foreign_files() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.mgff");
    let err = load_model(&missing).unwrap_err();
    assert!(err.to_string().contains("none.mgff"), "{err}");
    let foreign = dir.path().join("foreign.mgff");
    std::fs::write(&foreign, b"RIFF....WAVE").unwrap();
    match load_model(&foreign) {
        Err(Error::File { source, .. }) => assert!(matches!(*source, Error::WeightFormat(_))),
        other => panic!("{other:?}"),
    }
}
