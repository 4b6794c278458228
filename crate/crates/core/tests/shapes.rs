//! End-to-end activation shapes of the full network and its ablations.

use mgff_core::{Ablation, FeatureMatrix, MgffTdnn, ModelConfig, Tensor};

fn trace(model: &MgffTdnn, t: usize) -> Vec<(String, Vec<usize>)> {
    model.shape_trace(t).unwrap()
}

fn full_plan(t: usize) -> Vec<(&'static str, Vec<usize>)> {
    vec![
        ("unsqueeze", vec![1, 80, t]),
        ("conv_1", vec![32, 80, t]),
        ("resnet_1", vec![32, 40, t]),
        ("resnet_2", vec![32, 20, t]),
        ("resnet_3", vec![32, 10, t]),
        ("reshape", vec![320, t]),
        ("mtdnn_1", vec![128, t]),
        ("mtdnn_2", vec![256, t]),
        ("mtdnn_3", vec![512, t]),
        ("embedding", vec![192]),
    ]
}

#[test]
fn full_network_follows_layer_plan() {
    let model = MgffTdnn::new(ModelConfig::full(), 7).unwrap();
    for t in [8, 37, 298] {
        let got = trace(&model, t);
        let want = full_plan(t);
        assert_eq!(got.len(), want.len(), "T={t}: {got:?}");
        for ((gl, gs), (wl, ws)) in got.iter().zip(&want) {
            assert_eq!(gl, wl, "T={t}");
            assert_eq!(gs, ws, "T={t} at {wl}");
        }
    }
}

#[test]
fn ablations_keep_block_widths() {
    for a in Ablation::ALL {
        let model = MgffTdnn::new(ModelConfig::full().with_ablation(a), 1).unwrap();
        let got = trace(&model, 37);
        let find = |label: &str| got.iter().find(|(l, _)| l == label).map(|(_, s)| s.clone());
        assert_eq!(find("reshape"), Some(vec![320, 37]), "{a:?}");
        assert_eq!(find("mtdnn_1"), Some(vec![128, 37]), "{a:?}");
        assert_eq!(find("mtdnn_3"), Some(vec![512, 37]), "{a:?}");
        assert_eq!(find("embedding"), Some(vec![192]), "{a:?}");
        assert_eq!(find("resnet_1").is_some(), a != Ablation::Dsm, "{a:?}");
    }
}

#[test]
fn odd_frame_counts_are_preserved() {
    let model = MgffTdnn::new(ModelConfig::desk_scale(), 0).unwrap();
    for t in [1, 2, 3, 13] {
        let got = trace(&model, t);
        for (label, shape) in &got[..got.len() - 1] {
            assert_eq!(*shape.last().unwrap(), t, "{label} at T={t}");
        }
    }
}

#[test]
fn embedding_is_deterministic_and_length_agnostic() {
    let model = MgffTdnn::new(ModelConfig::desk_scale(), 3).unwrap();
    let f = |t: usize| {
        FeatureMatrix::new(Tensor::from_fn(&[80, t], |i| {
            ((i * 31) % 17) as f64 / 8.0 - 1.0
        }))
        .unwrap()
    };
    let a = model.embed(&f(50)).unwrap();
    assert_eq!(a, model.embed(&f(50)).unwrap());
    assert_eq!(a.dim(), model.config().embedding_dim);
    assert_eq!(model.embed(&f(123)).unwrap().dim(), a.dim());
    let again = MgffTdnn::new(ModelConfig::desk_scale(), 3).unwrap();
    assert_eq!(a, again.embed(&f(50)).unwrap());
}

#[test]
fn three_second_embedding_within_budget() {
    let model = MgffTdnn::new(ModelConfig::full(), 0).unwrap();
    let f = FeatureMatrix::new(Tensor::from_fn(&[80, 298], |i| ((i * 37) % 23) as f64 / 5.0 - 2.0)).unwrap();
    model.embed(&f).unwrap();
    let start = std::time::Instant::now();
    model.embed(&f).unwrap();
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 2.0, "298-frame embedding took {secs:.2} s");
}
