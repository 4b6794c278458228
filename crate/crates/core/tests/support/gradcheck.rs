//! Central finite-difference checking of reverse-mode gradients.
//!
//! Relative error is `|analytic - numeric| / max(|analytic|, |numeric|, 1e-3)`;
//! the floor turns the check into an absolute 1e-7 bound for gradients that
//! are zero up to rounding noise.

#![allow(dead_code)]

use mgff_core::autograd::{Mode, Ops, Tape, Var};
use mgff_core::{MgffTdnn, ModelConfig, ParamId, ParamStore, Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Default)]
pub struct GradReport {
    pub worst: f64,
    pub at: String,
    pub checked: usize,
}

pub const STEP: f64 = 1e-5;
/// The end-to-end network has tens of thousands of ReLU and max inputs, so
/// a perturbation occasionally crosses a kink. Model checks use a smaller
/// step and re-measure any failing element at a tenth of it: a crossing
/// shrinks with the step, a wrong analytic gradient does not.
pub const MODEL_STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-4;

pub fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// `sum(out * R)` for a fixed random `R`, so that every output element
/// carries a distinct weight.
pub fn weighted_sum(t: &mut Tape<'_>, out: Var) -> Result<Var> {
    let shape = t.value(&out).shape().to_vec();
    let r = t.input(random(&shape, 12345));
    let prod = t.mul(&out, &r)?;
    Ok(t.sum(&prod))
}

pub type Graph = dyn for<'p> Fn(&mut Tape<'p>) -> Result<Var>;

pub fn loss_at(store: &ParamStore, mode: Mode, graph: &Graph) -> f64 {
    let mut tape = Tape::new(store, mode);
    let l = graph(&mut tape).unwrap();
    tape.value(&l).data()[0]
}

pub fn central_difference(
    store: &mut ParamStore,
    mode: Mode,
    graph: &Graph,
    id: ParamId,
    i: usize,
    step: f64,
) -> f64 {
    let orig = store.get(id).data()[i];
    store.get_mut(id).data_mut()[i] = orig + step;
    let up = loss_at(store, mode, graph);
    store.get_mut(id).data_mut()[i] = orig - step;
    let down = loss_at(store, mode, graph);
    store.get_mut(id).data_mut()[i] = orig;
    (up - down) / (2.0 * step)
}

pub fn relative_error(a: f64, numeric: f64) -> f64 {
    (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3)
}

/// Largest relative error over every element of every trainable tensor,
/// with the element count checked.
pub fn max_relative_error(
    store: &mut ParamStore,
    mode: Mode,
    graph: &Graph,
    step: f64,
    retry_kinks: bool,
) -> GradReport {
    let analytic = {
        let mut tape = Tape::new(store, mode);
        let l = graph(&mut tape).unwrap();
        tape.backward(l).unwrap();
        tape.param_grads()
    };
    let ids: Vec<ParamId> = store
        .ids()
        .filter(|&id| store.kind(id).is_trainable())
        .collect();
    let mut report = GradReport::default();
    for id in ids {
        let grad = analytic[id.index()]
            .clone()
            .unwrap_or_else(|| panic!("no gradient reached {}", store.name(id)));
        for i in 0..store.get(id).numel() {
            let a = grad.data()[i];
            let mut numeric = central_difference(store, mode, graph, id, i, step);
            let mut rel = relative_error(a, numeric);
            if rel >= TOLERANCE && retry_kinks {
                numeric = central_difference(store, mode, graph, id, i, step / 10.0);
                rel = relative_error(a, numeric);
            }
            report.checked += 1;
            if rel > report.worst {
                report.worst = rel;
                report.at = format!(
                    "{}[{i}]: analytic {a:e}, numeric {numeric:e}",
                    store.name(id)
                );
            }
        }
    }
    report
}

/// End-to-end micro model in training mode: every trainable tensor,
/// classifier included.
pub fn model_gradient_error(config: ModelConfig, seed: u64) -> GradReport {
    let mut model = MgffTdnn::new(config, seed).unwrap();
    model.attach_classifier(3).unwrap();
    let x = random(&[3, 80, 9], seed + 100);
    let labels = [0, 1, 2];
    // The closure owns a copy of the layer structure; tensors are read from
    // whichever store the tape was built on.
    let net = model.clone();
    let graph = move |t: &mut Tape<'_>| {
        let xv = t.input(x.clone());
        net.loss(t, xv, &labels)
    };
    max_relative_error(model.store_mut(), Mode::Train, &graph, MODEL_STEP, true)
}
