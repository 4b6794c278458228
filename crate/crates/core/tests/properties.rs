//! Invariants of the layers, the loss and the detection metrics.

use std::borrow::Cow;

use mgff_core::kernels::{
    aam_softmax, batch_norm_train, conv, plp, statistics_pooling, AamConfig, ConvSpec,
};
use mgff_core::mtdnn::SeGate;
use mgff_core::scoring::{compute_eer, compute_min_dcf, cosine, DcfParams};
use mgff_core::train::{lr_schedule, TrainConfig};
use mgff_core::{Eval, ParamStore, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, n)
}

fn sequence() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1usize..=4, 1usize..=20).prop_flat_map(|(c, t)| (Just(c), Just(t), values(c * t)))
}

fn scores() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-1.0f64..1.0, 1..30),
        prop::collection::vec(-1.0f64..1.0, 1..30),
    )
}

proptest! {
    #[test]
    fn stats_pooling_ignores_frame_order((c, t, x) in sequence(), seed in any::<u64>()) {
        let mut order: Vec<usize> = (0..t).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);
        let shuffled: Vec<f64> = (0..c * t).map(|i| x[(i / t) * t + order[i % t]]).collect();
        let a = statistics_pooling(&Tensor::new(&[1, c, t], x).unwrap()).unwrap();
        let b = statistics_pooling(&Tensor::new(&[1, c, t], shuffled).unwrap()).unwrap();
        prop_assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn stats_pooling_std_is_positive((c, t, x) in sequence()) {
        let p = statistics_pooling(&Tensor::new(&[c, t], x).unwrap()).unwrap();
        prop_assert!(p.data()[c..].iter().all(|&s| s > 0.0));
    }

    #[test]
    fn plp_dominates_input((c, t, x) in sequence()) {
        let out = plp(&Tensor::new(&[c, t], x.clone()).unwrap(), 8, 4).unwrap().output;
        for (o, v) in out.data().iter().zip(&x) {
            prop_assert!(o >= v);
        }
        // Every output is one of the row's values.
        for (i, o) in out.data().iter().enumerate() {
            let row = &x[(i / t) * t..(i / t + 1) * t];
            prop_assert!(row.contains(o));
        }
    }

    #[test]
    fn se_gates_lie_strictly_inside_unit_interval((c, t, x) in sequence(), seed in any::<u64>()) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let se = SeGate::new(&mut store, &mut rng, "se", c, 2);
        let mut o = Eval::new(&store);
        let x = Tensor::new(&[1, c, t], x).unwrap();
        let g = se.gate(&mut o, &Cow::Owned(x.clone())).unwrap();
        prop_assert_eq!(g.shape(), &[1, c]);
        prop_assert!(g.data().iter().all(|&v| v > 0.0 && v < 1.0));
        let y = se.forward(&mut o, &Cow::Owned(x.clone())).unwrap();
        for (yv, xv) in y.data().iter().zip(x.data()) {
            prop_assert!(yv.abs() <= xv.abs());
        }
    }

    #[test]
    fn conv_is_linear_in_input(a in values(2 * 7), b in values(2 * 7), w in values(3 * 2 * 3), alpha in -2.0f64..2.0) {
        let spec = ConvSpec::same_length(3, 2).unwrap();
        let w = Tensor::new(&[3, 2, 3], w).unwrap();
        let ta = Tensor::new(&[1, 2, 7], a.clone()).unwrap();
        let tb = Tensor::new(&[1, 2, 7], b.clone()).unwrap();
        let mix = Tensor::new(&[1, 2, 7], a.iter().zip(&b).map(|(x, y)| alpha * x + y).collect()).unwrap();
        let ya = conv(&ta, &w, None, &spec).unwrap();
        let yb = conv(&tb, &w, None, &spec).unwrap();
        let ym = conv(&mix, &w, None, &spec).unwrap();
        let want = Tensor::new(ya.shape(), ya.data().iter().zip(yb.data()).map(|(x, y)| alpha * x + y).collect()).unwrap();
        prop_assert!(ym.max_abs_diff(&want) < 1e-9);
    }

    #[test]
    fn train_batch_norm_standardises(n in 2usize..5, t in 2usize..6, x in values(5 * 3 * 6)) {
        let x = Tensor::new(&[n, 3, t], x[..n * 3 * t].to_vec()).unwrap();
        let (y, stats) = batch_norm_train(&x, &Tensor::full(&[3], 1.0), &Tensor::zeros(&[3]), 1e-5).unwrap();
        for c in 0..3 {
            let vals: Vec<f64> = (0..n).flat_map(|b| (0..t).map(move |i| (b, i))).map(|(b, i)| y.at(&[b, c, i])).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            prop_assert!(mean.abs() < 1e-9);
            let expect = stats.var[c] / (stats.var[c] + 1e-5);
            prop_assert!((var - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn margin_never_lowers_the_loss(e in values(4 * 3), w in values(5 * 3), labels in prop::collection::vec(0usize..5, 4)) {
        let e = Tensor::new(&[4, 3], e.iter().map(|v| v + 0.01).collect()).unwrap();
        let w = Tensor::new(&[5, 3], w.iter().map(|v| v + 0.01).collect()).unwrap();
        let margin = aam_softmax(&e, &w, &labels, &AamConfig::default()).unwrap().loss;
        let plain = aam_softmax(&e, &w, &labels, &AamConfig { margin: 0.0, ..AamConfig::default() }).unwrap().loss;
        prop_assert!(margin >= plain - 1e-12);
        prop_assert!(plain >= 0.0);
    }

    #[test]
    fn aam_ignores_embedding_and_weight_norms(
        e in values(3 * 4), w in values(4 * 4), labels in prop::collection::vec(0usize..4, 3),
        se in 0.1f64..10.0, sw in 0.1f64..10.0,
    ) {
        let e = Tensor::new(&[3, 4], e.iter().map(|v| v + 0.01).collect()).unwrap();
        let w = Tensor::new(&[4, 4], w.iter().map(|v| v + 0.01).collect()).unwrap();
        let cfg = AamConfig::default();
        let a = aam_softmax(&e, &w, &labels, &cfg).unwrap().loss;
        let b = aam_softmax(&e.map(|v| v * se), &w.map(|v| v * sw), &labels, &cfg).unwrap().loss;
        prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn cosine_is_bounded_and_symmetric(a in values(6), b in values(6)) {
        prop_assume!(a.iter().any(|v| *v != 0.0) && b.iter().any(|v| *v != 0.0));
        let ab = cosine(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, cosine(&b, &a).unwrap());
        let scaled: Vec<f64> = a.iter().map(|v| v * 3.5).collect();
        prop_assert!((cosine(&scaled, &b).unwrap() - ab).abs() < 1e-12);
    }

    #[test]
    fn metrics_invariant_under_monotone_maps((tgt, non) in scores()) {
        let f = |v: &f64| (3.0 * v).exp() - 7.0;
        let (mt, mn): (Vec<f64>, Vec<f64>) = (tgt.iter().map(f).collect(), non.iter().map(f).collect());
        let (eer, _) = compute_eer(&tgt, &non).unwrap();
        prop_assert!((eer - compute_eer(&mt, &mn).unwrap().0).abs() < 1e-12);
        let p = DcfParams::default();
        prop_assert!((compute_min_dcf(&tgt, &non, p).unwrap() - compute_min_dcf(&mt, &mn, p).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn metrics_invariant_under_duplication((tgt, non) in scores()) {
        let dup = |v: &[f64]| v.iter().chain(v).copied().collect::<Vec<f64>>();
        let (eer, _) = compute_eer(&tgt, &non).unwrap();
        prop_assert!((eer - compute_eer(&dup(&tgt), &dup(&non)).unwrap().0).abs() < 1e-12);
        let p = DcfParams::default();
        let d = compute_min_dcf(&tgt, &non, p).unwrap();
        prop_assert!((d - compute_min_dcf(&dup(&tgt), &dup(&non), p).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn metrics_are_bounded((tgt, non) in scores()) {
        let (eer, _) = compute_eer(&tgt, &non).unwrap();
        prop_assert!((0.0..=1.0).contains(&eer));
        let d = compute_min_dcf(&tgt, &non, DcfParams::default()).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn separable_scores_are_perfect((tgt, non) in scores()) {
        let tgt: Vec<f64> = tgt.iter().map(|v| v + 3.0).collect();
        prop_assert_eq!(compute_eer(&tgt, &non).unwrap().0, 0.0);
        prop_assert_eq!(compute_min_dcf(&tgt, &non, DcfParams::default()).unwrap(), 0.0);
    }

    #[test]
    fn lr_stays_within_bounds(warmup in 0usize..50, extra in 1usize..400) {
        let cfg = TrainConfig { warmup_steps: warmup, total_steps: warmup + extra, ..TrainConfig::default() };
        let mut prev = f64::INFINITY;
        for step in 0..=cfg.total_steps {
            let lr = lr_schedule(step, &cfg).unwrap();
            prop_assert!((0.0..=cfg.lr_init + 1e-15).contains(&lr));
            if step > warmup {
                prop_assert!(lr <= prev + 1e-15 && lr >= cfg.lr_min - 1e-15);
            }
            prev = lr;
        }
        prop_assert!((lr_schedule(cfg.total_steps, &cfg).unwrap() - cfg.lr_min).abs() < 1e-12);
    }
}

#[test]
fn constant_frames_pool_to_value_and_floor() {
    let x = Tensor::full(&[1, 3, 9], 2.5);
    let p = statistics_pooling(&x).unwrap();
    assert_eq!(&p.data()[..3], &[2.5; 3]);
    for &s in &p.data()[3..] {
        assert!((s - 1e-5).abs() < 1e-12);
    }
}

#[test]
fn all_tied_scores_give_half_eer_and_unit_dcf() {
    let (eer, _) = compute_eer(&[0.3; 4], &[0.3; 6]).unwrap();
    assert!((eer - 0.5).abs() < 1e-12);
    assert_eq!(
        compute_min_dcf(&[0.3; 4], &[0.3; 6], DcfParams::default()).unwrap(),
        1.0
    );
}
