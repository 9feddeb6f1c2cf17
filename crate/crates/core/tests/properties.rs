use std::sync::Arc;

use convex_ito_core::brownian::{Executor, MonteCarlo};
use convex_ito_core::cone_grid::build_grid;
use convex_ito_core::convex_model::{
    extend_from_ball, make_corpus_function, mollify, ConvexFunction, CorpusSpec, ProductBump, TestFunction,
};
use convex_ito_core::derivative_estimators::trace_estimate;
use convex_ito_core::heat_kernel::semigroup_apply;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn max_affine() -> impl Strategy<Value = CorpusSpec> {
    (1usize..=3, 1usize..=6).prop_flat_map(|(d, k)| {
        (
            prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d), k),
            prop::collection::vec(-1.0f64..1.0, k),
        )
            .prop_map(|(slopes, offsets)| CorpusSpec::MaxAffine { slopes, offsets })
    })
}

fn quadratic() -> impl Strategy<Value = CorpusSpec> {
    (1usize..=3).prop_flat_map(|d| {
        (
            prop::collection::vec(-2.0f64..2.0, d * d),
            prop::collection::vec(-1.0f64..1.0, d),
            -1.0f64..1.0,
        )
            .prop_map(move |(m, b, c)| {
                let m = DMatrix::from_vec(d, d, m);
                CorpusSpec::quadratic(&(&m * m.transpose()), &b, c)
            })
    })
}

fn corpus() -> impl Strategy<Value = CorpusSpec> {
    prop_oneof![
        max_affine(),
        quadratic(),
        (1usize..=3).prop_map(|dim| CorpusSpec::AbsNorm { dim }),
        Just(CorpusSpec::Power4),
    ]
}

fn point(d: usize, seed: &[f64]) -> Vec<f64> {
    seed.iter().cycle().take(d).copied().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn subgradient_inequality(spec in corpus(), xs in prop::collection::vec(-2.0f64..2.0, 3), ys in prop::collection::vec(-2.0f64..2.0, 3)) {
        let f = make_corpus_function(&spec).unwrap();
        let (x, y) = (point(f.dim(), &xs), point(f.dim(), &ys));
        let p = f.subgradient(&x);
        let lin: f64 = f.eval(&x) + p.iter().zip(&y).zip(&x).map(|((pi, yi), xi)| pi * (yi - xi)).sum::<f64>();
        prop_assert!(f.eval(&y) >= lin - 1e-9 * (1.0 + lin.abs()));
    }

    #[test]
    fn midpoint_convexity_of_mollification(spec in max_affine(), eps in 0.05f64..1.0, xs in prop::collection::vec(-2.0f64..2.0, 3), ys in prop::collection::vec(-2.0f64..2.0, 3)) {
        let f = make_corpus_function(&spec).unwrap().into_shared();
        let m = mollify(f.clone(), eps, 32).unwrap();
        let (x, y) = (point(m.dim(), &xs), point(m.dim(), &ys));
        let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
        prop_assert!(m.eval(&mid) <= 0.5 * (m.eval(&x) + m.eval(&y)) + 1e-10);
        // smoothing a convex function only raises it
        prop_assert!(m.eval(&x) >= f.eval(&x) - 1e-10);
    }

    #[test]
    fn extension_is_midpoint_convex(spec in quadratic(), xs in prop::collection::vec(-2.5f64..2.5, 3), ys in prop::collection::vec(-2.5f64..2.5, 3)) {
        let f = make_corpus_function(&spec).unwrap().into_shared();
        let e = extend_from_ball(f, 200).unwrap();
        let d = e.dim();
        let (x, y) = (point(d, &xs), point(d, &ys));
        let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
        let (fx, fy, fm) = (e.try_eval(&x).unwrap(), e.try_eval(&y).unwrap(), e.try_eval(&mid).unwrap());
        prop_assert!(fm <= 0.5 * (fx + fy) + 1e-8 * (1.0 + fx.abs() + fy.abs()));
    }

    #[test]
    fn heat_semigroup_composes(s in 0.01f64..0.5, u in 0.25f64..0.5, x in -1.5f64..1.5) {
        let bump = ProductBump::normalized(vec![0.1], vec![0.8], 4).unwrap();
        let composed = semigroup_apply(|y: &[f64]| bump.heat(u, y).unwrap(), s, &[x], 48).unwrap();
        let direct = bump.heat(s + u, &[x]).unwrap();
        prop_assert!((composed - direct).abs() < 1e-8, "{composed} vs {direct}");
    }

    #[test]
    fn cone_location_is_scale_invariant(angle in 0.0f64..std::f64::consts::TAU, scale in 1e-3f64..1e3, k in 2u32..7) {
        let g = build_grid(2, 0.5f64.powi(k as i32)).unwrap();
        let y = [angle.cos(), angle.sin()];
        let i = g.locate_cone(&y).unwrap();
        prop_assert_eq!(i, g.locate_cone(&[scale * y[0], scale * y[1]]).unwrap());
        let w = g.barycentric_weights(i, &y).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

/// Runs batches in reverse order to show results do not depend on scheduling.
struct Reversed;

impl Executor for Reversed {
    fn map<T: Send, F: Fn(usize) -> T + Sync + Send>(&self, count: usize, f: F) -> Vec<T> {
        let mut out: Vec<T> = (0..count).rev().map(&f).collect();
        out.reverse();
        out
    }
}

#[test]
fn estimates_do_not_depend_on_the_executor() {
    let f = make_corpus_function(&CorpusSpec::Power4).unwrap();
    let seq = trace_estimate(&f, &[1.0], 0.01, &MonteCarlo::new(50_000, 7)).unwrap();
    let rev = trace_estimate(&f, &[1.0], 0.01, &MonteCarlo::new(50_000, 7).with_executor(Reversed)).unwrap();
    assert_eq!(seq.mean.to_bits(), rev.mean.to_bits());
    assert_eq!(seq.stderr.to_bits(), rev.stderr.to_bits());
}

#[test]
fn shared_function_is_usable_across_threads() {
    let f: Arc<dyn ConvexFunction> = make_corpus_function(&CorpusSpec::AbsNorm { dim: 2 }).unwrap().into_shared();
    let handles: Vec<_> = (0..4)
        .map(|k| {
            let f = f.clone();
            std::thread::spawn(move || f.eval(&[k as f64, 1.0]))
        })
        .collect();
    for (k, h) in handles.into_iter().enumerate() {
        assert_eq!(h.join().unwrap(), (k as f64).hypot(1.0));
    }
}
