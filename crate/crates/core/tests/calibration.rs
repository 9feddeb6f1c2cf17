//! Re-derives the frozen sup-by-expectation constants. Run with
//! `cargo test -p convex-ito-core --test calibration -- --ignored --nocapture`.

use convex_ito_core::brownian::MonteCarlo;
use convex_ito_core::convex_model::make_corpus_function;
use convex_ito_core::verifier::{
    remainder_at_origin, sup_exp_corpus, sup_exp_ratio, sup_expectation_bound, CALIBRATION_RADII,
    CALIBRATION_SEED,
};

#[test]
#[ignore]
fn calibrate_sup_exp_constants() {
    for d in [1, 2] {
        let mut worst = (0.0f64, String::new(), 0.0);
        for (name, spec) in sup_exp_corpus(d, CALIBRATION_SEED).unwrap() {
            let h = make_corpus_function(&spec).unwrap();
            let g = remainder_at_origin(&h);
            for r in CALIBRATION_RADII {
                let mc = MonteCarlo::new(1_000_000, CALIBRATION_SEED);
                let rep = sup_expectation_bound(&g, d, r, 1.0, &mc, &name).unwrap();
                let ratio = sup_exp_ratio(&rep, d, r);
                if ratio > worst.0 {
                    worst = (ratio, name.clone(), r);
                }
            }
        }
        println!("d={d} max ratio {:.6} ({} at r={}) -> C = {:.6}", worst.0, worst.1, worst.2, 1.05 * worst.0);
    }
}
