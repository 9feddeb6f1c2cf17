//! Acceptance criteria, one line each. Run with
//! `cargo test -p convex-ito --test acceptance -- --nocapture`.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use convex_ito::config::{Command, ExperimentConfig};
use convex_ito::output::{csv_string, Row};
use convex_ito::{run, RayonExecutor, Registry};
use convex_ito_core::brownian::{
    batch_rng, compensator_path_estimate, fill_normals, MCEstimate, MonteCarlo, PathConfig,
};
use convex_ito_core::convex_model::{
    extend_from_ball, make_corpus_function, CorpusSpec, ProductBump, ScalarMeasure, DEFAULT_EXTENSION_GRID,
};
use convex_ito_core::derivative_estimators::{
    directional_second_derivative, dyadic_times, ito_residual, linear_map_trace, residual_curve, residual_rate_fit,
    trace_estimate, RateFit,
};
use convex_ito_core::heat_kernel::{expected_a_over_t, gaussian_smooth_measure, representation_check, SEMIGROUP_ORDER};
use convex_ito_core::verifier::{
    dyadic_recursion_check, recursion_constant, remainder_at_origin, sup_exp_constant, sup_exp_corpus,
    sup_exp_ratio, sup_expectation_bound, trace_revuz_compare, RevuzConfig, CALIBRATION_RADII, CALIBRATION_SEED,
};
use nalgebra::DMatrix;
use rand::Rng;

type Failure = Box<dyn std::error::Error>;

const SEED: u64 = 7;

struct Outcome {
    pass: bool,
    detail: String,
    rows: Vec<Row>,
}

#[derive(Default)]
struct Rows(Vec<Row>);

impl Rows {
    fn push(&mut self, param: impl Into<String>, value: f64, stderr: f64, n: usize) {
        self.0.push(Row {
            param: param.into(),
            value,
            stderr,
            n,
            seed: SEED,
            elapsed_ms: 0,
        });
    }
}

fn mc(n: usize, exec: &RayonExecutor) -> MonteCarlo<&RayonExecutor> {
    MonteCarlo::new(n, SEED).with_executor(exec)
}

fn random_psd(d: usize, k: usize) -> Vec<Vec<f64>> {
    let mut rng = batch_rng(SEED, 100 + k);
    let mut z = vec![0.0; d * d];
    fill_normals(&mut rng, &mut z);
    let b = DMatrix::from_row_slice(d, d, &z);
    let a = &b * b.transpose();
    (0..d).map(|i| (0..d).map(|j| a[(i, j)]).collect()).collect()
}

fn quadratic_exactness(exec: &RayonExecutor) -> Result<Outcome, Failure> {
    let mut rows = Rows::default();
    let mut worst = 0.0f64;
    for (k, d) in [1usize, 2, 3].into_iter().enumerate() {
        let mut rng = batch_rng(SEED, 200 + k);
        let mut bx = vec![0.0; 2 * d];
        fill_normals(&mut rng, &mut bx);
        let spec = CorpusSpec::Quadratic {
            a: random_psd(d, k),
            b: bx[..d].to_vec(),
            c: 0.3,
        };
        let f = make_corpus_function(&spec)?;
        for t in [1.0, 0.01] {
            let est = ito_residual(&f, &bx[d..], t, None, &mc(100_000, exec))?;
            worst = worst.max(est.mean.abs());
            rows.push(format!("d={d}:t={t}"), est.mean, est.stderr, est.n);
        }
    }
    Ok(Outcome {
        pass: worst <= 1e-12,
        detail: format!("max residual {worst:.2e} (tol 1e-12)"),
        rows: rows.0,
    })
}

fn trace_limit(exec: &RayonExecutor) -> Result<Outcome, Failure> {
    let f = make_corpus_function(&CorpusSpec::Power4)?;
    let mut rows = Rows::default();
    let mut pass = true;
    let mut detail = Vec::new();
    for (t, target) in [(0.01, 6.03), (0.001, 6.003)] {
        let est = trace_estimate(&f, &[1.0], t, &mc(1_000_000, exec))?;
        pass &= est.within(target, 3.0, 0.0);
        detail.push(format!("t={t}: {:.4}±{:.4} vs {target}", est.mean, est.stderr));
        rows.push(format!("t={t}"), est.mean, est.stderr, est.n);
    }
    Ok(Outcome {
        pass,
        detail: detail.join(", "),
        rows: rows.0,
    })
}

fn abs_compensator(t: f64, exec: &RayonExecutor) -> Result<MCEstimate, Failure> {
    let f = make_corpus_function(&CorpusSpec::AbsNorm { dim: 1 })?;
    let cfg = PathConfig {
        steps: 1000,
        t,
        n: 100_000,
        eps: 1e-3,
        seed: SEED,
    };
    Ok(compensator_path_estimate(&f, &[0.0], &cfg, exec)?)
}

fn compensator_closed_form(exec: &RayonExecutor) -> Result<Outcome, Failure> {
    let est = abs_compensator(1.0, exec)?;
    let target = (2.0 / PI).sqrt();
    let rel = (est.mean - target).abs() / target;
    let mut rows = Rows::default();
    rows.push("t=1", est.mean, est.stderr, est.n);
    Ok(Outcome {
        pass: rel <= 0.02,
        detail: format!("E[A_1] = {:.5}±{:.5} vs {target:.5} ({:.2}% off, tol 2%)", est.mean, est.stderr, 100.0 * rel),
        rows: rows.0,
    })
}

fn representation(_: &RayonExecutor) -> Result<Outcome, Failure> {
    let f = make_corpus_function(&CorpusSpec::half_norm_sq(1))?;
    let h = ProductBump::normalized(vec![0.3], vec![0.8], 4)?;
    let mut rows = Rows::default();
    let mut worst = 0.0f64;
    for t in [0.1, 1.0] {
        let rep = representation_check(&f, &h, t)?;
        worst = worst.max(rep.gap()).max((rep.lhs - t / 2.0).abs()).max((rep.rhs - t / 2.0).abs());
        rows.push(format!("lhs:t={t}"), rep.lhs, 0.0, 0);
        rows.push(format!("rhs:t={t}"), rep.rhs, 0.0, 0);
    }
    Ok(Outcome {
        pass: worst <= 1e-6,
        detail: format!("max |lhs − rhs|, |side − t/2| = {worst:.2e} (tol 1e-6)"),
        rows: rows.0,
    })
}

fn expected_compensator_rate(exec: &RayonExecutor) -> Result<Outcome, Failure> {
    let va = ScalarMeasure::dirac(vec![0.0], 1.0);
    let mut rows = Rows::default();
    let mut pass = true;
    let mut detail = Vec::new();
    for t in [0.1, 1.0] {
        let closed = (2.0 / (PI * t)).sqrt();
        let v = expected_a_over_t(&va, &[0.0], t)?;
        let est = abs_compensator(t, exec)?;
        let (mean, se) = (est.mean / t, est.stderr / t);
        let exact = (v - closed).abs() <= 1e-6;
        let mc_ok = (mean - v).abs() <= 3.0 * se + 0.02 * v;
        pass &= exact && mc_ok;
        detail.push(format!("t={t}: {v:.6} vs {closed:.6}, paths {mean:.4}±{se:.4}"));
        rows.push(format!("formula:t={t}"), v, 0.0, 0);
        rows.push(format!("paths:t={t}"), mean, se, est.n);
    }
    Ok(Outcome {
        pass,
        detail: detail.join("; "),
        rows: rows.0,
    })
}

fn gaussian_smoothing(_: &RayonExecutor) -> Result<Outcome, Failure> {
    let mu = ScalarMeasure::dirac(vec![0.0], 1.0).plus(ScalarMeasure::lebesgue(1, 1.0))?;
    let mut rows = Rows::default();
    let mut errs = Vec::new();
    for k in 4..=10 {
        let big_t = f64::powi(2.0, k);
        let v = gaussian_smooth_measure(&mu, big_t, &[0.5], SEMIGROUP_ORDER)?;
        errs.push((v - 1.0).abs());
        rows.push(format!("T=2^{k}"), v, 0.0, 0);
    }
    let monotone = errs.windows(2).all(|w| w[1] <= w[0]);
    let last = *errs.last().unwrap();
    Ok(Outcome {
        pass: monotone && last < 1e-8,
        detail: format!("errors non-increasing: {monotone}, error at T=2^10 {last:.2e} (tol 1e-8)"),
        rows: rows.0,
    })
}

fn revuz_trace(exec: &RayonExecutor) -> Result<Outcome, Failure> {
    let registry = Registry::builtin();
    let ids = [
        "quadratic_identity_d1",
        "power4_1d",
        "abs_1d_smoothed",
        "quadratic_aniso_d2",
        "abs_plus_max_affine_d2_smoothed",
    ];
    let mut rows = Rows::default();
    let mut pass = true;
    let mut worst = 0.0f64;
    for id in ids {
        let f = registry.get(id)?.build()?;
        let d = f.dim();
        let phi = ProductBump::new(vec![0.2; d], vec![1.0; d], 4)?;
        let rep = trace_revuz_compare(&*f, &phi, &RevuzConfig::default(), &mc(100_000, exec))?;
        pass &= rep.agrees(1e-5);
        worst = worst.max((rep.mc_side - rep.quad_side).abs() / (3.0 * rep.stderr + 1e-5));
        rows.push(format!("{id}:revuz"), rep.mc_side, rep.stderr, rep.n);
        rows.push(format!("{id}:pairing"), rep.quad_side, 0.0, 0);
    }
    Ok(Outcome {
        pass,
        detail: format!("5 members, worst |gap| / (3·stderr + 1e-5) = {worst:.3}"),
        rows: rows.0,
    })
}

fn chain_rule(exec: &RayonExecutor) -> Result<Outcome, Failure> {
    let f = make_corpus_function(&CorpusSpec::half_norm_sq(2))?;
    let angle = batch_rng(SEED, 300).random_range(0.0..2.0 * PI);
    let (s, c) = angle.sin_cos();
    let maps = [
        ("scale2", DMatrix::from_diagonal_element(2, 2, 2.0), 4.0),
        ("rotation", DMatrix::from_row_slice(2, 2, &[c, -s, s, c]), 1.0),
    ];
    let mut rows = Rows::default();
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, m, target) in maps {
        let est = linear_map_trace(&f, &[0.4, -0.7], &m, 0.1, &mc(1_000_000, exec))?;
        pass &= est.within(target, 3.0, 0.0);
        detail.push(format!("{name}: {:.4}±{:.4} vs {target}", est.mean, est.stderr));
        rows.push(name, est.mean, est.stderr, est.n);
    }
    Ok(Outcome {
        pass,
        detail: detail.join(", "),
        rows: rows.0,
    })
}

fn directional(exec: &RayonExecutor) -> Result<Outcome, Failure> {
    let f = Registry::builtin().get("abs_plus_quadratic_d2")?.build()?;
    let m = mc(1_000_000, exec);
    let along2 = directional_second_derivative(&*f, &[1.0, 0.0], &[0.0, 1.0], 0.01, true, &m)?;
    let along1 = directional_second_derivative(&*f, &[1.0, 0.0], &[1.0, 0.0], 0.01, true, &m)?;
    let mut rows = Rows::default();
    rows.push("e2", along2.mean, along2.stderr, along2.n);
    rows.push("e1", along1.mean, along1.stderr, along1.n);
    Ok(Outcome {
        pass: along2.within(1.0, 3.0, 0.0) && along1.within(0.0, 3.0, 1e-6),
        detail: format!(
            "e2: {:.4}±{:.4} vs 1, e1: {:.2e}±{:.1e} vs 0",
            along2.mean, along2.stderr, along1.mean, along1.stderr
        ),
        rows: rows.0,
    })
}

fn residual_decay(exec: &RayonExecutor) -> Result<Outcome, Failure> {
    let f = make_corpus_function(&CorpusSpec::Power4)?;
    let curve = residual_curve(&f, &[1.0], &dyadic_times(0.1, 10), None, &mc(1_000_000, exec))?;
    let mut rows = Rows::default();
    for p in &curve.points {
        rows.push(format!("t={}", p.t), p.value, p.stderr, 1_000_000);
    }
    let (pass, detail) = match residual_rate_fit(&curve)? {
        RateFit::Decay { slope, used, .. } => {
            rows.push("slope", slope, 0.0, used);
            ((0.35..=0.65).contains(&slope), format!("slope {slope:.4} over {used} points, range [0.35, 0.65]"))
        }
        RateFit::IdenticallyZero => (false, "residual identically zero".into()),
    };
    Ok(Outcome {
        pass,
        detail,
        rows: rows.0,
    })
}

fn cone_geometry(exec: &RayonExecutor) -> Result<Outcome, Failure> {
    let registry = Registry::builtin();
    let mut rows = Rows::default();
    let mut pass = true;
    let mut prev_a = f64::INFINITY;
    let mut worst_rel = 0.0f64;
    for k in 2..=7 {
        let mut cfg = ExperimentConfig::new(Command::ConeGridReport);
        cfg.d = 2;
        cfg.epsilon = f64::powi(0.5, k);
        cfg.samples = 100_000;
        cfg.seed = SEED;
        cfg.no_timing = true;
        let report = run(&cfg, &registry, exec)?;
        let value = |name: &str| report.rows.iter().find(|r| r.param == name).map(|r| r.value).unwrap();
        let (n, a, cond1) = (value("N"), value("a"), value("cond1"));
        let closed = 1.0 / (2.0 * PI / n).cos() - 1.0;
        let rel = (cond1 - closed).abs() / closed;
        worst_rel = worst_rel.max(rel);
        pass &= report.summary.pass && a < prev_a && rel <= 0.01;
        prev_a = a;
        for r in report.rows {
            rows.push(format!("k={k}:{}", r.param), r.value, r.stderr, r.n);
        }
    }
    Ok(Outcome {
        pass,
        detail: format!("invariants on 1e5 directions, a strictly decreasing, cond1 vs 1/cosθ − 1 worst {:.3}%", 100.0 * worst_rel),
        rows: rows.0,
    })
}

fn sup_by_expectation(exec: &RayonExecutor) -> Result<Outcome, Failure> {
    let mut rows = Rows::default();
    let mut failures = 0;
    let mut worst = [0.0f64; 2];
    for d in [1usize, 2] {
        let c = sup_exp_constant(d).unwrap();
        for (name, spec) in sup_exp_corpus(d, CALIBRATION_SEED)? {
            let h = make_corpus_function(&spec)?;
            let g = remainder_at_origin(&h);
            for r in CALIBRATION_RADII {
                let rep = sup_expectation_bound(&g, d, r, c, &mc(1_000_000, exec), &name)?;
                if !rep.report.pass {
                    failures += 1;
                }
                worst[d - 1] = worst[d - 1].max(sup_exp_ratio(&rep, d, r));
                rows.push(format!("d={d}:{name}:r={r}"), rep.report.margin, rep.g_stderr, 1_000_000);
            }
        }
    }
    let abs = make_corpus_function(&CorpusSpec::AbsNorm { dim: 1 })?;
    let g = remainder_at_origin(&abs);
    let rep = sup_expectation_bound(&g, 1, 1.0, sup_exp_constant(1).unwrap(), &mc(1_000_000, exec), "abs")?;
    let abs_ratio = sup_exp_ratio(&rep, 1, 1.0);
    let closed = (2.0 / PI).powf(-0.25);
    rows.push("abs_ratio", abs_ratio, 0.0, 1_000_000);
    let c1 = sup_exp_constant(1).unwrap();
    let abs_ok = (abs_ratio - closed).abs() <= 0.01 * closed && c1 >= 1.12 && abs_ratio <= c1;
    Ok(Outcome {
        pass: failures == 0 && abs_ok,
        detail: format!(
            "{failures} of 300 fail; worst ratio d=1 {:.4} (C={c1}), d=2 {:.4} (C={}); |x| ratio {abs_ratio:.4} vs {closed:.4}",
            worst[0],
            worst[1],
            sup_exp_constant(2).unwrap()
        ),
        rows: rows.0,
    })
}

fn quartic_recursion(exec: &RayonExecutor) -> Result<Outcome, Failure> {
    let f = make_corpus_function(&CorpusSpec::Power4)?;
    let q = DMatrix::from_element(1, 1, 12.0);
    let rep = dyadic_recursion_check(&f, &[1.0], &[4.0], &q, 0.5, 6, recursion_constant(1).unwrap(), &mc(1_000_000, exec))?;
    let mut rows = Rows::default();
    let mut worst = 0.0f64;
    let mut every_level = true;
    for l in &rep.levels {
        let analytic = 4.0 * l.r + l.r * l.r;
        worst = worst.max((l.scaled - analytic).abs());
        every_level &= l.bound.as_ref().is_some_and(|b| b.pass);
        rows.push(format!("r={}", l.r), l.scaled, 0.0, 0);
        rows.push(format!("G:r={}", l.r), l.g_mean, l.g_stderr, 1_000_000);
    }
    Ok(Outcome {
        pass: worst <= 1e-6 && every_level && rep.pass,
        detail: format!(
            "{} levels, max |s/r² − (4r + r²)| = {worst:.2e}, bound at every level: {every_level}",
            rep.levels.len()
        ),
        rows: rows.0,
    })
}

fn extension(_: &RayonExecutor) -> Result<Outcome, Failure> {
    let f = make_corpus_function(&CorpusSpec::Quadratic {
        a: vec![vec![2.0]],
        b: vec![0.0],
        c: 0.0,
    })?;
    let ext = extend_from_ball(f.into_shared(), DEFAULT_EXTENSION_GRID)?;
    let at2 = ext.try_eval(&[2.0])?;
    let mut rng = batch_rng(SEED, 400);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let (x, y) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let (fx, fy, fm) = (ext.try_eval(&[x])?, ext.try_eval(&[y])?, ext.try_eval(&[0.5 * (x + y)])?);
        worst = worst.max((fm - 0.5 * (fx + fy)) / (1.0 + fx.abs() + fy.abs()));
    }
    let mut rows = Rows::default();
    rows.push("z=2", at2, 0.0, 0);
    rows.push("midpoint_gap", worst, 0.0, 1000);
    Ok(Outcome {
        pass: (at2 - 3.0).abs() <= 1e-6 && worst <= 1e-12,
        detail: format!("F(2) = {at2:.9}, worst relative midpoint gap {worst:.2e} (tol 1e-12)"),
        rows: rows.0,
    })
}

type Criterion = fn(&RayonExecutor) -> Result<Outcome, Failure>;

const CRITERIA: [(&str, Criterion); 14] = [
    ("quadratic exactness", quadratic_exactness),
    ("trace limit for x⁴", trace_limit),
    ("compensator of |x|", compensator_closed_form),
    ("representation identity", representation),
    ("expected A_t / t for δ₀", expected_compensator_rate),
    ("Gaussian smoothing of δ₀ + dx", gaussian_smoothing),
    ("Revuz measure vs trace", revuz_trace),
    ("linear map chain rule", chain_rule),
    ("directional second derivative", directional),
    ("Itô residual decay", residual_decay),
    ("cone grid geometry", cone_geometry),
    ("sup by expectation", sup_by_expectation),
    ("quartic recursion", quartic_recursion),
    ("ball extension", extension),
];

fn evaluate(f: Criterion, exec: &RayonExecutor) -> (bool, String, Option<String>) {
    match f(exec) {
        Ok(o) => {
            let csv = csv_string(&o.rows).ok();
            (o.pass, o.detail, csv)
        }
        Err(e) => (false, format!("error: {e}"), None),
    }
}

fn main() -> ExitCode {
    let exec = RayonExecutor::global();
    let mut failed = 0;
    let mut first_csv = Vec::new();
    for (k, (name, f)) in CRITERIA.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail, csv) = evaluate(*f, &exec);
        failed += usize::from(!pass);
        println!(
            "{} {:>2} {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            k + 1,
            start.elapsed().as_secs_f64()
        );
        first_csv.push(csv);
    }

    let start = Instant::now();
    let mut differing = Vec::new();
    for (k, (_, f)) in CRITERIA.iter().enumerate() {
        let (_, _, csv) = evaluate(*f, &exec);
        if csv.is_none() || csv != first_csv[k] {
            differing.push(k + 1);
        }
    }
    let pass = differing.is_empty();
    failed += usize::from(!pass);
    println!(
        "{} 15 determinism: {} [{:.1}s]",
        if pass { "PASS" } else { "FAIL" },
        if pass {
            "criteria 1–14 reproduce bit-identical CSV data columns".to_string()
        } else {
            format!("criteria {differing:?} differ on rerun")
        },
        start.elapsed().as_secs_f64()
    );

    println!("{} of 15 criteria passed", 15 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
