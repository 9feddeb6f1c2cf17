//! Dispatches an [`ExperimentConfig`] to the estimators and checkers.

use std::f64::consts::PI;
use std::fmt::Display;
use std::sync::Arc;
use std::time::Instant;

use convex_ito_core::brownian::{batch_rng, fill_normals, Executor, MonteCarlo};
use convex_ito_core::cone_grid::{build_grid, distortion_bound};
use convex_ito_core::convex_model::{
    extend_from_ball, measure_trace_pairing, mollify, second_derivative_pairing, ConvexFunction, ProductBump,
    SharedFunction, DEFAULT_EXTENSION_GRID, DEFAULT_HERMITE_ORDER, DEFAULT_PAIRING_ORDER,
};
use convex_ito_core::derivative_estimators::{
    directional_second_derivative, dyadic_times, hessian_by_polarization, linear_map_trace, residual_curve,
    residual_rate_fit, RateFit,
};
use convex_ito_core::heat_kernel::representation_check;
use convex_ito_core::verifier::{
    dyadic_recursion_check, recursion_constant, remainder_at_origin, sup_exp_constant, sup_expectation_bound,
    trace_revuz_compare, RevuzConfig, CALIBRATION_RADII,
};
use convex_ito_core::Error as CoreError;
use nalgebra::DMatrix;
use rand::Rng;

use crate::config::{Command, ExperimentConfig};
use crate::error::CliError;
use crate::executor::RayonExecutor;
use crate::output::{Check, Fit, Report, Row, Summary};
use crate::registry::{Entry, Registry};

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    registry: &'a Registry,
    exec: &'a RayonExecutor,
    rows: Vec<Row>,
    checks: Vec<Check>,
    fit: Option<Fit>,
    warnings: Vec<String>,
}

/// Runs one experiment. Errors from bad inputs map to exit code 2, oracle
/// violations during sampling to exit code 3 (see [`CliError::exit_code`]).
pub fn run(cfg: &ExperimentConfig, registry: &Registry, exec: &RayonExecutor) -> Result<Report, CliError> {
    cfg.validate()?;
    let mut ctx = Ctx {
        cfg,
        registry,
        exec,
        rows: Vec::new(),
        checks: Vec::new(),
        fit: None,
        warnings: Vec::new(),
    };
    match cfg.command {
        Command::Trace => ctx.trace()?,
        Command::Direction => ctx.direction()?,
        Command::Hessian => ctx.hessian()?,
        Command::ResidualCurve => ctx.residual_curve()?,
        Command::VerifyRepresentation => ctx.representation()?,
        Command::VerifyTraceRevuz => ctx.trace_revuz()?,
        Command::VerifySupExp => ctx.sup_exp()?,
        Command::VerifyRecursion => ctx.recursion()?,
        Command::ConeGridReport => ctx.cone_grid()?,
        Command::CorpusTest => ctx.corpus_test()?,
    }
    let pass = ctx.checks.iter().all(|c| c.pass);
    Ok(Report {
        rows: ctx.rows,
        summary: Summary {
            command: cfg.command.name().into(),
            function: cfg.function.clone(),
            n: cfg.n,
            seed: cfg.seed,
            pass,
            checks: ctx.checks,
            fit: ctx.fit,
            warnings: ctx.warnings,
        },
    })
}

impl<'a> Ctx<'a> {
    fn mc(&self) -> MonteCarlo<&'a RayonExecutor> {
        MonteCarlo::new(self.cfg.n, self.cfg.seed)
            .antithetic(self.cfg.antithetic)
            .with_executor(self.exec)
    }

    fn entry(&self) -> Result<&Entry, CliError> {
        let id = self.cfg.function.as_deref().unwrap_or_default();
        self.registry.get(id)
    }

    fn function(&self) -> Result<(&Entry, SharedFunction), CliError> {
        let e = self.entry()?;
        Ok((e, e.build()?))
    }

    /// The function with the configured extra smoothing, for smooth-only checks.
    fn smooth_function(&self) -> Result<SharedFunction, CliError> {
        let (_, f) = self.function()?;
        match self.cfg.smoothing {
            Some(eps) => Ok(Arc::new(mollify(f, eps, DEFAULT_HERMITE_ORDER)?)),
            None => Ok(f),
        }
    }

    fn point(&self, d: usize) -> Result<Vec<f64>, CliError> {
        let x = self.cfg.x.clone().unwrap_or_else(|| vec![0.0; d]);
        if x.len() != d {
            return Err(CliError::Config(format!("x has {} coordinates, function has d = {d}", x.len())));
        }
        Ok(x)
    }

    fn times(&self, default: &[f64]) -> Vec<f64> {
        if self.cfg.t.is_empty() {
            default.to_vec()
        } else {
            self.cfg.t.clone()
        }
    }

    fn row(&mut self, param: impl Display, value: f64, stderr: f64, started: Instant) {
        let elapsed_ms = if self.cfg.no_timing {
            0
        } else {
            started.elapsed().as_millis() as u64
        };
        self.rows.push(Row {
            param: param.to_string(),
            value,
            stderr,
            n: self.cfg.n,
            seed: self.cfg.seed,
            elapsed_ms,
        });
    }

    fn bump(&self, d: usize) -> Result<ProductBump, CliError> {
        let b = &self.cfg.bump;
        let center = b.center.clone().unwrap_or_else(|| vec![0.0; d]);
        if center.len() != d {
            return Err(CliError::Config(format!("bump center needs {d} coordinates")));
        }
        Ok(ProductBump::normalized(center, vec![b.half_width; d], b.power)?)
    }

    fn trace(&mut self) -> Result<(), CliError> {
        let (entry, f) = self.function()?;
        let d = f.dim();
        let x = self.point(d)?;
        let s = match &self.cfg.map {
            Some(m) => {
                if m.len() != d {
                    return Err(CliError::Config(format!("map must be {d}x{d}")));
                }
                DMatrix::from_fn(d, d, |i, j| m[i][j])
            }
            None => DMatrix::identity(d, d),
        };
        let target = self
            .cfg
            .expect
            .or_else(|| entry.quadratic_matrix().map(|a| 0.5 * (s.transpose() * a * &s).trace()));
        let mc = self.mc();
        for t in self.times(&[0.01]) {
            let start = Instant::now();
            let est = linear_map_trace(&*f, &x, &s, t, &mc)?;
            self.row(t, est.mean, est.stderr, start);
            if let Some(target) = target {
                self.checks
                    .push(Check::near(format!("t={t}"), est.mean, target, 3.0 * est.stderr + 1e-12));
            }
        }
        Ok(())
    }

    fn direction(&mut self) -> Result<(), CliError> {
        let (entry, f) = self.function()?;
        let x = self.point(f.dim())?;
        let v = self
            .cfg
            .direction
            .clone()
            .ok_or_else(|| CliError::Config("direction needs --v".into()))?;
        let target = self.cfg.expect.or_else(|| {
            entry.quadratic_matrix().map(|a| {
                let v = nalgebra::DVector::from_column_slice(&v);
                (v.transpose() * a * &v)[(0, 0)]
            })
        });
        let mc = self.mc();
        for t in self.times(&[0.01]) {
            let start = Instant::now();
            let est = directional_second_derivative(&*f, &x, &v, t, self.cfg.control_variate, &mc)?;
            self.row(t, est.mean, est.stderr, start);
            if let Some(target) = target {
                self.checks
                    .push(Check::near(format!("t={t}"), est.mean, target, 3.0 * est.stderr + 1e-12));
            }
        }
        Ok(())
    }

    fn hessian(&mut self) -> Result<(), CliError> {
        let (entry, f) = self.function()?;
        let d = f.dim();
        let x = self.point(d)?;
        let exact = entry.quadratic_matrix();
        let mc = self.mc();
        for t in self.times(&[0.01]) {
            let start = Instant::now();
            let h = hessian_by_polarization(&*f, &x, t, &mc)?;
            for i in 0..d {
                for j in i..d {
                    let (v, se) = (h.matrix[(i, j)], h.stderr[(i, j)]);
                    self.row(format!("{t}:q{i}{j}"), v, se, start);
                    if let Some(a) = &exact {
                        self.checks
                            .push(Check::near(format!("t={t}:q{i}{j}"), v, a[(i, j)], 3.0 * se + 1e-9));
                    }
                }
            }
        }
        Ok(())
    }

    fn residual_curve(&mut self) -> Result<(), CliError> {
        let (_, f) = self.function()?;
        let x = self.point(f.dim())?;
        let mut times = self.times(&dyadic_times(0.1, 10));
        times.sort_by(|a, b| b.total_cmp(a));
        times.dedup();
        let start = Instant::now();
        let curve = residual_curve(&*f, &x, &times, None, &self.mc())?;
        for p in &curve.points {
            self.row(p.t, p.value, p.stderr, start);
        }
        match residual_rate_fit(&curve) {
            Ok(RateFit::Decay { slope, intercept, used }) => {
                self.fit = Some(Fit {
                    kind: "decay".into(),
                    slope: Some(slope),
                    intercept: Some(intercept),
                    points: used,
                });
                if let Some([lo, hi]) = self.cfg.slope_range {
                    self.checks.push(Check {
                        name: "slope".into(),
                        pass: (lo..=hi).contains(&slope),
                        value: slope,
                        target: Some(0.5 * (lo + hi)),
                        tolerance: Some(0.5 * (hi - lo)),
                    });
                }
            }
            Ok(RateFit::IdenticallyZero) => {
                self.fit = Some(Fit {
                    kind: "identically_zero".into(),
                    slope: None,
                    intercept: None,
                    points: 0,
                });
            }
            Err(e @ CoreError::InsufficientPoints { .. }) => {
                self.warnings.push(e.to_string());
                self.checks.push(Check::new("fit", false, f64::NAN));
            }
            Err(e) => return Err(e.into()),
        }
        Ok(())
    }

    fn representation(&mut self) -> Result<(), CliError> {
        let f = self.smooth_function()?;
        let h = self.bump(f.dim())?;
        for t in self.times(&[0.1, 1.0]) {
            let start = Instant::now();
            let rep = representation_check(&*f, &h, t)?;
            self.row(t, rep.lhs - rep.rhs, 0.0, start);
            self.checks.push(Check::near(format!("t={t}"), rep.lhs, rep.rhs, 1e-6));
        }
        Ok(())
    }

    fn trace_revuz(&mut self) -> Result<(), CliError> {
        let f = self.smooth_function()?;
        let phi = self.bump(f.dim())?;
        let cfg = RevuzConfig {
            steps: self.cfg.steps,
            covering_box: None,
        };
        let start = Instant::now();
        let rep = trace_revuz_compare(&*f, &phi, &cfg, &self.mc())?;
        self.row("revuz", rep.mc_side, rep.stderr, start);
        self.row("pairing", rep.quad_side, 0.0, start);
        self.checks.push(Check::near(
            "revuz_vs_pairing",
            rep.mc_side,
            rep.quad_side,
            3.0 * rep.stderr + 1e-5,
        ));
        Ok(())
    }

    fn sup_exp(&mut self) -> Result<(), CliError> {
        let (_, h) = self.function()?;
        let d = h.dim();
        let c = match self.cfg.c {
            Some(c) => c,
            None => sup_exp_constant(d)
                .ok_or_else(|| CliError::Config(format!("no calibrated constant for d = {d}; pass --c")))?,
        };
        let g = remainder_at_origin(&*h);
        let radii = if self.cfg.r.is_empty() {
            CALIBRATION_RADII.to_vec()
        } else {
            self.cfg.r.clone()
        };
        let name = self.cfg.function.clone().unwrap_or_default();
        let mc = self.mc();
        for r in radii {
            let start = Instant::now();
            let rep = sup_expectation_bound(&g, d, r, c, &mc, &name)?;
            self.row(r, rep.report.margin, rep.g_stderr, start);
            self.checks.push(Check {
                name: format!("r={r}"),
                pass: rep.report.pass,
                value: rep.report.lhs,
                target: Some(rep.report.rhs),
                tolerance: None,
            });
        }
        Ok(())
    }

    fn recursion(&mut self) -> Result<(), CliError> {
        let (_, f) = self.function()?;
        let d = f.dim();
        let x = self.point(d)?;
        let p = f.subgradient(&x);
        let q = f.hessian_density(&x).ok_or(CoreError::MissingHessian)?;
        let c = match self.cfg.c {
            Some(c) => c,
            None => recursion_constant(d)
                .ok_or_else(|| CliError::Config(format!("no calibrated constant for d = {d}; pass --c")))?,
        };
        let start = Instant::now();
        let rep = dyadic_recursion_check(&*f, &x, &p, &q, self.cfg.r_max, self.cfg.levels, c, &self.mc())?;
        for (k, level) in rep.levels.iter().enumerate() {
            self.row(level.r, level.scaled, level.g_stderr, start);
            if let Some(b) = &level.bound {
                self.checks.push(Check {
                    name: format!("level {k}"),
                    pass: b.pass,
                    value: b.lhs,
                    target: Some(b.rhs),
                    tolerance: None,
                });
            }
        }
        self.checks.push(Check::new(
            "bounded",
            rep.bounded,
            rep.levels.iter().map(|l| l.scaled).fold(0.0, f64::max),
        ));
        self.warnings.extend(rep.warnings);
        Ok(())
    }

    fn cone_grid(&mut self) -> Result<(), CliError> {
        let (d, eps) = (self.cfg.d, self.cfg.epsilon);
        let start = Instant::now();
        let grid = build_grid(d, eps)?;
        let dist = distortion_bound(&grid, &DMatrix::identity(d, d))?;
        let max_cap = grid.max_cap_area();
        let m = self.cfg.samples;
        let chunk = 4096;
        let seed = self.cfg.seed;
        let parts = self.exec.map(m.div_ceil(chunk), |b| -> Result<(Vec<usize>, usize), CoreError> {
            let mut rng = batch_rng(seed, b);
            let mut counts = vec![0usize; grid.len()];
            let mut bad = 0;
            let mut y = vec![0.0; d];
            for _ in 0..chunk.min(m - b * chunk) {
                fill_normals(&mut rng, &mut y);
                let i = grid.locate_cone(&y)?;
                counts[i] += 1;
                let ok = grid.contains(i, &y)
                    && grid
                        .barycentric_weights(i, &y)
                        .is_ok_and(|a| (a.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                if !ok {
                    bad += 1;
                }
            }
            Ok((counts, bad))
        });
        let mut counts = vec![0usize; grid.len()];
        let mut bad = 0;
        for part in parts {
            let (c, b) = part?;
            for (acc, v) in counts.iter_mut().zip(c) {
                *acc += v;
            }
            bad += b;
        }
        let total = if d == 2 { 2.0 * PI } else { 4.0 * PI };
        // union bound over the cones: P(any |Z| > z) <= N exp(-z²/2) = 1e-3
        let z = (2.0 * (1e3 * grid.len() as f64).ln()).sqrt();
        let mut mc_cap_ok = true;
        let mut mc_cap_max = 0.0f64;
        for &c in &counts {
            let p = c as f64 / m as f64;
            let area = total * p;
            let se = total * (p * (1.0 - p) / m as f64).sqrt();
            mc_cap_max = mc_cap_max.max(area);
            mc_cap_ok &= area <= eps + z * se.max(total / m as f64);
        }
        self.row("N", grid.len() as f64, 0.0, start);
        self.row("max_cap_area", max_cap, 0.0, start);
        self.row("mc_max_cap_area", mc_cap_max, 0.0, start);
        self.row("a", dist.a, 0.0, start);
        self.row("cond1", dist.cond1, 0.0, start);
        self.row("cond2", dist.cond2, 0.0, start);
        self.checks.push(Check::new("max_cap_area", max_cap <= eps, max_cap));
        self.checks.push(Check::new("mc_cap_area", mc_cap_ok, mc_cap_max));
        self.checks.push(Check::new("partition", bad == 0, bad as f64));
        Ok(())
    }

    fn corpus_test(&mut self) -> Result<(), CliError> {
        let seed = self.cfg.seed;
        let entries: Vec<(String, Entry)> = self.registry.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        for (k, (id, entry)) in entries.into_iter().enumerate() {
            let f = entry.build()?;
            let d = f.dim();
            let mut rng = batch_rng(seed, k);

            let start = Instant::now();
            let mut worst = 0.0f64;
            for _ in 0..10_000 {
                let (x, y) = (uniform(&mut rng, -2.0, 2.0, d), uniform(&mut rng, -2.0, 2.0, d));
                let p = f.subgradient(&x);
                let lin = f.eval(&x) + p.iter().zip(&y).zip(&x).map(|((pi, yi), xi)| pi * (yi - xi)).sum::<f64>();
                worst = worst.max((lin - f.eval(&y)) / (1.0 + lin.abs()));
            }
            self.row(format!("{id}:subgradient"), worst, 0.0, start);
            self.checks.push(Check::new(format!("{id}:subgradient"), worst <= 1e-9, worst));

            if entry.smoothing.is_none() {
                let start = Instant::now();
                let mut worst = 0.0f64;
                for eps in [0.2, 0.1, 0.05] {
                    let m = mollify(f.clone(), eps, DEFAULT_HERMITE_ORDER)?;
                    for _ in 0..1000 {
                        let (x, y) = (uniform(&mut rng, -2.0, 2.0, d), uniform(&mut rng, -2.0, 2.0, d));
                        let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
                        let gap = m.eval(&mid) - 0.5 * (m.eval(&x) + m.eval(&y));
                        worst = worst.max(gap);
                    }
                }
                self.row(format!("{id}:mollified_midpoint"), worst, 0.0, start);
                self.checks
                    .push(Check::new(format!("{id}:mollified_midpoint"), worst <= 1e-10, worst));
            }

            if let (Some(mu), true) = (f.second_derivative_measure(), d <= 2) {
                let start = Instant::now();
                let mut worst = 0.0f64;
                for _ in 0..10 {
                    let center = uniform(&mut rng, -1.0, 1.0, d);
                    let half = rng.random_range(0.3..1.5);
                    let phi = ProductBump::new(center, vec![half; d], 4)?;
                    let mut lhs = 0.0;
                    for i in 0..d {
                        lhs += second_derivative_pairing(&*f, &phi, i, i, DEFAULT_PAIRING_ORDER)?;
                    }
                    let rhs = measure_trace_pairing(&mu, &phi, |a| f.axis_breakpoints(a), DEFAULT_PAIRING_ORDER)?;
                    worst = worst.max((lhs - rhs).abs() / (1.0 + rhs.abs()));
                }
                self.row(format!("{id}:pairing_vs_measure"), worst, 0.0, start);
                self.checks
                    .push(Check::new(format!("{id}:pairing_vs_measure"), worst <= 1e-5, worst));
            }

            if d <= 2 {
                let start = Instant::now();
                let ext = extend_from_ball(f.clone(), DEFAULT_EXTENSION_GRID)?;
                let triples: Vec<(Vec<f64>, Vec<f64>)> =
                    (0..1000).map(|_| (uniform(&mut rng, -2.5, 2.5, d), uniform(&mut rng, -2.5, 2.5, d))).collect();
                let gaps = self.exec.map(triples.len(), |i| -> Result<f64, CoreError> {
                    let (x, y) = &triples[i];
                    let mid: Vec<f64> = x.iter().zip(y).map(|(a, b)| 0.5 * (a + b)).collect();
                    let (fx, fy, fm) = (ext.try_eval(x)?, ext.try_eval(y)?, ext.try_eval(&mid)?);
                    Ok((fm - 0.5 * (fx + fy)) / (1.0 + fx.abs() + fy.abs()))
                });
                let mut worst = f64::NEG_INFINITY;
                for g in gaps {
                    worst = worst.max(g?);
                }
                self.row(format!("{id}:extension_midpoint"), worst, 0.0, start);
                self.checks
                    .push(Check::new(format!("{id}:extension_midpoint"), worst <= 1e-8, worst));
            }
        }
        Ok(())
    }
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(lo..hi)).collect()
}
