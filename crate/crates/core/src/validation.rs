//! Check suite shared by the command-line driver and the acceptance tests.
//!
//! Every check returns a [`CheckOutcome`] carrying the measured value, the
//! threshold it is compared against, and the worst penalty residual seen by
//! the solves it ran.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand_core::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::config::SolverConfig;
use crate::error::Result;
use crate::fem::{adjoint_solve, assemble, forward_solve, AssembledOperators, TimeSeries};
use crate::field::VectorField;
use crate::inverse::{ComponentMode, InverseProblem, ReconstructionOptions};
use crate::mesh::{build_rect_mesh, tag_omega};
use crate::oracles::{
    counterexample_general, counterexample_separated, heat_kernel_comparison, manufactured_convergence,
    standard_bump, CounterexampleReport, CurlPotential, GaussianVortex,
};
use crate::source::{SourceSpec, TimeProfile};
use crate::synthetic::{self, run_example, ExampleId, NoiseModel, DOMAIN, OMEGA};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
    pub max_penalty_residual: f64,
}

impl CheckOutcome {
    fn at_most(name: &str, value: f64, threshold: f64, detail: String, penalty: f64) -> Self {
        Self { name: name.to_string(), value, threshold, passed: value <= threshold, detail, max_penalty_residual: penalty }
    }

    fn at_least(name: &str, value: f64, threshold: f64, detail: String, penalty: f64) -> Self {
        Self { name: name.to_string(), value, threshold, passed: value >= threshold, detail, max_penalty_residual: penalty }
    }
}

/// Operators on the benchmark box with the benchmark support.
pub fn benchmark_operators(h: f64, config: &SolverConfig) -> Result<AssembledOperators> {
    let mesh = build_rect_mesh(DOMAIN, h)?;
    let omega = tag_omega(&mesh, OMEGA)?;
    assemble(&mesh, &omega, config)
}

fn random_on_omega(ops: &AssembledOperators, rng: &mut Xoshiro256PlusPlus) -> VectorField {
    VectorField::from_fn_on_omega(&ops.mesh, &ops.omega, |_| [synthetic::uniform_pm1(rng), synthetic::uniform_pm1(rng)])
}

/// Relative errors of central differences against the adjoint gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub steps: Vec<f64>,
    /// `errors[pair][step]`
    pub errors: Vec<Vec<f64>>,
    /// Smallest error over the step sweep, per pair.
    pub best: Vec<f64>,
    pub max_penalty_residual: f64,
}

impl GradientCheck {
    pub fn worst(&self) -> f64 {
        self.best.iter().copied().fold(0.0, f64::max)
    }
}

pub const GRADIENT_STEPS: [f64; 6] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7];

/// Compares `(grad J(f), h)` with `(J(f + s h) - J(f - s h)) / 2s` for
/// random `f, h` supported in omega, using noisy data from the Gaussian
/// example.
pub fn gradient_check(ops: &AssembledOperators, pairs: usize, seed: u64) -> Result<GradientCheck> {
    let truth = synthetic::true_source(ExampleId::Gaussian, &ops.mesh, &ops.omega);
    let clean = forward_solve(ops, &truth, &VectorField::zeros(ops.num_vertices()))?;
    let data = NoiseModel::new(ops.config.delta, ops.config.seed)?.apply(&clean);
    let problem = InverseProblem::new(ops, truth.sigma.clone(), &data)?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut worst = clean.max_penalty_residual;
    let mut errors = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let f = random_on_omega(ops, &mut rng);
        let dir = random_on_omega(ops, &mut rng);
        let eval = problem.evaluate(&f)?;
        worst = worst.max(eval.max_penalty_residual);
        let adjoint = ops.omega_inner(&eval.gradient, &dir);
        let mut row = Vec::with_capacity(GRADIENT_STEPS.len());
        for &s in &GRADIENT_STEPS {
            let mut plus = f.clone();
            plus.axpy(s, &dir);
            let mut minus = f.clone();
            minus.axpy(-s, &dir);
            let fd = (problem.cost(&plus)? - problem.cost(&minus)?) / (2.0 * s);
            row.push((fd - adjoint).abs() / adjoint.abs().max(fd.abs()).max(f64::MIN_POSITIVE));
        }
        errors.push(row);
    }
    let best = errors.iter().map(|r| r.iter().copied().fold(f64::INFINITY, f64::min)).collect();
    Ok(GradientCheck { steps: GRADIENT_STEPS.to_vec(), errors, best, max_penalty_residual: worst })
}

/// Gradient consistency on `ops`; passes if every pair meets `tol`.
pub fn gradient_outcome(ops: &AssembledOperators, tol: f64) -> Result<CheckOutcome> {
    let g = gradient_check(ops, 5, 7)?;
    let detail = alloc::format!("best relative error per pair {:?}", g.best);
    Ok(CheckOutcome::at_most("gradient-adjoint consistency", g.worst(), tol, detail, g.max_penalty_residual))
}

/// The same comparison with a sign-flipped adjoint load. Passes when the
/// mismatch is detected, i.e. every pair is off by more than `tol`.
pub fn negative_control_outcome(ops: &AssembledOperators, tol: f64) -> Result<CheckOutcome> {
    let bad = ops.with_corrupted_adjoint();
    let g = gradient_check(&bad, 5, 7)?;
    let smallest = g.best.iter().copied().fold(f64::INFINITY, f64::min);
    let detail = alloc::format!("corrupted adjoint, best relative error per pair {:?}", g.best);
    Ok(CheckOutcome::at_least("negative control (corrupted adjoint)", smallest, tol, detail, g.max_penalty_residual))
}

/// `|<u_h, r>_obs - (h, Z_r)_omega| / max(|.|)` for a random source
/// direction `h` and a random residual `r`.
pub fn duality_outcome(ops: &AssembledOperators, seed: u64, tol: f64) -> Result<CheckOutcome> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let dir = random_on_omega(ops, &mut rng);
    let n = ops.num_vertices();
    let residual = TimeSeries::velocity_only(
        ops.config.dt,
        (0..=ops.num_steps())
            .map(|_| VectorField((0..2 * n).map(|_| synthetic::uniform_pm1(&mut rng)).collect()))
            .collect(),
    );
    let sigma = TimeProfile::Exp;
    let sens = forward_solve(ops, &SourceSpec { sigma: sigma.clone(), f: dir.clone() }, &VectorField::zeros(n))?;
    let lhs: f64 = (1..=ops.num_steps())
        .map(|m| ops.config.dt * ops.observed_inner(&sens.velocity[m], &residual.velocity[m]))
        .sum();
    let adjoint = adjoint_solve(ops, &residual)?;
    let problem = InverseProblem::new(ops, sigma, &residual)?;
    let rhs = ops.omega_inner(&dir, &problem.adjoint_integral(&adjoint));
    let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs());
    let detail = alloc::format!("sensitivity pairing {lhs:.12e}, adjoint pairing {rhs:.12e}");
    let penalty = sens.max_penalty_residual.max(adjoint.max_penalty_residual);
    Ok(CheckOutcome::at_most("discrete duality", rel, tol, detail, penalty))
}

/// First update from `f_true` with exact data is the pure contraction
/// `c / (c + lambda) f_true`.
pub fn contraction_outcome(ops: &AssembledOperators, example: ExampleId, tol: f64) -> Result<CheckOutcome> {
    let truth = synthetic::true_source(example, &ops.mesh, &ops.omega);
    let clean = forward_solve(ops, &truth, &VectorField::zeros(ops.num_vertices()))?;
    let data = TimeSeries::velocity_only(clean.dt, clean.velocity);
    let problem = InverseProblem::new(ops, truth.sigma.clone(), &data)?;
    let st = problem.reconstruct(
        &truth.f,
        ReconstructionOptions { k_max: 1, force_iterations: true, f_true: Some(&truth.f) },
    )?;
    let cfg = ops.config;
    let expected = truth.f.scaled(cfg.c / (cfg.c + cfg.lambda));
    let rel = ops.omega_norm(&st.f.sub(&expected)) / ops.omega_norm(&truth.f);
    let penalty = clean.max_penalty_residual.max(st.max_penalty_residual);
    Ok(CheckOutcome::at_most("exact-data contraction", rel, tol, alloc::format!("example {}", example.id()), penalty))
}

/// Relative errors of a synthetic reconstruction at the reported iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct TableCheck {
    pub example: ExampleId,
    /// `(k, err(k))` at the reported iteration counts.
    pub errors: Vec<(usize, f64)>,
    pub cost_history: Vec<f64>,
    pub nonincreasing: bool,
    pub outcome: CheckOutcome,
}

/// Runs the benchmark reconstruction for `example` and checks that the
/// error is nonincreasing over the reported iterations and that the last
/// one is at most `bound`.
pub fn table_check(
    example: ExampleId,
    h: f64,
    config: &SolverConfig,
    mode: ComponentMode,
    bound: f64,
) -> Result<TableCheck> {
    let ks: Vec<usize> = example.reference_errors().iter().map(|r| r.0).collect();
    let k_max = *ks.last().unwrap_or(&30);
    let run = run_example(example, h, config, k_max, mode)?;
    let errors: Vec<(usize, f64)> = ks.iter().map(|&k| (k, run.state.error_at(k).unwrap_or(f64::NAN))).collect();
    let nonincreasing = errors.windows(2).all(|w| w[1].1 <= w[0].1);
    let last = errors.last().map_or(f64::NAN, |e| e.1);
    let reference: Vec<f64> = example.reference_errors().iter().map(|r| r.1).collect();
    let detail = alloc::format!("err(k) {errors:?}, nonincreasing {nonincreasing}, reference {reference:?}");
    let mut outcome = CheckOutcome::at_most(
        &alloc::format!("example {} reconstruction", example.id()),
        last,
        bound,
        detail,
        run.max_penalty_residual,
    );
    outcome.passed &= nonincreasing;
    Ok(TableCheck { example, errors, cost_history: run.state.cost_history(), nonincreasing, outcome })
}

/// Worst rate of the manufactured solution over `hs` at `dt`.
pub fn manufactured_outcome(hs: &[f64], dt: f64, t_final: f64, min_rate: f64) -> Result<CheckOutcome> {
    let cfg = SolverConfig { dt, t_final, ..SolverConfig::default() };
    let r = manufactured_convergence(hs, &cfg)?;
    let worst = r.rates.iter().copied().fold(f64::INFINITY, f64::min);
    let detail = alloc::format!("h {:?}, errors {:?}, rates {:?}", r.hs, r.errors, r.rates);
    Ok(CheckOutcome::at_least("manufactured-solution rate", worst, min_rate, detail, r.max_penalty_residual))
}

/// Vortex used by the heat-kernel comparison.
pub fn standard_vortex() -> GaussianVortex {
    GaussianVortex { center: [1.5, 1.5], amplitude: 1.0, radius: 0.5 }
}

/// FEM against the kernel convolution; the value is the error at the last
/// of `times`.
pub fn heat_kernel_outcome(h: f64, dt: f64, times: &[f64], tol: f64) -> Result<CheckOutcome> {
    let cfg = SolverConfig { dt, ..SolverConfig::default() };
    let r = heat_kernel_comparison(&standard_vortex(), h, &cfg, times)?;
    let last = r.rows.last().map_or(f64::NAN, |row| row.rel_l2);
    let detail = alloc::format!("{:?}", r.rows);
    Ok(CheckOutcome::at_most("heat-kernel oracle", last, tol, detail, r.max_penalty_residual))
}

/// Counterexample certificates at a coarse and a fine mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateCheck {
    pub separated: [CounterexampleReport; 2],
    pub general: [CounterexampleReport; 2],
    pub outcome: CheckOutcome,
}

/// Sweep of the moving potential in the general construction.
pub const GENERAL_SWEEP: f64 = 0.1;

/// Ratio at the fine mesh at most `max_ratio`, at least halved from the
/// coarse mesh, interior norm at least half of `||curl chi||`, and interior
/// error of the separated pair at most `max_error`.
pub fn counterexample_check(h_coarse: f64, h_fine: f64, dt: f64, max_ratio: f64, max_error: f64) -> Result<CertificateCheck> {
    let cfg = SolverConfig { dt, ..SolverConfig::default() };
    let pot = CurlPotential { psi: standard_bump(), scale: 16.0, horizon: cfg.t_final, sweep: GENERAL_SWEEP };
    let mut separated = Vec::with_capacity(2);
    let mut general = Vec::with_capacity(2);
    for h in [h_coarse, h_fine] {
        let ops = benchmark_operators(h, &cfg)?;
        separated.push(counterexample_separated(&ops, &pot)?);
        general.push(counterexample_general(&ops, &pot)?);
    }
    let separated: [CounterexampleReport; 2] = [separated[0], separated[1]];
    let general: [CounterexampleReport; 2] = [general[0], general[1]];
    let mut ok = true;
    let mut worst_ratio = 0.0f64;
    let mut penalty = 0.0f64;
    for pair in [&separated, &general] {
        let (coarse, fine) = (pair[0].ratio.unwrap_or(f64::NAN), pair[1].ratio.unwrap_or(f64::NAN));
        worst_ratio = worst_ratio.max(fine);
        ok &= fine <= max_ratio && fine <= 0.5 * coarse;
        ok &= pair.iter().all(|r| r.interior_norm >= 0.5 * r.curl_norm && r.source_gap > 0.0);
        penalty = penalty.max(pair[0].max_penalty_residual).max(pair[1].max_penalty_residual);
    }
    let sep_err = separated[1].interior_error.unwrap_or(f64::NAN);
    ok &= sep_err <= max_error;
    let detail = alloc::format!(
        "separated ratio {:?} -> {:?}, error {:.4}; general ratio {:?} -> {:?}, error {:.4}; interior/curl {:.3}, {:.3}",
        separated[0].ratio,
        separated[1].ratio,
        sep_err,
        general[0].ratio,
        general[1].ratio,
        general[1].interior_error.unwrap_or(f64::NAN),
        separated[1].interior_norm / separated[1].curl_norm,
        general[1].interior_norm / general[1].curl_norm,
    );
    let mut outcome = CheckOutcome::at_most("counterexample certificates", worst_ratio, max_ratio, detail, penalty);
    outcome.passed = ok;
    Ok(CertificateCheck { separated, general, outcome })
}

/// Outcome bounding the worst penalty residual of a set of results.
pub fn penalty_outcome(outcomes: &[CheckOutcome], tol: f64) -> CheckOutcome {
    let worst = outcomes.iter().map(|o| o.max_penalty_residual).fold(0.0, f64::max);
    CheckOutcome::at_most("penalty residual", worst, tol, alloc::format!("over {} checks", outcomes.len()), worst)
}

/// Component convention used by the benchmark reconstructions.
pub const BENCHMARK_MODE: ComponentMode = ComponentMode::Independent;

/// Error bounds of the benchmark reconstructions at the last reported iteration.
pub fn table_bound(example: ExampleId) -> f64 {
    match example {
        ExampleId::Affine => 0.25,
        ExampleId::Gaussian => 0.30,
        ExampleId::Cosine => 0.15,
    }
}

/// Full suite at the standard resolutions, in a fixed order.
pub fn standard_suite() -> Result<Vec<CheckOutcome>> {
    let base = SolverConfig::default();
    let ops = benchmark_operators(0.1, &base)?;
    let mut out = vec![
        gradient_outcome(&ops, 1e-4)?,
        negative_control_outcome(&ops, 1e-4)?,
        duality_outcome(&ops, 11, 1e-8)?,
        manufactured_outcome(&[0.2, 0.1, 0.05], 1e-3, 0.05, 1.8)?,
        heat_kernel_outcome(0.1, 0.01, &[0.25, 0.5], 0.05)?,
    ];
    let bench = synthetic::benchmark_config();
    for ex in [ExampleId::Cosine, ExampleId::Affine, ExampleId::Gaussian] {
        out.push(table_check(ex, 0.1, &bench, BENCHMARK_MODE, table_bound(ex))?.outcome);
    }
    out.push(counterexample_check(0.1, 0.05, 0.01, 0.05, 0.10)?.outcome);
    let exact = SolverConfig { delta: 0.0, ..base };
    out.push(contraction_outcome(&benchmark_operators(0.1, &exact)?, ExampleId::Affine, 1e-12)?);
    let penalty = penalty_outcome(&out, 1e-12);
    out.push(penalty);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_gradient_and_duality() {
        let ops = benchmark_operators(0.3, &SolverConfig::default()).unwrap();
        let g = gradient_outcome(&ops, 1e-4).unwrap();
        assert!(g.passed, "{g:?}");
        let neg = negative_control_outcome(&ops, 1e-4).unwrap();
        assert!(neg.passed, "{neg:?}");
        let d = duality_outcome(&ops, 3, 1e-8).unwrap();
        assert!(d.passed, "{d:?}");
        assert!(d.max_penalty_residual <= 1e-12);
    }

    #[test]
    fn coarse_contraction() {
        let cfg = SolverConfig { delta: 0.0, ..SolverConfig::default() };
        let ops = benchmark_operators(0.3, &cfg).unwrap();
        for ex in ExampleId::ALL {
            let c = contraction_outcome(&ops, ex, 1e-12).unwrap();
            assert!(c.passed, "{c:?}");
        }
    }

    #[test]
    fn penalty_outcome_takes_the_worst() {
        let a = CheckOutcome::at_most("a", 0.0, 1.0, String::new(), 1e-14);
        let b = CheckOutcome::at_most("b", 0.0, 1.0, String::new(), 1e-13);
        let p = penalty_outcome(&[a, b], 1e-12);
        assert_eq!(p.value, 1e-13);
        assert!(p.passed);
    }
}
