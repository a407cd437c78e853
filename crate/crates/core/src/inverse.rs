//! Tikhonov functional, adjoint gradient and the fixed-point reconstruction
//!
//! ```text
//! J(f)      = sum_{m=1..M} dt ||u_f(t_m) - u_obs(t_m)||^2_{obs} + lambda ||f||^2_{omega}
//! J'(f) h   = 2 ( Z_f + lambda f , h )_{omega},  Z_f = int sigma(t) z_f(t) dt
//! f_{k+1}   = c / (c + lambda) f_k - 1 / (c + lambda) Z_{f_k}     on omega
//! ```
//!
//! `Z_f` is the L2(omega) Riesz representer of the discrete pairing
//! `sum_m dt sigma(t_m) (z^{m-1}, .)`, so `gradient` is the exact gradient of
//! the discrete `cost` and the duality test holds to round-off.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fem::{adjoint_solve, forward_solve, AssembledOperators, TimeSeries};
use crate::field::VectorField;
use crate::source::{SourceSpec, TimeProfile};

/// One row of the iteration history, for the step producing `f_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    /// `||f_k - f_{k-1}|| / ||f_{k-1}||` (absolute change if `f_{k-1} = 0`).
    pub rel_change: f64,
    /// `||f_k - f_true|| / ||f_true||` when the truth is known.
    pub err_vs_true: Option<f64>,
    /// `J(f_{k-1})`, evaluated from the forward solve of this iteration.
    pub cost: f64,
    /// `||f_k - f_{k-1}||`
    pub update_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionState {
    pub f: VectorField,
    pub k: usize,
    pub history: Vec<IterationRecord>,
    /// True if the relative-change test stopped the loop.
    pub converged: bool,
    pub max_penalty_residual: f64,
}

impl ReconstructionState {
    pub fn err_history(&self) -> Vec<Option<f64>> {
        self.history.iter().map(|r| r.err_vs_true).collect()
    }

    pub fn cost_history(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.cost).collect()
    }

    /// `err_vs_true` after iteration `k` (1-based), if recorded.
    pub fn error_at(&self, k: usize) -> Option<f64> {
        self.history.get(k.checked_sub(1)?).and_then(|r| r.err_vs_true)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ReconstructionOptions<'a> {
    pub k_max: usize,
    /// Ignore the tolerance and run exactly `k_max` iterations.
    pub force_iterations: bool,
    pub f_true: Option<&'a VectorField>,
}

impl Default for ReconstructionOptions<'_> {
    fn default() -> Self {
        Self { k_max: 30, force_iterations: false, f_true: None }
    }
}

/// Everything one evaluation of the functional produces.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub cost: f64,
    pub misfit: f64,
    /// `int sigma z_f dt` as a nodal field on omega.
    pub adjoint_integral: VectorField,
    pub gradient: VectorField,
    pub max_penalty_residual: f64,
}

/// Discrete L2(omega) relative error `||f - f_true|| / ||f_true||`.
pub fn relative_error(ops: &AssembledOperators, f: &VectorField, f_true: &VectorField) -> Result<f64> {
    let denom = ops.omega_norm(f_true);
    if denom == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(ops.omega_norm(&f.sub(f_true)) / denom)
}

/// How the two components of the unknown source are updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ComponentMode {
    /// Each component is its own unknown.
    #[default]
    Independent,
    /// The unknown is `g (1, 1)` for a scalar `g`; the update is projected
    /// onto fields with equal components.
    Tied,
}

/// The reconstruction problem for fixed operators, time profile and data.
#[derive(Debug, Clone)]
pub struct InverseProblem<'a> {
    pub ops: &'a AssembledOperators,
    pub sigma: TimeProfile,
    pub observations: &'a TimeSeries,
    pub mode: ComponentMode,
}

impl<'a> InverseProblem<'a> {
    pub fn new(ops: &'a AssembledOperators, sigma: TimeProfile, observations: &'a TimeSeries) -> Result<Self> {
        if observations.len() != ops.num_steps() + 1 {
            return Err(Error::InvalidInput(alloc::format!(
                "observations have {} snapshots, expected {}",
                observations.len(),
                ops.num_steps() + 1
            )));
        }
        if observations.velocity.iter().any(|u| u.num_vertices() != ops.num_vertices()) {
            return Err(Error::InvalidInput("observation snapshot size does not match the mesh".into()));
        }
        if sigma.is_identically_zero() {
            return Err(Error::InvalidInput("time profile must not vanish identically".into()));
        }
        Ok(Self { ops, sigma, observations, mode: ComponentMode::Independent })
    }

    pub fn with_mode(mut self, mode: ComponentMode) -> Self {
        self.mode = mode;
        self
    }

    fn check_support(&self, f: &VectorField) -> Result<()> {
        if f.num_vertices() != self.ops.num_vertices() || !f.supported_in(&self.ops.omega) {
            return Err(Error::InvalidInput("source field must be a mesh field vanishing outside omega".into()));
        }
        Ok(())
    }

    /// Forward state `u_f` from rest.
    pub fn state(&self, f: &VectorField) -> Result<TimeSeries> {
        self.check_support(f)?;
        let src = SourceSpec { sigma: self.sigma.clone(), f: f.clone() };
        forward_solve(self.ops, &src, &VectorField::zeros(self.ops.num_vertices()))
    }

    pub fn residual(&self, state: &TimeSeries) -> TimeSeries {
        state.velocity_difference(self.observations)
    }

    /// `sum_{m=1..M} dt ||r_m||^2` over the observation region.
    pub fn misfit(&self, residual: &TimeSeries) -> f64 {
        residual.velocity[1..]
            .iter()
            .map(|r| residual.dt * self.ops.observed_inner(r, r))
            .sum()
    }

    pub fn regularization(&self, f: &VectorField) -> f64 {
        self.ops.config.lambda * self.ops.omega_inner(f, f)
    }

    pub fn cost(&self, f: &VectorField) -> Result<f64> {
        let state = self.state(f)?;
        Ok(self.misfit(&self.residual(&state)) + self.regularization(f))
    }

    /// `int_0^T sigma(t) z(t) dt` in the pairing consistent with the
    /// backward march: node `m` of `sigma` meets adjoint snapshot `m - 1`.
    pub fn adjoint_integral(&self, adjoint: &TimeSeries) -> VectorField {
        let ops = self.ops;
        let mut acc = alloc::vec![0.0; 2 * ops.num_vertices()];
        for m in 1..adjoint.len() {
            let w = adjoint.dt * self.sigma.eval(ops.config.time(m));
            let bubbles: &[f64] = adjoint.bubbles.get(m - 1).map_or(&[], |b| b.as_slice());
            let pairing = ops.source_load_transpose(&adjoint.velocity[m - 1], bubbles);
            for (a, p) in acc.iter_mut().zip(pairing) {
                *a += w * p;
            }
        }
        ops.omega_riesz(&acc)
    }

    /// One forward and one adjoint solve.
    pub fn evaluate(&self, f: &VectorField) -> Result<Evaluation> {
        let state = self.state(f)?;
        let residual = self.residual(&state);
        let misfit = self.misfit(&residual);
        let adjoint = adjoint_solve(self.ops, &residual)?;
        let adjoint_integral = self.adjoint_integral(&adjoint);
        let mut gradient = adjoint_integral.scaled(2.0);
        gradient.axpy(2.0 * self.ops.config.lambda, f);
        Ok(Evaluation {
            cost: misfit + self.regularization(f),
            misfit,
            adjoint_integral,
            gradient,
            max_penalty_residual: state.max_penalty_residual.max(adjoint.max_penalty_residual),
        })
    }

    pub fn gradient(&self, f: &VectorField) -> Result<VectorField> {
        Ok(self.evaluate(f)?.gradient)
    }

    /// Fixed-point update of `f` given `int sigma z_f dt`; zero off omega.
    pub fn update(&self, f: &VectorField, adjoint_integral: &VectorField) -> VectorField {
        let (c, lambda) = (self.ops.config.c, self.ops.config.lambda);
        let mut next = VectorField::zeros(f.num_vertices());
        for v in 0..f.num_vertices() {
            if self.ops.omega.vertices[v] {
                let (mut a, mut z) = (f.get(v), adjoint_integral.get(v));
                if self.mode == ComponentMode::Tied {
                    a = [0.5 * (a[0] + a[1]); 2];
                    z = [0.5 * (z[0] + z[1]); 2];
                }
                next.set(v, [(c * a[0] - z[0]) / (c + lambda), (c * a[1] - z[1]) / (c + lambda)]);
            }
        }
        next
    }

    /// Runs the fixed-point iteration from `f0`.
    pub fn reconstruct(&self, f0: &VectorField, options: ReconstructionOptions<'_>) -> Result<ReconstructionState> {
        self.check_support(f0)?;
        if options.k_max == 0 {
            return Err(Error::InvalidInput("k_max must be at least 1".into()));
        }
        let tau = self.ops.config.tau;
        let mut f = f0.clone();
        let mut history = Vec::with_capacity(options.k_max);
        let mut converged = false;
        let mut worst = 0.0f64;
        for k in 1..=options.k_max {
            let eval = self.evaluate(&f)?;
            worst = worst.max(eval.max_penalty_residual);
            let next = self.update(&f, &eval.adjoint_integral);
            if !next.is_finite() {
                return Err(Error::Diverged { iteration: k });
            }
            let update_norm = self.ops.omega_norm(&next.sub(&f));
            let prev_norm = self.ops.omega_norm(&f);
            let rel_change = if prev_norm > 0.0 { update_norm / prev_norm } else { update_norm };
            let err_vs_true = match options.f_true {
                Some(truth) => Some(relative_error(self.ops, &next, truth)?),
                None => None,
            };
            history.push(IterationRecord { k, rel_change, err_vs_true, cost: eval.cost, update_norm });
            f = next;
            if !options.force_iterations && rel_change <= tau {
                converged = true;
                break;
            }
        }
        Ok(ReconstructionState { k: history.len(), f, history, converged, max_penalty_residual: worst })
    }
}
