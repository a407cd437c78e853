//! Benchmark sources and synthetic observations.
//!
//! Noise is multiplicative and pointwise, `u_obs = (1 + delta r) u` with `r`
//! uniform on `[-1, 1)`, drawn per velocity dof per time node in
//! snapshot-major order. The generator is xoshiro256++ seeded through
//! SplitMix64 (`Xoshiro256PlusPlus::seed_from_u64`), and `r` is built from
//! the top 53 bits of each output, so realizations are reproducible on every
//! platform.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::fem::{assemble, forward_solve, AssembledOperators, TimeSeries};
use crate::field::VectorField;
use crate::inverse::{ComponentMode, InverseProblem, ReconstructionOptions, ReconstructionState};
use crate::mesh::{build_rect_mesh, tag_omega, BoxRegion, Mesh, OmegaRegion};
use crate::source::{SourceSpec, TimeProfile};

/// Computational box of the benchmarks.
pub const DOMAIN: BoxRegion = BoxRegion::square(0.0, 3.0);
/// Support box of the benchmark sources.
pub const OMEGA: BoxRegion = BoxRegion::square(0.75, 2.25);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExampleId {
    /// `0.1 + x1/6 + x2/6`
    Affine = 1,
    /// `exp(-|x - (3/2, 3/2)|^2)`
    Gaussian = 2,
    /// `cos(pi x1 / 3) cos(pi x2 / 3)`
    Cosine = 3,
}

impl ExampleId {
    pub const ALL: [ExampleId; 3] = [ExampleId::Affine, ExampleId::Gaussian, ExampleId::Cosine];

    pub fn from_id(id: u32) -> Result<Self> {
        match id {
            1 => Ok(ExampleId::Affine),
            2 => Ok(ExampleId::Gaussian),
            3 => Ok(ExampleId::Cosine),
            other => Err(Error::UnknownExample(other)),
        }
    }

    pub fn id(self) -> u32 {
        self as u32
    }

    /// Scalar profile; both velocity components of the source use it.
    pub fn profile(self, x: [f64; 2]) -> f64 {
        use core::f64::consts::PI;
        match self {
            ExampleId::Affine => 0.1 + x[0] / 6.0 + x[1] / 6.0,
            ExampleId::Gaussian => libm::exp(-((x[0] - 1.5) * (x[0] - 1.5) + (x[1] - 1.5) * (x[1] - 1.5))),
            ExampleId::Cosine => libm::cos(PI * x[0] / 3.0) * libm::cos(PI * x[1] / 3.0),
        }
    }

    /// Constant value of the initial guess on omega.
    pub fn initial_guess_value(self) -> f64 {
        match self {
            ExampleId::Affine => 0.8,
            ExampleId::Gaussian => 2.0,
            ExampleId::Cosine => 0.5,
        }
    }

    /// Relative errors reported for `k = 10, 20, 30` with `c = 0.01`.
    pub fn reference_errors(self) -> [(usize, f64); 3] {
        match self {
            ExampleId::Affine => [(10, 0.15), (20, 0.142), (30, 0.138)],
            ExampleId::Gaussian => [(10, 0.22), (20, 0.185), (30, 0.18)],
            ExampleId::Cosine => [(10, 0.13), (20, 0.097), (30, 0.07)],
        }
    }
}

/// `sigma = e^t` and the nodal interpolant of the example profile on omega.
pub fn true_source(example: ExampleId, mesh: &Mesh, omega: &OmegaRegion) -> SourceSpec {
    let f = VectorField::from_fn_on_omega(mesh, omega, |x| {
        let v = example.profile(x);
        [v, v]
    });
    SourceSpec { sigma: TimeProfile::Exp, f }
}

pub fn initial_guess(example: ExampleId, mesh: &Mesh, omega: &OmegaRegion) -> VectorField {
    let v = example.initial_guess_value();
    VectorField::from_fn_on_omega(mesh, omega, |_| [v, v])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub delta: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(delta: f64, seed: u64) -> Result<Self> {
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::InvalidConfig(alloc::format!("noise level must be >= 0, got {delta}")));
        }
        Ok(Self { delta, seed })
    }

    /// Contaminates the velocity snapshots. `delta = 0` returns the input
    /// values unchanged.
    pub fn apply(&self, clean: &TimeSeries) -> TimeSeries {
        let velocity = if self.delta == 0.0 {
            clean.velocity.clone()
        } else {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(self.seed);
            clean
                .velocity
                .iter()
                .map(|u| VectorField(u.0.iter().map(|&x| x * (1.0 + self.delta * uniform_pm1(&mut rng))).collect()))
                .collect()
        };
        TimeSeries::velocity_only(clean.dt, velocity)
    }
}

/// Uniform sample on `[-1, 1)` from the top 53 bits of one output.
pub fn uniform_pm1(rng: &mut impl RngCore) -> f64 {
    let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    2.0 * u - 1.0
}

/// Viscosity used for the benchmark reconstructions.
pub const BENCHMARK_NU: f64 = 0.7;

/// Default configuration with the benchmark viscosity.
pub fn benchmark_config() -> SolverConfig {
    SolverConfig { nu: BENCHMARK_NU, ..SolverConfig::default() }
}

/// Result of one synthetic reconstruction.
#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub ops: AssembledOperators,
    pub f_true: VectorField,
    pub observations: TimeSeries,
    pub state: ReconstructionState,
    /// Worst penalty residual over the data solve and every iteration.
    pub max_penalty_residual: f64,
}

/// Builds data for `example` on a mesh of size `h`, then runs `k_max`
/// iterations of the reconstruction from the constant initial guess.
pub fn run_example(
    example: ExampleId,
    h: f64,
    config: &SolverConfig,
    k_max: usize,
    mode: ComponentMode,
) -> Result<BenchmarkRun> {
    let mesh = build_rect_mesh(DOMAIN, h)?;
    let omega = tag_omega(&mesh, OMEGA)?;
    let ops = assemble(&mesh, &omega, config)?;
    let source = true_source(example, &mesh, &omega);
    let clean = forward_solve(&ops, &source, &VectorField::zeros(ops.num_vertices()))?;
    let observations = NoiseModel::new(config.delta, config.seed)?.apply(&clean);
    let f0 = initial_guess(example, &mesh, &omega);
    let state = InverseProblem::new(&ops, source.sigma.clone(), &observations)?.with_mode(mode).reconstruct(
        &f0,
        ReconstructionOptions { k_max, force_iterations: true, f_true: Some(&source.f) },
    )?;
    let max_penalty_residual = clean.max_penalty_residual.max(state.max_penalty_residual);
    Ok(BenchmarkRun { ops, f_true: source.f, observations, state, max_penalty_residual })
}

/// Forward solve from rest followed by the noise model. The data cover the
/// whole box; the adjoint restricts it to the observation region.
pub fn make_observations(ops: &AssembledOperators, source: &SourceSpec, noise: &NoiseModel) -> Result<TimeSeries> {
    let clean = forward_solve(ops, source, &VectorField::zeros(ops.num_vertices()))?;
    Ok(noise.apply(&clean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SolverConfig;
    use crate::fem::assemble;
    use crate::mesh::{build_rect_mesh, tag_omega};
    use alloc::vec::Vec;

    #[test]
    fn profiles_at_center() {
        let c = [1.5, 1.5];
        assert!((ExampleId::Affine.profile(c) - 0.6).abs() < 1e-15);
        assert_eq!(ExampleId::Gaussian.profile(c), 1.0);
        assert!(ExampleId::Cosine.profile(c).abs() < 1e-15);
        assert_eq!(ExampleId::from_id(4), Err(Error::UnknownExample(4)));
    }

    #[test]
    fn true_source_is_supported_in_omega() {
        let mesh = build_rect_mesh(DOMAIN, 0.1).unwrap();
        let omega = tag_omega(&mesh, OMEGA).unwrap();
        for ex in ExampleId::ALL {
            let src = true_source(ex, &mesh, &omega);
            assert!(src.f.supported_in(&omega));
            let center = mesh.vertices.iter().position(|p| (p[0] - 1.5).abs() < 1e-9 && (p[1] - 1.5).abs() < 1e-9).unwrap();
            let v = src.f.get(center);
            assert_eq!(v[0], v[1]);
            assert!((v[0] - ex.profile([1.5, 1.5])).abs() < 1e-12);
        }
    }

    fn clean(ops: &AssembledOperators) -> TimeSeries {
        let src = true_source(ExampleId::Gaussian, &ops.mesh, &ops.omega);
        make_observations(ops, &src, &NoiseModel::new(0.0, 1).unwrap()).unwrap()
    }

    #[test]
    fn noise_properties() {
        let mesh = build_rect_mesh(DOMAIN, 0.3).unwrap();
        let omega = tag_omega(&mesh, OMEGA).unwrap();
        let ops = assemble(&mesh, &omega, &SolverConfig::default()).unwrap();
        let base = clean(&ops);
        let src = true_source(ExampleId::Gaussian, &ops.mesh, &ops.omega);
        let direct = forward_solve(&ops, &src, &VectorField::zeros(ops.num_vertices())).unwrap();
        assert_eq!(base.velocity, direct.velocity);

        let noise = NoiseModel::new(0.01, 42).unwrap();
        let a = noise.apply(&base);
        let b = noise.apply(&base);
        assert_eq!(a, b);
        let other = NoiseModel::new(0.01, 43).unwrap().apply(&base);
        assert_ne!(a, other);
        // Lumped mass rows are positive weights; the pointwise bound carries over.
        let weights: Vec<f64> = (0..ops.num_vertices()).map(|r| ops.mass.row(r).map(|(_, v)| v).sum()).collect();
        let weighted = |x: &VectorField| -> f64 {
            libm::sqrt(x.0.iter().enumerate().map(|(i, v)| weights[i / 2] * v * v).sum::<f64>())
        };
        for (noisy, u) in a.velocity.iter().zip(&base.velocity) {
            let d = noisy.sub(u);
            assert!(d.0.iter().zip(&u.0).all(|(d, x)| d.abs() <= 0.01 * x.abs()));
            assert!(weighted(&d) <= 0.01 * weighted(u) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn generator_stream_is_pinned() {
        // Reference xoshiro256++ with SplitMix64 seeding, written from the
        // published algorithm.
        let mut sm = 42u64;
        let mut next_sm = || {
            sm = sm.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = sm;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            z ^ (z >> 31)
        };
        let mut st = [next_sm(), next_sm(), next_sm(), next_sm()];
        let mut reference = move || {
            let out = st[0].wrapping_add(st[3]).rotate_left(23).wrapping_add(st[0]);
            let t = st[1] << 17;
            st[2] ^= st[0];
            st[3] ^= st[1];
            st[1] ^= st[2];
            st[0] ^= st[3];
            st[2] ^= t;
            st[3] = st[3].rotate_left(45);
            out
        };
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(42);
        for _ in 0..1000 {
            let r = reference();
            let expected = 2.0 * ((r >> 11) as f64 / 9007199254740992.0) - 1.0;
            assert_eq!(uniform_pm1(&mut rng), expected);
        }
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(42);
        let first: [u64; 3] = core::array::from_fn(|_| uniform_pm1(&mut rng).to_bits());
        assert_eq!(first, [4603837237683101082, 13823571316744407144, 4606892281927239994]);
    }
}
