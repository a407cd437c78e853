//! Independent correctness oracles: the free-space heat-kernel solution,
//! a manufactured solution on the benchmark box, and the curl constructions
//! that produce distinct sources with identical data outside their support.
//!
//! In 2D the curl of a scalar potential is `curl psi = (d2 psi, -d1 psi)`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::fem::{assemble, AssembledOperators, TimeSeries};
use crate::field::VectorField;
use crate::mesh::{build_rect_mesh, tag_omega, BoxRegion};
use crate::quadrature::{gauss_legendre, triangle_degree5};

const KERNEL_ORDER: usize = 8;
const KERNEL_MAX_PANELS: usize = 256;

/// `u(t, x) = (4 pi nu t)^{-1} int exp(-|x - y|^2 / (4 nu t)) u0(y) dy`,
/// componentwise, with `u0` taken to vanish outside `support`.
///
/// Composite Gauss-Legendre on a tensor grid of panels over `support`,
/// clipped to the numerical reach of the kernel; the panel count doubles
/// until successive values agree to `tol` at each point.
pub fn heat_kernel_solution(
    u0: impl Fn([f64; 2]) -> [f64; 2],
    support: BoxRegion,
    t: f64,
    nu: f64,
    points: &[[f64; 2]],
    tol: f64,
) -> Result<Vec<[f64; 2]>> {
    if !(t > 0.0) || !(nu > 0.0) {
        return Err(Error::InvalidInput(alloc::format!("heat kernel needs t > 0 and nu > 0, got t={t}, nu={nu}")));
    }
    let gl = gauss_legendre(KERNEL_ORDER);
    let four_nu_t = 4.0 * nu * t;
    let scale = 1.0 / (PI * four_nu_t);
    // Beyond this distance the kernel is below 1e-35 of its peak.
    let reach = 9.0 * libm::sqrt(four_nu_t);
    let convolve = |p: [f64; 2], lo: [f64; 2], hi: [f64; 2], panels: usize| -> [f64; 2] {
        let axis = |a: f64, b: f64| -> Vec<(f64, f64)> {
            let step = (b - a) / panels as f64;
            (0..panels)
                .flat_map(|k| {
                    let s = a + k as f64 * step;
                    gl.iter().map(move |&(x, w)| (s + 0.5 * step * (x + 1.0), 0.5 * step * w))
                })
                .collect()
        };
        let (xs, ys) = (axis(lo[0], hi[0]), axis(lo[1], hi[1]));
        let mut acc = [0.0; 2];
        for &(x, wx) in &xs {
            let kx = libm::exp(-(p[0] - x) * (p[0] - x) / four_nu_t);
            for &(y, wy) in &ys {
                let v = u0([x, y]);
                let k = kx * libm::exp(-(p[1] - y) * (p[1] - y) / four_nu_t) * wx * wy;
                acc[0] += k * v[0];
                acc[1] += k * v[1];
            }
        }
        [scale * acc[0], scale * acc[1]]
    };
    let mut out = Vec::with_capacity(points.len());
    for &p in points {
        let lo = [support.min[0].max(p[0] - reach), support.min[1].max(p[1] - reach)];
        let hi = [support.max[0].min(p[0] + reach), support.max[1].min(p[1] + reach)];
        if lo[0] >= hi[0] || lo[1] >= hi[1] {
            out.push([0.0, 0.0]);
            continue;
        }
        let mut panels = 2;
        let mut prev = convolve(p, lo, hi, panels);
        loop {
            panels *= 2;
            let next = convolve(p, lo, hi, panels);
            let change = (prev[0] - next[0]).abs().max((prev[1] - next[1]).abs());
            if change <= tol {
                out.push(next);
                break;
            }
            if panels >= KERNEL_MAX_PANELS {
                return Err(Error::QuadratureNotConverged { estimate: change });
            }
            prev = next;
        }
    }
    Ok(out)
}

/// Divergence-free vortex `u0 = curl(A exp(-|x - c|^2 / a^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianVortex {
    pub center: [f64; 2],
    pub amplitude: f64,
    pub radius: f64,
}

impl GaussianVortex {
    pub fn velocity(&self, x: [f64; 2]) -> [f64; 2] {
        let (dx, dy) = (x[0] - self.center[0], x[1] - self.center[1]);
        let a2 = self.radius * self.radius;
        let psi = self.amplitude * libm::exp(-(dx * dx + dy * dy) / a2);
        [-2.0 * dy / a2 * psi, 2.0 * dx / a2 * psi]
    }

    /// Box outside which `|u0|` is below `1e-16` times its peak.
    pub fn support(&self) -> BoxRegion {
        let r = 6.5 * self.radius;
        BoxRegion::new([self.center[0] - r, self.center[1] - r], [self.center[0] + r, self.center[1] + r])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatKernelRow {
    pub t: f64,
    /// Relative L2 difference of FEM and kernel solution on the central box.
    pub rel_l2: f64,
    /// `||p_h|| / ||u_h||` on the central box.
    pub pressure_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatKernelReport {
    pub h: f64,
    pub dt: f64,
    pub rows: Vec<HeatKernelRow>,
    pub max_penalty_residual: f64,
}

/// Free-space box used for the heat-kernel comparison.
pub const HEAT_BOX: BoxRegion = BoxRegion::square(-3.0, 6.0);
/// Region in which the comparison is measured.
pub const HEAT_CENTRAL: BoxRegion = BoxRegion::square(0.0, 3.0);

/// Unforced FEM solution from the vortex on `HEAT_BOX`, compared with the
/// kernel convolution at each of `times` (multiples of `config.dt`).
pub fn heat_kernel_comparison(
    vortex: &GaussianVortex,
    h: f64,
    config: &SolverConfig,
    times: &[f64],
) -> Result<HeatKernelReport> {
    let t_max = times.iter().copied().fold(0.0, f64::max);
    if times.is_empty() || !(t_max > 0.0) {
        return Err(Error::InvalidInput("comparison times must be positive".into()));
    }
    let cfg = SolverConfig { t_final: t_max, ..*config };
    cfg.validate()?;
    let mesh = build_rect_mesh(HEAT_BOX, h)?;
    let central = tag_omega(&mesh, HEAT_CENTRAL)?;
    let ops = assemble(&mesh, &central, &cfg)?;
    let mut u0 = VectorField::from_fn(&mesh, |x| vortex.velocity(x));
    for (x, &fixed) in u0.0.iter_mut().zip(&ops.dofs.dirichlet_mask) {
        if fixed {
            *x = 0.0;
        }
    }
    let run = ops.march_forward(&u0, |_| None)?;
    let central_points: Vec<usize> = (0..mesh.num_vertices()).filter(|&v| central.vertices[v]).collect();
    let coords: Vec<[f64; 2]> = central_points.iter().map(|&v| mesh.vertices[v]).collect();
    let mut rows = Vec::with_capacity(times.len());
    for &t in times {
        let m = libm::round(t / cfg.dt) as usize;
        if m == 0 || m > ops.num_steps() || (m as f64 * cfg.dt - t).abs() > 1e-9 * t.max(1.0) {
            return Err(Error::InvalidInput(alloc::format!("time {t} is not a positive multiple of dt")));
        }
        let exact = heat_kernel_solution(|x| vortex.velocity(x), vortex.support(), t, cfg.nu, &coords, 1e-6)?;
        let mut kernel = VectorField::zeros(mesh.num_vertices());
        for (&v, e) in central_points.iter().zip(exact) {
            kernel.set(v, e);
        }
        let mut fem = VectorField::zeros(mesh.num_vertices());
        for &v in &central_points {
            fem.set(v, run.velocity[m].get(v));
        }
        let rel_l2 = ops.omega_norm(&fem.sub(&kernel)) / ops.omega_norm(&kernel);
        let p = &run.pressure[m].0;
        let pf = VectorField(p.iter().flat_map(|&x| [x, 0.0]).collect());
        let pressure_ratio = ops.omega_norm(&pf) / ops.omega_norm(&fem);
        rows.push(HeatKernelRow { t, rel_l2, pressure_ratio });
    }
    Ok(HeatKernelReport { h, dt: cfg.dt, rows, max_penalty_residual: run.max_penalty_residual })
}

/// Manufactured solution on `[0, L]^2`:
/// `u = (1 + t) curl(q(x) q(y)) / K`, `q(s) = s^2 (L - s)^2`,
/// `p = (1 + t) cos(pi x / L) cos(pi y / L)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Manufactured {
    pub side: f64,
    pub nu: f64,
}

impl Manufactured {
    const K: f64 = 25.0;

    fn q(&self, s: f64) -> [f64; 4] {
        let l = self.side;
        [
            s * s * (l - s) * (l - s),
            2.0 * s * (l - s) * (l - 2.0 * s),
            2.0 * (l * l - 6.0 * l * s + 6.0 * s * s),
            2.0 * (12.0 * s - 6.0 * l),
        ]
    }

    pub fn velocity(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let (qx, qy) = (self.q(x[0]), self.q(x[1]));
        let g = (1.0 + t) / Self::K;
        [g * qx[0] * qy[1], -g * qx[1] * qy[0]]
    }

    pub fn pressure(&self, t: f64, x: [f64; 2]) -> f64 {
        let k = PI / self.side;
        (1.0 + t) * libm::cos(k * x[0]) * libm::cos(k * x[1])
    }

    /// `du/dt - nu Lap u + grad p`.
    pub fn force(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let (qx, qy) = (self.q(x[0]), self.q(x[1]));
        let g = (1.0 + t) / Self::K;
        let dg = 1.0 / Self::K;
        let lap = [g * (qx[2] * qy[1] + qx[0] * qy[3]), -g * (qx[3] * qy[0] + qx[1] * qy[2])];
        let k = PI / self.side;
        let (c0, s0) = (libm::cos(k * x[0]), libm::sin(k * x[0]));
        let (c1, s1) = (libm::cos(k * x[1]), libm::sin(k * x[1]));
        let grad_p = [-(1.0 + t) * k * s0 * c1, -(1.0 + t) * k * c0 * s1];
        [
            dg * qx[0] * qy[1] - self.nu * lap[0] + grad_p[0],
            -dg * qx[1] * qy[0] - self.nu * lap[1] + grad_p[1],
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub hs: Vec<f64>,
    /// Velocity L2 error at the final time, bubbles included.
    pub errors: Vec<f64>,
    /// `log(e_i / e_{i+1}) / log(h_i / h_{i+1})` for consecutive pairs.
    pub rates: Vec<f64>,
    pub max_penalty_residual: f64,
}

/// Velocity L2 errors of the manufactured solution on `[0, 3]^2` at
/// `config.t_final`, for each mesh size.
pub fn manufactured_convergence(hs: &[f64], config: &SolverConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    if hs.len() < 2 {
        return Err(Error::InvalidInput("a convergence study needs at least two mesh sizes".into()));
    }
    let domain = BoxRegion::square(0.0, 3.0);
    let exact = Manufactured { side: 3.0, nu: config.nu };
    let mut errors = Vec::with_capacity(hs.len());
    let mut worst = 0.0f64;
    for &h in hs {
        let mesh = build_rect_mesh(domain, h)?;
        let omega = tag_omega(&mesh, BoxRegion::square(0.75, 2.25))?;
        let ops = assemble(&mesh, &omega, config)?;
        let u0 = VectorField::from_fn(&mesh, |x| exact.velocity(0.0, x));
        let run = ops.march_forward(&u0, |m| {
            let t = config.time(m);
            Some(ops.load_from_fn(|x| exact.force(t, x)))
        })?;
        worst = worst.max(run.max_penalty_residual);
        let m = ops.num_steps();
        let t = config.time(m);
        errors.push(ops.velocity_l2_error(&run.velocity[m], &run.bubbles[m], |x| exact.velocity(t, x)));
    }
    let rates = (1..hs.len())
        .map(|i| libm::log(errors[i - 1] / errors[i]) / libm::log(hs[i - 1] / hs[i]))
        .collect();
    Ok(ConvergenceReport { hs: hs.to_vec(), errors, rates, max_penalty_residual: worst })
}

/// `psi(x) = (1 - |x - c|^2 / R^2)^5` inside the disc of radius `R`, zero
/// outside; four times continuously differentiable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Bump {
    /// `g, g', g'', g'''` of the radial profile as functions of `q = |d|^2`.
    fn profile(&self, q: f64) -> [f64; 4] {
        let r2 = self.radius * self.radius;
        let s = 1.0 - q / r2;
        if s <= 0.0 {
            return [0.0; 4];
        }
        let (s2, s3) = (s * s, s * s * s);
        [s2 * s3, -5.0 / r2 * s2 * s2, 20.0 / (r2 * r2) * s3, -60.0 / (r2 * r2 * r2) * s2]
    }

    fn offset(&self, x: [f64; 2], shift: f64) -> ([f64; 2], f64) {
        let d = [x[0] - self.center[0] - shift, x[1] - self.center[1]];
        (d, d[0] * d[0] + d[1] * d[1])
    }

    pub fn psi(&self, x: [f64; 2]) -> f64 {
        let (_, q) = self.offset(x, 0.0);
        self.profile(q)[0]
    }

    /// `curl psi(x - shift e1)`.
    pub fn curl(&self, x: [f64; 2], shift: f64) -> [f64; 2] {
        let (d, q) = self.offset(x, shift);
        let g = self.profile(q);
        [2.0 * g[1] * d[1], -2.0 * g[1] * d[0]]
    }

    /// `Lap curl psi(x - shift e1)`.
    pub fn lap_curl(&self, x: [f64; 2], shift: f64) -> [f64; 2] {
        let (d, q) = self.offset(x, shift);
        let g = self.profile(q);
        let dh = 8.0 * g[2] + 4.0 * q * g[3];
        [2.0 * dh * d[1], -2.0 * dh * d[0]]
    }

    /// `d1 curl psi(x - shift e1)`.
    pub fn d1_curl(&self, x: [f64; 2], shift: f64) -> [f64; 2] {
        let (d, q) = self.offset(x, shift);
        let g = self.profile(q);
        [4.0 * g[2] * d[0] * d[1], -4.0 * g[2] * d[0] * d[0] - 2.0 * g[1]]
    }

    /// Whether the support, swept by `|shift| <= sweep`, lies strictly
    /// inside `region`.
    pub fn fits_in(&self, region: &BoxRegion, sweep: f64) -> bool {
        let r = self.radius + sweep.abs();
        self.center[0] - r > region.min[0]
            && self.center[0] + r < region.max[0]
            && self.center[1] - r > region.min[1]
            && self.center[1] + r < region.max[1]
    }
}

/// `chi(x, t) = beta(t) psi(x - s(t) e1)`, with
/// `beta(t) = scale t^2 (T - t)^2` and `s(t) = sweep sin(pi t / T)`.
/// `sweep = 0` is the separated case `f = curl psi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurlPotential {
    pub psi: Bump,
    pub scale: f64,
    pub horizon: f64,
    pub sweep: f64,
}

impl CurlPotential {
    pub fn separated(psi: Bump, scale: f64, horizon: f64) -> Self {
        Self { psi, scale, horizon, sweep: 0.0 }
    }

    pub fn beta(&self, t: f64) -> f64 {
        let s = t * (self.horizon - t);
        self.scale * s * s
    }

    pub fn beta_prime(&self, t: f64) -> f64 {
        self.scale * 2.0 * t * (self.horizon - t) * (self.horizon - 2.0 * t)
    }

    fn shift(&self, t: f64) -> (f64, f64) {
        let w = PI / self.horizon;
        (self.sweep * libm::sin(w * t), self.sweep * w * libm::cos(w * t))
    }

    pub fn is_zero(&self) -> bool {
        self.scale == 0.0
    }

    /// `curl chi(x, t)`
    pub fn curl(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let b = self.beta(t);
        let c = self.psi.curl(x, self.shift(t).0);
        [b * c[0], b * c[1]]
    }

    /// `d/dt curl chi(x, t)`
    pub fn dt_curl(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let (s, ds) = self.shift(t);
        let (b, db) = (self.beta(t), self.beta_prime(t));
        let c = self.psi.curl(x, s);
        let g = self.psi.d1_curl(x, s);
        [db * c[0] - b * ds * g[0], db * c[1] - b * ds * g[1]]
    }

    /// `nu Lap curl chi(x, t)`
    pub fn viscous_curl(&self, nu: f64, t: f64, x: [f64; 2]) -> [f64; 2] {
        let b = nu * self.beta(t);
        let c = self.psi.lap_curl(x, self.shift(t).0);
        [b * c[0], b * c[1]]
    }
}

/// Space-time norms of `w = u_1 - u_2` for a pair of curl sources.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterexampleReport {
    pub h: f64,
    pub dt: f64,
    /// `||w||` over the observation region.
    pub boundary_norm: f64,
    /// `||w||` over omega.
    pub interior_norm: f64,
    /// `boundary_norm / interior_norm`; `None` when the potential vanishes.
    pub ratio: Option<f64>,
    /// `||curl chi||` over omega.
    pub curl_norm: f64,
    /// `||w - curl chi|| / ||curl chi||` over omega; `None` when degenerate.
    pub interior_error: Option<f64>,
    /// Space-time L2 norm of `F_1 - F_2`; the sources differ when positive.
    pub source_gap: f64,
    pub degenerate: bool,
    pub max_penalty_residual: f64,
}

fn space_time_norm(ops: &AssembledOperators, series: &[VectorField], inner: impl Fn(&VectorField) -> f64) -> f64 {
    libm::sqrt(series[1..].iter().map(|w| ops.config.dt * inner(w)).sum::<f64>())
}

fn curl_report(
    ops: &AssembledOperators,
    chi: &CurlPotential,
    first: &TimeSeries,
    second: &TimeSeries,
    source_gap: f64,
) -> CounterexampleReport {
    let cfg = ops.config;
    let diff: Vec<VectorField> = first.velocity.iter().zip(&second.velocity).map(|(a, b)| a.sub(b)).collect();
    let exact: Vec<VectorField> = (0..diff.len())
        .map(|m| VectorField::from_fn_on_omega(&ops.mesh, &ops.omega, |x| chi.curl(cfg.time(m), x)))
        .collect();
    let err: Vec<VectorField> = diff.iter().zip(&exact).map(|(w, e)| w.sub(e)).collect();
    let boundary_norm = space_time_norm(ops, &diff, |w| ops.observed_inner(w, w));
    let interior_norm = space_time_norm(ops, &diff, |w| ops.omega_inner(w, w));
    let curl_norm = space_time_norm(ops, &exact, |w| ops.omega_inner(w, w));
    let degenerate = chi.is_zero() || curl_norm == 0.0;
    let ratio = (!degenerate && interior_norm > 0.0).then(|| boundary_norm / interior_norm);
    let interior_error = (!degenerate).then(|| space_time_norm(ops, &err, |w| ops.omega_inner(w, w)) / curl_norm);
    CounterexampleReport {
        h: ops.mesh.h,
        dt: cfg.dt,
        boundary_norm,
        interior_norm,
        ratio,
        curl_norm,
        interior_error,
        source_gap,
        degenerate,
        max_penalty_residual: first.max_penalty_residual.max(second.max_penalty_residual),
    }
}

fn check_potential(ops: &AssembledOperators, chi: &CurlPotential) -> Result<()> {
    if !chi.psi.fits_in(&ops.omega.bbox, chi.sweep) {
        return Err(Error::InvalidInput("potential support must lie strictly inside omega".into()));
    }
    if (chi.horizon - ops.config.t_final).abs() > 1e-12 * chi.horizon.max(1.0) {
        return Err(Error::InvalidInput("potential horizon must match the final time".into()));
    }
    Ok(())
}

/// `(sum_m dt ||F(t_m)||^2_{L2})^{1/2}` for a closed-form force.
fn force_norm(ops: &AssembledOperators, mut force: impl FnMut(f64, [f64; 2]) -> [f64; 2]) -> f64 {
    let rule = triangle_degree5();
    let cfg = ops.config;
    let mut s = 0.0;
    for m in 1..=ops.num_steps() {
        let t = cfg.time(m);
        for tri in 0..ops.num_triangles() {
            let area = ops.mesh.signed_area(tri);
            for &(bary, w) in &rule {
                let f = force(t, ops.mesh.map_point(tri, bary));
                s += cfg.dt * area * w * (f[0] * f[0] + f[1] * f[1]);
            }
        }
    }
    libm::sqrt(s)
}

/// Separated pair `F_1 = beta'(t) curl psi`, `F_2 = beta(t) nu Lap curl psi`.
/// Their states differ by `beta curl psi`, which vanishes off the support.
pub fn counterexample_separated(ops: &AssembledOperators, pot: &CurlPotential) -> Result<CounterexampleReport> {
    let pot = CurlPotential { sweep: 0.0, ..*pot };
    check_potential(ops, &pot)?;
    let nu = ops.config.nu;
    let f1 = ops.load_from_fn(|x| pot.psi.curl(x, 0.0));
    let f2 = ops.load_from_fn(|x| {
        let l = pot.psi.lap_curl(x, 0.0);
        [nu * l[0], nu * l[1]]
    });
    let cfg = ops.config;
    let zero = VectorField::zeros(ops.num_vertices());
    let first = ops.march_forward(&zero, |m| Some(f1.scaled(pot.beta_prime(cfg.time(m)))))?;
    let second = ops.march_forward(&zero, |m| Some(f2.scaled(pot.beta(cfg.time(m)))))?;
    let gap = force_norm(ops, |t, x| {
        let (a, b) = (pot.psi.curl(x, 0.0), pot.psi.lap_curl(x, 0.0));
        let (s1, s2) = (pot.beta_prime(t), nu * pot.beta(t));
        [s1 * a[0] - s2 * b[0], s1 * a[1] - s2 * b[1]]
    });
    Ok(curl_report(ops, &pot, &first, &second, gap))
}

/// General pair `F_1 = d/dt curl chi`, `F_2 = nu Lap curl chi`, with the
/// loads integrated at every time node.
pub fn counterexample_general(ops: &AssembledOperators, chi: &CurlPotential) -> Result<CounterexampleReport> {
    check_potential(ops, chi)?;
    let cfg = ops.config;
    let nu = cfg.nu;
    let zero = VectorField::zeros(ops.num_vertices());
    let f1 = |m: usize| ops.load_from_fn(|x| chi.dt_curl(cfg.time(m), x));
    let f2 = |m: usize| ops.load_from_fn(|x| chi.viscous_curl(nu, cfg.time(m), x));
    let first = ops.march_forward(&zero, |m| Some(f1(m)))?;
    let second = ops.march_forward(&zero, |m| Some(f2(m)))?;
    let gap = force_norm(ops, |t, x| {
        let (a, b) = (chi.dt_curl(t, x), chi.viscous_curl(nu, t, x));
        [a[0] - b[0], a[1] - b[1]]
    });
    Ok(curl_report(ops, chi, &first, &second, gap))
}

/// Bump used by the certificates: centered in the benchmark support box.
pub fn standard_bump() -> Bump {
    Bump { center: [1.5, 1.5], radius: 0.6 }
}
