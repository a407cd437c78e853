//! Mini-element discretization of the penalized unsteady Stokes system
//!
//! ```text
//! (M/dt + nu A) w^m + D^T p^m = M w^{m-1} / dt + l^m
//!               D w^m - eps Mp p^m = 0
//! ```
//!
//! where `w = (u, b)` collects the P1 velocity and the per-element cubic
//! bubble coefficients. Bubbles are eliminated element by element before
//! the global solve and recovered afterwards, so the P1 system is exactly
//! the Schur complement of the full P1-bubble / P1 system. The resulting
//! condensed matrix is constant in time and is factored once.
//!
//! Both the stepping matrix and the history operator `M/dt` are symmetric,
//! so the adjoint system is marched with the same [`AssembledOperators::step`]
//! in reversed time; the discrete adjoint is therefore the exact transpose of
//! the discrete forward map.

use alloc::vec;
use alloc::vec::Vec;

use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::mesh::{DofMap, ElementGeometry, Mesh, OmegaRegion};
use crate::quadrature;
use crate::source::SourceSpec;
use crate::sparse::{CsrMatrix, SkylineLdl, TripletBuilder};

/// P1 mass matrix of one triangle.
pub fn p1_mass_element(area: f64) -> [[f64; 3]; 3] {
    let mut m = [[area / 12.0; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = area / 6.0;
    }
    m
}

/// `int grad l_i . grad l_j` over one triangle.
pub fn p1_stiffness_element(geom: &ElementGeometry) -> [[f64; 3]; 3] {
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (gi, gj) = (geom.grads[i], geom.grads[j]);
            k[i][j] = geom.area * (gi[0] * gj[0] + gi[1] * gj[1]);
        }
    }
    k
}

/// Integrals involving the bubble `b = 27 l0 l1 l2` of one triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BubbleBlock {
    /// `int l_i b`, identical for the three vertices.
    pub mass_vb: f64,
    /// `int b^2`
    pub mass_bb: f64,
    /// `nu int |grad b|^2`
    pub stiff_bb: f64,
    /// `div[k][c] = -int l_k d_c b`, the pressure coupling of component `c`.
    pub div: [[f64; 2]; 3],
    /// Diagonal of the bubble row of the stepping matrix.
    pub pivot: f64,
}

impl BubbleBlock {
    pub fn new(geom: &ElementGeometry, nu: f64, dt: f64) -> Self {
        let a = geom.area;
        let grad_sq: f64 = geom.grads.iter().map(|g| g[0] * g[0] + g[1] * g[1]).sum();
        let mass_vb = 3.0 * a / 20.0;
        let mass_bb = 81.0 * a / 280.0;
        let stiff_bb = nu * 81.0 * a / 20.0 * grad_sq;
        // -int l_k d_c b = int b d_c l_k since b vanishes on the element boundary.
        let div = geom.grads.map(|g| [g[0] * 9.0 * a / 20.0, g[1] * 9.0 * a / 20.0]);
        Self { mass_vb, mass_bb, stiff_bb, div, pivot: mass_bb / dt + stiff_bb }
    }
}

/// Right-hand side contribution of one step, split into P1 velocity rows
/// (`2 * vertices`) and bubble rows (`2 * triangles`).
#[derive(Debug, Clone, PartialEq)]
pub struct Load {
    pub velocity: Vec<f64>,
    pub bubbles: Vec<f64>,
}

impl Load {
    pub fn zeros(num_vertices: usize, num_triangles: usize) -> Self {
        Self { velocity: vec![0.0; 2 * num_vertices], bubbles: vec![0.0; 2 * num_triangles] }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            velocity: self.velocity.iter().map(|x| a * x).collect(),
            bubbles: self.bubbles.iter().map(|x| a * x).collect(),
        }
    }

    pub fn add_scaled(&mut self, a: f64, other: &Load) {
        for (x, y) in self.velocity.iter_mut().zip(&other.velocity) {
            *x += a * y;
        }
        for (x, y) in self.bubbles.iter_mut().zip(&other.bubbles) {
            *x += a * y;
        }
    }
}

/// Which part of the mesh a load is integrated over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadRegion {
    Omega,
    Everywhere,
}

/// Velocity, bubble and pressure at one time node.
#[derive(Debug, Clone, PartialEq)]
pub struct StepState {
    pub velocity: VectorField,
    pub bubbles: Vec<f64>,
    pub pressure: ScalarField,
    /// Relative residual of the discrete constraint `D w - eps Mp p = 0`.
    pub penalty_residual: f64,
}

/// Snapshots at `t_m = m dt`, `m = 0..=M`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub dt: f64,
    pub velocity: Vec<VectorField>,
    /// Empty for data that carries velocity only (observations).
    pub pressure: Vec<ScalarField>,
    /// Bubble coefficients per snapshot; empty for observations.
    pub bubbles: Vec<Vec<f64>>,
    /// Worst relative penalty residual over all solved steps.
    pub max_penalty_residual: f64,
}

impl TimeSeries {
    pub fn velocity_only(dt: f64, velocity: Vec<VectorField>) -> Self {
        Self { dt, velocity, pressure: Vec::new(), bubbles: Vec::new(), max_penalty_residual: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.velocity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocity.is_empty()
    }

    pub fn num_steps(&self) -> usize {
        self.len().saturating_sub(1)
    }

    pub fn time(&self, m: usize) -> f64 {
        m as f64 * self.dt
    }

    /// Snapshot-wise difference of the velocities.
    pub fn velocity_difference(&self, other: &TimeSeries) -> TimeSeries {
        let velocity = self.velocity.iter().zip(&other.velocity).map(|(a, b)| a.sub(b)).collect();
        TimeSeries::velocity_only(self.dt, velocity)
    }
}

/// Assembled matrices and the factored stepping operator for one
/// `(mesh, omega, config)` triple. Immutable after construction.
#[derive(Debug, Clone)]
pub struct AssembledOperators {
    pub mesh: Mesh,
    pub omega: OmegaRegion,
    pub config: SolverConfig,
    pub dofs: DofMap,
    /// Scalar P1 mass; the velocity mass is `mass` per component.
    pub mass: CsrMatrix,
    /// P1 mass restricted to tagged triangles.
    pub mass_omega: CsrMatrix,
    /// P1 mass restricted to untagged triangles (observation region).
    pub mass_observed: CsrMatrix,
    /// Scalar P1 stiffness scaled by `nu`.
    pub stiffness: CsrMatrix,
    /// `div[k, 2 j + c] = -int l_k d_c l_j`; rows are pressure dofs.
    pub div: CsrMatrix,
    pub pressure_mass: CsrMatrix,
    pub bubbles: Vec<BubbleBlock>,
    system: CsrMatrix,
    factor: SkylineLdl,
    omega_vertices: Vec<usize>,
    omega_mass: CsrMatrix,
    omega_factor: SkylineLdl,
    /// Sign applied to the adjoint load. Only flipped by negative-control
    /// checks that must detect a broken gradient.
    adjoint_sign: f64,
}

/// Assembles all operators and factors the stepping matrix.
pub fn assemble(mesh: &Mesh, omega: &OmegaRegion, config: &SolverConfig) -> Result<AssembledOperators> {
    config.validate()?;
    if omega.triangles.len() != mesh.num_triangles() || omega.vertices.len() != mesh.num_vertices() {
        return Err(Error::InvalidInput("omega tags do not match the mesh".into()));
    }
    let n = mesh.num_vertices();
    let nt = mesh.num_triangles();
    let dofs = DofMap::new(mesh);
    let (nu, dt, eps) = (config.nu, config.dt, config.eps);

    let mut mass = TripletBuilder::new(n, n);
    let mut mass_omega = TripletBuilder::new(n, n);
    let mut mass_observed = TripletBuilder::new(n, n);
    let mut stiffness = TripletBuilder::new(n, n);
    let mut div = TripletBuilder::new(n, 2 * n);
    let mut system = TripletBuilder::new(dofs.system_size, dofs.system_size);
    let mut bubbles = Vec::with_capacity(nt);

    for t in 0..nt {
        let tri = mesh.triangles[t];
        let geom = mesh.element(t);
        let me = p1_mass_element(geom.area);
        let ke = p1_stiffness_element(&geom);
        let bubble = BubbleBlock::new(&geom, nu, dt);
        let coupling = bubble.mass_vb / dt;

        for i in 0..3 {
            for j in 0..3 {
                mass.push(tri[i], tri[j], me[i][j]);
                if omega.triangles[t] {
                    mass_omega.push(tri[i], tri[j], me[i][j]);
                } else {
                    mass_observed.push(tri[i], tri[j], me[i][j]);
                }
                stiffness.push(tri[i], tri[j], nu * ke[i][j]);
            }
        }
        for k in 0..3 {
            for j in 0..3 {
                for c in 0..2 {
                    div.push(tri[k], 2 * tri[j] + c, -geom.grads[j][c] * geom.area / 3.0);
                }
            }
        }

        // Condensed element contributions.
        for c in 0..2 {
            for i in 0..3 {
                let Some(ri) = dofs.system_velocity[2 * tri[i] + c] else { continue };
                for j in 0..3 {
                    if let Some(rj) = dofs.system_velocity[2 * tri[j] + c] {
                        let v = me[i][j] / dt + nu * ke[i][j] - coupling * coupling / bubble.pivot;
                        system.push(ri, rj, v);
                    }
                }
                for k in 0..3 {
                    let pk = dofs.system_pressure[tri[k]];
                    let v = -geom.grads[i][c] * geom.area / 3.0
                        - bubble.div[k][c] * coupling / bubble.pivot;
                    system.push(pk, ri, v);
                    system.push(ri, pk, v);
                }
            }
        }
        for k in 0..3 {
            for l in 0..3 {
                let stab: f64 = (0..2).map(|c| bubble.div[k][c] * bubble.div[l][c]).sum();
                system.push(
                    dofs.system_pressure[tri[k]],
                    dofs.system_pressure[tri[l]],
                    -eps * me[k][l] - stab / bubble.pivot,
                );
            }
        }
        bubbles.push(bubble);
    }

    let mass = mass.build();
    let system = system.build();
    let factor = SkylineLdl::factor(&system)?;

    let omega_vertices: Vec<usize> = (0..n).filter(|&v| omega.vertices[v]).collect();
    if omega_vertices.is_empty() {
        return Err(Error::InvalidMesh("omega contains no triangle of the mesh".into()));
    }
    let mass_omega = mass_omega.build();
    let omega_mass = mass_omega.principal_submatrix(&omega_vertices);
    let omega_factor = SkylineLdl::factor(&omega_mass)?;

    Ok(AssembledOperators {
        mesh: mesh.clone(),
        omega: omega.clone(),
        config: *config,
        dofs,
        pressure_mass: mass.clone(),
        mass,
        mass_omega,
        mass_observed: mass_observed.build(),
        stiffness: stiffness.build(),
        div: div.build(),
        bubbles,
        system,
        factor,
        omega_vertices,
        omega_mass,
        omega_factor,
        adjoint_sign: 1.0,
    })
}

fn apply_per_component(matrix: &CsrMatrix, field: &[f64], out: &mut [f64], alpha: f64) {
    let n = matrix.n_rows;
    for c in 0..2 {
        for r in 0..n {
            let s: f64 = matrix.row(r).map(|(col, v)| v * field[2 * col + c]).sum();
            out[2 * r + c] += alpha * s;
        }
    }
}

impl AssembledOperators {
    pub fn num_vertices(&self) -> usize {
        self.mesh.num_vertices()
    }

    pub fn num_triangles(&self) -> usize {
        self.mesh.num_triangles()
    }

    pub fn num_steps(&self) -> usize {
        self.config.num_steps()
    }

    /// Condensed stepping matrix (Dirichlet dofs removed).
    pub fn system_matrix(&self) -> &CsrMatrix {
        &self.system
    }

    pub fn factorization(&self) -> &SkylineLdl {
        &self.factor
    }

    /// Copy of the operators whose adjoint load has the wrong sign; used as a
    /// negative control for the gradient check.
    pub fn with_corrupted_adjoint(&self) -> Self {
        let mut out = self.clone();
        out.adjoint_sign = -1.0;
        out
    }

    pub fn zero_load(&self) -> Load {
        Load::zeros(self.num_vertices(), self.num_triangles())
    }

    /// Velocity mass matrix applied per component.
    pub fn apply_velocity_mass(&self, field: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; field.len()];
        apply_per_component(&self.mass, field, &mut out, 1.0);
        out
    }

    /// `G f`: load of a nodal P1 field, with bubble rows.
    pub fn source_load(&self, f: &VectorField, region: LoadRegion) -> Load {
        let matrix = match region {
            LoadRegion::Omega => &self.mass_omega,
            LoadRegion::Everywhere => &self.mass,
        };
        let mut load = self.zero_load();
        apply_per_component(matrix, f.as_slice(), &mut load.velocity, 1.0);
        for (t, tri) in self.mesh.triangles.iter().enumerate() {
            if region == LoadRegion::Omega && !self.omega.triangles[t] {
                continue;
            }
            let w = self.bubbles[t].mass_vb;
            for c in 0..2 {
                load.bubbles[2 * t + c] = w * tri.iter().map(|&v| f.0[2 * v + c]).sum::<f64>();
            }
        }
        load
    }

    /// `G^T z` for a state `(velocity, bubbles)`: the dual pairing of the
    /// state with P1 test functions supported in omega.
    pub fn source_load_transpose(&self, velocity: &VectorField, bubbles: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; 2 * self.num_vertices()];
        apply_per_component(&self.mass_omega, velocity.as_slice(), &mut out, 1.0);
        if !bubbles.is_empty() {
            for (t, tri) in self.mesh.triangles.iter().enumerate() {
                if !self.omega.triangles[t] {
                    continue;
                }
                let w = self.bubbles[t].mass_vb;
                for c in 0..2 {
                    for &v in tri {
                        out[2 * v + c] += w * bubbles[2 * t + c];
                    }
                }
            }
        }
        out
    }

    /// Solves `M_omega x = rhs` on the omega vertices, returning the L2(omega)
    /// Riesz representer of the functional `rhs` as a nodal field.
    pub fn omega_riesz(&self, rhs: &[f64]) -> VectorField {
        let mut out = VectorField::zeros(self.num_vertices());
        for c in 0..2 {
            let b: Vec<f64> = self.omega_vertices.iter().map(|&v| rhs[2 * v + c]).collect();
            let x = self.omega_factor.solve_refined(&self.omega_mass, &b, 1);
            for (&v, xv) in self.omega_vertices.iter().zip(x) {
                out.0[2 * v + c] = xv;
            }
        }
        out
    }

    /// `(f, g)_{L2(omega)}` for nodal fields.
    pub fn omega_inner(&self, f: &VectorField, g: &VectorField) -> f64 {
        (0..2)
            .map(|c| self.mass_omega.bilinear_form(&f.component(c), &g.component(c)))
            .sum()
    }

    pub fn omega_norm(&self, f: &VectorField) -> f64 {
        libm::sqrt(self.omega_inner(f, f).max(0.0))
    }

    /// `(u, v)_{L2}` over the observation region (P1 part only).
    pub fn observed_inner(&self, u: &VectorField, v: &VectorField) -> f64 {
        (0..2)
            .map(|c| self.mass_observed.bilinear_form(&u.component(c), &v.component(c)))
            .sum()
    }

    /// `(u, v)_{L2}` over the whole domain (P1 part only).
    pub fn full_inner(&self, u: &VectorField, v: &VectorField) -> f64 {
        (0..2).map(|c| self.mass.bilinear_form(&u.component(c), &v.component(c))).sum()
    }

    /// Squared L2 norm of the full mini-element velocity `u + b`.
    pub fn velocity_norm_sq(&self, velocity: &VectorField, bubbles: &[f64]) -> f64 {
        let mut s = self.full_inner(velocity, velocity);
        if !bubbles.is_empty() {
            for (t, tri) in self.mesh.triangles.iter().enumerate() {
                let blk = &self.bubbles[t];
                for c in 0..2 {
                    let b = bubbles[2 * t + c];
                    let sum_u: f64 = tri.iter().map(|&v| velocity.0[2 * v + c]).sum();
                    s += 2.0 * blk.mass_vb * b * sum_u + blk.mass_bb * b * b;
                }
            }
        }
        s
    }

    pub fn pressure_norm(&self, p: &ScalarField) -> f64 {
        libm::sqrt(self.pressure_mass.quadratic_form(p.as_slice()).max(0.0))
    }

    /// Relative residual of `D w - eps Mp p = 0`, measured componentwise
    /// against `|D| |w| + eps |Mp| |p|`.
    pub fn penalty_residual(&self, velocity: &VectorField, bubbles: &[f64], pressure: &ScalarField) -> f64 {
        let n = self.num_vertices();
        let mut res = self.div.mul_vec(velocity.as_slice());
        let mut scale = self.div.abs_mul_vec(velocity.as_slice());
        self.pressure_mass.mul_vec_add(pressure.as_slice(), -self.config.eps, &mut res);
        let abs_p = self.pressure_mass.abs_mul_vec(pressure.as_slice());
        for k in 0..n {
            scale[k] += self.config.eps * abs_p[k];
        }
        if !bubbles.is_empty() {
            for (t, tri) in self.mesh.triangles.iter().enumerate() {
                let blk = &self.bubbles[t];
                for (kk, &k) in tri.iter().enumerate() {
                    for c in 0..2 {
                        let v = blk.div[kk][c] * bubbles[2 * t + c];
                        res[k] += v;
                        scale[k] += v.abs();
                    }
                }
            }
        }
        let worst = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let s = scale.iter().fold(0.0f64, |m, r| m.max(*r));
        if s == 0.0 {
            0.0
        } else {
            worst / s
        }
    }

    /// One backward-Euler step from `(velocity, bubbles)` with load `load`.
    pub fn step(&self, velocity: &VectorField, bubbles: &[f64], load: Option<&Load>) -> Result<StepState> {
        let n = self.num_vertices();
        let dt = self.config.dt;
        let tris = &self.mesh.triangles;

        let mut rhs_v = vec![0.0; 2 * n];
        apply_per_component(&self.mass, velocity.as_slice(), &mut rhs_v, 1.0 / dt);
        let mut rhs_b = vec![0.0; 2 * tris.len()];
        for (t, tri) in tris.iter().enumerate() {
            let blk = &self.bubbles[t];
            for c in 0..2 {
                let prev_b = if bubbles.is_empty() { 0.0 } else { bubbles[2 * t + c] };
                let sum_u: f64 = tri.iter().map(|&v| velocity.0[2 * v + c]).sum();
                rhs_b[2 * t + c] = (blk.mass_vb * sum_u + blk.mass_bb * prev_b) / dt;
                for &v in tri {
                    rhs_v[2 * v + c] += blk.mass_vb * prev_b / dt;
                }
            }
        }
        if let Some(load) = load {
            for (x, y) in rhs_v.iter_mut().zip(&load.velocity) {
                *x += y;
            }
            for (x, y) in rhs_b.iter_mut().zip(&load.bubbles) {
                *x += y;
            }
        }

        let mut rhs = vec![0.0; self.dofs.system_size];
        for (dof, slot) in self.dofs.system_velocity.iter().enumerate() {
            if let Some(r) = slot {
                rhs[*r] = rhs_v[dof];
            }
        }
        for (t, tri) in tris.iter().enumerate() {
            let blk = &self.bubbles[t];
            let coupling = blk.mass_vb / dt;
            for c in 0..2 {
                let y = rhs_b[2 * t + c] / blk.pivot;
                for (kk, &v) in tri.iter().enumerate() {
                    if let Some(r) = self.dofs.system_velocity[2 * v + c] {
                        rhs[r] -= coupling * y;
                    }
                    rhs[self.dofs.system_pressure[v]] -= blk.div[kk][c] * y;
                }
            }
        }

        let x = self.factor.solve_refined(&self.system, &rhs, 1);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolveFailed { step: 0 });
        }

        let mut new_u = VectorField::zeros(n);
        for (dof, slot) in self.dofs.system_velocity.iter().enumerate() {
            if let Some(r) = slot {
                new_u.0[dof] = x[*r];
            }
        }
        let pressure = ScalarField(self.dofs.system_pressure.iter().map(|&r| x[r]).collect());
        let mut new_b = vec![0.0; 2 * tris.len()];
        for (t, tri) in tris.iter().enumerate() {
            let blk = &self.bubbles[t];
            let coupling = blk.mass_vb / dt;
            for c in 0..2 {
                let mut r = rhs_b[2 * t + c];
                for (kk, &v) in tri.iter().enumerate() {
                    r -= coupling * new_u.0[2 * v + c] + blk.div[kk][c] * pressure.0[v];
                }
                new_b[2 * t + c] = r / blk.pivot;
            }
        }
        let penalty_residual = self.penalty_residual(&new_u, &new_b, &pressure);
        Ok(StepState { velocity: new_u, bubbles: new_b, pressure, penalty_residual })
    }

    fn check_dirichlet(&self, u: &VectorField) -> Result<()> {
        if u.0.len() != 2 * self.num_vertices() {
            return Err(Error::InvalidInput("velocity field size does not match the mesh".into()));
        }
        let violates = self.dofs.dirichlet_mask.iter().zip(&u.0).any(|(&m, &x)| m && x != 0.0);
        if violates {
            return Err(Error::InvalidInput("initial velocity must vanish on the boundary".into()));
        }
        Ok(())
    }

    /// Marches forward from `u0` (bubbles zero) over `m = 1..=M`, with
    /// `load(m)` added to step `m`.
    pub fn march_forward<F>(&self, u0: &VectorField, mut load: F) -> Result<TimeSeries>
    where
        F: FnMut(usize) -> Option<Load>,
    {
        self.check_dirichlet(u0)?;
        let steps = self.num_steps();
        let nt = self.num_triangles();
        let mut out = TimeSeries {
            dt: self.config.dt,
            velocity: Vec::with_capacity(steps + 1),
            pressure: Vec::with_capacity(steps + 1),
            bubbles: Vec::with_capacity(steps + 1),
            max_penalty_residual: 0.0,
        };
        out.velocity.push(u0.clone());
        out.pressure.push(ScalarField::zeros(self.num_vertices()));
        out.bubbles.push(vec![0.0; 2 * nt]);
        for m in 1..=steps {
            let l = load(m);
            let state = self
                .step(&out.velocity[m - 1], &out.bubbles[m - 1], l.as_ref())
                .map_err(|_| Error::SolveFailed { step: m })?;
            out.max_penalty_residual = out.max_penalty_residual.max(state.penalty_residual);
            out.velocity.push(state.velocity);
            out.pressure.push(state.pressure);
            out.bubbles.push(state.bubbles);
        }
        Ok(out)
    }

    /// Marches backward from the terminal value zero: snapshot `m - 1` is
    /// obtained from snapshot `m` with `load(m)`.
    pub fn march_backward<F>(&self, mut load: F) -> Result<TimeSeries>
    where
        F: FnMut(usize) -> Option<Load>,
    {
        let steps = self.num_steps();
        let n = self.num_vertices();
        let nt = self.num_triangles();
        let mut velocity = vec![VectorField::zeros(n); steps + 1];
        let mut pressure = vec![ScalarField::zeros(n); steps + 1];
        let mut bubbles = vec![vec![0.0; 2 * nt]; steps + 1];
        let mut worst = 0.0f64;
        for m in (1..=steps).rev() {
            let l = load(m);
            let state = self
                .step(&velocity[m], &bubbles[m], l.as_ref())
                .map_err(|_| Error::SolveFailed { step: m })?;
            worst = worst.max(state.penalty_residual);
            velocity[m - 1] = state.velocity;
            pressure[m - 1] = state.pressure;
            bubbles[m - 1] = state.bubbles;
        }
        Ok(TimeSeries { dt: self.config.dt, velocity, pressure, bubbles, max_penalty_residual: worst })
    }

    /// Load of the adjoint right-hand side `(u - u_obs) chi_observed`.
    pub fn observed_load(&self, residual: &VectorField) -> Load {
        let mut load = self.zero_load();
        apply_per_component(&self.mass_observed, residual.as_slice(), &mut load.velocity, self.adjoint_sign);
        load
    }

    /// Load `int F(x, t) . v` for a closed-form force, integrated with the
    /// degree-5 rule on every triangle (P1 and bubble rows).
    pub fn load_from_fn(&self, mut force: impl FnMut([f64; 2]) -> [f64; 2]) -> Load {
        let mut load = self.zero_load();
        let rule = quadrature::triangle_degree5();
        for (t, tri) in self.mesh.triangles.iter().enumerate() {
            let area = self.mesh.signed_area(t);
            for &(bary, w) in &rule {
                let x = self.mesh.map_point(t, bary);
                let f = force(x);
                let bub = 27.0 * bary[0] * bary[1] * bary[2];
                for c in 0..2 {
                    for (i, &v) in tri.iter().enumerate() {
                        load.velocity[2 * v + c] += area * w * f[c] * bary[i];
                    }
                    load.bubbles[2 * t + c] += area * w * f[c] * bub;
                }
            }
        }
        load
    }

    /// `||u_h - u_exact||_{L2}` including the bubble part of `u_h`.
    pub fn velocity_l2_error(
        &self,
        velocity: &VectorField,
        bubbles: &[f64],
        mut exact: impl FnMut([f64; 2]) -> [f64; 2],
    ) -> f64 {
        let rule = quadrature::triangle_collapsed(6);
        let mut s = 0.0;
        for (t, tri) in self.mesh.triangles.iter().enumerate() {
            let area = self.mesh.signed_area(t);
            for &(bary, w) in &rule {
                let x = self.mesh.map_point(t, bary);
                let e = exact(x);
                let bub = 27.0 * bary[0] * bary[1] * bary[2];
                for c in 0..2 {
                    let mut uh: f64 = tri.iter().zip(bary).map(|(&v, l)| l * velocity.0[2 * v + c]).sum();
                    if !bubbles.is_empty() {
                        uh += bub * bubbles[2 * t + c];
                    }
                    s += area * w * (uh - e[c]) * (uh - e[c]);
                }
            }
        }
        libm::sqrt(s)
    }
}

/// Time-marched solution of the penalized system with `F = sigma(t_m) f`.
pub fn forward_solve(ops: &AssembledOperators, source: &SourceSpec, u0: &VectorField) -> Result<TimeSeries> {
    if source.f.num_vertices() != ops.num_vertices() {
        return Err(Error::InvalidInput("source field size does not match the mesh".into()));
    }
    if !source.f.supported_in(&ops.omega) {
        return Err(Error::InvalidInput("source field must vanish outside omega".into()));
    }
    let base = ops.source_load(&source.f, LoadRegion::Omega);
    let cfg = ops.config;
    ops.march_forward(u0, |m| {
        let s = source.sigma.eval(cfg.time(m));
        (s != 0.0).then(|| base.scaled(s))
    })
}

/// Backward solve of the penalized adjoint with right-hand side
/// `residual(t_m)` restricted to the observation region. The residual at
/// node `m` drives the step that produces snapshot `m - 1`; the terminal
/// snapshot is zero.
pub fn adjoint_solve(ops: &AssembledOperators, residual: &TimeSeries) -> Result<TimeSeries> {
    if residual.len() != ops.num_steps() + 1 {
        return Err(Error::InvalidInput(alloc::format!(
            "residual has {} snapshots, expected {}",
            residual.len(),
            ops.num_steps() + 1
        )));
    }
    ops.march_backward(|m| Some(ops.observed_load(&residual.velocity[m])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_rect_mesh, tag_omega, BoxRegion, Mesh};
    use crate::quadrature::triangle_collapsed;
    use crate::source::TimeProfile;

    fn setup(h: f64, config: SolverConfig) -> AssembledOperators {
        let mesh = build_rect_mesh(BoxRegion::square(0.0, 3.0), h).unwrap();
        let omega = tag_omega(&mesh, BoxRegion::square(0.75, 2.25)).unwrap();
        assemble(&mesh, &omega, &config).unwrap()
    }

    fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    /// Element integrals by quadrature on the unit right triangle.
    #[test]
    fn element_integrals_match_quadrature() {
        let mesh = Mesh::from_parts(
            alloc::vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            alloc::vec![[0, 1, 2]],
            BoxRegion::square(0.0, 1.0),
            1.0,
        )
        .unwrap();
        let geom = mesh.element(0);
        let area = geom.area;
        let me = p1_mass_element(area);
        assert_eq!(me[0][0], area / 6.0);
        assert_eq!(me[0][1], area / 12.0);

        let rule = triangle_collapsed(6);
        let quad = |f: &dyn Fn([f64; 3]) -> f64| rule.iter().map(|&(l, w)| area * w * f(l)).sum::<f64>();
        let bubble = |l: [f64; 3]| 27.0 * l[0] * l[1] * l[2];
        // grad b = 27 (l1 l2 g0 + l0 l2 g1 + l0 l1 g2)
        let grad_b = |l: [f64; 3]| {
            let g = geom.grads;
            let w = [l[1] * l[2], l[0] * l[2], l[0] * l[1]];
            [
                27.0 * (w[0] * g[0][0] + w[1] * g[1][0] + w[2] * g[2][0]),
                27.0 * (w[0] * g[0][1] + w[1] * g[1][1] + w[2] * g[2][1]),
            ]
        };
        for i in 0..3 {
            for j in 0..3 {
                let q = quad(&|l| l[i] * l[j]);
                assert!((q - me[i][j]).abs() < 1e-15);
            }
        }
        let blk = BubbleBlock::new(&geom, 2.0, 0.5);
        assert!((quad(&|l| l[0] * bubble(l)) - blk.mass_vb).abs() < 1e-15);
        assert!((quad(&|l| bubble(l) * bubble(l)) - blk.mass_bb).abs() < 1e-15);
        let gg = quad(&|l| {
            let g = grad_b(l);
            g[0] * g[0] + g[1] * g[1]
        });
        assert!((2.0 * gg - blk.stiff_bb).abs() < 1e-13);
        for k in 0..3 {
            for c in 0..2 {
                let q = -quad(&|l| l[k] * grad_b(l)[c]);
                assert!((q - blk.div[k][c]).abs() < 1e-14);
            }
            // P1 stiffness cross term with the bubble vanishes.
            let cross = quad(&|l| {
                let g = grad_b(l);
                let _ = l;
                g[0] * geom.grads[k][0] + g[1] * geom.grads[k][1]
            });
            assert!(cross.abs() < 1e-14);
        }
    }

    #[test]
    fn operator_properties() {
        let ops = setup(0.3, SolverConfig::default());
        assert!(ops.mass.is_symmetric(1e-15));
        assert!(ops.pressure_mass.is_symmetric(1e-15));
        assert!(ops.stiffness.is_symmetric(1e-15));
        assert!(ops.system_matrix().is_symmetric(1e-12));

        let n = ops.num_vertices();
        let mut constant = VectorField::zeros(n);
        for v in 0..n {
            constant.set(v, [1.0, 0.0]);
        }
        let d = ops.div.mul_vec(constant.as_slice());
        assert!(d.iter().all(|x| x.abs() < 1e-12));

        for seed in 0..5 {
            let w = pseudo_random(n, seed);
            assert!(ops.stiffness.quadratic_form(&w) >= -1e-12);
            assert!(ops.mass.quadratic_form(&w) > 0.0);
        }
        // Quasi-definite inertia: one negative pivot per pressure dof.
        assert_eq!(ops.factorization().negative_pivots(), n);
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let ops = setup(0.3, SolverConfig::default());
        let n = ops.num_vertices();
        let src = SourceSpec::new(TimeProfile::Constant(0.0), VectorField::zeros(n), &ops.omega).unwrap();
        let ts = forward_solve(&ops, &src, &VectorField::zeros(n)).unwrap();
        assert_eq!(ts.len(), 15);
        assert!(ts.velocity.iter().all(|u| u.max_abs() == 0.0));
        let z = adjoint_solve(&ops, &ts).unwrap();
        assert!(z.velocity.iter().all(|u| u.max_abs() == 0.0));
    }

    #[test]
    fn rejects_initial_value_violating_dirichlet() {
        let ops = setup(0.5, SolverConfig::default());
        let mut u0 = VectorField::zeros(ops.num_vertices());
        u0.set(0, [1.0, 0.0]);
        assert!(ops.march_forward(&u0, |_| None).is_err());
    }

    #[test]
    fn energy_decays_without_forcing() {
        let ops = setup(0.2, SolverConfig { dt: 0.05, ..SolverConfig::default() });
        let u0 = VectorField::from_fn(&ops.mesh, |x| {
            let s = x[0] * (3.0 - x[0]) * x[1] * (3.0 - x[1]);
            [s * libm::sin(x[1]), -s * libm::cos(x[0])]
        });
        let ts = ops.march_forward(&u0, |_| None).unwrap();
        let mut last = f64::INFINITY;
        for m in 0..ts.len() {
            let e = ops.velocity_norm_sq(&ts.velocity[m], &ts.bubbles[m]);
            assert!(e <= last * (1.0 + 1e-12), "energy grew at step {m}");
            last = e;
        }
        assert!(ts.max_penalty_residual <= 1e-12, "{}", ts.max_penalty_residual);
    }

    #[test]
    fn forward_is_linear() {
        let ops = setup(0.3, SolverConfig::default());
        let n = ops.num_vertices();
        let omega = ops.omega.clone();
        let field = |seed| {
            let r = pseudo_random(2 * n, seed);
            let mut f = VectorField(r);
            for v in 0..n {
                if !omega.vertices[v] {
                    f.set(v, [0.0, 0.0]);
                }
            }
            f
        };
        let interior_u0 = |seed| {
            let mut u = VectorField(pseudo_random(2 * n, seed));
            for v in 0..n {
                if ops.mesh.boundary[v] {
                    u.set(v, [0.0, 0.0]);
                }
            }
            u
        };
        let (f1, f2) = (field(1), field(2));
        let (u1, u2) = (interior_u0(3), interior_u0(4));
        let (a, b) = (0.7, -1.3);
        let solve = |f: &VectorField, u0: &VectorField| {
            forward_solve(&ops, &SourceSpec { sigma: TimeProfile::Exp, f: f.clone() }, u0).unwrap()
        };
        let s1 = solve(&f1, &u1);
        let s2 = solve(&f2, &u2);
        let mut fc = f1.scaled(a);
        fc.axpy(b, &f2);
        let mut uc = u1.scaled(a);
        uc.axpy(b, &u2);
        let sc = solve(&fc, &uc);
        for m in 0..sc.len() {
            let mut combo = s1.velocity[m].scaled(a);
            combo.axpy(b, &s2.velocity[m]);
            let diff = combo.sub(&sc.velocity[m]).max_abs();
            assert!(diff <= 1e-10 * sc.velocity[m].max_abs().max(1e-300), "step {m}: {diff}");
        }
    }

    #[test]
    fn adjoint_with_constant_load_is_time_reversed_forward() {
        let ops = setup(0.3, SolverConfig::default());
        let n = ops.num_vertices();
        let r = VectorField(pseudo_random(2 * n, 9));
        let residual = TimeSeries::velocity_only(ops.config.dt, vec![r.clone(); ops.num_steps() + 1]);
        let z = adjoint_solve(&ops, &residual).unwrap();
        let load = ops.observed_load(&r);
        let x = ops.march_forward(&VectorField::zeros(n), |_| Some(load.clone())).unwrap();
        let steps = ops.num_steps();
        for k in 0..=steps {
            let d = z.velocity[steps - k].sub(&x.velocity[k]).max_abs();
            assert!(d <= 1e-13 * x.velocity[steps.max(1)].max_abs(), "k = {k}: {d}");
        }
    }

    #[test]
    fn deterministic_solves() {
        let ops = setup(0.3, SolverConfig::default());
        let f = VectorField::from_fn_on_omega(&ops.mesh, &ops.omega, |x| [x[0], x[1]]);
        let src = SourceSpec { sigma: TimeProfile::Exp, f };
        let zero = VectorField::zeros(ops.num_vertices());
        assert_eq!(forward_solve(&ops, &src, &zero).unwrap(), forward_solve(&ops, &src, &zero).unwrap());
    }
}
