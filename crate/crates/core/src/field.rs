use alloc::vec;
use alloc::vec::Vec;

use crate::mesh::{Mesh, OmegaRegion};

/// Nodal two-component field, interleaved as `[x0, y0, x1, y1, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField(pub Vec<f64>);

impl VectorField {
    pub fn zeros(num_vertices: usize) -> Self {
        Self(vec![0.0; 2 * num_vertices])
    }

    pub fn from_fn(mesh: &Mesh, mut f: impl FnMut([f64; 2]) -> [f64; 2]) -> Self {
        Self(mesh.vertices.iter().flat_map(|&p| f(p)).collect())
    }

    /// Nodal interpolation on the vertices of tagged triangles, zero elsewhere.
    pub fn from_fn_on_omega(
        mesh: &Mesh,
        omega: &OmegaRegion,
        mut f: impl FnMut([f64; 2]) -> [f64; 2],
    ) -> Self {
        let mut out = Self::zeros(mesh.num_vertices());
        for (v, &p) in mesh.vertices.iter().enumerate() {
            if omega.vertices[v] {
                out.set(v, f(p));
            }
        }
        out
    }

    pub fn num_vertices(&self) -> usize {
        self.0.len() / 2
    }

    pub fn get(&self, v: usize) -> [f64; 2] {
        [self.0[2 * v], self.0[2 * v + 1]]
    }

    pub fn set(&mut self, v: usize, value: [f64; 2]) {
        self.0[2 * v] = value[0];
        self.0[2 * v + 1] = value[1];
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self(self.0.iter().map(|x| a * x).collect())
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &VectorField) {
        for (x, y) in self.0.iter_mut().zip(&other.0) {
            *x += a * y;
        }
    }

    pub fn sub(&self, other: &VectorField) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// True if every vertex outside `omega` carries zero.
    pub fn supported_in(&self, omega: &OmegaRegion) -> bool {
        (0..self.num_vertices()).all(|v| omega.vertices[v] || self.get(v) == [0.0, 0.0])
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        self.0.iter().skip(c).step_by(2).copied().collect()
    }
}

/// Nodal scalar field (P1 pressure).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField(pub Vec<f64>);

impl ScalarField {
    pub fn zeros(num_vertices: usize) -> Self {
        Self(vec![0.0; num_vertices])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}
