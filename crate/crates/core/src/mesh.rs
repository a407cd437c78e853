//! Structured triangulations of rectangles and the source-support tags.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Axis-aligned closed box `[min.0, max.0] x [min.1, max.1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxRegion {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl BoxRegion {
    pub const fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Self { min, max }
    }

    /// The square `[lo, hi]^2`.
    pub const fn square(lo: f64, hi: f64) -> Self {
        Self::new([lo, lo], [hi, hi])
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> [f64; 2] {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
        ]
    }

    fn tol(&self) -> f64 {
        1e-9 * self.width().max(self.height())
    }

    /// Closed containment with a small relative slack for grid round-off.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let tol = self.tol();
        p[0] >= self.min[0] - tol
            && p[0] <= self.max[0] + tol
            && p[1] >= self.min[1] - tol
            && p[1] <= self.max[1] + tol
    }

    pub fn on_perimeter(&self, p: [f64; 2]) -> bool {
        let tol = self.tol();
        self.contains(p)
            && ((p[0] - self.min[0]).abs() <= tol
                || (p[0] - self.max[0]).abs() <= tol
                || (p[1] - self.min[1]).abs() <= tol
                || (p[1] - self.max[1]).abs() <= tol)
    }

    /// True if `self` lies in the open interior of `outer`.
    pub fn strictly_inside(&self, outer: &BoxRegion) -> bool {
        let tol = outer.tol();
        self.min[0] > outer.min[0] + tol
            && self.min[1] > outer.min[1] + tol
            && self.max[0] < outer.max[0] - tol
            && self.max[1] < outer.max[1] - tol
    }
}

/// Geometry of one triangle: area and the (constant) gradients of its
/// barycentric coordinates.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub area: f64,
    pub grads: [[f64; 2]; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary: Vec<bool>,
    pub h: f64,
    pub domain: BoxRegion,
}

impl Mesh {
    /// Builds a mesh from explicit connectivity; boundary flags come from
    /// the perimeter of `domain`.
    pub fn from_parts(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        domain: BoxRegion,
        h: f64,
    ) -> Result<Self> {
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
        }
        let boundary = vertices.iter().map(|&p| domain.on_perimeter(p)).collect();
        let mesh = Self { vertices, triangles, boundary, h, domain };
        for t in 0..mesh.triangles.len() {
            if !(mesh.signed_area(t) > 0.0) {
                return Err(Error::InvalidMesh(format!("triangle {t} has non-positive area")));
            }
        }
        Ok(mesh)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn element(&self, t: usize) -> ElementGeometry {
        let [p0, p1, p2] = self.triangles[t].map(|v| self.vertices[v]);
        let two_area = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let inv = 1.0 / two_area;
        ElementGeometry {
            area: 0.5 * two_area,
            grads: [
                [(p1[1] - p2[1]) * inv, (p2[0] - p1[0]) * inv],
                [(p2[1] - p0[1]) * inv, (p0[0] - p2[0]) * inv],
                [(p0[1] - p1[1]) * inv, (p1[0] - p0[0]) * inv],
            ],
        }
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.signed_area(t)).sum()
    }

    /// Maps barycentric coordinates of triangle `t` to a physical point.
    pub fn map_point(&self, t: usize, bary: [f64; 3]) -> [f64; 2] {
        let [p0, p1, p2] = self.triangles[t].map(|v| self.vertices[v]);
        [
            bary[0] * p0[0] + bary[1] * p1[0] + bary[2] * p2[0],
            bary[0] * p0[1] + bary[1] * p1[1] + bary[2] * p2[1],
        ]
    }
}

/// Uniform grid of `nx x ny` squares, `nx = round(width / h)`, each square
/// cut along its lower-left to upper-right diagonal.
pub fn build_rect_mesh(domain: BoxRegion, h: f64) -> Result<Mesh> {
    let (lx, ly) = (domain.width(), domain.height());
    if !(lx > 0.0 && ly > 0.0) || !lx.is_finite() || !ly.is_finite() {
        return Err(Error::InvalidMesh(format!("box sides must be positive, got {lx} x {ly}")));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidMesh(format!("h must be positive, got {h}")));
    }
    if h >= lx.min(ly) {
        return Err(Error::InvalidMesh(format!(
            "h = {h} must be smaller than the shortest side {}",
            lx.min(ly)
        )));
    }
    let nx = (libm::round(lx / h) as usize).max(1);
    let ny = (libm::round(ly / h) as usize).max(1);
    let (dx, dy) = (lx / nx as f64, ly / ny as f64);

    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    let mut boundary = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = if i == nx { domain.max[0] } else { domain.min[0] + i as f64 * dx };
            let y = if j == ny { domain.max[1] } else { domain.min[1] + j as f64 * dy };
            vertices.push([x, y]);
            boundary.push(i == 0 || j == 0 || i == nx || j == ny);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    Ok(Mesh { vertices, triangles, boundary, h, domain })
}

/// Source-support subdomain: triangle tags plus the vertices those
/// triangles touch.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaRegion {
    pub bbox: BoxRegion,
    /// `true` iff all three vertices lie in the closed box.
    pub triangles: Vec<bool>,
    /// `true` iff the vertex belongs to at least one tagged triangle.
    pub vertices: Vec<bool>,
}

impl OmegaRegion {
    pub fn tagged_area(&self, mesh: &Mesh) -> f64 {
        (0..mesh.num_triangles())
            .filter(|&t| self.triangles[t])
            .map(|t| mesh.signed_area(t))
            .sum()
    }

    pub fn num_tagged(&self) -> usize {
        self.triangles.iter().filter(|&&b| b).count()
    }
}

/// Tags the triangles lying in `omega_box`. The box must sit strictly
/// inside the mesh domain.
pub fn tag_omega(mesh: &Mesh, omega_box: BoxRegion) -> Result<OmegaRegion> {
    if !(omega_box.width() > 0.0 && omega_box.height() > 0.0) {
        return Err(Error::InvalidMesh("omega box must have positive sides".into()));
    }
    if !omega_box.strictly_inside(&mesh.domain) {
        return Err(Error::InvalidMesh(
            "omega box must lie strictly inside the computational domain".into(),
        ));
    }
    let triangles: Vec<bool> = mesh
        .triangles
        .iter()
        .map(|tri| tri.iter().all(|&v| omega_box.contains(mesh.vertices[v])))
        .collect();
    let mut vertices = alloc::vec![false; mesh.num_vertices()];
    for (tri, _) in mesh.triangles.iter().zip(&triangles).filter(|(_, &tag)| tag) {
        for &v in tri {
            vertices[v] = true;
        }
    }
    Ok(OmegaRegion { bbox: omega_box, triangles, vertices })
}

/// Velocity/pressure numbering. Velocity dofs are interleaved per vertex
/// (`2 * v + component`); the condensed linear system interleaves
/// `(u_x, u_y, p)` per vertex with Dirichlet velocity dofs removed.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub num_vertices: usize,
    pub dirichlet_mask: Vec<bool>,
    /// Position of each velocity dof in the condensed system.
    pub system_velocity: Vec<Option<usize>>,
    /// Position of each pressure dof in the condensed system.
    pub system_pressure: Vec<usize>,
    pub system_size: usize,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let n = mesh.num_vertices();
        let mut dirichlet_mask = Vec::with_capacity(2 * n);
        let mut system_velocity = Vec::with_capacity(2 * n);
        let mut system_pressure = Vec::with_capacity(n);
        let mut next = 0;
        for &on_boundary in &mesh.boundary {
            for _ in 0..2 {
                dirichlet_mask.push(on_boundary);
                if on_boundary {
                    system_velocity.push(None);
                } else {
                    system_velocity.push(Some(next));
                    next += 1;
                }
            }
            system_pressure.push(next);
            next += 1;
        }
        Self { num_vertices: n, dirichlet_mask, system_velocity, system_pressure, system_size: next }
    }

    pub fn velocity_dofs(&self) -> usize {
        2 * self.num_vertices
    }

    pub fn pressure_dofs(&self) -> usize {
        self.num_vertices
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn benchmark_box() -> BoxRegion {
        BoxRegion::square(0.0, 3.0)
    }

    #[test]
    fn coarse_mesh_counts() {
        let mesh = build_rect_mesh(benchmark_box(), 1.5).unwrap();
        assert_eq!(mesh.num_vertices(), 9);
        assert_eq!(mesh.num_triangles(), 8);
        assert_eq!(mesh.boundary.iter().filter(|&&b| b).count(), 8);
        assert!(!mesh.boundary[4]);
    }

    #[test]
    fn benchmark_mesh_counts_and_area() {
        let mesh = build_rect_mesh(benchmark_box(), 0.1).unwrap();
        assert_eq!(mesh.num_vertices(), 961);
        assert_eq!(mesh.num_triangles(), 1800);
        assert!((mesh.total_area() - 9.0).abs() <= 1e-12 * 9.0);
    }

    #[test]
    fn area_partition_for_several_h() {
        for h in [0.3, 0.1, 0.05] {
            let mesh = build_rect_mesh(benchmark_box(), h).unwrap();
            assert!((mesh.total_area() - 9.0).abs() <= 1e-12 * 9.0, "h = {h}");
            assert!((0..mesh.num_triangles()).all(|t| mesh.signed_area(t) > 0.0));
        }
    }

    #[test]
    fn boundary_flags_match_perimeter() {
        let mesh = build_rect_mesh(benchmark_box(), 0.3).unwrap();
        for (p, &b) in mesh.vertices.iter().zip(&mesh.boundary) {
            assert_eq!(b, mesh.domain.on_perimeter(*p));
        }
    }

    #[test]
    fn rejects_bad_h() {
        assert!(build_rect_mesh(benchmark_box(), 3.0).is_err());
        assert!(build_rect_mesh(benchmark_box(), 0.0).is_err());
        assert!(build_rect_mesh(BoxRegion::new([0.0, 0.0], [0.0, 1.0]), 0.1).is_err());
    }

    #[test]
    fn omega_tagged_area_matches_enumeration() {
        let mesh = build_rect_mesh(benchmark_box(), 0.1).unwrap();
        let omega = tag_omega(&mesh, BoxRegion::square(0.75, 2.25)).unwrap();
        // Direct enumeration: each triangle has area h^2 / 2.
        let count = omega.num_tagged();
        let enumerated = count as f64 * 0.5 * 0.01;
        assert!((omega.tagged_area(&mesh) - enumerated).abs() < 1e-12);
        let slack = 2.0 * 0.1 * 6.0;
        assert!((enumerated - 2.25).abs() <= slack);
        // Grid lines 0.8 .. 2.2: 14 x 14 squares.
        assert_eq!(count, 2 * 14 * 14);
        for (t, tri) in mesh.triangles.iter().enumerate() {
            if omega.triangles[t] {
                assert!(tri.iter().all(|&v| !mesh.boundary[v]));
            }
        }
    }

    #[test]
    fn omega_touching_boundary_is_rejected() {
        let mesh = build_rect_mesh(benchmark_box(), 0.5).unwrap();
        assert!(tag_omega(&mesh, benchmark_box()).is_err());
        assert!(tag_omega(&mesh, BoxRegion::new([0.0, 1.0], [2.0, 2.0])).is_err());
    }

    #[test]
    fn single_triangle_inside_omega() {
        let domain = BoxRegion::square(0.0, 1.0);
        let mesh = Mesh::from_parts(
            alloc::vec![[0.4, 0.4], [0.6, 0.4], [0.5, 0.6]],
            alloc::vec![[0, 1, 2]],
            domain,
            0.2,
        )
        .unwrap();
        let omega = tag_omega(&mesh, BoxRegion::square(0.3, 0.7)).unwrap();
        assert_eq!(omega.num_tagged(), 1);
    }

    #[test]
    fn clockwise_triangle_rejected() {
        let err = Mesh::from_parts(
            alloc::vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]],
            alloc::vec![[0, 1, 2]],
            BoxRegion::square(0.0, 1.0),
            1.0,
        );
        assert!(err.is_err());
    }

    #[test]
    fn dof_map_counts_and_mask() {
        let mesh = build_rect_mesh(benchmark_box(), 0.5).unwrap();
        let dofs = DofMap::new(&mesh);
        assert_eq!(dofs.velocity_dofs(), 2 * mesh.num_vertices());
        assert_eq!(dofs.pressure_dofs(), mesh.num_vertices());
        for v in 0..mesh.num_vertices() {
            assert_eq!(dofs.dirichlet_mask[2 * v], mesh.boundary[v]);
            assert_eq!(dofs.dirichlet_mask[2 * v + 1], mesh.boundary[v]);
            assert_eq!(dofs.system_velocity[2 * v].is_none(), mesh.boundary[v]);
        }
        let interior = mesh.boundary.iter().filter(|&&b| !b).count();
        assert_eq!(dofs.system_size, 2 * interior + mesh.num_vertices());
    }

    #[test]
    fn builds_are_deterministic() {
        let a = build_rect_mesh(benchmark_box(), 0.1).unwrap();
        let b = build_rect_mesh(benchmark_box(), 0.1).unwrap();
        assert_eq!(a, b);
        assert_eq!(DofMap::new(&a), DofMap::new(&b));
    }
}
