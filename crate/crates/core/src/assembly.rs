//! Global degree-of-freedom management, boundary constraints and sparse
//! assembly.
//!
//! Global dofs are numbered vertex-major (3 per vertex: value, then the two
//! gradient components). At boundary vertices the gradient pair is stored
//! in a (tangent, normal) frame so the zero-normal-derivative condition
//! fixes a single dof; at corners both gradient dofs are fixed. Constrained
//! matrices keep an identity row/column on fixed dofs and states keep those
//! entries at exactly zero.
//!
//! Element contributions are computed independently and merged in element
//! order, so assembled values do not depend on thread scheduling.

use nalgebra::{DMatrix, DVector, Matrix2, Point2, Vector2};
use rayon::prelude::*;

use crate::localspace::{ElementOperators, LocalDofLayout, DOFS_PER_VERTEX};
use crate::mesh::{GeometryError, PolygonalMesh};
use crate::polybasis::{polygon_quadrature, P2_DIM};

/// Angle below which adjacent boundary normals are considered parallel.
pub const DEFAULT_CORNER_ANGLE_TOL: f64 = 1e-8;

/// Quadrature degree for smooth (non-polynomial) element integrands: loads,
/// error norms, potential energies.
pub const SMOOTH_QUADRATURE_DEGREE: usize = 8;

/// Global numbering and per-vertex dof scales.
#[derive(Debug, Clone)]
pub struct DofMap {
    n_vertices: usize,
    /// `h_v`: maximum diameter among the elements sharing the vertex.
    vertex_scale: Vec<f64>,
}

impl DofMap {
    pub fn build(mesh: &PolygonalMesh) -> Self {
        let diameters: Vec<f64> = (0..mesh.n_cells())
            .map(|c| mesh.element_geometry(c).diameter)
            .collect();
        let vertex_scale = (0..mesh.n_vertices())
            .map(|v| {
                mesh.cells_of_vertex(v)
                    .iter()
                    .map(|&c| diameters[c])
                    .fold(0.0, f64::max)
            })
            .collect();
        Self {
            n_vertices: mesh.n_vertices(),
            vertex_scale,
        }
    }

    #[inline]
    pub fn n_dofs(&self) -> usize {
        DOFS_PER_VERTEX * self.n_vertices
    }

    #[inline]
    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    /// Global index of component `comp` (0 value, 1/2 gradient) at `vertex`.
    #[inline]
    pub fn index(&self, vertex: usize, comp: usize) -> usize {
        debug_assert!(comp < DOFS_PER_VERTEX);
        DOFS_PER_VERTEX * vertex + comp
    }

    #[inline]
    pub fn scale(&self, vertex: usize) -> f64 {
        self.vertex_scale[vertex]
    }
}

/// Essential boundary constraints realizing the zero-normal-derivative
/// space.
#[derive(Debug, Clone)]
pub struct Constraints {
    /// Per-vertex gradient frame, columns (tangent, normal); `None` keeps
    /// the Cartesian frame.
    pub frames: Vec<Option<Matrix2<f64>>>,
    /// Per-dof fixed flag; fixed dofs are pinned to zero.
    pub fixed: Vec<bool>,
    pub n_fixed: usize,
}

impl Constraints {
    /// No constraints (whole-space assembly, used by tests).
    pub fn none(dofmap: &DofMap) -> Self {
        Self {
            frames: vec![None; dofmap.n_vertices()],
            fixed: vec![false; dofmap.n_dofs()],
            n_fixed: 0,
        }
    }
}

/// Builds the constraint set: one fixed dof per smooth boundary vertex
/// (the normal gradient component in the rotated frame), two per corner.
pub fn build_constraints(
    mesh: &PolygonalMesh,
    dofmap: &DofMap,
    corner_angle_tol: f64,
) -> Constraints {
    let mut frames = vec![None; mesh.n_vertices()];
    let mut fixed = vec![false; dofmap.n_dofs()];
    let mut n_fixed = 0;
    for v in 0..mesh.n_vertices() {
        let normals = mesh.boundary_normals(v);
        if normals.is_empty() {
            continue;
        }
        let mut max_angle: f64 = 0.0;
        for i in 0..normals.len() {
            for j in i + 1..normals.len() {
                let c = normals[i].dot(&normals[j]).clamp(-1.0, 1.0);
                max_angle = max_angle.max(c.acos());
            }
        }
        if max_angle > corner_angle_tol {
            // distinct normals force the whole gradient to zero
            fixed[dofmap.index(v, 1)] = true;
            fixed[dofmap.index(v, 2)] = true;
            n_fixed += 2;
        } else {
            let mut n: Vector2<f64> = normals.iter().sum();
            n /= n.norm();
            let t = Vector2::new(-n.y, n.x);
            frames[v] = Some(Matrix2::from_columns(&[t, n]));
            fixed[dofmap.index(v, 2)] = true;
            n_fixed += 1;
        }
    }
    Constraints {
        frames,
        fixed,
        n_fixed,
    }
}

/// Square sparse matrix in compressed-row form with sorted column indices.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros_with_pattern(n: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>) -> Self {
        let nnz = *row_ptr.last().unwrap();
        assert_eq!(nnz, col_idx.len());
        Self {
            n,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Value index of entry `(i, j)`; the pattern must contain it.
    #[inline]
    pub fn position(&self, i: usize, j: usize) -> usize {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        let offset = self.col_idx[range.clone()]
            .binary_search(&j)
            .expect("entry outside the sparsity pattern");
        range.start + offset
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(off) => self.values[range.start + off],
            Err(_) => 0.0,
        }
    }

    /// `y += scale * A x`.
    pub fn matvec_add(&self, scale: f64, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] += scale * acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.col_idx[k])] = self.values[k];
            }
        }
        m
    }
}

/// Constant global matrices of the scheme.
pub struct GlobalSystem {
    /// L2 form matrix, constrained; symmetric positive definite.
    pub mass: CsrMatrix,
    /// Hessian-energy form matrix, constrained; symmetric positive
    /// semidefinite.
    pub hessian: CsrMatrix,
}

enum FormKind {
    H2,
    L2,
}

/// Builds per-element operators and the assembled constant matrices, and
/// provides residual/Jacobian/load assembly for the time stepper.
pub struct SystemAssembler {
    pub dofmap: DofMap,
    pub constraints: Constraints,
    pub operators: Vec<ElementOperators>,
    pub system: GlobalSystem,
    /// Per-element global dof indices in local order.
    gather: Vec<Vec<usize>>,
    /// Per-element map from local (i, j) to a CSR value index.
    scatter: Vec<Vec<usize>>,
    /// Per-element fixed flags in local order.
    local_fixed: Vec<Vec<bool>>,
    /// Positions of the diagonal entries of fixed dofs.
    fixed_diagonal: Vec<usize>,
    /// Cell vertex positions, cached for quadrature-based assembly.
    cell_points: Vec<Vec<Point2<f64>>>,
}

impl SystemAssembler {
    pub fn new(mesh: &PolygonalMesh, corner_angle_tol: f64) -> Result<Self, GeometryError> {
        let dofmap = DofMap::build(mesh);
        let constraints = build_constraints(mesh, &dofmap, corner_angle_tol);
        Self::with_constraints(mesh, dofmap, constraints)
    }

    /// Assembly with an explicit constraint set (use [`Constraints::none`]
    /// for whole-space tests).
    pub fn with_constraints(
        mesh: &PolygonalMesh,
        dofmap: DofMap,
        constraints: Constraints,
    ) -> Result<Self, GeometryError> {
        let cell_points: Vec<Vec<Point2<f64>>> =
            (0..mesh.n_cells()).map(|c| mesh.cell_vertices(c)).collect();

        let operators: Vec<ElementOperators> = (0..mesh.n_cells())
            .into_par_iter()
            .map(|c| {
                let cell = mesh.cell(c);
                let layout = LocalDofLayout {
                    vertex_scales: cell.iter().map(|&v| dofmap.scale(v)).collect(),
                    frames: cell.iter().map(|&v| constraints.frames[v]).collect(),
                };
                ElementOperators::build(mesh.element_geometry(c), &cell_points[c], layout)
            })
            .collect::<Result<_, _>>()?;

        let gather: Vec<Vec<usize>> = (0..mesh.n_cells())
            .map(|c| {
                let mut g = Vec::with_capacity(DOFS_PER_VERTEX * mesh.cell(c).len());
                for &v in mesh.cell(c) {
                    for k in 0..DOFS_PER_VERTEX {
                        g.push(dofmap.index(v, k));
                    }
                }
                g
            })
            .collect();

        let (row_ptr, col_idx) = build_pattern(mesh, &dofmap);
        let empty = CsrMatrix::zeros_with_pattern(dofmap.n_dofs(), row_ptr, col_idx);

        let scatter: Vec<Vec<usize>> = gather
            .iter()
            .map(|g| {
                let nd = g.len();
                let mut map = Vec::with_capacity(nd * nd);
                for &gi in g {
                    for &gj in g {
                        map.push(empty.position(gi, gj));
                    }
                }
                map
            })
            .collect();

        let local_fixed: Vec<Vec<bool>> = gather
            .iter()
            .map(|g| g.iter().map(|&gi| constraints.fixed[gi]).collect())
            .collect();

        let fixed_diagonal: Vec<usize> = (0..dofmap.n_dofs())
            .filter(|&i| constraints.fixed[i])
            .map(|i| empty.position(i, i))
            .collect();

        let mut assembler = Self {
            dofmap,
            constraints,
            operators,
            system: GlobalSystem {
                mass: empty.clone(),
                hessian: empty,
            },
            gather,
            scatter,
            local_fixed,
            fixed_diagonal,
            cell_points,
        };
        assembler.system.mass = assembler.assemble_form(FormKind::L2, true);
        assembler.system.hessian = assembler.assemble_form(FormKind::H2, true);
        Ok(assembler)
    }

    #[inline]
    pub fn n_dofs(&self) -> usize {
        self.dofmap.n_dofs()
    }

    pub fn n_elements(&self) -> usize {
        self.operators.len()
    }

    fn assemble_form(&self, kind: FormKind, constrained: bool) -> CsrMatrix {
        let mut out = CsrMatrix::zeros_with_pattern(
            self.n_dofs(),
            self.system.mass.row_ptr.clone(),
            self.system.mass.col_idx.clone(),
        );
        for (e, ops) in self.operators.iter().enumerate() {
            let local = match kind {
                FormKind::H2 => &ops.form_h2,
                FormKind::L2 => &ops.form_l2,
            };
            let nd = ops.n_dofs();
            let fixed = &self.local_fixed[e];
            for i in 0..nd {
                if constrained && fixed[i] {
                    continue;
                }
                for j in 0..nd {
                    if constrained && fixed[j] {
                        continue;
                    }
                    out.values[self.scatter[e][i * nd + j]] += local[(i, j)];
                }
            }
        }
        if constrained {
            for &p in &self.fixed_diagonal {
                out.values[p] = 1.0;
            }
        }
        out
    }

    /// Unconstrained (whole-space) form matrices, for verification.
    pub fn raw_mass(&self) -> CsrMatrix {
        self.assemble_form(FormKind::L2, false)
    }

    pub fn raw_hessian(&self) -> CsrMatrix {
        self.assemble_form(FormKind::H2, false)
    }

    /// Local state of element `e` gathered from the global vector, with
    /// fixed entries masked to zero so element functionals never see values
    /// of eliminated dofs.
    pub fn gather_local(&self, e: usize, u: &[f64]) -> DVector<f64> {
        let fixed = &self.local_fixed[e];
        DVector::from_iterator(
            self.gather[e].len(),
            self.gather[e]
                .iter()
                .enumerate()
                .map(|(i, &g)| if fixed[i] { 0.0 } else { u[g] }),
        )
    }

    #[inline]
    fn gather_into(&self, e: usize, u: &[f64], out: &mut Vec<f64>) {
        let fixed = &self.local_fixed[e];
        out.clear();
        out.extend(
            self.gather[e]
                .iter()
                .enumerate()
                .map(|(i, &g)| if fixed[i] { 0.0 } else { u[g] }),
        );
    }

    /// Backward-Euler residual
    /// `F(u) = dt^{-1} M (u - u_prev) + gamma^2 A u + r(u) - load`.
    ///
    /// Constrained rows reduce to `(dt^{-1} + gamma^2) u_i`, which pins the
    /// fixed dofs to zero.
    pub fn residual(
        &self,
        u: &[f64],
        u_prev: &[f64],
        dt: f64,
        gamma: f64,
        load: Option<&[f64]>,
        out: &mut [f64],
    ) {
        let n = self.n_dofs();
        assert_eq!(u.len(), n);
        let mut diff = vec![0.0; n];
        for i in 0..n {
            diff[i] = u[i] - u_prev[i];
        }
        out.fill(0.0);
        self.system.mass.matvec_add(1.0 / dt, &diff, out);
        self.system.hessian.matvec_add(gamma * gamma, u, out);
        let mut z = Vec::new();
        let mut kz = Vec::new();
        for (e, ops) in self.operators.iter().enumerate() {
            self.gather_into(e, u, &mut z);
            let c = self.curvature_of(ops, &z);
            dense_gemv(&ops.form_h1, &z, &mut kz);
            let fixed = &self.local_fixed[e];
            for (i, &gi) in self.gather[e].iter().enumerate() {
                if !fixed[i] {
                    out[gi] += c * kz[i];
                }
            }
        }
        if let Some(l) = load {
            for i in 0..n {
                out[i] -= l[i];
            }
        }
    }

    /// Curvature average through the factored positive form, on a slice.
    fn curvature_of(&self, ops: &ElementOperators, z: &[f64]) -> f64 {
        let nd = z.len();
        let mut s = [0.0; P2_DIM];
        for a in 0..P2_DIM {
            let mut acc = 0.0;
            for i in 0..nd {
                acc += ops.proj_l2[(a, i)] * z[i];
            }
            s[a] = acc;
        }
        let mut poly = 0.0;
        for a in 0..P2_DIM {
            let mut acc = 0.0;
            for b in 0..P2_DIM {
                acc += ops.poly_mass[(a, b)] * s[b];
            }
            poly += s[a] * acc;
        }
        let mut resid_sq = 0.0;
        for i in 0..nd {
            let mut acc = 0.0;
            for (j, &zj) in z.iter().enumerate() {
                acc += ops.l2_residual[(i, j)] * zj;
            }
            resid_sq += acc * acc;
        }
        let h2 = ops.geom.diameter * ops.geom.diameter;
        3.0 * (poly + h2 * resid_sq) / ops.geom.area - 1.0
    }

    /// Backward-Euler Jacobian
    /// `J(u) = dt^{-1} M + gamma^2 A + dr(u)`, written into `out` (which
    /// must share the assembler's pattern).
    pub fn jacobian(&self, u: &[f64], dt: f64, gamma: f64, out: &mut CsrMatrix) {
        let inv_dt = 1.0 / dt;
        let g2 = gamma * gamma;
        for (k, v) in out.values.iter_mut().enumerate() {
            *v = inv_dt * self.system.mass.values[k] + g2 * self.system.hessian.values[k];
        }
        let mut z = Vec::new();
        let mut kz = Vec::new();
        let mut mz = Vec::new();
        for (e, ops) in self.operators.iter().enumerate() {
            self.gather_into(e, u, &mut z);
            let c = self.curvature_of(ops, &z);
            dense_gemv(&ops.form_h1, &z, &mut kz);
            dense_gemv(&ops.form_l2, &z, &mut mz);
            let rank1 = 6.0 / ops.geom.area;
            let nd = ops.n_dofs();
            let fixed = &self.local_fixed[e];
            let scatter = &self.scatter[e];
            for i in 0..nd {
                if fixed[i] {
                    continue;
                }
                let row = i * nd;
                for j in 0..nd {
                    if fixed[j] {
                        continue;
                    }
                    out.values[scatter[row + j]] +=
                        c * ops.form_h1[(i, j)] + rank1 * kz[i] * mz[j];
                }
            }
        }
    }

    /// Matrix pattern shared by the Jacobian.
    pub fn jacobian_template(&self) -> CsrMatrix {
        CsrMatrix::zeros_with_pattern(
            self.n_dofs(),
            self.system.mass.row_ptr.clone(),
            self.system.mass.col_idx.clone(),
        )
    }

    /// Load vector pairing `f` with the L2 projection of the test
    /// functions; element integrals by fan triangulation with a fixed
    /// degree rule. Constrained rows are zero.
    pub fn assemble_load<F: Fn(Point2<f64>) -> f64 + Sync>(&self, f: F, out: &mut [f64]) {
        out.fill(0.0);
        for (e, ops) in self.operators.iter().enumerate() {
            let pts = polygon_quadrature(&ops.geom, &self.cell_points[e], SMOOTH_QUADRATURE_DEGREE);
            let mut b = [0.0; P2_DIM];
            for &(p, w) in &pts {
                let fv = f(p);
                let m = ops.basis.eval(p);
                for a in 0..P2_DIM {
                    b[a] += w * fv * m[a];
                }
            }
            let fixed = &self.local_fixed[e];
            for (i, &gi) in self.gather[e].iter().enumerate() {
                if fixed[i] {
                    continue;
                }
                let mut acc = 0.0;
                for a in 0..P2_DIM {
                    acc += ops.proj_l2[(a, i)] * b[a];
                }
                out[gi] += acc;
            }
        }
    }

    /// Discrete mass `sum_E int_E (L2 projection of u)`.
    pub fn discrete_mass(&self, u: &[f64]) -> f64 {
        let mut total = 0.0;
        for (e, ops) in self.operators.iter().enumerate() {
            let z = self.gather_local(e, u);
            let s = &ops.proj_l2 * &z;
            let mom = ops.moments.basis_integrals();
            for a in 0..P2_DIM {
                total += mom[a] * s[a];
            }
        }
        total
    }

    /// Discrete free energy: double-well potential of the projected state
    /// plus the interface energy through the discrete Hessian form.
    pub fn discrete_energy(&self, u: &[f64], gamma: f64) -> f64 {
        let mut total = 0.0;
        for (e, ops) in self.operators.iter().enumerate() {
            let z = self.gather_local(e, u);
            let s = &ops.proj_l2 * &z;
            let coeffs: [f64; P2_DIM] = std::array::from_fn(|a| s[a]);
            let pts = polygon_quadrature(&ops.geom, &self.cell_points[e], SMOOTH_QUADRATURE_DEGREE);
            for &(p, w) in &pts {
                let v = ops.basis.eval_poly(&coeffs, p);
                let well = 1.0 - v * v;
                total += w * 0.25 * well * well;
            }
            total += 0.5 * gamma * gamma * z.dot(&(&ops.form_h2 * &z));
        }
        total
    }

    /// Physical gradient of the discrete solution at a vertex, restored
    /// from the stored (scaled, possibly rotated) gradient dofs.
    pub fn vertex_gradient(&self, u: &[f64], vertex: usize) -> Vector2<f64> {
        let h = self.dofmap.scale(vertex);
        let d1 = u[self.dofmap.index(vertex, 1)];
        let d2 = u[self.dofmap.index(vertex, 2)];
        match &self.constraints.frames[vertex] {
            None => Vector2::new(d1 / h, d2 / h),
            Some(q) => (q.column(0) * d1 + q.column(1) * d2) / h,
        }
    }

    /// Zeroes the fixed dofs of a state vector in place.
    pub fn enforce_constraints(&self, u: &mut [f64]) {
        for (i, &f) in self.constraints.fixed.iter().enumerate() {
            if f {
                u[i] = 0.0;
            }
        }
    }
}

/// `out = a z` for a small column-major dense matrix.
#[inline]
fn dense_gemv(a: &DMatrix<f64>, z: &[f64], out: &mut Vec<f64>) {
    let (nr, nc) = (a.nrows(), a.ncols());
    out.clear();
    out.resize(nr, 0.0);
    let data = a.as_slice();
    for (j, &zj) in z.iter().enumerate().take(nc) {
        if zj == 0.0 {
            continue;
        }
        let col = &data[j * nr..(j + 1) * nr];
        for i in 0..nr {
            out[i] += col[i] * zj;
        }
    }
}

/// Sparsity pattern of vertex-coupled dofs: row of dof (v, c) has entries
/// for all dofs of all vertices sharing a cell with v.
fn build_pattern(mesh: &PolygonalMesh, dofmap: &DofMap) -> (Vec<usize>, Vec<usize>) {
    let nv = mesh.n_vertices();
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for c in 0..mesh.n_cells() {
        let cell = mesh.cell(c);
        for &v in cell {
            for &w in cell {
                neighbors[v].push(w);
            }
        }
    }
    for list in &mut neighbors {
        list.sort_unstable();
        list.dedup();
    }
    let n = dofmap.n_dofs();
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let mut col_idx = Vec::new();
    for v in 0..nv {
        for _ in 0..DOFS_PER_VERTEX {
            for &w in &neighbors[v] {
                for k in 0..DOFS_PER_VERTEX {
                    col_idx.push(dofmap.index(w, k));
                }
            }
            row_ptr.push(col_idx.len());
        }
    }
    (row_ptr, col_idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_quad_mesh, generate_tri_mesh};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dof_counts() {
        let m = generate_quad_mesh(16);
        let d = DofMap::build(&m);
        assert_eq!(d.n_dofs(), 867);

        let m = generate_quad_mesh(1);
        let d = DofMap::build(&m);
        assert_eq!(d.n_dofs(), 12);
        for v in 0..4 {
            assert!((d.scale(v) - 2.0f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn dof_count_paper_scale() {
        let m = generate_quad_mesh(128);
        let d = DofMap::build(&m);
        assert_eq!(d.n_dofs(), 49923);
    }

    #[test]
    fn constraint_counts_on_quad_grid() {
        let m = generate_quad_mesh(16);
        let d = DofMap::build(&m);
        let c = build_constraints(&m, &d, DEFAULT_CORNER_ANGLE_TOL);
        // 4 corners with both gradient dofs fixed, 60 side vertices with one
        assert_eq!(c.n_fixed, 2 * 4 + 4 * 15);
        // a side (non-corner) vertex gets a rotated frame
        let side = 2; // (2/16, 0)
        assert!(c.frames[side].is_some());
        assert!(!c.fixed[3 * side + 1]);
        assert!(c.fixed[3 * side + 2]);
        // corners keep the Cartesian frame with both components fixed
        assert!(c.frames[0].is_none());
        assert!(c.fixed[1] && c.fixed[2]);
        // frame columns are orthonormal and the normal column matches the
        // boundary normal
        let q = c.frames[side].unwrap();
        assert!((q.column(0).norm() - 1.0).abs() < 1e-14);
        assert!(q.column(0).dot(&q.column(1)).abs() < 1e-14);
        assert!((q.column(1) - Vector2::new(0.0, -1.0)).norm() < 1e-14);
    }

    /// One-cell mesh whose loop order equals the vertex numbering, so the
    /// local-to-global dof map is the identity.
    fn identity_square() -> PolygonalMesh {
        PolygonalMesh::new(
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(1.0, 1.0),
                Point2::new(0.0, 1.0),
            ],
            vec![vec![0, 1, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn single_element_mass_matches_local_form() {
        let m = identity_square();
        let dofmap = DofMap::build(&m);
        let asm =
            SystemAssembler::with_constraints(&m, dofmap, Constraints::none(&DofMap::build(&m)))
                .unwrap();
        let dense = asm.system.mass.to_dense();
        let local = &asm.operators[0].form_l2;
        assert!((&dense - local).norm() <= 1e-14 * local.norm());
    }

    #[test]
    fn hessian_kernel_contains_linears_before_constraints() {
        let m = generate_quad_mesh(3);
        let dofmap = DofMap::build(&m);
        let asm = SystemAssembler::with_constraints(
            &m,
            DofMap::build(&m),
            Constraints::none(&dofmap),
        )
        .unwrap();
        let a = asm.raw_hessian();
        // dof vector of v(x, y) = x
        let mut u = vec![0.0; asm.n_dofs()];
        for v in 0..m.n_vertices() {
            u[3 * v] = m.vertex(v).x;
            u[3 * v + 1] = asm.dofmap.scale(v);
        }
        let mut au = vec![0.0; asm.n_dofs()];
        a.matvec_add(1.0, &u, &mut au);
        let norm_a: f64 = a.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        let resid: f64 = au.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(resid <= 1e-11 * norm_a, "residual {resid:.3e}");

        // kernel dimension exactly 3 (numerical rank test)
        let dense = a.to_dense();
        let svd = dense.svd(false, false);
        let smax = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > 1e-9 * smax)
            .count();
        assert_eq!(rank, asm.n_dofs() - 3);
    }

    #[test]
    fn constrained_mass_is_positive_definite() {
        let m = generate_quad_mesh(8);
        let asm = SystemAssembler::new(&m, DEFAULT_CORNER_ANGLE_TOL).unwrap();
        let dense = asm.system.mass.to_dense();
        assert!(dense.cholesky().is_some());
    }

    #[test]
    fn residual_is_zero_at_rest() {
        let m = generate_tri_mesh(3);
        let asm = SystemAssembler::new(&m, DEFAULT_CORNER_ANGLE_TOL).unwrap();
        let u = vec![0.0; asm.n_dofs()];
        let mut f = vec![0.0; asm.n_dofs()];
        asm.residual(&u, &u, 1e-3, 0.1, None, &mut f);
        // r(0) vanishes because the nonlinear prefactor multiplies K z = 0
        let norm: f64 = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert_eq!(norm, 0.0);
    }

    #[test]
    fn residual_annihilates_constant_test_direction() {
        // mass-conservation direction: the all-values-one vector
        let m = generate_quad_mesh(6);
        let asm = SystemAssembler::new(&m, DEFAULT_CORNER_ANGLE_TOL).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut u: Vec<f64> = (0..asm.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        asm.enforce_constraints(&mut u);
        let mut f = vec![0.0; asm.n_dofs()];
        // no time term (u_prev = u), no load: remaining terms are the
        // hessian form and the nonlinear gradient form
        asm.residual(&u, &u, 1.0, 0.3, None, &mut f);
        let mut ones = vec![0.0; asm.n_dofs()];
        for v in 0..m.n_vertices() {
            ones[3 * v] = 1.0;
        }
        let dot: f64 = f.iter().zip(&ones).map(|(a, b)| a * b).sum();
        let fnorm: f64 = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(dot.abs() <= 1e-12 * fnorm.max(1.0), "dot {dot:.3e}");
    }

    #[test]
    fn jacobian_matches_directional_finite_differences() {
        let m = generate_quad_mesh(4);
        let asm = SystemAssembler::new(&m, DEFAULT_CORNER_ANGLE_TOL).unwrap();
        let n = asm.n_dofs();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        asm.enforce_constraints(&mut u);
        let u_prev = vec![0.0; n];
        let (dt, gamma) = (1e-3, 0.05);
        let mut jac = asm.jacobian_template();
        asm.jacobian(&u, dt, gamma, &mut jac);
        for _ in 0..5 {
            let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let eps = 1e-6;
            let mut up = u.clone();
            let mut um = u.clone();
            for i in 0..n {
                up[i] += eps * dir[i];
                um[i] -= eps * dir[i];
            }
            let mut fp = vec![0.0; n];
            let mut fm = vec![0.0; n];
            asm.residual(&up, &u_prev, dt, gamma, None, &mut fp);
            asm.residual(&um, &u_prev, dt, gamma, None, &mut fm);
            let mut jd = vec![0.0; n];
            jac.matvec_add(1.0, &dir, &mut jd);
            let mut err: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for i in 0..n {
                let fd = (fp[i] - fm[i]) / (2.0 * eps);
                err += (jd[i] - fd) * (jd[i] - fd);
                scale += jd[i] * jd[i];
            }
            assert!(
                err.sqrt() <= 1e-6 * scale.sqrt(),
                "fd mismatch {:.3e}",
                err.sqrt() / scale.sqrt()
            );
        }
    }

    #[test]
    fn load_examples() {
        let m = generate_quad_mesh(3);
        let asm = SystemAssembler::new(&m, DEFAULT_CORNER_ANGLE_TOL).unwrap();
        let mut l = vec![0.0; asm.n_dofs()];
        asm.assemble_load(|_| 0.0, &mut l);
        assert!(l.iter().all(|&v| v == 0.0));

        // unit load pairs to the domain area along the constant direction
        asm.assemble_load(|_| 1.0, &mut l);
        let mut total = 0.0;
        for v in 0..m.n_vertices() {
            total += l[3 * v];
        }
        assert!((total - 1.0).abs() < 1e-10, "{total}");
    }

    #[test]
    fn load_of_polynomial_matches_projection_pairing() {
        // single element: f = m_(1,0) gives L = proj_l2^T H e_1
        let m = identity_square();
        let dofmap = DofMap::build(&m);
        let asm =
            SystemAssembler::with_constraints(&m, dofmap, Constraints::none(&DofMap::build(&m)))
                .unwrap();
        let ops = &asm.operators[0];
        let basis = ops.basis;
        let mut l = vec![0.0; asm.n_dofs()];
        asm.assemble_load(|p| basis.eval(p)[1], &mut l);
        let expected = ops.proj_l2.transpose() * ops.poly_mass.column(1);
        for i in 0..asm.n_dofs() {
            assert!((l[i] - expected[i]).abs() <= 1e-12 * (1.0 + expected[i].abs()));
        }
    }

    #[test]
    fn assembly_is_invariant_under_element_permutation_and_loop_rotation() {
        let base = generate_tri_mesh(3);
        let asm0 = SystemAssembler::new(&base, DEFAULT_CORNER_ANGLE_TOL).unwrap();

        // reverse the element list and rotate every vertex loop by one
        let cells: Vec<Vec<usize>> = base
            .cells()
            .iter()
            .rev()
            .map(|c| {
                let mut c = c.clone();
                c.rotate_left(1);
                c
            })
            .collect();
        let permuted = PolygonalMesh::new(base.vertices().to_vec(), cells).unwrap();
        let asm1 = SystemAssembler::new(&permuted, DEFAULT_CORNER_ANGLE_TOL).unwrap();

        for (a, b) in [
            (&asm0.system.mass, &asm1.system.mass),
            (&asm0.system.hessian, &asm1.system.hessian),
        ] {
            assert_eq!(a.col_idx, b.col_idx);
            let norm: f64 = a.values.iter().map(|v| v * v).sum::<f64>().sqrt();
            let diff: f64 = a
                .values
                .iter()
                .zip(&b.values)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            assert!(diff <= 1e-13 * norm, "diff {diff:.3e} vs norm {norm:.3e}");
        }
    }

    #[test]
    fn discrete_mass_of_constant_state() {
        let m = generate_quad_mesh(5);
        let asm = SystemAssembler::new(&m, DEFAULT_CORNER_ANGLE_TOL).unwrap();
        let mut u = vec![0.0; asm.n_dofs()];
        for v in 0..m.n_vertices() {
            u[3 * v] = 0.7;
        }
        assert!((asm.discrete_mass(&u) - 0.7).abs() < 1e-12);
        // energy of a uniform pure phase (+1) is zero
        let mut u1 = vec![0.0; asm.n_dofs()];
        for v in 0..m.n_vertices() {
            u1[3 * v] = 1.0;
        }
        assert!(asm.discrete_energy(&u1, 0.01).abs() < 1e-12);
    }
}

