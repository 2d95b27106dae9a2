//! Per-element C1 virtual element machinery.
//!
//! Each element carries 3 degrees of freedom per vertex: the function value
//! and the two gradient components, the latter scaled by a per-vertex
//! length `h_v` for conditioning. Boundary traces are cubic Hermite in the
//! tangential direction and linear in the normal component, so the vertex
//! data determines the trace of both the function and its gradient on the
//! whole element boundary. From those traces three projections onto
//! quadratic polynomials are computable:
//!
//! * `proj_h2` — orthogonal in the Hessian-energy product, with the
//!   rank-3 kernel fixed by vertex-average conditions;
//! * `proj_l2` — the L2 projection, equal to `proj_h2` on the enhanced
//!   space (the defining constraint of the space makes them coincide);
//! * `proj_h1` — orthogonal in the gradient product, mean-value fixed.
//!
//! The discrete local bilinear forms combine the polynomial part with a
//! Euclidean stabilization on the degree-of-freedom residual; the scaled
//! gradient entries make that product exactly the vertex stabilization
//! term of the scheme.

use nalgebra::{DMatrix, DVector, Matrix2, Point2, Vector2};

use crate::mesh::{ElementGeometry, GeometryError};
use crate::polybasis::{
    gauss_legendre_unit, monomial_moments, p2_mass_matrix, MomentTable, P2Matrix,
    ScaledMonomialBasis, P2_DIM, P2_EXPONENTS,
};

/// Degrees of freedom carried by each mesh vertex (value, two scaled
/// gradient components).
pub const DOFS_PER_VERTEX: usize = 3;

/// Number of boundary Gauss points; exact up to degree 5, which covers the
/// worst trace integrand (cubic times quadratic edge restriction).
pub const EDGE_GAUSS_POINTS: usize = 3;

/// Degree-of-freedom layout of one element: loop-order vertex scales plus
/// optional per-vertex gradient frames.
///
/// A frame rotates the two gradient dofs of a vertex into a (tangent,
/// normal) basis; boundary vertices use it so the essential condition
/// "normal derivative zero" becomes fixing a single dof. Frames are
/// orthonormal, so the Euclidean stabilization product is unchanged.
#[derive(Debug, Clone)]
pub struct LocalDofLayout {
    /// Per-vertex length scale `h_v` applied to the gradient entries, in
    /// loop order.
    pub vertex_scales: Vec<f64>,
    /// Per-vertex gradient frame, columns (first axis, second axis);
    /// `None` is the Cartesian frame.
    pub frames: Vec<Option<Matrix2<f64>>>,
}

impl LocalDofLayout {
    pub fn uniform(n_vertices: usize, scale: f64) -> Self {
        assert!(scale > 0.0);
        Self {
            vertex_scales: vec![scale; n_vertices],
            frames: vec![None; n_vertices],
        }
    }

    #[inline]
    pub fn n_vertices(&self) -> usize {
        self.vertex_scales.len()
    }

    #[inline]
    pub fn n_dofs(&self) -> usize {
        DOFS_PER_VERTEX * self.vertex_scales.len()
    }

    /// Stored gradient dofs of a physical gradient at vertex `v`.
    #[inline]
    pub fn store_gradient(&self, v: usize, gradient: Vector2<f64>) -> (f64, f64) {
        let h = self.vertex_scales[v];
        match &self.frames[v] {
            None => (h * gradient.x, h * gradient.y),
            Some(q) => (h * gradient.dot(&q.column(0)), h * gradient.dot(&q.column(1))),
        }
    }

    /// Physical gradient from the stored gradient dofs of vertex `v`.
    #[inline]
    pub fn restore_gradient(&self, v: usize, d1: f64, d2: f64) -> Vector2<f64> {
        let h = self.vertex_scales[v];
        match &self.frames[v] {
            None => Vector2::new(d1 / h, d2 / h),
            Some(q) => (q.column(0) * d1 + q.column(1) * d2) / h,
        }
    }
}

/// Raw (unscaled) data of one vertex: value and physical gradient.
#[derive(Debug, Clone, Copy)]
pub struct VertexData {
    pub value: f64,
    pub gradient: Vector2<f64>,
}

/// Cubic Hermite basis on [0, 1] and its derivative.
#[inline]
fn hermite(s: f64) -> [f64; 4] {
    [
        2.0 * s * s * s - 3.0 * s * s + 1.0,
        s * s * s - 2.0 * s * s + s,
        3.0 * s * s - 2.0 * s * s * s,
        s * s * s - s * s,
    ]
}

#[inline]
fn hermite_deriv(s: f64) -> [f64; 4] {
    [
        6.0 * s * s - 6.0 * s,
        3.0 * s * s - 4.0 * s + 1.0,
        6.0 * s - 6.0 * s * s,
        3.0 * s * s - 2.0 * s,
    ]
}

/// Trace of a virtual function at parameter `s` of the edge `pa -> pb`.
///
/// The value is the cubic Hermite interpolant of the endpoint values and
/// tangential derivatives; the normal derivative interpolates linearly; the
/// gradient is reassembled from the (tangent, normal) frame.
pub fn edge_trace(
    a: &VertexData,
    b: &VertexData,
    pa: Point2<f64>,
    pb: Point2<f64>,
    s: f64,
) -> (f64, Vector2<f64>) {
    let d = pb - pa;
    let len = d.norm();
    let t = d / len;
    let n = Vector2::new(t.y, -t.x);
    let da = len * a.gradient.dot(&t);
    let db = len * b.gradient.dot(&t);
    let h = hermite(s);
    let value = h[0] * a.value + h[1] * da + h[2] * b.value + h[3] * db;
    let hd = hermite_deriv(s);
    let tangential = (hd[0] * a.value + hd[1] * da + hd[2] * b.value + hd[3] * db) / len;
    let normal = (1.0 - s) * a.gradient.dot(&n) + s * b.gradient.dot(&n);
    (value, t * tangential + n * normal)
}

/// Coefficients of the trace value and gradient at parameter `s`, as linear
/// functionals of the six raw endpoint dofs, ordered
/// `(v_a, gx_a, gy_a, v_b, gx_b, gy_b)`.
#[inline]
fn edge_trace_coefficients(
    pa: Point2<f64>,
    pb: Point2<f64>,
    s: f64,
) -> ([f64; 6], [[f64; 6]; 2]) {
    let d = pb - pa;
    let len = d.norm();
    let t = d / len;
    let n = Vector2::new(t.y, -t.x);
    let h = hermite(s);
    let hd = hermite_deriv(s);
    let value = [
        h[0],
        h[1] * len * t.x,
        h[1] * len * t.y,
        h[2],
        h[3] * len * t.x,
        h[3] * len * t.y,
    ];
    let mut grad = [[0.0; 6]; 2];
    // tangential part: t * (dtau/ds) / len; normal part: n * linear interp
    for (k, coeff) in [(0usize, hd[0] / len), (3usize, hd[2] / len)] {
        grad[0][k] = t.x * coeff;
        grad[1][k] = t.y * coeff;
    }
    for (k, hderiv, lin) in [(1usize, hd[1], 1.0 - s), (4usize, hd[3], s)] {
        // gradient dof (gx, gy) contributes through g.t and g.n
        for (row, tc, nc) in [(0usize, t.x, n.x), (1usize, t.y, n.y)] {
            grad[row][k] = tc * hderiv * t.x + nc * lin * n.x;
            grad[row][k + 1] = tc * hderiv * t.y + nc * lin * n.y;
        }
    }
    (value, grad)
}

/// Matrix of the dof functionals applied to the monomial basis,
/// `D[i][a] = dof_i(m_a)`, with the gradient rows carrying the `h_v` scale.
pub fn dof_matrix(
    vertices: &[Point2<f64>],
    layout: &LocalDofLayout,
    basis: &ScaledMonomialBasis,
) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(layout.n_dofs(), P2_DIM);
    for (v, &p) in vertices.iter().enumerate() {
        let vals = basis.eval(p);
        let grads = basis.grad(p);
        for a in 0..P2_DIM {
            let (d1, d2) = layout.store_gradient(v, grads[a]);
            d[(DOFS_PER_VERTEX * v, a)] = vals[a];
            d[(DOFS_PER_VERTEX * v + 1, a)] = d1;
            d[(DOFS_PER_VERTEX * v + 2, a)] = d2;
        }
    }
    d
}

/// Scatters the six raw-dof coefficients of edge `(va, vb)` into row `r`
/// of a local-dof-sized matrix, converting raw gradients to scaled dofs in
/// the vertex frames.
#[inline]
fn scatter_edge_row(
    b: &mut DMatrix<f64>,
    r: usize,
    coeffs: &[f64; 6],
    weight: f64,
    va: usize,
    vb: usize,
    layout: &LocalDofLayout,
) {
    for (v, k) in [(va, 0usize), (vb, 3usize)] {
        let h = layout.vertex_scales[v];
        b[(r, DOFS_PER_VERTEX * v)] += weight * coeffs[k];
        let c = Vector2::new(coeffs[k + 1], coeffs[k + 2]);
        let (c1, c2) = match &layout.frames[v] {
            None => (c.x, c.y),
            Some(q) => (c.dot(&q.column(0)), c.dot(&q.column(1))),
        };
        b[(r, DOFS_PER_VERTEX * v + 1)] += weight * c1 / h;
        b[(r, DOFS_PER_VERTEX * v + 2)] += weight * c2 / h;
    }
}

/// Gram matrix of the Hessian-energy product on the monomial basis;
/// Hessians of quadratics are constant, so entries are closed-form.
fn hessian_gram(geom: &ElementGeometry, basis: &ScaledMonomialBasis) -> P2Matrix {
    let mut g = P2Matrix::zeros();
    for a in 3..P2_DIM {
        for b in 3..P2_DIM {
            let ha: Matrix2<f64> = basis.hessian(a);
            let hb: Matrix2<f64> = basis.hessian(b);
            g[(a, b)] = geom.area * ha.component_mul(&hb).sum();
        }
    }
    g
}

/// Gram matrix of the gradient product on the monomial basis, exact via the
/// moment table.
fn gradient_gram(moments: &MomentTable, basis: &ScaledMonomialBasis) -> P2Matrix {
    let inv_h2 = 1.0 / (basis.diameter * basis.diameter);
    let mut g = P2Matrix::zeros();
    for a in 0..P2_DIM {
        let (pa, qa) = P2_EXPONENTS[a];
        for b in 0..P2_DIM {
            let (pb, qb) = P2_EXPONENTS[b];
            let mut s = 0.0;
            if pa > 0 && pb > 0 {
                s += (pa * pb) as f64 * moments.get(pa + pb - 2, qa + qb);
            }
            if qa > 0 && qb > 0 {
                s += (qa * qb) as f64 * moments.get(pa + pb, qa + qb - 2);
            }
            g[(a, b)] = inv_h2 * s;
        }
    }
    g
}

/// Hessian-energy projector matrix (6 x N), solving the energy equations
/// for the quadratic part and vertex-average conditions for the linear
/// kernel. The two blocks combine into one square 6x6 system because the
/// energy equations for linear test polynomials are identically zero.
pub fn h2_projector_matrix(
    vertices: &[Point2<f64>],
    layout: &LocalDofLayout,
    geom: &ElementGeometry,
    basis: &ScaledMonomialBasis,
) -> Result<DMatrix<f64>, GeometryError> {
    let n = vertices.len();
    let ndofs = layout.n_dofs();
    let mut g = P2Matrix::zeros();
    let mut b = DMatrix::zeros(P2_DIM, ndofs);

    // vertex-average rows for the P1 kernel
    for q in 0..3 {
        for (v, &p) in vertices.iter().enumerate() {
            let m = basis.eval(p);
            for a in 0..P2_DIM {
                g[(q, a)] += m[q] * m[a];
            }
            b[(q, DOFS_PER_VERTEX * v)] += m[q];
        }
    }

    // energy rows: boundary integral of (hess(m_b) n) . grad(trace)
    let hessians: Vec<Matrix2<f64>> = (3..P2_DIM).map(|a| basis.hessian(a)).collect();
    for beta in 3..P2_DIM {
        for a in 3..P2_DIM {
            g[(beta, a)] =
                geom.area * hessians[beta - 3].component_mul(&basis.hessian(a)).sum();
        }
    }
    let rule = gauss_legendre_unit(EDGE_GAUSS_POINTS);
    for e in 0..n {
        let (va, vb) = (e, (e + 1) % n);
        let (pa, pb) = (vertices[va], vertices[vb]);
        let edge = &geom.edges[e];
        for &(s, w) in &rule {
            let (_, grad) = edge_trace_coefficients(pa, pb, s);
            let ds = w * edge.length;
            for beta in 3..P2_DIM {
                let flux = hessians[beta - 3] * edge.normal;
                let mut coeffs = [0.0; 6];
                for (j, c) in coeffs.iter_mut().enumerate() {
                    *c = flux.x * grad[0][j] + flux.y * grad[1][j];
                }
                scatter_edge_row(&mut b, beta, &coeffs, ds, va, vb, layout);
            }
        }
    }

    solve_projector(g, b)
}

/// L2 projector matrix: identical to the energy projector on the enhanced
/// space, where the defining constraint equates the two projections.
pub fn l2_projector_matrix(h2: &DMatrix<f64>) -> DMatrix<f64> {
    h2.clone()
}

/// Gradient projector matrix (6 x N). The right side only needs boundary
/// value traces and the element integral of the function, which the L2
/// projector supplies; the constant kernel is fixed by matching means.
pub fn h1_projector_matrix(
    l2: &DMatrix<f64>,
    vertices: &[Point2<f64>],
    layout: &LocalDofLayout,
    geom: &ElementGeometry,
    basis: &ScaledMonomialBasis,
    moments: &MomentTable,
) -> Result<DMatrix<f64>, GeometryError> {
    let n = vertices.len();
    let ndofs = layout.n_dofs();
    let mut g = gradient_gram(moments, basis);
    let mut b = DMatrix::zeros(P2_DIM, ndofs);

    // element integral of the function through the L2 projection
    let mom = moments.basis_integrals();
    let mut cell_integral = vec![0.0; ndofs];
    for i in 0..ndofs {
        for a in 0..P2_DIM {
            cell_integral[i] += mom[a] * l2[(a, i)];
        }
    }

    // mean-value row replaces the zero row of the constant test function
    for a in 0..P2_DIM {
        g[(0, a)] = mom[a];
    }
    for i in 0..ndofs {
        b[(0, i)] = cell_integral[i];
    }

    let rule = gauss_legendre_unit(EDGE_GAUSS_POINTS);
    for beta in 1..P2_DIM {
        let lap = basis.laplacian(beta);
        if lap != 0.0 {
            for i in 0..ndofs {
                b[(beta, i)] -= lap * cell_integral[i];
            }
        }
    }
    for e in 0..n {
        let (va, vb) = (e, (e + 1) % n);
        let (pa, pb) = (vertices[va], vertices[vb]);
        let edge = &geom.edges[e];
        for &(s, w) in &rule {
            let p = pa + (pb - pa) * s;
            let (value, _) = edge_trace_coefficients(pa, pb, s);
            let grads = basis.grad(p);
            let ds = w * edge.length;
            for beta in 1..P2_DIM {
                let dn = grads[beta].dot(&edge.normal);
                scatter_edge_row(&mut b, beta, &value, ds * dn, va, vb, layout);
            }
        }
    }

    solve_projector(g, b)
}

fn solve_projector(g: P2Matrix, b: DMatrix<f64>) -> Result<DMatrix<f64>, GeometryError> {
    let lu = g.lu();
    let mut out = b;
    if !lu.solve_mut(&mut out) {
        return Err(GeometryError::DegenerateElement);
    }
    Ok(out)
}

/// The three discrete local form matrices.
pub struct LocalForms {
    /// Hessian-energy form; rank `N - 3`.
    pub h2: DMatrix<f64>,
    /// Gradient form; rank `N - 1`.
    pub h1: DMatrix<f64>,
    /// L2 form; positive definite.
    pub l2: DMatrix<f64>,
}

/// Assembles the discrete local forms from the projectors: the polynomial
/// consistency part plus the scaled Euclidean stabilization of the dof
/// residual `I - D P`.
pub fn local_forms(
    dof: &DMatrix<f64>,
    proj_h2: &DMatrix<f64>,
    proj_h1: &DMatrix<f64>,
    proj_l2: &DMatrix<f64>,
    geom: &ElementGeometry,
    basis: &ScaledMonomialBasis,
    moments: &MomentTable,
    mass: &P2Matrix,
) -> LocalForms {
    let ndofs = dof.nrows();
    let eye = DMatrix::<f64>::identity(ndofs, ndofs);
    let h2inv = 1.0 / (geom.diameter * geom.diameter);

    let g_h2 = hessian_gram(geom, basis);
    let s_h2 = &eye - dof * proj_h2;
    let a_h2 = proj_h2.transpose() * g_h2 * proj_h2 + h2inv * s_h2.transpose() * &s_h2;

    let g_h1 = gradient_gram(moments, basis);
    let s_h1 = &eye - dof * proj_h1;
    let a_h1 = proj_h1.transpose() * g_h1 * proj_h1 + s_h1.transpose() * &s_h1;

    let s_l2 = &eye - dof * proj_l2;
    let a_l2 = proj_l2.transpose() * mass * proj_l2
        + (geom.diameter * geom.diameter) * s_l2.transpose() * &s_l2;

    LocalForms {
        h2: a_h2,
        h1: a_h1,
        l2: a_l2,
    }
}

/// Everything the assembly needs from one element.
pub struct ElementOperators {
    pub geom: ElementGeometry,
    pub basis: ScaledMonomialBasis,
    pub layout: LocalDofLayout,
    pub moments: MomentTable,
    /// Dof functionals of the monomials, N x 6.
    pub dof: DMatrix<f64>,
    pub proj_h2: DMatrix<f64>,
    pub proj_l2: DMatrix<f64>,
    pub proj_h1: DMatrix<f64>,
    /// Dof residual of the L2 projection, `I - D proj_l2`; kept for the
    /// sign-safe evaluation of the nonlinear average.
    pub l2_residual: DMatrix<f64>,
    /// Quadratic-basis L2 Gram matrix.
    pub poly_mass: P2Matrix,
    pub form_h2: DMatrix<f64>,
    pub form_h1: DMatrix<f64>,
    pub form_l2: DMatrix<f64>,
}

impl ElementOperators {
    pub fn build(
        geom: ElementGeometry,
        vertices: &[Point2<f64>],
        layout: LocalDofLayout,
    ) -> Result<Self, GeometryError> {
        assert_eq!(vertices.len(), layout.n_vertices());
        let basis = ScaledMonomialBasis::new(&geom);
        let moments = monomial_moments(&geom, vertices, 4);
        let poly_mass = p2_mass_matrix(&moments)?;
        let dof = dof_matrix(vertices, &layout, &basis);
        let proj_h2 = h2_projector_matrix(vertices, &layout, &geom, &basis)?;
        let proj_l2 = l2_projector_matrix(&proj_h2);
        let proj_h1 = h1_projector_matrix(&proj_l2, vertices, &layout, &geom, &basis, &moments)?;
        let forms = local_forms(
            &dof, &proj_h2, &proj_h1, &proj_l2, &geom, &basis, &moments, &poly_mass,
        );
        let eye = DMatrix::<f64>::identity(dof.nrows(), dof.nrows());
        let l2_residual = &eye - &dof * &proj_l2;
        Ok(Self {
            geom,
            basis,
            layout,
            moments,
            dof,
            proj_h2,
            proj_l2,
            proj_h1,
            l2_residual,
            poly_mass,
            form_h2: forms.h2,
            form_h1: forms.h1,
            form_l2: forms.l2,
        })
    }

    #[inline]
    pub fn n_dofs(&self) -> usize {
        self.layout.n_dofs()
    }

    /// Element average of the squared function in the discrete L2 form,
    /// shifted by the double-well curvature: `3 |E|^{-1} (z, z)_h - 1`.
    ///
    /// Evaluated through the factored form (projection Gram product plus a
    /// sum of squares), so the result is never below -1.
    pub fn curvature_average(&self, z: &DVector<f64>) -> f64 {
        let s = &self.proj_l2 * z;
        let r = &self.l2_residual * z;
        let h2 = self.geom.diameter * self.geom.diameter;
        let q = s.dot(&(self.poly_mass * &s)) + h2 * r.norm_squared();
        3.0 * q / self.geom.area - 1.0
    }

    /// Nonlinear residual and Jacobian contributions at local state `z`.
    ///
    /// The residual is `c K z` with `c` the curvature average and `K` the
    /// discrete gradient form; the Jacobian adds the unsymmetric rank-one
    /// coupling through the state dependence of `c`.
    pub fn nonlinear_local(&self, z: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let c = self.curvature_average(z);
        let kz = &self.form_h1 * z;
        let mz = &self.form_l2 * z;
        let residual = &kz * c;
        let jacobian = c * &self.form_h1 + (6.0 / self.geom.area) * &kz * mz.transpose();
        (c, residual, jacobian)
    }
}
