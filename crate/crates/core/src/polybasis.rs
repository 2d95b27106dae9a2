//! Scaled monomial bases on polygonal elements and exact polynomial
//! integration.
//!
//! Quadratic polynomials on an element `E` are represented in the scaled
//! monomial basis `m_a(x) = ((x - x_E)/h_E)^a`, with `x_E` the centroid and
//! `h_E` the diameter. Monomial moments over `E` are computed exactly by
//! reducing the area integral to edge line integrals (divergence theorem)
//! and integrating those with Gauss rules of sufficient order. Smooth
//! (non-polynomial) integrands are handled by fan triangulation of the
//! polygon with a fixed-degree triangle rule.

use nalgebra::{Matrix2, Point2, SMatrix, Vector2};

use crate::mesh::{ElementGeometry, GeometryError};

/// Number of members of the quadratic scaled monomial basis.
pub const P2_DIM: usize = 6;

/// Exponent pairs of the quadratic basis, total-degree graded.
pub const P2_EXPONENTS: [(usize, usize); P2_DIM] =
    [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)];

/// A 6x6 matrix in the quadratic monomial basis.
pub type P2Matrix = SMatrix<f64, P2_DIM, P2_DIM>;

/// Quadratic scaled monomial basis attached to one element.
#[derive(Debug, Clone, Copy)]
pub struct ScaledMonomialBasis {
    pub centroid: Point2<f64>,
    pub diameter: f64,
}

impl ScaledMonomialBasis {
    pub fn new(geom: &ElementGeometry) -> Self {
        Self {
            centroid: geom.centroid,
            diameter: geom.diameter,
        }
    }

    /// Scaled local coordinates of a physical point.
    #[inline]
    pub fn local(&self, p: Point2<f64>) -> Vector2<f64> {
        (p - self.centroid) / self.diameter
    }

    /// Values of all six monomials at `p`.
    #[inline]
    pub fn eval(&self, p: Point2<f64>) -> [f64; P2_DIM] {
        let q = self.local(p);
        [1.0, q.x, q.y, q.x * q.x, q.x * q.y, q.y * q.y]
    }

    /// Gradients of all six monomials at `p`.
    #[inline]
    pub fn grad(&self, p: Point2<f64>) -> [Vector2<f64>; P2_DIM] {
        let q = self.local(p);
        let h = self.diameter;
        [
            Vector2::zeros(),
            Vector2::new(1.0 / h, 0.0),
            Vector2::new(0.0, 1.0 / h),
            Vector2::new(2.0 * q.x / h, 0.0),
            Vector2::new(q.y / h, q.x / h),
            Vector2::new(0.0, 2.0 * q.y / h),
        ]
    }

    /// Hessian of monomial `alpha`; constant over the element.
    #[inline]
    pub fn hessian(&self, alpha: usize) -> Matrix2<f64> {
        let h2 = self.diameter * self.diameter;
        match alpha {
            3 => Matrix2::new(2.0 / h2, 0.0, 0.0, 0.0),
            4 => Matrix2::new(0.0, 1.0 / h2, 1.0 / h2, 0.0),
            5 => Matrix2::new(0.0, 0.0, 0.0, 2.0 / h2),
            _ => Matrix2::zeros(),
        }
    }

    /// Laplacian of monomial `alpha`; constant over the element.
    #[inline]
    pub fn laplacian(&self, alpha: usize) -> f64 {
        let h2 = self.diameter * self.diameter;
        match alpha {
            3 | 5 => 2.0 / h2,
            _ => 0.0,
        }
    }

    /// Value of `sum_a coeffs[a] m_a` at `p`.
    #[inline]
    pub fn eval_poly(&self, coeffs: &[f64; P2_DIM], p: Point2<f64>) -> f64 {
        let m = self.eval(p);
        (0..P2_DIM).map(|a| coeffs[a] * m[a]).sum()
    }

    /// Gradient of `sum_a coeffs[a] m_a` at `p`.
    #[inline]
    pub fn grad_poly(&self, coeffs: &[f64; P2_DIM], p: Point2<f64>) -> Vector2<f64> {
        let g = self.grad(p);
        let mut out = Vector2::zeros();
        for a in 0..P2_DIM {
            out += coeffs[a] * g[a];
        }
        out
    }

    /// Hessian of `sum_a coeffs[a] m_a`; constant over the element.
    #[inline]
    pub fn hessian_poly(&self, coeffs: &[f64; P2_DIM]) -> Matrix2<f64> {
        let mut out = Matrix2::zeros();
        for a in 3..P2_DIM {
            out += coeffs[a] * self.hessian(a);
        }
        out
    }
}

/// Exact integrals of scaled monomials over an element.
///
/// Entry `(a, b)` holds `int_E ((x-x_E)/h_E)^a ((y-y_E)/h_E)^b dx` for
/// `a + b <= max_degree`. Entry `(0, 0)` is the element area.
#[derive(Debug, Clone)]
pub struct MomentTable {
    max_degree: usize,
    // dense (max_degree+1)^2 storage, row a, column b
    entries: Vec<f64>,
}

impl MomentTable {
    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        debug_assert!(a + b <= self.max_degree);
        self.entries[a * (self.max_degree + 1) + b]
    }

    #[inline]
    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// Integral of the product `m_alpha * m_beta` (basis indices).
    #[inline]
    pub fn product(&self, alpha: usize, beta: usize) -> f64 {
        let (a1, b1) = P2_EXPONENTS[alpha];
        let (a2, b2) = P2_EXPONENTS[beta];
        self.get(a1 + a2, b1 + b2)
    }

    /// Integrals of the six basis monomials as a vector.
    pub fn basis_integrals(&self) -> [f64; P2_DIM] {
        let mut out = [0.0; P2_DIM];
        for (i, &(a, b)) in P2_EXPONENTS.iter().enumerate() {
            out[i] = self.get(a, b);
        }
        out
    }
}

/// Exact scaled-monomial moments of a polygon up to `max_degree`.
///
/// `int_E s^a t^b dx` (s, t the scaled coordinates) is rewritten with the
/// divergence theorem as `sum_e int_e h_E/(a+1) s^{a+1} t^b n_x ds`; on a
/// straight edge the integrand is a univariate polynomial of degree
/// `a + b + 1`, integrated exactly by a Gauss rule.
pub fn monomial_moments(
    geom: &ElementGeometry,
    vertices: &[Point2<f64>],
    max_degree: usize,
) -> MomentTable {
    let basis = ScaledMonomialBasis::new(geom);
    let npts = (max_degree + 2).div_ceil(2);
    let rule = gauss_legendre_unit(npts);

    let dim = max_degree + 1;
    let mut entries = vec![0.0; dim * dim];
    let n = vertices.len();
    for i in 0..n {
        let p0 = vertices[i];
        let p1 = vertices[(i + 1) % n];
        let edge = &geom.edges[i];
        for &(t, w) in &rule {
            let p = p0 + (p1 - p0) * t;
            let q = basis.local(p);
            let ds = w * edge.length;
            // powers of the scaled coordinates up to max_degree + 1
            let mut xp = [0.0; 8];
            let mut yp = [0.0; 8];
            xp[0] = 1.0;
            yp[0] = 1.0;
            for k in 1..=max_degree + 1 {
                xp[k] = xp[k - 1] * q.x;
                yp[k] = yp[k - 1] * q.y;
            }
            for a in 0..dim {
                for b in 0..dim - a {
                    entries[a * dim + b] += geom.diameter / (a as f64 + 1.0)
                        * xp[a + 1]
                        * yp[b]
                        * edge.normal.x
                        * ds;
                }
            }
        }
    }
    MomentTable {
        max_degree,
        entries,
    }
}

/// Gram matrix of the quadratic basis in the L2 inner product,
/// `H[a][b] = int_E m_a m_b dx`.
///
/// Fails when the matrix is not positive definite, which only happens for
/// degenerate (zero-area) elements.
pub fn p2_mass_matrix(moments: &MomentTable) -> Result<P2Matrix, GeometryError> {
    assert!(moments.max_degree() >= 4, "degree-4 moments required");
    let mut h = P2Matrix::zeros();
    for i in 0..P2_DIM {
        for j in 0..P2_DIM {
            h[(i, j)] = moments.product(i, j);
        }
    }
    if h.clone_owned().cholesky().is_none() {
        return Err(GeometryError::DegenerateElement);
    }
    Ok(h)
}

/// Gauss-Legendre rule on [0, 1]; weights sum to 1, exact for polynomials
/// of degree `2n - 1`.
pub fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut rule = Vec::with_capacity(n);
    // nodes of P_n on [-1, 1] by Newton from Chebyshev initial guesses
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * d * d);
        rule.push((x, w));
    }
    // mirror to the full set, then map to [0, 1]
    let mut full = Vec::with_capacity(n);
    for &(x, w) in rule.iter() {
        full.push((x, w));
    }
    for &(x, w) in rule.iter().rev() {
        if x.abs() > 1e-14 {
            full.push((-x, w));
        }
    }
    full.sort_by(|a, b| a.0.total_cmp(&b.0));
    full.into_iter()
        .map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect()
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss rule mapped to the segment `p0 -> p1`; weights sum to the segment
/// length, exact for polynomials of degree `2*npts - 1` along the edge.
pub fn edge_quadrature(
    p0: Point2<f64>,
    p1: Point2<f64>,
    npts: usize,
) -> Vec<(Point2<f64>, f64)> {
    let len = (p1 - p0).norm();
    gauss_legendre_unit(npts)
        .into_iter()
        .map(|(t, w)| (p0 + (p1 - p0) * t, w * len))
        .collect()
}

/// Quadrature on the reference triangle (0,0), (1,0), (0,1), exact for
/// bivariate polynomials of total degree `degree`; weights sum to 1/2.
///
/// Built as a tensor Gauss rule on the collapsed unit square
/// (x = u(1-v), y = v, Jacobian 1-v), which keeps the exactness argument
/// one-dimensional.
pub fn triangle_quadrature(degree: usize) -> Vec<(f64, f64, f64)> {
    let nu = (degree + 2).div_ceil(2);
    let nv = (degree + 3).div_ceil(2);
    let gu = gauss_legendre_unit(nu);
    let gv = gauss_legendre_unit(nv);
    let mut rule = Vec::with_capacity(nu * nv);
    for &(v, wv) in &gv {
        for &(u, wu) in &gu {
            rule.push((u * (1.0 - v), v, wu * wv * (1.0 - v)));
        }
    }
    rule
}

/// Quadrature points for a smooth integrand over a polygon: fan
/// triangulation about the centroid with a triangle rule of the given
/// degree. Weights are signed, so non-convex polygons integrate correctly.
pub fn polygon_quadrature(
    geom: &ElementGeometry,
    vertices: &[Point2<f64>],
    degree: usize,
) -> Vec<(Point2<f64>, f64)> {
    let rule = triangle_quadrature(degree);
    let c = geom.centroid;
    let n = vertices.len();
    let mut pts = Vec::with_capacity(n * rule.len());
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        // signed area of (c, a, b); the fan covers the polygon with
        // multiplicity one even when it is non-convex
        let det = (a.x - c.x) * (b.y - c.y) - (b.x - c.x) * (a.y - c.y);
        for &(u, v, w) in &rule {
            let p = Point2::new(
                c.x + u * (a.x - c.x) + v * (b.x - c.x),
                c.y + u * (a.y - c.y) + v * (b.y - c.y),
            );
            pts.push((p, w * det));
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{element_geometry_of, PolygonalMesh};

    fn unit_square_geom() -> (ElementGeometry, Vec<Point2<f64>>) {
        let verts = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ];
        (element_geometry_of(&verts), verts)
    }

    #[test]
    fn gauss_rules_are_exact_on_unit_interval() {
        for n in 1..=8 {
            let rule = gauss_legendre_unit(n);
            assert_eq!(rule.len(), n);
            for p in 0..=2 * n - 1 {
                let num: f64 = rule.iter().map(|&(x, w)| w * x.powi(p as i32)).sum();
                let exact = 1.0 / (p as f64 + 1.0);
                assert!(
                    (num - exact).abs() <= 1e-14,
                    "n={n} p={p}: {num} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn edge_quadrature_examples() {
        // midpoint rule
        let r = edge_quadrature(Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), 1);
        assert_eq!(r.len(), 1);
        assert!((r[0].0 - Point2::new(0.5, 0.0)).norm() < 1e-15);
        assert!((r[0].1 - 1.0).abs() < 1e-15);
        // s^2 with 2 points
        let r = edge_quadrature(Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), 2);
        let v: f64 = r.iter().map(|&(p, w)| w * p.x * p.x).sum();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
        // s^5 with 3 points
        let r = edge_quadrature(Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), 3);
        let v: f64 = r.iter().map(|&(p, w)| w * p.x.powi(5)).sum();
        assert!((v - 1.0 / 6.0).abs() < 1e-15);
        // weights sum to segment length
        let r = edge_quadrature(Point2::new(1.0, 2.0), Point2::new(4.0, 6.0), 4);
        let s: f64 = r.iter().map(|&(_, w)| w).sum();
        assert!((s - 5.0).abs() < 1e-14);
    }

    #[test]
    fn triangle_rule_matches_factorial_formula() {
        // int_T x^a y^b = a! b! / (a+b+2)! on the reference triangle
        fn fact(n: usize) -> f64 {
            (1..=n).map(|k| k as f64).product::<f64>().max(1.0)
        }
        for degree in [2usize, 5, 8] {
            let rule = triangle_quadrature(degree);
            for a in 0..=degree {
                for b in 0..=degree - a {
                    let num: f64 = rule
                        .iter()
                        .map(|&(x, y, w)| w * x.powi(a as i32) * y.powi(b as i32))
                        .sum();
                    let exact = fact(a) * fact(b) / fact(a + b + 2);
                    assert!(
                        (num - exact).abs() <= 1e-14,
                        "deg {degree} ({a},{b}): {num} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn moments_unit_square() {
        let (geom, verts) = unit_square_geom();
        let m = monomial_moments(&geom, &verts, 4);
        assert!((m.get(0, 0) - 1.0).abs() < 1e-14);
        // odd moments vanish by symmetry about the centroid
        assert!(m.get(1, 0).abs() < 1e-15);
        assert!(m.get(0, 1).abs() < 1e-15);
        assert!(m.get(1, 1).abs() < 1e-15);
        // int ((x-1/2)/sqrt(2))^2 = (1/12)/2
        assert!((m.get(2, 0) - 1.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn moments_triangle_against_raw_integral() {
        // raw moment int x y over the triangle (0,0),(1,0),(0,1) is 1/24;
        // express it through the scaled table by expanding
        // x y = (h s + cx)(h t + cy)
        let verts = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ];
        let geom = element_geometry_of(&verts);
        let m = monomial_moments(&geom, &verts, 4);
        let (cx, cy) = (geom.centroid.x, geom.centroid.y);
        let h = geom.diameter;
        let raw_xy = h * h * m.get(1, 1)
            + h * cy * m.get(1, 0)
            + h * cx * m.get(0, 1)
            + cx * cy * m.get(0, 0);
        assert!((raw_xy - 1.0 / 24.0).abs() < 1e-14, "{raw_xy}");
    }

    #[test]
    fn moments_match_fan_quadrature_oracle() {
        // independent route: fan triangulation + triangle quadrature
        let polys: Vec<Vec<Point2<f64>>> = vec![
            vec![
                Point2::new(0.2, -0.1),
                Point2::new(1.3, 0.2),
                Point2::new(0.9, 1.1),
                Point2::new(-0.2, 0.8),
            ],
            // non-convex quad
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(2.0, 0.0),
                Point2::new(0.6, 0.5),
                Point2::new(0.0, 2.0),
            ],
            crate::testing::regular_polygon(5, 1.0),
        ];
        for verts in polys {
            let geom = element_geometry_of(&verts);
            let table = monomial_moments(&geom, &verts, 4);
            let basis = ScaledMonomialBasis::new(&geom);
            let pts = polygon_quadrature(&geom, &verts, 8);
            for a in 0..=4usize {
                for b in 0..=4 - a {
                    let oracle: f64 = pts
                        .iter()
                        .map(|&(p, w)| {
                            let q = basis.local(p);
                            w * q.x.powi(a as i32) * q.y.powi(b as i32)
                        })
                        .sum();
                    let main = table.get(a, b);
                    let scale = geom.area.max(oracle.abs());
                    assert!(
                        (main - oracle).abs() <= 1e-12 * scale,
                        "({a},{b}): {main} vs {oracle}"
                    );
                }
            }
        }
    }

    #[test]
    fn mass_matrix_unit_square() {
        let (geom, verts) = unit_square_geom();
        let m = monomial_moments(&geom, &verts, 4);
        let h = p2_mass_matrix(&m).unwrap();
        assert!((h[(0, 0)] - 1.0).abs() < 1e-14);
        assert!(h[(0, 1)].abs() < 1e-15);
        assert!((h - h.transpose()).norm() < 1e-15);
    }

    #[test]
    fn mass_matrix_positive_definite_on_pentagon() {
        let verts = vec![
            Point2::new(0.1, 0.0),
            Point2::new(1.2, 0.1),
            Point2::new(1.5, 0.9),
            Point2::new(0.7, 1.4),
            Point2::new(-0.1, 0.7),
        ];
        let geom = element_geometry_of(&verts);
        let table = monomial_moments(&geom, &verts, 4);
        let h = p2_mass_matrix(&table).unwrap();
        let eig = h.symmetric_eigenvalues();
        assert!(eig.iter().all(|&l| l > 0.0));
        // cross-check one entry against the fan oracle
        let basis = ScaledMonomialBasis::new(&geom);
        let pts = polygon_quadrature(&geom, &verts, 8);
        for (i, j) in [(3, 5), (1, 2), (4, 4)] {
            let oracle: f64 = pts
                .iter()
                .map(|&(p, w)| {
                    let m = basis.eval(p);
                    w * m[i] * m[j]
                })
                .sum();
            assert!((h[(i, j)] - oracle).abs() <= 1e-12 * geom.area.max(oracle.abs()));
        }
    }

    #[test]
    fn scaled_monomials_bounded_at_vertices() {
        let verts = crate::testing::regular_polygon(7, 2.0);
        let geom = element_geometry_of(&verts);
        let basis = ScaledMonomialBasis::new(&geom);
        for &v in &verts {
            for m in basis.eval(v) {
                assert!(m.abs() <= 1.0 + 1e-12);
            }
        }
        assert_eq!(basis.eval(geom.centroid)[0], 1.0);
    }

    #[test]
    fn divergence_identity_for_area() {
        // shoelace area equals sum over edges of x.n/2, convex and not
        let mesh = PolygonalMesh::new(
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(0.4, 0.4),
                Point2::new(0.0, 1.0),
            ],
            vec![vec![0, 1, 2, 3]],
        )
        .unwrap();
        let geom = mesh.element_geometry(0);
        let mut area = 0.0;
        for (i, e) in geom.edges.iter().enumerate() {
            let verts = mesh.cell_vertices(0);
            let a = verts[i];
            let b = verts[(i + 1) % verts.len()];
            let mid = Point2::new(0.5 * (a.x + b.x), 0.5 * (a.y + b.y));
            area += 0.5 * (mid.coords.dot(&e.normal)) * e.length;
        }
        assert!((area - geom.area).abs() <= 1e-13 * geom.area);
    }
}
