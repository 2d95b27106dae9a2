//! Problem definitions: a manufactured solution with forcing, the initial
//! data of the qualitative experiments, projection-based error norms and
//! interface diagnostics.

use nalgebra::{Matrix2, Point2, Vector2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::assembly::SystemAssembler;
use crate::expr::Expr;
use crate::mesh::{PointLocator, PolygonalMesh};
use crate::polybasis::{polygon_quadrature, P2_DIM};

/// Double-well potential `(1 - u^2)^2 / 4`.
#[inline]
pub fn double_well(u: f64) -> f64 {
    let w = 1.0 - u * u;
    0.25 * w * w
}

/// Its derivative `u^3 - u`.
#[inline]
pub fn double_well_deriv(u: f64) -> f64 {
    u * u * u - u
}

/// A space-time field with enough derivatives for the error norms.
pub trait ExactField {
    fn value(&self, p: Point2<f64>, t: f64) -> f64;
    fn gradient(&self, p: Point2<f64>, t: f64) -> Vector2<f64>;
    fn hessian(&self, p: Point2<f64>, t: f64) -> Matrix2<f64>;
}

/// Manufactured solution `u(x, y, t) = t cos(2 pi x) cos(2 pi y)` with the
/// forcing that makes it solve the equation; its normal derivative
/// vanishes on the boundary of the unit square at all times.
#[derive(Debug, Clone, Copy)]
pub struct Manufactured {
    pub gamma: f64,
}

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

impl Manufactured {
    /// Closed-form forcing `du/dt - lap(phi(u)) + gamma^2 bilap(u)`.
    ///
    /// With `u = t cx cy`: `lap u = -8 pi^2 u`, `bilap u = 64 pi^4 u`, and
    /// `lap(u^3) = 3 u^2 lap u + 6 u |grad u|^2`.
    pub fn forcing(&self, p: Point2<f64>, t: f64) -> f64 {
        let (cx, cy) = ((TWO_PI * p.x).cos(), (TWO_PI * p.y).cos());
        let (sx, sy) = ((TWO_PI * p.x).sin(), (TWO_PI * p.y).sin());
        let u = t * cx * cy;
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let grad_sq = 4.0 * pi2 * t * t * (sx * sx * cy * cy + cx * cx * sy * sy);
        let lap_u = -8.0 * pi2 * u;
        let lap_u3 = 3.0 * u * u * lap_u + 6.0 * u * grad_sq;
        let bilap_u = 64.0 * pi2 * pi2 * u;
        cx * cy - lap_u3 + lap_u + self.gamma * self.gamma * bilap_u
    }
}

impl ExactField for Manufactured {
    fn value(&self, p: Point2<f64>, t: f64) -> f64 {
        t * (TWO_PI * p.x).cos() * (TWO_PI * p.y).cos()
    }

    fn gradient(&self, p: Point2<f64>, t: f64) -> Vector2<f64> {
        let (cx, cy) = ((TWO_PI * p.x).cos(), (TWO_PI * p.y).cos());
        let (sx, sy) = ((TWO_PI * p.x).sin(), (TWO_PI * p.y).sin());
        Vector2::new(-TWO_PI * t * sx * cy, -TWO_PI * t * cx * sy)
    }

    fn hessian(&self, p: Point2<f64>, t: f64) -> Matrix2<f64> {
        let (cx, cy) = ((TWO_PI * p.x).cos(), (TWO_PI * p.y).cos());
        let (sx, sy) = ((TWO_PI * p.x).sin(), (TWO_PI * p.y).sin());
        let k = TWO_PI * TWO_PI * t;
        Matrix2::new(-k * cx * cy, k * sx * sy, k * sx * sy, -k * cx * cy)
    }
}

/// Constant-in-space-and-time field (a discrete steady state).
#[derive(Debug, Clone, Copy)]
pub struct ConstantField(pub f64);

impl ExactField for ConstantField {
    fn value(&self, _p: Point2<f64>, _t: f64) -> f64 {
        self.0
    }
    fn gradient(&self, _p: Point2<f64>, _t: f64) -> Vector2<f64> {
        Vector2::zeros()
    }
    fn hessian(&self, _p: Point2<f64>, _t: f64) -> Matrix2<f64> {
        Matrix2::zeros()
    }
}

/// Initial-datum choices.
#[derive(Debug, Clone)]
pub enum InitialDatum {
    /// `0.95` inside the ellipse `9 (x - 1/2)^2 + (y - 1/2)^2 < 1/9`,
    /// `-0.95` outside.
    Ellipse,
    /// `0.95` on a plus shape (two axis-aligned rectangles centred at
    /// (1/2, 1/2), arm length 0.6, arm width 0.2), `-0.95` outside.
    Cross,
    /// Independent uniform values in `(-1, 1)` per vertex, seeded.
    Random { seed: u64 },
    /// The manufactured solution at `t = 0` (identically zero).
    Manufactured,
    /// Value field from a parsed expression; gradients are taken as zero.
    Expression(Expr),
    Constant(f64),
}

impl InitialDatum {
    fn cross_value(p: Point2<f64>) -> f64 {
        let (dx, dy) = ((p.x - 0.5).abs(), (p.y - 0.5).abs());
        let horizontal = dx < 0.3 && dy < 0.1;
        let vertical = dx < 0.1 && dy < 0.3;
        if horizontal || vertical {
            0.95
        } else {
            -0.95
        }
    }

    fn ellipse_value(p: Point2<f64>) -> f64 {
        if 9.0 * (p.x - 0.5) * (p.x - 0.5) + (p.y - 0.5) * (p.y - 0.5) < 1.0 / 9.0 {
            0.95
        } else {
            -0.95
        }
    }
}

/// Interpolates an initial datum: vertex values into the value dofs,
/// vertex gradients (zero for non-differentiable data) into the scaled
/// gradient dofs, then the essential constraints are applied.
pub fn interpolate_initial(
    datum: &InitialDatum,
    mesh: &PolygonalMesh,
    assembler: &SystemAssembler,
) -> Vec<f64> {
    let mut u = vec![0.0; assembler.n_dofs()];
    let mut values: Vec<f64> = Vec::with_capacity(mesh.n_vertices());
    match datum {
        InitialDatum::Ellipse => {
            values.extend((0..mesh.n_vertices()).map(|v| InitialDatum::ellipse_value(mesh.vertex(v))))
        }
        InitialDatum::Cross => {
            values.extend((0..mesh.n_vertices()).map(|v| InitialDatum::cross_value(mesh.vertex(v))))
        }
        InitialDatum::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            values.extend((0..mesh.n_vertices()).map(|_| rng.gen_range(-1.0..1.0)));
        }
        InitialDatum::Manufactured => values.extend(std::iter::repeat(0.0).take(mesh.n_vertices())),
        InitialDatum::Expression(e) => {
            values.extend((0..mesh.n_vertices()).map(|v| {
                let p = mesh.vertex(v);
                e.eval(p.x, p.y)
            }))
        }
        InitialDatum::Constant(c) => values.extend(std::iter::repeat(*c).take(mesh.n_vertices())),
    }
    for v in 0..mesh.n_vertices() {
        u[3 * v] = values[v];
        // gradients of the indicator/random data are taken as zero; the
        // manufactured datum is identically zero including its gradient
    }
    assembler.enforce_constraints(&mut u);
    u
}

/// Projection-based error norms of a discrete state against an exact
/// field at time `t`.
#[derive(Debug, Clone, Copy)]
pub struct ErrorNorms {
    pub h2: f64,
    pub h1: f64,
    pub l2: f64,
}

/// Element-wise errors through the three projections: L2 against the L2
/// projection, H1-seminorm against the gradient projection, H2-seminorm
/// against the energy projection. Integrals by fan triangulation.
pub fn compute_errors(
    assembler: &SystemAssembler,
    mesh: &PolygonalMesh,
    u: &[f64],
    exact: &dyn ExactField,
    t: f64,
) -> ErrorNorms {
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    let mut h2 = 0.0;
    for (e, ops) in assembler.operators.iter().enumerate() {
        let z = assembler.gather_local(e, u);
        let s0 = &ops.proj_l2 * &z;
        let s1 = &ops.proj_h1 * &z;
        let s2 = &ops.proj_h2 * &z;
        let c0: [f64; P2_DIM] = std::array::from_fn(|a| s0[a]);
        let c1: [f64; P2_DIM] = std::array::from_fn(|a| s1[a]);
        let c2: [f64; P2_DIM] = std::array::from_fn(|a| s2[a]);
        let hess_proj = ops.basis.hessian_poly(&c2);
        let verts = mesh.cell_vertices(e);
        for (p, w) in polygon_quadrature(&ops.geom, &verts, crate::assembly::SMOOTH_QUADRATURE_DEGREE)
        {
            let dv = exact.value(p, t) - ops.basis.eval_poly(&c0, p);
            l2 += w * dv * dv;
            let dg = exact.gradient(p, t) - ops.basis.grad_poly(&c1, p);
            h1 += w * dg.norm_squared();
            let dh = exact.hessian(p, t) - hess_proj;
            h2 += w * dh.component_mul(&dh).sum();
        }
    }
    ErrorNorms {
        h2: h2.sqrt(),
        h1: h1.sqrt(),
        l2: l2.sqrt(),
    }
}

#[derive(Debug, Error)]
pub enum InterfaceError {
    #[error("no interface: the sampled field does not change sign")]
    NoInterface,
}

/// Circularity `4 pi area / perimeter^2` of the zero level set of a scalar
/// field sampled on an `n x n` grid over the mesh bounding box, extracted
/// by marching squares. Returns 1 for a circle.
pub fn circularity_of_field<F: Fn(Point2<f64>) -> f64>(
    field: F,
    bbox: (Point2<f64>, Point2<f64>),
    n: usize,
) -> Result<f64, InterfaceError> {
    assert!(n >= 2);
    let (lo, hi) = bbox;
    let dx = (hi.x - lo.x) / n as f64;
    let dy = (hi.y - lo.y) / n as f64;
    // sample at cell centres shrunk slightly inside the box so point
    // location stays strictly interior
    let coord = |i: usize, d: f64, l: f64| l + (i as f64 + 0.5) * d;
    let mut values = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            values[j * n + i] = field(Point2::new(coord(i, dx, lo.x), coord(j, dy, lo.y)));
        }
    }
    let at = |i: usize, j: usize| values[j * n + i];
    let mut area = 0.0;
    let mut perimeter = 0.0;
    let mut any_positive = false;
    let mut any_negative = false;
    for v in &values {
        if *v >= 0.0 {
            any_positive = true;
        } else {
            any_negative = true;
        }
    }
    if !(any_positive && any_negative) {
        return Err(InterfaceError::NoInterface);
    }

    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let corners = [
                Point2::new(coord(i, dx, lo.x), coord(j, dy, lo.y)),
                Point2::new(coord(i + 1, dx, lo.x), coord(j, dy, lo.y)),
                Point2::new(coord(i + 1, dx, lo.x), coord(j + 1, dy, lo.y)),
                Point2::new(coord(i, dx, lo.x), coord(j + 1, dy, lo.y)),
            ];
            let vals = [at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)];
            let (cell_area, segs) = marching_cell(&corners, &vals);
            area += cell_area;
            perimeter += segs;
        }
    }
    if perimeter == 0.0 {
        return Err(InterfaceError::NoInterface);
    }
    Ok(4.0 * std::f64::consts::PI * area / (perimeter * perimeter))
}

/// Positive-region area and interface length inside one sampling cell.
fn marching_cell(corners: &[Point2<f64>; 4], vals: &[f64; 4]) -> (f64, f64) {
    let positive: Vec<bool> = vals.iter().map(|&v| v >= 0.0).collect();
    let crossing = |a: usize, b: usize| -> Point2<f64> {
        let t = vals[a] / (vals[a] - vals[b]);
        Point2::new(
            corners[a].x + t * (corners[b].x - corners[a].x),
            corners[a].y + t * (corners[b].y - corners[a].y),
        )
    };
    let mask = (positive[0] as usize)
        | (positive[1] as usize) << 1
        | (positive[2] as usize) << 2
        | (positive[3] as usize) << 3;
    if mask == 0 {
        return (0.0, 0.0);
    }
    if mask == 15 {
        return (polygon_area(corners), 0.0);
    }
    let center = 0.25 * (vals[0] + vals[1] + vals[2] + vals[3]);
    // saddles split into two corner pieces when the centre is negative
    if (mask == 5 || mask == 10) && center < 0.0 {
        let mut area = 0.0;
        let mut len = 0.0;
        for &c in &[0usize, 1, 2, 3] {
            if !positive[c] {
                continue;
            }
            let prev = (c + 3) % 4;
            let next = (c + 1) % 4;
            let pa = crossing(c, prev);
            let pb = crossing(c, next);
            area += polygon_area(&[corners[c], pb, pa]);
            len += (pb - pa).norm();
        }
        return (area, len);
    }
    // walk the cell boundary, inserting crossings; interface edges are the
    // polygon edges whose endpoints are both crossings
    #[derive(Clone, Copy)]
    enum Kind {
        Corner,
        Crossing,
    }
    let mut poly: Vec<(Point2<f64>, Kind)> = Vec::with_capacity(8);
    for c in 0..4 {
        if positive[c] {
            poly.push((corners[c], Kind::Corner));
        }
        let d = (c + 1) % 4;
        if positive[c] != positive[d] {
            poly.push((crossing(c, d), Kind::Crossing));
        }
    }
    let pts: Vec<Point2<f64>> = poly.iter().map(|&(p, _)| p).collect();
    let area = polygon_area(&pts);
    let mut len = 0.0;
    for k in 0..poly.len() {
        let (a, ka) = poly[k];
        let (b, kb) = poly[(k + 1) % poly.len()];
        if matches!(ka, Kind::Crossing) && matches!(kb, Kind::Crossing) {
            len += (b - a).norm();
        }
    }
    (area, len)
}

fn polygon_area(pts: &[Point2<f64>]) -> f64 {
    let n = pts.len();
    let mut twice = 0.0;
    for i in 0..n {
        let (p, q) = (pts[i], pts[(i + 1) % n]);
        twice += p.x * q.y - q.x * p.y;
    }
    (0.5 * twice).abs()
}

/// Circularity of the zero level set of the projected discrete solution.
pub fn level_set_circularity(
    assembler: &SystemAssembler,
    mesh: &PolygonalMesh,
    u: &[f64],
    n_samples: usize,
) -> Result<f64, InterfaceError> {
    let locator = PointLocator::new(mesh);
    let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in mesh.vertices() {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    // per-element projected polynomials
    let coeffs: Vec<[f64; P2_DIM]> = (0..assembler.n_elements())
        .map(|e| {
            let z = assembler.gather_local(e, u);
            let s = &assembler.operators[e].proj_l2 * z;
            std::array::from_fn(|a| s[a])
        })
        .collect();
    circularity_of_field(
        |p| match locator.locate(p) {
            Some(e) => assembler.operators[e].basis.eval_poly(&coeffs[e], p),
            None => -1.0,
        },
        (lo, hi),
        n_samples,
    )
}
