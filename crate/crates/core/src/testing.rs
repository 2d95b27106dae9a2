//! Randomized polygon suites and small helpers for the verification tests.
//!
//! Lives in the library (not under `#[cfg(test)]`) so both the unit tests
//! and the acceptance suite can draw the same element families.

use nalgebra::Point2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Regular n-gon with the given circumradius, centred at the origin.
pub fn regular_polygon(n: usize, radius: f64) -> Vec<Point2<f64>> {
    (0..n)
        .map(|i| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            Point2::new(radius * a.cos(), radius * a.sin())
        })
        .collect()
}

/// One sample polygon together with the family it was drawn from.
#[derive(Debug, Clone)]
pub struct PolygonSample {
    pub vertices: Vec<Point2<f64>>,
    pub family: &'static str,
}

/// Randomized polygon suite: triangles, squares, convex polygons,
/// non-convex star polygons with 5-8 vertices, and stretched versions with
/// aspect ratios up to 20:1. All polygons are simple, counter-clockwise and
/// star-shaped with respect to their generation centre.
pub fn polygon_suite(seed: u64, per_family: usize) -> Vec<PolygonSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut suite = Vec::new();

    for _ in 0..per_family {
        let tri = random_star(&mut rng, 3, 3, 0.4);
        suite.push(PolygonSample {
            vertices: place(&mut rng, tri),
            family: "triangle",
        });
        let sq = square(&mut rng);
        suite.push(PolygonSample {
            vertices: place(&mut rng, sq),
            family: "square",
        });
        let n = rng.gen_range(5..=8);
        let convex = random_star(&mut rng, n, n, 0.15);
        suite.push(PolygonSample {
            vertices: place(&mut rng, convex),
            family: "convex",
        });
        let n = rng.gen_range(5..=8);
        let star = nonconvex_star(&mut rng, n);
        suite.push(PolygonSample {
            vertices: place(&mut rng, star),
            family: "nonconvex",
        });
        let n = rng.gen_range(4..=6);
        let aspect = rng.gen_range(5.0..=20.0);
        let mut verts = random_star(&mut rng, n, n, 0.2);
        for p in &mut verts {
            p.x *= aspect;
        }
        suite.push(PolygonSample {
            vertices: place(&mut rng, verts),
            family: "stretched",
        });
    }
    suite
}

fn square(rng: &mut ChaCha8Rng) -> Vec<Point2<f64>> {
    let s = rng.gen_range(0.3..2.0);
    vec![
        Point2::new(0.0, 0.0),
        Point2::new(s, 0.0),
        Point2::new(s, s),
        Point2::new(0.0, s),
    ]
}

/// Star-shaped polygon from sorted random angles and mildly varying radii;
/// convex-ish for small `jitter`.
fn random_star(rng: &mut ChaCha8Rng, nmin: usize, nmax: usize, jitter: f64) -> Vec<Point2<f64>> {
    let n = rng.gen_range(nmin..=nmax);
    let mut angles: Vec<f64> = (0..n)
        .map(|i| {
            2.0 * std::f64::consts::PI * (i as f64 + rng.gen_range(0.05..0.95)) / n as f64
        })
        .collect();
    angles.sort_by(f64::total_cmp);
    angles
        .into_iter()
        .map(|a| {
            let r = 1.0 + rng.gen_range(-jitter..jitter);
            Point2::new(r * a.cos(), r * a.sin())
        })
        .collect()
}

/// Star polygon with alternating radii, guaranteed to have reflex vertices.
fn nonconvex_star(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point2<f64>> {
    (0..n)
        .map(|i| {
            let a = 2.0 * std::f64::consts::PI * (i as f64 + rng.gen_range(0.1..0.4)) / n as f64;
            let r = if i % 2 == 0 {
                rng.gen_range(0.9..1.1)
            } else {
                rng.gen_range(0.35..0.5)
            };
            Point2::new(r * a.cos(), r * a.sin())
        })
        .collect()
}

fn place(rng: &mut ChaCha8Rng, mut verts: Vec<Point2<f64>>) -> Vec<Point2<f64>> {
    let (dx, dy) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
    let rot = rng.gen_range(0.0..std::f64::consts::TAU);
    let (c, s) = (rot.cos(), rot.sin());
    for p in &mut verts {
        *p = Point2::new(c * p.x - s * p.y + dx, s * p.x + c * p.y + dy);
    }
    verts
}
