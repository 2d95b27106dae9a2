//! General polygonal meshes of a planar domain.
//!
//! A mesh is a list of vertices plus counter-clockwise vertex loops, one per
//! cell. Edge topology, boundary flags and boundary normals are derived at
//! construction, and the construction validates the mesh invariants (simple
//! positively-oriented cells, manifold edges). Structured quadrilateral and
//! criss-cross triangular meshes of the unit square are generated directly;
//! anything else (e.g. Voronoi tessellations) is imported from a file.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default minimal edge-length/diameter ratio; shorter edges only get a
/// warning, since the scheme stays well defined on any valid mesh.
pub const DEFAULT_EDGE_RATIO: f64 = 0.05;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("cell {cell} references vertex {vertex} out of range (mesh has {nverts})")]
    IndexOutOfRange {
        cell: usize,
        vertex: usize,
        nverts: usize,
    },
    #[error("cell {0} has fewer than 3 vertices")]
    TooFewVertices(usize),
    #[error("cell {0} repeats a vertex")]
    RepeatedVertex(usize),
    #[error("cell {0} is degenerate (zero signed area)")]
    DegenerateCell(usize),
    #[error("cell {0} is self-intersecting")]
    SelfIntersecting(usize),
    #[error("non-manifold edge ({0}, {1}) shared by more than two cells")]
    NonManifoldEdge(usize, usize),
    #[error("edge ({0}, {1}) traversed twice in the same direction (inconsistent orientation)")]
    InconsistentOrientation(usize, usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("degenerate element (zero area or collinear vertices)")]
    DegenerateElement,
}

/// Mesh file formats understood by [`load_mesh`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    /// Versioned JSON document: `{"version":1,"vertices":[[x,y],..],"cells":[[i,..],..]}`.
    NativeJson,
    /// OFF-like text: `NPOLY` header, vertex count, vertex lines, cell
    /// count, cell lines (vertex count followed by indices).
    OffPoly,
}

/// An edge of the mesh with its cell adjacency.
#[derive(Debug, Clone)]
pub struct Edge {
    /// Endpoint vertex indices, ordered as traversed by `cells.0`.
    pub a: usize,
    pub b: usize,
    /// Owning cell and, for interior edges, the neighbour.
    pub cells: (usize, Option<usize>),
}

impl Edge {
    #[inline]
    pub fn is_boundary(&self) -> bool {
        self.cells.1.is_none()
    }
}

/// Per-edge geometry inside one element, in loop order.
#[derive(Debug, Clone)]
pub struct EdgeGeometry {
    pub length: f64,
    /// Unit tangent along the loop direction.
    pub tangent: Vector2<f64>,
    /// Unit outward normal.
    pub normal: Vector2<f64>,
}

/// Geometry of a single element: area, centroid, diameter and edge frames.
#[derive(Debug, Clone)]
pub struct ElementGeometry {
    pub area: f64,
    pub centroid: Point2<f64>,
    /// Maximum pairwise vertex distance.
    pub diameter: f64,
    pub edges: Vec<EdgeGeometry>,
}

/// Geometry of a bare counter-clockwise vertex loop.
pub fn element_geometry_of(vertices: &[Point2<f64>]) -> ElementGeometry {
    let n = vertices.len();
    let area = signed_area(vertices);
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..n {
        let p = vertices[i];
        let q = vertices[(i + 1) % n];
        let cross = p.x * q.y - q.x * p.y;
        cx += (p.x + q.x) * cross;
        cy += (p.y + q.y) * cross;
    }
    let centroid = Point2::new(cx / (6.0 * area), cy / (6.0 * area));
    let mut diameter: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            diameter = diameter.max((vertices[i] - vertices[j]).norm());
        }
    }
    let edges = (0..n)
        .map(|i| {
            let d = vertices[(i + 1) % n] - vertices[i];
            let length = d.norm();
            let tangent = d / length;
            // interior lies to the left of a counter-clockwise loop
            let normal = Vector2::new(tangent.y, -tangent.x);
            EdgeGeometry {
                length,
                tangent,
                normal,
            }
        })
        .collect();
    ElementGeometry {
        area,
        centroid,
        diameter,
        edges,
    }
}

fn signed_area(vertices: &[Point2<f64>]) -> f64 {
    let n = vertices.len();
    let mut twice = 0.0;
    for i in 0..n {
        let p = vertices[i];
        let q = vertices[(i + 1) % n];
        twice += p.x * q.y - q.x * p.y;
    }
    0.5 * twice
}

/// A polygonal mesh with derived edge and boundary topology.
#[derive(Debug, Clone)]
pub struct PolygonalMesh {
    vertices: Vec<Point2<f64>>,
    cells: Vec<Vec<usize>>,
    edges: Vec<Edge>,
    boundary_vertex: Vec<bool>,
    /// Outward unit normals of the boundary edges adjacent to each boundary
    /// vertex; empty for interior vertices.
    boundary_normals: Vec<Vec<Vector2<f64>>>,
    /// Cells incident to each vertex.
    vertex_cells: Vec<Vec<usize>>,
}

impl PolygonalMesh {
    /// Builds a mesh from vertices and vertex loops, validating the
    /// invariants. Clockwise loops are reoriented; degenerate, repeated or
    /// self-intersecting loops and non-manifold edges are rejected.
    pub fn new(
        vertices: Vec<Point2<f64>>,
        mut cells: Vec<Vec<usize>>,
    ) -> Result<Self, MeshError> {
        let nverts = vertices.len();
        for (c, cell) in cells.iter_mut().enumerate() {
            if cell.len() < 3 {
                return Err(MeshError::TooFewVertices(c));
            }
            for &v in cell.iter() {
                if v >= nverts {
                    return Err(MeshError::IndexOutOfRange {
                        cell: c,
                        vertex: v,
                        nverts,
                    });
                }
            }
            let mut sorted = cell.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(MeshError::RepeatedVertex(c));
            }
            let loop_pts: Vec<Point2<f64>> = cell.iter().map(|&v| vertices[v]).collect();
            let area = signed_area(&loop_pts);
            let scale: f64 = loop_pts
                .iter()
                .zip(loop_pts.iter().cycle().skip(1))
                .map(|(p, q)| (q - p).norm_squared())
                .sum();
            if area.abs() <= 1e-14 * scale {
                return Err(MeshError::DegenerateCell(c));
            }
            if area < 0.0 {
                cell.reverse();
            }
            let loop_pts: Vec<Point2<f64>> = cell.iter().map(|&v| vertices[v]).collect();
            if self_intersects(&loop_pts) {
                return Err(MeshError::SelfIntersecting(c));
            }
        }

        // undirected edge map; remember the traversal direction to check
        // orientation consistency across neighbours
        let mut edge_map: HashMap<(usize, usize), (usize, Option<usize>, (usize, usize))> =
            HashMap::new();
        for (c, cell) in cells.iter().enumerate() {
            let n = cell.len();
            for i in 0..n {
                let (a, b) = (cell[i], cell[(i + 1) % n]);
                let key = (a.min(b), a.max(b));
                match edge_map.get_mut(&key) {
                    None => {
                        edge_map.insert(key, (c, None, (a, b)));
                    }
                    Some((_, second, first_dir)) => {
                        if second.is_some() {
                            return Err(MeshError::NonManifoldEdge(key.0, key.1));
                        }
                        if *first_dir == (a, b) {
                            return Err(MeshError::InconsistentOrientation(a, b));
                        }
                        *second = Some(c);
                    }
                }
            }
        }
        let mut edges: Vec<Edge> = edge_map
            .into_iter()
            .map(|(_, (c0, c1, dir))| Edge {
                a: dir.0,
                b: dir.1,
                cells: (c0, c1),
            })
            .collect();
        edges.sort_by_key(|e| (e.a.min(e.b), e.a.max(e.b)));

        let mut boundary_vertex = vec![false; nverts];
        let mut boundary_normals: Vec<Vec<Vector2<f64>>> = vec![Vec::new(); nverts];
        for e in edges.iter().filter(|e| e.is_boundary()) {
            let d = vertices[e.b] - vertices[e.a];
            let t = d / d.norm();
            let n = Vector2::new(t.y, -t.x);
            for v in [e.a, e.b] {
                boundary_vertex[v] = true;
                boundary_normals[v].push(n);
            }
        }

        let mut vertex_cells: Vec<Vec<usize>> = vec![Vec::new(); nverts];
        for (c, cell) in cells.iter().enumerate() {
            for &v in cell {
                vertex_cells[v].push(c);
            }
        }

        let mesh = Self {
            vertices,
            cells,
            edges,
            boundary_vertex,
            boundary_normals,
            vertex_cells,
        };
        for w in mesh.regularity_violations(DEFAULT_EDGE_RATIO) {
            log::warn!("{w}");
        }
        Ok(mesh)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn vertex(&self, v: usize) -> Point2<f64> {
        self.vertices[v]
    }

    pub fn vertices(&self) -> &[Point2<f64>] {
        &self.vertices
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        &self.cells[c]
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    /// Outward unit normals of the boundary edges meeting at vertex `v`.
    pub fn boundary_normals(&self, v: usize) -> &[Vector2<f64>] {
        &self.boundary_normals[v]
    }

    pub fn cells_of_vertex(&self, v: usize) -> &[usize] {
        &self.vertex_cells[v]
    }

    /// Positions of the vertices of cell `c`, in loop order.
    pub fn cell_vertices(&self, c: usize) -> Vec<Point2<f64>> {
        self.cells[c].iter().map(|&v| self.vertices[v]).collect()
    }

    /// Geometry of cell `c`.
    pub fn element_geometry(&self, c: usize) -> ElementGeometry {
        element_geometry_of(&self.cell_vertices(c))
    }

    /// Short-edge violations of the mesh regularity assumption
    /// (`h_e >= ratio * h_E`); reported, never fatal.
    pub fn regularity_violations(&self, ratio: f64) -> Vec<String> {
        let mut out = Vec::new();
        for c in 0..self.n_cells() {
            let geom = self.element_geometry(c);
            for (i, e) in geom.edges.iter().enumerate() {
                if e.length < ratio * geom.diameter {
                    out.push(format!(
                        "cell {c} edge {i}: length {:.3e} below {ratio} * diameter {:.3e}",
                        e.length, geom.diameter
                    ));
                }
            }
        }
        out
    }

    /// Serializes to the native JSON document.
    pub fn to_json(&self) -> String {
        let doc = JsonMesh {
            version: 1,
            vertices: self.vertices.iter().map(|p| [p.x, p.y]).collect(),
            cells: self.cells.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("mesh serialization cannot fail")
    }
}

#[derive(Serialize, Deserialize)]
struct JsonMesh {
    version: u32,
    vertices: Vec<[f64; 2]>,
    cells: Vec<Vec<usize>>,
}

/// Uniform n x n grid of unit-square quadrilaterals.
pub fn generate_quad_mesh(n: usize) -> PolygonalMesh {
    assert!(n >= 1, "grid size must be positive");
    let np = n + 1;
    let mut vertices = Vec::with_capacity(np * np);
    for j in 0..np {
        for i in 0..np {
            vertices.push(Point2::new(i as f64 / n as f64, j as f64 / n as f64));
        }
    }
    let v = |i: usize, j: usize| j * np + i;
    let mut cells = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            cells.push(vec![v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)]);
        }
    }
    PolygonalMesh::new(vertices, cells).expect("structured quad mesh is always valid")
}

/// Criss-cross triangulation of the unit square: each grid square is split
/// along one diagonal, with the diagonal direction alternating in a
/// checkerboard pattern so the mesh is deterministic and symmetric.
pub fn generate_tri_mesh(n: usize) -> PolygonalMesh {
    assert!(n >= 1, "grid size must be positive");
    let np = n + 1;
    let mut vertices = Vec::with_capacity(np * np);
    for j in 0..np {
        for i in 0..np {
            vertices.push(Point2::new(i as f64 / n as f64, j as f64 / n as f64));
        }
    }
    let v = |i: usize, j: usize| j * np + i;
    let mut cells = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1));
            if (i + j) % 2 == 0 {
                cells.push(vec![a, b, c]);
                cells.push(vec![a, c, d]);
            } else {
                cells.push(vec![a, b, d]);
                cells.push(vec![b, c, d]);
            }
        }
    }
    PolygonalMesh::new(vertices, cells).expect("structured tri mesh is always valid")
}

/// Reads a mesh from a byte stream in the given format and validates it.
pub fn load_mesh<R: Read>(reader: R, format: MeshFormat) -> Result<PolygonalMesh, MeshError> {
    match format {
        MeshFormat::NativeJson => {
            let doc: JsonMesh = serde_json::from_reader(reader)
                .map_err(|e| MeshError::Parse(e.to_string()))?;
            if doc.version != 1 {
                return Err(MeshError::Parse(format!(
                    "unsupported mesh format version {}",
                    doc.version
                )));
            }
            let vertices = doc
                .vertices
                .into_iter()
                .map(|[x, y]| Point2::new(x, y))
                .collect();
            PolygonalMesh::new(vertices, doc.cells)
        }
        MeshFormat::OffPoly => load_off_poly(reader),
    }
}

fn load_off_poly<R: Read>(reader: R) -> Result<PolygonalMesh, MeshError> {
    let reader = BufReader::new(reader);
    let mut tokens: Vec<String> = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let line = line.split('#').next().unwrap_or("");
        tokens.extend(line.split_whitespace().map(str::to_owned));
    }
    let mut it = tokens.into_iter();
    let mut next = |what: &str| -> Result<String, MeshError> {
        it.next()
            .ok_or_else(|| MeshError::Parse(format!("unexpected end of file, expected {what}")))
    };
    let header = next("NPOLY header")?;
    if header != "NPOLY" {
        return Err(MeshError::Parse(format!(
            "expected NPOLY header, found {header:?}"
        )));
    }
    let nv: usize = next("vertex count")?
        .parse()
        .map_err(|e| MeshError::Parse(format!("vertex count: {e}")))?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let x: f64 = next("vertex x")?
            .parse()
            .map_err(|e| MeshError::Parse(format!("vertex coordinate: {e}")))?;
        let y: f64 = next("vertex y")?
            .parse()
            .map_err(|e| MeshError::Parse(format!("vertex coordinate: {e}")))?;
        vertices.push(Point2::new(x, y));
    }
    let nc: usize = next("cell count")?
        .parse()
        .map_err(|e| MeshError::Parse(format!("cell count: {e}")))?;
    let mut cells = Vec::with_capacity(nc);
    for _ in 0..nc {
        let k: usize = next("cell vertex count")?
            .parse()
            .map_err(|e| MeshError::Parse(format!("cell vertex count: {e}")))?;
        let mut cell = Vec::with_capacity(k);
        for _ in 0..k {
            let v: usize = next("cell vertex index")?
                .parse()
                .map_err(|e| MeshError::Parse(format!("cell index: {e}")))?;
            cell.push(v);
        }
        cells.push(cell);
    }
    PolygonalMesh::new(vertices, cells)
}

fn self_intersects(pts: &[Point2<f64>]) -> bool {
    let n = pts.len();
    for i in 0..n {
        let (a1, a2) = (pts[i], pts[(i + 1) % n]);
        for j in i + 1..n {
            // skip adjacent segments (shared endpoint)
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            let (b1, b2) = (pts[j], pts[(j + 1) % n]);
            if segments_properly_intersect(a1, a2, b1, b2) {
                return true;
            }
        }
    }
    false
}

fn segments_properly_intersect(
    a1: Point2<f64>,
    a2: Point2<f64>,
    b1: Point2<f64>,
    b2: Point2<f64>,
) -> bool {
    let d = |p: Point2<f64>, q: Point2<f64>, r: Point2<f64>| {
        (q.x - p.x) * (r.y - p.y) - (r.x - p.x) * (q.y - p.y)
    };
    let d1 = d(a1, a2, b1);
    let d2 = d(a1, a2, b2);
    let d3 = d(b1, b2, a1);
    let d4 = d(b1, b2, a2);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// A uniform spatial index for point-in-cell queries.
pub struct PointLocator<'a> {
    mesh: &'a PolygonalMesh,
    min: Point2<f64>,
    inv_dx: f64,
    inv_dy: f64,
    nx: usize,
    ny: usize,
    bins: Vec<Vec<usize>>,
}

impl<'a> PointLocator<'a> {
    pub fn new(mesh: &'a PolygonalMesh) -> Self {
        let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in mesh.vertices() {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        let side = (mesh.n_cells() as f64).sqrt().ceil() as usize;
        let (nx, ny) = (side.max(1), side.max(1));
        let dx = ((max.x - min.x) / nx as f64).max(f64::MIN_POSITIVE);
        let dy = ((max.y - min.y) / ny as f64).max(f64::MIN_POSITIVE);
        let mut bins = vec![Vec::new(); nx * ny];
        for c in 0..mesh.n_cells() {
            let pts = mesh.cell_vertices(c);
            let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
            let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for p in &pts {
                x0 = x0.min(p.x);
                y0 = y0.min(p.y);
                x1 = x1.max(p.x);
                y1 = y1.max(p.y);
            }
            let i0 = (((x0 - min.x) / dx).floor() as isize).clamp(0, nx as isize - 1) as usize;
            let i1 = (((x1 - min.x) / dx).floor() as isize).clamp(0, nx as isize - 1) as usize;
            let j0 = (((y0 - min.y) / dy).floor() as isize).clamp(0, ny as isize - 1) as usize;
            let j1 = (((y1 - min.y) / dy).floor() as isize).clamp(0, ny as isize - 1) as usize;
            for j in j0..=j1 {
                for i in i0..=i1 {
                    bins[j * nx + i].push(c);
                }
            }
        }
        Self {
            mesh,
            min,
            inv_dx: 1.0 / dx,
            inv_dy: 1.0 / dy,
            nx,
            ny,
            bins,
        }
    }

    /// Cell containing `p`, if any. Points on shared edges return one of
    /// the incident cells.
    pub fn locate(&self, p: Point2<f64>) -> Option<usize> {
        let i = (((p.x - self.min.x) * self.inv_dx).floor() as isize)
            .clamp(0, self.nx as isize - 1) as usize;
        let j = (((p.y - self.min.y) * self.inv_dy).floor() as isize)
            .clamp(0, self.ny as isize - 1) as usize;
        for &c in &self.bins[j * self.nx + i] {
            if point_in_polygon(p, &self.mesh.cell_vertices(c)) {
                return Some(c);
            }
        }
        None
    }
}

fn point_in_polygon(p: Point2<f64>, pts: &[Point2<f64>]) -> bool {
    // winding-free crossing test with on-edge tolerance
    let n = pts.len();
    let mut inside = false;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        // on-edge check
        let cross = (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y);
        let dot = (p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y);
        let len2 = (b - a).norm_squared();
        if cross.abs() <= 1e-12 * len2.max(1.0) && (0.0..=len2).contains(&dot) {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x_int = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x_int {
                inside = !inside;
            }
        }
    }
    inside
}
