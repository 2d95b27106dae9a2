//! Output writers: legacy-ASCII VTK snapshots of polygonal meshes and a
//! CSV time series of the scalar diagnostics.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so
//! identical runs produce byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Result, Write};
use std::path::Path;

use crate::assembly::SystemAssembler;
use crate::mesh::PolygonalMesh;
use crate::polybasis::P2_DIM;
use crate::timestepper::{NewtonReport, Observer, State};

/// Writes one snapshot: vertex values of the solution, the (physical)
/// gradient field at the vertices, and the per-cell coefficients of the L2
/// projection. Cells are written as native VTK polygons.
pub fn write_vtk_snapshot(
    path: &Path,
    mesh: &PolygonalMesh,
    assembler: &SystemAssembler,
    u: &[f64],
    title: &str,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;

    let nv = mesh.n_vertices();
    writeln!(w, "POINTS {nv} double")?;
    for p in mesh.vertices() {
        writeln!(w, "{} {} 0", p.x, p.y)?;
    }

    let nc = mesh.n_cells();
    let list_len: usize = (0..nc).map(|c| mesh.cell(c).len() + 1).sum();
    writeln!(w, "CELLS {nc} {list_len}")?;
    for c in 0..nc {
        let cell = mesh.cell(c);
        write!(w, "{}", cell.len())?;
        for &v in cell {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    writeln!(w, "CELL_TYPES {nc}")?;
    for _ in 0..nc {
        writeln!(w, "7")?; // VTK_POLYGON
    }

    writeln!(w, "POINT_DATA {nv}")?;
    writeln!(w, "SCALARS u double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in 0..nv {
        writeln!(w, "{}", u[3 * v])?;
    }
    writeln!(w, "VECTORS gradient double")?;
    for v in 0..nv {
        let g = assembler.vertex_gradient(u, v);
        writeln!(w, "{} {} 0", g.x, g.y)?;
    }

    writeln!(w, "CELL_DATA {nc}")?;
    writeln!(w, "FIELD projections 1")?;
    writeln!(w, "l2_coefficients {P2_DIM} {nc} double")?;
    for e in 0..nc {
        let ops = &assembler.operators[e];
        let s = &ops.proj_l2 * assembler.gather_local(e, u);
        let line: Vec<String> = (0..P2_DIM).map(|a| s[a].to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()
}

/// CSV diagnostics writer usable as a run observer. Columns:
/// `step,time,mass,energy,newton_iterations,relative_residual`.
pub struct CsvSeriesWriter {
    writer: BufWriter<File>,
    /// I/O failures inside observer callbacks are deferred to `finish`.
    error: Option<std::io::Error>,
}

impl CsvSeriesWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut writer = BufWriter::new(File::create(path)?);
        writeln!(
            writer,
            "step,time,mass,energy,newton_iterations,relative_residual"
        )?;
        Ok(Self {
            writer,
            error: None,
        })
    }

    fn write_row(&mut self, step: usize, state: &State, iters: usize, residual: f64) {
        if self.error.is_some() {
            return;
        }
        if let Err(e) = writeln!(
            self.writer,
            "{},{},{},{},{},{}",
            step, state.time, state.mass, state.energy, iters, residual
        ) {
            self.error = Some(e);
        }
    }

    pub fn finish(mut self) -> Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.writer.flush()
    }
}

impl Observer for CsvSeriesWriter {
    fn on_initial(&mut self, state: &State) {
        self.write_row(0, state, 0, 0.0);
    }

    fn on_step(&mut self, step: usize, state: &State, report: &NewtonReport) {
        self.write_row(step, state, report.iterations, report.relative_residual);
    }
}
