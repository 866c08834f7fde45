//! File formats: ledger CSV, KSFIELD snapshots, legacy VTK and the
//! per-directory run lock.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::energy::{EnergyLedger, LedgerRow, Mode, LEDGER_HEADER};
use crate::error::{Error, Result};
use crate::fields::{BoundaryRule, ScalarField, VectorField};
use crate::grid::GridSpec;
use crate::scenario::OutputFormat;
use crate::time_loop::StateSnapshot;

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_ledger(ledger: &EnergyLedger, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(LEDGER_HEADER)?;
    for r in &ledger.rows {
        let rec = [
            r.step.to_string(),
            num(r.t),
            num(r.mass),
            num(r.rho_min),
            num(r.rho_max),
            num(r.rho_fluct_l2),
            num(r.grad_rho_l2),
            num(r.sqrtrho_v_l2_sq),
            num(r.grad_v_l2_sq),
            num(r.cum_dissipation),
            num(r.c_n),
            num(r.bound_bbb1),
            num(r.slack_bbb1),
            num(r.slack_bbb2),
            num(r.slack_bbb3),
            num(r.prop34_slack),
            r.mode.as_str().to_string(),
            num(r.res_density),
            num(r.res_momentum),
            num(r.res_div),
        ];
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_ledger(r: impl std::io::Read) -> Result<EnergyLedger> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rd.headers()?.clone();
    if header.iter().ne(LEDGER_HEADER.iter().copied()) {
        return Err(Error::Ledger(format!("header mismatch: expected `{}`", LEDGER_HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        if rec.len() != LEDGER_HEADER.len() {
            return Err(Error::Ledger(format!(
                "line {line}: expected {} fields, got {}",
                LEDGER_HEADER.len(),
                rec.len()
            )));
        }
        let f = |i: usize| -> Result<f64> {
            rec[i].trim().parse().map_err(|_| {
                Error::Ledger(format!("line {line}: column {} is not a number: `{}`", LEDGER_HEADER[i], &rec[i]))
            })
        };
        let step = rec[0].trim().parse().map_err(|_| Error::Ledger(format!("line {line}: bad step `{}`", &rec[0])))?;
        let mode = Mode::parse(rec[16].trim())
            .ok_or_else(|| Error::Ledger(format!("line {line}: bad mode `{}`", &rec[16])))?;
        rows.push(LedgerRow {
            step,
            t: f(1)?,
            mass: f(2)?,
            rho_min: f(3)?,
            rho_max: f(4)?,
            rho_fluct_l2: f(5)?,
            grad_rho_l2: f(6)?,
            sqrtrho_v_l2_sq: f(7)?,
            grad_v_l2_sq: f(8)?,
            cum_dissipation: f(9)?,
            c_n: f(10)?,
            bound_bbb1: f(11)?,
            slack_bbb1: f(12)?,
            slack_bbb2: f(13)?,
            slack_bbb3: f(14)?,
            prop34_slack: f(15)?,
            mode,
            res_density: f(17)?,
            res_momentum: f(18)?,
            res_div: f(19)?,
        });
    }
    Ok(EnergyLedger::from_rows(rows))
}

pub fn write_ledger_file(ledger: &EnergyLedger, path: &Path) -> Result<()> {
    write_ledger(ledger, BufWriter::new(File::create(path)?))
}

pub fn read_ledger_file(path: &Path) -> Result<EnergyLedger> {
    read_ledger(BufReader::new(File::open(path)?))
}

/// Contents of a KSFIELD file.
#[derive(Debug, Clone)]
pub enum Snapshot {
    Scalar {
        role: String,
        field: ScalarField,
    },
    /// Face values, component after component.
    Vector {
        role: String,
        field: VectorField,
    },
}

const VECTOR_ROLES: [&str; 2] = ["velocity", "transport"];

fn ksfield_header(g: &GridSpec, role: &str) -> String {
    let n: Vec<String> = g.n[..g.dim].iter().map(|x| x.to_string()).collect();
    let e: Vec<String> = g.extent[..g.dim].iter().map(|x| format!("{x:?}")).collect();
    format!("KSFIELD v1; {}; {}; {}; {role}", g.dim, n.join(" "), e.join(" "))
}

pub fn write_scalar_snapshot(field: &ScalarField, role: &str, mut w: impl Write) -> Result<()> {
    if VECTOR_ROLES.contains(&role) {
        return Err(Error::Snapshot(format!("role `{role}` is reserved for face fields")));
    }
    writeln!(w, "{}", ksfield_header(field.grid(), role))?;
    for v in field.values() {
        writeln!(w, "{}", num(v))?;
    }
    Ok(())
}

pub fn write_vector_snapshot(field: &VectorField, role: &str, mut w: impl Write) -> Result<()> {
    if !VECTOR_ROLES.contains(&role) {
        return Err(Error::Snapshot(format!("role `{role}` is not a face-field role")));
    }
    let g = field.grid();
    writeln!(w, "{}", ksfield_header(g, role))?;
    for c in g.axes() {
        for v in field.face_values(c) {
            writeln!(w, "{}", num(v))?;
        }
    }
    Ok(())
}

pub fn read_snapshot(r: impl BufRead) -> Result<Snapshot> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Snapshot("empty file".into()))??;
    let parts: Vec<&str> = header.split(';').map(str::trim).collect();
    if parts.len() != 5 || parts[0] != "KSFIELD v1" {
        return Err(Error::Snapshot(format!("bad header `{header}`")));
    }
    let bad = |what: &str| Error::Snapshot(format!("bad {what} in header `{header}`"));
    let dim: usize = parts[1].parse().map_err(|_| bad("dim"))?;
    let n: Vec<usize> =
        parts[2].split_whitespace().map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad("n"))?;
    let e: Vec<f64> = parts[3]
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad("extent"))?;
    let grid = GridSpec::new(dim, &n, &e)?;
    let role = parts[4].to_string();
    let mut values = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        values.push(t.parse::<f64>().map_err(|_| Error::Snapshot(format!("line {}: bad value `{t}`", k + 2)))?);
    }
    if VECTOR_ROLES.contains(&role.as_str()) {
        let lens: Vec<usize> = grid.axes().map(|c| grid.face_shape(c).len()).collect();
        if values.len() != lens.iter().sum::<usize>() {
            return Err(Error::Snapshot(format!(
                "expected {} face values, got {}",
                lens.iter().sum::<usize>(),
                values.len()
            )));
        }
        let mut faces = Vec::new();
        let mut off = 0;
        for l in lens {
            faces.push(values[off..off + l].to_vec());
            off += l;
        }
        let field = VectorField::from_face_values(&grid, faces)?.fill_ghosts(BoundaryRule::DirichletZero)?;
        Ok(Snapshot::Vector { role, field })
    } else {
        if values.len() != grid.cells() {
            return Err(Error::Snapshot(format!("expected {} cell values, got {}", grid.cells(), values.len())));
        }
        Ok(Snapshot::Scalar { role, field: ScalarField::from_values(&grid, values)? })
    }
}

pub fn read_snapshot_file(path: &Path) -> Result<Snapshot> {
    read_snapshot(BufReader::new(File::open(path)?))
}

/// Legacy VTK structured points with cell data; velocity is averaged to cells.
pub fn write_vtk(state: &StateSnapshot, mut w: impl Write) -> Result<()> {
    let g = state.rho.grid();
    let dims: Vec<usize> = (0..3).map(|a| if a < g.dim { g.n[a] + 1 } else { 1 }).collect();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "step {} t {:?}", state.step, state.t)?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} {}", dims[0], dims[1], dims[2])?;
    writeln!(w, "ORIGIN 0 0 0")?;
    writeln!(w, "SPACING {:?} {:?} {:?}", g.h[0], g.h[1], if g.dim == 3 { g.h[2] } else { 1.0 })?;
    writeln!(w, "CELL_DATA {}", g.cells())?;
    // VTK orders cells with x fastest; fields store axis 0 slowest.
    let order: Vec<[usize; 3]> = {
        let mut v = Vec::with_capacity(g.cells());
        for k in 0..g.n[2].max(1) {
            for j in 0..g.n[1] {
                for i in 0..g.n[0] {
                    v.push([i, j, k]);
                }
            }
        }
        v
    };
    for (name, f) in [("density", &state.rho), ("pressure", &state.p)] {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for i in &order {
            writeln!(w, "{}", num(f.get(*i)))?;
        }
    }
    writeln!(w, "VECTORS velocity double")?;
    for i in &order {
        let mut u = [0.0; 3];
        for c in g.axes() {
            let mut hi = *i;
            hi[c] += 1;
            u[c] = 0.5 * (state.v.get(c, *i) + state.v.get(c, hi));
        }
        writeln!(w, "{} {} {}", num(u[0]), num(u[1]), num(u[2]))?;
    }
    Ok(())
}

fn create_with(path: PathBuf, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<PathBuf> {
    let mut w = BufWriter::new(File::create(&path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(path)
}

/// Writes the configured formats for one state; returns the files written.
pub fn write_state(dir: &Path, state: &StateSnapshot, formats: &[OutputFormat]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let stem = format!("state_{:06}", state.step);
    for f in formats {
        match f {
            OutputFormat::Ksfield => {
                let path = |role: &str| dir.join(format!("{stem}_{role}.ksf"));
                out.push(create_with(path("density"), |w| write_scalar_snapshot(&state.rho, "density", w))?);
                out.push(create_with(path("pressure"), |w| write_scalar_snapshot(&state.p, "pressure", w))?);
                out.push(create_with(path("velocity"), |w| write_vector_snapshot(&state.v, "velocity", w))?);
            }
            OutputFormat::Vtk => out.push(create_with(dir.join(format!("{stem}.vtk")), |w| write_vtk(state, w))?),
        }
    }
    Ok(out)
}

/// Exclusive lock on an output directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

pub const LOCK_FILE: &str = ".ksmix.lock";

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<RunLock> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(RunLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(dir.display().to_string())),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
