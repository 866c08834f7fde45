//! Scenario files: a `section.key = value` grammar with `#` comments.
//!
//! Every key is consumed exactly once; anything left over is an error, so
//! typos never pass silently. [`Scenario::to_text`] prints every key,
//! defaults included, and parses back to an equal value.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::fields::{ScalarField, VectorField};
use crate::grid::GridSpec;
use crate::momentum::VelocityPreconditioner;
use crate::operators::Averaging;
use crate::physics::{ForcingSpec, PhysicalParams, ViscosityLaw};
use crate::time_loop::{SolverSettings, MAX_TAU};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityPreset {
    Constant {
        value: f64,
    },
    /// `low` below `position` along `axis`, `high` above; a tanh profile
    /// of half-width `width`, or a sharp jump when `width = 0`.
    TwoLayer {
        low: f64,
        high: f64,
        axis: usize,
        position: f64,
        width: f64,
    },
    /// `mean + amplitude cos(kπ x_axis / L_axis)`, an exact Neumann eigenvector.
    SinusoidalPerturbation {
        mean: f64,
        amplitude: f64,
        mode: usize,
        axis: usize,
    },
}

impl DensityPreset {
    /// Closed range of the preset values.
    pub fn range(&self) -> (f64, f64) {
        match *self {
            DensityPreset::Constant { value } => (value, value),
            DensityPreset::TwoLayer { low, high, .. } => (low.min(high), low.max(high)),
            DensityPreset::SinusoidalPerturbation { mean, amplitude, .. } => {
                (mean - amplitude.abs(), mean + amplitude.abs())
            }
        }
    }

    pub fn materialize(&self, grid: &GridSpec) -> Result<ScalarField> {
        let axis_ok = |a: usize| {
            if a < grid.dim {
                Ok(())
            } else {
                Err(Error::ScenarioValidation(format!("preset axis {a} is not below dim {}", grid.dim)))
            }
        };
        Ok(match *self {
            DensityPreset::Constant { value } => ScalarField::constant(grid, value),
            DensityPreset::TwoLayer { low, high, axis, position, width } => {
                axis_ok(axis)?;
                ScalarField::from_fn(grid, |x| {
                    let s = if width > 0.0 {
                        0.5 * (1.0 + ((x[axis] - position) / width).tanh())
                    } else if x[axis] > position {
                        1.0
                    } else {
                        0.0
                    };
                    low + (high - low) * s
                })
            }
            DensityPreset::SinusoidalPerturbation { mean, amplitude, mode, axis } => {
                axis_ok(axis)?;
                let k = mode as f64 * std::f64::consts::PI / grid.extent[axis];
                ScalarField::from_fn(grid, |x| mean + amplitude * (k * x[axis]).cos())
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VelocityPreset {
    Zero,
    /// `u_0 = A sin(π x_1 / L_1)`, divergence free and zero on the walls.
    Shear {
        amplitude: f64,
    },
    /// Discrete curl of `ψ = A sin²(π x_0/L_0) sin²(π x_1/L_1)` in the first plane.
    Vortex {
        amplitude: f64,
    },
}

impl VelocityPreset {
    pub fn materialize(&self, grid: &GridSpec) -> Result<VectorField> {
        let pi = std::f64::consts::PI;
        Ok(match *self {
            VelocityPreset::Zero => VectorField::zeros(grid),
            VelocityPreset::Shear { amplitude } => {
                VectorField::from_fn(
                    grid,
                    |c, x| {
                        if c == 0 {
                            amplitude * (pi * x[1] / grid.extent[1]).sin()
                        } else {
                            0.0
                        }
                    },
                )
            }
            VelocityPreset::Vortex { amplitude } => {
                let psi = |x0: f64, x1: f64| {
                    amplitude * (pi * x0 / grid.extent[0]).sin().powi(2) * (pi * x1 / grid.extent[1]).sin().powi(2)
                };
                let (h0, h1) = (grid.h[0], grid.h[1]);
                VectorField::from_fn(grid, |c, x| match c {
                    0 => (psi(x[0], x[1] + 0.5 * h1) - psi(x[0], x[1] - 0.5 * h1)) / h1,
                    1 => -(psi(x[0] + 0.5 * h0, x[1]) - psi(x[0] - 0.5 * h0, x[1])) / h0,
                    _ => 0.0,
                })
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum OutputFormat {
    Ksfield,
    Vtk,
}

impl OutputFormat {
    pub fn as_str(&self) -> &'static str {
        match self {
            OutputFormat::Ksfield => "ksfield",
            OutputFormat::Vtk => "vtk",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSettings {
    pub directory: PathBuf,
    pub formats: Vec<OutputFormat>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub grid: GridSpec,
    pub physics: PhysicalParams,
    pub eta: DensityPreset,
    pub u: VelocityPreset,
    pub tau: f64,
    pub t_final: f64,
    /// Snapshot cadence in steps; 0 keeps only the initial and final states.
    pub snapshot_every: usize,
    pub solver: SolverSettings,
    pub output: OutputSettings,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ScenarioValidation(m));
        if !(self.tau > 0.0 && self.tau <= MAX_TAU) {
            return bad(format!("time.tau = {} violates 0 < tau <= {MAX_TAU}", self.tau));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return bad(format!("time.final = {} must be a finite nonnegative time", self.t_final));
        }
        if self.physics.rho_min > self.physics.rho_max {
            return bad(format!(
                "physics.rho_min = {} exceeds physics.rho_max = {}",
                self.physics.rho_min, self.physics.rho_max
            ));
        }
        self.physics.validate()?;
        let (lo, hi) = self.eta.range();
        if lo < self.physics.rho_min || hi > self.physics.rho_max {
            return bad(format!(
                "initial density range [{lo}, {hi}] leaves [{}, {}]",
                self.physics.rho_min, self.physics.rho_max
            ));
        }
        if let DensityPreset::TwoLayer { axis, .. } | DensityPreset::SinusoidalPerturbation { axis, .. } = self.eta {
            if axis >= self.grid.dim {
                return bad(format!("init.density.axis = {axis} is not below grid.dim = {}", self.grid.dim));
            }
        }
        let s = &self.solver;
        for (name, v) in [("density_tol", s.density_tol), ("momentum_tol", s.momentum_tol), ("div_tol", s.div_tol)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("solver.{name} = {v} must lie in (0, 1)"));
            }
        }
        if s.max_iter == 0 || s.restart == 0 {
            return bad("solver.max_iter and solver.restart must be positive".into());
        }
        if let Some(c) = s.c_omega {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("solver.c_omega = {c} must be positive"));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Scenario> {
        let mut kv = KeyValues::read(text)?;
        let s = build(&mut kv)?;
        kv.finish()?;
        s.validate()?;
        Ok(s)
    }

    /// Canonical text with every key spelled out.
    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let g = &self.grid;
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        let ulist = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let mut put = |k: &str, v: String| {
            let _ = writeln!(o, "{k} = {v}");
        };
        put("grid.dim", g.dim.to_string());
        put("grid.cells", ulist(&g.n[..g.dim]));
        put("grid.extent", list(&g.extent[..g.dim]));
        let p = &self.physics;
        put("physics.theta", format!("{:?}", p.theta));
        put("physics.rho_min", format!("{:?}", p.rho_min));
        put("physics.rho_max", format!("{:?}", p.rho_max));
        match p.viscosity {
            ViscosityLaw::Constant { mu0 } => {
                put("physics.viscosity.kind", "constant".into());
                put("physics.viscosity.mu0", format!("{mu0:?}"));
            }
            ViscosityLaw::Affine { a, b } | ViscosityLaw::Exponential { a, b } => {
                let kind = if matches!(p.viscosity, ViscosityLaw::Affine { .. }) { "affine" } else { "exponential" };
                put("physics.viscosity.kind", kind.into());
                put("physics.viscosity.a", format!("{a:?}"));
                put("physics.viscosity.b", format!("{b:?}"));
            }
        }
        put(
            "physics.averaging",
            match p.averaging {
                Averaging::Arithmetic => "arithmetic",
                Averaging::Harmonic => "harmonic",
            }
            .into(),
        );
        match p.forcing {
            ForcingSpec::Zero => put("physics.forcing.kind", "zero".into()),
            ForcingSpec::Constant { value } => {
                put("physics.forcing.kind", "constant".into());
                put("physics.forcing.value", list(&value));
            }
            ForcingSpec::Gravity { g } => {
                put("physics.forcing.kind", "gravity".into());
                put("physics.forcing.g", format!("{g:?}"));
            }
            ForcingSpec::Ramp { value } => {
                put("physics.forcing.kind", "ramp".into());
                put("physics.forcing.value", list(&value));
            }
            ForcingSpec::Sinusoid { amplitude, omega, phase, mode } => {
                put("physics.forcing.kind", "sinusoid".into());
                put("physics.forcing.amplitude", list(&amplitude));
                put("physics.forcing.omega", format!("{omega:?}"));
                put("physics.forcing.phase", format!("{phase:?}"));
                put("physics.forcing.mode", mode.to_string());
            }
        }
        match self.eta {
            DensityPreset::Constant { value } => {
                put("init.density.kind", "constant".into());
                put("init.density.value", format!("{value:?}"));
            }
            DensityPreset::TwoLayer { low, high, axis, position, width } => {
                put("init.density.kind", "two-layer".into());
                put("init.density.low", format!("{low:?}"));
                put("init.density.high", format!("{high:?}"));
                put("init.density.axis", axis.to_string());
                put("init.density.position", format!("{position:?}"));
                put("init.density.width", format!("{width:?}"));
            }
            DensityPreset::SinusoidalPerturbation { mean, amplitude, mode, axis } => {
                put("init.density.kind", "sinusoidal-perturbation".into());
                put("init.density.mean", format!("{mean:?}"));
                put("init.density.amplitude", format!("{amplitude:?}"));
                put("init.density.mode", mode.to_string());
                put("init.density.axis", axis.to_string());
            }
        }
        match self.u {
            VelocityPreset::Zero => put("init.velocity.kind", "zero".into()),
            VelocityPreset::Shear { amplitude } | VelocityPreset::Vortex { amplitude } => {
                let kind = if matches!(self.u, VelocityPreset::Shear { .. }) { "shear" } else { "vortex" };
                put("init.velocity.kind", kind.into());
                put("init.velocity.amplitude", format!("{amplitude:?}"));
            }
        }
        put("time.tau", format!("{:?}", self.tau));
        put("time.final", format!("{:?}", self.t_final));
        put("time.snapshot_every", self.snapshot_every.to_string());
        let s = &self.solver;
        put("solver.density_tol", format!("{:?}", s.density_tol));
        put("solver.momentum_tol", format!("{:?}", s.momentum_tol));
        put("solver.div_tol", format!("{:?}", s.div_tol));
        put("solver.max_iter", s.max_iter.to_string());
        put("solver.restart", s.restart.to_string());
        put("solver.c_omega", s.c_omega.map_or_else(|| "default".to_string(), |c| format!("{c:?}")));
        put("solver.smoothing_sweeps", s.smoothing_sweeps.to_string());
        put("solver.transport_smoothing", s.transport_smoothing.to_string());
        put(
            "solver.preconditioner",
            match s.preconditioner {
                VelocityPreconditioner::Ilu0 => "ilu0",
                VelocityPreconditioner::Jacobi => "jacobi",
            }
            .into(),
        );
        put("output.directory", self.output.directory.display().to_string());
        put("output.formats", self.output.formats.iter().map(|f| f.as_str()).collect::<Vec<_>>().join(" "));
        o
    }
}

struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    fn read(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| Error::Scenario {
                line,
                message: format!("expected `section.key = value`, got `{body}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if !key.contains('.')
                || key.split('.').any(|p| p.is_empty() || !p.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'))
            {
                return Err(Error::Scenario { line, message: format!("malformed key `{key}`") });
            }
            if value.is_empty() {
                return Err(Error::Scenario { line, message: format!("key `{key}` has no value") });
            }
            if let Some((first, _)) = entries.insert(key.to_string(), (line, value.to_string())) {
                return Err(Error::Scenario {
                    line,
                    message: format!("duplicate key `{key}` (first on line {first})"),
                });
            }
        }
        Ok(KeyValues { entries })
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn required(&mut self, key: &str) -> Result<(usize, String)> {
        self.take(key).ok_or_else(|| Error::ScenarioValidation(format!("missing required key `{key}`")))
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str, default: Option<T>) -> Result<T> {
        match self.take(key) {
            Some((line, v)) => v.parse().map_err(|_| Error::Scenario {
                line,
                message: format!("`{key}` expects {}, got `{v}`", std::any::type_name::<T>()),
            }),
            None => default.ok_or_else(|| Error::ScenarioValidation(format!("missing required key `{key}`"))),
        }
    }

    fn f64(&mut self, key: &str) -> Result<f64> {
        self.parsed(key, None)
    }

    fn f64_or(&mut self, key: &str, d: f64) -> Result<f64> {
        self.parsed(key, Some(d))
    }

    fn usize_or(&mut self, key: &str, d: usize) -> Result<usize> {
        self.parsed(key, Some(d))
    }

    fn list<T: std::str::FromStr>(&mut self, key: &str, len: Option<usize>, default: Option<Vec<T>>) -> Result<Vec<T>> {
        let Some((line, v)) = self.take(key) else {
            return default.ok_or_else(|| Error::ScenarioValidation(format!("missing required key `{key}`")));
        };
        let items: std::result::Result<Vec<T>, _> =
            v.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).map(str::parse).collect();
        let items = items.map_err(|_| Error::Scenario {
            line,
            message: format!("`{key}` expects a list of {}, got `{v}`", std::any::type_name::<T>()),
        })?;
        if let Some(n) = len {
            if items.len() != n {
                return Err(Error::Scenario {
                    line,
                    message: format!("`{key}` needs {n} entries, got {}", items.len()),
                });
            }
        }
        Ok(items)
    }

    fn vec3(&mut self, key: &str, dim: usize) -> Result<[f64; 3]> {
        let v: Vec<f64> = self.list(key, None, None)?;
        if v.len() != dim && v.len() != 3 {
            return Err(Error::ScenarioValidation(format!("`{key}` needs {dim} or 3 entries, got {}", v.len())));
        }
        let mut out = [0.0; 3];
        out[..v.len()].copy_from_slice(&v);
        Ok(out)
    }

    fn kind(&mut self, key: &str, default: Option<&str>, allowed: &[&str]) -> Result<String> {
        let (line, v) = match (self.take(key), default) {
            (Some(lv), _) => lv,
            (None, Some(d)) => return Ok(d.to_string()),
            (None, None) => return Err(Error::ScenarioValidation(format!("missing required key `{key}`"))),
        };
        if allowed.contains(&v.as_str()) {
            Ok(v)
        } else {
            Err(Error::Scenario { line, message: format!("`{key}` must be one of {}, got `{v}`", allowed.join(", ")) })
        }
    }

    fn finish(self) -> Result<()> {
        match self.entries.into_iter().min_by_key(|(_, (line, _))| *line) {
            Some((key, (line, _))) => Err(Error::Scenario { line, message: format!("unknown key `{key}`") }),
            None => Ok(()),
        }
    }
}

fn build(kv: &mut KeyValues) -> Result<Scenario> {
    let (line, dim_s) = kv.required("grid.dim")?;
    let dim: usize = dim_s
        .parse()
        .ok()
        .filter(|d| (2..=3).contains(d))
        .ok_or_else(|| Error::Scenario { line, message: format!("grid.dim must be 2 or 3, got `{dim_s}`") })?;
    let cells: Vec<usize> = kv.list("grid.cells", Some(dim), None)?;
    let extent: Vec<f64> = kv.list("grid.extent", Some(dim), Some(vec![1.0; dim]))?;
    let grid = GridSpec::new(dim, &cells, &extent)?;

    let theta = kv.f64("physics.theta")?;
    let rho_min = kv.f64("physics.rho_min")?;
    let rho_max = kv.f64("physics.rho_max")?;
    let viscosity = match kv.kind("physics.viscosity.kind", None, &["constant", "affine", "exponential"])?.as_str() {
        "constant" => ViscosityLaw::Constant { mu0: kv.f64("physics.viscosity.mu0")? },
        "affine" => ViscosityLaw::Affine { a: kv.f64("physics.viscosity.a")?, b: kv.f64("physics.viscosity.b")? },
        _ => ViscosityLaw::Exponential { a: kv.f64("physics.viscosity.a")?, b: kv.f64("physics.viscosity.b")? },
    };
    let averaging = match kv.kind("physics.averaging", Some("arithmetic"), &["arithmetic", "harmonic"])?.as_str() {
        "harmonic" => Averaging::Harmonic,
        _ => Averaging::Arithmetic,
    };
    let forcing = match kv
        .kind("physics.forcing.kind", Some("zero"), &["zero", "constant", "gravity", "ramp", "sinusoid"])?
        .as_str()
    {
        "constant" => ForcingSpec::Constant { value: kv.vec3("physics.forcing.value", dim)? },
        "gravity" => ForcingSpec::Gravity { g: kv.f64("physics.forcing.g")? },
        "ramp" => ForcingSpec::Ramp { value: kv.vec3("physics.forcing.value", dim)? },
        "sinusoid" => ForcingSpec::Sinusoid {
            amplitude: kv.vec3("physics.forcing.amplitude", dim)?,
            omega: kv.f64_or("physics.forcing.omega", 0.0)?,
            phase: kv.f64_or("physics.forcing.phase", 0.0)?,
            mode: kv.usize_or("physics.forcing.mode", 0)?,
        },
        _ => ForcingSpec::Zero,
    };
    let physics = PhysicalParams { theta, rho_min, rho_max, viscosity, averaging, forcing };

    let eta = match kv.kind("init.density.kind", None, &["constant", "two-layer", "sinusoidal-perturbation"])?.as_str()
    {
        "constant" => DensityPreset::Constant { value: kv.f64("init.density.value")? },
        "two-layer" => DensityPreset::TwoLayer {
            low: kv.f64("init.density.low")?,
            high: kv.f64("init.density.high")?,
            axis: kv.usize_or("init.density.axis", dim - 1)?,
            position: kv.f64_or("init.density.position", 0.5 * grid.extent[dim - 1])?,
            width: kv.f64_or("init.density.width", 0.0)?,
        },
        _ => DensityPreset::SinusoidalPerturbation {
            mean: kv.f64("init.density.mean")?,
            amplitude: kv.f64("init.density.amplitude")?,
            mode: kv.usize_or("init.density.mode", 1)?,
            axis: kv.usize_or("init.density.axis", 0)?,
        },
    };
    let u = match kv.kind("init.velocity.kind", Some("zero"), &["zero", "shear", "vortex"])?.as_str() {
        "shear" => VelocityPreset::Shear { amplitude: kv.f64("init.velocity.amplitude")? },
        "vortex" => VelocityPreset::Vortex { amplitude: kv.f64("init.velocity.amplitude")? },
        _ => VelocityPreset::Zero,
    };

    let tau = kv.f64("time.tau")?;
    let t_final = kv.f64("time.final")?;
    let snapshot_every = kv.usize_or("time.snapshot_every", 0)?;

    let d = SolverSettings::default();
    let c_omega = match kv.take("solver.c_omega") {
        None => None,
        Some((_, v)) if v == "default" => None,
        Some((line, v)) => Some(v.parse().map_err(|_| Error::Scenario {
            line,
            message: format!("`solver.c_omega` expects a number or `default`, got `{v}`"),
        })?),
    };
    let solver = SolverSettings {
        density_tol: kv.f64_or("solver.density_tol", d.density_tol)?,
        momentum_tol: kv.f64_or("solver.momentum_tol", d.momentum_tol)?,
        div_tol: kv.f64_or("solver.div_tol", d.div_tol)?,
        max_iter: kv.usize_or("solver.max_iter", d.max_iter)?,
        restart: kv.usize_or("solver.restart", d.restart)?,
        c_omega,
        smoothing_sweeps: kv.usize_or("solver.smoothing_sweeps", d.smoothing_sweeps)?,
        transport_smoothing: kv.parsed("solver.transport_smoothing", Some(d.transport_smoothing))?,
        preconditioner: match kv.kind("solver.preconditioner", Some("ilu0"), &["ilu0", "jacobi"])?.as_str() {
            "jacobi" => VelocityPreconditioner::Jacobi,
            _ => VelocityPreconditioner::Ilu0,
        },
    };

    let directory = kv.take("output.directory").map_or_else(|| PathBuf::from("out"), |(_, v)| PathBuf::from(v));
    let names: Vec<String> = kv.list("output.formats", None, Some(vec!["ksfield".to_string()]))?;
    let mut formats = Vec::new();
    for n in names {
        let f = match n.as_str() {
            "ksfield" => OutputFormat::Ksfield,
            "vtk" => OutputFormat::Vtk,
            other => return Err(Error::ScenarioValidation(format!("unknown output format `{other}`"))),
        };
        if !formats.contains(&f) {
            formats.push(f);
        }
    }
    formats.sort();
    Ok(Scenario {
        grid,
        physics,
        eta,
        u,
        tau,
        t_final,
        snapshot_every,
        solver,
        output: OutputSettings { directory, formats },
    })
}

/// Built-in example scenarios.
pub mod presets {
    /// Fluid at rest with uniform density.
    pub const REST: &str = "\
grid.dim = 2
grid.cells = 8 8
physics.theta = 0.01
physics.rho_min = 1.0
physics.rho_max = 1.0
physics.viscosity.kind = constant
physics.viscosity.mu0 = 1.0
init.density.kind = constant
init.density.value = 1.0
time.tau = 0.1
time.final = 1.0
";

    /// Heavy fluid over light fluid under gravity, stirred by a vortex;
    /// inside the verified regime.
    pub const TWO_LAYER: &str = "\
grid.dim = 2
grid.cells = 32 32
physics.theta = 0.001
physics.rho_min = 0.9
physics.rho_max = 1.1
physics.viscosity.kind = constant
physics.viscosity.mu0 = 1.0
physics.forcing.kind = gravity
physics.forcing.g = 1.0
init.density.kind = two-layer
init.density.low = 0.9
init.density.high = 1.1
init.density.width = 0.05
init.velocity.kind = vortex
init.velocity.amplitude = 0.5
time.tau = 0.01
time.final = 5.0
time.snapshot_every = 100
";

    /// Cosine density mode without flow: pure diffusion.
    pub const EIGENMODE: &str = "\
grid.dim = 2
grid.cells = 32 32
physics.theta = 0.05
physics.rho_min = 0.9
physics.rho_max = 1.1
physics.viscosity.kind = constant
physics.viscosity.mu0 = 1.0
init.density.kind = sinusoidal-perturbation
init.density.mean = 1.0
init.density.amplitude = 0.1
init.density.mode = 1
init.density.axis = 0
time.tau = 0.01
time.final = 1.0
solver.density_tol = 1e-13
";

    /// Decaying vortex stirring a stratified density.
    pub const VORTEX: &str = "\
grid.dim = 2
grid.cells = 32 32
physics.theta = 0.001
physics.rho_min = 0.95
physics.rho_max = 1.05
physics.viscosity.kind = constant
physics.viscosity.mu0 = 1.0
init.density.kind = two-layer
init.density.low = 0.95
init.density.high = 1.05
init.density.width = 0.1
init.velocity.kind = vortex
init.velocity.amplitude = 1.0
time.tau = 0.01
time.final = 1.0
";

    pub const ALL: [(&str, &str); 4] =
        [("rest", REST), ("two-layer", TWO_LAYER), ("eigenmode", EIGENMODE), ("vortex", VORTEX)];
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_documented_defaults() {
        let s = Scenario::parse(presets::REST).unwrap();
        assert_eq!(s.solver, SolverSettings::default());
        assert_eq!(s.u, VelocityPreset::Zero);
        assert_eq!(s.physics.forcing, ForcingSpec::Zero);
        assert_eq!(s.grid.extent[..2], [1.0, 1.0]);
        assert_eq!(s.snapshot_every, 0);
        assert_eq!(s.output.formats, vec![OutputFormat::Ksfield]);
    }

    #[test]
    fn presets_round_trip() {
        for (name, text) in presets::ALL {
            let s = Scenario::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            let again = Scenario::parse(&s.to_text()).unwrap();
            assert_eq!(s, again, "{name}");
            assert_eq!(s.to_text(), again.to_text());
        }
    }

    #[test]
    fn large_tau_is_rejected() {
        let text = presets::REST.replace("time.tau = 0.1", "time.tau = 0.6");
        let e = Scenario::parse(&text).unwrap_err().to_string();
        assert!(e.contains("tau <= 0.5"), "{e}");
    }

    #[test]
    fn negative_viscosity_is_rejected_with_location() {
        let text = presets::REST
            .replace("physics.rho_min = 1.0", "physics.rho_min = 0.4")
            .replace("physics.rho_max = 1.0", "physics.rho_max = 0.6")
            .replace("init.density.value = 1.0", "init.density.value = 0.5")
            .replace(
                "physics.viscosity.kind = constant\nphysics.viscosity.mu0 = 1.0",
                "physics.viscosity.kind = affine\nphysics.viscosity.a = 1\nphysics.viscosity.b = -2",
            );
        let e = Scenario::parse(&text).unwrap_err();
        assert!(matches!(e, Error::Viscosity(_)), "{e}");
        assert!(e.to_string().contains("μ(0.6) = -0.19999"), "{e}");
    }

    #[test]
    fn unknown_and_duplicate_keys_cite_lines() {
        let e = Scenario::parse(&format!("{}physics.thetta = 1\n", presets::REST)).unwrap_err();
        assert!(matches!(e, Error::Scenario { line: 12, .. }), "{e}");
        let e = Scenario::parse(&format!("{}time.tau = 0.2\n", presets::REST)).unwrap_err();
        assert!(e.to_string().contains("duplicate key"), "{e}");
        let e = Scenario::parse(&presets::REST.replace("grid.cells = 8 8", "grid.cells = 8 x")).unwrap_err();
        assert!(matches!(e, Error::Scenario { line: 2, .. }), "{e}");
        let e = Scenario::parse(&presets::REST.replace("time.final = 1.0\n", "")).unwrap_err();
        assert!(e.to_string().contains("time.final"), "{e}");
    }

    #[test]
    fn initial_range_must_fit_bounds() {
        let text = presets::REST.replace("init.density.value = 1.0", "init.density.value = 1.5");
        assert!(matches!(Scenario::parse(&text), Err(Error::ScenarioValidation(_))));
    }

    #[test]
    fn vortex_preset_is_discretely_solenoidal() {
        let g = GridSpec::uniform(2, 16, 1.0).unwrap();
        let v = VelocityPreset::Vortex { amplitude: 1.0 }.materialize(&g).unwrap();
        assert!(crate::operators::divergence_l2(&v) < 1e-12);
        assert!(v.l2_sq() > 0.01);
    }
}
