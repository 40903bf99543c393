//! Experiment pipelines driven by a [`Config`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};

use crate::besov::{besov_seminorm, lattice_shifts, LATTICE_DIRECTIONS};
use crate::cli::config::Config;
use crate::covering::{covering_scaling, default_alpha};
use crate::error::{Error, Result};
use crate::flow::{
    bc_experiment, check_q, straightness_audit, trace_mollified, BcOptions, BcReport, Direction, TraceOptions,
    CALIBRATED_C,
};
use crate::grid::{make_grid, Domain, Grid2, UnitVectorField, Vec2};
use crate::io::{fmt_num, read_field, write_atomic, write_field, AnyField, Csv};
use crate::kinetic::{default_basis, kinetic_measure, production_battery, AngularGrid};
use crate::mollify::{cone_kernel, mollify};
use crate::solutions::{bc_extended_field, constant_field, jump_field, vortex_field_at, JumpSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Field,
    Besov,
    Entropy,
    Kinetic,
    Trace,
    Cover,
    Bc,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Field,
        Experiment::Besov,
        Experiment::Entropy,
        Experiment::Kinetic,
        Experiment::Trace,
        Experiment::Cover,
        Experiment::Bc,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Field => "field",
            Experiment::Besov => "besov",
            Experiment::Entropy => "entropy",
            Experiment::Kinetic => "kinetic",
            Experiment::Trace => "trace",
            Experiment::Cover => "cover",
            Experiment::Bc => "bc",
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::config(format!("unknown experiment {s:?}")))
    }
}

/// Files written by a run, plus diagnostics for the manifest.
#[derive(Clone, Debug, Default)]
pub struct RunOutcome {
    pub outputs: Vec<PathBuf>,
    pub grids: Vec<Grid2>,
    pub warnings: Vec<String>,
}

/// How the input field is obtained.
#[derive(Clone, Debug)]
pub enum FieldSpec {
    Constant { direction: Vec2 },
    Vortex { center: Vec2 },
    Jump(JumpSpec),
    File(PathBuf),
}

#[derive(Clone, Debug)]
pub struct GridSpec {
    pub n: usize,
    pub half_width: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid2> {
        let w = self.half_width;
        if !(w > 0.0) {
            return Err(Error::config(format!("half_width must be positive, got {w}")));
        }
        make_grid(&Domain::rectangle(Vec2::new(-w, -w), Vec2::new(2.0 * w, 2.0 * w))?, self.n, 0.0)
    }
}

fn read_field_spec(cfg: &Config) -> Result<FieldSpec> {
    let kind = cfg.str_or("field", "vortex")?;
    Ok(match kind.as_str() {
        "constant" => FieldSpec::Constant {
            direction: cfg.point_or("direction", Vec2::E1)?,
        },
        "vortex" => FieldSpec::Vortex {
            center: cfg.point_or("center", Vec2::ZERO)?,
        },
        "perturbed" => FieldSpec::Vortex {
            center: cfg.point_or("center", Vec2::new(-1.6, 0.4))?,
        },
        "jump" => match cfg.str_or("jump", "vertical")?.as_str() {
            "vertical" => FieldSpec::Jump(JumpSpec::standard()),
            "horizontal" => FieldSpec::Jump(JumpSpec::standard_horizontal()),
            other => return Err(Error::config(format!("jump must be vertical or horizontal, got {other:?}"))),
        },
        "file" => {
            let path = cfg
                .str_opt("input")
                .ok_or_else(|| Error::config("field = file needs an input path"))?;
            let path = PathBuf::from(path);
            FieldSpec::File(match cfg.base_dir() {
                Some(base) if path.is_relative() => base.join(path),
                _ => path,
            })
        }
        other => {
            return Err(Error::config(format!(
                "field must be one of constant, vortex, perturbed, jump, file; got {other:?}"
            )))
        }
    })
}

fn read_grid_spec(cfg: &Config) -> Result<GridSpec> {
    Ok(GridSpec {
        n: cfg.usize_or("n", 256)?,
        half_width: cfg.f64_or("half_width", 1.0)?,
    })
}

pub fn build_field(spec: &FieldSpec, grid: &GridSpec) -> Result<UnitVectorField> {
    match spec {
        FieldSpec::File(path) => read_field(path)?.into_unit(),
        FieldSpec::Constant { direction } => constant_field(grid.build()?, *direction),
        FieldSpec::Vortex { center } => Ok(vortex_field_at(grid.build()?, *center)),
        FieldSpec::Jump(j) => Ok(jump_field(grid.build()?, j)),
    }
}

/// `none`, `disk:R`, `annulus:r0:r1` or `rect:x0:y0:x1:y1`.
pub fn parse_region(s: &str) -> Result<Option<Domain>> {
    let parts: Vec<&str> = s.split(':').collect();
    let nums = |xs: &[&str]| -> Result<Vec<f64>> {
        xs.iter()
            .map(|t| t.trim().parse::<f64>().map_err(|_| Error::config(format!("bad region {s:?}"))))
            .collect()
    };
    match parts.as_slice() {
        ["none"] => Ok(None),
        ["disk", r] => Ok(Some(Domain::disk(Vec2::ZERO, nums(&[r])?[0])?)),
        ["annulus", a, b] => {
            let v = nums(&[a, b])?;
            Ok(Some(Domain::annulus(Vec2::ZERO, v[0], v[1])?))
        }
        ["rect", rest @ ..] if rest.len() == 4 => {
            let v = nums(rest)?;
            Ok(Some(Domain::rectangle(Vec2::new(v[0], v[1]), Vec2::new(v[2] - v[0], v[3] - v[1]))?))
        }
        _ => Err(Error::config(format!(
            "region must be none, disk:R, annulus:r0:r1 or rect:x0:y0:x1:y1; got {s:?}"
        ))),
    }
}

fn read_region(cfg: &Config) -> Result<Option<Domain>> {
    parse_region(&cfg.str_or("region", "none")?)
}

fn write_csv(out: &Path, name: &str, csv: &Csv, outcome: &mut RunOutcome) -> Result<()> {
    let path = out.join(name);
    csv.write(&path)?;
    outcome.outputs.push(path);
    Ok(())
}

/// Runs one experiment and writes its outputs and `manifest.txt` into `out`.
pub fn run(kind: Experiment, cfg: &Config, out: &Path) -> Result<RunOutcome> {
    let start = Instant::now();
    std::fs::create_dir_all(out)?;
    let outcome = match kind {
        Experiment::Field => run_field(cfg, out)?,
        Experiment::Besov => run_besov(cfg, out)?,
        Experiment::Entropy => run_entropy(cfg, out)?,
        Experiment::Kinetic => run_kinetic(cfg, out)?,
        Experiment::Trace => run_trace(cfg, out)?,
        Experiment::Cover => run_cover(cfg, out)?,
        Experiment::Bc => run_bc(cfg, out)?,
    };
    for w in &outcome.warnings {
        warn!("{w}");
    }
    write_manifest(kind.name(), cfg, out, &outcome, start.elapsed().as_secs_f64())?;
    info!("{} finished in {:.2} s", kind.name(), start.elapsed().as_secs_f64());
    Ok(outcome)
}

fn write_manifest(command: &str, cfg: &Config, out: &Path, outcome: &RunOutcome, wall: f64) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "# eikonal-lab run manifest");
    let _ = writeln!(s, "# command: eikonal-lab {command}");
    let _ = writeln!(s, "# version: {}", env!("CARGO_PKG_VERSION"));
    for g in &outcome.grids {
        let o = g.origin();
        let _ = writeln!(s, "# grid: {} x {}, origin ({}, {}), dx {}", g.nx(), g.ny(), o.x, o.y, g.dx());
    }
    let _ = writeln!(s, "# wall_time_s: {wall:.3}");
    for p in &outcome.outputs {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let _ = writeln!(s, "# output: {name}");
    }
    for w in &outcome.warnings {
        let _ = writeln!(s, "# warning: {w}");
    }
    for (k, v) in cfg.resolved() {
        let _ = writeln!(s, "{k} = {v}");
    }
    write_atomic(out.join("manifest.txt"), s.as_bytes())
}

fn run_field(cfg: &Config, out: &Path) -> Result<RunOutcome> {
    let spec = read_field_spec(cfg)?;
    let grid = read_grid_spec(cfg)?;
    cfg.check_unused()?;
    let m = build_field(&spec, &grid)?;
    let mut outcome = RunOutcome {
        grids: vec![*m.grid()],
        ..RunOutcome::default()
    };
    let path = out.join("field.eikf");
    write_field(&AnyField::from(m), &path)?;
    outcome.outputs.push(path);
    Ok(outcome)
}

fn run_besov(cfg: &Config, out: &Path) -> Result<RunOutcome> {
    let spec = read_field_spec(cfg)?;
    let grid = read_grid_spec(cfg)?;
    let s = cfg.f64_or("s", 1.0 / 3.0)?;
    let p = cfg.f64_or("p", 3.0)?;
    let cells = cfg.list_or("h_cells", &[4.0, 8.0, 16.0, 32.0])?;
    let region = read_region(cfg)?;
    cfg.check_unused()?;
    let cells: Vec<usize> = cells
        .iter()
        .map(|&c| {
            if c >= 1.0 && c.fract() == 0.0 {
                Ok(c as usize)
            } else {
                Err(Error::config(format!("h_cells entries must be positive integers, got {c}")))
            }
        })
        .collect::<Result<_>>()?;
    let m = build_field(&spec, &grid)?;
    let hs = lattice_shifts(m.grid().dx(), &LATTICE_DIRECTIONS, &cells);
    let report = besov_seminorm(m.as_field(), s, p, &hs, region.as_ref())?;
    let mut outcome = RunOutcome {
        grids: vec![*m.grid()],
        ..RunOutcome::default()
    };
    write_csv(out, "besov.csv", &report.to_csv(), &mut outcome)?;
    Ok(outcome)
}

fn run_entropy(cfg: &Config, out: &Path) -> Result<RunOutcome> {
    let spec = read_field_spec(cfg)?;
    let grid = read_grid_spec(cfg)?;
    let eps = cfg.f64_or("epsilon", 0.1)?;
    let max_mode = cfg.usize_or("max_mode", 6)?;
    let region = read_region(cfg)?;
    cfg.check_unused()?;
    if !(2..=64).contains(&max_mode) {
        return Err(Error::config(format!("max_mode must lie in 2..=64, got {max_mode}")));
    }
    cone_kernel(eps)?;
    let m = build_field(&spec, &grid)?;
    let report = production_battery(&m, &default_basis(max_mode as u32), eps, region.as_ref())?;
    let mut outcome = RunOutcome {
        grids: vec![*m.grid()],
        ..RunOutcome::default()
    };
    write_csv(out, "entropy.csv", &report.to_csv(), &mut outcome)?;
    Ok(outcome)
}

fn run_kinetic(cfg: &Config, out: &Path) -> Result<RunOutcome> {
    let spec = read_field_spec(cfg)?;
    let grid = read_grid_spec(cfg)?;
    let eps = cfg.f64_or("epsilon", 0.1)?;
    let n_s = cfg.usize_or("n_s", 64)?;
    let p = cfg.f64_or("p", 2.0)?;
    let region = read_region(cfg)?;
    cfg.check_unused()?;
    let angular = AngularGrid::new(n_s)?;
    let kernel = cone_kernel(eps)?;
    if !(p >= 1.0) {
        return Err(Error::config(format!("p must be at least 1, got {p}")));
    }
    let m = build_field(&spec, &grid)?;
    let km = kinetic_measure(&m, angular, &kernel)?;
    let mut csv = Csv::new(&["epsilon", "nu_l1", "nu_l2", "nu_lp"]);
    csv.row(&[
        fmt_num(eps),
        fmt_num(km.nu_norm(1.0, region.as_ref())?),
        fmt_num(km.nu_norm(2.0, region.as_ref())?),
        fmt_num(km.nu_norm(p, region.as_ref())?),
    ]);
    let mut outcome = RunOutcome {
        grids: vec![*m.grid()],
        warnings: km.warning.iter().cloned().collect(),
        ..RunOutcome::default()
    };
    write_csv(out, "kinetic.csv", &csv, &mut outcome)?;
    let path = out.join("nu.eikf");
    write_field(&AnyField::from(km.nu), &path)?;
    outcome.outputs.push(path);
    Ok(outcome)
}

fn run_trace(cfg: &Config, out: &Path) -> Result<RunOutcome> {
    let spec = read_field_spec(cfg)?;
    let grid = read_grid_spec(cfg)?;
    let eps = cfg.f64_or("epsilon", 0.05)?;
    let c0 = cfg.f64_or("c0", 0.5)?;
    let max_t = cfg.f64_or("max_t", 1.0)?;
    let dt = cfg.f64_or("dt", eps / 8.0)?;
    let start = cfg.point_or("start", Vec2::new(0.0, 0.5))?;
    let direction = match cfg.str_or("direction", "forward")?.as_str() {
        "forward" => Direction::Forward,
        "backward" => Direction::Backward,
        other => return Err(Error::config(format!("direction must be forward or backward, got {other:?}"))),
    };
    let p = cfg.f64_or("p", 2.0)?;
    let c = cfg.f64_or("C", CALIBRATED_C)?;
    let n_s = cfg.usize_or("n_s", 64)?;
    cfg.check_unused()?;
    let angular = AngularGrid::new(n_s)?;
    let kernel = cone_kernel(eps)?;
    if !(p > 1.0 && c > 0.0) {
        return Err(Error::config(format!("need p > 1 and C > 0, got p = {p}, C = {c}")));
    }
    let m = build_field(&spec, &grid)?;
    let m_eps = mollify(&m, &kernel)?;
    let opts = TraceOptions {
        c0,
        max_t,
        dt,
        direction,
    };
    let curve = trace_mollified(&m_eps, start, &opts)?;
    let nu_lp = kinetic_measure(&m, angular, &kernel)?.nu_norm(p, None)?;
    let forward = match direction {
        Direction::Forward => curve.clone(),
        Direction::Backward => curve.reversed(),
    };
    let mut outcome = RunOutcome {
        grids: vec![*m.grid()],
        ..RunOutcome::default()
    };
    write_csv(out, "curve.csv", &curve.to_csv(), &mut outcome)?;
    let mut csv = Csv::new(&[
        "stop_reason",
        "duration",
        "chord",
        "increase",
        "max_deviation",
        "delta_bound",
        "nu_lp",
        "violated",
    ]);
    if forward.samples.len() >= 2 {
        let rep = straightness_audit(&forward, p, nu_lp, c0, eps, c)?;
        csv.row(&[
            curve.stop.as_str().to_string(),
            fmt_num(rep.duration),
            fmt_num(rep.chord),
            fmt_num(rep.increase),
            fmt_num(rep.max_deviation),
            fmt_num(rep.delta_bound),
            fmt_num(nu_lp),
            rep.violated().to_string(),
        ]);
    } else {
        outcome
            .warnings
            .push(format!("curve stopped immediately ({}); nothing to audit", curve.stop.as_str()));
    }
    write_csv(out, "audit.csv", &csv, &mut outcome)?;
    Ok(outcome)
}

fn run_cover(cfg: &Config, out: &Path) -> Result<RunOutcome> {
    let spec = read_field_spec(cfg)?;
    let grid = read_grid_spec(cfg)?;
    let q = cfg.f64_or("q", 3.0)?;
    let s = cfg.f64_or("s", 1.0 / 3.0)?;
    let eps_list = cfg.list_or("epsilons", &[0.02, 0.04, 0.08])?;
    let alpha = cfg.f64_or("alpha", default_alpha(q))?;
    let region = read_region(cfg)?;
    cfg.check_unused()?;
    let m = build_field(&spec, &grid)?;
    let report = covering_scaling(&m, q, s, &eps_list, alpha, region.as_ref())?;
    let mut outcome = RunOutcome {
        grids: vec![*m.grid()],
        ..RunOutcome::default()
    };
    write_csv(out, "cover.csv", &report.to_csv(), &mut outcome)?;
    for (k, row) in report.rows.iter().enumerate() {
        let mut csv = Csv::new(&["x", "y"]);
        for c in &row.centers {
            csv.row(&[fmt_num(c.x), fmt_num(c.y)]);
        }
        write_csv(out, &format!("centers_{k}.csv"), &csv, &mut outcome)?;
    }
    if report.zero_counts {
        outcome.warnings.push("some counts are zero and were left out of the slope fit".into());
    }
    Ok(outcome)
}

/// Grid with spacing `ε/2` covering `[−4, 4]²`.
pub fn bc_grid(epsilon: f64) -> Result<Grid2> {
    let n = (8.0 / (epsilon / 2.0)).ceil() as usize + 1;
    GridSpec { n, half_width: 4.0 }.build()
}

fn run_bc(cfg: &Config, out: &Path) -> Result<RunOutcome> {
    let eps_list = cfg.list_or("epsilons", &[0.04, 0.02, 0.01])?;
    let q = cfg.f64_or("q", 6.0)?;
    let opts = BcOptions {
        k: cfg.f64_opt("K")?,
        alpha_cov: cfg.f64_opt("alpha")?,
        dt: cfg.f64_opt("dt")?,
        strip_height: cfg.f64_or("strip_height", 0.1)?,
    };
    let input = cfg.str_opt("input");
    cfg.check_unused()?;
    check_q(q)?;
    let mut outcome = RunOutcome::default();
    let mut csv = Csv::new(&BcReport::csv_header());
    for (k, &eps) in eps_list.iter().enumerate() {
        let m = match &input {
            Some(path) => {
                let path = match cfg.base_dir() {
                    Some(base) if Path::new(path).is_relative() => base.join(path),
                    _ => PathBuf::from(path),
                };
                read_field(path)?.into_unit()?
            }
            None => bc_extended_field(bc_grid(eps)?, None)?,
        };
        outcome.grids.push(*m.grid());
        let report = bc_experiment(&m, eps, q, &opts)?;
        csv.row(&report.csv_row());
        let mut strips = Csv::new(&["a", "b", "xi", "entry_x", "exit_x", "increase", "monotone"]);
        for c in &report.crossings {
            strips.row(&[
                fmt_num(c.strip.a),
                fmt_num(c.strip.b),
                fmt_num(c.xi),
                fmt_num(c.entry.x),
                fmt_num(c.exit.x),
                fmt_num(c.increase),
                c.monotone.to_string(),
            ]);
        }
        write_csv(out, &format!("strips_{k}.csv"), &strips, &mut outcome)?;
    }
    write_csv(out, "bc.csv", &csv, &mut outcome)?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regions() {
        assert!(parse_region("none").unwrap().is_none());
        assert!(parse_region("disk:0.5").unwrap().unwrap().contains(Vec2::new(0.4, 0.0)));
        let a = parse_region("annulus:0.2:0.8").unwrap().unwrap();
        assert!(!a.contains(Vec2::new(0.1, 0.0)));
        assert!(parse_region("rect:0:0:1:1").unwrap().unwrap().contains(Vec2::new(0.5, 0.5)));
        assert!(parse_region("disk").is_err());
        assert!(parse_region("blob:1").is_err());
    }

    #[test]
    fn experiment_names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert!("plot".parse::<Experiment>().is_err());
    }

    #[test]
    fn bc_grid_spacing() {
        let g = bc_grid(0.04).unwrap();
        assert!(g.dx() <= 0.02 + 1e-12);
        assert!(g.covers_box(Vec2::new(-4.0, -4.0), Vec2::new(4.0, 4.0)));
    }
}
