//! Configuration parsing, the experiment registry and CSV/manifest output.
//!
//! Config files are `key = value` lines grouped in `[experiment]`, `[grid]`
//! and `[material]` sections; `#` starts a comment. Every problem found is
//! reported with its line number, not just the first.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::analysis::{self, ConstantEstimate, SignConvention};
use crate::error::{Error, Result};
use crate::geometry::{build_phase_mask, cells_across, init_fluid_partition, CellShape, Inclusion, UnitCellPattern};
use crate::grid_core::{inner, l1_norm, l2_norm, Grid, NodalField, ScalarField};
use crate::homogenize::{self, MicroPolicy};
use crate::microsim::{self, DrivingPressure, MaterialParams, SimState, SkeletonMode, TransportMode};
use crate::mollifier::{self, MollifierKernel};
use crate::rng::XorShift64Star;
use crate::transport;

pub const EXPERIMENTS: [&str; 6] = [
    "mollifier-props",
    "poincare-scaling",
    "extension-bounds",
    "micro-sim",
    "cell-problems",
    "eps-convergence",
];

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;

/// One configuration problem, with the line it refers to when known.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub dim: usize,
    /// Nodes per axis of the full-domain grid.
    pub n: usize,
    /// Grid intervals per periodicity cell for cell problems and eps studies.
    pub nodes_per_cell: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub eps_list: Vec<f64>,
    pub h_list: Vec<f64>,
    pub radius_list: Vec<f64>,
    /// Random samples for the property suites.
    pub samples: usize,
    /// Extension mollifier radius per cell width.
    pub h_cell: f64,
    pub interface_x1: f64,
    pub grid: GridSpec,
    pub pattern: UnitCellPattern,
    pub material: MaterialParams,
    /// Pressure drop from `S1` to `S2`.
    pub dp: f64,
    /// The text the config was parsed from, echoed into the manifest.
    pub source: String,
}

const KEYS: &[(&str, &[&str])] = &[
    (
        "experiment",
        &[
            "name",
            "seed",
            "out",
            "eps_list",
            "h_list",
            "radius_list",
            "samples",
            "h_cell",
            "interface_x1",
        ],
    ),
    ("grid", &["dim", "n", "nodes_per_cell", "pattern", "radius", "inclusion"]),
    (
        "material",
        &[
            "mu1",
            "mu2",
            "lambda",
            "c_f1",
            "c_f2",
            "c_s",
            "p0",
            "dp",
            "epsilon",
            "h_mollify",
            "tau",
            "t_final",
            "skeleton",
            "cg_tol",
            "cg_max_iter",
        ],
    ),
];

struct Entries {
    map: HashMap<(String, String), (String, usize)>,
}

impl Entries {
    fn get(&self, section: &str, key: &str) -> Option<&(String, usize)> {
        self.map.get(&(section.to_string(), key.to_string()))
    }

    fn line(&self, section: &str, key: &str) -> Option<usize> {
        self.get(section, key).map(|(_, l)| *l)
    }
}

fn tokenize(text: &str, errors: &mut Vec<ConfigError>) -> Entries {
    let mut map: HashMap<(String, String), (String, usize)> = HashMap::new();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if KEYS.iter().any(|(s, _)| *s == name) {
                section = Some(name.to_string());
            } else {
                errors.push(ConfigError {
                    line: Some(line_no),
                    message: format!("unknown section [{name}]"),
                });
                section = None;
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(ConfigError {
                line: Some(line_no),
                message: format!("expected `key = value`, found `{line}`"),
            });
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(sec) = &section else {
            errors.push(ConfigError {
                line: Some(line_no),
                message: format!("key `{key}` outside a known section"),
            });
            continue;
        };
        let known = KEYS.iter().find(|(s, _)| s == sec).map(|(_, k)| k.contains(&key)).unwrap_or(false);
        if !known {
            errors.push(ConfigError {
                line: Some(line_no),
                message: format!("unknown key `{key}` in [{sec}]"),
            });
            continue;
        }
        let k = (sec.clone(), key.to_string());
        if let Some((_, first)) = map.get(&k) {
            errors.push(ConfigError {
                line: Some(line_no),
                message: format!("duplicate key `{key}` in [{sec}] (lines {first} and {line_no})"),
            });
            continue;
        }
        map.insert(k, (value.to_string(), line_no));
    }
    Entries { map }
}

struct Reader<'a> {
    entries: &'a Entries,
    errors: &'a mut Vec<ConfigError>,
}

impl Reader<'_> {
    fn parse<T: std::str::FromStr>(&mut self, section: &str, key: &str, default: T) -> T {
        match self.entries.get(section, key) {
            None => default,
            Some((v, line)) => match v.parse::<T>() {
                Ok(x) => x,
                Err(_) => {
                    self.errors.push(ConfigError {
                        line: Some(*line),
                        message: format!("cannot parse `{key}` from `{v}`"),
                    });
                    default
                }
            },
        }
    }

    fn list(&mut self, section: &str, key: &str, default: &[f64]) -> Vec<f64> {
        match self.entries.get(section, key) {
            None => default.to_vec(),
            Some((v, line)) => {
                let parsed: std::result::Result<Vec<f64>, _> = v.split(',').map(|s| s.trim().parse::<f64>()).collect();
                match parsed {
                    Ok(x) if !x.is_empty() => x,
                    _ => {
                        self.errors.push(ConfigError {
                            line: Some(*line),
                            message: format!("cannot parse list `{key}` from `{v}`"),
                        });
                        default.to_vec()
                    }
                }
            }
        }
    }

    fn check(&mut self, ok: bool, section: &str, key: &str, message: impl Into<String>) {
        if !ok {
            self.errors.push(ConfigError {
                line: self.entries.line(section, key),
                message: message.into(),
            });
        }
    }
}

/// Parses and validates a config, collecting every violation.
pub fn parse_config(text: &str) -> std::result::Result<RunConfig, Vec<ConfigError>> {
    let mut errors = Vec::new();
    let entries = tokenize(text, &mut errors);
    let mut r = Reader {
        entries: &entries,
        errors: &mut errors,
    };

    let experiment = match entries.get("experiment", "name") {
        Some((v, line)) => {
            if !EXPERIMENTS.contains(&v.as_str()) {
                r.errors.push(ConfigError {
                    line: Some(*line),
                    message: format!("unknown experiment `{v}`; available: {}", EXPERIMENTS.join(", ")),
                });
            }
            v.clone()
        }
        None => {
            r.errors.push(ConfigError {
                line: None,
                message: "missing required key `name` in [experiment]".into(),
            });
            String::new()
        }
    };
    let seed = r.parse("experiment", "seed", 1u64);
    let out_dir = PathBuf::from(r.parse("experiment", "out", String::from("out")));
    let eps_list = r.list("experiment", "eps_list", &[1.0, 0.5, 0.25]);
    let h_list = r.list("experiment", "h_list", &[0.2, 0.1, 0.05]);
    let radius_list = r.list("experiment", "radius_list", &[0.15, 0.25, 0.35]);
    let samples = r.parse("experiment", "samples", 100usize);
    let h_cell = r.parse("experiment", "h_cell", 0.1f64);
    let interface_x1 = r.parse("experiment", "interface_x1", 0.0f64);

    let dim = r.parse("grid", "dim", 2usize);
    let n = r.parse("grid", "n", 65usize);
    let nodes_per_cell = r.parse("grid", "nodes_per_cell", 16usize);
    let shape = r.parse("grid", "pattern", String::from("disk"));
    let radius = r.parse("grid", "radius", 0.25f64);
    let inclusion = r.parse("grid", "inclusion", String::from("solid"));

    let d = MaterialParams::default();
    let skeleton = r.parse("material", "skeleton", String::from("elastic"));
    let mut material = MaterialParams {
        mu1: r.parse("material", "mu1", d.mu1),
        mu2: r.parse("material", "mu2", d.mu2),
        lambda: r.parse("material", "lambda", d.lambda),
        c_f1: r.parse("material", "c_f1", d.c_f1),
        c_f2: r.parse("material", "c_f2", d.c_f2),
        c_s: r.parse("material", "c_s", d.c_s),
        p0: r.parse("material", "p0", d.p0),
        epsilon: r.parse("material", "epsilon", d.epsilon),
        h_mollify: r.parse("material", "h_mollify", d.h_mollify),
        tau: r.parse("material", "tau", d.tau),
        t_final: r.parse("material", "t_final", d.t_final),
        cg_tol: r.parse("material", "cg_tol", d.cg_tol),
        cg_max_iter: r.parse("material", "cg_max_iter", d.cg_max_iter),
        ..d
    };
    let dp = r.parse("material", "dp", 1.0f64);
    material.p_drive = DrivingPressure::linear_drop(dp);
    material.skeleton = match skeleton.as_str() {
        "elastic" => SkeletonMode::Elastic,
        "rigid" => SkeletonMode::Rigid,
        other => {
            r.check(
                false,
                "material",
                "skeleton",
                format!("skeleton must be `elastic` or `rigid`, got `{other}`"),
            );
            SkeletonMode::Elastic
        }
    };

    r.check((2..=3).contains(&dim), "grid", "dim", format!("dim must be 2 or 3, got {dim}"));
    r.check(n >= 3, "grid", "n", format!("n must be at least 3, got {n}"));
    r.check(
        nodes_per_cell >= crate::geometry::MIN_NODES_PER_CELL,
        "grid",
        "nodes_per_cell",
        format!(
            "nodes_per_cell must be at least {}, got {nodes_per_cell}",
            crate::geometry::MIN_NODES_PER_CELL
        ),
    );
    let kind = match shape.as_str() {
        "disk" => CellShape::Disk,
        "sphere" => CellShape::Sphere,
        "square" => CellShape::SquareBlock,
        other => {
            r.check(
                false,
                "grid",
                "pattern",
                format!("pattern must be disk, sphere or square, got `{other}`"),
            );
            CellShape::Disk
        }
    };
    let inclusion = match inclusion.as_str() {
        "solid" => Inclusion::Solid,
        "pore" => Inclusion::Pore,
        other => {
            r.check(
                false,
                "grid",
                "inclusion",
                format!("inclusion must be `solid` or `pore`, got `{other}`"),
            );
            Inclusion::Solid
        }
    };
    let pattern = match UnitCellPattern::with_inclusion(kind, radius, inclusion) {
        Ok(p) => p,
        Err(e) => {
            r.check(false, "grid", "radius", e.to_string());
            UnitCellPattern {
                kind,
                radius: 0.25,
                inclusion,
            }
        }
    };

    if let Err(e) = cells_across(material.epsilon) {
        r.check(false, "material", "epsilon", e.to_string());
    }
    for (key, v) in [
        ("mu1", material.mu1),
        ("mu2", material.mu2),
        ("lambda", material.lambda),
        ("c_f1", material.c_f1),
        ("c_f2", material.c_f2),
        ("c_s", material.c_s),
        ("tau", material.tau),
        ("h_mollify", material.h_mollify),
        ("cg_tol", material.cg_tol),
    ] {
        r.check(
            v > 0.0 && v.is_finite(),
            "material",
            key,
            format!("{key} must be positive, got {v}"),
        );
    }
    r.check(material.t_final >= 0.0, "material", "t_final", "t_final must be nonnegative");
    for &e in &eps_list {
        if let Err(err) = cells_across(e) {
            r.check(false, "experiment", "eps_list", err.to_string());
        }
    }
    r.check(
        eps_list.windows(2).all(|w| w[1] < w[0]),
        "experiment",
        "eps_list",
        "eps_list must be strictly decreasing",
    );
    r.check(
        h_list.iter().all(|&h| h > 0.0),
        "experiment",
        "h_list",
        "h_list entries must be positive",
    );
    r.check(
        h_list.windows(2).all(|w| w[1] < w[0]),
        "experiment",
        "h_list",
        "h_list must be strictly decreasing",
    );
    r.check(
        radius_list.iter().all(|&x| (0.0..0.5).contains(&x)),
        "experiment",
        "radius_list",
        "radii must lie in [0, 1/2)",
    );
    r.check(h_cell > 0.0, "experiment", "h_cell", "h_cell must be positive");

    // experiment-specific preconditions
    let spacing = 1.0 / (n.max(2) - 1) as f64;
    match experiment.as_str() {
        "mollifier-props" => {
            let floor = 2.0 * spacing;
            r.check(
                h_list.iter().all(|&h| h >= floor * (1.0 - 1e-12)),
                "experiment",
                "h_list",
                format!("h_list entries must be at least 2 * spacing = {floor}"),
            );
        }
        "micro-sim" => {
            r.check(
                material.h_mollify >= 2.0 * spacing * (1.0 - 1e-12),
                "material",
                "h_mollify",
                format!("h_mollify must be at least 2 * spacing = {}", 2.0 * spacing),
            );
            if let Ok(m) = cells_across(material.epsilon) {
                let per_cell = (n.max(2) - 1) as f64 / m as f64;
                r.check(
                    per_cell >= crate::geometry::MIN_NODES_PER_CELL as f64,
                    "grid",
                    "n",
                    format!(
                        "n = {n} resolves each cell with {per_cell:.2} intervals; at least {} required",
                        crate::geometry::MIN_NODES_PER_CELL
                    ),
                );
            }
        }
        "eps-convergence" => {
            r.check(
                material.mu1 == material.mu2,
                "material",
                "mu2",
                "eps-convergence needs a single fluid (mu1 = mu2)",
            );
            r.check(dim == 2, "grid", "dim", "eps-convergence runs in 2D");
        }
        "extension-bounds" => {
            let ceiling = 0.5 * (0.5 - radius);
            r.check(
                h_cell < ceiling,
                "experiment",
                "h_cell",
                format!("h_cell must be below (1/2 - radius) / 2 = {ceiling}"),
            );
            r.check(
                h_cell * nodes_per_cell as f64 >= 2.0,
                "experiment",
                "h_cell",
                "h_cell * nodes_per_cell must be at least 2",
            );
        }
        _ => {}
    }

    if errors.is_empty() {
        Ok(RunConfig {
            experiment,
            seed,
            out_dir,
            eps_list,
            h_list,
            radius_list,
            samples,
            h_cell,
            interface_x1,
            grid: GridSpec { dim, n, nodes_per_cell },
            pattern,
            material,
            dp,
            source: text.to_string(),
        })
    } else {
        errors.sort_by_key(|e| e.line.unwrap_or(usize::MAX));
        Err(errors)
    }
}

/// Tracks written files for the manifest.
struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }
}

fn write_manifest(dir: &Path, cfg: &RunConfig, files: &[String], status: &str, notes: &[String], seconds: f64) -> Result<()> {
    let mut f = BufWriter::new(File::create(dir.join("manifest.txt"))?);
    writeln!(f, "experiment = {}", cfg.experiment)?;
    writeln!(f, "seed = {}", cfg.seed)?;
    writeln!(f, "out = {}", cfg.out_dir.display())?;
    writeln!(f, "status = {status}")?;
    writeln!(f, "porohom_version = {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(f, "threads = {}", rayon::current_num_threads())?;
    writeln!(f, "wall_time_s = {seconds:.3}")?;
    writeln!(f, "files = {}", files.join(", "))?;
    for n in notes {
        writeln!(f, "note = {n}")?;
    }
    writeln!(f, "\n# config")?;
    for line in cfg.source.lines() {
        writeln!(f, "{line}")?;
    }
    f.flush()?;
    Ok(())
}

/// What an experiment reports besides its files.
#[derive(Default)]
struct Report {
    notes: Vec<String>,
}

/// Runs the configured experiment, writing CSVs and `manifest.txt`; returns the exit code.
pub fn run_experiment(cfg: &RunConfig) -> i32 {
    if !EXPERIMENTS.contains(&cfg.experiment.as_str()) {
        eprintln!("unknown experiment `{}`; available: {}", cfg.experiment, EXPERIMENTS.join(", "));
        return EXIT_VALIDATION;
    }
    if let Err(e) = fs::create_dir_all(&cfg.out_dir) {
        eprintln!("cannot create {}: {e}", cfg.out_dir.display());
        return EXIT_VALIDATION;
    }
    let start = Instant::now();
    let mut out = Output {
        dir: cfg.out_dir.clone(),
        files: Vec::new(),
    };
    let mut report = Report::default();
    let result = match cfg.experiment.as_str() {
        "mollifier-props" => mollifier_props(cfg, &mut out, &mut report),
        "poincare-scaling" => poincare_scaling(cfg, &mut out, &mut report),
        "extension-bounds" => extension_bounds(cfg, &mut out, &mut report),
        "micro-sim" => micro_sim(cfg, &mut out, &mut report),
        "cell-problems" => cell_problems(cfg, &mut out, &mut report),
        "eps-convergence" => eps_convergence(cfg, &mut out, &mut report),
        _ => unreachable!("registry checked above"),
    };
    let seconds = start.elapsed().as_secs_f64();
    let (status, code) = match &result {
        Ok(()) => ("complete".to_string(), EXIT_OK),
        Err(e) => {
            eprintln!("{}: {e}", cfg.experiment);
            let code = match e {
                Error::NotConverged { .. }
                | Error::EigenStagnation { .. }
                | Error::Cfl { .. }
                | Error::Singular(_)
                | Error::Degenerate { .. }
                | Error::Io(_) => EXIT_SOLVER,
                _ => EXIT_VALIDATION,
            };
            (format!("partial ({e})"), code)
        }
    };
    if let Err(e) = write_manifest(&cfg.out_dir, cfg, &out.files, &status, &report.notes, seconds) {
        eprintln!("cannot write manifest: {e}");
        return EXIT_SOLVER;
    }
    code
}

fn full_grid(cfg: &RunConfig) -> Result<Grid> {
    Grid::unit_cube(cfg.grid.dim, cfg.grid.n)
}

/// Cartesian trapezoid of the kernel over `[-1, 1]^dim` with `m` intervals per axis.
pub fn kernel_cartesian_integral(dim: usize, m: usize) -> f64 {
    let h = 2.0 / m as f64;
    let w = |i: usize| if i == 0 || i == m { 0.5 } else { 1.0 };
    let mut total = 0.0;
    let range2 = if dim >= 2 { m } else { 0 };
    let range3 = if dim >= 3 { m } else { 0 };
    for k in 0..=range3 {
        for j in 0..=range2 {
            for i in 0..=m {
                let x = [-1.0 + i as f64 * h, -1.0 + j as f64 * h, -1.0 + k as f64 * h];
                let r2: f64 = x[..dim].iter().map(|v| v * v).sum();
                let mut wt = w(i);
                if dim >= 2 {
                    wt *= w(j);
                }
                if dim >= 3 {
                    wt *= w(k);
                }
                total += wt * mollifier::kernel_value(r2.sqrt(), dim);
            }
        }
    }
    total * h.powi(dim as i32)
}

fn mollifier_props(cfg: &RunConfig, out: &mut Output, _report: &mut Report) -> Result<()> {
    let g = full_grid(cfg)?;
    let dim = g.dim();
    let mut f = out.create("normalization.csv")?;
    writeln!(f, "dim,constant,cartesian_integral,rel_error")?;
    let m = if dim == 2 { 2000 } else { 200 };
    let integral = kernel_cartesian_integral(dim, m);
    writeln!(
        f,
        "{dim},{},{integral},{}",
        mollifier::normalization_constant(dim),
        (integral - 1.0).abs()
    )?;
    f.flush()?;

    let h_mid = cfg.h_list[cfg.h_list.len() / 2];
    let kernel = MollifierKernel::new(&g, h_mid)?;
    let mut rng = XorShift64Star::new(cfg.seed);
    let mut fa = out.create("self_adjoint.csv")?;
    let mut fb = out.create("nonexpansive.csv")?;
    writeln!(fa, "sample,lhs,rhs,rel_diff")?;
    writeln!(fb, "sample,l2_in,l2_out,l1_in,l1_out,violation")?;
    for s in 0..cfg.samples {
        let u = rng.scalar_field::<f64>(&g, -1.0, 1.0);
        let v = rng.scalar_field::<f64>(&g, -1.0, 1.0);
        let mu = kernel.apply_scalar(&u)?;
        let mv = kernel.apply_scalar(&v)?;
        let lhs = inner(&mu, &v)?;
        let rhs = inner(&u, &mv)?;
        writeln!(fa, "{s},{lhs},{rhs},{}", (lhs - rhs).abs() / lhs.abs().max(rhs.abs()))?;
        let (l2i, l2o) = (l2_norm(&u, None)?, l2_norm(&mu, None)?);
        let (l1i, l1o) = (l1_norm(&u, None), l1_norm(&mu, None));
        let violation = l2o > l2i * (1.0 + 1e-12) || l1o > l1i * (1.0 + 1e-12);
        writeln!(fb, "{s},{l2i},{l2o},{l1i},{l1o},{}", violation as u8)?;
    }
    fa.flush()?;
    fb.flush()?;

    let pi = std::f64::consts::PI;
    let smooth = ScalarField::<f64>::from_fn(&g, |x| (0..dim).map(|a| (pi * x[a]).cos()).product());
    let rep = mollifier::mollify_convergence_report(&smooth, &cfg.h_list)?;
    let mut fc = out.create("convergence.csv")?;
    writeln!(fc, "h,error_norm,observed_order")?;
    for row in &rep.rows {
        writeln!(
            fc,
            "{},{},{}",
            row.h,
            row.error_norm,
            row.observed_order.map(|o| o.to_string()).unwrap_or_default()
        )?;
    }
    fc.flush()?;
    Ok(())
}

/// Indicator of the centred cube of side `side`.
pub fn centred_cube_mask(grid: &Grid, side: f64) -> ScalarField<f64> {
    let half = 0.5 * side + 1e-12;
    ScalarField::from_fn(grid, |x| if (0..grid.dim()).all(|a| x[a].abs() <= half) { 1.0 } else { 0.0 })
}

/// Poincaré constants of `eps Q` for each `eps`, with `Q` the unit cube.
pub fn poincare_table(grid: &Grid, eps_list: &[f64]) -> Result<Vec<(f64, ConstantEstimate<f64>)>> {
    eps_list
        .iter()
        .map(|&e| Ok((e, analysis::poincare_constant(&centred_cube_mask(grid, e))?)))
        .collect()
}

fn poincare_scaling(cfg: &RunConfig, out: &mut Output, _report: &mut Report) -> Result<()> {
    let g = full_grid(cfg)?;
    let rows = poincare_table(&g, &cfg.eps_list)?;
    let base = analysis::poincare_constant(&centred_cube_mask(&g, 1.0))?.value;
    let mut f = out.create("poincare.csv")?;
    writeln!(f, "eps,value,iterations,residual,ratio")?;
    for (e, c) in rows {
        writeln!(f, "{e},{},{},{},{}", c.value, c.iterations, c.residual, c.value / base)?;
    }
    f.flush()?;
    Ok(())
}

/// One row of the extension study.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtensionRow {
    pub eps: f64,
    pub h: f64,
    pub solid_norm: f64,
    pub extended_norm: f64,
    /// `|extend_solid(w_s)|_Omega / |w_s|_solid`.
    pub ratio: f64,
    /// Fluid nodes where `extend_fluid` changed `w_f`.
    pub fluid_identity_violations: usize,
    pub fluid_bound_holds: bool,
    pub extension_finite: bool,
}

/// Extension norms for each `eps` at `nodes_per_cell` intervals per cell, radius `h_cell * eps`.
pub fn extension_table(
    pattern: UnitCellPattern,
    dim: usize,
    nodes_per_cell: usize,
    h_cell: f64,
    eps_list: &[f64],
    seed: u64,
) -> Result<Vec<ExtensionRow>> {
    let mut rng = XorShift64Star::new(seed);
    let mut rows = Vec::new();
    for &eps in eps_list {
        let m = cells_across(eps)?;
        let g = Grid::unit_cube(dim, m * nodes_per_cell + 1)?;
        let mask = build_phase_mask::<f64>(pattern, eps, &g)?;
        let ws = rng.vector_field::<f64>(&g, -1.0, 1.0);
        let wf = rng.vector_field::<f64>(&g, -1.0, 1.0);
        let h = h_cell * eps;
        let ext = analysis::extend_solid(&ws, &mask, h)?;
        let solid = mask.solid_indicator();
        let solid_norm = l2_norm(&ws, Some(&solid))?;
        let extended_norm = l2_norm(&ext, None)?;
        let fl = analysis::extend_fluid(&wf, &ws, &mask, SignConvention::Difference)?;
        let nn = g.node_count();
        let fluid_identity_violations = (0..fl.values().len())
            .filter(|&k| mask.is_pore(k % nn) && fl.values()[k] != wf.values()[k])
            .count();
        let lhs = l2_norm(&fl, None)?;
        let rhs = l2_norm(&wf, Some(&mask.chi_eps))? + solid_norm;
        rows.push(ExtensionRow {
            eps,
            h,
            solid_norm,
            extended_norm,
            ratio: extended_norm / solid_norm,
            fluid_identity_violations,
            fluid_bound_holds: lhs <= rhs * (1.0 + 1e-12),
            extension_finite: ext.all_finite(),
        });
    }
    Ok(rows)
}

fn extension_bounds(cfg: &RunConfig, out: &mut Output, _report: &mut Report) -> Result<()> {
    let rows = extension_table(
        cfg.pattern,
        cfg.grid.dim,
        cfg.grid.nodes_per_cell,
        cfg.h_cell,
        &cfg.eps_list,
        cfg.seed,
    )?;
    let mut f = out.create("extension.csv")?;
    writeln!(
        f,
        "eps,h,solid_norm,extended_norm,ratio_M,fluid_identity_violations,fluid_bound_holds"
    )?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            r.eps, r.h, r.solid_norm, r.extended_norm, r.ratio, r.fluid_identity_violations, r.fluid_bound_holds as u8
        )?;
    }
    f.flush()?;
    Ok(())
}

fn micro_sim(cfg: &RunConfig, out: &mut Output, report: &mut Report) -> Result<()> {
    let g = full_grid(cfg)?;
    let params = &cfg.material;
    let mask = build_phase_mask::<f64>(cfg.pattern, params.epsilon, &g)?;
    let mask = init_fluid_partition(&mask, cfg.interface_x1);
    let mut fe = out.create("energy.csv")?;
    let mut fi = out.create("interface.csv")?;
    writeln!(fe, "t,elastic,compressive,dissipated,work,residual")?;
    writeln!(fi, "t,mean_x1,width")?;
    let mut io_error: Option<std::io::Error> = None;
    let state = SimState::initial(&mask, params)?;
    let last = microsim::run(state, &mask, params, |s| {
        let e = microsim::energy_report(s, &mask, params);
        let c = transport::interface_summary(&s.chi, &mask);
        let r = writeln!(
            fe,
            "{},{},{},{},{},{}",
            s.t, e.elastic, e.compressive, e.dissipated_cumulative, e.external_work_cumulative, e.balance_residual
        )
        .and_then(|_| writeln!(fi, "{},{},{}", s.t, c.mean_x1, c.width));
        if let Err(err) = r {
            io_error.get_or_insert(err);
        }
    });
    fe.flush()?;
    fi.flush()?;
    if let Some(e) = io_error {
        return Err(e.into());
    }
    let last = last?;
    report.notes.push(format!("max_energy_residual = {:e}", last.energy.max_residual));
    report
        .notes
        .push(format!("energy_balance_ok = {}", last.energy.max_residual <= 1e-6));
    mask.write_csv(out.create("phase.csv")?)?;
    last.w.write_csv(out.create("w.csv")?)?;
    last.v.write_csv(out.create("v.csv")?)?;
    last.mu.write_csv(out.create("mu.csv")?)?;
    last.chi.write_csv(out.create("chi.csv")?)?;
    let p = microsim::pressure_from_displacement(
        &last.w,
        &crate::geometry::PhaseMask {
            chi: last.chi.clone(),
            ..mask.clone()
        },
        params,
    )?;
    p.write_csv(out.create("pressure.csv")?)?;
    Ok(())
}

fn cell_problems(cfg: &RunConfig, out: &mut Output, _report: &mut Report) -> Result<()> {
    let g = Grid::periodic_cell(cfg.grid.dim, cfg.grid.nodes_per_cell)?;
    let tensors = homogenize::effective_tensors(cfg.pattern, &g, cfg.material.mu1, cfg.material.lambda)?;
    tensors.write_csv(out.create("tensors.csv")?)?;
    let mut f = out.create("permeability_sweep.csv")?;
    writeln!(f, "radius,porosity,K11,K22,K12,raw_asymmetry,status")?;
    for &r in &cfg.radius_list {
        let pat = UnitCellPattern::with_inclusion(cfg.pattern.kind, r, cfg.pattern.inclusion)?;
        let k = homogenize::permeability_cell_problem(pat, &g, cfg.material.mu1)?;
        writeln!(
            f,
            "{r},{},{},{},{},{},{:?}",
            k.porosity, k.k[0][0], k.k[1][1], k.k[0][1], k.raw_asymmetry, k.status
        )?;
    }
    f.flush()?;
    Ok(())
}

fn eps_convergence(cfg: &RunConfig, out: &mut Output, report: &mut Report) -> Result<()> {
    let policy = MicroPolicy {
        nodes_per_cell: cfg.grid.nodes_per_cell,
        ..Default::default()
    };
    let table = homogenize::compare_micro_macro(cfg.pattern, cfg.material.mu1, cfg.dp, &cfg.eps_list, policy)?;
    table.write_csv(out.create("convergence.csv")?)?;
    report.notes.push(format!("monotone = {}", table.monotone()));
    report.notes.push(format!("K11 = {}", table.permeability.k[0][0]));
    Ok(())
}

/// Parses the config at `path`, applies CLI overrides and runs the experiment.
pub fn run_from_cli(experiment: &str, config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> i32 {
    if !EXPERIMENTS.contains(&experiment) {
        eprintln!("unknown experiment `{experiment}`; available: {}", EXPERIMENTS.join(", "));
        return EXIT_VALIDATION;
    }
    let text = match fs::read_to_string(config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", config.display());
            return EXIT_VALIDATION;
        }
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(errors) => {
            for e in errors {
                eprintln!("{}: {e}", config.display());
            }
            return EXIT_VALIDATION;
        }
    };
    if cfg.experiment != experiment {
        eprintln!("{}: config is for `{}`, not `{experiment}`", config.display(), cfg.experiment);
        return EXIT_VALIDATION;
    }
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    run_experiment(&cfg)
}

/// Frozen-transport, rigid-skeleton parameters used by tests and studies.
pub fn single_fluid(mut params: MaterialParams) -> MaterialParams {
    params.mu2 = params.mu1;
    params.c_f2 = params.c_f1;
    params.transport = TransportMode::Frozen;
    params
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = parse_config("[experiment]\nname = cell-problems\n").unwrap();
        assert_eq!(cfg.seed, 1);
        assert_eq!(
            cfg.grid,
            GridSpec {
                dim: 2,
                n: 65,
                nodes_per_cell: 16
            }
        );
        assert_eq!(cfg.eps_list, vec![1.0, 0.5, 0.25]);
        assert_eq!(cfg.material.epsilon, 0.25);
        assert_eq!(cfg.pattern, UnitCellPattern::new(CellShape::Disk, 0.25).unwrap());
    }

    #[test]
    fn epsilon_must_be_integer_reciprocal() {
        let errs = parse_config("[experiment]\nname = micro-sim\n[material]\nepsilon = 0.3\n").unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].line, Some(4));
        assert!(errs[0].message.contains("reciprocal"));
    }

    #[test]
    fn duplicate_key_reports_both_lines() {
        let errs = parse_config("[experiment]\nname = cell-problems\n[grid]\nn = 33\n# again\nn = 65\n").unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].line, Some(6));
        assert!(errs[0].message.contains("lines 4 and 6"), "{}", errs[0]);
    }

    #[test]
    fn all_errors_are_collected() {
        let text = "[experiment]\nname = nope\nbogus = 1\n[grid]\ndim = 7\n[material]\nmu1 = -1\ntau = abc\n";
        let errs = parse_config(text).unwrap_err();
        let lines: Vec<_> = errs.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![Some(2), Some(3), Some(5), Some(7), Some(8)], "{errs:?}");
    }

    #[test]
    fn missing_name_is_reported() {
        let errs = parse_config("[grid]\nn = 33\n").unwrap_err();
        assert!(errs.iter().any(|e| e.line.is_none() && e.message.contains("name")));
    }

    #[test]
    fn kernel_integral_is_one() {
        assert!((kernel_cartesian_integral(2, 2000) - 1.0).abs() < 1e-8);
        assert!((kernel_cartesian_integral(1, 20000) - 1.0).abs() < 1e-8);
    }
}
