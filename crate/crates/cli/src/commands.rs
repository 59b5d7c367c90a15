use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde::Serialize;

use dipolar_chains::chain::{chain_wavefunction, layer_density, write_density_csv, DensityPoint, LayerMarginal};
use dipolar_chains::jacobi::{Bodies, Pair};
use dipolar_chains::landscape::{expansion_coefficients, minimum_condition};
use dipolar_chains::output::fmt_sig;
use dipolar_chains::potential::{
    emit_cut, emit_grid, stationary_points_on_axis, write_cut_csv, write_grid_csv, AxisRange, StationaryKind,
};
use dipolar_chains::svm::{self, write_history_csv, SvmOptions, SvmReport, SvmState};
use dipolar_chains::variational::{
    energy_sweep as sweep, write_sweep_long_csv, write_sweep_wide_csv, Method, OscConstant, OscOptions, OuterPairRule,
    SweepSvm,
};
use dipolar_chains::{Angle, Error, ModelConfig, Strategy};

use crate::config::{ConfigError, ConfigFile, ConfigView};
use crate::CommonArgs;

#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Numerical(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) | Failure::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Validation(format!("{}: {e}", path.display()))
}

pub struct Context<'a> {
    common: &'a CommonArgs,
    file: &'a ConfigFile,
    threads: Option<usize>,
}

const COMMON_KEYS: [&str; 3] = ["out", "seed", "verify"];
const SECTIONS: [&str; 6] = ["potential-grid", "potential-cut", "landscape", "energy-sweep", "density", "svm-run"];

impl<'a> Context<'a> {
    pub fn new(common: &'a CommonArgs, file: &'a ConfigFile, threads: Option<usize>) -> Self {
        Self { common, file, threads }
    }

    fn section(&self, name: &'a str, keys: &[&str]) -> Result<Section<'a>, Failure> {
        let mut known: Vec<&str> = COMMON_KEYS.to_vec();
        known.extend_from_slice(keys);
        self.file.check_sections(&SECTIONS)?;
        self.file.check_known(name, &known)?;
        let view = self.file.view(name);
        let out = match &self.common.out {
            Some(p) => p.clone(),
            None => view.get::<PathBuf>("out")?.unwrap_or_else(|| PathBuf::from("out")),
        };
        let seed = match self.common.seed {
            Some(s) => s,
            None => view.get::<u64>("seed")?.unwrap_or(1),
        };
        let verify = self.common.verify || view.get::<bool>("verify")?.unwrap_or(false);
        Ok(Section { name, view, out, seed, verify, threads: self.threads, outputs: Vec::new() })
    }
}

/// Resolved settings of one subcommand run and the files it wrote.
struct Section<'a> {
    name: &'a str,
    view: ConfigView<'a>,
    out: PathBuf,
    seed: u64,
    verify: bool,
    threads: Option<usize>,
    outputs: Vec<String>,
}

impl Section<'_> {
    /// Flag value, else config value, else default.
    fn pick<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, Failure>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.view.get::<T>(key)?.unwrap_or(default)),
        }
    }

    fn pick_with<T, E: fmt::Display>(
        &self,
        flag: Option<&str>,
        key: &str,
        default: T,
        parse: impl Fn(&str) -> Result<T, E>,
    ) -> Result<T, Failure> {
        match flag {
            Some(s) => parse(s).map_err(|e| Failure::Validation(format!("invalid value '{s}' for --{key}: {e}"))),
            None => Ok(self.view.get_with(key, parse)?.unwrap_or(default)),
        }
    }

    /// Validation error pointing at the config line when the key came from there.
    fn invalid(&self, key: &str, flag_given: bool, message: String) -> Failure {
        if flag_given {
            Failure::Validation(format!("--{key}: {message}"))
        } else {
            self.view.error(key, message).into()
        }
    }

    fn write_file(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), Failure> {
        fs::create_dir_all(&self.out).map_err(|e| io_failure(&self.out, e))?;
        let path = self.out.join(name);
        let file = fs::File::create(&path).map_err(|e| io_failure(&path, e))?;
        let mut w = BufWriter::new(file);
        body(&mut w).and_then(|_| w.flush()).map_err(|e| io_failure(&path, e))?;
        log::info!("wrote {}", path.display());
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn finish<C: Serialize>(mut self, config: &C) -> Result<(), Failure> {
        #[derive(Serialize)]
        struct Manifest<'a, C: Serialize> {
            command: &'a str,
            version: &'a str,
            seed: u64,
            verify: bool,
            threads: Option<usize>,
            config: &'a C,
            outputs: &'a [String],
        }
        let outputs = std::mem::take(&mut self.outputs);
        let manifest = Manifest {
            command: self.name,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            verify: self.verify,
            threads: self.threads,
            config,
            outputs: &outputs,
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        let name = format!("manifest_{}.json", self.name);
        self.write_file(&name, |w| writeln!(w, "{json}"))
    }
}

fn strategy() -> Strategy {
    if Strategy::parallel_available() {
        Strategy::Parallel
    } else {
        Strategy::Serial
    }
}

fn parse_angle(s: &str) -> Result<Angle, Error> {
    let a: Angle = s.parse()?;
    ModelConfig::new(a.radians(), 0.0)?;
    Ok(a)
}

fn parse_angles(s: &str) -> Result<Vec<Angle>, Error> {
    let v: Vec<Angle> =
        s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(parse_angle).collect::<Result<_, _>>()?;
    if v.is_empty() {
        return Err(Error::InvalidInput("angle list is empty".into()));
    }
    Ok(v)
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|e| format!("'{t}': {e}")))
        .collect()
}

fn u_label(u: f64) -> String {
    format!("U{u}")
}

#[derive(Serialize)]
struct AngleRecord {
    name: String,
    radians: f64,
}

impl From<Angle> for AngleRecord {
    fn from(a: Angle) -> Self {
        Self { name: a.to_string(), radians: a.radians() }
    }
}

#[derive(Serialize)]
struct RangeRecord {
    min: f64,
    max: f64,
    points: usize,
}

impl From<AxisRange> for RangeRecord {
    fn from(r: AxisRange) -> Self {
        Self { min: r.min, max: r.max, points: r.points }
    }
}

// ---------------------------------------------------------------- potential

#[derive(Args, Debug, Default)]
pub struct GridArgs {
    /// Tilt angle of the grid: radians or pi/2, theta_c, theta_c_star
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    u: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    x_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    x_max: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    y_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    y_max: Option<f64>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    /// Angles of the accompanying y = 0 cuts (comma list, "none" for no cuts)
    #[arg(long)]
    cuts: Option<String>,
    #[arg(long)]
    cut_points: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct CutArgs {
    /// Comma list of tilt angles
    #[arg(long)]
    thetas: Option<String>,
    #[arg(long)]
    u: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    x_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    x_max: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
}

const DEFAULT_CUTS: [Angle; 4] = [Angle::Radians(0.0), Angle::ThetaC, Angle::ThetaCStar, Angle::Perpendicular];

fn cut_file(angle: Angle) -> String {
    format!("cut_theta_{}.csv", angle.label())
}

/// Cuts at each angle; with `verify`, check the θ = 0 cut for two equal
/// minima and every grid for exact y-mirror symmetry.
fn write_cuts(sec: &mut Section, angles: &[Angle], u: f64, x: AxisRange) -> Result<(), Failure> {
    for &angle in angles {
        let config = ModelConfig::new(angle.radians(), u)?;
        let cut = emit_cut(&config, x);
        sec.write_file(&cut_file(angle), |w| write_cut_csv(w, &cut))?;
        if sec.verify && angle.radians() == 0.0 {
            let minima: Vec<_> =
                stationary_points_on_axis(&config)?.into_iter().filter(|p| p.kind == StationaryKind::Min).collect();
            let equal = minima.len() == 2
                && (minima[0].x + minima[1].x).abs() < 1e-9
                && (minima[0].value - minima[1].value).abs() <= 1e-12 * minima[0].value.abs().max(1.0);
            if !equal {
                return Err(Failure::Numerical(format!(
                    "verify: theta = 0 cut does not have two equal minima: {minima:?}"
                )));
            }
        }
    }
    Ok(())
}

pub fn potential_grid(ctx: &Context, a: GridArgs) -> Result<(), Failure> {
    let mut sec = ctx.section(
        "potential-grid",
        &["theta", "u", "x-min", "x-max", "y-min", "y-max", "nx", "ny", "cuts", "cut-points"],
    )?;
    let theta = sec.pick_with(a.theta.as_deref(), "theta", Angle::Radians(std::f64::consts::FRAC_PI_4), parse_angle)?;
    let u = sec.pick(a.u, "u", 1.0)?;
    let config = ModelConfig::new(theta.radians(), u).map_err(|e| sec.invalid("u", a.u.is_some(), e.to_string()))?;
    let x = AxisRange::new(
        sec.pick(a.x_min, "x-min", -3.0)?,
        sec.pick(a.x_max, "x-max", 3.0)?,
        sec.pick(a.nx, "nx", 101)?,
    )?;
    let y = AxisRange::new(
        sec.pick(a.y_min, "y-min", -3.0)?,
        sec.pick(a.y_max, "y-max", 3.0)?,
        sec.pick(a.ny, "ny", 101)?,
    )?;
    let cuts = sec.pick_with(a.cuts.as_deref(), "cuts", DEFAULT_CUTS.to_vec(), |s| {
        if s.trim() == "none" {
            Ok(Vec::new())
        } else {
            parse_angles(s)
        }
    })?;
    let cut_range = AxisRange::new(x.min, x.max, sec.pick(a.cut_points, "cut-points", 601)?)?;

    let grid = emit_grid(&config, x, y, strategy());
    if sec.verify {
        let nx = x.points;
        for j in 0..y.points {
            for i in 0..nx {
                let p = grid[j * nx + i];
                let q = grid[(y.points - 1 - j) * nx + i];
                if p.value.to_bits() != q.value.to_bits() && (y.min + y.max) == 0.0 {
                    return Err(Failure::Numerical(format!(
                        "verify: grid not symmetric in y at x = {}, y = {}",
                        p.x, p.y
                    )));
                }
            }
        }
    }
    sec.write_file(&format!("grid_theta_{}.csv", theta.label()), |w| write_grid_csv(w, &grid))?;
    write_cuts(&mut sec, &cuts, u, cut_range)?;

    #[derive(Serialize)]
    struct Resolved {
        theta: AngleRecord,
        u: f64,
        x: RangeRecord,
        y: RangeRecord,
        cuts: Vec<AngleRecord>,
        cut_points: usize,
    }
    let resolved = Resolved {
        theta: theta.into(),
        u,
        x: x.into(),
        y: y.into(),
        cuts: cuts.into_iter().map(Into::into).collect(),
        cut_points: cut_range.points,
    };
    sec.finish(&resolved)
}

pub fn potential_cut(ctx: &Context, a: CutArgs) -> Result<(), Failure> {
    let mut sec = ctx.section("potential-cut", &["thetas", "u", "x-min", "x-max", "points"])?;
    let thetas = sec.pick_with(a.thetas.as_deref(), "thetas", DEFAULT_CUTS.to_vec(), parse_angles)?;
    let u = sec.pick(a.u, "u", 1.0)?;
    if !(u >= 0.0) {
        return Err(sec.invalid("u", a.u.is_some(), format!("U must be >= 0, got {u}")));
    }
    let x = AxisRange::new(
        sec.pick(a.x_min, "x-min", -3.0)?,
        sec.pick(a.x_max, "x-max", 3.0)?,
        sec.pick(a.points, "points", 601)?,
    )?;
    write_cuts(&mut sec, &thetas, u, x)?;

    #[derive(Serialize)]
    struct Resolved {
        thetas: Vec<AngleRecord>,
        u: f64,
        x: RangeRecord,
    }
    sec.finish(&Resolved { thetas: thetas.into_iter().map(Into::into).collect(), u, x: x.into() })
}

// ---------------------------------------------------------------- landscape

#[derive(Args, Debug, Default)]
pub struct LandscapeArgs {
    #[arg(long)]
    theta_min: Option<String>,
    #[arg(long)]
    theta_max: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
}

pub fn landscape(ctx: &Context, a: LandscapeArgs) -> Result<(), Failure> {
    let mut sec = ctx.section("landscape", &["theta-min", "theta-max", "steps"])?;
    let lo = sec.pick_with(a.theta_min.as_deref(), "theta-min", Angle::Radians(0.1), parse_angle)?;
    let hi = sec.pick_with(a.theta_max.as_deref(), "theta-max", Angle::Perpendicular, parse_angle)?;
    let steps = sec.pick(a.steps, "steps", 150)?;
    if steps < 2 {
        return Err(sec.invalid("steps", a.steps.is_some(), "need at least 2 steps".into()));
    }
    if !(hi.radians() > lo.radians()) {
        return Err(sec.invalid("theta-max", a.theta_max.is_some(), "theta-max must exceed theta-min".into()));
    }
    let thetas = AxisRange::new(lo.radians(), hi.radians(), steps)?.values();
    let rows = strategy().map(thetas.len(), |i| expansion_coefficients(thetas[i]));
    let mut ok = Vec::new();
    for (theta, row) in thetas.iter().zip(rows) {
        match row {
            Ok(c) => ok.push(c),
            Err(e) => log::warn!("theta = {theta}: {e}"),
        }
    }
    if ok.is_empty() {
        return Err(Failure::Numerical("no angle in the range has a deep minimum".into()));
    }
    if sec.verify {
        for c in &ok {
            let r = minimum_condition(c.theta, c.a0);
            if r.abs() > 1e-10 {
                return Err(Failure::Numerical(format!(
                    "verify: minimum condition residual {r} at theta = {}",
                    c.theta
                )));
            }
        }
    }
    sec.write_file("landscape.csv", |w| {
        writeln!(w, "theta,a0,v0,alpha0,beta0")?;
        for c in &ok {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_sig(c.theta),
                fmt_sig(c.a0),
                fmt_sig(c.v0),
                fmt_sig(c.alpha0),
                fmt_sig(c.beta0)
            )?;
        }
        Ok(())
    })?;

    #[derive(Serialize)]
    struct Resolved {
        theta_min: AngleRecord,
        theta_max: AngleRecord,
        steps: usize,
        rows_written: usize,
    }
    sec.finish(&Resolved { theta_min: lo.into(), theta_max: hi.into(), steps, rows_written: ok.len() })
}

// ---------------------------------------------------------------- energies

#[derive(Args, Debug, Default)]
pub struct SweepArgs {
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    u_min: Option<f64>,
    #[arg(long)]
    u_max: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Explicit comma list of U values (overrides --u-min/--u-max/--steps)
    #[arg(long)]
    u_grid: Option<String>,
    /// Comma list of expansion, e_psi, osc, e_psi_osc, svm
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    basis_size: Option<usize>,
    #[arg(long)]
    candidates: Option<usize>,
    /// Outer-pair oscillator: independent (fit at 2d) or scaled
    #[arg(long)]
    outer_pair: Option<String>,
    /// Per-pair oscillator constant: pair (E[G*] - E_osc) or dropped
    #[arg(long)]
    osc_constant: Option<String>,
    /// Offer the harmonic Gaussians as the first SVM basis elements
    #[arg(long)]
    svm_seeded: Option<bool>,
}

fn parse_outer(s: &str) -> Result<OuterPairRule, String> {
    match s.trim() {
        "independent" => Ok(OuterPairRule::IndependentFit),
        "scaled" => Ok(OuterPairRule::ScaledNearest),
        other => Err(format!("expected 'independent' or 'scaled', got '{other}'")),
    }
}

fn parse_constant(s: &str) -> Result<OscConstant, String> {
    match s.trim() {
        "pair" => Ok(OscConstant::PairVariational),
        "dropped" => Ok(OscConstant::Dropped),
        other => Err(format!("expected 'pair' or 'dropped', got '{other}'")),
    }
}

fn svm_options(seed: u64, basis: usize, candidates: usize) -> SvmOptions {
    SvmOptions {
        target_basis: basis,
        candidates_per_step: candidates,
        seed,
        strategy: strategy(),
        ..SvmOptions::default()
    }
}

pub fn energy_sweep(ctx: &Context, a: SweepArgs) -> Result<(), Failure> {
    let mut sec = ctx.section(
        "energy-sweep",
        &[
            "theta",
            "u-min",
            "u-max",
            "steps",
            "u-grid",
            "methods",
            "basis-size",
            "candidates",
            "outer-pair",
            "osc-constant",
            "svm-seeded",
        ],
    )?;
    let theta = sec.pick_with(a.theta.as_deref(), "theta", Angle::Perpendicular, parse_angle)?;
    let explicit = sec.pick_with(a.u_grid.as_deref(), "u-grid", None, |s| parse_f64_list(s).map(Some))?;
    let grid_flag = a.u_grid.is_some();
    let strengths = match explicit {
        Some(list) => list,
        None => {
            let lo = sec.pick(a.u_min, "u-min", 1.0)?;
            let hi = sec.pick(a.u_max, "u-max", 20.0)?;
            let steps = sec.pick(a.steps, "steps", 20)?;
            if steps == 0 {
                return Err(sec.invalid("steps", a.steps.is_some(), "steps must be >= 1".into()));
            }
            if steps == 1 {
                vec![lo]
            } else {
                if !(hi > lo) {
                    return Err(sec.invalid(
                        "u-max",
                        a.u_max.is_some(),
                        format!("u-max ({hi}) must exceed u-min ({lo})"),
                    ));
                }
                AxisRange::new(lo, hi, steps)?.values()
            }
        }
    };
    if strengths.is_empty() || strengths.iter().any(|u| !(u.is_finite() && *u > 0.0)) {
        return Err(sec.invalid("u-grid", grid_flag, format!("U values must be positive, got {strengths:?}")));
    }
    if strengths.windows(2).any(|w| w[1] <= w[0]) {
        return Err(sec.invalid(
            "u-grid",
            grid_flag,
            format!("U values must be strictly increasing, got {strengths:?}"),
        ));
    }
    let methods = sec.pick_with(a.methods.as_deref(), "methods", Method::ALL.to_vec(), Method::parse_list)?;
    let basis = sec.pick(a.basis_size, "basis-size", 80)?;
    let candidates = sec.pick(a.candidates, "candidates", 30)?;
    if basis == 0 || candidates == 0 {
        return Err(Failure::Validation("basis-size and candidates must be positive".into()));
    }
    let osc = OscOptions {
        outer: sec.pick_with(a.outer_pair.as_deref(), "outer-pair", OuterPairRule::IndependentFit, parse_outer)?,
        constant: sec.pick_with(
            a.osc_constant.as_deref(),
            "osc-constant",
            OscConstant::PairVariational,
            parse_constant,
        )?,
    };
    let svm_cfg = SweepSvm {
        options: svm_options(sec.seed, basis, candidates),
        seed_with_harmonic: sec.pick(a.svm_seeded, "svm-seeded", false)?,
    };

    let cells = sweep(theta.radians(), &strengths, &methods, osc, &svm_cfg, strategy());
    for c in &cells {
        if let Some(e) = &c.error {
            log::warn!("U = {}, {}: {e}", c.strength_u, c.method);
        }
    }
    if sec.verify && methods.contains(&Method::Svm) {
        for &u in &strengths {
            let at = |m: Method| cells.iter().find(|c| c.method == m && c.strength_u == u).and_then(|c| c.energy);
            if let Some(s) = at(Method::Svm) {
                for m in [Method::EPsi, Method::EPsiOsc] {
                    if let Some(e) = at(m) {
                        if s > e + 1e-6 {
                            return Err(Failure::Numerical(format!("verify: svm {s} above {m} {e} at U = {u}")));
                        }
                    }
                }
            }
        }
    }
    let label = theta.label();
    sec.write_file(&format!("energy_sweep_theta_{label}.csv"), |w| write_sweep_long_csv(w, &cells))?;
    sec.write_file(&format!("energies_theta_{label}.csv"), |w| write_sweep_wide_csv(w, &cells))?;

    #[derive(Serialize)]
    struct Resolved {
        theta: AngleRecord,
        u_grid: Vec<f64>,
        methods: Vec<&'static str>,
        svm: SweepSvm,
        osc: OscOptions,
        failed_cells: usize,
    }
    let failed = cells.iter().filter(|c| c.energy.is_none()).count();
    sec.finish(&Resolved {
        theta: theta.into(),
        u_grid: strengths,
        methods: methods.iter().map(|m| m.label()).collect(),
        svm: svm_cfg,
        osc,
        failed_cells: failed,
    })
}

// ---------------------------------------------------------------- density

#[derive(Args, Debug, Default)]
pub struct DensityArgs {
    /// Comma list of theta:U pairs, e.g. theta_c_star:5,theta_c_star:15
    #[arg(long)]
    states: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    x_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    x_max: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    y_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    y_max: Option<f64>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
}

fn parse_states(s: &str) -> Result<Vec<(Angle, f64)>, String> {
    let v: Vec<(Angle, f64)> = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let (th, u) = t.rsplit_once(':').ok_or_else(|| format!("expected theta:U, got '{t}'"))?;
            let angle = parse_angle(th).map_err(|e| e.to_string())?;
            let u: f64 = u.trim().parse().map_err(|e| format!("'{u}': {e}"))?;
            if !(u > 0.0) {
                return Err(format!("U must be positive in '{t}'"));
            }
            Ok((angle, u))
        })
        .collect::<Result<_, _>>()?;
    if v.is_empty() {
        return Err("state list is empty".into());
    }
    Ok(v)
}

/// Unit mass over a window wide enough to hold the whole Gaussian, and the
/// output grid peaking at the layer's expected position.
fn check_density(
    layer: usize,
    marginal: &LayerMarginal,
    points: &[DensityPoint],
    x: AxisRange,
    y: AxisRange,
) -> Result<(), Failure> {
    let (sx, sy) = (marginal.variance_x.sqrt(), marginal.variance_y.sqrt());
    let n = 801;
    let hx = 16.0 * sx / (n - 1) as f64;
    let hy = 16.0 * sy / (n - 1) as f64;
    let mut total = 0.0;
    for j in 0..n {
        let yv = marginal.mean_y - 8.0 * sy + hy * j as f64;
        for i in 0..n {
            total += marginal.density(marginal.mean_x - 8.0 * sx + hx * i as f64, yv);
        }
    }
    total *= hx * hy;
    if (total - 1.0).abs() > 1e-6 {
        return Err(Failure::Numerical(format!("verify: layer {layer} density integrates to {total}")));
    }
    let peak = points.iter().max_by(|a, b| a.density.total_cmp(&b.density)).expect("non-empty grid");
    let inside = |v: f64, r: AxisRange| v >= r.min && v <= r.max;
    if inside(marginal.mean_x, x)
        && inside(marginal.mean_y, y)
        && ((peak.x - marginal.mean_x).abs() > x.step() || (peak.y - marginal.mean_y).abs() > y.step())
    {
        return Err(Failure::Numerical(format!(
            "verify: layer {layer} density peaks at ({}, {}), expected ({}, {})",
            peak.x, peak.y, marginal.mean_x, marginal.mean_y
        )));
    }
    Ok(())
}

pub fn density(ctx: &Context, a: DensityArgs) -> Result<(), Failure> {
    let mut sec = ctx.section("density", &["states", "x-min", "x-max", "y-min", "y-max", "nx", "ny"])?;
    let defaults = vec![(Angle::ThetaCStar, 5.0), (Angle::ThetaCStar, 15.0)];
    let states = sec.pick_with(a.states.as_deref(), "states", defaults, parse_states)?;
    let x = AxisRange::new(
        sec.pick(a.x_min, "x-min", -2.0)?,
        sec.pick(a.x_max, "x-max", 2.0)?,
        sec.pick(a.nx, "nx", 201)?,
    )?;
    let y = AxisRange::new(
        sec.pick(a.y_min, "y-min", -2.0)?,
        sec.pick(a.y_max, "y-max", 2.0)?,
        sec.pick(a.ny, "ny", 201)?,
    )?;
    for &(angle, u) in &states {
        let coeffs = expansion_coefficients(angle.radians())?;
        let state = chain_wavefunction(&coeffs, u);
        let mut layers = Vec::with_capacity(3);
        for layer in 1..=3 {
            layers.push((layer, layer_density(&state, layer, x, y, strategy())?));
        }
        if sec.verify {
            let a0 = coeffs.a0;
            for (layer, pts) in &layers {
                let m = state.layer_marginal(*layer)?;
                let expected = [a0, 0.0, -a0][*layer - 1];
                if (m.mean_x - expected).abs() > 1e-9 * a0.abs().max(1.0) || m.mean_y != 0.0 {
                    return Err(Failure::Numerical(format!(
                        "verify: layer {layer} centred at ({}, {}), expected ({expected}, 0)",
                        m.mean_x, m.mean_y
                    )));
                }
                check_density(*layer, &m, pts, x, y)?;
            }
        }
        let name = format!("density_theta_{}_{}.csv", angle.label(), u_label(u));
        sec.write_file(&name, |w| write_density_csv(w, &layers))?;
    }

    #[derive(Serialize)]
    struct StateRecord {
        theta: AngleRecord,
        u: f64,
    }
    #[derive(Serialize)]
    struct Resolved {
        states: Vec<StateRecord>,
        x: RangeRecord,
        y: RangeRecord,
        wavefunction: &'static str,
    }
    sec.finish(&Resolved {
        states: states.into_iter().map(|(t, u)| StateRecord { theta: t.into(), u }).collect(),
        x: x.into(),
        y: y.into(),
        wavefunction: "harmonic expansion chain",
    })
}

// ---------------------------------------------------------------- svm

#[derive(Args, Debug, Default)]
pub struct SvmArgs {
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    u: Option<f64>,
    #[arg(long)]
    bodies: Option<usize>,
    #[arg(long)]
    basis_size: Option<usize>,
    #[arg(long)]
    candidates: Option<usize>,
    /// Continue from a saved JSON report instead of an empty basis
    #[arg(long)]
    resume: Option<PathBuf>,
}

pub fn svm_run(ctx: &Context, a: SvmArgs) -> Result<(), Failure> {
    let mut sec = ctx.section("svm-run", &["theta", "u", "bodies", "basis-size", "candidates", "resume"])?;
    let theta = sec.pick_with(a.theta.as_deref(), "theta", Angle::Perpendicular, parse_angle)?;
    let u = sec.pick(a.u, "u", 10.0)?;
    if !(u > 0.0) {
        return Err(sec.invalid("u", a.u.is_some(), format!("U must be positive, got {u}")));
    }
    let bodies_n = sec.pick(a.bodies, "bodies", 3)?;
    let bodies = Bodies::from_count(bodies_n)
        .ok_or_else(|| sec.invalid("bodies", a.bodies.is_some(), format!("bodies must be 2 or 3, got {bodies_n}")))?;
    let basis = sec.pick(a.basis_size, "basis-size", 80)?;
    let candidates = sec.pick(a.candidates, "candidates", 30)?;
    if basis == 0 || candidates == 0 {
        return Err(Failure::Validation("basis-size and candidates must be positive".into()));
    }
    let resume = match a.resume {
        Some(p) => Some(p),
        None => sec.view.get::<PathBuf>("resume")?,
    };
    let resume_seed_given = ctx.common.seed.is_some() || sec.view.line("seed").is_some();
    let options = svm_options(sec.seed, basis, candidates);

    let state = match &resume {
        None => svm::run(theta.radians(), u, bodies, &options, &[])?.1,
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            let report: SvmReport = serde_json::from_str(&text)
                .map_err(|e| Failure::Validation(format!("{}: invalid SVM report: {e}", path.display())))?;
            if report.bodies != bodies_n || report.theta != theta.radians() || report.strength_u != u {
                return Err(Failure::Validation(format!(
                    "{}: report is for theta = {}, U = {}, bodies = {}",
                    path.display(),
                    report.theta,
                    report.strength_u,
                    report.bodies
                )));
            }
            let mut state = SvmState::from_report(&report)?;
            if resume_seed_given {
                state.rng_seed = sec.seed;
            }
            let mut steps = 0;
            while state.len() < basis && steps < 4 * basis {
                state.grow_basis(&options)?;
                steps += 1;
            }
            state
        }
    };
    let energy = state.energy().ok_or_else(|| Failure::Numerical("no basis element was accepted".into()))?;
    if sec.verify {
        if state.energy_history.windows(2).any(|w| w[1].1 > w[0].1) {
            return Err(Failure::Numerical("verify: energy history increases".into()));
        }
        let rebuilt = SvmState::from_report(&state.report())?.energy().unwrap_or(f64::NAN);
        if !((rebuilt - energy).abs() <= 1e-9 * energy.abs().max(1.0)) {
            return Err(Failure::Numerical(format!("verify: reloaded basis gives {rebuilt}, run gave {energy}")));
        }
    }
    let stem = format!("svm_theta_{}_{}_{}body", theta.label(), u_label(u), bodies_n);
    let report = state.report();
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    sec.write_file(&format!("{stem}.json"), |w| writeln!(w, "{json}"))?;
    sec.write_file(&format!("{stem}_history.csv"), |w| write_history_csv(w, &state.energy_history))?;

    #[derive(Serialize)]
    struct Resolved {
        theta: AngleRecord,
        u: f64,
        bodies: usize,
        options: SvmOptions,
        resume: Option<PathBuf>,
        energy: f64,
        pair_mean_x: Option<f64>,
    }
    let pair_mean_x = state.pair_mean_x(Pair::OneTwo).ok();
    sec.finish(&Resolved { theta: theta.into(), u, bodies: bodies_n, options, resume, energy, pair_mean_x })
}
