//! Command-line front end. Exit codes: 0 when every check passes, 1 when a
//! check fails, 2 on invalid input. Nothing is written on exit 2.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::euler_states::{entropy, lift_extended, ConservativeState, ExtendedState, GasModel};
use crate::measure::{Atom, AtomicYoungMeasure, Region, RegionStatus};
use crate::mvs_verifier::{verify, Dictionary, QuadraturePolicy, VerifyReport, DEFAULT_TOL};
use crate::report::{fmt_f64, to_json_string, Check, RunReport, Stage};
use crate::riemann_shock::{
    lax_admissibility, max_abs_residual, rh_residual, self_similar_shock, shock_constants, FanSolution, LaxVerdict,
    RiemannData,
};
use crate::rigidity_lab::{dichotomy_experiment, DichotomyReport, DichotomyVerdict, Profile};
use crate::scenario::{
    self, ConstructConfig, MainTheoremConfig, RiemannConfig, RigidityConfig, VerifyConfig, WaveconeConfig,
};
use crate::svg::{FanDiagram, FanLine};
use crate::wave_cone::{
    cone_membership, difference_symbol_euler, euler_operator, submatrix_determinant, RankTolerance,
};
use crate::wild_skeleton::{
    assemble_fans, build_final_measure, cross_check_determinant, entropy_gap, omega2_speed_squared_limit,
    p2_isentropic, p2_limit, persistence_margins, rank_condition, AssembledFans, WildParameters,
};

/// Default tolerance on Rankine–Hugoniot residuals.
pub const RH_TOL: f64 = 1e-12;
/// Default tolerance on determinant agreement.
pub const DET_TOL: f64 = 1e-12;
/// Default tolerance on the constraint residual along a cone direction.
pub const LAMBDA_TOL: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(
    name = "euler-mvs",
    version,
    about = "Shock solutions, wave-cone analysis and measure-valued solution checks for 2-D full Euler"
)]
pub struct Cli {
    /// JSON config for the subcommand; flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Write a schematic fan diagram (riemann, construct, main-theorem).
    #[arg(long, global = true, value_name = "FILE")]
    pub svg: Option<PathBuf>,
    /// Primary tolerance of the subcommand.
    #[arg(long, allow_negative_numbers = true, global = true, value_name = "X")]
    pub tol: Option<f64>,
    /// Seed of randomized sweeps.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Omit the timestamp and stage timings, making reports byte-reproducible.
    #[arg(long, global = true)]
    pub no_timestamp: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct RiemannArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub rho_minus: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub p_minus: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub p_plus: Option<f64>,
}

impl RiemannArgs {
    fn apply(&self, d: &mut RiemannData) {
        if let Some(x) = self.rho_minus {
            d.rho_minus = x;
        }
        if let Some(x) = self.p_minus {
            d.p_minus = x;
        }
        if let Some(x) = self.p_plus {
            d.p_plus = x;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileKind {
    Square,
    Sine,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Self-similar 1-shock and its Rankine–Hugoniot residuals.
    Riemann(RiemannArgs),
    /// Wave-cone test of the difference of two constant states.
    Wavecone {
        #[arg(long, allow_negative_numbers = true)]
        gamma: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        kappa: Option<f64>,
    },
    /// Skeleton of the second solution, rank condition and margins.
    Construct {
        #[command(flatten)]
        base: RiemannArgs,
        #[arg(long, allow_negative_numbers = true)]
        delta_p: Option<f64>,
    },
    /// Weak-form residuals of a measure over a test-function dictionary.
    VerifyMvs {
        /// Measure JSON (regions of weighted atoms).
        #[arg(long, value_name = "FILE", conflicts_with = "fan")]
        measure: Option<PathBuf>,
        /// Fan JSON, tested as a Dirac measure.
        #[arg(long, value_name = "FILE")]
        fan: Option<PathBuf>,
        #[command(flatten)]
        base: RiemannArgs,
        /// Per-test-function residuals as CSV.
        #[arg(long, value_name = "FILE")]
        csv: Option<PathBuf>,
    },
    /// Plane-wave oscillation experiment between two constant states.
    Rigidity {
        #[arg(long, allow_negative_numbers = true)]
        gamma: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<u32>>,
        #[arg(long, value_enum)]
        profile: Option<ProfileKind>,
        /// Duty cycle of the square profile.
        #[arg(long, allow_negative_numbers = true)]
        duty: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        r: Option<f64>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        directions: Option<usize>,
        /// Residual curve as CSV.
        #[arg(long, value_name = "FILE")]
        csv: Option<PathBuf>,
    },
    /// End-to-end certificate that the two-atom measure is a non-generated solution.
    MainTheorem {
        #[command(flatten)]
        base: RiemannArgs,
        #[arg(long, allow_negative_numbers = true)]
        delta_p: Option<f64>,
        /// Use the two constant states instead of the shock problem.
        #[arg(long)]
        constant_states: bool,
        #[arg(long, allow_negative_numbers = true)]
        gamma: Option<f64>,
    },
}

/// Everything a successful run writes.
#[derive(Debug)]
pub struct Outcome {
    pub report: RunReport,
    pub csv: Option<(PathBuf, String)>,
    pub svg: Option<String>,
}

struct Clock {
    enabled: bool,
    stages: Vec<Stage>,
}

impl Clock {
    fn new(no_timestamp: bool) -> Self {
        Self { enabled: !no_timestamp, stages: Vec::new() }
    }

    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        let seconds = self.enabled.then(|| start.elapsed().as_secs_f64());
        self.stages.push(Stage { name: name.into(), seconds });
        out
    }

    fn finish(self, report: &mut RunReport) {
        if self.enabled {
            report.generated_unix = SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs());
        }
        report.stages = self.stages;
        report.finish();
    }
}

fn json_err(e: serde_json::Error) -> Error {
    Error::InvalidData(format!("serialization failed: {e}"))
}

fn echo<T: Serialize>(cfg: &T, tol: f64, seed: Option<u64>) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(cfg).map_err(json_err)?;
    if let serde_json::Value::Object(m) = &mut v {
        m.insert("tol".into(), serde_json::to_value(tol).map_err(json_err)?);
        if let Some(s) = seed {
            m.insert("seed".into(), s.into());
        }
    }
    Ok(v)
}

fn load_or<T: serde::de::DeserializeOwned + scenario::Versioned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        Some(p) => scenario::load(p),
        None => Ok(T::default()),
    }
}

fn tolerance(tol: Option<f64>, default: f64) -> Result<f64> {
    let t = tol.unwrap_or(default);
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidConfig(format!("--tol must be positive and finite, got {t}")));
    }
    Ok(t)
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli).and_then(|o| write_outputs(&cli, o)) {
        Ok(passed) => {
            if passed {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::QuadratureNotConverged { .. } => 1,
                _ => 2,
            }
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::InvalidConfig(format!("cannot write {}: {e}", path.display())))
}

fn write_outputs(cli: &Cli, o: Outcome) -> Result<bool> {
    let json = to_json_string(&o.report).map_err(json_err)?;
    if let Some(svg) = &o.svg {
        let path = cli.svg.as_ref().expect("svg is rendered only when requested");
        write_file(path, svg)?;
    }
    if let Some((path, csv)) = &o.csv {
        write_file(path, csv)?;
    }
    match &cli.out {
        Some(p) => write_file(p, &json)?,
        None => print!("{json}"),
    }
    eprintln!(
        "{}: {}{}",
        o.report.command,
        if o.report.passed { "PASS" } else { "FAIL" },
        o.report.first_failure.as_deref().map(|f| format!(" (first failed check: {f})")).unwrap_or_default()
    );
    Ok(o.report.passed)
}

/// Runs the parsed command without touching the filesystem beyond reading inputs.
pub fn execute(cli: &Cli) -> Result<Outcome> {
    let svg_wanted = cli.svg.is_some();
    if svg_wanted
        && matches!(cli.command, Command::Wavecone { .. } | Command::VerifyMvs { .. } | Command::Rigidity { .. })
    {
        return Err(Error::InvalidConfig("--svg is supported by riemann, construct and main-theorem".into()));
    }
    let clock = Clock::new(cli.no_timestamp);
    let csv_path =
        |explicit: &Option<PathBuf>| explicit.clone().or_else(|| cli.out.as_ref().map(|p| p.with_extension("csv")));
    match &cli.command {
        Command::Riemann(args) => {
            let mut cfg: RiemannConfig = load_or(&cli.config)?;
            let mut d = RiemannData { rho_minus: cfg.rho_minus, p_minus: cfg.p_minus, p_plus: cfg.p_plus };
            args.apply(&mut d);
            (cfg.rho_minus, cfg.p_minus, cfg.p_plus) = (d.rho_minus, d.p_minus, d.p_plus);
            let tol = tolerance(cli.tol, RH_TOL)?;
            cmd_riemann(&cfg, tol, svg_wanted, clock)
        }
        Command::Wavecone { gamma, kappa } => {
            let mut cfg: WaveconeConfig = load_or(&cli.config)?;
            if let Some(g) = gamma {
                cfg.gamma = *g;
                cfg.states = None;
            }
            if kappa.is_some() {
                cfg.kappa = *kappa;
            }
            cmd_wavecone(&cfg, tolerance(cli.tol, DET_TOL)?, clock)
        }
        Command::Construct { base, delta_p } => {
            let mut cfg: ConstructConfig = load_or(&cli.config)?;
            base.apply(&mut cfg.base);
            if let Some(x) = delta_p {
                cfg.delta_p = *x;
            }
            cmd_construct(&cfg, tolerance(cli.tol, RH_TOL)?, svg_wanted, clock)
        }
        Command::VerifyMvs { measure, fan, base, csv } => {
            let mut cfg: VerifyConfig = load_or(&cli.config)?;
            if let Some(p) = measure {
                cfg.measure = Some(read_json(p)?);
                (cfg.fan, cfg.shock) = (None, None);
            }
            if let Some(p) = fan {
                cfg.fan = Some(read_json(p)?);
                (cfg.measure, cfg.shock) = (None, None);
            }
            if base.rho_minus.is_some() || base.p_minus.is_some() || base.p_plus.is_some() {
                let mut d = cfg.shock.unwrap_or(RiemannData { rho_minus: 1.0, p_minus: 1.0, p_plus: 2.0 });
                base.apply(&mut d);
                cfg.shock = Some(d);
                (cfg.measure, cfg.fan) = (None, None);
            }
            let mut o = cmd_verify(&cfg, tolerance(cli.tol, DEFAULT_TOL)?, clock)?;
            o.csv = csv_path(csv).zip(o.csv.map(|(_, text)| text));
            Ok(o)
        }
        Command::Rigidity { gamma, n_list, profile, duty, r, grid, directions, csv } => {
            let mut cfg: RigidityConfig = load_or(&cli.config)?;
            if let Some(g) = gamma {
                cfg.gamma = *g;
            }
            if let Some(n) = n_list {
                cfg.n_list = n.clone();
            }
            match (profile, duty) {
                (Some(ProfileKind::Sine), Some(_)) => {
                    return Err(Error::InvalidConfig("--duty applies to the square profile only".into()));
                }
                (Some(ProfileKind::Sine), None) => cfg.profile = Profile::Sine,
                (Some(ProfileKind::Square), d) => cfg.profile = Profile::Square { duty: d.unwrap_or(0.5) },
                (None, Some(d)) => match cfg.profile {
                    Profile::Square { .. } => cfg.profile = Profile::Square { duty: *d },
                    Profile::Sine => {
                        return Err(Error::InvalidConfig("--duty applies to the square profile only".into()))
                    }
                },
                (None, None) => {}
            }
            if let Some(x) = r {
                cfg.r = *x;
            }
            if let Some(x) = grid {
                cfg.grid = *x;
            }
            if let Some(x) = directions {
                cfg.directions = *x;
            }
            let mut o = cmd_rigidity(&cfg, tolerance(cli.tol, LAMBDA_TOL)?, clock)?;
            o.csv = csv_path(csv).zip(o.csv.map(|(_, text)| text));
            Ok(o)
        }
        Command::MainTheorem { base, delta_p, constant_states, gamma } => {
            let mut cfg: MainTheoremConfig = load_or(&cli.config)?;
            base.apply(&mut cfg.base);
            if let Some(x) = delta_p {
                cfg.delta_p = *x;
            }
            if let Some(g) = gamma {
                cfg.gamma = *g;
            }
            cfg.constant_states |= *constant_states;
            let tol = tolerance(cli.tol, DEFAULT_TOL)?;
            let seed = cli.seed.unwrap_or(0);
            if cfg.constant_states {
                cmd_constant_states(&cfg, tol, seed, clock)
            } else {
                cmd_main_theorem(&cfg, tol, seed, svg_wanted, clock)
            }
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        let kind = if e.is_syntax() || e.is_eof() { "malformed JSON" } else { "invalid input" };
        Error::InvalidConfig(format!("{kind} in {} at line {}, column {}: {e}", path.display(), e.line(), e.column()))
    })
}

fn fmt_state(rho: f64, v: f64, p: f64) -> String {
    format!("(ρ, v₁, p) = ({rho:.4}, {v:.4}, {p:.4})")
}

fn riemann_figure(fan: &FanSolution) -> String {
    let (l, r) = (fan.wedges[0].state, fan.wedges[1].state);
    FanDiagram {
        title: "Self-similar 1-shock (schematic)".into(),
        lines: vec![FanLine { slope: fan.wedges[0].sigma_right, label: "x₁ = s t, s".into(), dashed: false }],
        regions: vec![format!("Ω₋\n{}", fmt_state(l.rho, l.v, l.p)), format!("Ω₊\n{}", fmt_state(r.rho, r.v, r.p))],
        highlight: None,
    }
    .render()
}

fn skeleton_figure(fans: &AssembledFans) -> String {
    let names = ["σ₁", "σ₂", "σ₃", "σ₄"];
    let b = &fans.fan_beta.regions;
    let mut lines: Vec<FanLine> = b
        .windows(2)
        .zip(names)
        .map(|(w, n)| FanLine { slope: w[0].sigma_right, label: n.into(), dashed: false })
        .collect();
    lines.push(FanLine { slope: fans.fan_alpha.wedges[0].sigma_right, label: "shock s".into(), dashed: true });
    let labels = ["Ω₋", "Ω₁", "Ω₂", "Ω_δ", "Ω₊"];
    FanDiagram {
        title: "Wild-solution skeleton and the 1-shock (schematic)".into(),
        lines,
        regions: labels.iter().map(|s| s.to_string()).collect(),
        highlight: Some((fans.overlap, "overlap".into())),
    }
    .render()
}

fn cmd_riemann(cfg: &RiemannConfig, tol: f64, svg: bool, mut clock: Clock) -> Result<Outcome> {
    let d = RiemannData::new(cfg.rho_minus, cfg.p_minus, cfg.p_plus)?;
    let gas = GasModel::default();
    let mut report = RunReport::new("riemann", echo(cfg, tol, None)?);
    let (k, fan, res, lax) = clock.stage("shock", || -> Result<_> {
        let k = shock_constants(&d)?;
        let fan = self_similar_shock(&d)?;
        let res = rh_residual(&fan, &gas);
        let lax = lax_admissibility(&fan, &gas);
        Ok((k, fan, res, lax))
    })?;
    let worst = max_abs_residual(&res);
    report.checks.push(Check::at_most("rh_residual", worst, tol));
    report.checks.push(Check::flag("lax_one_shock", lax.iter().all(|l| l.verdict == LaxVerdict::OneShock)));
    for l in &lax {
        report.margin("lax_margin", (l.left_char - l.sigma).min(l.sigma - l.right_char));
    }
    report.margin("rh_headroom", tol - worst);
    report.result("shock_constants", &k).map_err(json_err)?;
    report.result("fan", &fan).map_err(json_err)?;
    report.result("rh_residual", &res).map_err(json_err)?;
    report.result("lax", &lax).map_err(json_err)?;
    let svg = svg.then(|| riemann_figure(&fan));
    clock.finish(&mut report);
    Ok(Outcome { report, csv: None, svg })
}

/// `(1, 1, 0, 3/2)` and `(γ, 1, 0, 3/(2γ))`: equal pressure-like data, different density.
pub fn gamma_pair(gamma: f64) -> Result<(ExtendedState, ExtendedState)> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidData(format!("gamma must be positive and finite, got {gamma}")));
    }
    let z1 = lift_extended(&ConservativeState::new(1.0, 1.0, 0.0, 1.5)?);
    let z2 = lift_extended(&ConservativeState::new(gamma, 1.0, 0.0, 1.5 / gamma)?);
    Ok((z1, z2))
}

/// `det` of rows 1–3 of `Z(z₁ − z₂)` for the γ pair.
pub fn gamma_determinant(gamma: f64) -> f64 {
    2.0 * (1.0 - gamma) * (1.0 - 1.0 / gamma).powi(2)
}

fn cmd_wavecone(cfg: &WaveconeConfig, tol: f64, mut clock: Clock) -> Result<Outcome> {
    let (z1, z2) = match cfg.states {
        Some([a, b]) => (
            lift_extended(&ConservativeState::new(a[0], a[1], a[2], a[3])?),
            lift_extended(&ConservativeState::new(b[0], b[1], b[2], b[3])?),
        ),
        None => gamma_pair(cfg.gamma)?,
    };
    let rt = match cfg.kappa {
        Some(k) if !(k > 0.0 && k.is_finite()) => {
            return Err(Error::InvalidConfig(format!("kappa must be positive, got {k}")))
        }
        Some(kappa) => RankTolerance { kappa },
        None => RankTolerance::default(),
    };
    let mut report = RunReport::new("wavecone", echo(cfg, tol, None)?);
    let (sym, verdict, det) = clock.stage("symbol", || -> Result<_> {
        let sym = difference_symbol_euler(&z1, &z2);
        let verdict = cone_membership(&sym, rt);
        let det = submatrix_determinant(&sym, [0, 1, 2])?;
        Ok((sym, verdict, det))
    })?;
    if cfg.states.is_none() {
        let want = gamma_determinant(cfg.gamma);
        report.checks.push(Check::at_most("determinant_closed_form", (det - want).abs(), tol * want.abs().max(1.0)));
        report.checks.push(Check::flag("verdict_matches_gamma", verdict.in_cone == (cfg.gamma == 1.0)));
        report.result("determinant_expected", &want).map_err(json_err)?;
    }
    report.checks.push(Check::flag("rank_consistent", verdict.in_cone == (verdict.rank < 3)));
    let smallest = verdict.singular_values.last().copied().unwrap_or(0.0);
    report.margin("smallest_singular_value", smallest);
    report.margin("rank_threshold", verdict.threshold);
    report.result("z1", &z1).map_err(json_err)?;
    report.result("z2", &z2).map_err(json_err)?;
    report.result("symbol", &sym).map_err(json_err)?;
    report.result("determinant_rows_123", &det).map_err(json_err)?;
    report.result("in_cone", &verdict.in_cone).map_err(json_err)?;
    report.result("rank", &verdict.rank).map_err(json_err)?;
    report.result("cone", &verdict).map_err(json_err)?;
    clock.finish(&mut report);
    Ok(Outcome { report, csv: None, svg: None })
}

fn wild_parameters(base: RiemannData, delta_p: f64, cfg: Option<&ConstructConfig>) -> Result<WildParameters> {
    let mut w = WildParameters::new(base, delta_p)?;
    if let Some(c) = cfg {
        if let Some(x) = c.rho1 {
            w.rho1 = x;
        }
        if let Some(x) = c.rho2 {
            w.rho2 = x;
        }
        if let Some(x) = c.slopes {
            w.slopes = x;
        }
        if let Some(x) = c.omega2_angle {
            w.omega2_angle = x;
        }
        w.validate()?;
    }
    Ok(w)
}

/// Rank certificates of the assembled overlap, pushed as checks and margins.
fn rank_certificates(report: &mut RunReport, w: &WildParameters, fans: &AssembledFans) -> Result<()> {
    let d = &w.base;
    let k = shock_constants(d)?;
    let beta = fans.fan_beta.region("omega2").and_then(|r| r.state).expect("omega2 has a state");
    let actual = rank_condition(d, beta.rho, beta.p, beta.speed_squared())?;
    let limit = rank_condition(d, k.rho_k, p2_limit(d)?.p2, omega2_speed_squared_limit(d)?)?;
    let cc = cross_check_determinant(d, beta.rho, beta.p, [beta.v, beta.u])?;
    report.checks.push(Check::flag("overlap_rank_3", cc.svd_rank == 3 && !cc.marginal && actual.full_rank));
    report.checks.push(Check::above("rank3_margin", cc.cofactor.abs(), 0.0));
    report.checks.push(Check::above("condition_margin", actual.condition_gap, 0.0));
    report.checks.push(Check::at_most("determinant_cross_check", cc.relative_difference, DET_TOL));
    report.margin("pressure_gap_limit", limit.pressure_gap);
    report.margin("condition_gap_limit", limit.condition_gap);
    report.margin("rank3_margin_limit", limit.determinant.abs());
    report.margin("pressure_gap", actual.pressure_gap);
    report.margin("condition_gap", actual.condition_gap);
    report.margin("rank3_margin", cc.cofactor.abs());
    report.result("rank_limit", &limit).map_err(json_err)?;
    report.result("rank_overlap", &actual).map_err(json_err)?;
    report.result("determinant_cross_check", &cc).map_err(json_err)?;
    Ok(())
}

fn persistence_certificates(report: &mut RunReport, w: &WildParameters) -> Result<()> {
    let pm = persistence_margins(&w.base)?;
    report.checks.push(Check::above("delta_star", pm.delta_star, 0.0));
    report.checks.push(Check::above("eta_star", pm.eta_star, 0.0));
    report.checks.push(Check::at_most("delta_p_within_delta_star", w.delta_p, pm.delta_star));
    report.margin("delta_star", pm.delta_star);
    report.margin("eta_star", pm.eta_star);
    report.result("persistence", &pm).map_err(json_err)?;
    Ok(())
}

fn entropy_certificate(report: &mut RunReport, fans: &AssembledFans) -> Result<()> {
    let gap = entropy_gap(fans)?;
    report.checks.push(Check::above("entropy_non_constancy", gap.difference, 0.0));
    report.margin("entropy_gap", gap.difference);
    report.result("entropy", &gap).map_err(json_err)
}

fn cmd_construct(cfg: &ConstructConfig, tol: f64, svg: bool, mut clock: Clock) -> Result<Outcome> {
    let gas = GasModel::default();
    let w = wild_parameters(cfg.base, cfg.delta_p, Some(cfg))?;
    let mut report = RunReport::new("construct", echo(cfg, tol, None)?);
    let fans = clock.stage("assemble", || assemble_fans(&w, &gas))?;
    let three = fans.three_shock.residual.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    report.checks.push(Check::at_most("three_shock_rh", three, tol));
    clock.stage("rank", || rank_certificates(&mut report, &w, &fans))?;
    clock.stage("persistence", || persistence_certificates(&mut report, &w))?;
    entropy_certificate(&mut report, &fans)?;
    report.result("parameters", &w).map_err(json_err)?;
    report.result("skeleton", &fans).map_err(json_err)?;
    let svg = svg.then(|| skeleton_figure(&fans));
    clock.finish(&mut report);
    Ok(Outcome { report, csv: None, svg })
}

fn verify_csv(v: &VerifyReport) -> String {
    let mut out = String::from(
        "index,t,x1,x2,radius,skipped,normalization,residual_mass,residual_momentum1,residual_momentum2,residual_energy,\
         error_mass,error_momentum1,error_momentum2,error_energy,predicted_mass,predicted_momentum1,predicted_momentum2,predicted_energy\n",
    );
    for s in &v.samples {
        let mut cols = vec![s.index.to_string()];
        cols.extend(s.center.iter().map(|x| fmt_f64(*x)));
        cols.push(fmt_f64(s.radius));
        cols.push(s.skipped.to_string());
        cols.push(fmt_f64(s.normalization));
        for arr in [&s.residual, &s.error_estimate, &s.predicted] {
            cols.extend(arr.iter().map(|x| fmt_f64(*x)));
        }
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    out
}

fn dictionary_for(nu: &AtomicYoungMeasure, spec: &scenario::DictionarySpec) -> Result<Dictionary> {
    match &spec.functions {
        Some(f) => Dictionary::new(spec.horizon, f.clone()),
        None => Dictionary::grid(&nu.interfaces(), spec.horizon, &spec.scales, spec.initial_layer),
    }
}

fn cmd_verify(cfg: &VerifyConfig, tol: f64, mut clock: Clock) -> Result<Outcome> {
    let gas = GasModel::default();
    let sources = [cfg.measure.is_some(), cfg.fan.is_some(), cfg.shock.is_some()].iter().filter(|b| **b).count();
    if sources > 1 {
        return Err(Error::InvalidConfig("give at most one of measure, fan, shock".into()));
    }
    let nu = if let Some(m) = &cfg.measure {
        m.clone()
    } else if let Some(f) = &cfg.fan {
        AtomicYoungMeasure::dirac(f, &gas)
    } else {
        let d = cfg.shock.unwrap_or(RiemannData { rho_minus: 1.0, p_minus: 1.0, p_plus: 2.0 });
        AtomicYoungMeasure::dirac(&self_similar_shock(&RiemannData::new(d.rho_minus, d.p_minus, d.p_plus)?)?, &gas)
    };
    nu.validate()?;
    let dict = dictionary_for(&nu, &cfg.dictionary)?;
    let mut report = RunReport::new("verify-mvs", echo(cfg, tol, None)?);
    let v = clock.stage("verify", || verify(&nu, &dict, tol, cfg.quadrature))?;
    push_verify_checks(&mut report, "", &v, tol);
    report.result("dictionary_size", &dict.len()).map_err(json_err)?;
    report.result("verify", &v).map_err(json_err)?;
    let csv = verify_csv(&v);
    clock.finish(&mut report);
    Ok(Outcome { report, csv: Some((PathBuf::new(), csv)), svg: None })
}

fn push_verify_checks(report: &mut RunReport, prefix: &str, v: &VerifyReport, tol: f64) {
    report.checks.push(Check::above(&format!("{prefix}tested_functions"), v.tested as f64, 0.0));
    report.checks.push(Check::at_most(&format!("{prefix}weak_residual"), v.worst_overall, tol));
    report.checks.push(Check::at_most(&format!("{prefix}interface_residual"), v.max_interface_residual, tol));
    report.margin(&format!("{prefix}weak_residual_headroom"), tol - v.worst_overall);
}

fn rigidity_csv(r: &DichotomyReport) -> String {
    let mut out = String::from("n,residual,tv_distance,atoms,xi1,xi2,xi3\n");
    for p in &r.curve {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            p.n,
            fmt_f64(p.residual),
            fmt_f64(p.tv_distance),
            p.atoms,
            fmt_f64(p.direction[0]),
            fmt_f64(p.direction[1]),
            fmt_f64(p.direction[2])
        ));
    }
    out
}

fn dichotomy_checks(report: &mut RunReport, prefix: &str, r: &DichotomyReport, tol: f64, expect_non_lambda: bool) {
    match r.verdict {
        DichotomyVerdict::NonLambda => {
            report.checks.push(Check::above(&format!("{prefix}residual_floor"), r.floor, tol));
            report.margin(&format!("{prefix}residual_floor"), r.floor);
        }
        DichotomyVerdict::Lambda => {
            report.checks.push(Check::at_most(&format!("{prefix}lambda_residual"), r.floor, tol))
        }
        DichotomyVerdict::Degenerate => {}
    }
    if expect_non_lambda {
        report.checks.push(Check::flag(&format!("{prefix}non_lambda"), r.verdict == DichotomyVerdict::NonLambda));
    }
}

fn cmd_rigidity(cfg: &RigidityConfig, tol: f64, mut clock: Clock) -> Result<Outcome> {
    let (z1, z2) = gamma_pair(cfg.gamma)?;
    let dc = cfg.dichotomy();
    let mut report = RunReport::new("rigidity", echo(cfg, tol, None)?);
    let r = clock
        .stage("dichotomy", || dichotomy_experiment(&z1.z, &z2.z, &euler_operator(), &dc, RankTolerance::default()))?;
    dichotomy_checks(&mut report, "", &r, tol, false);
    report.notes.push(r.conclusion.clone());
    report.notes.extend(r.caveats.iter().cloned());
    report.result("dichotomy", &r).map_err(json_err)?;
    let csv = rigidity_csv(&r);
    clock.finish(&mut report);
    Ok(Outcome { report, csv: Some((PathBuf::new(), csv)), svg: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossValidation {
    pub samples: usize,
    pub max_relative_difference: f64,
    pub mismatched_rank: usize,
}

/// Closed-form against cofactor determinant on random tuples
/// `(ρ₋, p₋, p₊, ρ₂, p₂, v)` near the isentropic branch.
pub fn cross_validation(seed: u64, samples: usize) -> Result<CrossValidation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    let mut mismatched = 0;
    for _ in 0..samples {
        let rho_minus = rng.gen_range(0.5..2.0);
        let p_minus = rng.gen_range(0.5..2.0);
        let p_plus = p_minus * rng.gen_range(1.1..3.0);
        let d = RiemannData::new(rho_minus, p_minus, p_plus)?;
        let rho_k = shock_constants(&d)?.rho_k;
        let rho2 = rho_k * rng.gen_range(0.8..1.2);
        let p2 = p2_isentropic(&d, rho2);
        let speed = omega2_speed_squared_limit(&d)?.sqrt() * rng.gen_range(0.5..1.5);
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let cc = cross_check_determinant(&d, rho2, p2, [speed * angle.cos(), speed * angle.sin()])?;
        worst = worst.max(cc.relative_difference);
        let closed_rank = rank_condition(&d, rho2, p2, speed * speed)?.full_rank;
        if closed_rank != (cc.svd_rank == 3) {
            mismatched += 1;
        }
    }
    Ok(CrossValidation { samples, max_relative_difference: worst, mismatched_rank: mismatched })
}

fn cmd_main_theorem(cfg: &MainTheoremConfig, tol: f64, seed: u64, svg: bool, mut clock: Clock) -> Result<Outcome> {
    let gas = GasModel::default();
    let w = wild_parameters(cfg.base, cfg.delta_p, None)?;
    let mut report = RunReport::new("main-theorem", echo(cfg, tol, Some(seed))?);
    let (fans, nu) = clock.stage("construct", || -> Result<_> {
        let fans = assemble_fans(&w, &gas)?;
        let nu = build_final_measure(&fans.fan_alpha, &fans.fan_beta, &gas)?;
        Ok((fans, nu))
    })?;

    let rh = max_abs_residual(&rh_residual(&fans.fan_alpha, &gas));
    let three = fans.three_shock.residual.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    report.checks.push(Check::at_most("rh_exactness_fan_alpha", rh, RH_TOL));
    clock.stage("rank", || rank_certificates(&mut report, &w, &fans))?;
    entropy_certificate(&mut report, &fans)?;

    let dict = Dictionary::default_for(&nu.interfaces(), 1.0)?;
    let dict_alpha = Dictionary::default_for(&fans.fan_alpha.interfaces(), 1.0)?;
    let q = QuadraturePolicy::default();
    let (v_nu, v_alpha) = clock.stage("verify", || -> Result<_> {
        Ok((
            verify(&nu, &dict, tol, q)?,
            verify(&AtomicYoungMeasure::dirac(&fans.fan_alpha, &gas), &dict_alpha, tol, q)?,
        ))
    })?;
    push_verify_checks(&mut report, "mvs_", &v_nu, tol);
    push_verify_checks(&mut report, "fan_alpha_", &v_alpha, tol);

    report.checks.push(Check::at_most("three_shock_rh", three, RH_TOL));
    clock.stage("persistence", || persistence_certificates(&mut report, &w))?;
    let cv = clock.stage("cross_validation", || cross_validation(seed, cfg.cross_check_samples))?;
    report.checks.push(Check::at_most("cross_validation_determinant", cv.max_relative_difference, DET_TOL));
    report.checks.push(Check::at_most("cross_validation_rank_mismatches", cv.mismatched_rank as f64, 0.0));

    let dc = cfg.rigidity.clone().unwrap_or_default();
    let rig = clock.stage("rigidity", || {
        dichotomy_experiment(&fans.z_alpha.z, &fans.z_beta.z, &euler_operator(), &dc, RankTolerance::default())
    })?;
    dichotomy_checks(&mut report, "rigidity_", &rig, LAMBDA_TOL, true);

    report.result("parameters", &w).map_err(json_err)?;
    report.result("skeleton", &fans).map_err(json_err)?;
    report.result("final_measure", &nu).map_err(json_err)?;
    report.result("verify_final_measure", &summary(&v_nu)).map_err(json_err)?;
    report.result("verify_fan_alpha", &summary(&v_alpha)).map_err(json_err)?;
    report.result("cross_validation", &cv).map_err(json_err)?;
    report.result("rigidity", &rig).map_err(json_err)?;
    report.notes.push(
        "MVS checks cover test functions supported in resolved regions and interfaces between resolved regions".into(),
    );
    report.notes.push(rig.conclusion.clone());
    let svg = svg.then(|| skeleton_figure(&fans));
    clock.finish(&mut report);
    Ok(Outcome { report, csv: None, svg })
}

/// A verify report without the per-function samples.
fn summary(v: &VerifyReport) -> VerifyReport {
    VerifyReport { samples: Vec::new(), ..v.clone() }
}

fn constant_measure(atoms: &[(f64, ExtendedState)], label: &str) -> Result<AtomicYoungMeasure> {
    AtomicYoungMeasure::new(
        vec![Region {
            sigma_left: f64::NEG_INFINITY,
            sigma_right: f64::INFINITY,
            status: RegionStatus::Resolved,
            label: label.into(),
            atoms: atoms.iter().map(|(weight, state)| Atom { weight: *weight, state: *state }).collect(),
        }],
        label,
    )
}

fn cmd_constant_states(cfg: &MainTheoremConfig, tol: f64, seed: u64, mut clock: Clock) -> Result<Outcome> {
    let gas = GasModel::default();
    let (z1, z2) = gamma_pair(cfg.gamma)?;
    let mut report = RunReport::new("main-theorem", echo(cfg, tol, Some(seed))?);

    let (verdict, det) = clock.stage("wave_cone", || -> Result<_> {
        let sym = difference_symbol_euler(&z1, &z2);
        Ok((cone_membership(&sym, RankTolerance::default()), submatrix_determinant(&sym, [0, 1, 2])?))
    })?;
    let want = gamma_determinant(cfg.gamma);
    report.checks.push(Check::at_most("determinant_closed_form", (det - want).abs(), DET_TOL * want.abs().max(1.0)));
    report.checks.push(Check::flag("rank_3", verdict.rank == 3 && !verdict.marginal));
    report.checks.push(Check::above("rank3_margin", det.abs(), 0.0));
    report.margin("rank3_margin", det.abs());

    let p1 = z1.conservative()?.to_primitive(&gas)?;
    let p2 = z2.conservative()?.to_primitive(&gas)?;
    let gap = (entropy(&p1, &gas) - entropy(&p2, &gas)).abs();
    report.checks.push(Check::above("entropy_non_constancy", gap, 0.0));
    report.margin("entropy_gap", gap);

    let dict = Dictionary::default_for(&[], 1.0)?;
    let q = QuadraturePolicy::default();
    let measures = [
        constant_measure(&[(1.0, z1)], "constant state z1")?,
        constant_measure(&[(1.0, z2)], "constant state z2")?,
        constant_measure(&[(0.5, z1), (0.5, z2)], "half-half measure")?,
    ];
    let reports =
        clock.stage("verify", || measures.iter().map(|m| verify(m, &dict, tol, q)).collect::<Result<Vec<_>>>())?;
    for (prefix, v) in ["z1_", "z2_", "mvs_"].iter().zip(&reports) {
        push_verify_checks(&mut report, prefix, v, tol);
    }

    let dc = cfg.rigidity.clone().unwrap_or_default();
    let rig = clock
        .stage("rigidity", || dichotomy_experiment(&z1.z, &z2.z, &euler_operator(), &dc, RankTolerance::default()))?;
    dichotomy_checks(&mut report, "rigidity_", &rig, LAMBDA_TOL, true);

    report.result("z1", &z1).map_err(json_err)?;
    report.result("z2", &z2).map_err(json_err)?;
    report.result("determinant_expected", &want).map_err(json_err)?;
    report.result("cone", &verdict).map_err(json_err)?;
    report.result("verify_half_half", &summary(&reports[2])).map_err(json_err)?;
    report.result("rigidity", &rig).map_err(json_err)?;
    report.notes.push(rig.conclusion.clone());
    clock.finish(&mut report);
    Ok(Outcome { report, csv: None, svg: None })
}
