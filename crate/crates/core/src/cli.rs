//! Command-line front end.
//!
//! Exit codes: 0 success, 1 verification failure, 2 mathematical degeneracy,
//! 64 usage error, 74 I/O failure.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::chain::{build_matrix_direct, stationary};
use crate::dynamics::{
    classify_equilibrium, integrate, invariants, mirror, FieldMethod, FlowState, Trajectory,
    DEFAULT_FIELD_STEP,
};
use crate::error::Error;
use crate::export::{to_json, write_text, Cell, Table};
use crate::ode::{Method, Settings, Status};
use crate::oracle::{default_burn_in, simulate_replicas};
use crate::payoff::{build_payoff_vector, payoff_by_determinant};
use crate::strategy::{state_count, state_labels, PayoffParams, Strategy};
use crate::torus::{
    admissible_rectangle, denominator_zero_curves, desingularized_field, to_cube, torus_equilibria,
    torus_field, TorusLevel, TorusPoint,
};
use crate::verify::{run_suite, VerifyOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_DEGENERATE: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_IO: i32 = 74;

#[derive(Debug, Parser)]
#[command(name = "altpd", version, about = "Adaptive dynamics of the alternating Prisoner's Dilemma")]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Transition matrix, stationary distribution and payoffs of a strategy pair
    Matrix(MatrixArgs),
    /// Integrate the adaptive dynamics from a starting point
    Integrate(IntegrateArgs),
    /// Field, admissible rectangle, denominator curves and equilibria on a torus
    Torus(TorusArgs),
    /// Run the property suite
    Verify(VerifyArgs),
    /// Monte Carlo simulation of a strategy pair
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum FieldChoice {
    Auto,
    Closed,
    Exact,
    Numeric,
}

#[derive(Debug, Clone, Args, Serialize)]
struct Common {
    /// Benefit of cooperation
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    /// Cost of cooperation
    #[arg(long, default_value_t = 0.3)]
    c: f64,
    /// Memory length (1, 2 or 3)
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file (directory for `torus`); stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Flat `key = value` file mirroring the flags; flags win
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct MatrixArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    /// Leader strategy: comma list or preset (allc, alld, tft, random:SEED)
    #[arg(long)]
    p: String,
    /// Follower strategy, same syntax
    #[arg(long)]
    q: String,
}

#[derive(Debug, Clone, Args, Serialize)]
struct IntegrateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    /// Starting point: comma list or random:SEED
    #[arg(long)]
    x0: String,
    #[arg(long, default_value_t = 100.0)]
    t: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value = "rk4")]
    method: Method,
    #[arg(long, default_value_t = 1e-9)]
    rtol: f64,
    #[arg(long, default_value_t = 1e-12)]
    atol: f64,
    #[arg(long, value_enum, default_value_t = FieldChoice::Auto)]
    field: FieldChoice,
    /// Also integrate the mirrored start backwards and report the mismatch
    #[arg(long)]
    mirror: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
struct TorusArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long)]
    c1: f64,
    #[arg(long)]
    c2: f64,
    /// Field samples per angle
    #[arg(long, default_value_t = 64)]
    grid: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
struct VerifyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long, default_value_t = 200_000)]
    rounds: u64,
    #[arg(long, default_value_t = 50)]
    samples: usize,
    #[arg(long, hide = true)]
    corrupt_payoff: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long)]
    p: String,
    #[arg(long)]
    q: String,
    #[arg(long, default_value_t = 1_000_000)]
    rounds: u64,
    /// Defaults to a tenth of the rounds
    #[arg(long)]
    burn_in: Option<u64>,
    #[arg(long, default_value_t = 1)]
    replicas: u64,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Degenerate(String),
    Verify(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Degenerate(_) => EXIT_DEGENERATE,
            Failure::Verify(_) => EXIT_VERIFY,
            Failure::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Degenerate(m) | Failure::Verify(m) | Failure::Io(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonUniqueStationary(_)
            | Error::NegativeMass(_)
            | Error::Singular
            | Error::DeterminantSingular(_)
            | Error::FieldDenominator
            | Error::NotEquilibrium(_)
            | Error::DegenerateTorus
            | Error::ToricDenominator => Failure::Degenerate(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Parses a flat `key = value` file. Blank lines and `#` comments are
/// ignored.
pub fn parse_config(text: &str) -> std::result::Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key = value", lineno + 1))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        map.insert(key, value.trim().trim_matches('"').to_string());
    }
    Ok(map)
}

fn config_path(args: &[String]) -> Option<String> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(v.to_string());
        }
    }
    None
}

/// Inserts config-file options in front of the command-line flags so the
/// latter override them.
fn merge_config(args: Vec<String>) -> std::result::Result<Vec<String>, Failure> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| Failure::Usage(format!("config {path}: {e}")))?;
    let map = parse_config(&text).map_err(Failure::Usage)?;
    let Some(pos) = args.iter().skip(1).position(|a| !a.starts_with('-')).map(|i| i + 1) else {
        return Ok(args);
    };
    let cmd = Cli::command();
    let Some(sub) = cmd.find_subcommand(&args[pos]) else {
        return Ok(args);
    };
    let known = |c: &clap::Command, key: &str| c.get_arguments().any(|a| a.get_long() == Some(key));
    let mut inserted = Vec::new();
    for (key, value) in map {
        if key == "config" {
            continue;
        }
        if !known(sub, &key) {
            if cmd.get_subcommands().any(|s| known(s, &key)) {
                continue;
            }
            return Err(Failure::Usage(format!("unknown config key {key:?}")));
        }
        let takes_value = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .is_some_and(|a| a.get_action().takes_values());
        if takes_value {
            inserted.push(format!("--{key}"));
            inserted.push(value);
        } else if matches!(value.as_str(), "true" | "1" | "yes") {
            inserted.push(format!("--{key}"));
        }
    }
    let mut merged = args[..=pos].to_vec();
    merged.extend(inserted);
    merged.extend_from_slice(&args[pos + 1..]);
    Ok(merged)
}

/// Runs the tool on `args` (including the program name) and returns the
/// exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    let args = match merge_config(args) {
        Ok(a) => a,
        Err(f) => {
            eprintln!("error: {}", f.message());
            return f.code();
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Matrix(a) => cmd_matrix(a),
        Command::Integrate(a) => cmd_integrate(a),
        Command::Torus(a) => cmd_torus(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}

fn validate(common: &Common) -> std::result::Result<PayoffParams, Failure> {
    if !(1..=3).contains(&common.n) {
        return Err(Failure::Usage(format!("memory must be 1, 2 or 3 (got {})", common.n)));
    }
    Ok(PayoffParams::new(common.b, common.c)?)
}

#[derive(Serialize)]
struct Provenance<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a T,
}

fn provenance<'a, T: Serialize>(command: &'static str, config: &'a T) -> Provenance<'a, T> {
    Provenance {
        tool: "altpd",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
    }
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(path) => write_text(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// `allc`, `alld`, `tft` (copy the partner's latest move), `random:SEED`, or
/// a comma-separated list of probabilities.
pub fn parse_strategy(word: &str, memory: usize) -> crate::error::Result<Strategy> {
    let n = state_count(memory);
    let word = word.trim();
    match word.to_ascii_lowercase().as_str() {
        "allc" => return Strategy::constant(memory, 1.0),
        "alld" => return Strategy::constant(memory, 0.0),
        "tft" => {
            return Strategy::new(memory, (0..n).map(|i| if i & 1 == 0 { 1.0 } else { 0.0 }).collect())
        }
        _ => {}
    }
    if let Some(seed) = word.strip_prefix("random:") {
        let seed: u64 = seed.parse().map_err(|_| Error::StrategyLength { memory, len: 0 })?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        return Strategy::new(memory, (0..n).map(|_| rng.random_range(0.01..0.99)).collect());
    }
    let values: Vec<f64> = word
        .split(',')
        .map(|v| v.trim().parse::<f64>().unwrap_or(f64::NAN))
        .collect();
    if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| v.is_nan()) {
        return Err(Error::ProbabilityRange { index, value });
    }
    Strategy::new(memory, values)
}

fn strategy_arg(word: &str, memory: usize, name: &str) -> std::result::Result<Strategy, Failure> {
    parse_strategy(word, memory).map_err(|e| Failure::Usage(format!("--{name}: {e}")))
}

#[derive(Serialize)]
struct MatrixReport {
    memory: usize,
    states: Vec<String>,
    p: Vec<f64>,
    q: Vec<f64>,
    matrix: Vec<Vec<f64>>,
    stationary: Vec<f64>,
    payoff_vector: Vec<f64>,
    payoff_stationary: f64,
    payoff_determinant: f64,
    payoff_difference: f64,
    absorbing_states: Vec<String>,
}

fn cmd_matrix(a: &MatrixArgs) -> Outcome {
    let params = validate(&a.common)?;
    let n = a.common.n;
    let p = strategy_arg(&a.p, n, "p")?;
    let q = strategy_arg(&a.q, n, "q")?;
    let m = build_matrix_direct(&p, &q)?;
    let labels = state_labels(n);
    let nu = stationary(&m)?;
    let f = build_payoff_vector(&params, n)?;
    let by_stationary = nu.dot(&f.f);
    let by_determinant = payoff_by_determinant(&p, &q, &params)?;
    let absorbing_states = (0..m.dim())
        .filter(|&i| m.get(i, i) == 1.0)
        .map(|i| labels[i].clone())
        .collect();
    let report = MatrixReport {
        memory: n,
        states: labels.clone(),
        p: p.probs().to_vec(),
        q: q.probs().to_vec(),
        matrix: m.rows(),
        stationary: nu.nu.clone(),
        payoff_vector: f.f.clone(),
        payoff_stationary: by_stationary,
        payoff_determinant: by_determinant,
        payoff_difference: (by_stationary - by_determinant).abs(),
        absorbing_states,
    };
    let prov = provenance("matrix", a);
    let text = match a.common.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&json!({ "provenance": prov, "result": report }))?,
        Format::Csv => {
            let mut columns = vec!["state".to_string(), "stationary".into(), "payoff".into()];
            columns.extend(labels.iter().map(|l| format!("to_{l}")));
            let mut table = Table::new(columns);
            for (i, row) in report.matrix.iter().enumerate() {
                let mut cells: Vec<Cell> = vec![labels[i].as_str().into(), nu.nu[i].into(), f.f[i].into()];
                cells.extend(row.iter().map(|&v| Cell::from(v)));
                table.push(cells);
            }
            let header = json!({
                "provenance": prov,
                "payoff_stationary": by_stationary,
                "payoff_determinant": by_determinant,
                "absorbing_states": report.absorbing_states,
            });
            table.to_csv(&header)?
        }
    };
    emit(a.common.out.as_deref(), &text)
}

fn parse_point(word: &str, memory: usize) -> std::result::Result<FlowState, Failure> {
    let n = state_count(memory);
    let values: Vec<f64> = if let Some(seed) = word.trim().strip_prefix("random:") {
        let seed: u64 = seed
            .parse()
            .map_err(|_| Failure::Usage(format!("--x0: bad seed {seed:?}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(0.05..0.95)).collect()
    } else {
        word.split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Failure::Usage(format!("--x0: {e}")))?
    };
    if values.len() != n {
        return Err(Failure::Usage(format!("--x0 needs {n} entries for memory {memory}")));
    }
    let x = FlowState::new(values)?;
    if !x.in_open_cube() {
        return Err(Failure::Usage("--x0 must lie in the open cube".into()));
    }
    Ok(x)
}

#[derive(Serialize)]
struct IntegrateSummary {
    status: Status,
    message: Option<String>,
    steps: usize,
    final_time: f64,
    final_state: Vec<f64>,
    displacement: f64,
    max_drift_first: Option<f64>,
    max_drift_second: Option<f64>,
    mirror_match: Option<f64>,
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn mirror_mismatch(forward: &Trajectory, backward: &Trajectory, method: Method) -> f64 {
    let pairs: Vec<(&Vec<f64>, &Vec<f64>)> = match method {
        Method::Rk4 => forward.solution.states.iter().zip(&backward.solution.states).collect(),
        Method::Rk45 => vec![(forward.solution.states.last().unwrap(), backward.solution.states.last().unwrap())],
    };
    pairs
        .into_iter()
        .map(|(x, y)| {
            let m = mirror(&FlowState::new(x.clone()).expect("non-empty state"));
            max_diff(m.as_slice(), y)
        })
        .fold(0.0, f64::max)
}

fn cmd_integrate(a: &IntegrateArgs) -> Outcome {
    let params = validate(&a.common)?;
    let n = a.common.n;
    if !(a.t > 0.0 && a.t.is_finite()) || !(a.dt > 0.0) {
        return Err(Failure::Usage("--t and --dt must be positive".into()));
    }
    let x0 = parse_point(&a.x0, n)?;
    let settings = Settings {
        method: a.method,
        dt: a.dt,
        rtol: a.rtol,
        atol: a.atol,
        ..Settings::default()
    };
    let method = match a.field {
        FieldChoice::Auto => FieldMethod::fastest_for(n),
        FieldChoice::Closed => FieldMethod::ClosedForm,
        FieldChoice::Exact => FieldMethod::Exact,
        FieldChoice::Numeric => FieldMethod::FiniteDifference { h: DEFAULT_FIELD_STEP },
    };
    if method == FieldMethod::ClosedForm && n != 1 {
        return Err(Failure::Usage("the closed-form field needs --n 1".into()));
    }
    let traj = integrate(&x0, &params, a.t, &settings, method);
    let (drift_first, drift_second) = if n == 1 {
        let (d1, d2) = traj.invariant_drift()?;
        (Some(d1), Some(d2))
    } else {
        (None, None)
    };
    let mirror_match = if a.mirror {
        let back = integrate(&mirror(&x0), &params, -a.t, &settings, method);
        Some(mirror_mismatch(&traj, &back, a.method))
    } else {
        None
    };
    let (t_last, x_last) = traj.last();
    let summary = IntegrateSummary {
        status: traj.status(),
        message: traj.solution.message.clone(),
        steps: traj.solution.len(),
        final_time: t_last,
        final_state: x_last.to_vec(),
        displacement: max_diff(x_last, x0.as_slice()),
        max_drift_first: drift_first,
        max_drift_second: drift_second,
        mirror_match,
    };
    let prov = provenance("integrate", a);
    let summary_text = to_json(&json!({ "provenance": prov, "summary": summary }))?;
    match a.common.format.unwrap_or(Format::Csv) {
        Format::Json => {
            let text = to_json(&json!({ "provenance": prov, "summary": summary, "trajectory": traj }))?;
            emit(a.common.out.as_deref(), &text)?;
        }
        Format::Csv => {
            let mut columns = vec!["t".to_string()];
            columns.extend((1..=state_count(n)).map(|i| format!("p{i}")));
            if n == 1 {
                columns.extend(["F1".to_string(), "F2".to_string()]);
            }
            let mut table = Table::new(columns);
            for (t, x) in traj.points() {
                let mut row: Vec<Cell> = vec![t.into()];
                row.extend(x.iter().map(|&v| Cell::from(v)));
                if n == 1 {
                    let inv = invariants(&FlowState::new(x.to_vec())?)?;
                    row.push(inv.first.into());
                    row.push(inv.second.into());
                }
                table.push(row);
            }
            let csv = table.to_csv(&prov)?;
            match a.common.out.as_deref() {
                Some(path) => {
                    write_text(path, &csv)?;
                    write_text(&path.with_extension("summary.json"), &summary_text)?;
                    print!("{summary_text}");
                }
                None => print!("{csv}"),
            }
        }
    }
    if traj.status() == Status::Singular {
        return Err(Failure::Degenerate(format!(
            "integration stopped at a singular point: {}",
            traj.solution.message.clone().unwrap_or_default()
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct TorusEquilibrium {
    phi: f64,
    psi: f64,
    cube: Vec<f64>,
    classification: Option<crate::dynamics::EquilibriumPoint>,
}

fn cmd_torus(a: &TorusArgs) -> Outcome {
    let params = validate(&a.common)?;
    if params.benefit() != 1.0 {
        return Err(Error::RequiresUnitBenefit(params.benefit()).into());
    }
    if a.grid < 2 {
        return Err(Failure::Usage("--grid must be at least 2".into()));
    }
    let level = TorusLevel::new(a.c1, a.c2)?;
    let rect = admissible_rectangle(&level)?;

    let mut field = Table::new(["phi", "psi", "dphi", "dpsi", "dphi_regular", "dpsi_regular", "admissible"]);
    for i in 0..a.grid {
        for j in 0..a.grid {
            let phi = TAU * i as f64 / a.grid as f64;
            let psi = TAU * j as f64 / a.grid as f64;
            let pt = TorusPoint { phi, psi, level };
            let (u, v) = torus_field(&pt, &params).unwrap_or((f64::NAN, f64::NAN));
            let (ru, rv) = desingularized_field(&pt, &params)?;
            field.push(vec![
                phi.into(),
                psi.into(),
                u.into(),
                v.into(),
                ru.into(),
                rv.into(),
                usize::from(rect.contains(phi, psi)).into(),
            ]);
        }
    }

    let mut rectangle = Table::new(["vertex", "phi", "psi"]);
    for (k, (phi, psi)) in rect.polyline().into_iter().enumerate() {
        rectangle.push(vec![k.into(), phi.into(), psi.into()]);
    }

    let mut contours = Table::new(["curve", "phi", "psi"]);
    for curve in denominator_zero_curves(&level, 4 * a.grid) {
        for (phi, psi) in curve.points {
            contours.push(vec![curve.name.as_str().into(), phi.into(), psi.into()]);
        }
    }

    let equilibria: Vec<TorusEquilibrium> = torus_equilibria(&level, &params)?
        .into_iter()
        .map(|e| {
            let x = to_cube(&e);
            TorusEquilibrium {
                phi: e.phi,
                psi: e.psi,
                cube: x.as_slice().to_vec(),
                classification: classify_equilibrium(&x, &params).ok(),
            }
        })
        .collect();

    let prov = provenance("torus", a);
    let summary = json!({
        "provenance": prov,
        "rectangle": { "phi": rect.phi, "psi": rect.psi },
        "field_samples": field.rows.len(),
        "contour_samples": contours.rows.len(),
        "equilibrium_count": equilibria.len(),
        "equilibria": equilibria,
    });
    match a.common.out.as_deref() {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            match a.common.format.unwrap_or(Format::Csv) {
                Format::Csv => {
                    write_text(&dir.join("field.csv"), &field.to_csv(&prov)?)?;
                    write_text(&dir.join("rectangle.csv"), &rectangle.to_csv(&prov)?)?;
                    write_text(&dir.join("contours.csv"), &contours.to_csv(&prov)?)?;
                }
                Format::Json => {
                    let tables = json!({
                        "provenance": prov,
                        "field": table_json(&field),
                        "rectangle": table_json(&rectangle),
                        "contours": table_json(&contours),
                    });
                    write_text(&dir.join("torus.json"), &to_json(&tables)?)?;
                }
            }
            write_text(&dir.join("equilibria.json"), &to_json(&summary)?)?;
            print!("{}", to_json(&summary)?);
        }
        None => print!("{}", to_json(&summary)?),
    }
    Ok(())
}

fn table_json(t: &Table) -> serde_json::Value {
    let rows: Vec<serde_json::Value> = t
        .rows
        .iter()
        .map(|r| {
            serde_json::Value::Array(
                r.iter()
                    .map(|c| match c {
                        Cell::Num(v) => json!(v),
                        Cell::Int(v) => json!(v),
                        Cell::Text(s) => json!(s),
                    })
                    .collect(),
            )
        })
        .collect();
    json!({ "columns": t.columns, "rows": rows })
}

fn cmd_verify(a: &VerifyArgs) -> Outcome {
    let params = validate(&a.common)?;
    let opts = VerifyOptions {
        memory: a.common.n,
        params,
        seed: a.common.seed,
        samples: a.samples.max(1),
        rounds: a.rounds.max(1),
        corrupt_payoff: a.corrupt_payoff,
    };
    let results = run_suite(&opts)?;
    let text = match a.common.format {
        Some(Format::Json) => to_json(&json!({ "provenance": provenance("verify", a), "results": results }))?,
        _ => {
            let mut s: String = results.iter().map(|r| r.line() + "\n").collect();
            let passed = results.iter().filter(|r| r.passed).count();
            s.push_str(&format!("{passed}/{} properties passed\n", results.len()));
            s
        }
    };
    emit(a.common.out.as_deref(), &text)?;
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verify(format!("verification failed: {}", failed.join(", "))))
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Outcome {
    let params = validate(&a.common)?;
    let n = a.common.n;
    let p = strategy_arg(&a.p, n, "p")?;
    let q = strategy_arg(&a.q, n, "q")?;
    if a.rounds == 0 || a.replicas == 0 {
        return Err(Failure::Usage("--rounds and --replicas must be positive".into()));
    }
    let burn_in = a.burn_in.unwrap_or_else(|| default_burn_in(a.rounds));
    let results = simulate_replicas(&p, &q, &params, a.rounds, burn_in, a.common.seed, a.replicas)?;
    let text = to_json(&json!({
        "provenance": provenance("simulate", a),
        "params": params,
        "p": p.probs(),
        "q": q.probs(),
        "results": results,
    }))?;
    emit(a.common.out.as_deref(), &text)
}
