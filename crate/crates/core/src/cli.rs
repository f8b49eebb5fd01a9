//! The `divisio` command line.
//!
//! Every command reads one JSON document and writes one JSON report of the
//! form `{"command": .., "seed": .., "result": ..}`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::decoherence::{evolve, validate_division, CentralSpinModel};
use crate::division::{coarse_grain, find_additive_tps, optimize_tps, separable_in_division, DEFAULT_RESTARTS};
use crate::error::Error;
use crate::linalg::{hermitian_eig, serde_state, CMatrix, CVector, MatrixJson, C64};
use crate::random::rng_from_seed;
use crate::schmidt::operator_schmidt;
use crate::separability::{extract_pointer_structure, is_separable, Tolerances};
use crate::twobody::{
    cm_coefficients, cm_relative_transform, decouple, kinetic_decoupling_check, CanonicalTransform, TwoBodySystem,
};
use crate::CompositeOperator;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NONSEPARABLE: i32 = 3;
pub const EXIT_INDIVISIBLE: i32 = 4;
pub const EXIT_EQUIVALENCE: i32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Schmidt,
    Separability,
    Pointer,
    Divide,
    CoarseGrain,
    Twobody,
    Decohere,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Schmidt => "schmidt",
            CommandKind::Separability => "separability",
            CommandKind::Pointer => "pointer",
            CommandKind::Divide => "divide",
            CommandKind::CoarseGrain => "coarse-grain",
            CommandKind::Twobody => "twobody",
            CommandKind::Decohere => "decohere",
        }
    }
}

impl std::str::FromStr for CommandKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        CommandKind::value_variants()
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown command {s:?}")))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "divisio",
    version,
    about = "Subsystem divisions of composite quantum systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Operator Schmidt decomposition of a bipartite operator
    Schmidt(Common),
    /// Decide whether an operator is diagonal in a product of local bases
    Separability(Common),
    /// Superselection sectors and pointer observable of a separable interaction
    Pointer(Common),
    /// Search for a tensor-product structure without interaction
    Divide {
        #[command(flatten)]
        common: Common,
        /// Also run the multi-restart descent when no exact division exists
        #[arg(long)]
        optimize: bool,
        /// Number of descent restarts [default: 8]
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Recursively split off factors
    CoarseGrain(Common),
    /// Centre-of-mass / relative decoupling of a two-body system
    Twobody(Common),
    /// Exact pure-dephasing run
    Decohere {
        #[command(flatten)]
        common: Common,
        /// End of the uniform time grid [default: 2 pi]
        #[arg(long)]
        t_max: Option<f64>,
        /// Intervals in the time grid [default: 200]
        #[arg(long)]
        steps: Option<usize>,
        /// Write t, coherence, analytic_reference to this file
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// JSON input document
    #[arg(long)]
    input: PathBuf,
    /// Write the report here instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relative tolerance for yes/no verdicts [default: 1e-8]
    #[arg(long)]
    tol_verdict: Option<f64>,
    /// Relative tolerance for reconstructions [default: 1e-10]
    #[arg(long)]
    tol_recon: Option<f64>,
    /// Factor dimensions, overriding the input document
    #[arg(long, num_args = 1..)]
    dims: Option<Vec<usize>>,
}

/// One fully parsed invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: CommandKind,
    pub input_path: PathBuf,
    pub output_path: Option<PathBuf>,
    pub seed: u64,
    pub tol_verdict: Option<f64>,
    pub tol_recon: Option<f64>,
    pub dims: Option<Vec<usize>>,
    pub optimize: bool,
    pub restarts: Option<usize>,
    pub t_max: Option<f64>,
    pub steps: Option<usize>,
    pub csv_path: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(command: CommandKind, input_path: impl Into<PathBuf>) -> Self {
        RunConfig {
            command,
            input_path: input_path.into(),
            output_path: None,
            seed: 0,
            tol_verdict: None,
            tol_recon: None,
            dims: None,
            optimize: false,
            restarts: None,
            t_max: None,
            steps: None,
            csv_path: None,
        }
    }

    fn from_common(command: CommandKind, c: Common) -> Self {
        RunConfig {
            output_path: c.output,
            seed: c.seed,
            tol_verdict: c.tol_verdict,
            tol_recon: c.tol_recon,
            dims: c.dims,
            ..RunConfig::new(command, c.input)
        }
    }

    fn tolerances(&self) -> Tolerances {
        let default = Tolerances::default();
        Tolerances {
            verdict: self.tol_verdict.unwrap_or(default.verdict),
            recon: self.tol_recon.unwrap_or(default.recon),
        }
    }
}

impl From<Command> for RunConfig {
    fn from(command: Command) -> Self {
        match command {
            Command::Schmidt(c) => RunConfig::from_common(CommandKind::Schmidt, c),
            Command::Separability(c) => RunConfig::from_common(CommandKind::Separability, c),
            Command::Pointer(c) => RunConfig::from_common(CommandKind::Pointer, c),
            Command::CoarseGrain(c) => RunConfig::from_common(CommandKind::CoarseGrain, c),
            Command::Twobody(c) => RunConfig::from_common(CommandKind::Twobody, c),
            Command::Divide {
                common,
                optimize,
                restarts,
            } => RunConfig {
                optimize,
                restarts,
                ..RunConfig::from_common(CommandKind::Divide, common)
            },
            Command::Decohere {
                common,
                t_max,
                steps,
                csv,
            } => RunConfig {
                t_max,
                steps,
                csv_path: csv,
                ..RunConfig::from_common(CommandKind::Decohere, common)
            },
        }
    }
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&RunConfig::from(cli.command)),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}

/// A failure on the way to a report.
#[derive(Debug)]
enum Failure {
    Input(String),
    Verdict(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonseparableInteraction { .. } | Error::EquivalenceViolation(_) => Failure::Verdict(e),
            other => Failure::Input(other.to_string()),
        }
    }
}

/// Result of running a command on an in-memory document.
#[derive(Debug, Clone, PartialEq)]
pub struct Completed {
    pub exit_code: i32,
    /// Pretty JSON report with a trailing newline; absent on input errors.
    pub report: Option<String>,
    /// One-line message for standard error.
    pub diagnostic: Option<String>,
}

/// Runs `config.command` on the JSON text `input`. `input_path` only labels
/// parse errors and nothing is written, apart from a requested CSV file.
pub fn run_text(config: &RunConfig, input: &str) -> Completed {
    let value = match serde_json::from_str::<Value>(input) {
        Ok(v) => v,
        Err(e) => return input_error(format!("{}: {e}", config.input_path.display())),
    };
    let (result, exit_code, diagnostic) = match execute(config, value) {
        Ok((result, code)) => (result, code, None),
        Err(Failure::Input(msg)) => return input_error(msg),
        Err(Failure::Verdict(e)) => {
            let code = match e {
                Error::EquivalenceViolation(_) => EXIT_EQUIVALENCE,
                _ => EXIT_NONSEPARABLE,
            };
            let result = match &e {
                Error::NonseparableInteraction { defect } => {
                    json!({"verdict": "nonseparable", "commutator_defect": defect})
                }
                Error::EquivalenceViolation(d) => {
                    json!({"verdict": "equivalence-violation", "diagnostics": d.as_ref()})
                }
                _ => Value::Null,
            };
            (result, code, Some(first_line(&e.to_string())))
        }
    };
    let report = json!({"command": config.command.name(), "seed": config.seed, "result": result});
    let mut text = serde_json::to_string_pretty(&report).expect("reports serialize");
    text.push('\n');
    Completed {
        exit_code,
        report: Some(text),
        diagnostic,
    }
}

fn first_line(s: &str) -> String {
    s.lines().next().unwrap_or_default().to_string()
}

fn input_error(msg: String) -> Completed {
    Completed {
        exit_code: EXIT_INPUT,
        report: None,
        diagnostic: Some(first_line(&msg)),
    }
}

pub fn run(config: &RunConfig) -> i32 {
    let path = &config.input_path;
    let done = match fs::read_to_string(path) {
        Ok(text) => run_text(config, &text),
        Err(e) => input_error(format!("cannot read {}: {e}", path.display())),
    };
    if let Some(msg) = &done.diagnostic {
        eprintln!("divisio: {msg}");
    }
    let Some(report) = done.report else {
        return done.exit_code;
    };
    let written = match config.output_path.as_deref() {
        Some(p) => fs::write(p, &report).map_err(|e| format!("cannot write {}: {e}", p.display())),
        None => std::io::stdout()
            .write_all(report.as_bytes())
            .map_err(|e| format!("cannot write report: {e}")),
    };
    match written {
        Ok(()) => done.exit_code,
        Err(msg) => {
            eprintln!("divisio: {msg}");
            EXIT_INPUT
        }
    }
}

fn parse<T: for<'de> Deserialize<'de>>(value: Value, what: &str) -> Result<T, Failure> {
    serde_json::from_value(value).map_err(|e| Failure::Input(format!("not a valid {what}: {e}")))
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("reports serialize")
}

/// Matrices are accepted as `{rows, cols, re, im}`, as rows of reals, or as
/// rows of `[re, im]` pairs.
#[derive(Deserialize)]
#[serde(untagged)]
enum MatrixInput {
    Packed(MatrixJson),
    Real(Vec<Vec<f64>>),
    Complex(Vec<Vec<[f64; 2]>>),
}

impl MatrixInput {
    fn into_matrix(self) -> Result<CMatrix, Failure> {
        let rows: Vec<Vec<C64>> = match self {
            MatrixInput::Packed(m) => return Ok(CMatrix::try_from(m)?),
            MatrixInput::Real(r) => r
                .into_iter()
                .map(|row| row.into_iter().map(|x| C64::new(x, 0.0)).collect())
                .collect(),
            MatrixInput::Complex(r) => r
                .into_iter()
                .map(|row| row.into_iter().map(|[re, im]| C64::new(re, im)).collect())
                .collect(),
        };
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Failure::Input("matrix rows must form a square array".into()));
        }
        Ok(CMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorInput {
    dim_a: Option<usize>,
    dim_b: Option<usize>,
    dims: Option<Vec<usize>>,
    matrix: MatrixInput,
}

/// Reads an operator and its factor dimensions; `--dims` overrides the file.
fn load_operator(config: &RunConfig, value: Value) -> Result<(CMatrix, Vec<usize>), Failure> {
    let input = if value.get("matrix").is_some() {
        parse::<OperatorInput>(value, "operator document")?
    } else {
        OperatorInput {
            dim_a: None,
            dim_b: None,
            dims: None,
            matrix: parse(value, "matrix")?,
        }
    };
    let matrix = input.matrix.into_matrix()?;
    let dims = match (&config.dims, input.dims, input.dim_a, input.dim_b) {
        (Some(d), ..) => d.clone(),
        (None, Some(d), ..) => d,
        (None, None, Some(a), Some(b)) => vec![a, b],
        _ => {
            return Err(Failure::Input(
                "factor dimensions missing: give dim_a/dim_b or --dims".into(),
            ))
        }
    };
    if dims.iter().product::<usize>() != matrix.nrows() || dims.contains(&0) {
        return Err(Failure::Input(format!(
            "dimensions {dims:?} do not factor an operator of order {}",
            matrix.nrows()
        )));
    }
    Ok((matrix, dims))
}

fn bipartite(config: &RunConfig, value: Value) -> Result<CompositeOperator, Failure> {
    let (matrix, dims) = load_operator(config, value)?;
    if dims.len() != 2 {
        return Err(Failure::Input(format!(
            "{} needs exactly two factor dimensions",
            config.command.name()
        )));
    }
    Ok(CompositeOperator::new(dims[0], dims[1], matrix)?)
}

fn execute(config: &RunConfig, input: Value) -> Result<(Value, i32), Failure> {
    for t in [config.tol_verdict, config.tol_recon].into_iter().flatten() {
        if !(t.is_finite() && t > 0.0) {
            return Err(Failure::Input(format!("tolerances must be positive, got {t}")));
        }
    }
    let tol = config.tolerances();
    let mut rng = rng_from_seed(config.seed);
    match config.command {
        CommandKind::Schmidt => {
            let dec = operator_schmidt(&bipartite(config, input)?)?;
            Ok((to_value(&dec), EXIT_OK))
        }
        CommandKind::Separability => {
            let verdict = is_separable(&bipartite(config, input)?, &mut rng, &tol)?;
            let code = if verdict.separable { EXIT_OK } else { EXIT_NONSEPARABLE };
            Ok((to_value(&verdict), code))
        }
        CommandKind::Pointer => {
            let pointer = extract_pointer_structure(&bipartite(config, input)?, &mut rng, &tol)?;
            Ok((to_value(&pointer), EXIT_OK))
        }
        CommandKind::Divide => divide(config, input, &tol),
        CommandKind::CoarseGrain => {
            let (matrix, dims) = load_operator(config, input)?;
            let h = crate::linalg::ensure_hermitian(&matrix)?;
            let tree = coarse_grain(&h, &dims)?;
            let code = if tree.fully_divided() {
                EXIT_OK
            } else {
                EXIT_INDIVISIBLE
            };
            Ok((to_value(&tree), code))
        }
        CommandKind::Twobody => twobody(input),
        CommandKind::Decohere => decohere(config, input),
    }
}

fn divide(config: &RunConfig, input: Value, tol: &Tolerances) -> Result<(Value, i32), Failure> {
    let op = bipartite(config, input)?;
    let (da, db) = (op.dim_a(), op.dim_b());
    let h = op.matrix();
    if let Some(division) = find_additive_tps(h, da, db)? {
        return Ok((json!({"status": "divided", "division": division}), EXIT_OK));
    }
    let spectrum: Vec<f64> = hermitian_eig(h)?.eigenvalues.iter().copied().collect();
    let mut result = json!({"status": "indivisible", "spectrum": spectrum});
    if config.optimize {
        let restarts = config.restarts.unwrap_or(DEFAULT_RESTARTS);
        let best = optimize_tps(h, da, db, restarts, config.seed)?;
        let mut rng = rng_from_seed(config.seed);
        let weak = separable_in_division(h, &best.tps, &mut rng, tol)?;
        result["optimized"] = json!({
            "tps": best.tps,
            "residual": best.residual,
            "restart": best.restart,
            "interaction_separable": weak.separable,
            "commutator_defect": weak.commutator_defect,
        });
    }
    Ok((result, EXIT_INDIVISIBLE))
}

fn twobody(input: Value) -> Result<(Value, i32), Failure> {
    let sys: TwoBodySystem = parse(input, "two-body system")?;
    sys.validate()?;
    let cm = cm_relative_transform(sys.m1, sys.m2)?;
    let (light, heavy) = cm_coefficients(sys.m1, sys.m2);
    let result = json!({
        "system": sys,
        "total_mass": sys.total_mass(),
        "reduced_mass": sys.reduced_mass(),
        "cm_coefficients": [light, heavy],
        "identity_check": kinetic_decoupling_check(&sys, &CanonicalTransform::identity(2))?,
        "cm_relative_check": kinetic_decoupling_check(&sys, &cm)?,
        "decoupled": decouple(&sys)?,
    });
    Ok((result, EXIT_OK))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DivisionInput {
    dim_s: usize,
    dim_e: usize,
    matrix: MatrixInput,
    #[serde(with = "serde_state")]
    env_state: CVector,
    times: Option<Vec<f64>>,
}

fn time_grid(config: &RunConfig, given: Option<Vec<f64>>) -> Result<Vec<f64>, Failure> {
    if let Some(times) = given {
        if config.t_max.is_some() || config.steps.is_some() {
            return Err(Failure::Input(
                "give either times in the input or --t-max/--steps".into(),
            ));
        }
        return Ok(times);
    }
    let t_max = config.t_max.unwrap_or(2.0 * std::f64::consts::PI);
    let steps = config.steps.unwrap_or(200);
    if !(t_max.is_finite() && t_max > 0.0) || steps == 0 {
        return Err(Failure::Input("--t-max must be positive and --steps nonzero".into()));
    }
    Ok((0..=steps).map(|k| t_max * k as f64 / steps as f64).collect())
}

fn decohere(config: &RunConfig, value: Value) -> Result<(Value, i32), Failure> {
    let (result, report) = if value.get("n_env").is_some() {
        let times = value
            .get("times")
            .map(|t| parse::<Vec<f64>>(t.clone(), "time list"))
            .transpose()?;
        let mut model_value = value;
        if let Some(obj) = model_value.as_object_mut() {
            obj.remove("times");
        }
        let model: CentralSpinModel = parse(model_value, "central-spin model")?;
        let report = evolve(&model, &time_grid(config, times)?)?;
        (to_value(&report), report)
    } else {
        let input: DivisionInput = parse(value, "division document")?;
        let times = time_grid(config, input.times)?;
        let h = input.matrix.into_matrix()?;
        let v = validate_division(&h, input.dim_s, input.dim_e, &input.env_state, &times)?;
        (to_value(&v), v.report)
    };
    if let Some(path) = &config.csv_path {
        write_csv(
            path,
            &report.times,
            &report.coherence,
            report.analytic_reference.as_deref(),
        )?;
    }
    Ok((result, EXIT_OK))
}

#[derive(Serialize)]
struct CsvRow {
    t: f64,
    coherence: f64,
    analytic_reference: Option<f64>,
}

fn write_csv(path: &Path, times: &[f64], coherence: &[f64], reference: Option<&[f64]>) -> Result<(), Failure> {
    let fail = |e: csv::Error| Failure::Input(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(fail)?;
    for (k, (&t, &c)) in times.iter().zip(coherence).enumerate() {
        w.serialize(CsvRow {
            t,
            coherence: c,
            analytic_reference: reference.map(|r| r[k]),
        })
        .map_err(fail)?;
    }
    w.flush()
        .map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))
}
