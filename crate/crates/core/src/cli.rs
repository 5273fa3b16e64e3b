//! Command-line harness. Every identity family is a subcommand; each
//! identity writes one JSON report to the output directory.
//!
//! Exit codes: 0 when every report passes, 1 when any identity fails, 2 on a
//! configuration or input error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{ArgAction, Args, CommandFactory, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::chaos::{self, ChaosPoly};
use crate::error::{Error, Result};
use crate::estimator::RngStream;
use crate::expr::Expr;
use crate::gaussian::{self, FourierMethod, Param};
use crate::geometry::{self, Backend, ChartedManifold, Kind, ScalarField, VectorField};
use crate::paths::{sample_brownian, DualMeasure, Grid, Shift};
use crate::report::{Check, Thresholds, VerificationReport};
use crate::sdyson::{self, SourcedAction, ToyAction};
use crate::wiener::{self, CylinderFunctional};

pub const SEED_ENV: &str = "VOLFORMS_SEED";

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

// Stream indices, one per identity, so a subcommand run alone draws exactly
// the numbers it draws inside `all`.
const STREAM_CF: u64 = 1;
const STREAM_CM: u64 = 2;
const STREAM_CM_NORM: u64 = 3;
const STREAM_MALLIAVIN: u64 = 4;
const STREAM_ISOMETRY: u64 = 5;
const STREAM_COMMUTATORS: u64 = 10;
const STREAM_ADJOINT: u64 = 11;
const STREAM_BRIDGE: u64 = 12;
const STREAM_FOURIER: u64 = 20;
const STREAM_COVARIANCE: u64 = 21;
const STREAM_GEOM_POINTS: u64 = 30;
const STREAM_GEOM_FIELDS: u64 = 31;
const STREAM_PFAFFIAN: u64 = 32;
const STREAM_ALGEBRA: u64 = 33;

/// Settings shared by every subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub grid_n: usize,
    pub n_samples: u64,
    pub sigma_threshold: f64,
    pub abs_tol: f64,
    pub output: PathBuf,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_n == 0 || self.n_samples == 0 {
            return Err(Error::InvalidArgument(
                "grid-n and n-samples must be positive".into(),
            ));
        }
        if !(self.sigma_threshold > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::InvalidArgument(
                "sigma-threshold and abs-tol must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            sigma: self.sigma_threshold,
            abs_tol: self.abs_tol,
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid_n)
    }

    pub fn stream(&self, index: u64) -> RngStream {
        RngStream::new(self.seed, index)
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "volforms",
    version,
    about = "Numerical checks of volume-form identities",
    propagate_version = true
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Master seed; each identity draws from its own stream of it.
    #[arg(long, global = true, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Time steps of the path grid on [0, 1].
    #[arg(long, global = true, default_value_t = 256)]
    pub grid_n: usize,
    #[arg(long, global = true, default_value_t = 100_000)]
    pub n_samples: u64,
    #[arg(long, global = true, default_value_t = 3.0)]
    pub sigma_threshold: f64,
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub abs_tol: f64,
    #[arg(long, global = true, default_value = "reports")]
    pub output: PathBuf,
    /// JSON object whose keys mirror the long flags; command-line flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the first N sampled paths of each path-space identity as CSV.
    #[arg(long, global = true, default_value_t = 0)]
    pub dump_paths: usize,
}

impl GlobalArgs {
    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            seed: self.seed,
            grid_n: self.grid_n,
            n_samples: self.n_samples,
            sigma_threshold: self.sigma_threshold,
            abs_tol: self.abs_tol,
            output: self.output.clone(),
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Identities of the Wiener measure on paths.
    #[command(subcommand)]
    Wiener(WienerCommand),
    /// Exact Fock-space algebra and its path-space bridge.
    #[command(subcommand)]
    Chaos(ChaosCommand),
    /// Finite-dimensional Gaussian and Fresnel volume elements.
    #[command(subcommand)]
    Gauss(GaussCommand),
    /// Schwinger-Dyson identity and generating functional of toy actions.
    #[command(subcommand)]
    Sdyson(SdysonCommand),
    /// Divergences and volume forms on charted manifolds.
    #[command(subcommand)]
    Geom(GeomCommand),
    /// Every identity, each subcommand with its defaults (and the config file).
    All,
}

#[derive(Subcommand, Debug)]
pub enum WienerCommand {
    /// Characteristic functional of a finite dual measure.
    Cf(CfArgs),
    /// Cameron-Martin change of variables and the normalization E[J] = 1.
    Cm(CmArgs),
    /// Integration by parts E[D_phi F] = E[A_phi F].
    Malliavin(MalliavinArgs),
}

#[derive(Subcommand, Debug)]
pub enum ChaosCommand {
    /// Commutation relations, adjointness, Hermite ladder, vacuum and totality.
    Commutators(CommutatorArgs),
    /// Monte Carlo moments of polynomials in xi_k = A_{e_k}(w).
    Bridge(BridgeArgs),
}

#[derive(Subcommand, Debug)]
pub enum GaussCommand {
    /// Fourier transform of the Gaussian volume element.
    Fourier(FourierArgs),
    /// 2 pi E[x x^T] = W under the normalized Gaussian.
    Covariance(CovarianceArgs),
}

#[derive(Subcommand, Debug)]
pub enum SdysonCommand {
    /// Schwinger-Dyson residuals and the source derivative of log Z.
    Verify(SdVerifyArgs),
    /// Leading-order mu against the Gaussian normalization.
    Mu(MuArgs),
}

#[derive(Subcommand, Debug)]
pub enum GeomCommand {
    /// Divergence identity and Killing fields on Riemannian charts.
    Riemann(RiemannArgs),
    /// Divergence identity, Hamiltonian fields and Pfaffians on symplectic charts.
    Symplectic(SymplecticArgs),
    /// D([X,Y]) and D(fX) on random polynomial triples.
    Algebra(AlgebraArgs),
}

#[derive(Parser, Debug, Clone)]
pub struct CfArgs {
    /// Atoms `t:a` separated by commas; every `t` must be a grid node.
    #[arg(long, default_value = "0.5:1,1:-0.5")]
    pub atoms: String,
}

#[derive(Parser, Debug, Clone)]
pub struct CmArgs {
    /// `basis:k`, `linear`, `linear:a` or `zero`.
    #[arg(long, default_value = "basis:1")]
    pub phi: String,
    /// Expression in w1..wm, the path values at `--times`.
    #[arg(long, default_value = "exp(-w1^2)")]
    pub functional: String,
    #[arg(long, default_value = "1")]
    pub times: String,
}

#[derive(Parser, Debug, Clone)]
pub struct MalliavinArgs {
    #[arg(long, default_value = "basis:1")]
    pub phi: String,
    #[arg(long, default_value = "w1*w2^2")]
    pub functional: String,
    #[arg(long, default_value = "0.5,1")]
    pub times: String,
    /// Second direction for the isometry check with F = A_phi2; `none` skips it.
    #[arg(long, default_value = "linear")]
    pub phi2: String,
}

#[derive(Parser, Debug, Clone)]
pub struct CommutatorArgs {
    #[arg(long, default_value_t = 4)]
    pub modes: usize,
    #[arg(long, default_value_t = 4)]
    pub degree: u32,
    #[arg(long, default_value_t = 50)]
    pub cases: usize,
    /// Highest power in a+(e_1)^k 1 compared with the Hermite recurrence.
    #[arg(long, default_value_t = 6)]
    pub hermite_k: u32,
}

#[derive(Parser, Debug, Clone)]
pub struct BridgeArgs {
    /// Polynomials in xi1..xiK separated by `;`.
    #[arg(long, default_value = "xi1^2; xi1*xi2; xi1^4; xi1^2*xi2^2 - 2*xi2")]
    pub poly: String,
    /// Number of modes K; defaults to the largest index used.
    #[arg(long)]
    pub modes: Option<usize>,
}

#[derive(Parser, Debug, Clone)]
pub struct FourierArgs {
    /// Symmetric matrix, row-major, entries separated by `,` and rows by `;`.
    #[arg(long = "Q", default_value = "2,0.5;0.5,1")]
    pub q: String,
    /// Comma-separated list of `1` and `i`.
    #[arg(long, default_value = "1,i")]
    pub s: String,
    #[arg(long, default_value = "0.3,-0.2")]
    pub xprime: String,
    /// `quadrature`, `closed-form` or `mc`; by default quadrature for s = 1
    /// and closed form for s = i.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long, default_value_t = 1e-10)]
    pub quad_tol: f64,
    /// Also write the Gauss-Hermite table with this many nodes per axis.
    #[arg(long)]
    pub dump_table: Option<usize>,
}

#[derive(Parser, Debug, Clone)]
pub struct CovarianceArgs {
    #[arg(long = "Q", default_value = "2,0.5;0.5,1")]
    pub q: String,
}

#[derive(Parser, Debug, Clone)]
pub struct SdVerifyArgs {
    /// Polynomial action in phi1..phiD.
    #[arg(long, default_value = "0.5*phi1^2 + 0.25*phi1^4")]
    pub action: String,
    /// Polynomial insertion F in phi1..phiD.
    #[arg(long = "F", default_value = "phi1^3")]
    pub f: String,
    /// One-based component; all components when omitted.
    #[arg(long)]
    pub component: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub hbar: f64,
    /// Source J for the generating-functional check; one value is broadcast.
    #[arg(long, default_value = "0.3")]
    pub source: String,
}

#[derive(Parser, Debug, Clone)]
pub struct MuArgs {
    #[arg(long, default_value = "0.5*phi1^2 + 0.25*phi1^4")]
    pub action: String,
    #[arg(long, default_value_t = 1.0)]
    pub hbar: f64,
    /// Newton starting point; the origin when omitted.
    #[arg(long)]
    pub guess: Option<String>,
}

#[derive(Parser, Debug, Clone)]
pub struct RiemannArgs {
    #[arg(long, default_value = "flat2,sphere2,conformal2")]
    pub manifold: String,
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    /// Degree of the random polynomial test field.
    #[arg(long, default_value_t = 2)]
    pub degree: u32,
}

#[derive(Parser, Debug, Clone)]
pub struct SymplecticArgs {
    #[arg(
        long,
        default_value = "darboux2,nonconstant-symplectic2,exact-symplectic4"
    )]
    pub manifold: String,
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    #[arg(long, default_value_t = 2)]
    pub degree: u32,
    /// Random antisymmetric matrices per dimension for Pf^2 = det.
    #[arg(long, default_value_t = 20)]
    pub pf_cases: usize,
}

#[derive(Parser, Debug, Clone)]
pub struct AlgebraArgs {
    #[arg(
        long,
        default_value = "flat2,sphere2,conformal2,darboux2,nonconstant-symplectic2"
    )]
    pub manifold: String,
    /// Random (X, Y, f) triples per manifold.
    #[arg(long, default_value_t = 50)]
    pub triples: usize,
    /// Points per triple.
    #[arg(long, default_value_t = 2)]
    pub points: usize,
}

/// Result of one identity, keyed by its report file name.
pub struct Outcome {
    pub key: String,
    pub result: Result<VerificationReport>,
}

impl Outcome {
    fn new(key: impl Into<String>, result: Result<VerificationReport>) -> Self {
        Self {
            key: key.into(),
            result,
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    grid: Grid,
    t: Thresholds,
    dump_paths: usize,
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let raw: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let (argv, config) = match apply_config(raw) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_INPUT
            } else {
                EXIT_PASS
            };
        }
    };
    let cfg = cli.global.run_config();
    let setup = cfg.validate().and_then(|_| cfg.grid());
    let grid = match setup {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
    };
    let ctx = Ctx {
        t: cfg.thresholds(),
        cfg,
        grid,
        dump_paths: cli.global.dump_paths,
    };
    match dispatch(&ctx, cli.command, &config) {
        Ok(outcomes) => finish(&ctx, outcomes),
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

fn dispatch(ctx: &Ctx, command: Command, config: &Map<String, Value>) -> Result<Vec<Outcome>> {
    match command {
        Command::Wiener(WienerCommand::Cf(a)) => wiener_cf(ctx, &a),
        Command::Wiener(WienerCommand::Cm(a)) => wiener_cm(ctx, &a),
        Command::Wiener(WienerCommand::Malliavin(a)) => wiener_malliavin(ctx, &a),
        Command::Chaos(ChaosCommand::Commutators(a)) => chaos_commutators(ctx, &a),
        Command::Chaos(ChaosCommand::Bridge(a)) => chaos_bridge(ctx, &a),
        Command::Gauss(GaussCommand::Fourier(a)) => gauss_fourier(ctx, &a),
        Command::Gauss(GaussCommand::Covariance(a)) => gauss_covariance(ctx, &a),
        Command::Sdyson(SdysonCommand::Verify(a)) => sdyson_verify(&a),
        Command::Sdyson(SdysonCommand::Mu(a)) => sdyson_mu(&a),
        Command::Geom(GeomCommand::Riemann(a)) => geom_riemann(ctx, &a),
        Command::Geom(GeomCommand::Symplectic(a)) => geom_symplectic(ctx, &a),
        Command::Geom(GeomCommand::Algebra(a)) => geom_algebra(ctx, &a),
        Command::All => run_all(ctx, config),
    }
}

fn run_all(ctx: &Ctx, config: &Map<String, Value>) -> Result<Vec<Outcome>> {
    let mut out = Vec::new();
    out.extend(wiener_cf(ctx, &sub_args(config)?)?);
    out.extend(wiener_cm(ctx, &sub_args(config)?)?);
    out.extend(wiener_malliavin(ctx, &sub_args(config)?)?);
    out.extend(chaos_commutators(ctx, &sub_args(config)?)?);
    out.extend(chaos_bridge(ctx, &sub_args(config)?)?);
    out.extend(gauss_fourier(ctx, &sub_args(config)?)?);
    out.extend(gauss_covariance(ctx, &sub_args(config)?)?);
    out.extend(sdyson_verify(&sub_args(config)?)?);
    out.extend(sdyson_mu(&sub_args(config)?)?);
    out.extend(geom_riemann(ctx, &sub_args(config)?)?);
    out.extend(geom_symplectic(ctx, &sub_args(config)?)?);
    out.extend(geom_algebra(ctx, &sub_args(config)?)?);
    Ok(out)
}

/// Subcommand options for `all`: defaults overridden by matching config keys.
fn sub_args<T: Parser>(config: &Map<String, Value>) -> Result<T> {
    let cmd = T::command();
    let mut argv: Vec<OsString> = vec!["all".into()];
    argv.extend(config_tokens(config, &[&cmd], &[])?);
    T::try_parse_from(argv).map_err(|e| Error::InvalidArgument(e.to_string()))
}

fn finish(ctx: &Ctx, outcomes: Vec<Outcome>) -> i32 {
    let mut code = EXIT_PASS;
    if let Err(e) = fs::create_dir_all(&ctx.cfg.output) {
        eprintln!("error: cannot create {}: {e}", ctx.cfg.output.display());
        return EXIT_INPUT;
    }
    for o in outcomes {
        let path = ctx.cfg.output.join(format!("{}.json", o.key));
        let (value, line) = match &o.result {
            Ok(r) => {
                if !r.pass && code == EXIT_PASS {
                    code = EXIT_FAIL;
                }
                (
                    serde_json::to_value(r).expect("report serializes"),
                    summary_line(&o.key, r),
                )
            }
            Err(e) => {
                code = if e.is_input() {
                    EXIT_INPUT
                } else {
                    code.max(EXIT_FAIL)
                };
                let v = serde_json::json!({
                    "schema": crate::report::SCHEMA_VERSION,
                    "identity": o.key,
                    "pass": false,
                    "error": e.to_string(),
                });
                (v, format!("ERROR {}: {e}", o.key))
            }
        };
        println!("{line}");
        if let Err(e) = write_report(&path, value) {
            eprintln!("error: cannot write {}: {e}", path.display());
            code = EXIT_INPUT;
        }
    }
    code
}

fn summary_line(key: &str, r: &VerificationReport) -> String {
    let status = if r.pass { "PASS" } else { "FAIL" };
    let sigma = r
        .sigma_units
        .map(|s| format!(", {s:.2} sigma"))
        .unwrap_or_default();
    format!(
        "{status}  {key} [{}]  |lhs - rhs| = {:.3e}{sigma}",
        r.equation, r.discrepancy
    )
}

fn timestamp() -> String {
    let d = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or_default();
    format!("{}.{:03}", d.as_secs(), d.subsec_millis())
}

/// Writes `value` plus a `timestamp` field via a temporary file and rename.
fn write_report(path: &Path, mut value: Value) -> std::io::Result<()> {
    if let Value::Object(m) = &mut value {
        m.insert("timestamp".into(), Value::String(timestamp()));
    }
    let text = serde_json::to_string_pretty(&value).expect("json serializes") + "\n";
    write_atomic(path, text.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

// ---- configuration file ----

/// Reads `--config` if present and appends its entries as flags not already
/// given on the command line. Returns the new argv and the parsed object.
fn apply_config(raw: Vec<OsString>) -> Result<(Vec<OsString>, Map<String, Value>)> {
    let Some(path) = config_path(&raw) else {
        return Ok((raw, Map::new()));
    };
    let text =
        fs::read_to_string(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let config = match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => m,
        Ok(_) => {
            return Err(Error::InvalidArgument(
                "config must be a JSON object".into(),
            ))
        }
        Err(e) => {
            return Err(Error::InvalidArgument(format!(
                "config {}: {e}",
                path.display()
            )))
        }
    };
    let root = Cli::command();
    let known = all_longs(&root);
    if let Some(k) = config.keys().find(|k| !known.contains(&flag_name(k))) {
        return Err(Error::InvalidArgument(format!("unknown config key {k:?}")));
    }
    let mut leaf = &root;
    for tok in raw.iter().skip(1) {
        if let Some(sub) = tok.to_str().and_then(|t| leaf.find_subcommand(t)) {
            leaf = sub;
        }
    }
    let given: Vec<String> = raw
        .iter()
        .filter_map(|t| t.to_str())
        .map(str::to_string)
        .collect();
    let mut argv = raw.clone();
    argv.extend(config_tokens(&config, &[&root, leaf], &given)?);
    Ok((argv, config))
}

fn config_path(raw: &[OsString]) -> Option<PathBuf> {
    let mut it = raw.iter().skip(1);
    while let Some(tok) = it.next() {
        let s = tok.to_str()?;
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

fn all_longs(cmd: &clap::Command) -> Vec<String> {
    let mut out: Vec<String> = cmd
        .get_arguments()
        .filter_map(|a| a.get_long())
        .map(str::to_string)
        .collect();
    for sub in cmd.get_subcommands() {
        out.extend(all_longs(sub));
    }
    out
}

/// Flags for every config entry accepted by one of `cmds` and not in `given`.
fn config_tokens(
    config: &Map<String, Value>,
    cmds: &[&clap::Command],
    given: &[String],
) -> Result<Vec<OsString>> {
    let mut out = Vec::new();
    for (key, value) in config {
        let name = flag_name(key);
        if name == "config" {
            continue;
        }
        let Some(arg) = cmds
            .iter()
            .flat_map(|c| c.get_arguments())
            .find(|a| a.get_long() == Some(name.as_str()))
        else {
            continue;
        };
        let flag = format!("--{name}");
        if given
            .iter()
            .any(|g| *g == flag || g.starts_with(&format!("{flag}=")))
        {
            continue;
        }
        if matches!(arg.get_action(), ArgAction::SetTrue) {
            if value.as_bool() == Some(true) {
                out.push(flag.into());
            }
            continue;
        }
        out.push(format!("{flag}={}", config_value(key, value)?).into());
    }
    Ok(out)
}

fn config_value(key: &str, v: &Value) -> Result<String> {
    let bad = || Error::InvalidArgument(format!("config key {key:?}: unsupported value {v}"));
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        Value::Array(items) if items.iter().all(Value::is_array) => {
            let rows = items
                .iter()
                .map(|r| config_value(key, r))
                .collect::<Result<Vec<_>>>()?;
            Ok(rows.join(";"))
        }
        Value::Array(items) if items.iter().all(Value::is_number) => Ok(items
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join(",")),
        Value::Array(items) if items.iter().all(Value::is_string) => Ok(items
            .iter()
            .filter_map(Value::as_str)
            .collect::<Vec<_>>()
            .join(";")),
        Value::Object(m) => coefficient_table(m).ok_or_else(bad),
        _ => Err(bad()),
    }
}

/// `{"terms": [{"exponents": [2, 0], "coeff": 0.5}, ...]}` (or `[[2, 0], 0.5]`
/// pairs) as a polynomial expression in phi1..phiD.
fn coefficient_table(m: &Map<String, Value>) -> Option<String> {
    let terms = m.get("terms")?.as_array()?;
    let mut parts = Vec::new();
    for t in terms {
        let (exps, coeff) = match t {
            Value::Object(o) => (o.get("exponents")?.as_array()?, o.get("coeff")?.as_f64()?),
            Value::Array(pair) if pair.len() == 2 => (pair[0].as_array()?, pair[1].as_f64()?),
            _ => return None,
        };
        let mut s = format!("({coeff:?})");
        for (i, e) in exps.iter().enumerate() {
            let e = e.as_u64()?;
            if e > 0 {
                s.push_str(&format!("*phi{}^{e}", i + 1));
            }
        }
        parts.push(s);
    }
    if parts.is_empty() {
        return Some("0".into());
    }
    Some(parts.join(" + "))
}

// ---- argument parsing helpers ----

fn number<T: FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("{what}: cannot parse {s:?}")))
}

fn list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',').map(|x| number(x, what)).collect()
}

pub fn parse_matrix(s: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = s
        .split(';')
        .map(|r| list(r, "matrix entry"))
        .collect::<Result<_>>()?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidArgument(format!(
            "matrix {s:?} is not square"
        )));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn parse_shift(s: &str, grid: Grid) -> Result<Shift> {
    let s = s.trim();
    match s.split_once(':') {
        Some(("basis", k)) => Shift::basis(grid, number(k, "basis index")?),
        Some(("linear", a)) => Ok(Shift::linear(grid, number(a, "slope")?)),
        None if s == "linear" => Ok(Shift::linear(grid, 1.0)),
        None if s == "zero" => Ok(Shift::zero(grid)),
        _ => Err(Error::InvalidArgument(format!(
            "unknown shift {s:?}; use basis:k, linear, linear:a or zero"
        ))),
    }
}

pub fn parse_atoms(s: &str) -> Result<DualMeasure> {
    let atoms = s
        .split(',')
        .map(|a| {
            let (t, c) = a
                .split_once(':')
                .ok_or_else(|| Error::InvalidArgument(format!("atom {a:?} is not t:a")))?;
            Ok((number(t, "atom time")?, number(c, "atom weight")?))
        })
        .collect::<Result<Vec<_>>>()?;
    DualMeasure::new(atoms)
}

/// Cylinder functional from an expression in w1..wm and the m times.
pub fn parse_functional(src: &str, times: &str) -> Result<CylinderFunctional> {
    let times = list(times, "time")?;
    let e = Expr::parse(src, "w")?;
    if e.arity() > times.len() {
        return Err(Error::InvalidArgument(format!(
            "{src} uses w{} but only {} times are declared",
            e.arity(),
            times.len()
        )));
    }
    let grads: Vec<Expr> = (0..times.len()).map(|k| e.derivative(k)).collect();
    Ok(
        CylinderFunctional::new(times, move |w| e.eval_unchecked(w))?
            .with_gradient(move |w| grads.iter().map(|g| g.eval_unchecked(w)).collect()),
    )
}

fn parse_action(src: &str, hbar: f64) -> Result<ToyAction> {
    let e = Expr::parse(src, "phi")?;
    if e.arity() == 0 {
        return Err(Error::InvalidArgument(format!(
            "action {src:?} uses no variables"
        )));
    }
    ToyAction::from_poly(e.to_poly(e.arity())?)?.with_hbar(hbar)
}

fn parse_params(s: &str) -> Result<Vec<Param>> {
    s.split(',').map(Param::from_str).collect()
}

fn manifolds(s: &str) -> Result<Vec<ChartedManifold>> {
    s.split(',').map(|m| geometry::builtin(m.trim())).collect()
}

fn require_kind(m: &ChartedManifold, kind: Kind) -> Result<()> {
    if m.kind() != kind {
        return Err(Error::InvalidArgument(format!(
            "{} is not {kind:?}",
            m.name()
        )));
    }
    Ok(())
}

/// Index of a built-in, so its random streams do not depend on list order.
fn manifold_index(m: &ChartedManifold) -> u64 {
    geometry::BUILTIN_MANIFOLDS
        .iter()
        .position(|n| *n == m.name())
        .unwrap_or(usize::MAX) as u64
}

// ---- report merging ----

/// Concatenates reports into one; checks from a report with another equation
/// tag get the tag appended to their label.
fn merge(
    identity: &str,
    equation: &str,
    parts: Vec<(String, VerificationReport)>,
) -> VerificationReport {
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    let (mut seed, mut grid) = (None, None);
    for (prefix, r) in parts {
        for mut c in r.checks {
            if !prefix.is_empty() {
                c.label = format!("{prefix}: {}", c.label);
            }
            if r.equation != equation {
                c.label = format!("{} [{}]", c.label, r.equation);
            }
            checks.push(c);
        }
        notes.extend(r.notes.into_iter().map(|n| {
            if prefix.is_empty() {
                n
            } else {
                format!("{prefix}: {n}")
            }
        }));
        seed = seed.or(r.seed);
        grid = grid.or(r.grid_n);
    }
    let mut out = VerificationReport::from_checks(identity, equation, checks);
    out.seed = seed;
    out.grid_n = grid;
    out.notes = notes;
    out
}

fn worst(checks: impl IntoIterator<Item = Check>) -> Option<Check> {
    checks
        .into_iter()
        .fold(None, |w: Option<Check>, c| match w {
            Some(w)
                if (w.pass && !c.pass) || (w.pass == c.pass && c.discrepancy > w.discrepancy) =>
            {
                Some(c)
            }
            Some(w) => Some(w),
            None => Some(c),
        })
}

fn dump_paths(ctx: &Ctx, key: &str, stream: &RngStream) -> Result<()> {
    if ctx.dump_paths == 0 {
        return Ok(());
    }
    let dir = ctx.cfg.output.join("paths").join(key);
    fs::create_dir_all(&dir)?;
    for draw in 0..ctx.dump_paths {
        let w = sample_brownian(ctx.grid, &mut stream.draw_rng(draw as u64));
        write_atomic(
            &dir.join(format!("path_{draw:04}.csv")),
            w.to_csv().as_bytes(),
        )?;
    }
    Ok(())
}

// ---- subcommands ----

fn wiener_cf(ctx: &Ctx, a: &CfArgs) -> Result<Vec<Outcome>> {
    let measure = parse_atoms(&a.atoms)?;
    let stream = ctx.cfg.stream(STREAM_CF);
    dump_paths(ctx, "wiener.characteristic_functional", &stream)?;
    let r = wiener::verify_characteristic_functional(
        &measure,
        ctx.grid,
        ctx.cfg.n_samples,
        &stream,
        &ctx.t,
    )
    .map(|r| r.with_note(format!("atoms {}", a.atoms)));
    Ok(vec![Outcome::new("wiener.characteristic_functional", r)])
}

fn wiener_cm(ctx: &Ctx, a: &CmArgs) -> Result<Vec<Outcome>> {
    let f = parse_functional(&a.functional, &a.times)?;
    let phi = parse_shift(&a.phi, ctx.grid)?;
    let stream = ctx.cfg.stream(STREAM_CM);
    dump_paths(ctx, "wiener.cameron_martin", &stream)?;
    let n = ctx.cfg.n_samples;
    let r = (|| {
        let cm = wiener::verify_cameron_martin(&f, &phi, ctx.grid, n, &stream, &ctx.t)?;
        let norm = wiener::verify_cm_normalization(
            &phi,
            ctx.grid,
            n,
            &ctx.cfg.stream(STREAM_CM_NORM),
            &ctx.t,
        )?;
        Ok(merge(
            "wiener.cameron_martin",
            "a4",
            vec![(String::new(), cm), (String::new(), norm)],
        )
        .with_note(format!(
            "F = {} at t = {}, phi = {}",
            a.functional, a.times, a.phi
        )))
    })();
    Ok(vec![Outcome::new("wiener.cameron_martin", r)])
}

fn wiener_malliavin(ctx: &Ctx, a: &MalliavinArgs) -> Result<Vec<Outcome>> {
    let f = parse_functional(&a.functional, &a.times)?;
    let phi = parse_shift(&a.phi, ctx.grid)?;
    let phi2 = match a.phi2.trim() {
        "none" => None,
        s => Some(parse_shift(s, ctx.grid)?),
    };
    let n = ctx.cfg.n_samples;
    let stream = ctx.cfg.stream(STREAM_MALLIAVIN);
    dump_paths(ctx, "wiener.malliavin", &stream)?;
    let r = wiener::verify_malliavin(&f, &phi, ctx.grid, n, &stream, &ctx.t).map(|r| {
        r.with_note(format!(
            "F = {} at t = {}, phi = {}",
            a.functional, a.times, a.phi
        ))
    });
    let mut out = vec![Outcome::new("wiener.malliavin", r)];
    if let Some(phi2) = phi2 {
        let r = wiener::verify_isometry(
            &phi,
            &phi2,
            ctx.grid,
            n,
            &ctx.cfg.stream(STREAM_ISOMETRY),
            &ctx.t,
        )
        .map(|r| r.with_note(format!("phi1 = {}, phi2 = {}", a.phi, a.phi2)));
        out.push(Outcome::new("wiener.isometry", r));
    }
    Ok(out)
}

fn chaos_commutators(ctx: &Ctx, a: &CommutatorArgs) -> Result<Vec<Outcome>> {
    if a.modes == 0 {
        return Err(Error::InvalidArgument("modes must be positive".into()));
    }
    Ok(vec![
        Outcome::new(
            "chaos.commutators",
            chaos::verify_commutators(
                a.modes,
                a.degree,
                a.cases,
                &ctx.cfg.stream(STREAM_COMMUTATORS),
            ),
        ),
        Outcome::new(
            "chaos.adjointness",
            chaos::verify_adjointness_random(
                a.modes,
                a.degree,
                a.cases,
                &ctx.cfg.stream(STREAM_ADJOINT),
            ),
        ),
        Outcome::new("chaos.hermite", chaos::verify_hermite_ladder(a.hermite_k)),
        Outcome::new(
            "chaos.vacuum",
            chaos::verify_vacuum_totality(a.modes, a.degree),
        ),
    ])
}

fn chaos_bridge(ctx: &Ctx, a: &BridgeArgs) -> Result<Vec<Outcome>> {
    let exprs = a
        .poly
        .split(';')
        .map(|p| Expr::parse(p, "xi"))
        .collect::<Result<Vec<_>>>()?;
    let k = a
        .modes
        .unwrap_or_else(|| exprs.iter().map(Expr::arity).max().unwrap_or(1))
        .max(1);
    let polys = exprs
        .iter()
        .map(|e| ChaosPoly::from_poly(e.to_poly(k)?))
        .collect::<Result<Vec<_>>>()?;
    let stream = ctx.cfg.stream(STREAM_BRIDGE);
    dump_paths(ctx, "chaos.bridge", &stream)?;
    Ok(vec![Outcome::new(
        "chaos.bridge",
        chaos::mc_bridge(&polys, ctx.grid, ctx.cfg.n_samples, &stream, &ctx.t),
    )])
}

fn gauss_fourier(ctx: &Ctx, a: &FourierArgs) -> Result<Vec<Outcome>> {
    let q = parse_matrix(&a.q)?;
    let xprime = list(&a.xprime, "xprime")?;
    let mut out = Vec::new();
    for (i, s) in parse_params(&a.s)?.into_iter().enumerate() {
        let spec = gaussian::make_spec(q.clone(), s)?;
        if xprime.len() != spec.dim() {
            return Err(Error::InvalidArgument(format!(
                "xprime has {} entries, Q is {}x{}",
                xprime.len(),
                spec.dim(),
                spec.dim()
            )));
        }
        let method = match (a.method.as_deref(), s) {
            (Some("quadrature"), _) | (None, Param::One) => {
                FourierMethod::Quadrature { tol: a.quad_tol }
            }
            (Some("closed-form"), _) | (None, Param::I) => FourierMethod::ClosedForm,
            (Some("mc"), _) => FourierMethod::MonteCarlo {
                n_samples: ctx.cfg.n_samples,
            },
            (Some(m), _) => return Err(Error::InvalidArgument(format!("unknown method {m:?}"))),
        };
        let key = format!("gaussian.fourier.s{s}");
        if let Some(m) = a.dump_table {
            fs::create_dir_all(&ctx.cfg.output)?;
            let table = gaussian::quadrature_table(&spec, &xprime, m)?;
            write_atomic(
                &ctx.cfg.output.join(format!("{key}.quadrature.csv")),
                table.as_bytes(),
            )?;
        }
        let stream = ctx.cfg.stream(STREAM_FOURIER).child(i as u64);
        let r = gaussian::verify_fourier(&spec, &xprime, method, &stream, &ctx.t)
            .map(|r| r.with_note(format!("Q = {}, x' = {}", a.q, a.xprime)));
        out.push(Outcome::new(key, r));
    }
    Ok(out)
}

fn gauss_covariance(ctx: &Ctx, a: &CovarianceArgs) -> Result<Vec<Outcome>> {
    let spec = gaussian::make_spec(parse_matrix(&a.q)?, Param::One)?;
    let r = gaussian::covariance_check(
        &spec,
        ctx.cfg.n_samples,
        &ctx.cfg.stream(STREAM_COVARIANCE),
        &ctx.t,
    )
    .map(|r| r.with_note(format!("Q = {}", a.q)));
    Ok(vec![Outcome::new("gaussian.covariance", r)])
}

fn sdyson_verify(a: &SdVerifyArgs) -> Result<Vec<Outcome>> {
    let action = parse_action(&a.action, a.hbar)?;
    let d = action.dim();
    let f = Expr::parse(&a.f, "phi")?.to_poly(d)?;
    let components: Vec<usize> = match a.component {
        Some(c) if c >= 1 && c <= d => vec![c - 1],
        Some(c) => {
            return Err(Error::InvalidArgument(format!(
                "component {c} outside 1..={d}"
            )))
        }
        None => (0..d).collect(),
    };
    let mut j = list(&a.source, "source")?;
    if j.len() == 1 {
        j = vec![j[0]; d];
    }
    let sourced = SourcedAction::new(action.clone(), j)?;
    let sd = (|| {
        let parts = components
            .iter()
            .map(|&c| {
                Ok((
                    format!("component {}", c + 1),
                    sdyson::verify_schwinger_dyson(&action, &f, c)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(merge("sdyson.schwinger_dyson", "Schwinger-Dyson", parts)
            .with_note(format!("S = {}, F = {}, hbar = {}", a.action, a.f, a.hbar)))
    })();
    let gd = sdyson::verify_generating_derivative(&sourced)
        .map(|r| r.with_note(format!("S = {}, J = {}", a.action, a.source)));
    Ok(vec![
        Outcome::new("sdyson.schwinger_dyson", sd),
        Outcome::new("sdyson.generating_derivative", gd),
    ])
}

fn sdyson_mu(a: &MuArgs) -> Result<Vec<Outcome>> {
    let action = parse_action(&a.action, a.hbar)?;
    let guess = match &a.guess {
        Some(g) => list(g, "guess")?,
        None => vec![0.0; action.dim()],
    };
    if guess.len() != action.dim() {
        return Err(Error::InvalidArgument(format!(
            "guess has {} entries, action has {} variables",
            guess.len(),
            action.dim()
        )));
    }
    let r = sdyson::stationary_point(&action, &guess)
        .and_then(|phi0| sdyson::verify_mu(&action, &phi0))
        .map(|r| r.with_note(format!("S = {}, hbar = {}", a.action, a.hbar)));
    Ok(vec![Outcome::new("sdyson.mu", r)])
}

fn backend_name(b: Backend) -> &'static str {
    match b {
        Backend::Analytic => "analytic",
        Backend::FiniteDifference => "fd",
    }
}

/// Divergence identity for a random polynomial field on each manifold, in
/// both backends on the same points.
fn divergence_report(
    ctx: &Ctx,
    ms: &[ChartedManifold],
    points: usize,
    degree: u32,
    identity: &str,
    equation: &str,
) -> Result<VerificationReport> {
    let mut parts = Vec::new();
    for m in ms {
        let idx = manifold_index(m);
        let v = geometry::random_poly_field(
            m.dim(),
            degree,
            &mut ctx.cfg.stream(STREAM_GEOM_FIELDS).child(idx).draw_rng(0),
        );
        let pts = ctx.cfg.stream(STREAM_GEOM_POINTS).child(idx);
        for b in [Backend::Analytic, Backend::FiniteDifference] {
            if b == Backend::Analytic && !m.has_analytic_partials() {
                continue;
            }
            parts.push((
                format!("{}/{}", m.name(), backend_name(b)),
                geometry::verify_divergence_identity(m, &v, points, &pts, b)?,
            ));
        }
    }
    Ok(merge(identity, equation, parts))
}

const INVARIANT_TOL: f64 = 1e-9;

fn geom_riemann(ctx: &Ctx, a: &RiemannArgs) -> Result<Vec<Outcome>> {
    let ms = manifolds(&a.manifold)?;
    for m in &ms {
        require_kind(m, Kind::Riemannian)?;
    }
    let div = divergence_report(
        ctx,
        &ms,
        a.points,
        a.degree,
        "geometry.divergence.riemannian",
        "Divg",
    );
    let killing = (|| {
        let mut parts = Vec::new();
        for m in &ms {
            let fields = match m.name() {
                "flat2" => vec![
                    VectorField::constant(vec![1.0, 0.0])?,
                    VectorField::constant(vec![0.0, 1.0])?,
                    VectorField::from_polys(vec![
                        -&crate::poly::Poly::var(2, 1),
                        crate::poly::Poly::var(2, 0),
                    ])?,
                ],
                "sphere2" => geometry::sphere_killing_fields(),
                _ => continue,
            };
            let pts = ctx.cfg.stream(STREAM_GEOM_POINTS).child(manifold_index(m));
            for (i, v) in fields.iter().enumerate() {
                parts.push((
                    format!("{} field {}", m.name(), i + 1),
                    geometry::verify_invariant_field(
                        m,
                        v,
                        a.points,
                        &pts,
                        Backend::Analytic,
                        INVARIANT_TOL,
                    )?,
                ));
            }
        }
        if parts.is_empty() {
            return Err(Error::Unsupported(
                "no known Killing fields on the chosen manifolds".into(),
            ));
        }
        Ok(merge("geometry.killing", "killing", parts))
    })();
    Ok(vec![
        Outcome::new("geometry.divergence.riemannian", div),
        Outcome::new("geometry.killing", killing),
    ])
}

fn geom_symplectic(ctx: &Ctx, a: &SymplecticArgs) -> Result<Vec<Outcome>> {
    let ms = manifolds(&a.manifold)?;
    for m in &ms {
        require_kind(m, Kind::Symplectic)?;
    }
    let div = divergence_report(
        ctx,
        &ms,
        a.points,
        a.degree,
        "geometry.divergence.symplectic",
        "DivO",
    );
    let ham = (|| {
        let mut parts = Vec::new();
        for m in &ms {
            let idx = manifold_index(m);
            let h = geometry::random_poly(
                m.dim(),
                3,
                &mut ctx.cfg.stream(STREAM_GEOM_FIELDS).child(idx).draw_rng(1),
            );
            let v = geometry::hamiltonian_field(m, &h)?;
            let pts = ctx.cfg.stream(STREAM_GEOM_POINTS).child(idx);
            parts.push((
                m.name().to_string(),
                geometry::verify_invariant_field(
                    m,
                    &v,
                    a.points,
                    &pts,
                    Backend::Analytic,
                    INVARIANT_TOL,
                )?,
            ));
        }
        Ok(merge("geometry.hamiltonian", "hamiltonian", parts))
    })();
    let pf = geometry::verify_pfaffian(&[2, 4, 6], a.pf_cases, &ctx.cfg.stream(STREAM_PFAFFIAN));
    Ok(vec![
        Outcome::new("geometry.divergence.symplectic", div),
        Outcome::new("geometry.hamiltonian", ham),
        Outcome::new("geometry.pfaffian", pf),
    ])
}

fn geom_algebra(ctx: &Ctx, a: &AlgebraArgs) -> Result<Vec<Outcome>> {
    let ms = manifolds(&a.manifold)?;
    let r = (|| {
        let mut checks = Vec::new();
        let mut seed = None;
        for m in &ms {
            let s = ctx.cfg.stream(STREAM_ALGEBRA).child(manifold_index(m));
            seed = Some(s.seed);
            let mut bracket = Vec::new();
            let mut product = Vec::new();
            for i in 0..a.triples {
                let mut rng = s.draw_rng(i as u64);
                let x = geometry::random_poly_field(m.dim(), 2, &mut rng);
                let y = geometry::random_poly_field(m.dim(), 2, &mut rng);
                let f = ScalarField::from_poly(geometry::random_poly(m.dim(), 2, &mut rng));
                let mut r =
                    geometry::verify_dx_algebra(m, &x, &y, &f, a.points, &s.child(i as u64))?;
                for c in &mut r.checks {
                    c.label = format!("{} triple {i}: {}", m.name(), c.label);
                }
                let mut it = r.checks.into_iter();
                bracket.extend(it.next());
                product.extend(it.next());
            }
            checks.extend(worst(bracket));
            checks.extend(worst(product));
        }
        let mut r = VerificationReport::from_checks("geometry.dx_algebra", "fourfour", checks)
            .with_note(format!(
                "{} triples x {} points per manifold; worst check per manifold and identity",
                a.triples, a.points
            ));
        r.seed = seed;
        Ok(r)
    })();
    Ok(vec![Outcome::new("geometry.dx_algebra", r)])
}
