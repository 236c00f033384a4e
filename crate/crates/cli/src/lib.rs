//! Command-line front end.
//!
//! Every subcommand validates its inputs, writes one JSON document to
//! stdout and exits with 0. Validation failures exit with 2 and numerical
//! failures with 3; both write `{"error": {"kind": ..., "message": ...}}` to
//! stderr. Index lists on the command line and in files are 1-based.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use isserlis::gaussian::{
    cholesky_factor, isserlis_moment, mc_isserlis_moment, vector_moment, CholeskyFactor,
    CovarianceMatrix,
};
use isserlis::isotropic::{covariance_isotropy_check, estimate_ck, Distribution, IsotropicSampler};
use isserlis::pairings::{
    default_names, enumerate_pair_partitions, pair_partition_count, render_wick_expansion,
    ExpansionFormat, PairPartition,
};
use isserlis::tensor::{
    expectation_via_pairings, expectation_via_sigma_contraction, mc_tensor_expectation, DenseTensor,
};
use isserlis::MomentResult;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// `pairings` refuses to list more than this many positions without
/// `--count-only` or `--limit`.
pub const MAX_LISTED_POSITIONS: usize = 20;

#[derive(Debug, Parser)]
#[command(name = "isserlis", version, about = "Exact Gaussian and isotropic moments via pair partitions")]
pub struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enumerate or count the pair partitions of n positions.
    Pairings(PairingsArgs),
    /// Exact moment E(Y_i1 ... Y_in) of N(0, sigma).
    Moment(MomentArgs),
    /// Exact moment E(a_1^T Y ... a_n^T Y) of N(0, sigma).
    Vecmoment(VecmomentArgs),
    /// Expectation of a dense multilinear form of a Gaussian vector.
    TensorExpect(TensorExpectArgs),
    /// Monte Carlo estimate of c_k for an isotropic sampler.
    Ck(CkArgs),
    /// Check E(X X^T) = lambda I for an isotropic sampler.
    Isotropy(IsotropyArgs),
    /// Analytic moment next to a Monte Carlo estimate, with z-score.
    Verify(VerifyArgs),
    /// Render the pairing expansion of E(Y_1 ... Y_n).
    Expand(ExpandArgs),
    /// Write a factor file A with A A^T = sigma.
    Factor(FactorArgs),
}

#[derive(Debug, Args)]
pub struct PairingsArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub count_only: bool,
    /// List at most this many partitions.
    #[arg(long)]
    pub limit: Option<u64>,
}

#[derive(Debug, Args)]
pub struct MomentArgs {
    #[arg(long)]
    pub sigma: PathBuf,
    /// Comma-separated 1-based coordinate indices.
    #[arg(long, allow_hyphen_values = true)]
    pub indices: String,
}

#[derive(Debug, Args)]
pub struct VecmomentArgs {
    #[arg(long)]
    pub sigma: PathBuf,
    #[arg(long)]
    pub vectors: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Pairings,
    Contraction,
    Mc,
}

#[derive(Debug, Args)]
pub struct TensorExpectArgs {
    #[arg(long)]
    pub tensor: PathBuf,
    #[arg(long, conflicts_with = "factor", required_unless_present = "factor")]
    pub sigma: Option<PathBuf>,
    #[arg(long)]
    pub factor: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Method::Contraction)]
    pub method: Method,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub samples: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CkArgs {
    /// std-gaussian, sphere:R or ball:R
    #[arg(long)]
    pub dist: String,
    #[arg(long)]
    pub dim: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub samples: u64,
    #[arg(long)]
    pub seed: u64,
    /// Comma-separated direction; defaults to the first basis vector.
    #[arg(long, allow_hyphen_values = true)]
    pub direction: Option<String>,
}

#[derive(Debug, Args)]
pub struct IsotropyArgs {
    #[arg(long)]
    pub dist: String,
    #[arg(long)]
    pub dim: usize,
    #[arg(long)]
    pub samples: u64,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub sigma: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub indices: String,
    #[arg(long)]
    pub samples: u64,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    #[arg(long)]
    pub n: usize,
    /// Comma-separated symbol names (default Y1..Yn).
    #[arg(long)]
    pub names: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Latex,
}

#[derive(Debug, Args)]
pub struct FactorArgs {
    #[arg(long)]
    pub sigma: PathBuf,
}

/// JSON layout of `--vectors` files: `{"vectors": [[...], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VectorsFile {
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Usage,
    Validation,
    Numerical,
}

#[derive(Debug, Clone)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Validation,
            message: message.into(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self.kind {
            ErrorKind::Numerical => EXIT_NUMERICAL,
            _ => EXIT_VALIDATION,
        }
    }

    fn to_json(&self) -> String {
        let body = serde_json::json!({"error": {"kind": self.kind, "message": self.message}});
        format!("{body}\n")
    }
}

impl From<isserlis::Error> for CliError {
    fn from(e: isserlis::Error) -> Self {
        Self {
            kind: if e.is_numerical() {
                ErrorKind::Numerical
            } else {
                ErrorKind::Validation
            },
            message: e.to_string(),
        }
    }
}

/// Result of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: u8,
    pub stdout: String,
    pub stderr: String,
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                return Outcome {
                    code: EXIT_OK,
                    stdout: e.to_string(),
                    stderr: String::new(),
                };
            }
            let err = CliError {
                kind: ErrorKind::Usage,
                message: e
                    .to_string()
                    .lines()
                    .next()
                    .unwrap_or_default()
                    .trim_start_matches("error: ")
                    .to_string(),
            };
            return Outcome {
                code: EXIT_VALIDATION,
                stdout: String::new(),
                stderr: err.to_json(),
            };
        }
    };

    let result = match cli.threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t as usize).build() {
            Ok(pool) => pool.install(|| execute(&cli.command)),
            Err(e) => Err(CliError {
                kind: ErrorKind::Numerical,
                message: format!("cannot start thread pool: {e}"),
            }),
        },
        None => execute(&cli.command),
    };
    match result {
        Ok(stdout) => Outcome {
            code: EXIT_OK,
            stdout: stdout + "\n",
            stderr: String::new(),
        },
        Err(e) => Outcome {
            code: e.exit_code(),
            stdout: String::new(),
            stderr: e.to_json(),
        },
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string(value).map_err(|e| CliError {
        kind: ErrorKind::Numerical,
        message: format!("cannot serialize result: {e}"),
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("malformed JSON in {}: {e}", path.display())))
}

fn parse_csv<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, CliError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::validation(format!("bad {what} {s:?}")))
        })
        .collect()
}

/// 1-based CSV indices to 0-based.
fn parse_indices(text: &str) -> Result<Vec<usize>, CliError> {
    parse_csv::<usize>(text, "index")?
        .into_iter()
        .map(|i| {
            i.checked_sub(1)
                .ok_or_else(|| CliError::validation("indices are 1-based"))
        })
        .collect()
}

fn sampler(dist: &str, dim: usize, seed: u64) -> Result<IsotropicSampler, CliError> {
    let distribution: Distribution = dist.parse()?;
    Ok(IsotropicSampler::new(distribution, dim, seed)?)
}

fn execute(command: &Command) -> Result<String, CliError> {
    match command {
        Command::Pairings(args) => pairings(args),
        Command::Moment(args) => {
            let sigma: CovarianceMatrix = read_json(&args.sigma)?;
            let indices = parse_indices(&args.indices)?;
            to_json(&isserlis_moment(&sigma, &indices)?)
        }
        Command::Vecmoment(args) => {
            let sigma: CovarianceMatrix = read_json(&args.sigma)?;
            let file: VectorsFile = read_json(&args.vectors)?;
            to_json(&vector_moment(&sigma, &file.vectors)?)
        }
        Command::TensorExpect(args) => tensor_expect(args),
        Command::Ck(args) => {
            let sampler = sampler(&args.dist, args.dim, args.seed)?;
            let direction = match &args.direction {
                Some(csv) => parse_csv::<f64>(csv, "direction component")?,
                None => {
                    let mut e1 = vec![0.0; args.dim];
                    if let Some(x) = e1.first_mut() {
                        *x = 1.0;
                    }
                    e1
                }
            };
            to_json(&estimate_ck(&sampler, args.k, &direction, args.samples)?)
        }
        Command::Isotropy(args) => {
            let sampler = sampler(&args.dist, args.dim, args.seed)?;
            to_json(&covariance_isotropy_check(&sampler, args.samples)?)
        }
        Command::Verify(args) => verify(args),
        Command::Expand(args) => {
            let format = match args.format {
                Format::Text => ExpansionFormat::Text,
                Format::Latex => ExpansionFormat::Latex,
            };
            let names = match &args.names {
                Some(csv) => csv.split(',').map(|s| s.trim().to_owned()).collect(),
                None => default_names(args.n, format),
            };
            let expansion = render_wick_expansion(args.n, &names, format)?;
            to_json(&serde_json::json!({ "expansion": expansion }))
        }
        Command::Factor(args) => {
            let sigma: CovarianceMatrix = read_json(&args.sigma)?;
            to_json(&cholesky_factor(&sigma)?)
        }
    }
}

#[derive(Serialize)]
struct CountOutput {
    count: Box<RawValue>,
}

#[derive(Serialize)]
struct PairingsOutput {
    n: usize,
    count: Box<RawValue>,
    pairings: Vec<PairPartition>,
}

fn pairings(args: &PairingsArgs) -> Result<String, CliError> {
    let count = RawValue::from_string(pair_partition_count(args.n).to_string())
        .map_err(|e| CliError::validation(e.to_string()))?;
    if args.count_only {
        return to_json(&CountOutput { count });
    }
    if args.n > MAX_LISTED_POSITIONS && args.limit.is_none() {
        return Err(CliError::validation(format!(
            "listing PP({}) needs --count-only or --limit",
            args.n
        )));
    }
    if args.n > isserlis::pairings::MAX_POSITIONS {
        return Err(CliError::validation(format!(
            "enumeration supports n <= {}",
            isserlis::pairings::MAX_POSITIONS
        )));
    }
    let limit = args.limit.unwrap_or(u64::MAX);
    let pairings = enumerate_pair_partitions(args.n)
        .take(usize::try_from(limit).unwrap_or(usize::MAX))
        .collect();
    to_json(&PairingsOutput {
        n: args.n,
        count,
        pairings,
    })
}

enum Covariance {
    Sigma(CovarianceMatrix),
    Factor(CholeskyFactor),
}

impl Covariance {
    fn factor(&self) -> Result<CholeskyFactor, CliError> {
        match self {
            Covariance::Sigma(s) => Ok(cholesky_factor(s)?),
            Covariance::Factor(a) => Ok(a.clone()),
        }
    }

    fn sigma(&self) -> Result<CovarianceMatrix, CliError> {
        match self {
            Covariance::Sigma(s) => Ok(s.clone()),
            Covariance::Factor(a) => Ok(a.covariance()?),
        }
    }
}

fn tensor_expect(args: &TensorExpectArgs) -> Result<String, CliError> {
    let tensor: DenseTensor = read_json(&args.tensor)?;
    let covariance = match (&args.sigma, &args.factor) {
        (Some(path), _) => Covariance::Sigma(read_json(path)?),
        (None, Some(path)) => Covariance::Factor(read_json(path)?),
        (None, None) => return Err(CliError::validation("one of --sigma or --factor is required")),
    };
    let result: MomentResult = match args.method {
        Method::Pairings => expectation_via_pairings(&tensor, &covariance.factor()?)?,
        Method::Contraction => expectation_via_sigma_contraction(&tensor, &covariance.sigma()?)?,
        Method::Mc => {
            let (Some(seed), Some(samples)) = (args.seed, args.samples) else {
                return Err(CliError::validation("--method mc requires --seed and --samples"));
            };
            mc_tensor_expectation(&tensor, &covariance.factor()?, seed, samples)?
        }
    };
    to_json(&result)
}

#[derive(Serialize)]
struct VerifyOutput {
    analytic: MomentResult,
    monte_carlo: MomentResult,
    z: Option<f64>,
}

fn verify(args: &VerifyArgs) -> Result<String, CliError> {
    let sigma: CovarianceMatrix = read_json(&args.sigma)?;
    let indices = parse_indices(&args.indices)?;
    let analytic = isserlis_moment(&sigma, &indices)?;
    let factor = cholesky_factor(&sigma)?;
    let monte_carlo = mc_isserlis_moment(&factor, &indices, args.seed, args.samples)?;
    let z = monte_carlo.z_score(analytic.value);
    to_json(&VerifyOutput {
        analytic,
        monte_carlo,
        z,
    })
}
