//! Command-line harness. [`run`] parses `argv`, executes one subcommand and
//! returns the process exit code: 0 on success, 2 on bad usage or a violated
//! precondition, 3 when a search budget is exhausted, 1 otherwise.
//!
//! Output goes to stdout unless `--out PATH` is given; then the payload is
//! written to `PATH` and a manifest to `PATH.manifest.json`. `replay` reruns
//! a manifest and compares payload digests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{self, IterateOptions};
use crate::equilibria::{self, Tolerances};
use crate::error::{Error, Result};
use crate::fitness::{FitnessDistribution, FitnessMatrix, Law};
use crate::formulas;
use crate::kinship::{self, EnumerationMode};
use crate::montecarlo::{self, EventKind, LmaxOptions};
use crate::rng::RngStream;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "polylab", version, about = "K-sets, selection dynamics and Monte Carlo bounds for random fitness matrices")]
struct Cli {
    /// Worker threads for enumeration and estimation.
    #[arg(long, global = true, env = "POLYLAB_THREADS")]
    threads: Option<usize>,

    /// Write the payload here and a manifest next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a fitness matrix.
    Gen(GenArgs),
    /// Kinship graph of a stored matrix.
    Graph(GraphArgs),
    /// Count or list K-sets (or K*-sets) by size.
    Enumerate(EnumerateArgs),
    /// Certify a point as a local maximum of the mean fitness.
    Certify(CertifyArgs),
    /// Iterate the selection recursion.
    Dynamics(DynamicsArgs),
    /// Closed-form bounds on P(D) for r = 2..=rmax.
    Bounds(BoundsArgs),
    /// Monte Carlo estimate of an event probability.
    Estimate(EstimateArgs),
    /// Experiment tables (CSV).
    #[command(subcommand)]
    Experiment(Experiment),
    /// Rerun a manifest and compare payload digests.
    Replay(ReplayArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value = "uniform")]
    law: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    substream: u64,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args, Debug)]
struct GraphArgs {
    #[arg(long)]
    matrix: PathBuf,
    /// Use the K* pair condition.
    #[arg(long)]
    kstar: bool,
}

#[derive(Args, Debug)]
struct EnumerateArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long, default_value_t = 2)]
    rmin: usize,
    /// Defaults to n.
    #[arg(long)]
    rmax: Option<usize>,
    #[arg(long)]
    list: bool,
    #[arg(long, default_value_t = kinship::DEFAULT_LIST_CAP)]
    cap: usize,
    #[arg(long)]
    kstar: bool,
    /// Branch-node budget for the L_n search.
    #[arg(long, default_value_t = kinship::DEFAULT_NODE_BUDGET)]
    budget: u64,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    #[arg(long)]
    matrix: PathBuf,
    /// Comma-separated simplex point.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    point: Vec<f64>,
    /// Random perturbation trials (0 disables the probe).
    #[arg(long, default_value_t = 0)]
    probe_trials: usize,
    #[arg(long, default_value_t = 1e-3)]
    probe_radius: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct DynamicsArgs {
    #[arg(long)]
    matrix: PathBuf,
    /// Comma-separated start point; defaults to the barycenter.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    p0: Vec<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    iters: usize,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Keep every `thin`-th state in the trajectory output.
    #[arg(long, default_value_t = 0)]
    thin: usize,
    /// Emit the kept states as JSON lines instead of a summary.
    #[arg(long)]
    jsonl: bool,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[arg(long)]
    rmax: u64,
    /// Law for the asymptotic column.
    #[arg(long, default_value = "uniform")]
    law: String,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// D, Dpair, Dstar or Dminimal.
    #[arg(long)]
    event: String,
    #[arg(long)]
    r: usize,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value = "uniform")]
    law: String,
    #[arg(long, default_value_t = 1_000_000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    shards: usize,
}

#[derive(Subcommand, Debug)]
enum Experiment {
    /// L_n against 2 n^(1/3) and the sqrt(n) constants.
    Lmax {
        #[arg(long, value_delimiter = ',', default_value = "64,144,256")]
        n: Vec<usize>,
        #[arg(long, default_value = "uniform")]
        law: String,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = montecarlo::DEFAULT_LMAX_CAP)]
        cap: usize,
        #[arg(long, default_value_t = kinship::DEFAULT_NODE_BUDGET)]
        budget: u64,
    },
    /// Census means of X_{n,r} against C(n,r) p_hat.
    Concentration {
        #[arg(long, default_value_t = 60)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        rmax: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value = "uniform")]
        law: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1_000_000)]
        mc_samples: u64,
    },
    /// K*-set census against C(n,r) P(D*) under uniform fitnesses.
    Kstar {
        #[arg(long, default_value_t = 40)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        r: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// {r! bound}^(1/r) against 2/e.
    Ratio {
        #[arg(long, value_delimiter = ',', default_value = "2,5,10,20,50,100,200,500")]
        r: Vec<u64>,
    },
    /// p_hat(D) over the large-r approximation.
    Asymptotic {
        #[arg(long, value_delimiter = ',', default_value = "4,5,6,7,8")]
        r: Vec<usize>,
        #[arg(long, default_value = "uniform")]
        law: String,
        #[arg(long, default_value_t = 10_000_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// p_hat(Dpair(k)) over the pair bound.
    Pairbound {
        #[arg(long, value_delimiter = ',', default_value = "4,5,6")]
        r: Vec<usize>,
        #[arg(long, default_value = "uniform")]
        law: String,
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Debug)]
struct ReplayArgs {
    manifest: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Arguments after the program name.
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub law: Option<String>,
    pub version: String,
    pub timestamp: String,
    pub outputs: Vec<OutputRecord>,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::BudgetExceeded { .. } => EXIT_BUDGET,
        Error::InvalidParameter(_)
        | Error::OutOfSupport { .. }
        | Error::Precondition(_)
        | Error::SubsetScanTooLarge { .. }
        | Error::Degenerate(_) => EXIT_USAGE,
        Error::Io(_) | Error::Json(_) | Error::Csv(_) => EXIT_FAILURE,
    }
}

/// Parse and run; `argv[0]` is the program name.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(cli, &args) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("polylab: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: Cli, args: &[String]) -> Result<()> {
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = cli.threads {
            if t == 0 {
                return Err(Error::pre("--threads must be >= 1"));
            }
            b = b.num_threads(t);
        }
        b.build().map_err(|e| Error::pre(format!("thread pool: {e}")))?
    };
    if let Command::Replay(r) = &cli.command {
        return replay(&r.manifest);
    }
    let payload = pool.install(|| execute(&cli.command))?;
    match &cli.out {
        None => std::io::stdout().write_all(&payload)?,
        Some(out) => {
            fs::write(out, &payload)?;
            let (seed, law) = seed_and_law(&cli.command);
            let manifest = RunManifest {
                argv: strip_out(args),
                seed,
                law,
                version: env!("CARGO_PKG_VERSION").to_string(),
                timestamp: chrono::Utc::now().to_rfc3339(),
                outputs: vec![OutputRecord {
                    path: out.display().to_string(),
                    sha256: sha256_hex(&payload),
                    bytes: payload.len() as u64,
                }],
            };
            fs::write(manifest_path(out), serde_json::to_vec_pretty(&manifest)?)?;
            eprintln!("wrote {} and {}", out.display(), manifest_path(out).display());
        }
    }
    Ok(())
}

/// `args` without `--out X` / `--out=X`.
fn strip_out(args: &[String]) -> Vec<String> {
    let mut kept = Vec::with_capacity(args.len());
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
        } else if a == "--out" {
            skip = true;
        } else if !a.starts_with("--out=") {
            kept.push(a.clone());
        }
    }
    kept
}

fn replay(manifest: &Path) -> Result<()> {
    let m: RunManifest = serde_json::from_slice(&fs::read(manifest)?)?;
    let argv = std::iter::once("polylab".to_string()).chain(m.argv.iter().cloned());
    let cli = Cli::try_parse_from(argv).map_err(|e| Error::pre(format!("manifest argv does not parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(Error::pre("a manifest cannot replay another replay"));
    }
    let payload = execute(&cli.command)?;
    let digest = sha256_hex(&payload);
    let expected = m
        .outputs
        .first()
        .ok_or_else(|| Error::pre("manifest lists no outputs"))?;
    let identical = digest == expected.sha256;
    let report = serde_json::json!({
        "manifest": manifest.display().to_string(),
        "expected_sha256": expected.sha256,
        "sha256": digest,
        "identical": identical,
    });
    println!("{report}");
    if identical {
        Ok(())
    } else {
        Err(Error::Io(std::io::Error::other("replayed payload differs from the manifest")))
    }
}

fn seed_and_law(cmd: &Command) -> (Option<u64>, Option<String>) {
    match cmd {
        Command::Gen(a) => (Some(a.seed), Some(a.law.clone())),
        Command::Estimate(a) => (Some(a.seed), Some(a.law.clone())),
        Command::Bounds(a) => (None, Some(a.law.clone())),
        Command::Certify(a) => (Some(a.seed), None),
        Command::Experiment(e) => match e {
            Experiment::Lmax { seed, law, .. }
            | Experiment::Concentration { seed, law, .. }
            | Experiment::Asymptotic { seed, law, .. }
            | Experiment::Pairbound { seed, law, .. } => (Some(*seed), Some(law.clone())),
            Experiment::Kstar { seed, .. } => (Some(*seed), Some("uniform".into())),
            Experiment::Ratio { .. } => (None, None),
        },
        _ => (None, None),
    }
}

fn dist(law: &str) -> Result<FitnessDistribution> {
    FitnessDistribution::new(law.parse::<Law>()?)
}

fn read_matrix(path: &Path) -> Result<FitnessMatrix> {
    let text = fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
        let rows = rdr
            .deserialize::<Vec<f64>>()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        FitnessMatrix::from_rows(&rows)
    } else {
        FitnessMatrix::from_json(&text)
    }
}

fn json_line<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut buf = serde_json::to_vec_pretty(v)?;
    buf.push(b'\n');
    Ok(buf)
}

fn csv_table<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    montecarlo::write_table(rows, &mut buf)?;
    Ok(buf)
}

fn execute(cmd: &Command) -> Result<Vec<u8>> {
    match cmd {
        Command::Gen(a) => {
            let d = dist(&a.law)?;
            let f = FitnessMatrix::sample(a.n, &d, &mut RngStream::new(a.seed, a.substream))?;
            match a.format {
                Format::Json => {
                    let mut s = f.to_json()?.into_bytes();
                    s.push(b'\n');
                    Ok(s)
                }
                Format::Csv => {
                    let mut buf = Vec::new();
                    f.write_csv(&mut buf)?;
                    Ok(buf)
                }
            }
        }
        Command::Graph(a) => {
            let f = read_matrix(&a.matrix)?;
            let g = if a.kstar {
                kinship::build_kstar_graph(&f)
            } else {
                kinship::build_graph(&f)
            };
            json_line(&serde_json::json!({
                "n": f.n(),
                "kstar": a.kstar,
                "edge_count": g.edge_count(),
                "edge_density": g.edge_density(),
                "edges": g.edges(),
            }))
        }
        Command::Enumerate(a) => {
            let f = read_matrix(&a.matrix)?;
            let rmax = a.rmax.unwrap_or(f.n());
            let mode = if a.list {
                EnumerationMode::List { cap: a.cap }
            } else {
                EnumerationMode::Count
            };
            let (inv, l_n) = if a.kstar {
                let inv = kinship::enumerate_kstar_sets(&f, a.rmin, rmax, mode)?;
                let full = kinship::build_kstar_graph(&f).max_clique(a.budget)?.len();
                (inv, full)
            } else {
                let inv = kinship::enumerate_ksets(&f, a.rmin, rmax, mode)?;
                (inv, kinship::max_kset_size_with_budget(&f, a.budget)?)
            };
            let mut v = inv.to_json_value(Some(l_n));
            v["kstar"] = serde_json::json!(a.kstar);
            json_line(&v)
        }
        Command::Certify(a) => {
            let f = read_matrix(&a.matrix)?;
            let cert = equilibria::certify_local_max(&f, &a.point, &Tolerances::default())?;
            let mut v = serde_json::to_value(&cert)?;
            if a.probe_trials > 0 {
                let mut stream = RngStream::new(a.seed, 0);
                let ok = equilibria::perturbation_probe(&f, &a.point, a.probe_radius, a.probe_trials, &mut stream)?;
                v["probe_passed"] = serde_json::json!(ok);
            }
            json_line(&v)
        }
        Command::Dynamics(a) => {
            let f = read_matrix(&a.matrix)?;
            let p0 = if a.p0.is_empty() {
                vec![1.0 / f.n() as f64; f.n()]
            } else {
                a.p0.clone()
            };
            let opts = IterateOptions {
                max_iters: a.iters,
                conv_tol: a.tol,
                thin: a.thin,
            };
            let traj = dynamics::iterate(&f, &p0, &opts)?;
            if a.jsonl {
                let mut buf = Vec::new();
                traj.write_jsonl(&mut buf)?;
                return Ok(buf);
            }
            let cert = if traj.converged {
                Some(dynamics::classify_limit(&f, &traj)?)
            } else {
                None
            };
            json_line(&serde_json::json!({
                "iterations": traj.iterations,
                "converged": traj.converged,
                "V0": traj.fitness_values.first(),
                "V": traj.fitness_values.last(),
                "limit": traj.limit,
                "limit_support": traj.limit_support,
                "certificate": cert,
            }))
        }
        Command::Bounds(a) => {
            if a.rmax < 2 {
                return Err(Error::pre(format!("--rmax {} must be >= 2", a.rmax)));
            }
            let d = dist(&a.law)?;
            let reports = (2..=a.rmax)
                .map(|r| formulas::bounds_report(r, &d))
                .collect::<Result<Vec<_>>>()?;
            match a.format {
                Format::Json => json_line(&reports),
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    let asym = format!("asymptotic_{}", d.law().name());
                    w.write_record(["r", "lower", "upper_tight", "upper_asym", asym.as_str()])?;
                    for b in &reports {
                        w.serialize((b.r, b.lower, b.upper_tight, b.upper_asym, b.asymptotic))?;
                    }
                    w.into_inner().map_err(|e| Error::Io(e.into_error()))
                }
            }
        }
        Command::Estimate(a) => {
            let kind = match a.k {
                Some(_) => EventKind::from_parts(&a.event, a.k)?,
                None => a.event.parse()?,
            };
            let d = dist(&a.law)?;
            json_line(&montecarlo::estimate(kind, a.r, &d, a.samples, a.seed, a.shards)?)
        }
        Command::Experiment(e) => match e {
            Experiment::Lmax {
                n,
                law,
                trials,
                seed,
                cap,
                budget,
            } => {
                let opts = LmaxOptions {
                    n_cap: *cap,
                    node_budget: *budget,
                };
                csv_table(&montecarlo::experiment_lmax(n, &dist(law)?, *trials, *seed, opts)?)
            }
            Experiment::Concentration {
                n,
                rmax,
                trials,
                law,
                seed,
                mc_samples,
            } => csv_table(&montecarlo::experiment_concentration(
                *n,
                *rmax,
                *trials,
                &dist(law)?,
                *seed,
                *mc_samples,
            )?),
            Experiment::Kstar { n, r, trials, seed } => {
                csv_table(&montecarlo::experiment_kstar_census(*n, *r, *trials, *seed)?)
            }
            Experiment::Ratio { r } => csv_table(&montecarlo::experiment_ratio(r)?),
            Experiment::Asymptotic { r, law, samples, seed } => {
                csv_table(&montecarlo::experiment_asymptotic(r, &dist(law)?, *samples, *seed)?)
            }
            Experiment::Pairbound { r, law, samples, seed } => {
                csv_table(&montecarlo::experiment_pairbound(r, &dist(law)?, *samples, *seed)?)
            }
        },
        Command::Replay(_) => unreachable!("handled before execution"),
    }
}
