//! The `srf` command line.
//!
//! Exit codes: 0 success, 2 configuration error, 3 evaluator failure,
//! 4 β out of range.

use std::ffi::OsString;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::error::{Result, SrfError};
use crate::geometry::{Domain, Region};
use crate::maps_metrics::{
    sample_map, srvr_summary, validate_region, write_map_csv, DEFAULT_EPS_M, DEFAULT_EPS_V, DEFAULT_SAMPLES_PER_DIM,
};
use crate::optimizers::{grow_region, GrowthTrace, Method, OptimizerParams};
use crate::oracles::external::{serve, ExternalOracle, HANDSHAKE_TIMEOUT};
use crate::oracles::{adversarial_wrapper, make_builtin, BuiltinSpec, FunctionOracle};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_EVALUATOR: i32 = 3;
pub const EXIT_BETA: i32 = 4;

/// Azimuth × elevation, in degrees.
pub const DEFAULT_DOMAIN: &str = "0:360,-10:90";

#[derive(Debug, Parser)]
#[command(name = "srf", version, about = "Robust and adversarial region finding over bounded parameter spaces")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Sample f on a grid over the domain and write a CSV map
    Map {
        #[command(flatten)]
        oracle: OracleArgs,
        /// Samples per dimension, comma separated; one value applies to all
        #[arg(long, default_value = "61")]
        grid: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grow regions from one or more seed points and write traces
    Find {
        #[command(flatten)]
        oracle: OracleArgs,
        /// Seed point, comma separated; repeat for several runs
        #[arg(long = "u0", required = true)]
        u0: Vec<String>,
        #[arg(long, default_value = "oirb")]
        method: String,
        #[arg(long, default_value_t = 0.1)]
        eta: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0009)]
        beta: f64,
        #[arg(long, default_value_t = 0.1)]
        lambda: f64,
        #[arg(long, default_value_t = 800)]
        steps: usize,
        #[arg(long = "eps-init", default_value_t = 0.5)]
        eps_init: f64,
        /// Minimum side length (default 1e-6 of each domain extent)
        #[arg(long)]
        floor: Option<f64>,
        #[arg(long = "early-stop")]
        early_stop: bool,
        /// Trace file for one seed, directory for several; stdout if omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the mean/variance constraints on a region
    Validate {
        #[command(flatten)]
        oracle: OracleArgs,
        /// Trace whose final region (and seed) is checked
        #[arg(long, conflicts_with = "region", required_unless_present = "region")]
        trace: Option<PathBuf>,
        /// Region as lo:hi per dimension, instead of a trace
        #[arg(long)]
        region: Option<String>,
        #[arg(long = "eps-m", default_value_t = DEFAULT_EPS_M)]
        eps_m: f64,
        #[arg(long = "eps-v", default_value_t = DEFAULT_EPS_V)]
        eps_v: f64,
        #[arg(long, default_value_t = DEFAULT_SAMPLES_PER_DIM)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate SRVR over trace files (or directories of them)
    Srvr {
        traces: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Answer evaluator protocol requests on stdin/stdout with a builtin
    Serve {
        #[arg(long = "fn")]
        function: String,
        #[arg(long)]
        domain: Option<String>,
        /// Do not offer gradients
        #[arg(long = "no-grad")]
        no_grad: bool,
    },
}

#[derive(Debug, Args)]
struct OracleArgs {
    /// builtin:<kind>[:<params>] or exec:<command line>
    #[arg(long = "fn")]
    function: String,
    /// lo:hi per dimension, comma separated
    #[arg(long)]
    domain: Option<String>,
    /// Use 1 - f, turning adversarial regions into robust ones
    #[arg(long)]
    adversarial: bool,
}

/// Run the CLI on `args` (including the program name) and return the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("srf: error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &SrfError) -> i32 {
    if e.is_evaluator_failure() {
        EXIT_EVALUATOR
    } else if matches!(e, SrfError::BetaOutOfRange { .. }) {
        EXIT_BETA
    } else {
        EXIT_CONFIG
    }
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Map { oracle, grid, out } => cmd_map(&oracle, &grid, &out),
        Cmd::Find {
            oracle,
            u0,
            method,
            eta,
            alpha,
            beta,
            lambda,
            steps,
            eps_init,
            floor,
            early_stop,
            out,
        } => {
            let params = OptimizerParams {
                eta,
                lambda,
                alpha,
                beta,
                steps,
                eps_init,
                floor,
                early_stop,
            };
            cmd_find(&oracle, &u0, &method, &params, out.as_deref())
        }
        Cmd::Validate {
            oracle,
            trace,
            region,
            eps_m,
            eps_v,
            samples,
            out,
        } => cmd_validate(&oracle, trace.as_deref(), region.as_deref(), eps_m, eps_v, samples, out.as_deref()),
        Cmd::Srvr { traces, out } => cmd_srvr(&traces, out.as_deref()),
        Cmd::Serve {
            function,
            domain,
            no_grad,
        } => {
            let domain = parse_domain(domain.as_deref().unwrap_or(DEFAULT_DOMAIN))?;
            let spec = BuiltinSpec::parse(strip_builtin(&function)?, domain)?;
            let oracle = make_builtin(&spec)?;
            let stdin = io::stdin().lock();
            let stdout = BufWriter::new(io::stdout().lock());
            serve(&oracle, !no_grad, stdin, stdout)
        }
    }
}

fn strip_builtin(spec: &str) -> Result<&str> {
    spec.strip_prefix("builtin:")
        .ok_or_else(|| SrfError::InvalidSpec(format!("expected builtin:<kind>, got `{spec}`")))
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| SrfError::Parse(format!("not a number: `{s}`")))
}

/// `lo:hi,lo:hi,…`
pub fn parse_domain(s: &str) -> Result<Domain> {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for part in s.split(',') {
        let (l, h) = part
            .split_once(':')
            .ok_or_else(|| SrfError::Parse(format!("domain intervals are lo:hi, got `{part}`")))?;
        lo.push(parse_f64(l)?);
        hi.push(parse_f64(h)?);
    }
    Domain::new(lo, hi)
}

/// `lo:hi,lo:hi,…` as a region.
pub fn parse_region(s: &str) -> Result<Region> {
    let d = parse_domain(s)?;
    Region::new(d.lo, d.hi)
}

pub fn parse_point(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(parse_f64).collect()
}

fn parse_grid(s: &str, n: usize) -> Result<Vec<usize>> {
    let counts = s
        .split(',')
        .map(|c| {
            c.trim()
                .parse::<usize>()
                .map_err(|_| SrfError::Parse(format!("grid counts are positive integers, got `{c}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    match counts.len() {
        1 => Ok(vec![counts[0]; n]),
        len if len == n => Ok(counts),
        len => Err(SrfError::DimensionMismatch { expected: n, got: len }),
    }
}

/// Build the oracle named by `--fn`, over `--domain` if given, else the
/// evaluator's own domain (exec) or the default angle domain (builtin).
fn build_oracle(args: &OracleArgs, fallback: Option<&Domain>) -> Result<Box<dyn FunctionOracle>> {
    let domain = match &args.domain {
        Some(d) => Some(parse_domain(d)?),
        None => fallback.cloned(),
    };
    let base: Box<dyn FunctionOracle> = if let Some(rest) = args.function.strip_prefix("exec:") {
        let mut words = rest.split_whitespace();
        let command = words
            .next()
            .ok_or_else(|| SrfError::InvalidSpec("exec: needs a command".into()))?;
        let argv: Vec<String> = words.map(str::to_string).collect();
        Box::new(ExternalOracle::spawn(command, &argv, domain.as_ref(), HANDSHAKE_TIMEOUT)?)
    } else {
        let domain = match domain {
            Some(d) => d,
            None => parse_domain(DEFAULT_DOMAIN)?,
        };
        let spec = BuiltinSpec::parse(strip_builtin(&args.function)?, domain)?;
        Box::new(make_builtin(&spec)?)
    };
    Ok(if args.adversarial {
        Box::new(adversarial_wrapper(base))
    } else {
        base
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| SrfError::Io(e.error))?;
    Ok(())
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, bytes),
        None => {
            let mut so = io::stdout().lock();
            so.write_all(bytes)?;
            so.flush()?;
            Ok(())
        }
    }
}

fn json_bytes<T: serde::Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

fn cmd_map(args: &OracleArgs, grid: &str, out: &Path) -> Result<()> {
    // budget and shape are checked before any evaluator is spawned when the
    // domain is known up front
    if let Some(d) = &args.domain {
        let d = parse_domain(d)?;
        crate::quadrature::grid_size(&parse_grid(grid, d.dim())?)?;
    }
    let oracle = build_oracle(args, None)?;
    let domain = oracle.domain().clone();
    let counts = parse_grid(grid, domain.dim())?;
    let map = sample_map(&oracle, &domain, &counts)?;
    let mut buf = Vec::new();
    write_map_csv(&map, &mut buf)?;
    write_atomic(out, &buf)
}

fn cmd_find(args: &OracleArgs, u0s: &[String], method: &str, params: &OptimizerParams, out: Option<&Path>) -> Result<()> {
    let method: Method = method.parse()?;
    let seeds = u0s.iter().map(|s| parse_point(s)).collect::<Result<Vec<_>>>()?;
    params.validate()?;
    if method == Method::Oirw {
        let n = seeds.first().map(Vec::len).unwrap_or(0);
        if let Some(d) = &args.domain {
            crate::optimizers::check_beta(params.beta, parse_domain(d)?.dim())?;
        } else if n > 0 {
            crate::optimizers::check_beta(params.beta, n)?;
        }
    }
    let oracle = build_oracle(args, None)?;
    let domain = oracle.domain().clone();
    let run = |u0: &Vec<f64>| grow_region(&oracle, u0, method, params, &domain);
    let results: Vec<_> = if oracle.concurrent() {
        seeds.par_iter().map(run).collect()
    } else {
        seeds.iter().map(run).collect()
    };

    let single = seeds.len() == 1;
    if let (Some(dir), false) = (out, single) {
        std::fs::create_dir_all(dir)?;
    }
    let target = |i: usize| -> Option<PathBuf> {
        out.map(|p| if single { p.to_path_buf() } else { p.join(format!("{method}_{i}.json")) })
    };
    let mut first_err = None;
    for (i, res) in results.into_iter().enumerate() {
        match res {
            Ok(trace) => emit(target(i).as_deref(), &json_bytes(&trace)?)?,
            Err(e) => {
                if let (Some(partial), Some(path)) = (&e.partial, target(i)) {
                    let mut p = path.into_os_string();
                    p.push(".partial");
                    write_atomic(Path::new(&p), &json_bytes(partial.as_ref())?)?;
                }
                eprintln!("srf: run {i} (u0 {:?}) failed: {e}", seeds[i]);
                first_err.get_or_insert(e.error);
            }
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn read_trace(path: &Path) -> Result<GrowthTrace> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| SrfError::Parse(format!("{}: not a trace: {e}", path.display())))
}

fn cmd_validate(
    args: &OracleArgs,
    trace: Option<&Path>,
    region: Option<&str>,
    eps_m: f64,
    eps_v: f64,
    samples: usize,
    out: Option<&Path>,
) -> Result<()> {
    let (reg, u0, fallback) = match (trace, region) {
        (Some(p), _) => {
            let t = read_trace(p)?;
            (t.final_region()?, Some(t.u0), Some(t.domain))
        }
        (None, Some(r)) => (parse_region(r)?, None, None),
        (None, None) => return Err(SrfError::InvalidParams("need --trace or --region".into())),
    };
    let oracle = build_oracle(args, fallback.as_ref())?;
    let report = validate_region(&oracle, &reg, u0.as_deref(), eps_m, eps_v, samples)?;
    emit(out, &json_bytes(&report)?)
}

fn collect_traces(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut inside: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            inside.sort();
            files.extend(inside);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn cmd_srvr(paths: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let files = collect_traces(paths)?;
    if files.is_empty() {
        return Err(SrfError::Empty("no trace files given".into()));
    }
    let traces = files.iter().map(|f| read_trace(f)).collect::<Result<Vec<_>>>()?;
    let summary = srvr_summary(&traces)?;
    let bytes = json_bytes(&summary)?;
    if let Some(p) = out {
        write_atomic(p, &bytes)?;
    }
    let mut so = io::stdout().lock();
    so.write_all(&bytes)?;
    so.flush()?;
    Ok(())
}
