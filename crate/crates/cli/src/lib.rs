//! Command-line front end: one-shot guessing-probability queries, expression
//! bounds, simulation, certification runs and figure-data reproduction.
//!
//! Exit codes: 0 success (including abort-with-report and infeasible-with-
//! warning), 2 configuration/parse errors, 3 solver failures.

pub mod config;
pub mod figures;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use dirng_core::bell::{BellExpression, InputDistribution, Scenario};
use dirng_core::estimation::ConfidenceRegion;
use dirng_core::gp::{GpQuery, GpStatus};
use dirng_core::npa::Direction;
use dirng_core::protocol::{certify, extract, extractor_length, raw_output_bits, DataSource};
use dirng_core::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "dirng", version, about = "Device-independent randomness certification toolkit")]
pub struct Cli {
    /// Master seed for anything stochastic.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Relaxation level for guessing-probability bounds.
    #[arg(long, global = true, default_value_t = 2)]
    pub level: usize,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory or file, command dependent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a guessing-probability query (point or region).
    Gp(GpArgs),
    /// Certified max/min of a Bell expression over the relaxation.
    Tsirelson(TsirelsonArgs),
    /// Sample a transcript or count table from the simulated device.
    Simulate(SimulateArgs),
    /// Run the certification protocol on recorded data.
    Certify(CertifyArgs),
    /// Reproduce a figure's data grid and plot script.
    Figure(FigureArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ExpressionArgs {
    /// The CHSH expression.
    #[arg(long)]
    pub chsh: bool,
    /// A CHSH permutation, e.g. `--chsh-variant 0,1` (repeatable).
    #[arg(long, value_name = "Y1,Y2")]
    pub chsh_variant: Vec<String>,
    /// Tilted CHSH with the given weight on the first marginal.
    #[arg(long, value_name = "BETA")]
    pub tilted: Option<f64>,
    /// A named estimator set: e (probabilities), g (correlators), h
    /// (marginals + CHSH permutations).
    #[arg(long, value_name = "e|g|h")]
    pub set: Option<String>,
    /// Expression table file (repeatable).
    #[arg(long, value_name = "PATH")]
    pub expr_file: Vec<PathBuf>,
    /// Input distribution for estimator weights: `uniform` or comma-separated
    /// joint weights.
    #[arg(long, default_value = "uniform")]
    pub pi: String,
}

#[derive(Debug, Args)]
pub struct GpArgs {
    #[command(flatten)]
    pub exprs: ExpressionArgs,
    /// Point query values, comma separated (one per expression).
    #[arg(long, value_name = "V1,V2,...")]
    pub value: Option<String>,
    /// Region lower bounds (use `-inf` for an unbounded side).
    #[arg(long, value_name = "L1,L2,...")]
    pub lower: Option<String>,
    /// Region upper bounds (use `inf` for an unbounded side).
    #[arg(long, value_name = "U1,U2,...")]
    pub upper: Option<String>,
    /// Generating inputs: `all` or `x1,x2;x1,x2;...`.
    #[arg(long, default_value = "all")]
    pub xr: String,
}

#[derive(Debug, Args)]
pub struct TsirelsonArgs {
    #[command(flatten)]
    pub exprs: ExpressionArgs,
    #[arg(long, default_value = "max")]
    pub direction: String,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// State angle θ of the simulated device (radians).
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_8)]
    pub theta: f64,
    /// Visibility of the white-noise mixture.
    #[arg(long, default_value_t = 0.99)]
    pub visibility: f64,
    #[arg(long)]
    pub n: u64,
    /// Input distribution: `uniform`, explicit weights, or
    /// `biased:x1,x2:delta:kappa`.
    #[arg(long, default_value = "biased:1,0:0.2:1.5")]
    pub pi: String,
    /// Emit a per-round transcript instead of the count table.
    #[arg(long)]
    pub transcript: bool,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Transcript or counts file (auto-detected by header).
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct FigureArgs {
    /// Figure id: 1, 2, 4, 5 or 6.
    #[arg(long)]
    pub id: u32,
    /// Points on the n grid (the full-scale study uses a denser grid).
    #[arg(long, default_value_t = 12)]
    pub points: usize,
    /// Repetitions per cell (full-scale study: 300).
    #[arg(long, default_value_t = 20)]
    pub reps: u32,
    /// Landscape resolution per axis (figure 6).
    #[arg(long, default_value_t = 41)]
    pub res: usize,
    /// Largest round count on the grid (full-scale study: 3e18).
    #[arg(long, default_value_t = 3e18)]
    pub n_max: f64,
    /// Device visibility.
    #[arg(long, default_value_t = 0.99)]
    pub visibility: f64,
}

fn parse_f64_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|tok| {
            let tok = tok.trim();
            match tok {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                _ => tok
                    .parse::<f64>()
                    .map_err(|e| Error::invalid(format!("bad number `{tok}`: {e}"))),
            }
        })
        .collect()
}

fn parse_pi(spec: &str, scenario: &Scenario, n: Option<u64>) -> Result<InputDistribution> {
    if spec == "uniform" {
        return Ok(InputDistribution::uniform(scenario.clone()));
    }
    if let Some(rest) = spec.strip_prefix("biased:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::invalid("expected biased:x1,x2:delta:kappa"));
        }
        let x_parts: Vec<usize> = parts[0]
            .split(',')
            .map(|v| v.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::invalid(format!("bad x*: {e}")))?;
        let x_star = scenario.joint_input_index(&x_parts);
        let delta: f64 = parts[1]
            .parse()
            .map_err(|e| Error::invalid(format!("bad delta: {e}")))?;
        let kappa: f64 = parts[2]
            .parse()
            .map_err(|e| Error::invalid(format!("bad kappa: {e}")))?;
        let n = n.ok_or_else(|| Error::invalid("biased distribution needs n"))?;
        return dirng_core::quantum::biased_input_distribution(scenario, n, x_star, delta, kappa);
    }
    let weights = parse_f64_list(spec)?;
    InputDistribution::new(scenario.clone(), weights)
}

fn parse_xr(spec: &str, scenario: &Scenario) -> Result<Vec<usize>> {
    if spec == "all" {
        return Ok((0..scenario.joint_inputs()).collect());
    }
    spec.split(';')
        .map(|tuple| {
            let parts: Vec<usize> = tuple
                .split(',')
                .map(|v| v.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::invalid(format!("bad input tuple `{tuple}`: {e}")))?;
            if parts.len() != scenario.parties()
                || parts
                    .iter()
                    .zip(scenario.inputs_per_party())
                    .any(|(&v, &c)| v >= c)
            {
                return Err(Error::invalid(format!("input tuple `{tuple}` out of range")));
            }
            Ok(scenario.joint_input_index(&parts))
        })
        .collect()
}

fn build_expression_list(args: &ExpressionArgs, scenario: &Scenario) -> Result<Vec<BellExpression>> {
    let pi = parse_pi(&args.pi, scenario, None)?;
    let mut out = Vec::new();
    if args.chsh {
        out.push(dirng_core::bell::chsh_expression(scenario)?);
    }
    for spec in &args.chsh_variant {
        let bits: Vec<u8> = spec
            .split(',')
            .map(|v| v.trim().parse::<u8>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::invalid(format!("bad variant `{spec}`: {e}")))?;
        if bits.len() != 2 {
            return Err(Error::invalid("chsh-variant needs two bits"));
        }
        out.push(dirng_core::bell::chsh_variant(scenario, bits[0], bits[1])?);
    }
    if let Some(beta) = args.tilted {
        out.push(dirng_core::bell::tilted_chsh(scenario, beta)?);
    }
    if let Some(set) = &args.set {
        let kind = dirng_core::bell::SetKind::parse(set)
            .ok_or_else(|| Error::invalid(format!("unknown set `{set}`")))?;
        out.extend(dirng_core::bell::expression_set(kind, &pi)?);
    }
    for path in &args.expr_file {
        let text = std::fs::read_to_string(path)?;
        out.push(dirng_core::io::read_expression(&text)?);
    }
    if out.is_empty() {
        return Err(Error::invalid(
            "no expressions selected (use --chsh, --tilted, --set or --expr-file)",
        ));
    }
    Ok(out)
}

fn write_or_print(
    out: &Option<PathBuf>,
    default_name: &str,
    content: &str,
) -> Result<Option<PathBuf>> {
    match out {
        Some(path) => {
            let target = if path.is_dir() || path.extension().is_none() {
                std::fs::create_dir_all(path)?;
                path.join(default_name)
            } else {
                if let Some(parent) = path.parent() {
                    if !parent.as_os_str().is_empty() {
                        std::fs::create_dir_all(parent)?;
                    }
                }
                path.clone()
            };
            std::fs::write(&target, content)?;
            Ok(Some(target))
        }
        None => Ok(None),
    }
}

pub fn cmd_gp(cli: &Cli, args: &GpArgs) -> Result<i32> {
    let scenario = Scenario::chsh();
    let expressions = build_expression_list(&args.exprs, &scenario)?;
    let t = expressions.len();
    let xr = parse_xr(&args.xr, &scenario)?;
    let region = match (&args.value, &args.lower, &args.upper) {
        (Some(values), None, None) => {
            let v = parse_f64_list(values)?;
            if v.len() != t {
                return Err(Error::invalid(format!(
                    "{t} expressions but {} values",
                    v.len()
                )));
            }
            ConfidenceRegion::point(&v)?
        }
        (None, lower, upper) if lower.is_some() || upper.is_some() => {
            let lo = match lower {
                Some(text) => parse_f64_list(text)?,
                None => vec![f64::NEG_INFINITY; t],
            };
            let hi = match upper {
                Some(text) => parse_f64_list(text)?,
                None => vec![f64::INFINITY; t],
            };
            if lo.len() != t || hi.len() != t {
                return Err(Error::invalid("region bound arity mismatch"));
            }
            ConfidenceRegion::new(lo, hi, 0.0, 0)?
        }
        _ => {
            return Err(Error::invalid(
                "give either --value or --lower/--upper bounds",
            ))
        }
    };
    let query = GpQuery::new(expressions, region, xr, cli.level)?;
    let result = dirng_core::gp::guessing_probability_region(&query)?;
    println!("g = {:.9}", result.g);
    println!("h = {:.9} bits", result.h);
    println!("status = {:?}", result.status);
    match result.status {
        GpStatus::Optimal => {
            if let Some(w) = &result.witness {
                println!("witness y0 = {:.9}", w.y0);
                let y = w.y();
                for (f, y_alpha) in query.expressions().iter().zip(&y) {
                    println!("witness y[{}] = {:.9}", f.label(), y_alpha);
                }
            }
        }
        GpStatus::InfeasiblePrimal => {
            println!("warning: constraints exclude every quantum behavior; g = 1 by convention");
        }
        GpStatus::NumericalFailure => {}
    }
    if cli.out.is_some() {
        let doc = dirng_core::io::gp_document(&query, &result);
        if let Some(path) = write_or_print(&cli.out, "gp_result.json", &doc)? {
            println!("result written to {}", path.display());
        }
    }
    Ok(match result.status {
        GpStatus::NumericalFailure => EXIT_SOLVER,
        _ => EXIT_OK,
    })
}

pub fn cmd_tsirelson(cli: &Cli, args: &TsirelsonArgs) -> Result<i32> {
    let scenario = Scenario::chsh();
    let expressions = build_expression_list(&args.exprs, &scenario)?;
    let direction = match args.direction.as_str() {
        "max" => Direction::Max,
        "min" => Direction::Min,
        other => return Err(Error::invalid(format!("bad direction `{other}`"))),
    };
    for f in &expressions {
        let bound = dirng_core::npa::tsirelson_bound(f, cli.level, direction)?;
        println!("{} {:?} = {:.9}", f.label(), direction, bound);
    }
    Ok(EXIT_OK)
}

pub fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> Result<i32> {
    let p = dirng_core::quantum::mix_with_noise(
        &dirng_core::quantum::extremal_behavior(args.theta)?,
        args.visibility,
    )?;
    let scenario = p.scenario().clone();
    let pi = parse_pi(&args.pi, &scenario, Some(args.n))?;
    let (content, default_name) = if args.transcript {
        let n = usize::try_from(args.n)
            .map_err(|_| Error::invalid("transcript mode needs n to fit in memory"))?;
        if n > 100_000_000 {
            return Err(Error::invalid(
                "transcript mode is capped at 1e8 rounds; use the counts mode",
            ));
        }
        let t = dirng_core::quantum::sample_transcript(&p, &pi, n, cli.seed)?;
        (dirng_core::io::write_transcript(&t), "transcript.txt")
    } else {
        let t = dirng_core::quantum::sample_counts(&p, &pi, args.n, cli.seed)?;
        (dirng_core::io::write_counts(&t), "counts.txt")
    };
    match write_or_print(&cli.out, default_name, &content)? {
        Some(path) => println!("written to {}", path.display()),
        None => print!("{content}"),
    }
    Ok(EXIT_OK)
}

pub fn cmd_certify(cli: &Cli, args: &CertifyArgs) -> Result<i32> {
    let config_text = std::fs::read_to_string(&args.config)?;
    let doc = config::ExperimentDocument::parse(&config_text)?;
    let protocol_config = doc.to_protocol_config()?;
    let data_text = std::fs::read_to_string(&args.data)?;
    let data = if data_text.starts_with("dirng-transcript") {
        DataSource::Transcript(dirng_core::io::read_transcript(&data_text)?)
    } else {
        DataSource::Counts(dirng_core::io::read_counts(&data_text)?)
    };
    let cert = certify(&protocol_config, &data)?;
    let cert_text = dirng_core::io::write_certificate(&cert);
    let summary = match cert.outcome {
        dirng_core::protocol::CertOutcome::Success => format!(
            "PASS threshold[{}] = {} score = {:.6} hmin = {:.6} bits",
            cert.threshold_reached.unwrap(),
            cert.thresholds[cert.threshold_reached.unwrap()],
            cert.score,
            cert.hmin_bound.unwrap()
        ),
        dirng_core::protocol::CertOutcome::Abort => format!(
            "ABORT score = {:.6} below threshold {}",
            cert.score, cert.thresholds[0]
        ),
        dirng_core::protocol::CertOutcome::SolverFailure => "SOLVER FAILURE".to_string(),
    };
    println!("{summary}");
    if let Some(path) = write_or_print(&cli.out, "certificate.json", &cert_text)? {
        println!("certificate written to {}", path.display());
    } else {
        print!("{cert_text}");
    }

    // extraction applies to per-round data on success
    if cert.outcome == dirng_core::protocol::CertOutcome::Success {
        if let DataSource::Transcript(t) = &data {
            let hmin = cert.hmin_bound.unwrap();
            let m = protocol_config
                .ext_len
                .unwrap_or_else(|| extractor_length(hmin, protocol_config.ext_eps));
            if m > 0 {
                let raw = raw_output_bits(t, &protocol_config.gen_inputs);
                let bits = extract(
                    &raw,
                    hmin,
                    m,
                    protocol_config.ext_eps,
                    protocol_config.master_seed,
                )?;
                let rendered: String = (0..bits.len())
                    .map(|i| if bits.get(i) { '1' } else { '0' })
                    .collect();
                if let Some(path) = write_or_print(&cli.out, "extracted.bits", &rendered)? {
                    println!("extracted {m} bits to {}", path.display());
                }
            }
        }
    }
    Ok(match cert.outcome {
        dirng_core::protocol::CertOutcome::SolverFailure => EXIT_SOLVER,
        _ => EXIT_OK,
    })
}

pub fn cmd_figure(cli: &Cli, args: &FigureArgs) -> Result<i32> {
    let opts = figures::FigureOptions {
        points: args.points,
        reps: args.reps,
        res: args.res,
        n_min: 1e2,
        n_max: args.n_max,
        visibility: args.visibility,
        level: cli.level,
        seed: cli.seed,
    };
    let out_dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("figure{}", args.id)));
    figures::run_figure(args.id, &opts, &out_dir)?;
    println!("figure {} data written to {}", args.id, out_dir.display());
    Ok(EXIT_OK)
}

/// Dispatch a parsed invocation; maps error classes onto exit codes.
pub fn run(cli: &Cli) -> i32 {
    if let Some(jobs) = cli.jobs {
        // ignore failure when a pool is already installed (tests)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    let outcome = match &cli.command {
        Command::Gp(args) => cmd_gp(cli, args),
        Command::Tsirelson(args) => cmd_tsirelson(cli, args),
        Command::Simulate(args) => cmd_simulate(cli, args),
        Command::Certify(args) => cmd_certify(cli, args),
        Command::Figure(args) => cmd_figure(cli, args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Solver(_) => EXIT_SOLVER,
                _ => EXIT_CONFIG,
            }
        }
    }
}

/// Parse arguments (for tests) as the binary would.
pub fn parse_args<I, T>(args: I) -> std::result::Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Cli::try_parse_from(args)
}

/// Run from raw arguments, as the binary does (for tests).
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match parse_args(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            eprintln!("{e}");
            EXIT_CONFIG
        }
    }
}
