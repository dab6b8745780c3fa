//! Command-line front end: build approximation networks, evaluate and
//! inspect them, estimate L^p(mu) errors, run rate studies, and diagnose
//! partition shell decay. Exit codes: 0 success, 1 build/assertion failure,
//! 2 usage errors; failures emit one machine-readable JSON line on stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use relu_approx::assembler::{build, BuildRequest, QuantizeMode};
use relu_approx::error::{ApproxError, Result};
use relu_approx::exec;
use relu_approx::measures::{builtin_measure, lp_distance};
use relu_approx::metrics::{depth_report, rate_study, study_csv, study_svg, RateStudyConfig};
use relu_approx::network::{self, is_quantized};
use relu_approx::partition::{draw_offset, DyadicPartition};
use relu_approx::primitives::{DepthBudget, DepthMode};
use relu_approx::taylor::builtin_target;

#[derive(Parser)]
#[command(
    name = "relu-approx",
    version,
    about = "Constructive deep ReLU approximation of Hölder functions in Lp(mu)"
)]
struct Cli {
    /// Worker threads (overridden by RELU_APPROX_THREADS; default: hardware count).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct TargetArgs {
    /// Target spec, e.g. `sinprod`, `poly(0,1)`, `cusp`, `gauss(0.3)`.
    #[arg(long)]
    function: String,
    /// Input dimension d.
    #[arg(long, default_value_t = 1)]
    d: usize,
    /// Hölder exponent beta.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Declared C^beta norm bound.
    #[arg(long, default_value_t = 1.0)]
    bound: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Construct a network approximating --function to accuracy --eps in Lp(mu).
    Build {
        #[command(flatten)]
        target: TargetArgs,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Measure spec, e.g. `uniform`, `cantor(8)`, `segment(2,0:0.3,1:0)`.
        #[arg(long, default_value = "uniform")]
        measure: String,
        #[arg(long, value_parser = ["fixed", "log"], default_value = "fixed")]
        depth_mode: String,
        /// Quantize with this fixed s (adaptive search if the flag is given
        /// without a value via --quantize).
        #[arg(long)]
        quantize_s: Option<u32>,
        /// Adaptive quantization: smallest s (<= 16) with sup deviation <= eps.
        #[arg(long, default_value_t = false)]
        quantize: bool,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for network.json and report.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a stored network at a point.
    Eval {
        #[arg(long)]
        net: PathBuf,
        /// Comma-separated coordinates.
        #[arg(long, allow_hyphen_values = true)]
        point: String,
    },
    /// Monte Carlo Lp(mu) distance between a stored network and a target.
    Error {
        #[arg(long)]
        net: PathBuf,
        #[command(flatten)]
        target: TargetArgs,
        #[arg(long, default_value = "uniform")]
        measure: String,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sweep builds over an accuracy list and fit the weight-count exponent.
    Rate {
        #[command(flatten)]
        target: TargetArgs,
        /// Comma-separated strictly decreasing accuracies.
        #[arg(long)]
        eps_list: String,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value = "uniform")]
        measure: String,
        #[arg(long, value_parser = ["fixed", "log"], default_value = "fixed")]
        depth_mode: String,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for rate.csv and rate.svg.
        #[arg(long)]
        out: PathBuf,
    },
    /// Complexity report and optional (s, eps) quantization check.
    Inspect {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        s: Option<u32>,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Shell-mass decay table over levels 2..=--level.
    PartitionDiagnose {
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long, default_value_t = 6)]
        level: u32,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value = "uniform")]
        measure: String,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Round a stored network's weights onto the (s, eps) grid.
    Quantize {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        s: u32,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn budget(mode: &str, beta: f64, d: usize) -> DepthBudget {
    if mode == "log" {
        DepthBudget::log()
    } else {
        DepthBudget::default_fixed(beta, d)
    }
}

fn parse_point(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| ApproxError::InvalidSpec(format!("bad coordinate '{v}': {e}")))
        })
        .collect()
}

fn load_net(path: &PathBuf) -> Result<network::Network> {
    network::from_json_str(&std::fs::read_to_string(path)?)
}

fn run(cli: Cli) -> Result<()> {
    #[cfg(feature = "parallel")]
    {
        let threads = std::env::var("RELU_APPROX_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .or(cli.threads);
        if let Some(n) = threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global()
                .map_err(|e| ApproxError::InvalidSpec(e.to_string()))?;
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = cli.threads;

    match cli.command {
        Command::Build {
            target,
            eps,
            p,
            measure,
            depth_mode,
            quantize_s,
            quantize,
            samples,
            seed,
            out,
        } => {
            let f = builtin_target(&target.function, target.d, target.beta, target.bound)?;
            let mu = builtin_measure(&measure, target.d)?;
            let req = BuildRequest {
                f,
                eps,
                p,
                mu,
                depth_budget: budget(&depth_mode, target.beta, target.d),
                quantize: match (quantize_s, quantize) {
                    (Some(s), _) => QuantizeMode::Fixed(s),
                    (None, true) => QuantizeMode::Adaptive,
                    (None, false) => QuantizeMode::Off,
                },
                samples,
                seed,
            };
            let outcome = build(&req)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(
                out.join("network.json"),
                network::to_json_string(&outcome.network)?,
            )?;
            std::fs::write(
                out.join("report.json"),
                serde_json::to_string_pretty(&outcome.report)?,
            )?;
            println!(
                "level {} cubes {} depth {} weights {} lp_error {:.6e}",
                outcome.report.level,
                outcome.report.cube_count,
                outcome.report.complexity.depth,
                outcome.report.complexity.weights,
                outcome.report.lp_error.value
            );
        }
        Command::Eval { net, point } => {
            let net = load_net(&net)?;
            let x = parse_point(&point)?;
            let y = net.realize(&x)?;
            println!(
                "{}",
                y.iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            );
        }
        Command::Error {
            net,
            target,
            measure,
            p,
            samples,
            seed,
        } => {
            let net = load_net(&net)?;
            let f = builtin_target(&target.function, target.d, target.beta, target.bound)?;
            let mu = builtin_measure(&measure, target.d)?;
            if net.input_dim != target.d {
                return Err(ApproxError::DimensionMismatch {
                    expected: net.input_dim,
                    got: target.d,
                });
            }
            let est = lp_distance(
                |x: &[f64]| f.eval(x),
                |x: &[f64]| net.realize(x).expect("stored net evaluates")[0],
                &mu,
                p,
                samples,
                seed,
            )?;
            println!("{}", serde_json::to_string(&est)?);
        }
        Command::Rate {
            target,
            eps_list,
            p,
            measure,
            depth_mode,
            samples,
            seed,
            out,
        } => {
            let cfg = RateStudyConfig {
                f: builtin_target(&target.function, target.d, target.beta, target.bound)?,
                mu: builtin_measure(&measure, target.d)?,
                p,
                eps_list: parse_point(&eps_list)?,
                depth_budget: budget(&depth_mode, target.beta, target.d),
                quantize: QuantizeMode::Off,
                samples,
                seed,
            };
            let study = rate_study(&cfg)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("rate.csv"), study_csv(&study))?;
            std::fs::write(out.join("rate.svg"), study_svg(&study))?;
            println!("slope {:.4} rows {}", study.slope, study.rows.len());
            if depth_mode == "fixed" {
                let rep = depth_report(&study, target.beta, target.d, DepthMode::Fixed)?;
                println!("depth {} cap {:.1}", rep.observed[0], rep.cap);
            }
            if let Some(err) = study.aborted {
                return Err(ApproxError::InvalidSpec(format!("sweep aborted: {err}")));
            }
        }
        Command::Inspect { net, s, eps } => {
            let net = load_net(&net)?;
            let mut report = net.complexity();
            if let (Some(s), Some(eps)) = (s, eps) {
                if is_quantized(&net, s, eps) {
                    report.quantized_for = Some((s, eps));
                }
                println!("quantized({s},{eps}) {}", is_quantized(&net, s, eps));
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::PartitionDiagnose {
            d,
            level,
            p,
            beta,
            measure,
            samples,
            seed,
        } => {
            let mu = builtin_measure(&measure, d)?;
            let offset = draw_offset(d, seed);
            let k = d as f64 + 1.0 + p * beta;
            println!("offset {:?} shell_exponent {k}", offset);
            println!("level,shell_mass,ci_lower,ci_upper");
            for n in 2..=level.max(2) {
                let part = DyadicPartition::new(offset.clone(), n, k)?;
                let est = part.shell_mass(&mu, samples, exec::derive_seed(seed, n as u64))?;
                println!("{n},{},{},{}", est.value, est.ci_lower, est.ci_upper);
            }
        }
        Command::Quantize { net, s, eps, out } => {
            let loaded = load_net(&net)?;
            let q = network::quantize(&loaded, s, eps)?;
            std::fs::write(&out, network::to_json_string(&q)?)?;
            println!(
                "quantized s={s} eps={eps} weights {}",
                q.complexity().weights
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
