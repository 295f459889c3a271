use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use xicoal_cli::experiments::repro::NESTED_ENV;
use serde::Serialize;

use xicoal::coag::{apply_coag, FreqVector};
use xicoal::limitflow::laplace_exponent;
use xicoal::model::{tilted_weight_sampler, ModelConfig, WeightLaw, DEFAULT_QUAD_NODES};
use xicoal::numerics::quad::QuadControls;
use xicoal::paintbox::{simulate, EventSampler, Stop};
use xicoal::rng::{stream, StreamTag};
use xicoal_cli::suite::{run_many, verdict_line, Criterion, Ctx};

/// Simulation and verification toolkit for Dirichlet Ξ-coalescents.
#[derive(Parser)]
#[command(name = "xicoal", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Model configuration (JSON). Overrides the model flags of `simulate`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one coalescent trajectory.
    Simulate(SimulateArgs),
    /// Tabulate the coagulation operator applied to a frequency vector.
    Coag(CoagArgs),
    /// Evaluate the Laplace exponent of the limiting subordinator.
    Phi(PhiArgs),
    /// Run acceptance criteria and write JSON reports.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// `constant[:c]`, `gamma:shape[,scale]`, `lognormal:mu,sigma` or
    /// `discrete:v1/p1,v2/p2,...`.
    #[arg(long, default_value = "constant")]
    weights: String,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    n: u64,
    #[command(flatten)]
    model: ModelArgs,
    /// Stop at this rescaled time instead of at the MRCA.
    #[arg(long)]
    horizon: Option<f64>,
}

#[derive(Args)]
struct CoagArgs {
    /// Comma-separated frequencies `z(1),z(2),...`.
    #[arg(long, default_value = "1")]
    z: String,
    #[arg(long, default_value_t = 1.0)]
    x: f64,
    #[arg(long, default_value_t = 20)]
    ell_max: usize,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct PhiArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,1.5")]
    q: Vec<f64>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct VerifyArgs {
    /// Criterion id, or `all`.
    #[arg(value_parser = parse_targets)]
    target: Targets,
    /// Scale sizes and replicates down by the quick factor.
    #[arg(long)]
    quick: bool,
}

#[derive(Clone)]
struct Targets(Vec<Criterion>);

fn parse_targets(s: &str) -> Result<Targets, String> {
    if s == "all" {
        return Ok(Targets(Criterion::ALL.to_vec()));
    }
    Criterion::from_str(s, true)
        .map(|c| Targets(vec![c]))
        .map_err(|_| {
            let ids: Vec<&str> = Criterion::ALL.iter().map(|c| c.id()).collect();
            format!("unknown criterion `{s}`; expected `all` or one of: {}", ids.join(", "))
        })
}

fn parse_law(spec: &str) -> Result<WeightLaw> {
    let (kind, params) = spec.split_once(':').unwrap_or((spec, ""));
    let nums = || -> Result<Vec<f64>> {
        params
            .split(',')
            .filter(|p| !p.is_empty())
            .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad number `{p}` in `{spec}`")))
            .collect()
    };
    let law = match kind.to_ascii_lowercase().as_str() {
        "constant" => WeightLaw::Constant {
            c: nums()?.first().copied().unwrap_or(1.0),
        },
        "gamma" => match nums()?.as_slice() {
            [shape] => WeightLaw::Gamma { shape: *shape, scale: 1.0 },
            [shape, scale] => WeightLaw::Gamma { shape: *shape, scale: *scale },
            _ => bail!("gamma expects `gamma:shape[,scale]`"),
        },
        "lognormal" => match nums()?.as_slice() {
            [mu, sigma] => WeightLaw::LogNormal { mu: *mu, sigma: *sigma },
            _ => bail!("lognormal expects `lognormal:mu,sigma`"),
        },
        "discrete" => {
            let mut values = Vec::new();
            let mut probs = Vec::new();
            for pair in params.split(',') {
                let (v, p) = pair.split_once('/').with_context(|| format!("expected value/prob, got `{pair}`"))?;
                values.push(v.trim().parse()?);
                probs.push(p.trim().parse()?);
            }
            WeightLaw::FiniteDiscrete { values, probs }
        }
        other => bail!("unknown weight law `{other}`"),
    };
    law.validate()?;
    Ok(law)
}

fn model_config(global: &Global, args: &ModelArgs) -> Result<ModelConfig> {
    let mut config = match &global.config {
        Some(path) => ModelConfig::from_path(path).with_context(|| format!("loading {}", path.display()))?,
        None => ModelConfig::power(args.alpha, args.rho, parse_law(&args.weights)?, 0),
    };
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct SimulationSummary<'a> {
    config: &'a ModelConfig,
    stop: Stop,
    #[serde(flatten)]
    trajectory: xicoal::paintbox::TrajectorySummary,
}

fn cmd_simulate(global: &Global, args: &SimulateArgs) -> Result<()> {
    let config = model_config(global, &args.model)?;
    let sampler = EventSampler::new(&config)?;
    let stop = args.horizon.map_or(Stop::UntilMrca, Stop::Horizon);
    let mut rng = stream(config.seed, StreamTag::Paintbox, 0);
    let traj = simulate(&sampler, args.n, stop, &mut rng)?;
    fs::create_dir_all(&global.out)?;
    let csv_path = global.out.join("trajectory.csv");
    traj.write_csv(fs::File::create(&csv_path)?)?;
    let summary = SimulationSummary {
        config: &config,
        stop,
        trajectory: traj.summary(),
    };
    write_json(&global.out.join("summary.json"), &summary)?;
    println!("{} events; wrote {}", traj.events.len(), global.out.display());
    Ok(())
}

fn cmd_coag(global: &Global, args: &CoagArgs) -> Result<()> {
    let config = model_config(global, &args.model)?;
    let entries = args
        .z
        .split(',')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad frequency `{p}`")))
        .collect::<Result<Vec<_>>>()?;
    let z = FreqVector::new(entries)?;
    let tw = tilted_weight_sampler(&config.weight_law, DEFAULT_QUAD_NODES)?;
    let table = apply_coag(&z, args.x, args.ell_max, &tw)?;
    fs::create_dir_all(&global.out)?;
    let path = global.out.join("coag.csv");
    table.write_csv(fs::File::create(&path)?)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_phi(global: &Global, args: &PhiArgs) -> Result<()> {
    let config = model_config(global, &args.model)?;
    println!("q,phi,error");
    for &q in &args.q {
        let v = laplace_exponent(q, &config, QuadControls::default())?;
        println!("{q},{:e},{:e}", v.value, v.error);
    }
    Ok(())
}

fn cmd_verify(global: &Global, args: &VerifyArgs) -> Result<bool> {
    let mut ctx = Ctx::new(global.seed.unwrap_or(0), args.quick);
    ctx.exe = std::env::current_exe().ok();
    let mut targets = args.target.0.clone();
    if std::env::var_os(NESTED_ENV).is_some() {
        targets.retain(|&c| c != Criterion::Reproducibility);
    }
    let outcomes = run_many(&targets, &ctx, &global.out, |o, secs| println!("{}", verdict_line(o, secs)))?;
    let failed = outcomes.iter().filter(|o| !o.report.passed).count();
    println!("{} passed, {failed} failed; reports in {}", outcomes.len() - failed, global.out.display());
    Ok(failed == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(&cli.global, a).map(|_| true),
        Command::Coag(a) => cmd_coag(&cli.global, a).map(|_| true),
        Command::Phi(a) => cmd_phi(&cli.global, a).map(|_| true),
        Command::Verify(a) => cmd_verify(&cli.global, a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_weight_laws() {
        assert_eq!(parse_law("constant").unwrap(), WeightLaw::Constant { c: 1.0 });
        assert_eq!(parse_law("gamma:2").unwrap(), WeightLaw::Gamma { shape: 2.0, scale: 1.0 });
        assert_eq!(parse_law("lognormal:0,0.5").unwrap(), WeightLaw::LogNormal { mu: 0.0, sigma: 0.5 });
        assert_eq!(
            parse_law("discrete:1/0.5,2/0.5").unwrap(),
            WeightLaw::FiniteDiscrete { values: vec![1.0, 2.0], probs: vec![0.5, 0.5] }
        );
        assert!(parse_law("gamma").is_err());
        assert!(parse_law("gamma:-1").is_err());
        assert!(parse_law("cauchy").is_err());
    }

    #[test]
    fn parses_verify_targets() {
        assert_eq!(parse_targets("all").unwrap().0.len(), 12);
        assert_eq!(parse_targets("sfs").unwrap().0, vec![Criterion::Sfs]);
        assert!(parse_targets("nope").is_err());
    }
}
