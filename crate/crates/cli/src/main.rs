mod args;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use nanosort_core::harness::{run_graysort_unchecked, sweep, write_sweep_csv};
use nanosort_core::mergemin::{incast_sweep, MergeConfig};
use nanosort_core::pivot::{bucket_size_distribution, OracleSpec};

use args::{Cli, Command, MergeArgs, OracleArgs, Overrides, SweepArgs};

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Returns whether every run verified.
fn run(opts: &Overrides) -> Result<bool> {
    let cfg = opts.apply(opts.base()?)?;
    let mut reports = Vec::new();
    for rep in 0..opts.reps.unwrap_or(1) as u64 {
        let (report, _) = run_graysort_unchecked(&cfg.with_seed(cfg.sort.seed + rep))?;
        log::info!(
            "seed {}: {:.3} us, {} messages, skew {:.3}, {}",
            report.seed,
            report.completion.as_us_f64(),
            report.messages,
            report.skew,
            report.verify.label()
        );
        reports.push(report);
    }
    let mut w = output(opts.out.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &reports)?;
    writeln!(w)?;
    w.flush()?;
    Ok(reports.iter().all(|r| r.verify.pass()))
}

fn run_sweep(opts: &Overrides, args: &SweepArgs) -> Result<bool> {
    let spec = opts.experiment(args)?;
    log::info!("{}: {} over {:?}, {} reps", spec.name, spec.param, spec.values, spec.reps);
    let rows = sweep(&spec);
    write_sweep_csv(&rows, output(spec.out.as_deref())?)?;
    let failed = rows.iter().filter(|r| !r.verify).count();
    if failed > 0 {
        log::warn!("{failed} of {} runs failed verification", rows.len());
    }
    Ok(failed == 0)
}

fn run_mergemin(opts: &Overrides, args: &MergeArgs) -> Result<bool> {
    let base = MergeConfig {
        num_cores: args.cores,
        values_per_core: args.values_per_core,
        incast: args.incasts.first().copied().unwrap_or(1),
        seed: opts.seed.unwrap_or(1),
    };
    let mut net = opts.apply(opts.base()?.with_seed(base.seed))?.net;
    net.topology = net.topology.with_hosts(base.num_cores.max(1));
    let costs = opts.base()?.costs;
    let points = incast_sweep(&base, &args.incasts, &net, &costs)?;
    nanosort_core::mergemin::write_sweep_csv(&points, output(opts.out.as_deref())?)?;
    Ok(points.iter().all(|p| p.exact))
}

fn run_oracle(opts: &Overrides, args: &OracleArgs) -> Result<bool> {
    let spec = OracleSpec {
        strategy: args.strategy.clone(),
        n: args.n,
        num_nodes: opts.nodes.unwrap_or(1),
        fan_in: args.fan_in,
        trials: args.trials,
        seed: opts.seed.unwrap_or(1),
    };
    let result = bucket_size_distribution(&spec)?;
    result.write_csv(output(opts.out.as_deref())?, true)?;
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let command = cli.command.unwrap_or_else(|| match cli.opts.preset {
        Some(_) => Command::Sweep(SweepArgs { param: None, values: Vec::new(), name: "custom".into() }),
        None => Command::Run,
    });
    let result = match &command {
        Command::Run => run(&cli.opts),
        Command::Sweep(a) => run_sweep(&cli.opts, a),
        Command::Mergemin(a) => run_mergemin(&cli.opts, a),
        Command::Oracle(a) => run_oracle(&cli.opts, a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(2)
        }
    }
}
