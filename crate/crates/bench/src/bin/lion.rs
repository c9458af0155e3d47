use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use lion_bench::{compare, run, Experiment, RunReport};

#[derive(Parser)]
#[command(name = "lion", about = "Run and compare simulated cluster experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its report files.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the event trace.
        #[arg(long)]
        trace: bool,
    },
    /// Compare reports against the first one.
    Compare {
        #[arg(long)]
        out: PathBuf,
        /// report.json files, or run directories holding one.
        #[arg(required = true, num_args = 2..)]
        reports: Vec<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, seed, out, trace } => {
            let text = fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let mut exp = Experiment::parse(&text).with_context(|| format!("in {}", config.display()))?;
            if let Some(s) = seed {
                exp.seed = s;
            }
            let output = run(&exp, trace)?;
            output.write_to(&out)?;
            let r = &output.report;
            println!(
                "{} seed {}: {:.0} txn/s, p99 {} us, single {:.3} remastered {:.3} 2pc {:.3} ({:.1}s wall)",
                r.variant,
                r.seed,
                r.throughput,
                r.latency.p99_us,
                r.path_mix.single,
                r.path_mix.remastered,
                r.path_mix.two_pc,
                output.wall.as_secs_f64()
            );
        }
        Command::Compare { out, reports } => {
            let mut loaded = Vec::new();
            for p in &reports {
                let file = if p.is_dir() { p.join("report.json") } else { p.clone() };
                let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
                let r: RunReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", file.display()))?;
                loaded.push(r);
            }
            let c = compare(&loaded)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("compare.csv"), c.to_csv())?;
            fs::write(out.join("compare.json"), c.to_json())?;
            print!("{}", c.to_csv());
            if !c.workloads_match {
                eprintln!("warning: reports were produced on different workloads");
            }
        }
    }
    Ok(())
}
