use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use seqlsi::config::{load_run_config, load_scenario, RunConfig};
use seqlsi::posterior::{density_grid, diagnostics, functional_draws, Functional};
use seqlsi::report::{
    load_chain, save_chain, save_dataset_meta, save_with, write_assignment_table, write_density,
    write_diagnostics_table, write_ipw_table, write_sensitivity_table, write_summary_table,
};
use seqlsi::sampler::{run_chains, Chain};
use seqlsi::sensitivity::{ipw_msm_estimate, sensitivity_report};
use seqlsi::simgen::generate;
use seqlsi::{Dataset, Error, SpecKind};

#[derive(Parser)]
#[command(
    name = "seqlsi",
    version,
    about = "Two-period sequential treatment effects with latent principal strata"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset from a scenario file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the latent stratum and all potential outcomes.
        #[arg(long)]
        with_truth: bool,
    },
    /// Run the Gibbs sampler on a dataset.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        spec: SpecKind,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        burn: Option<usize>,
        #[arg(long)]
        kept: Option<usize>,
        #[arg(long)]
        thin: Option<usize>,
        /// Independent chains, written as NAME_c1.csv, NAME_c2.csv, ...
        #[arg(long, default_value_t = 1)]
        chains: usize,
    },
    /// Summary table of one or more fitted chains.
    Summarize {
        #[arg(required = true)]
        chains: Vec<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Write one density grid CSV per ATE into this directory.
        #[arg(long)]
        density: Option<PathBuf>,
        #[arg(long, default_value_t = 512)]
        grid_points: usize,
    },
    /// Effective sample sizes and R-hat over chains of the same fit.
    Diagnose {
        #[arg(required = true)]
        chains: Vec<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Compare assignment probabilities of paired strata in a stratum-level fit.
    Sensitivity {
        chain: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Also write the posterior of the eight assignment probabilities.
        #[arg(long)]
        assignment: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Inverse-probability-weighted estimates with bootstrap standard errors.
    Ipw {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        bootstrap_reps: Option<usize>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (priors, mcmc, sensitivity, ipw).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn load(&self) -> seqlsi::Result<RunConfig> {
        self.config
            .as_deref()
            .map_or_else(|| Ok(RunConfig::default()), load_run_config)
    }
}

fn emit<F>(out: Option<&Path>, f: F) -> seqlsi::Result<()>
where
    F: FnOnce(&mut dyn Write) -> seqlsi::Result<()>,
{
    match out {
        Some(p) => save_with(p, f),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)
        }
    }
}

fn chain_path(out: &Path, k: usize, n: usize) -> PathBuf {
    if n == 1 {
        return out.to_path_buf();
    }
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ext = out
        .extension()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    out.with_file_name(format!("{stem}_c{}.{ext}", k + 1))
}

fn load_chains(paths: &[PathBuf]) -> seqlsi::Result<Vec<Chain>> {
    paths.iter().map(|p| load_chain(p)).collect()
}

fn run(cli: Cli) -> seqlsi::Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            out,
            seed,
            with_truth,
        } => {
            let mut cfg = load_scenario(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let data = generate(&cfg)?;
            data.save_csv(&out, with_truth)?;
            save_dataset_meta(&cfg, &out.with_extension("meta.json"))?;
            eprintln!("wrote {} units to {}", data.len(), out.display());
        }
        Command::Fit {
            data,
            spec,
            out,
            run,
            burn,
            kept,
            thin,
            chains,
        } => {
            let mut cfg = run.load()?;
            if let Some(s) = run.seed {
                cfg.mcmc.seed = s;
            }
            if let Some(b) = burn {
                cfg.mcmc.burn_in = b;
            }
            if let Some(k) = kept {
                cfg.mcmc.kept = k;
            }
            if let Some(t) = thin {
                cfg.mcmc.thin = t;
            }
            cfg.validate()?;
            let dataset = Dataset::load_csv(&data)?;
            if dataset.is_empty() {
                return Err(Error::Contract(format!("{} has no units", data.display())));
            }
            let fitted = run_chains(&dataset, spec, &cfg.priors, &cfg.mcmc, chains)?;
            for (k, c) in fitted.iter().enumerate() {
                let p = chain_path(&out, k, chains);
                save_chain(c, &p)?;
                eprintln!(
                    "{}: {} draws in {:.1}s -> {}",
                    spec.label(),
                    c.len(),
                    c.meta.wall_time_secs,
                    p.display()
                );
            }
        }
        Command::Summarize {
            chains,
            out,
            density,
            grid_points,
        } => {
            let fitted = load_chains(&chains)?;
            emit(out.as_deref(), |w| write_summary_table(&fitted, w))?;
            if let Some(dir) = density {
                std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
                    path: dir.clone(),
                    source: e,
                })?;
                for c in &fitted {
                    for f in Functional::ates() {
                        let grid = density_grid(&functional_draws(c, f)?, grid_points)?;
                        let name = format!("{}_{}.csv", c.spec.label(), f.name());
                        save_with(&dir.join(name), |w| write_density(&grid, w))?;
                    }
                }
            }
        }
        Command::Diagnose { chains, out } => {
            let fitted = load_chains(&chains)?;
            let rows = diagnostics(&fitted)?;
            emit(out.as_deref(), |w| write_diagnostics_table(&rows, w))?;
        }
        Command::Sensitivity {
            chain,
            out,
            assignment,
            run,
        } => {
            let cfg = run.load()?;
            let c = load_chain(&chain)?;
            let report = sensitivity_report(&c, &cfg.sensitivity)?;
            emit(out.as_deref(), |w| write_sensitivity_table(&report, w))?;
            if let Some(p) = assignment {
                save_with(&p, |w| write_assignment_table(&report.assignment, w))?;
            }
        }
        Command::Ipw {
            data,
            out,
            run,
            bootstrap_reps,
        } => {
            let cfg = run.load()?;
            let dataset = Dataset::load_csv(&data)?;
            let reps = bootstrap_reps.unwrap_or(cfg.ipw.bootstrap_reps);
            let seed = run.seed.unwrap_or(cfg.ipw.seed);
            let report = ipw_msm_estimate(&dataset, reps, seed)?;
            if !report.empty_cells.is_empty() {
                eprintln!("empty observed cells: {}", report.empty_cells.join(", "));
            }
            emit(out.as_deref(), |w| write_ipw_table(&report, w))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
