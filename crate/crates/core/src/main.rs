use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use vamp_glm::harness::{self, Algorithm, SweepConfig};
use vamp_glm::metrics::dnmse_db;
use vamp_glm::selftest::run_selftest;
use vamp_glm::vamp::{run_vamp_glm, run_vamp_slm};

#[derive(Parser)]
#[command(
    name = "vamp-bench",
    version,
    about = "VAMP one-bit compressed sensing benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key/value TOML config; keys match the sweep config fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `base_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum)]
    algorithm: Option<Algorithm>,
}

impl Common {
    fn load(&self) -> anyhow::Result<SweepConfig> {
        let mut cfg = match &self.config {
            Some(path) => SweepConfig::from_file(path)
                .with_context(|| format!("reading config {}", path.display()))?,
            None => SweepConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.base_seed = seed;
        }
        if let Some(threads) = self.threads {
            cfg.threads = threads;
        }
        if let Some(alg) = self.algorithm {
            cfg.algorithm = alg;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a condition-number sweep and write records + summary CSVs.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Records CSV path (overrides `output`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one instance and print its per-iteration trace.
    Single {
        #[command(flatten)]
        common: Common,
        /// Condition number (defaults to the first configured kappa).
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Run the built-in oracle checks.
    Selftest,
    /// Summarize an existing records CSV.
    Summarize {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn sweep(common: &Common, out: Option<PathBuf>) -> anyhow::Result<()> {
    let mut cfg = common.load()?;
    if let Some(out) = out {
        cfg.output = out;
    }
    let (_, summary) = harness::run_sweep(&cfg)?;
    print!("{}", harness::summary_to_csv(&summary));
    eprintln!(
        "wrote {} and {}",
        cfg.output.display(),
        cfg.summary_path().display()
    );
    Ok(())
}

fn single(common: &Common, kappa: Option<f64>, trial: usize) -> anyhow::Result<()> {
    let mut cfg = common.load()?;
    if let Some(k) = kappa {
        cfg.kappas = vec![k];
    }
    cfg.validate()?;
    let kappa = cfg.kappas[0];
    let seed = cfg.trial_seed(0, trial);
    let inst = cfg.generate(kappa, seed)?;
    let prior = cfg.prior_spec()?;
    let vcfg = cfg.vamp_config(seed);
    println!("k,dnmse_db,gamma1,gamma2,tau1,tau2,alpha1,alpha2,beta1,beta2");
    let run = match cfg.algorithm {
        Algorithm::VampGlm => {
            let channel = inst.channel()?;
            let run = run_vamp_glm(&inst.op, &inst.y, &prior, &channel, &vcfg, |s| {
                let db = dnmse_db(&s.xhat1, &inst.x_true).unwrap_or(f64::NAN);
                println!(
                    "{},{:.4},{:e},{:e},{:e},{:e},{:.6},{:.6},{:.6},{:.6}",
                    s.k,
                    db,
                    s.gamma1,
                    s.gamma2,
                    s.tau1,
                    s.tau2,
                    s.alpha1,
                    s.alpha2,
                    s.beta1,
                    s.beta2
                );
            })?;
            (run.iterations, run.converged)
        }
        Algorithm::VampSlm => {
            let run = run_vamp_slm(&inst.op, &inst.y, &prior, inst.gamma_w, &vcfg, |s| {
                let db = dnmse_db(&s.xhat1, &inst.x_true).unwrap_or(f64::NAN);
                println!(
                    "{},{:.4},{:e},{:e},,,{:.6},{:.6},,",
                    s.k, db, s.gamma1, s.gamma2, s.alpha1, s.alpha2
                );
            })?;
            (run.iterations, run.converged)
        }
    };
    eprintln!(
        "kappa={kappa} gamma_w={:e} iterations={} converged={}",
        inst.gamma_w, run.0, run.1
    );
    Ok(())
}

fn selftest() -> anyhow::Result<()> {
    let checks = run_selftest();
    let mut failed = 0;
    for c in &checks {
        println!(
            "[{}] {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
        failed += usize::from(!c.passed);
    }
    if failed > 0 {
        bail!("{failed} of {} checks failed", checks.len());
    }
    Ok(())
}

fn summarize(input: &PathBuf, out: Option<PathBuf>) -> anyhow::Result<()> {
    let text =
        std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let csv = harness::summary_to_csv(&harness::summarize(&text)?);
    match out {
        Some(path) => std::fs::write(&path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sweep { common, out } => sweep(&common, out),
        Command::Single {
            common,
            kappa,
            trial,
        } => single(&common, kappa, trial),
        Command::Selftest => selftest(),
        Command::Summarize { input, out } => summarize(&input, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
