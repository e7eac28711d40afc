//! Condition-number sweeps: instance generation, per-iteration dNMSE
//! recording, CSV output and per-κ summaries.
//!
//! Config files are flat `key = value` TOML. Every key maps to a field of
//! [`SweepConfig`]; unknown keys are rejected.
//!
//! Records CSV (LF line endings):
//! `kappa,trial,iteration,dnmse_db,gamma1,tau1,converged,wall_time_ms`
//!
//! Summary CSV:
//! `kappa,trials,mean_final_dnmse_db,median_final_dnmse_db,convergence_rate,mean_iterations`

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Deserialize;

use crate::denoisers::DivergenceMode;
use crate::error::{Result, VampError};
use crate::metrics::{dnmse, to_db};
use crate::model::{Estimator, PriorKind, PriorSpec};
use crate::synth::{generate_instance, ChannelKind, MatrixGenSpec, ProblemInstance, SignalSpec};
use crate::vamp::{run_vamp_glm, run_vamp_slm, VampConfig, DEFAULT_MAX_ITERS, DEFAULT_STOP_TOL};

pub const RECORDS_HEADER: &str =
    "kappa,trial,iteration,dnmse_db,gamma1,tau1,converged,wall_time_ms";
pub const SUMMARY_HEADER: &str =
    "kappa,trials,mean_final_dnmse_db,median_final_dnmse_db,convergence_rate,mean_iterations";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    VampGlm,
    VampSlm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorName {
    BernoulliGaussian,
    Laplacian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    Mmse,
    Map,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelName {
    Probit,
    Awgn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceName {
    Analytic,
    MonteCarlo,
}

/// 13 log-spaced points from 1 to 10⁶.
pub fn default_kappas() -> Vec<f64> {
    (0..13).map(|i| 10f64.powf(i as f64 * 0.5)).collect()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub kappas: Vec<f64>,
    pub trials: usize,
    pub n: usize,
    pub m: usize,
    pub k_nonzero: usize,
    pub snr_db: f64,
    pub algorithm: Algorithm,
    pub prior: PriorName,
    pub prior_mode: PriorMode,
    /// Defaults to `k_nonzero / n`.
    pub rho: Option<f64>,
    /// Active-amplitude variance, used both to draw signals and by the prior.
    pub sigma2: f64,
    pub lambda: f64,
    pub channel: ChannelName,
    pub max_iters: usize,
    pub early_stop: bool,
    pub stop_tol: f64,
    pub damping: f64,
    pub init_gamma1: f64,
    pub init_tau1: f64,
    pub divergence: DivergenceName,
    pub mc_probes: usize,
    pub mc_step: f64,
    pub base_seed: u64,
    /// Share matrix/signal/noise draws across κ values for the same trial.
    pub reuse_draws_across_kappas: bool,
    pub threads: usize,
    pub output: PathBuf,
    /// Defaults to `<output stem>.summary.csv`.
    pub summary_output: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            kappas: default_kappas(),
            trials: 20,
            n: 512,
            m: 2048,
            k_nonzero: 16,
            snr_db: 40.0,
            algorithm: Algorithm::VampGlm,
            prior: PriorName::BernoulliGaussian,
            prior_mode: PriorMode::Mmse,
            rho: None,
            sigma2: 1.0,
            lambda: 1.0,
            channel: ChannelName::Probit,
            max_iters: DEFAULT_MAX_ITERS,
            early_stop: true,
            stop_tol: DEFAULT_STOP_TOL,
            damping: 1.0,
            init_gamma1: 1e-8,
            init_tau1: 1e-8,
            divergence: DivergenceName::Analytic,
            mc_probes: 8,
            mc_step: 1e-4,
            base_seed: 0,
            reuse_draws_across_kappas: true,
            threads: 0,
            output: PathBuf::from("sweep.csv"),
            summary_output: None,
        }
    }
}

impl SweepConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SweepConfig =
            toml::from_str(text).map_err(|e| VampError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(VampError::Config(msg));
        if self.kappas.is_empty() {
            return bad("kappas must be non-empty".into());
        }
        if let Some(k) = self.kappas.iter().find(|k| !(**k >= 1.0 && k.is_finite())) {
            return bad(format!("every kappa must be finite and ≥ 1, got {k}"));
        }
        if self.trials == 0 {
            return bad("trials must be ≥ 1".into());
        }
        if self.n == 0 || self.m == 0 {
            return bad("n and m must be ≥ 1".into());
        }
        if self.k_nonzero == 0 || self.k_nonzero > self.n {
            return bad(format!(
                "k_nonzero must lie in [1, n], got {}",
                self.k_nonzero
            ));
        }
        if self.snr_db.is_nan() {
            return bad("snr_db is NaN".into());
        }
        if self.algorithm == Algorithm::VampSlm && self.channel != ChannelName::Awgn {
            return bad("vamp_slm requires channel = \"awgn\"".into());
        }
        self.prior_spec()?;
        self.vamp_config(0).validate()?;
        Ok(())
    }

    pub fn prior_spec(&self) -> Result<PriorSpec> {
        let mode = match self.prior_mode {
            PriorMode::Mmse => Estimator::Mmse,
            PriorMode::Map => Estimator::Map,
        };
        let kind = match self.prior {
            PriorName::BernoulliGaussian => PriorKind::BernoulliGaussian {
                rho: self.rho.unwrap_or(self.k_nonzero as f64 / self.n as f64),
                sigma2: self.sigma2,
            },
            PriorName::Laplacian => PriorKind::Laplacian {
                lambda: self.lambda,
            },
        };
        PriorSpec::new(kind, mode)
    }

    pub fn channel_kind(&self) -> ChannelKind {
        match self.channel {
            ChannelName::Probit => ChannelKind::Probit,
            ChannelName::Awgn => ChannelKind::Awgn,
        }
    }

    pub fn vamp_config(&self, seed: u64) -> VampConfig {
        VampConfig {
            max_iters: self.max_iters,
            damping: self.damping,
            stop_tol: self.early_stop.then_some(self.stop_tol),
            init_gamma1: self.init_gamma1,
            init_tau1: self.init_tau1,
            divergence: match self.divergence {
                DivergenceName::Analytic => DivergenceMode::Analytic,
                DivergenceName::MonteCarlo => DivergenceMode::MonteCarlo {
                    probes: self.mc_probes,
                    step: self.mc_step,
                },
            },
            seed,
            keep_trace: false,
            ..VampConfig::default()
        }
    }

    pub fn summary_path(&self) -> PathBuf {
        self.summary_output.clone().unwrap_or_else(|| {
            let stem = self
                .output
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "sweep".into());
            self.output.with_file_name(format!("{stem}.summary.csv"))
        })
    }

    /// Seed shared by every random ingredient of one trial; the generators
    /// separate them by substream.
    pub fn trial_seed(&self, kappa_index: usize, trial: usize) -> u64 {
        let kappa_part = if self.reuse_draws_across_kappas {
            0
        } else {
            kappa_index as u64 + 1
        };
        splitmix64(
            self.base_seed
                ^ splitmix64(trial as u64 ^ 0xA076_1D64_78BD_642F)
                ^ splitmix64(kappa_part.wrapping_mul(0xE703_7ED1_A0B4_28DB)),
        )
    }

    pub fn generate(&self, kappa: f64, seed: u64) -> Result<ProblemInstance> {
        generate_instance(
            &MatrixGenSpec {
                m: self.m,
                n: self.n,
                kappa,
                seed,
            },
            &SignalSpec {
                n: self.n,
                k_nonzero: self.k_nonzero,
                amp_variance: self.sigma2,
                seed,
            },
            self.channel_kind(),
            self.snr_db,
            seed,
        )
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One CSV row: the state of one trial after one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub kappa: f64,
    pub trial_index: usize,
    pub iteration: usize,
    /// `+inf` marks a failed trial.
    pub dnmse_db: f64,
    pub gamma1: f64,
    pub tau1: f64,
    pub converged: bool,
    pub wall_time_ms: f64,
}

impl TrialRecord {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.3}",
            self.kappa,
            self.trial_index,
            self.iteration,
            self.dnmse_db,
            self.gamma1,
            self.tau1,
            self.converged,
            self.wall_time_ms
        )
    }
}

/// Generate and solve one trial, returning one record per iteration.
///
/// Failures never propagate: the records collected so far are kept and a
/// sentinel row with `dnmse_db = inf` is appended.
pub fn run_trial(config: &SweepConfig, kappa_index: usize, trial: usize) -> Vec<TrialRecord> {
    let kappa = config.kappas[kappa_index];
    let seed = config.trial_seed(kappa_index, trial);
    let mut records = Vec::new();
    let outcome = (|| -> Result<bool> {
        let inst = config.generate(kappa, seed)?;
        let prior = config.prior_spec()?;
        let vcfg = config.vamp_config(seed);
        let start = Instant::now();
        let mut failed = false;
        let mut push = |iteration: usize, xhat: &nalgebra::DVector<f64>, gamma1: f64, tau1: f64| {
            let value = dnmse(xhat, &inst.x_true).map(to_db).unwrap_or(f64::NAN);
            if value.is_nan() {
                failed = true;
            }
            records.push(TrialRecord {
                kappa,
                trial_index: trial,
                iteration,
                dnmse_db: value,
                gamma1,
                tau1,
                converged: false,
                wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
            });
        };
        let converged = match config.algorithm {
            Algorithm::VampGlm => {
                let channel = inst.channel()?;
                run_vamp_glm(&inst.op, &inst.y, &prior, &channel, &vcfg, |s| {
                    push(s.k, &s.xhat1, s.gamma1, s.tau1)
                })?
                .converged
            }
            Algorithm::VampSlm => {
                run_vamp_slm(&inst.op, &inst.y, &prior, inst.gamma_w, &vcfg, |s| {
                    push(s.k, &s.xhat1, s.gamma1, f64::NAN)
                })?
                .converged
            }
        };
        if failed {
            return Err(VampError::Numerical {
                index: 0,
                message: "dNMSE is NaN".into(),
            });
        }
        Ok(converged)
    })();
    match outcome {
        Ok(converged) => {
            if let Some(last) = records.last_mut() {
                last.converged = converged;
            }
        }
        Err(err) => {
            log_failure(kappa, trial, &err);
            records.retain(|r| !r.dnmse_db.is_nan());
            let next = records.last().map_or(0, |r| r.iteration + 1);
            records.push(TrialRecord {
                kappa,
                trial_index: trial,
                iteration: next,
                dnmse_db: f64::INFINITY,
                gamma1: f64::NAN,
                tau1: f64::NAN,
                converged: false,
                wall_time_ms: 0.0,
            });
        }
    }
    records
}

fn log_failure(kappa: f64, trial: usize, err: &VampError) {
    eprintln!("trial failed (kappa={kappa}, trial={trial}): {err}");
}

/// Run every `(κ, trial)` pair on a worker pool of `config.threads` threads
/// (0 = all cores). Output order is `(κ index, trial)` regardless of
/// completion order.
pub fn run_sweep_records(config: &SweepConfig) -> Result<Vec<TrialRecord>> {
    use rayon::prelude::*;
    config.validate()?;
    let jobs: Vec<(usize, usize)> = (0..config.kappas.len())
        .flat_map(|k| (0..config.trials).map(move |t| (k, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| VampError::Config(e.to_string()))?;
    let per_trial: Vec<Vec<TrialRecord>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(k, t)| run_trial(config, k, t))
            .collect()
    });
    Ok(per_trial.into_iter().flatten().collect())
}

pub fn records_to_csv(records: &[TrialRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(RECORDS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

/// Run the sweep and write the records CSV and the summary CSV.
pub fn run_sweep(config: &SweepConfig) -> Result<(Vec<TrialRecord>, Vec<SummaryRow>)> {
    let records = run_sweep_records(config)?;
    let csv = records_to_csv(&records);
    std::fs::write(&config.output, &csv)?;
    let summary = summarize_records(&records);
    std::fs::write(config.summary_path(), summary_to_csv(&summary))?;
    Ok((records, summary))
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, name: &str, line: usize) -> Result<T> {
    let raw = field.ok_or_else(|| VampError::Parse {
        line,
        message: format!("missing column {name}"),
    })?;
    raw.trim().parse().map_err(|_| VampError::Parse {
        line,
        message: format!("cannot parse {name} from {raw:?}"),
    })
}

/// Parse a records CSV (header required). Line numbers in errors are 1-based.
pub fn parse_records(text: &str) -> Result<Vec<TrialRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == RECORDS_HEADER => {}
        Some((_, header)) => {
            return Err(VampError::Parse {
                line: 1,
                message: format!("unexpected header {header:?}"),
            })
        }
        None => {
            return Err(VampError::Parse {
                line: 1,
                message: "empty input".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut f = line.split(',');
        let rec = TrialRecord {
            kappa: parse_field(f.next(), "kappa", line_no)?,
            trial_index: parse_field(f.next(), "trial", line_no)?,
            iteration: parse_field(f.next(), "iteration", line_no)?,
            dnmse_db: parse_field(f.next(), "dnmse_db", line_no)?,
            gamma1: parse_field(f.next(), "gamma1", line_no)?,
            tau1: parse_field(f.next(), "tau1", line_no)?,
            converged: parse_field(f.next(), "converged", line_no)?,
            wall_time_ms: parse_field(f.next(), "wall_time_ms", line_no)?,
        };
        if f.next().is_some() {
            return Err(VampError::Parse {
                line: line_no,
                message: "too many columns".into(),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub kappa: f64,
    pub trials: usize,
    /// `10 log10` of the trial-average linear dNMSE.
    pub mean_final_dnmse_db: f64,
    pub median_final_dnmse_db: f64,
    pub convergence_rate: f64,
    /// Mean iteration count over converged trials (NaN if none converged).
    pub mean_iterations: f64,
}

/// Final-iteration statistics per κ, in order of first appearance.
pub fn summarize_records(records: &[TrialRecord]) -> Vec<SummaryRow> {
    // (kappa, trial) -> final record
    let mut finals: Vec<(f64, Vec<&TrialRecord>)> = Vec::new();
    for r in records {
        let group = match finals
            .iter_mut()
            .find(|(k, _)| k.to_bits() == r.kappa.to_bits())
        {
            Some((_, g)) => g,
            None => {
                finals.push((r.kappa, Vec::new()));
                &mut finals.last_mut().expect("just pushed").1
            }
        };
        match group.iter_mut().find(|g| g.trial_index == r.trial_index) {
            Some(existing) if existing.iteration < r.iteration => *existing = r,
            Some(_) => {}
            None => group.push(r),
        }
    }
    finals
        .into_iter()
        .map(|(kappa, group)| {
            let count = group.len();
            let mean_linear = group
                .iter()
                .map(|r| 10f64.powf(r.dnmse_db / 10.0))
                .sum::<f64>()
                / count as f64;
            let mut dbs: Vec<f64> = group.iter().map(|r| r.dnmse_db).collect();
            dbs.sort_by(f64::total_cmp);
            let median = if count % 2 == 1 {
                dbs[count / 2]
            } else {
                0.5 * (dbs[count / 2 - 1] + dbs[count / 2])
            };
            let converged: Vec<&&TrialRecord> = group.iter().filter(|r| r.converged).collect();
            let mean_iterations = if converged.is_empty() {
                f64::NAN
            } else {
                converged
                    .iter()
                    .map(|r| (r.iteration + 1) as f64)
                    .sum::<f64>()
                    / converged.len() as f64
            };
            SummaryRow {
                kappa,
                trials: count,
                mean_final_dnmse_db: to_db(mean_linear),
                median_final_dnmse_db: median,
                convergence_rate: converged.len() as f64 / count as f64,
                mean_iterations,
            }
        })
        .collect()
}

/// Parse a records CSV and summarize it.
pub fn summarize(records_csv: &str) -> Result<Vec<SummaryRow>> {
    Ok(summarize_records(&parse_records(records_csv)?))
}

pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.kappa,
            r.trials,
            r.mean_final_dnmse_db,
            r.median_final_dnmse_db,
            r.convergence_rate,
            r.mean_iterations
        );
    }
    out
}
