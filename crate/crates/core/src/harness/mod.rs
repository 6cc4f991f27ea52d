//! Monte Carlo experiment runner.
//!
//! A campaign fixes one scheme, one supersymbol plan and a list of SNR
//! points. Trial `i` draws its channel from `trial_seed(seed, i)`, so every
//! SNR point sees the same channels and trials can be evaluated in any order.
//! Outcomes are always reduced sequentially in trial order, which makes the
//! report bitwise reproducible regardless of worker count.

mod report;
mod verify;

use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{
    self, ChannelError, CoherencePattern, LinkId, SupersymbolPlan,
};
use crate::metrics::{self, DofEstimate, MetricsError, RatePoint};
use crate::numerics::{Field, RankTolerance};
use crate::schemes::{self, Csit, Dof, Scheme, SchemeError, SchemeId};

pub use report::{
    read_csv, read_csv_config, sweep_table, write_report, write_sweep, CsvRow, SweepRow,
};
pub use verify::{verify, CheckResult, VerificationSummary, ZF_RESIDUAL_TOL};

/// Degenerate-trial fraction tolerated at ε = 0.
pub const MAX_DEGENERATE_RATE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// Errors caused by what the user asked for rather than by the
    /// environment.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            HarnessError::Config(_)
                | HarnessError::Channel(_)
                | HarnessError::Scheme(SchemeError::UnknownScheme(_))
                | HarnessError::Scheme(SchemeError::InvalidParameter(_))
                | HarnessError::Metrics(MetricsError::InsufficientPoints { .. })
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FadingMode {
    /// The scheme's own staggered coherence patterns (or `coherence` overrides).
    #[default]
    Staggered,
    /// Every link shares the same block boundaries and changes every slot;
    /// receivers become statistically equivalent.
    Synchronized,
}

impl FromStr for FadingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "staggered" => Ok(FadingMode::Staggered),
            "synchronized" | "synchronised" => Ok(FadingMode::Synchronized),
            other => Err(format!("unknown fading mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    #[default]
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown output format '{other}' (expected csv|json)")),
        }
    }
}

/// How trials are dispatched. The result does not depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecutionMode {
    Sequential,
    #[default]
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: SchemeId,
    pub k: Option<usize>,
    pub field: Field,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub epsilon: f64,
    pub tol: RankTolerance,
    pub seed: u64,
    pub fading: FadingMode,
    /// Per-link coherence overrides, `"tx,rx,length,offset"` entries joined
    /// by `;`.
    pub coherence: Option<String>,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scheme: SchemeId::MisoBcOneSided,
            k: None,
            field: Field::Complex,
            snr_db: vec![30.0, 40.0, 50.0],
            trials: 10_000,
            epsilon: 0.0,
            tol: RankTolerance::DEFAULT,
            seed: 1,
            fading: FadingMode::Staggered,
            coherence: None,
            out: None,
            format: OutputFormat::Json,
        }
    }
}

impl ExperimentConfig {
    pub fn for_scheme(scheme: SchemeId) -> Self {
        ExperimentConfig {
            scheme,
            k: (scheme == SchemeId::KUserIc).then_some(3),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials == 0 {
            return Err(HarnessError::Config("trials must be >= 1".into()));
        }
        if self.snr_db.is_empty() {
            return Err(HarnessError::Config("SNR list must not be empty".into()));
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(HarnessError::Config("SNR values must be finite".into()));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(HarnessError::Config(format!(
                "epsilon must be a finite value >= 0, got {}",
                self.epsilon
            )));
        }
        if self.scheme == SchemeId::KUserIc && self.k.is_none_or(|k| k < 2) {
            return Err(HarnessError::Config("K_USER_IC needs k >= 2".into()));
        }
        self.coherence_overrides()?;
        Ok(())
    }

    fn coherence_overrides(&self) -> Result<Vec<CoherencePattern>, HarnessError> {
        let Some(spec) = &self.coherence else {
            return Ok(Vec::new());
        };
        spec.split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|entry| {
                let parts: Result<Vec<usize>, _> =
                    entry.split(',').map(|p| p.trim().parse::<usize>()).collect();
                match parts.as_deref() {
                    Ok([tx, rx, length, offset]) => Ok(CoherencePattern::new(
                        LinkId::new(*tx, *rx),
                        *length,
                        *offset,
                    )?),
                    _ => Err(HarnessError::Config(format!(
                        "coherence entry '{entry}' is not 'tx,rx,length,offset'"
                    ))),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverSummary {
    pub receiver: usize,
    pub expected_interference_dim: usize,
    pub min_interference_dim: usize,
    pub max_interference_dim: usize,
    /// Non-degenerate trials whose measured dimension equals the expected one
    /// and whose desired streams are separable from it.
    pub aligned_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSummary {
    pub receivers: Vec<ReceiverSummary>,
    pub degenerate_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub claimed_dof: Vec<Dof>,
    pub claimed_total: Dof,
    pub supersymbol_slots: Vec<usize>,
    pub points: Vec<RatePoint>,
    /// Mean sum over receivers of the interference-as-noise mutual
    /// information, one entry per SNR point.
    pub mi_total_rates: Vec<f64>,
    pub dof: Option<DofEstimate>,
    pub alignment: AlignmentSummary,
    /// Not serialised, so that output files depend only on the config.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

impl ExperimentReport {
    pub fn degenerate_trials(&self) -> usize {
        self.points.first().map_or(0, |p| p.degenerate)
    }
}

/// Everything fixed across the trials of one campaign.
pub struct Campaign {
    config: ExperimentConfig,
    scheme: Box<dyn Scheme>,
    plan: SupersymbolPlan,
}

/// Per-trial result before aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub degenerate: bool,
    /// `[snr][message]` bits per slot
    pub message_rates: Vec<Vec<f64>>,
    /// one entry per SNR
    pub mi_total: Vec<f64>,
    pub interference_dims: Vec<usize>,
    pub aligned: Vec<bool>,
}

impl Campaign {
    pub fn new(config: &ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let scheme = schemes::build_scheme(config.scheme, config.k)?;
        let plan = plan_for(scheme.as_ref(), config)?;
        Ok(Campaign {
            config: config.clone(),
            scheme,
            plan,
        })
    }

    pub fn scheme(&self) -> &dyn Scheme {
        self.scheme.as_ref()
    }

    pub fn plan(&self) -> &SupersymbolPlan {
        &self.plan
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn sample(&self, trial: u64) -> channel::ChannelRealization {
        let d = self.scheme.descriptor();
        channel::sample_realization(
            &self.plan,
            &d.network,
            self.config.field,
            self.config.epsilon,
            channel::trial_seed(self.config.seed, trial),
        )
    }

    /// find supersymbol → sample → precode (CSIT-gated) → effective channels
    /// → decoders → rates at every SNR point.
    pub fn evaluate_trial(&self, trial: u64) -> Result<TrialOutcome, HarnessError> {
        let d = self.scheme.descriptor();
        let realization = self.sample(trial);
        let csit = Csit::extract(&d.csit, &realization);
        let n_snr = self.config.snr_db.len();
        let n_msg = d.messages.len();

        let degenerate = || TrialOutcome {
            degenerate: true,
            message_rates: vec![vec![0.0; n_msg]; n_snr],
            mi_total: vec![0.0; n_snr],
            interference_dims: vec![0; d.network.receivers()],
            aligned: vec![false; d.network.receivers()],
        };

        let tx = match self.scheme.precode(&csit, 1.0) {
            Ok(tx) => tx,
            Err(SchemeError::DegenerateRealization { .. }) => return Ok(degenerate()),
            Err(e) => return Err(e.into()),
        };
        let channels = schemes::effective_channels(d, &tx, &realization);
        let alignment = metrics::verify_alignment(
            &channels,
            &d.expected_interference_dims,
            self.config.tol,
        );
        let mut decoders = Vec::with_capacity(channels.len());
        for eff in &channels {
            match self.scheme.build_decoder(&tx, eff, self.config.tol) {
                Ok(dec) => decoders.push(dec),
                Err(SchemeError::DegenerateRealization { .. }) => return Ok(degenerate()),
                Err(e) => return Err(e.into()),
            }
        }

        let mut message_rates = vec![vec![0.0; n_msg]; n_snr];
        let mut mi_total = vec![0.0; n_snr];
        for (i, &snr_db) in self.config.snr_db.iter().enumerate() {
            let p = metrics::db_to_linear(snr_db);
            let powers: Vec<f64> = tx.stream_powers.iter().map(|s| s * p).collect();
            for (eff, dec) in channels.iter().zip(&decoders) {
                let rates = metrics::zf_rates(
                    dec,
                    eff,
                    &powers,
                    1.0,
                    d.supersymbol_len,
                    self.config.field,
                );
                for (&stream, rate) in dec.streams.iter().zip(rates) {
                    message_rates[i][d.streams[stream].message] += rate;
                }
                mi_total[i] +=
                    metrics::mi_rate(eff, &powers, 1.0, d.supersymbol_len, self.config.field)?;
            }
        }

        Ok(TrialOutcome {
            degenerate: false,
            message_rates,
            mi_total,
            interference_dims: alignment.receivers.iter().map(|r| r.interference_dim).collect(),
            aligned: alignment.receivers.iter().map(|r| r.aligned()).collect(),
        })
    }

    /// Evaluates all trials. Output order is trial order in both modes.
    pub fn evaluate_all(&self, mode: ExecutionMode) -> Result<Vec<TrialOutcome>, HarnessError> {
        let n = self.config.trials as u64;
        match mode {
            #[cfg(feature = "parallel")]
            ExecutionMode::Parallel => {
                use rayon::prelude::*;
                (0..n)
                    .into_par_iter()
                    .map(|t| self.evaluate_trial(t))
                    .collect()
            }
            _ => (0..n).map(|t| self.evaluate_trial(t)).collect(),
        }
    }

    /// Canonical sequential reduction of trial outcomes into a report.
    pub fn aggregate(&self, outcomes: &[TrialOutcome]) -> Result<ExperimentReport, HarnessError> {
        let d = self.scheme.descriptor();
        let n_snr = self.config.snr_db.len();
        let n_msg = d.messages.len();
        let n_rx = d.network.receivers();

        let mut sums = vec![vec![0.0; n_msg]; n_snr];
        let mut mi_sums = vec![0.0; n_snr];
        let mut degenerate = 0;
        let mut receivers: Vec<ReceiverSummary> = (0..n_rx)
            .map(|rx| ReceiverSummary {
                receiver: rx,
                expected_interference_dim: d.expected_interference_dims[rx],
                min_interference_dim: usize::MAX,
                max_interference_dim: 0,
                aligned_trials: 0,
            })
            .collect();
        for o in outcomes {
            if o.degenerate {
                degenerate += 1;
                continue;
            }
            for (sum, rates) in sums.iter_mut().zip(&o.message_rates) {
                for (s, r) in sum.iter_mut().zip(rates) {
                    *s += r;
                }
            }
            for (s, r) in mi_sums.iter_mut().zip(&o.mi_total) {
                *s += r;
            }
            for (summary, (&dim, &aligned)) in
                receivers.iter_mut().zip(o.interference_dims.iter().zip(&o.aligned))
            {
                summary.min_interference_dim = summary.min_interference_dim.min(dim);
                summary.max_interference_dim = summary.max_interference_dim.max(dim);
                summary.aligned_trials += usize::from(aligned);
            }
        }
        for r in &mut receivers {
            if r.min_interference_dim == usize::MAX {
                r.min_interference_dim = 0;
            }
        }

        let valid = outcomes.len() - degenerate;
        let mean = |s: f64| if valid > 0 { s / valid as f64 } else { 0.0 };
        let points: Vec<RatePoint> = self
            .config
            .snr_db
            .iter()
            .zip(&sums)
            .map(|(&snr_db, sum)| {
                let message_rates: Vec<f64> = sum.iter().map(|&s| mean(s)).collect();
                RatePoint {
                    snr_db,
                    total_rate: message_rates.iter().sum(),
                    message_rates,
                    trials: outcomes.len(),
                    degenerate,
                }
            })
            .collect();
        let dof = match metrics::dof_slope(&points) {
            Ok(est) => Some(est),
            Err(MetricsError::InsufficientPoints { .. }) => None,
            Err(e) => return Err(e.into()),
        };

        Ok(ExperimentReport {
            config: self.config.clone(),
            claimed_dof: d.messages.iter().map(|m| m.claimed_dof).collect(),
            claimed_total: d.claimed_total(),
            supersymbol_slots: self.plan.slots().to_vec(),
            points,
            mi_total_rates: mi_sums.into_iter().map(mean).collect(),
            dof,
            alignment: AlignmentSummary {
                receivers,
                degenerate_rate: degenerate as f64 / outcomes.len().max(1) as f64,
            },
            wall_clock_seconds: 0.0,
        })
    }
}

fn plan_for(scheme: &dyn Scheme, config: &ExperimentConfig) -> Result<SupersymbolPlan, HarnessError> {
    let d = scheme.descriptor();
    let len = d.supersymbol_len;
    match config.fading {
        FadingMode::Staggered => {
            let mut patterns = d.default_patterns.clone();
            for o in config.coherence_overrides()? {
                if o.link.tx >= d.network.transmitters() || o.link.rx >= d.network.receivers() {
                    return Err(HarnessError::Config(format!(
                        "coherence override for unknown link {}",
                        o.link
                    )));
                }
                match patterns.iter_mut().find(|p| p.link == o.link) {
                    Some(p) => *p = o,
                    None => patterns.push(o),
                }
            }
            let horizon = channel::default_horizon(&patterns, len);
            Ok(channel::find_supersymbol(&patterns, &d.requirement, horizon)?)
        }
        FadingMode::Synchronized => {
            let patterns: Vec<CoherencePattern> = d
                .network
                .links()
                .map(|l| CoherencePattern::new(l, 1, 0))
                .collect::<Result<_, _>>()?;
            Ok(SupersymbolPlan::from_slots(&patterns, (0..len).collect()))
        }
    }
}

fn default_mode() -> ExecutionMode {
    if cfg!(feature = "parallel") {
        ExecutionMode::Parallel
    } else {
        ExecutionMode::Sequential
    }
}

/// Runs one campaign.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    run_with(config, default_mode())
}

pub fn run_with(config: &ExperimentConfig, mode: ExecutionMode) -> Result<ExperimentReport, HarnessError> {
    let start = Instant::now();
    let campaign = Campaign::new(config)?;
    let outcomes = campaign.evaluate_all(mode)?;
    let mut report = campaign.aggregate(&outcomes)?;
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// One campaign per perturbation level. Levels must be non-negative and
/// sorted in descending order.
pub fn sweep_epsilon(
    config: &ExperimentConfig,
    epsilons: &[f64],
) -> Result<Vec<ExperimentReport>, HarnessError> {
    if epsilons.is_empty() {
        return Err(HarnessError::Config("epsilon list must not be empty".into()));
    }
    if epsilons.iter().any(|&e| e.is_nan() || e < 0.0) {
        return Err(HarnessError::Config("epsilon values must be >= 0".into()));
    }
    if epsilons.windows(2).any(|w| w[0] < w[1]) {
        return Err(HarnessError::Config(
            "epsilon values must be sorted in descending order".into(),
        ));
    }
    epsilons
        .iter()
        .map(|&epsilon| {
            run(&ExperimentConfig {
                epsilon,
                ..config.clone()
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scheme: SchemeId) -> ExperimentConfig {
        ExperimentConfig {
            trials: 50,
            ..ExperimentConfig::for_scheme(scheme)
        }
    }

    #[test]
    fn config_validation() {
        let ok = small(SchemeId::XChannel);
        assert!(ok.validate().is_ok());
        for bad in [
            ExperimentConfig { trials: 0, ..ok.clone() },
            ExperimentConfig { snr_db: vec![], ..ok.clone() },
            ExperimentConfig { epsilon: -1.0, ..ok.clone() },
            ExperimentConfig { coherence: Some("0,0,2".into()), ..ok.clone() },
            ExperimentConfig { scheme: SchemeId::KUserIc, k: None, ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(HarnessError::Config(_))), "{bad:?}");
        }
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let cfg = small(SchemeId::MisoBcNoCsit);
        let a = run_with(&cfg, ExecutionMode::Sequential).unwrap();
        let b = run_with(&cfg, ExecutionMode::Parallel).unwrap();
        assert_eq!(a.points, b.points);
        assert_eq!(a.mi_total_rates, b.mi_total_rates);
    }

    #[test]
    fn staggered_plans_match_templates() {
        for id in SchemeId::ALL {
            let c = Campaign::new(&small(id)).unwrap();
            assert!(c.plan().satisfies(&c.scheme().descriptor().requirement), "{id}");
        }
    }

    #[test]
    fn identical_patterns_override_is_rejected() {
        let cfg = ExperimentConfig {
            coherence: Some("0,0,2,0;0,1,2,0".into()),
            ..small(SchemeId::MisoBcOneSided)
        };
        let err = run(&cfg).unwrap_err();
        assert!(matches!(
            err,
            HarnessError::Channel(ChannelError::NoSupersymbolFound { .. })
        ));
        assert!(err.is_config_error());
    }

    #[test]
    fn coherence_ratio_override_still_finds_supersymbol() {
        // user 2 coherent twice as long as user 1, no staggering
        let cfg = ExperimentConfig {
            coherence: Some("0,0,2,0;0,1,4,0".into()),
            ..small(SchemeId::MisoBcOneSided)
        };
        let report = run(&cfg).unwrap();
        assert_eq!(report.supersymbol_slots, vec![0, 2]);
        assert_eq!(report.alignment.degenerate_rate, 0.0);
    }

    #[test]
    fn sweep_requires_descending_levels() {
        let cfg = small(SchemeId::KUserIc);
        assert!(sweep_epsilon(&cfg, &[0.0, 0.1]).is_err());
        assert!(sweep_epsilon(&cfg, &[0.1, -0.1]).is_err());
        assert!(sweep_epsilon(&cfg, &[]).is_err());
    }

    #[test]
    fn sweep_zero_entry_equals_plain_run() {
        let cfg = small(SchemeId::KUserIc);
        let sweep = sweep_epsilon(&cfg, &[0.01, 0.0]).unwrap();
        let plain = run(&cfg).unwrap();
        assert_eq!(sweep[1].points, plain.points);
        assert_eq!(sweep[1].dof, plain.dof);
    }

    #[test]
    fn low_snr_grid_has_no_dof_estimate() {
        let cfg = ExperimentConfig {
            snr_db: vec![0.0, 10.0],
            ..small(SchemeId::TdmaBaseline)
        };
        let report = run(&cfg).unwrap();
        assert!(report.dof.is_none());
        assert_eq!(report.points.len(), 2);
    }
}
