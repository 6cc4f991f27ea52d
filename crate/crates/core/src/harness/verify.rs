//! Structural checks at ε = 0: alignment dimensions, exact zero forcing,
//! CSIT usage, block structure of the sampled channel, per-transmitter
//! support and trial determinism.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{Campaign, ExperimentConfig, FadingMode, HarnessError, MAX_DEGENERATE_RATE};
use crate::channel::{self, LinkId, Partition};
use crate::metrics;
use crate::numerics::Matrix;
use crate::schemes::{self, Csit, SchemeError, SchemeId};

/// Relative bound on `|D·G_i|` for a decoder to count as zero forcing.
pub const ZF_RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub checked: usize,
    pub failures: usize,
    /// first failure, if any
    pub detail: Option<String>,
}

impl CheckResult {
    fn new(name: &'static str) -> Self {
        CheckResult {
            name,
            checked: 0,
            failures: 0,
            detail: None,
        }
    }

    fn record(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.failures += 1;
            if self.detail.is_none() {
                self.detail = Some(detail());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.checked > 0 && self.failures == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationSummary {
    pub scheme: SchemeId,
    pub fading: FadingMode,
    pub trials: usize,
    pub degenerate: usize,
    pub checks: Vec<CheckResult>,
}

impl VerificationSummary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Runs the structural suite on `config.trials` draws. The perturbation
/// level of `config` is ignored.
pub fn verify(config: &ExperimentConfig) -> Result<VerificationSummary, HarnessError> {
    let config = ExperimentConfig {
        epsilon: 0.0,
        ..config.clone()
    };
    let campaign = Campaign::new(&config)?;
    let scheme = campaign.scheme();
    let d = scheme.descriptor();
    let plan = campaign.plan();
    let len = d.supersymbol_len;
    let tol = config.tol;

    let partitions: BTreeMap<LinkId, Partition> = d
        .network
        .links()
        .map(|l| (l, channel::sampling_partition(plan, l)))
        .collect();

    let mut degenerate_check = CheckResult::new("non-degenerate");
    let mut alignment = CheckResult::new("alignment");
    let mut zf = CheckResult::new("zero-forcing");
    let mut identifiable = CheckResult::new("identifiability");
    let mut csit_contract = CheckResult::new("csit-contract");
    let mut blocks = CheckResult::new("block-structure");
    let mut support = CheckResult::new("transmitter-support");
    let mut determinism = CheckResult::new("determinism");
    let mut degenerate = 0;

    blocks.record(plan.satisfies(&d.requirement), || {
        format!("plan {:?} does not realise the templates", plan.slots())
    });

    for trial in 0..config.trials as u64 {
        let realization = campaign.sample(trial);
        blocks.record(realization.matches_partitions(|l| &partitions[&l]), || {
            format!("trial {trial}: sampled channel breaks block structure")
        });

        let csit = Csit::extract(&d.csit, &realization);
        let tx = match scheme.precode(&csit, 1.0) {
            Ok(tx) => tx,
            Err(SchemeError::DegenerateRealization { .. }) => {
                degenerate += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };

        // Replace every undeclared coefficient; the transmit side must not
        // notice.
        let mut other = channel::sample_realization(
            plan,
            &d.network,
            config.field,
            0.0,
            channel::trial_seed(!config.seed, trial),
        );
        for &(link, pos) in &d.csit.0 {
            other.set(link, pos, realization.get(link, pos).clone());
        }
        let tx_other = scheme.precode(&Csit::extract(&d.csit, &other), 1.0)?;
        csit_contract.record(
            tx_other.precoders == tx.precoders && tx_other.stream_powers == tx.stream_powers,
            || format!("trial {trial}: precoders depend on undeclared channel entries"),
        );

        let joint = tx.joint_matrix(&d.network, len);
        let owners = schemes::distributed_support(&d.network, &joint);
        support.record(
            owners.as_ref().is_ok_and(|o| {
                o.iter()
                    .zip(&tx.stream_columns)
                    .all(|(&owner, &(t, _))| owner == t)
            }),
            || format!("trial {trial}: a beamforming column spans several transmitters"),
        );

        let channels = schemes::effective_channels(d, &tx, &realization);
        let report = metrics::verify_alignment(&channels, &d.expected_interference_dims, tol);
        alignment.record(report.matches_expected(), || {
            let dims: Vec<_> = report
                .receivers
                .iter()
                .map(|r| (r.interference_dim, r.expected_interference_dim, r.separable))
                .collect();
            format!("trial {trial}: (measured, expected, separable) = {dims:?}")
        });

        let mut trial_degenerate = false;
        for eff in &channels {
            let dec = match scheme.build_decoder(&tx, eff, tol) {
                Ok(dec) => dec,
                Err(SchemeError::DegenerateRealization { .. }) => {
                    trial_degenerate = true;
                    break;
                }
                Err(e) => return Err(e.into()),
            };
            let scale = dec.matrix.frobenius_norm() * eff.signal_scale();
            let residual = if eff.interference.cols() == 0 {
                0.0
            } else {
                dec.matrix.mul(&eff.interference).max_abs()
            };
            zf.record(residual <= ZF_RESIDUAL_TOL * scale, || {
                format!(
                    "trial {trial}, receiver {}: residual {residual:.3e} vs scale {scale:.3e}",
                    eff.receiver
                )
            });
            identifiable.record(diagonally_dominant(&dec.matrix.mul(&eff.desired)), || {
                format!("trial {trial}, receiver {}: D·G_d not diagonally dominant", eff.receiver)
            });
        }
        if trial_degenerate {
            degenerate += 1;
            continue;
        }

        let first = campaign.evaluate_trial(trial)?;
        let second = campaign.evaluate_trial(trial)?;
        determinism.record(first == second && campaign.sample(trial) == realization, || {
            format!("trial {trial}: repeated evaluation differs")
        });
    }

    degenerate_check.record(
        (degenerate as f64) <= MAX_DEGENERATE_RATE * config.trials as f64,
        || format!("{degenerate} of {} trials degenerate", config.trials),
    );

    Ok(VerificationSummary {
        scheme: config.scheme,
        fading: config.fading,
        trials: config.trials,
        degenerate,
        checks: vec![
            degenerate_check,
            alignment,
            zf,
            identifiable,
            csit_contract,
            blocks,
            support,
            determinism,
        ],
    })
}

fn diagonally_dominant(m: &Matrix) -> bool {
    m.rows() == m.cols()
        && (0..m.rows()).all(|i| {
            let off: f64 = (0..m.cols())
                .filter(|&j| j != i)
                .map(|j| m[(i, j)].norm())
                .sum();
            m[(i, i)].norm() > off
        })
}
