//! Alignment checks, Gaussian-signalling rates and DoF slope fitting.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{self, Field, Matrix, NumericsError, RankTolerance};
use crate::schemes::{EffectiveChannels, LinearDecoder};

/// SNR below which the constant term of the rate curve biases the slope.
pub const ASYMPTOTIC_FLOOR_DB: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("need at least 2 SNR points at or above {floor_db} dB, got {usable}")]
    InsufficientPoints { usable: usize, floor_db: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverAlignment {
    pub receiver: usize,
    pub desired_dim: usize,
    pub interference_dim: usize,
    pub expected_interference_dim: usize,
    /// `[G_d | basis(G_i)]` has full column rank.
    pub separable: bool,
    /// Smallest over largest singular value of `[G_d | basis(G_i)]`.
    pub min_singular_value: f64,
}

impl ReceiverAlignment {
    pub fn aligned(&self) -> bool {
        self.separable && self.interference_dim == self.expected_interference_dim
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub receivers: Vec<ReceiverAlignment>,
}

impl AlignmentReport {
    /// Every receiver sees interference of exactly the expected dimension and
    /// can separate it from its desired streams.
    pub fn matches_expected(&self) -> bool {
        self.receivers.iter().all(ReceiverAlignment::aligned)
    }
}

/// Measures interference dimension and separability at every receiver.
///
/// The interference dimension is the number of singular values of `G_i`
/// above `τ` times the largest singular value of the whole received signal
/// `[G_d | G_i]`.
pub fn verify_alignment(
    channels: &[EffectiveChannels],
    expected_dims: &[usize],
    tol: RankTolerance,
) -> AlignmentReport {
    let receivers = channels
        .iter()
        .map(|eff| {
            let scale = eff.signal_scale();
            let interference_dim = numerics::rank_relative_to(&eff.interference, scale, tol);
            let basis = numerics::dominant_subspace(&eff.interference, interference_dim);
            let stacked = Matrix::hstack(&[&eff.desired, &basis]).expect("same receive dimension");
            let sv = numerics::singular_values(&stacked);
            let top = sv.first().copied().unwrap_or(0.0);
            let needed = eff.desired.cols() + basis.cols();
            let separable =
                needed <= stacked.rows() && numerics::rank(&stacked, tol) == needed;
            let min_singular_value = if top > 0.0 && needed <= stacked.rows() {
                sv.last().copied().unwrap_or(0.0) / top
            } else {
                0.0
            };
            ReceiverAlignment {
                receiver: eff.receiver,
                desired_dim: eff.desired.cols(),
                interference_dim,
                expected_interference_dim: expected_dims[eff.receiver],
                separable,
                min_singular_value,
            }
        })
        .collect();
    AlignmentReport { receivers }
}

/// Per-stream rates of a linear decoder, in decoder row order.
///
/// `stream_powers` is indexed by global stream. Every other stream reaching
/// the receiver, desired or not, counts as interference after filtering.
pub fn zf_rates(
    decoder: &LinearDecoder,
    eff: &EffectiveChannels,
    stream_powers: &[f64],
    noise_variance: f64,
    supersymbol_len: usize,
    field: Field,
) -> Vec<f64> {
    let all_streams: Vec<usize> = eff
        .desired_streams
        .iter()
        .chain(&eff.interfering_streams)
        .copied()
        .collect();
    let columns: Vec<Vec<_>> = all_streams
        .iter()
        .map(|&s| eff.stream_column(s).expect("stream present"))
        .collect();
    let prefactor = field.rate_prefactor() / supersymbol_len as f64;

    decoder
        .streams
        .iter()
        .enumerate()
        .map(|(i, &stream)| {
            let w = decoder.matrix.row(i);
            let gain = |col: &[numerics::Scalar]| -> f64 {
                w.iter().zip(col).map(|(a, b)| a * b).sum::<numerics::Scalar>().norm_sqr()
            };
            let mut signal = 0.0;
            let mut interference = 0.0;
            for (&s, col) in all_streams.iter().zip(&columns) {
                let p = gain(col) * stream_powers[s];
                if s == stream {
                    signal = p;
                } else {
                    interference += p;
                }
            }
            let noise: f64 = noise_variance * w.iter().map(|z| z.norm_sqr()).sum::<f64>();
            let denom = interference + noise;
            if signal == 0.0 || denom == 0.0 {
                return 0.0;
            }
            prefactor * (1.0 + signal / denom).log2()
        })
        .collect()
}

/// Gaussian mutual information of all desired streams at one receiver with
/// interference treated as noise:
/// `log2 det(I + (N₀I + G_i P_i G_iᴴ)⁻¹ G_d P_d G_dᴴ) / L`.
pub fn mi_rate(
    eff: &EffectiveChannels,
    stream_powers: &[f64],
    noise_variance: f64,
    supersymbol_len: usize,
    field: Field,
) -> Result<f64, MetricsError> {
    let n = eff.desired.rows();
    let covariance = |g: &Matrix, streams: &[usize]| -> Matrix {
        let scaled = Matrix::from_fn(g.rows(), g.cols(), |i, j| {
            g[(i, j)] * stream_powers[streams[j]].sqrt()
        });
        scaled.mul(&scaled.adjoint())
    };
    let noise = Matrix::identity(n).scale(noise_variance.into());
    let interference_plus_noise = noise.try_add(&covariance(
        &eff.interference,
        &eff.interfering_streams,
    ))?;
    let total = interference_plus_noise.try_add(&covariance(&eff.desired, &eff.desired_streams))?;
    let bits = numerics::log2_abs_determinant(&total)?
        - numerics::log2_abs_determinant(&interference_plus_noise)?;
    Ok((bits.max(0.0)) * field.rate_prefactor() / supersymbol_len as f64)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Mean rates at one SNR over the non-degenerate trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub snr_db: f64,
    /// bits per slot, one entry per message
    pub message_rates: Vec<f64>,
    pub total_rate: f64,
    pub trials: usize,
    pub degenerate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DofEstimate {
    pub per_message: Vec<f64>,
    pub total: f64,
    /// RMS residual of the total-rate line fit, bits per slot.
    pub residual: f64,
    pub snr_db_used: Vec<f64>,
}

/// Least-squares slope of `(log2 snr, rate)` pairs; returns `(slope, intercept)`.
fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// DoF as the slope of mean rate against `log2(SNR)`, per message and in
/// total. Only points at or above [`ASYMPTOTIC_FLOOR_DB`] are used.
pub fn dof_slope(points: &[RatePoint]) -> Result<DofEstimate, MetricsError> {
    let used: Vec<&RatePoint> = points
        .iter()
        .filter(|p| p.snr_db >= ASYMPTOTIC_FLOOR_DB)
        .collect();
    let mut distinct: Vec<f64> = used.iter().map(|p| p.snr_db).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(MetricsError::InsufficientPoints {
            usable: distinct.len(),
            floor_db: ASYMPTOTIC_FLOOR_DB,
        });
    }
    let x: Vec<f64> = used.iter().map(|p| db_to_linear(p.snr_db).log2()).collect();
    let messages = used[0].message_rates.len();
    let per_message: Vec<f64> = (0..messages)
        .map(|m| {
            let y: Vec<f64> = used.iter().map(|p| p.message_rates[m]).collect();
            fit_line(&x, &y).0
        })
        .collect();
    let total = per_message.iter().sum();

    let y: Vec<f64> = used.iter().map(|p| p.total_rate).collect();
    let (slope, intercept) = fit_line(&x, &y);
    let residual = (x
        .iter()
        .zip(&y)
        .map(|(a, b)| (b - (slope * a + intercept)).powi(2))
        .sum::<f64>()
        / x.len() as f64)
        .sqrt();

    Ok(DofEstimate {
        per_message,
        total,
        residual,
        snr_db_used: used.iter().map(|p| p.snr_db).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn point(snr_db: f64, rates: Vec<f64>) -> RatePoint {
        let total_rate = rates.iter().sum();
        RatePoint {
            snr_db,
            message_rates: rates,
            total_rate,
            trials: 1,
            degenerate: 0,
        }
    }

    fn scalar_channel(g: f64) -> (EffectiveChannels, LinearDecoder) {
        let eff = EffectiveChannels {
            receiver: 0,
            desired: Matrix::from_real_rows(&[[g]]),
            desired_streams: vec![0],
            interference: Matrix::zeros(1, 0),
            interfering_streams: vec![],
        };
        let dec = LinearDecoder {
            receiver: 0,
            matrix: Matrix::from_real_rows(&[[1.0]]),
            streams: vec![0],
        };
        (eff, dec)
    }

    #[test]
    fn exact_line_gives_exact_slope() {
        let pts: Vec<_> = [30.0, 40.0, 50.0]
            .iter()
            .map(|&db| point(db, vec![1.5 * db_to_linear(db).log2() + 7.0]))
            .collect();
        let est = dof_slope(&pts).unwrap();
        assert!((est.total - 1.5).abs() < 1e-12);
        assert!(est.residual < 1e-12);
        assert_eq!(est.snr_db_used, vec![30.0, 40.0, 50.0]);
    }

    #[test]
    fn total_slope_is_sum_of_messages() {
        let pts: Vec<_> = [30.0, 40.0, 50.0]
            .iter()
            .map(|&db| {
                let x = db_to_linear(db).log2();
                point(db, vec![x + 0.3, 0.5 * x - 1.0 + 0.01 * db.sin()])
            })
            .collect();
        let est = dof_slope(&pts).unwrap();
        assert_eq!(est.total, est.per_message.iter().sum::<f64>());
    }

    #[test]
    fn slope_needs_two_points_above_floor() {
        let pts = vec![point(10.0, vec![1.0]), point(20.0, vec![2.0]), point(30.0, vec![3.0])];
        assert!(matches!(
            dof_slope(&pts),
            Err(MetricsError::InsufficientPoints { usable: 1, .. })
        ));
        assert!(dof_slope(&[]).is_err());
    }

    #[test]
    fn scalar_rate_matches_definition() {
        let (eff, dec) = scalar_channel(0.7);
        let r = zf_rates(&dec, &eff, &[100.0], 1.0, 1, Field::Complex);
        assert!((r[0] - (1.0 + 0.49 * 100.0f64).log2()).abs() < 1e-12);
        let real = zf_rates(&dec, &eff, &[100.0], 1.0, 1, Field::Real);
        assert!((real[0] - 0.5 * (1.0 + 0.49 * 100.0f64).log2()).abs() < 1e-12);
    }

    #[test]
    fn zero_channel_has_zero_rate() {
        let (eff, dec) = scalar_channel(0.0);
        assert_eq!(zf_rates(&dec, &eff, &[100.0], 1.0, 1, Field::Complex), vec![0.0]);
        assert_eq!(mi_rate(&eff, &[100.0], 1.0, 1, Field::Complex).unwrap(), 0.0);
    }

    #[test]
    fn mi_rate_of_parallel_channels() {
        let eff = EffectiveChannels {
            receiver: 0,
            desired: Matrix::identity(2),
            desired_streams: vec![0, 1],
            interference: Matrix::zeros(2, 0),
            interfering_streams: vec![],
        };
        let p = 1000.0;
        let got = mi_rate(&eff, &[p, p], 1.0, 2, Field::Complex).unwrap();
        let want = 2.0 * (1.0 + p).log2() / 2.0;
        assert!((got - want).abs() < 1e-10);
    }

    #[test]
    fn projection_doubles_noise() {
        // desired [a, 0]ᵀ, interference along [1, 1]ᵀ, decoder [1, -1]
        let a = Complex64::new(0.8, -0.6);
        let eff = EffectiveChannels {
            receiver: 1,
            desired: Matrix::from_rows(&[[a], [Complex64::new(0.0, 0.0)]]),
            desired_streams: vec![2],
            interference: Matrix::from_real_rows(&[[0.5, -1.2], [0.5, -1.2]]),
            interfering_streams: vec![0, 1],
        };
        let dec = LinearDecoder {
            receiver: 1,
            matrix: Matrix::from_real_rows(&[[1.0, -1.0]]),
            streams: vec![2],
        };
        let p = 50.0;
        let r = zf_rates(&dec, &eff, &[7.0, 7.0, p], 1.0, 2, Field::Complex);
        let sinr = a.norm_sqr() * p / 2.0;
        assert!((r[0] - (1.0 + sinr).log2() / 2.0).abs() < 1e-12);
    }
}
