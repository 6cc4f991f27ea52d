//! Linear alignment schemes over a supersymbol.
//!
//! Each scheme fixes a network, the coherence structure it needs, and a set
//! of beamforming columns chosen without channel values (one scheme may read
//! a single declared CSIT entry). Receivers decode with a linear
//! zero-forcing filter built from their own channel knowledge.

mod constructions;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelRealization, CoherencePattern, EqualityRequirement, LinkId, Network};
use crate::numerics::{self, Matrix, NumericsError, RankTolerance};

pub use constructions::{
    KUserIc, MimoIc1324, MisoBcNoCsit, MisoBcOneSided, TdmaBaseline, XChannel,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemeError {
    #[error("unknown scheme '{0}'")]
    UnknownScheme(String),
    #[error("invalid scheme parameter: {0}")]
    InvalidParameter(String),
    #[error("precoder requested undeclared CSIT entry {link} at position {position}")]
    CsitViolation { link: LinkId, position: usize },
    #[error("degenerate channel realization at receiver {receiver}")]
    DegenerateRealization { receiver: usize },
    #[error("beamforming column {column} spans more than one transmitter")]
    DistributedSupportViolation { column: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SchemeId {
    MisoBcOneSided,
    MisoBcNoCsit,
    XChannel,
    MimoIc1324,
    KUserIc,
    TdmaBaseline,
}

impl SchemeId {
    pub const ALL: [SchemeId; 6] = [
        SchemeId::MisoBcOneSided,
        SchemeId::MisoBcNoCsit,
        SchemeId::XChannel,
        SchemeId::MimoIc1324,
        SchemeId::KUserIc,
        SchemeId::TdmaBaseline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::MisoBcOneSided => "MISO_BC_ONE_SIDED",
            SchemeId::MisoBcNoCsit => "MISO_BC_NO_CSIT",
            SchemeId::XChannel => "X_CHANNEL",
            SchemeId::MimoIc1324 => "MIMO_IC_1324",
            SchemeId::KUserIc => "K_USER_IC",
            SchemeId::TdmaBaseline => "TDMA_BASELINE",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            SchemeId::MisoBcOneSided => {
                "2-antenna MISO BC, CSIT of user 1 over its first block only; 3/2 DoF"
            }
            SchemeId::MisoBcNoCsit => "2-antenna MISO BC, no CSIT; 4/3 DoF",
            SchemeId::XChannel => "2x2 single-antenna X channel, no CSIT; 4/3 DoF",
            SchemeId::MimoIc1324 => {
                "MIMO IC with (1,3) transmit and (2,4) receive antennas, no CSIT; (1, 3/2) DoF"
            }
            SchemeId::KUserIc => "K-user single-antenna interference channel, no CSIT; K/2 DoF",
            SchemeId::TdmaBaseline => "time division on the 2-user MISO BC; 1 DoF",
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = SchemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        SchemeId::ALL
            .into_iter()
            .find(|id| id.as_str() == norm)
            .ok_or_else(|| SchemeError::UnknownScheme(s.to_string()))
    }
}

impl TryFrom<String> for SchemeId {
    type Error = SchemeError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<SchemeId> for String {
    fn from(id: SchemeId) -> String {
        id.as_str().to_string()
    }
}

/// A rational number of degrees of freedom per slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dof {
    pub num: u32,
    pub den: u32,
}

impl Dof {
    pub fn new(num: u32, den: u32) -> Self {
        assert!(den > 0);
        let g = gcd(num, den);
        Dof {
            num: num / g,
            den: den / g,
        }
    }

    pub fn value(self) -> f64 {
        f64::from(self.num) / f64::from(self.den)
    }
}

impl std::ops::Add for Dof {
    type Output = Dof;

    fn add(self, rhs: Dof) -> Dof {
        Dof::new(self.num * rhs.den + rhs.num * self.den, self.den * rhs.den)
    }
}

impl std::iter::Sum for Dof {
    fn sum<I: Iterator<Item = Dof>>(iter: I) -> Dof {
        iter.fold(Dof::new(0, 1), |a, b| a + b)
    }
}

impl fmt::Display for Dof {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a.max(1)
    } else {
        gcd(b, a % b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageSpec {
    pub tx: usize,
    pub rx: usize,
    pub claimed_dof: Dof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub tx: usize,
    pub message: usize,
}

/// Channel entries a precoder is allowed to read: `(link, 0-based position)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsitDeclaration(pub Vec<(LinkId, usize)>);

impl CsitDeclaration {
    pub fn none() -> Self {
        CsitDeclaration(Vec::new())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, link: LinkId, position: usize) -> bool {
        self.0.contains(&(link, position))
    }
}

/// The channel knowledge handed to a precoder: exactly the declared entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Csit {
    entries: BTreeMap<(LinkId, usize), Matrix>,
}

impl Csit {
    pub fn none() -> Self {
        Csit::default()
    }

    pub fn extract(declaration: &CsitDeclaration, realization: &ChannelRealization) -> Self {
        Csit {
            entries: declaration
                .0
                .iter()
                .map(|&(link, pos)| ((link, pos), realization.get(link, pos).clone()))
                .collect(),
        }
    }

    pub fn get(&self, link: LinkId, position: usize) -> Result<&Matrix, SchemeError> {
        self.entries
            .get(&(link, position))
            .ok_or(SchemeError::CsitViolation { link, position })
    }
}

/// Everything static about a scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeDescriptor {
    pub id: SchemeId,
    pub k: Option<usize>,
    pub network: Network,
    pub supersymbol_len: usize,
    pub messages: Vec<MessageSpec>,
    pub streams: Vec<StreamSpec>,
    pub requirement: EqualityRequirement,
    /// Staggered coherence patterns under which the requirement is met.
    pub default_patterns: Vec<CoherencePattern>,
    pub csit: CsitDeclaration,
    /// Dimension the interference occupies at each receiver when aligned.
    pub expected_interference_dims: Vec<usize>,
}

impl SchemeDescriptor {
    pub fn claimed_total(&self) -> Dof {
        self.messages.iter().map(|m| m.claimed_dof).sum()
    }

    pub fn stream_receiver(&self, stream: usize) -> usize {
        self.messages[self.streams[stream].message].rx
    }

    pub fn desired_streams(&self, receiver: usize) -> Vec<usize> {
        (0..self.streams.len())
            .filter(|&s| self.stream_receiver(s) == receiver)
            .collect()
    }

    pub fn interfering_streams(&self, receiver: usize) -> Vec<usize> {
        (0..self.streams.len())
            .filter(|&s| self.stream_receiver(s) != receiver)
            .collect()
    }

    /// Global stream indices sent by `tx`, in column order of its precoder.
    pub fn streams_of(&self, tx: usize) -> Vec<usize> {
        (0..self.streams.len())
            .filter(|&s| self.streams[s].tx == tx)
            .collect()
    }
}

/// Precoding matrices of every transmitter plus per-stream powers.
///
/// Precoder rows are `tx_antennas · L`, slot-major; each column has unit
/// norm and belongs to one stream. The stream's transmit power is kept
/// separately in `stream_powers`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecodedTransmission {
    pub precoders: Vec<Matrix>,
    /// stream → (transmitter, column)
    pub stream_columns: Vec<(usize, usize)>,
    pub stream_powers: Vec<f64>,
}

impl PrecodedTransmission {
    pub fn column(&self, stream: usize) -> Vec<numerics::Scalar> {
        let (tx, col) = self.stream_columns[stream];
        self.precoders[tx].column(col)
    }

    /// All streams' columns over the joint antenna array: rows ordered by
    /// slot, then transmitter, then antenna.
    pub fn joint_matrix(&self, network: &Network, len: usize) -> Matrix {
        let per_slot: usize = network.tx_antennas.iter().sum();
        let mut out = Matrix::zeros(per_slot * len, self.stream_columns.len());
        for (s, &(tx, col)) in self.stream_columns.iter().enumerate() {
            let ants = network.tx_antennas[tx];
            let base: usize = network.tx_antennas[..tx].iter().sum();
            for slot in 0..len {
                for a in 0..ants {
                    out[(slot * per_slot + base + a, s)] = self.precoders[tx][(slot * ants + a, col)];
                }
            }
        }
        out
    }
}

/// Transmitter owning each row of a joint precoder (see
/// [`PrecodedTransmission::joint_matrix`]).
fn joint_row_owner(network: &Network, row: usize) -> usize {
    let per_slot: usize = network.tx_antennas.iter().sum();
    let mut a = row % per_slot;
    for (tx, &n) in network.tx_antennas.iter().enumerate() {
        if a < n {
            return tx;
        }
        a -= n;
    }
    unreachable!("row outside antenna array")
}

/// Checks that every column of a joint precoder is nonzero only on the rows
/// of a single transmitter; returns that transmitter per column.
pub fn distributed_support(network: &Network, joint: &Matrix) -> Result<Vec<usize>, SchemeError> {
    (0..joint.cols())
        .map(|c| {
            let mut owners = (0..joint.rows())
                .filter(|&r| joint[(r, c)].norm() != 0.0)
                .map(|r| joint_row_owner(network, r));
            let first = owners
                .next()
                .ok_or(SchemeError::DistributedSupportViolation { column: c })?;
            if owners.all(|o| o == first) {
                Ok(first)
            } else {
                Err(SchemeError::DistributedSupportViolation { column: c })
            }
        })
        .collect()
}

/// Desired and interference effective channels at one receiver, without
/// transmit power.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannels {
    pub receiver: usize,
    /// `rx_antennas · L` × desired streams
    pub desired: Matrix,
    pub desired_streams: Vec<usize>,
    pub interference: Matrix,
    pub interfering_streams: Vec<usize>,
}

impl EffectiveChannels {
    pub fn combined(&self) -> Matrix {
        Matrix::hstack(&[&self.desired, &self.interference]).expect("same receive dimension")
    }

    /// Largest singular value of the full received signal, the reference
    /// scale for interference-dimension decisions.
    pub fn signal_scale(&self) -> f64 {
        numerics::singular_values(&self.combined())
            .first()
            .copied()
            .unwrap_or(0.0)
    }

    /// Column of `stream` in either block.
    pub fn stream_column(&self, stream: usize) -> Option<Vec<numerics::Scalar>> {
        if let Some(i) = self.desired_streams.iter().position(|&s| s == stream) {
            return Some(self.desired.column(i));
        }
        self.interfering_streams
            .iter()
            .position(|&s| s == stream)
            .map(|i| self.interference.column(i))
    }
}

/// Stacked block-diagonal channel over the supersymbol applied to each
/// stream's precoding column, split into desired and interfering streams for
/// every receiver.
pub fn effective_channels(
    d: &SchemeDescriptor,
    tx: &PrecodedTransmission,
    r: &ChannelRealization,
) -> Vec<EffectiveChannels> {
    let len = d.supersymbol_len;
    (0..d.network.receivers())
        .map(|rx| {
            let rx_ants = d.network.rx_antennas[rx];
            let column_of = |s: usize| -> Vec<numerics::Scalar> {
                let t = d.streams[s].tx;
                let tx_ants = d.network.tx_antennas[t];
                let v = tx.column(s);
                let link = LinkId::new(t, rx);
                let mut out = Vec::with_capacity(rx_ants * len);
                for slot in 0..len {
                    let h = r.get(link, slot);
                    for i in 0..rx_ants {
                        out.push((0..tx_ants).map(|a| h[(i, a)] * v[slot * tx_ants + a]).sum());
                    }
                }
                out
            };
            let build = |streams: &[usize]| {
                let cols: Vec<Vec<_>> = streams.iter().map(|&s| column_of(s)).collect();
                Matrix::from_fn(rx_ants * len, streams.len(), |i, j| cols[j][i])
            };
            let desired_streams = d.desired_streams(rx);
            let interfering_streams = d.interfering_streams(rx);
            EffectiveChannels {
                receiver: rx,
                desired: build(&desired_streams),
                interference: build(&interfering_streams),
                desired_streams,
                interfering_streams,
            }
        })
        .collect()
}

/// Linear receive filter: one row per desired stream.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDecoder {
    pub receiver: usize,
    pub matrix: Matrix,
    pub streams: Vec<usize>,
}

/// Zero-forcing decoder against the scheme's interference subspace.
///
/// The interference subspace is spanned by the dominant left singular
/// vectors of `G_i`, as many as the numerical rank (judged against the full
/// signal scale) but never more than the scheme's aligned dimension. Under
/// exact block fading that is the whole interference span; under perturbed
/// or mismatched fading the residual leaks through and shows up as SINR
/// loss. Rows are the desired part of the left inverse of `[G_d | basis]`.
pub fn zero_forcing_decoder(
    d: &SchemeDescriptor,
    eff: &EffectiveChannels,
    tol: RankTolerance,
) -> Result<LinearDecoder, SchemeError> {
    let rx = eff.receiver;
    let measured = numerics::rank_relative_to(&eff.interference, eff.signal_scale(), tol);
    let k = measured.min(d.expected_interference_dims[rx]);
    let basis = numerics::dominant_subspace(&eff.interference, k);
    let stacked = Matrix::hstack(&[&eff.desired, &basis])?;
    let n_desired = eff.desired.cols();
    if stacked.cols() > stacked.rows() {
        return Err(SchemeError::DegenerateRealization { receiver: rx });
    }
    let inverse = numerics::left_inverse(&stacked, tol).map_err(|e| match e {
        NumericsError::SingularMatrix => SchemeError::DegenerateRealization { receiver: rx },
        other => SchemeError::Numerics(other),
    })?;
    Ok(LinearDecoder {
        receiver: rx,
        matrix: inverse.select_rows(&(0..n_desired).collect::<Vec<_>>()),
        streams: eff.desired_streams.clone(),
    })
}

/// Equal power per stream of each transmitter, as large as possible while
/// every slot's transmit power stays within `total_power`.
fn equal_split_powers(
    d: &SchemeDescriptor,
    precoders: &[Matrix],
    total_power: f64,
) -> Vec<f64> {
    let len = d.supersymbol_len;
    let per_tx: Vec<f64> = precoders
        .iter()
        .enumerate()
        .map(|(t, p)| {
            let ants = d.network.tx_antennas[t];
            let peak = (0..len)
                .map(|slot| {
                    (0..ants)
                        .flat_map(|a| p.row(slot * ants + a).iter())
                        .map(|z| z.norm_sqr())
                        .sum::<f64>()
                })
                .fold(0.0, f64::max);
            if peak > 0.0 {
                total_power / peak
            } else {
                0.0
            }
        })
        .collect();
    d.streams.iter().map(|s| per_tx[s.tx]).collect()
}

/// One of the alignment constructions.
pub trait Scheme: Send + Sync {
    fn descriptor(&self) -> &SchemeDescriptor;

    /// Unit-norm beamforming columns per transmitter, columns in the order of
    /// [`SchemeDescriptor::streams_of`]. May only read `csit`.
    fn beamformers(&self, csit: &Csit) -> Result<Vec<Matrix>, SchemeError>;

    /// Precoders with equal per-transmitter power split.
    fn precode(&self, csit: &Csit, total_power: f64) -> Result<PrecodedTransmission, SchemeError> {
        let d = self.descriptor();
        let precoders = self.beamformers(csit)?;
        let mut stream_columns = vec![(0, 0); d.streams.len()];
        for tx in 0..d.network.transmitters() {
            for (col, s) in d.streams_of(tx).into_iter().enumerate() {
                stream_columns[s] = (tx, col);
            }
        }
        let stream_powers = equal_split_powers(d, &precoders, total_power);
        Ok(PrecodedTransmission {
            precoders,
            stream_columns,
            stream_powers,
        })
    }

    fn build_decoder(
        &self,
        _tx: &PrecodedTransmission,
        eff: &EffectiveChannels,
        tol: RankTolerance,
    ) -> Result<LinearDecoder, SchemeError> {
        zero_forcing_decoder(self.descriptor(), eff, tol)
    }
}

/// Instantiates a scheme. `k` is required (and must be ≥ 2) for
/// [`SchemeId::KUserIc`] and ignored otherwise.
pub fn build_scheme(id: SchemeId, k: Option<usize>) -> Result<Box<dyn Scheme>, SchemeError> {
    Ok(match id {
        SchemeId::MisoBcOneSided => Box::new(MisoBcOneSided::new()),
        SchemeId::MisoBcNoCsit => Box::new(MisoBcNoCsit::new()),
        SchemeId::XChannel => Box::new(XChannel::new()),
        SchemeId::MimoIc1324 => Box::new(MimoIc1324::new()),
        SchemeId::KUserIc => {
            let k = k.ok_or_else(|| SchemeError::InvalidParameter("K_USER_IC needs K".into()))?;
            Box::new(KUserIc::new(k)?)
        }
        SchemeId::TdmaBaseline => Box::new(TdmaBaseline::new()),
    })
}

pub fn describe(id: SchemeId, k: Option<usize>) -> Result<SchemeDescriptor, SchemeError> {
    Ok(build_scheme(id, k)?.descriptor().clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip_through_strings() {
        for id in SchemeId::ALL {
            assert_eq!(id.as_str().parse::<SchemeId>().unwrap(), id);
        }
        assert_eq!("k-user-ic".parse::<SchemeId>().unwrap(), SchemeId::KUserIc);
        assert!(matches!(
            "MISO_BC".parse::<SchemeId>(),
            Err(SchemeError::UnknownScheme(_))
        ));
    }

    #[test]
    fn dof_arithmetic() {
        assert_eq!(Dof::new(2, 4), Dof::new(1, 2));
        assert_eq!(Dof::new(1, 1) + Dof::new(1, 2), Dof::new(3, 2));
        assert_eq!(Dof::new(4, 3).to_string(), "4/3");
        assert_eq!(Dof::new(2, 2).to_string(), "1");
    }

    #[test]
    fn k_user_requires_k() {
        assert!(build_scheme(SchemeId::KUserIc, None).is_err());
        assert!(build_scheme(SchemeId::KUserIc, Some(1)).is_err());
        assert!(build_scheme(SchemeId::KUserIc, Some(2)).is_ok());
    }
}
