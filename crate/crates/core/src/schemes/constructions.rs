use std::collections::BTreeMap;

use num_complex::Complex64;

use super::{
    distributed_support, zero_forcing_decoder, Csit, CsitDeclaration, Dof, EffectiveChannels,
    LinearDecoder, MessageSpec, PrecodedTransmission, Scheme, SchemeDescriptor, SchemeError,
    SchemeId, StreamSpec,
};
use crate::channel::{CoherencePattern, EqualityRequirement, LinkId, Network, Partition};
use crate::numerics::{self, Matrix, NumericsError, RankTolerance};

const COHERENCE: usize = 2;

fn pattern(tx: usize, rx: usize, offset: usize) -> CoherencePattern {
    CoherencePattern::new(LinkId::new(tx, rx), COHERENCE, offset).expect("static pattern")
}

fn classes(len: usize, c: &[&[usize]]) -> Partition {
    Partition::from_classes(len, c).expect("static template")
}

fn requirement(len: usize, templates: Vec<(LinkId, Partition)>) -> EqualityRequirement {
    EqualityRequirement::new(len, templates.into_iter().collect::<BTreeMap<_, _>>())
        .expect("static requirement")
}

/// Matrix whose columns are the given 0/1 indicator vectors scaled to unit
/// norm.
fn indicator_columns(rows: usize, supports: &[&[usize]]) -> Matrix {
    let mut m = Matrix::zeros(rows, supports.len());
    for (c, support) in supports.iter().enumerate() {
        let v = 1.0 / (support.len() as f64).sqrt();
        for &r in support.iter() {
            m[(r, c)] = Complex64::new(v, 0.0);
        }
    }
    m
}

fn message(tx: usize, rx: usize, num: u32, den: u32) -> MessageSpec {
    MessageSpec {
        tx,
        rx,
        claimed_dof: Dof::new(num, den),
    }
}

fn stream(tx: usize, message: usize) -> StreamSpec {
    StreamSpec { tx, message }
}

/// Two-antenna broadcast channel where the transmitter knows user 1's
/// channel in the first supersymbol slot. User 1 gets two repeated streams;
/// user 2's stream is zero-forced at user 1 in slot 1 and transmitted only
/// there, so user 1's streams align along `[1, 1]` at user 2 whose channel
/// does not change across the supersymbol.
#[derive(Debug, Clone)]
pub struct MisoBcOneSided {
    descriptor: SchemeDescriptor,
}

impl MisoBcOneSided {
    pub fn new() -> Self {
        let len = 2;
        let descriptor = SchemeDescriptor {
            id: SchemeId::MisoBcOneSided,
            k: None,
            network: Network {
                tx_antennas: vec![2],
                rx_antennas: vec![1, 1],
            },
            supersymbol_len: len,
            messages: vec![message(0, 0, 1, 1), message(0, 1, 1, 2)],
            streams: vec![stream(0, 0), stream(0, 0), stream(0, 1)],
            requirement: requirement(
                len,
                vec![
                    (LinkId::new(0, 0), classes(len, &[&[1], &[2]])),
                    (LinkId::new(0, 1), classes(len, &[&[1, 2]])),
                ],
            ),
            default_patterns: vec![pattern(0, 0, 0), pattern(0, 1, 1)],
            csit: CsitDeclaration(vec![(LinkId::new(0, 0), 0)]),
            expected_interference_dims: vec![0, 1],
        };
        MisoBcOneSided { descriptor }
    }
}

impl Default for MisoBcOneSided {
    fn default() -> Self {
        Self::new()
    }
}

impl Scheme for MisoBcOneSided {
    fn descriptor(&self) -> &SchemeDescriptor {
        &self.descriptor
    }

    fn beamformers(&self, csit: &Csit) -> Result<Vec<Matrix>, SchemeError> {
        let h = csit.get(LinkId::new(0, 0), 0)?;
        let (h1, h2) = (h[(0, 0)], h[(0, 1)]);
        let norm = (h1.norm_sqr() + h2.norm_sqr()).sqrt();
        if norm == 0.0 {
            return Err(SchemeError::DegenerateRealization { receiver: 0 });
        }
        let mut p = indicator_columns(4, &[&[0, 2], &[1, 3], &[]]);
        p[(0, 2)] = h2 / norm;
        p[(1, 2)] = -h1 / norm;
        Ok(vec![p])
    }
}

/// Joint beamformers of the two-user broadcast scheme without CSIT:
/// user 1 repeats over slots 1–2, user 2 over slots 2–3.
fn no_csit_joint_beamformer() -> Matrix {
    indicator_columns(6, &[&[0, 2], &[1, 3], &[2, 4], &[3, 5]])
}

/// Two-antenna broadcast channel with no CSIT over a three-slot supersymbol.
#[derive(Debug, Clone)]
pub struct MisoBcNoCsit {
    descriptor: SchemeDescriptor,
}

impl MisoBcNoCsit {
    pub fn new() -> Self {
        let len = 3;
        let descriptor = SchemeDescriptor {
            id: SchemeId::MisoBcNoCsit,
            k: None,
            network: Network {
                tx_antennas: vec![2],
                rx_antennas: vec![1, 1],
            },
            supersymbol_len: len,
            messages: vec![message(0, 0, 2, 3), message(0, 1, 2, 3)],
            streams: vec![stream(0, 0), stream(0, 0), stream(0, 1), stream(0, 1)],
            requirement: requirement(
                len,
                vec![
                    (LinkId::new(0, 0), classes(len, &[&[1], &[2, 3]])),
                    (LinkId::new(0, 1), classes(len, &[&[1, 2], &[3]])),
                ],
            ),
            default_patterns: vec![pattern(0, 0, 1), pattern(0, 1, 0)],
            csit: CsitDeclaration::none(),
            expected_interference_dims: vec![1, 1],
        };
        MisoBcNoCsit { descriptor }
    }
}

impl Default for MisoBcNoCsit {
    fn default() -> Self {
        Self::new()
    }
}

impl Scheme for MisoBcNoCsit {
    fn descriptor(&self) -> &SchemeDescriptor {
        &self.descriptor
    }

    fn beamformers(&self, _csit: &Csit) -> Result<Vec<Matrix>, SchemeError> {
        Ok(vec![no_csit_joint_beamformer()])
    }
}

/// The broadcast scheme without CSIT run over two separate single-antenna
/// transmitters. Each joint beamforming column must live on a single
/// antenna, which is what lets the transmitters act independently.
#[derive(Debug, Clone)]
pub struct XChannel {
    descriptor: SchemeDescriptor,
}

impl XChannel {
    pub fn new() -> Self {
        let len = 3;
        let into_rx0 = classes(len, &[&[1], &[2, 3]]);
        let into_rx1 = classes(len, &[&[1, 2], &[3]]);
        let descriptor = SchemeDescriptor {
            id: SchemeId::XChannel,
            k: None,
            network: Network {
                tx_antennas: vec![1, 1],
                rx_antennas: vec![1, 1],
            },
            supersymbol_len: len,
            // messages W11, W21, W12, W22 (transmitter, receiver)
            messages: vec![
                message(0, 0, 1, 3),
                message(1, 0, 1, 3),
                message(0, 1, 1, 3),
                message(1, 1, 1, 3),
            ],
            // stream order matches the joint broadcast beamformer columns
            streams: vec![stream(0, 0), stream(1, 1), stream(0, 2), stream(1, 3)],
            requirement: requirement(
                len,
                vec![
                    (LinkId::new(0, 0), into_rx0.clone()),
                    (LinkId::new(1, 0), into_rx0),
                    (LinkId::new(0, 1), into_rx1.clone()),
                    (LinkId::new(1, 1), into_rx1),
                ],
            ),
            default_patterns: vec![
                pattern(0, 0, 1),
                pattern(1, 0, 1),
                pattern(0, 1, 0),
                pattern(1, 1, 0),
            ],
            csit: CsitDeclaration::none(),
            expected_interference_dims: vec![1, 1],
        };
        XChannel { descriptor }
    }
}

impl Default for XChannel {
    fn default() -> Self {
        Self::new()
    }
}

impl Scheme for XChannel {
    fn descriptor(&self) -> &SchemeDescriptor {
        &self.descriptor
    }

    fn beamformers(&self, _csit: &Csit) -> Result<Vec<Matrix>, SchemeError> {
        let d = &self.descriptor;
        let joint = no_csit_joint_beamformer();
        let owners = distributed_support(&d.network, &joint)?;
        let per_slot = d.network.transmitters();
        (0..d.network.transmitters())
            .map(|tx| {
                let cols = d.streams_of(tx);
                if let Some(&bad) = cols.iter().find(|&&s| owners[s] != tx) {
                    return Err(SchemeError::DistributedSupportViolation { column: bad });
                }
                Ok(Matrix::from_fn(d.supersymbol_len, cols.len(), |slot, j| {
                    joint[(slot * per_slot + tx, cols[j])]
                }))
            })
            .collect()
    }
}

/// Two-user MIMO interference channel with 1 and 3 transmit antennas and
/// 2 and 4 receive antennas. Transmitter 2 repeats three streams over the
/// supersymbol so they occupy two dimensions at receiver 1; transmitter 1
/// sends a fresh symbol each slot.
#[derive(Debug, Clone)]
pub struct MimoIc1324 {
    descriptor: SchemeDescriptor,
}

impl MimoIc1324 {
    pub fn new() -> Self {
        let len = 2;
        let descriptor = SchemeDescriptor {
            id: SchemeId::MimoIc1324,
            k: None,
            network: Network {
                tx_antennas: vec![1, 3],
                rx_antennas: vec![2, 4],
            },
            supersymbol_len: len,
            messages: vec![message(0, 0, 1, 1), message(1, 1, 3, 2)],
            streams: vec![
                stream(0, 0),
                stream(0, 0),
                stream(1, 1),
                stream(1, 1),
                stream(1, 1),
            ],
            // receiver 2's links are left unconstrained
            requirement: requirement(
                len,
                vec![
                    (LinkId::new(0, 0), classes(len, &[&[1], &[2]])),
                    (LinkId::new(1, 0), classes(len, &[&[1, 2]])),
                ],
            ),
            default_patterns: vec![pattern(0, 0, 0), pattern(1, 0, 1)],
            csit: CsitDeclaration::none(),
            expected_interference_dims: vec![2, 2],
        };
        MimoIc1324 { descriptor }
    }

    /// Receiver 2: invert the square `[desired | interference]` channel in
    /// each slot separately and average the two estimates of the repeated
    /// streams.
    fn per_slot_inversion(
        &self,
        eff: &EffectiveChannels,
        tol: RankTolerance,
    ) -> Result<LinearDecoder, SchemeError> {
        let len = self.descriptor.supersymbol_len;
        let rx_ants = self.descriptor.network.rx_antennas[eff.receiver];
        let n_desired = eff.desired.cols();
        let mut matrix = Matrix::zeros(n_desired, rx_ants * len);
        for slot in 0..len {
            let rows: Vec<usize> = (slot * rx_ants..(slot + 1) * rx_ants).collect();
            // the interfering stream active in this slot
            let active: Vec<usize> = (0..eff.interference.cols())
                .filter(|&c| rows.iter().any(|&r| eff.interference[(r, c)].norm() != 0.0))
                .collect();
            let block = Matrix::hstack(&[
                &eff.desired.select_rows(&rows),
                &eff.interference.select_rows(&rows).select_columns(&active),
            ])?;
            let inv = numerics::solve(&block, &Matrix::identity(rx_ants), tol).map_err(|e| {
                match e {
                    NumericsError::SingularMatrix | NumericsError::NotSquare { .. } => {
                        SchemeError::DegenerateRealization {
                            receiver: eff.receiver,
                        }
                    }
                    other => SchemeError::Numerics(other),
                }
            })?;
            let weight = Complex64::new(1.0 / len as f64, 0.0);
            for i in 0..n_desired {
                for (j, &r) in rows.iter().enumerate() {
                    matrix[(i, r)] = inv[(i, j)] * weight;
                }
            }
        }
        Ok(LinearDecoder {
            receiver: eff.receiver,
            matrix,
            streams: eff.desired_streams.clone(),
        })
    }
}

impl Default for MimoIc1324 {
    fn default() -> Self {
        Self::new()
    }
}

impl Scheme for MimoIc1324 {
    fn descriptor(&self) -> &SchemeDescriptor {
        &self.descriptor
    }

    fn beamformers(&self, _csit: &Csit) -> Result<Vec<Matrix>, SchemeError> {
        Ok(vec![
            Matrix::identity(2),
            indicator_columns(6, &[&[0, 3], &[1, 4], &[2, 5]]),
        ])
    }

    fn build_decoder(
        &self,
        _tx: &PrecodedTransmission,
        eff: &EffectiveChannels,
        tol: RankTolerance,
    ) -> Result<LinearDecoder, SchemeError> {
        if eff.receiver == 1 {
            self.per_slot_inversion(eff, tol)
        } else {
            zero_forcing_decoder(&self.descriptor, eff, tol)
        }
    }
}

/// K-user single-antenna interference channel. Direct links change across
/// the two-slot supersymbol while cross links stay fixed, so every
/// transmitter repeating its symbol aligns all interference along `[1, 1]`.
#[derive(Debug, Clone)]
pub struct KUserIc {
    descriptor: SchemeDescriptor,
}

impl KUserIc {
    pub fn new(k: usize) -> Result<Self, SchemeError> {
        if k < 2 {
            return Err(SchemeError::InvalidParameter(format!(
                "K_USER_IC needs K >= 2, got {k}"
            )));
        }
        let len = 2;
        let mut templates = Vec::new();
        let mut patterns = Vec::new();
        for tx in 0..k {
            for rx in 0..k {
                let (template, offset) = if tx == rx {
                    (classes(len, &[&[1], &[2]]), 0)
                } else {
                    (classes(len, &[&[1, 2]]), 1)
                };
                templates.push((LinkId::new(tx, rx), template));
                patterns.push(pattern(tx, rx, offset));
            }
        }
        let descriptor = SchemeDescriptor {
            id: SchemeId::KUserIc,
            k: Some(k),
            network: Network {
                tx_antennas: vec![1; k],
                rx_antennas: vec![1; k],
            },
            supersymbol_len: len,
            messages: (0..k).map(|i| message(i, i, 1, 2)).collect(),
            streams: (0..k).map(|i| stream(i, i)).collect(),
            requirement: requirement(len, templates),
            default_patterns: patterns,
            csit: CsitDeclaration::none(),
            expected_interference_dims: vec![1; k],
        };
        Ok(KUserIc { descriptor })
    }
}

impl Scheme for KUserIc {
    fn descriptor(&self) -> &SchemeDescriptor {
        &self.descriptor
    }

    fn beamformers(&self, _csit: &Csit) -> Result<Vec<Matrix>, SchemeError> {
        let repeat = indicator_columns(2, &[&[0, 1]]);
        Ok(vec![repeat; self.descriptor.network.transmitters()])
    }
}

/// Orthogonal time division on the two-user broadcast channel: user k is
/// served alone from antenna 1 in slot k.
#[derive(Debug, Clone)]
pub struct TdmaBaseline {
    descriptor: SchemeDescriptor,
}

impl TdmaBaseline {
    pub fn new() -> Self {
        let len = 2;
        let descriptor = SchemeDescriptor {
            id: SchemeId::TdmaBaseline,
            k: None,
            network: Network {
                tx_antennas: vec![2],
                rx_antennas: vec![1, 1],
            },
            supersymbol_len: len,
            messages: vec![message(0, 0, 1, 2), message(0, 1, 1, 2)],
            streams: vec![stream(0, 0), stream(0, 1)],
            requirement: requirement(len, Vec::new()),
            default_patterns: Vec::new(),
            csit: CsitDeclaration::none(),
            expected_interference_dims: vec![1, 1],
        };
        TdmaBaseline { descriptor }
    }
}

impl Default for TdmaBaseline {
    fn default() -> Self {
        Self::new()
    }
}

impl Scheme for TdmaBaseline {
    fn descriptor(&self) -> &SchemeDescriptor {
        &self.descriptor
    }

    fn beamformers(&self, _csit: &Csit) -> Result<Vec<Matrix>, SchemeError> {
        Ok(vec![indicator_columns(4, &[&[0], &[2]])])
    }
}
