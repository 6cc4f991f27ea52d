//! Staggered block fading.
//!
//! Each link's channel is piecewise constant over coherence blocks of
//! `length` slots whose boundaries are shifted by a per-link `offset`. A
//! scheme asks for a supersymbol: a handful of (possibly non-adjacent) slots
//! over which every constrained link is constant on some groups of slots and
//! changes between groups. [`find_supersymbol`] locates such a slot tuple and
//! [`sample_realization`] draws the coefficients.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{Field, Matrix, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChannelError {
    #[error("coherence length must be >= 1 and offset < length (got length {length}, offset {offset})")]
    InvalidPattern { length: usize, offset: usize },
    #[error("no coherence pattern given for constrained link {0}")]
    MissingPattern(LinkId),
    #[error("invalid equality template: {0}")]
    InvalidTemplate(String),
    #[error("search horizon {horizon} is shorter than the supersymbol length {len}")]
    HorizonTooShort { horizon: usize, len: usize },
    #[error("no supersymbol within {horizon} slots matches the required coherence structure")]
    NoSupersymbolFound { horizon: usize },
}

/// A transmitter → receiver link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkId {
    pub tx: usize,
    pub rx: usize,
}

impl LinkId {
    pub const fn new(tx: usize, rx: usize) -> Self {
        LinkId { tx, rx }
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tx{}->rx{}", self.tx, self.rx)
    }
}

/// Block-fading timing of one link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoherencePattern {
    pub link: LinkId,
    pub length: usize,
    pub offset: usize,
}

impl CoherencePattern {
    pub fn new(link: LinkId, length: usize, offset: usize) -> Result<Self, ChannelError> {
        if length == 0 || offset >= length {
            return Err(ChannelError::InvalidPattern { length, offset });
        }
        Ok(CoherencePattern {
            link,
            length,
            offset,
        })
    }

    /// Coherence block containing slot `t`. The partial block before the
    /// first boundary counts as block 0.
    pub fn block_index(&self, t: usize) -> usize {
        (t + (self.length - self.offset) % self.length) / self.length
    }
}

/// Assignment of supersymbol positions to equality classes.
///
/// Labels are canonical: classes are numbered in order of first appearance,
/// so two partitions are equal iff they group positions identically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition(Vec<usize>);

impl Partition {
    pub fn from_labels<I: IntoIterator<Item = usize>>(labels: I) -> Self {
        let mut seen: Vec<usize> = Vec::new();
        let canonical = labels
            .into_iter()
            .map(|l| match seen.iter().position(|&s| s == l) {
                Some(i) => i,
                None => {
                    seen.push(l);
                    seen.len() - 1
                }
            })
            .collect();
        Partition(canonical)
    }

    /// Builds a partition from classes of 1-based positions, e.g.
    /// `[[1], [2, 3]]`. Every position `1..=len` must appear exactly once.
    pub fn from_classes(len: usize, classes: &[&[usize]]) -> Result<Self, ChannelError> {
        let mut labels = vec![usize::MAX; len];
        for (c, class) in classes.iter().enumerate() {
            for &pos in class.iter() {
                if pos == 0 || pos > len {
                    return Err(ChannelError::InvalidTemplate(format!(
                        "position {pos} outside 1..={len}"
                    )));
                }
                if labels[pos - 1] != usize::MAX {
                    return Err(ChannelError::InvalidTemplate(format!(
                        "position {pos} appears in more than one class"
                    )));
                }
                labels[pos - 1] = c;
            }
        }
        if let Some(missing) = labels.iter().position(|&l| l == usize::MAX) {
            return Err(ChannelError::InvalidTemplate(format!(
                "position {} is not covered",
                missing + 1
            )));
        }
        Ok(Partition::from_labels(labels))
    }

    /// Every position in its own class (channel fresh in every slot).
    pub fn singletons(len: usize) -> Self {
        Partition((0..len).collect())
    }

    /// All positions in one class.
    pub fn constant(len: usize) -> Self {
        Partition(vec![0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn class_of(&self, position: usize) -> usize {
        self.0[position]
    }

    pub fn same_class(&self, a: usize, b: usize) -> bool {
        self.0[a] == self.0[b]
    }

    pub fn class_count(&self) -> usize {
        self.0.iter().max().map_or(0, |m| m + 1)
    }

    /// Classes as 0-based position lists.
    pub fn classes(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.class_count()];
        for (pos, &label) in self.0.iter().enumerate() {
            out[label].push(pos);
        }
        out
    }
}

/// Per-link equality template over a supersymbol of `len` slots. Links with
/// no template are unconstrained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EqualityRequirement {
    len: usize,
    templates: BTreeMap<LinkId, Partition>,
}

impl EqualityRequirement {
    pub fn new(len: usize, templates: BTreeMap<LinkId, Partition>) -> Result<Self, ChannelError> {
        if len == 0 {
            return Err(ChannelError::InvalidTemplate("empty supersymbol".into()));
        }
        if let Some((link, p)) = templates.iter().find(|(_, p)| p.len() != len) {
            return Err(ChannelError::InvalidTemplate(format!(
                "template for {link} covers {} positions, expected {len}",
                p.len()
            )));
        }
        Ok(EqualityRequirement { len, templates })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn template(&self, link: LinkId) -> Option<&Partition> {
        self.templates.get(&link)
    }

    pub fn templates(&self) -> impl Iterator<Item = (LinkId, &Partition)> {
        self.templates.iter().map(|(l, p)| (*l, p))
    }
}

/// Slots chosen for one supersymbol and the partition each patterned link
/// realises over them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupersymbolPlan {
    slots: Vec<usize>,
    partitions: BTreeMap<LinkId, Partition>,
}

impl SupersymbolPlan {
    /// Plan for an explicit slot tuple: each patterned link's partition is
    /// whatever its block boundaries induce over `slots`.
    pub fn from_slots(patterns: &[CoherencePattern], slots: Vec<usize>) -> Self {
        let partitions = patterns
            .iter()
            .map(|p| {
                let labels = slots.iter().map(|&t| p.block_index(t));
                (p.link, Partition::from_labels(labels))
            })
            .collect();
        SupersymbolPlan { slots, partitions }
    }

    pub fn slots(&self) -> &[usize] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Realised partition of `link`, or `None` for links without a pattern.
    pub fn partition(&self, link: LinkId) -> Option<&Partition> {
        self.partitions.get(&link)
    }

    /// True when every templated link realises exactly its template.
    pub fn satisfies(&self, req: &EqualityRequirement) -> bool {
        self.slots.len() == req.len()
            && req
                .templates()
                .all(|(link, t)| self.partitions.get(&link) == Some(t))
    }
}

/// Horizon used when the caller does not choose one: `4·L·max(T)`.
pub fn default_horizon(patterns: &[CoherencePattern], len: usize) -> usize {
    let max_t = patterns.iter().map(|p| p.length).max().unwrap_or(1);
    4 * len * max_t
}

/// Lexicographically first strictly increasing slot tuple in
/// `0..search_horizon` whose block structure matches `req` on every
/// templated link. Slots need not be adjacent.
pub fn find_supersymbol(
    patterns: &[CoherencePattern],
    req: &EqualityRequirement,
    search_horizon: usize,
) -> Result<SupersymbolPlan, ChannelError> {
    let len = req.len();
    if search_horizon < len {
        return Err(ChannelError::HorizonTooShort {
            horizon: search_horizon,
            len,
        });
    }
    let mut constrained = Vec::new();
    for (link, template) in req.templates() {
        let pattern = patterns
            .iter()
            .find(|p| p.link == link)
            .ok_or(ChannelError::MissingPattern(link))?;
        constrained.push((pattern, template));
    }

    let mut slots = Vec::with_capacity(len);
    if extend(&constrained, len, search_horizon, &mut slots) {
        Ok(SupersymbolPlan::from_slots(patterns, slots))
    } else {
        Err(ChannelError::NoSupersymbolFound {
            horizon: search_horizon,
        })
    }
}

fn extend(
    constrained: &[(&CoherencePattern, &Partition)],
    len: usize,
    horizon: usize,
    slots: &mut Vec<usize>,
) -> bool {
    let pos = slots.len();
    if pos == len {
        return true;
    }
    let start = slots.last().map_or(0, |&s| s + 1);
    // leave room for the remaining positions
    let end = horizon - (len - pos - 1);
    for t in start..end {
        let consistent = constrained.iter().all(|(pattern, template)| {
            let block = pattern.block_index(t);
            slots.iter().enumerate().all(|(q, &s)| {
                template.same_class(q, pos) == (pattern.block_index(s) == block)
            })
        });
        if consistent {
            slots.push(t);
            if extend(constrained, len, horizon, slots) {
                return true;
            }
            slots.pop();
        }
    }
    false
}

/// Antenna counts of every node. Links exist between every transmitter and
/// every receiver.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Network {
    pub tx_antennas: Vec<usize>,
    pub rx_antennas: Vec<usize>,
}

impl Network {
    pub fn transmitters(&self) -> usize {
        self.tx_antennas.len()
    }

    pub fn receivers(&self) -> usize {
        self.rx_antennas.len()
    }

    pub fn links(&self) -> impl Iterator<Item = LinkId> + '_ {
        (0..self.transmitters())
            .flat_map(move |tx| (0..self.receivers()).map(move |rx| LinkId::new(tx, rx)))
    }

    /// `(receive antennas, transmit antennas)` of a link's channel matrix.
    pub fn link_shape(&self, link: LinkId) -> (usize, usize) {
        (self.rx_antennas[link.rx], self.tx_antennas[link.tx])
    }
}

/// Channel matrices of every link at every supersymbol position.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    field: Field,
    epsilon: f64,
    matrices: BTreeMap<LinkId, Vec<Matrix>>,
}

impl ChannelRealization {
    pub fn new(field: Field, epsilon: f64, matrices: BTreeMap<LinkId, Vec<Matrix>>) -> Self {
        ChannelRealization {
            field,
            epsilon,
            matrices,
        }
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Channel of `link` at 0-based supersymbol `position`.
    pub fn get(&self, link: LinkId, position: usize) -> &Matrix {
        &self.matrices[&link][position]
    }

    pub fn set(&mut self, link: LinkId, position: usize, value: Matrix) {
        self.matrices.get_mut(&link).expect("unknown link")[position] = value;
    }

    pub fn links(&self) -> impl Iterator<Item = LinkId> + '_ {
        self.matrices.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.matrices.values().next().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Within-class bitwise equality and between-class difference for every
    /// link, judged against `partition_of(link)`.
    pub fn matches_partitions<'a>(&self, partition_of: impl Fn(LinkId) -> &'a Partition) -> bool {
        self.matrices.iter().all(|(&link, mats)| {
            let p = partition_of(link);
            (0..mats.len()).all(|a| {
                (a + 1..mats.len()).all(|b| p.same_class(a, b) == (mats[a] == mats[b]))
            })
        })
    }
}

/// Partition used when sampling `link` under `plan`: the realised partition
/// for patterned links, fresh-per-slot otherwise.
pub fn sampling_partition(plan: &SupersymbolPlan, link: LinkId) -> Partition {
    plan.partition(link)
        .cloned()
        .unwrap_or_else(|| Partition::singletons(plan.len()))
}

fn gaussian(rng: &mut ChaCha8Rng, field: Field) -> Scalar {
    match field {
        Field::Real => Complex64::new(rng.sample(StandardNormal), 0.0),
        Field::Complex => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(s * re, s * im)
        }
    }
}

/// Draws one channel realization over `plan`.
///
/// One unit-variance Gaussian per (link, equality class, entry), shared by
/// every slot of the class; each slot then gets an independent perturbation
/// of standard deviation `epsilon`. Class draws and perturbations come from
/// separate streams of the same seed, so realizations that differ only in
/// `epsilon` share their unperturbed part.
pub fn sample_realization(
    plan: &SupersymbolPlan,
    network: &Network,
    field: Field,
    epsilon: f64,
    seed: u64,
) -> ChannelRealization {
    assert!(epsilon >= 0.0, "perturbation level must be non-negative");
    let mut base_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perturb_rng = ChaCha8Rng::seed_from_u64(seed);
    perturb_rng.set_stream(1);

    let len = plan.len();
    let mut matrices = BTreeMap::new();
    for link in network.links() {
        let (rows, cols) = network.link_shape(link);
        let partition = sampling_partition(plan, link);
        let class_draws: Vec<Matrix> = (0..partition.class_count())
            .map(|_| Matrix::from_fn(rows, cols, |_, _| gaussian(&mut base_rng, field)))
            .collect();
        let per_slot: Vec<Matrix> = (0..len)
            .map(|pos| {
                let base = &class_draws[partition.class_of(pos)];
                if epsilon == 0.0 {
                    base.clone()
                } else {
                    Matrix::from_fn(rows, cols, |i, j| {
                        base[(i, j)] + gaussian(&mut perturb_rng, field) * epsilon
                    })
                }
            })
            .collect();
        matrices.insert(link, per_slot);
    }
    ChannelRealization::new(field, epsilon, matrices)
}

/// Seed of trial `trial` in an experiment with seed `master`.
///
/// Trials are seeded independently of evaluation order so that any subset can
/// be re-run in isolation (SplitMix64 finaliser over the pair).
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    let mut z = master
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(trial)
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
