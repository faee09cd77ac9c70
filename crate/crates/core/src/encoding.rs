//! Integer-to-binary encodings.
//!
//! The linear kinds write a holding as `w = Σ_d f(d)·x_d` for a fixed weight
//! list `f`. The partition kind instead assigns one indicator bit per
//! admissible allocation of the whole budget at a step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingKind {
    Binary,
    Unary,
    Sequential,
    Modified,
    Partition,
}

impl EncodingKind {
    pub const ALL: [EncodingKind; 5] = [
        EncodingKind::Binary,
        EncodingKind::Unary,
        EncodingKind::Sequential,
        EncodingKind::Modified,
        EncodingKind::Partition,
    ];

    pub fn is_linear(self) -> bool {
        self != EncodingKind::Partition
    }

    pub fn name(self) -> &'static str {
        match self {
            EncodingKind::Binary => "binary",
            EncodingKind::Unary => "unary",
            EncodingKind::Sequential => "sequential",
            EncodingKind::Modified => "modified",
            EncodingKind::Partition => "partition",
        }
    }
}

impl std::fmt::Display for EncodingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EncodingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EncodingKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Invalid(format!("unknown encoding '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingScheme {
    pub kind: EncodingKind,
    /// `f(1..=D)`; empty for the partition kind.
    pub weights: Vec<u64>,
    pub bit_depth: usize,
    /// Largest holding the scheme is meant to represent (`K'`).
    pub max_value: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partitions: Option<Vec<Vec<u64>>>,
}

/// Bits needed for plain binary: `⌈log₂(K'+1)⌉`.
pub fn binary_depth(max_value: u64) -> usize {
    (u64::BITS - max_value.leading_zeros()) as usize
}

/// Smallest `D` with `D(D+1)/2 ≥ K'`, i.e. `⌈(√(1+8K')−1)/2⌉` without
/// floating point.
pub fn sequential_depth(max_value: u64) -> usize {
    let mut d = 0u64;
    while d * (d + 1) / 2 < max_value {
        d += 1;
    }
    d as usize
}

/// Doubling-with-duplication weights `1, 1, 2, 2, 4, 8, …`, each clipped so
/// that the running total lands exactly on `max_value`.
pub fn modified_weights(max_value: u64) -> Vec<u64> {
    let mut weights = Vec::new();
    let mut total = 0u64;
    let mut step = 0usize;
    while total < max_value {
        let candidate = match step {
            0 | 1 => 1,
            2 | 3 => 2,
            s => 1u64 << (s - 2),
        };
        let w = candidate.min(max_value - total);
        weights.push(w);
        total += w;
        step += 1;
    }
    weights
}

pub fn build_encoding(
    kind: EncodingKind,
    max_value: u64,
    budget: u64,
    n_assets: usize,
) -> Result<EncodingScheme> {
    let weights = match kind {
        EncodingKind::Binary => (0..binary_depth(max_value)).map(|d| 1u64 << d).collect(),
        EncodingKind::Unary => vec![1; max_value as usize],
        EncodingKind::Sequential => (1..=sequential_depth(max_value) as u64).collect(),
        EncodingKind::Modified => modified_weights(max_value),
        EncodingKind::Partition => {
            if n_assets == 0 {
                return Err(Error::Invalid("partition encoding needs n_assets ≥ 1".into()));
            }
            let parts = enumerate_partitions(budget, n_assets, max_value);
            return Ok(EncodingScheme {
                kind,
                weights: Vec::new(),
                bit_depth: parts.len(),
                max_value,
                partitions: Some(parts),
            });
        }
    };
    Ok(EncodingScheme {
        kind,
        bit_depth: weights.len(),
        weights,
        max_value,
        partitions: None,
    })
}

impl EncodingScheme {
    fn require_linear(&self) -> Result<()> {
        if self.kind.is_linear() {
            Ok(())
        } else {
            Err(Error::Invalid("operation needs a linear encoding".into()))
        }
    }

    /// Largest value any bit vector decodes to.
    pub fn max_decodable(&self) -> u64 {
        self.weights.iter().sum()
    }

    /// Whether the decodable values are exactly `0..=max_value`.
    pub fn is_exact(&self) -> bool {
        match self.kind {
            EncodingKind::Partition => true,
            _ => {
                let reach = subset_sum_counts(&self.weights);
                self.max_decodable() == self.max_value && reach.iter().all(|&c| c > 0)
            }
        }
    }

    /// Canonical bit vector for `value`: among all representations, the one
    /// whose set of 1-positions comes first lexicographically.
    pub fn encode_value(&self, value: u64) -> Result<Vec<u8>> {
        self.require_linear()?;
        if value > self.max_value {
            return Err(Error::Range(format!(
                "value {value} outside 0..={}",
                self.max_value
            )));
        }
        let d = self.weights.len();
        // suffix[i][s]: can weights[i..] sum to s
        let top = self.max_decodable() as usize;
        let mut suffix = vec![vec![false; top + 1]; d + 1];
        suffix[d][0] = true;
        for i in (0..d).rev() {
            let w = self.weights[i] as usize;
            for s in 0..=top {
                suffix[i][s] = suffix[i + 1][s] || (s >= w && suffix[i + 1][s - w]);
            }
        }
        let mut remaining = value as usize;
        if remaining > top || !suffix[0][remaining] {
            return Err(Error::Range(format!("value {value} is not representable")));
        }
        let mut bits = vec![0u8; d];
        for i in 0..d {
            let w = self.weights[i] as usize;
            if remaining >= w && suffix[i + 1][remaining - w] {
                bits[i] = 1;
                remaining -= w;
            }
        }
        Ok(bits)
    }

    pub fn decode_bits(&self, bits: &[u8]) -> Result<u64> {
        self.require_linear()?;
        if bits.len() != self.weights.len() {
            return Err(Error::Shape(format!(
                "expected {} bits, got {}",
                self.weights.len(),
                bits.len()
            )));
        }
        Ok(self
            .weights
            .iter()
            .zip(bits)
            .map(|(&w, &b)| w * u64::from(b))
            .sum())
    }

    /// Number of bit vectors decoding to `value`.
    pub fn redundancy(&self, value: u64) -> Result<u64> {
        self.require_linear()?;
        let counts = subset_sum_counts(&self.weights);
        Ok(counts.get(value as usize).copied().unwrap_or(0))
    }
}

/// `counts[s]` = number of subsets of `weights` summing to `s`.
fn subset_sum_counts(weights: &[u64]) -> Vec<u64> {
    let top: u64 = weights.iter().sum();
    let mut counts = vec![0u64; top as usize + 1];
    counts[0] = 1;
    for &w in weights {
        let w = w as usize;
        for s in (w..counts.len()).rev() {
            counts[s] += counts[s - w];
        }
    }
    counts
}

/// Binary variables needed for an `N × T` trajectory.
pub fn variable_count(
    kind: EncodingKind,
    n_assets: usize,
    n_steps: usize,
    budget: u64,
    max_value: u64,
) -> usize {
    let per_holding = match kind {
        EncodingKind::Binary => binary_depth(max_value),
        EncodingKind::Unary => max_value as usize,
        EncodingKind::Sequential => sequential_depth(max_value),
        EncodingKind::Modified => modified_weights(max_value).len(),
        EncodingKind::Partition => {
            return n_steps * count_partitions(budget, n_assets, max_value) as usize
        }
    };
    n_steps * n_assets * per_holding
}

/// `C(K+N−1, N−1)`, the partition-count ceiling with no holding cap.
pub fn partition_bound(budget: u64, n_assets: usize) -> u128 {
    let k = budget as u128;
    let r = n_assets.saturating_sub(1) as u128;
    let mut acc: u128 = 1;
    for i in 1..=r {
        acc = acc * (k + i) / i;
    }
    acc
}

/// Outcome of the noise-capacity estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capacity {
    Bounded(u64),
    Unbounded,
}

/// Worst-case largest integer representable when the annealer's relative
/// precision is `ε` and the coefficient ratio is `δ`, with `n = 1/√(εδ)`.
pub fn largest_representable(kind: EncodingKind, epsilon: f64, delta: f64) -> Result<Capacity> {
    largest_representable_capped(kind, epsilon, delta, 1u64 << 53)
}

/// As [`largest_representable`], reporting `Unbounded` once the bound
/// passes `cap`.
pub fn largest_representable_capped(
    kind: EncodingKind,
    epsilon: f64,
    delta: f64,
    cap: u64,
) -> Result<Capacity> {
    if !(epsilon > 0.0 && delta > 0.0) || !epsilon.is_finite() || !delta.is_finite() {
        return Err(Error::Range("epsilon and delta must be positive".into()));
    }
    let n = 1.0 / (epsilon * delta).sqrt();
    // absorb rounding in 1/sqrt so exact squares floor correctly
    let floor_n = (n + 1e-9).floor();
    let floor_2n = (2.0 * n + 1e-9).floor();
    let value = match kind {
        EncodingKind::Unary => return Ok(Capacity::Unbounded),
        EncodingKind::Binary | EncodingKind::Modified => floor_2n - 1.0,
        EncodingKind::Sequential => floor_n * (floor_n + 1.0) / 2.0,
        EncodingKind::Partition => floor_n,
    };
    if !value.is_finite() || value > cap as f64 {
        Ok(Capacity::Unbounded)
    } else {
        Ok(Capacity::Bounded(value.max(0.0) as u64))
    }
}

/// All compositions of `budget` into `n_assets` parts, each `≤ max_value`,
/// in lexicographic order.
pub fn enumerate_partitions(budget: u64, n_assets: usize, max_value: u64) -> Vec<Vec<u64>> {
    let mut out = Vec::new();
    if n_assets == 0 || (n_assets as u64).saturating_mul(max_value) < budget {
        return out;
    }
    let mut current = Vec::with_capacity(n_assets);
    fill_partitions(budget, n_assets, max_value, &mut current, &mut out);
    out
}

fn fill_partitions(
    remaining: u64,
    slots: usize,
    cap: u64,
    current: &mut Vec<u64>,
    out: &mut Vec<Vec<u64>>,
) {
    if slots == 1 {
        if remaining <= cap {
            current.push(remaining);
            out.push(current.clone());
            current.pop();
        }
        return;
    }
    let rest_cap = cap.saturating_mul(slots as u64 - 1);
    let lo = remaining.saturating_sub(rest_cap);
    for v in lo..=remaining.min(cap) {
        current.push(v);
        fill_partitions(remaining - v, slots - 1, cap, current, out);
        current.pop();
    }
}

fn count_partitions(budget: u64, n_assets: usize, max_value: u64) -> u64 {
    // dp over assets: ways[s] = compositions of s into the assets seen so far
    if n_assets == 0 {
        return 0;
    }
    let k = budget as usize;
    let mut ways = vec![0u64; k + 1];
    ways[0] = 1;
    for _ in 0..n_assets {
        let mut next = vec![0u64; k + 1];
        for (s, &count) in ways.iter().enumerate() {
            if count == 0 {
                continue;
            }
            for v in 0..=(max_value as usize).min(k - s) {
                next[s + v] += count;
            }
        }
        ways = next;
    }
    ways[k]
}
