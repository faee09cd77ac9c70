//! Compilation of a trajectory problem into a minimization QUBO, its Ising
//! equivalent, and the artifact file that carries both between CLI stages.
//!
//! Conventions:
//! * energy of a bit vector is `xᵀQx + offset` with `Q` symmetric;
//! * linear terms sit on the diagonal (`x² = x`);
//! * the compiled energy equals `−(objective + penalty)` of the decoded
//!   trajectory, so lower energy is a better trajectory.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoding::{EncodingKind, EncodingScheme};
use crate::error::{Error, Result};
use crate::model::{self, ProblemSpec, TradeMode, Trajectory};
use crate::provenance::Provenance;

/// Dense symmetric QUBO with a constant offset.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticProgram {
    dimension: usize,
    matrix: Vec<f64>,
    pub offset: f64,
}

impl QuadraticProgram {
    pub fn zeros(dimension: usize) -> Self {
        QuadraticProgram {
            dimension,
            matrix: vec![0.0; dimension * dimension],
            offset: 0.0,
        }
    }

    /// From a full row-major matrix; the matrix is symmetrised as `(Q+Qᵀ)/2`,
    /// which leaves `xᵀQx` unchanged.
    pub fn from_dense(rows: &[Vec<f64>], offset: f64) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("QUBO matrix must be square".into()));
        }
        let mut qp = QuadraticProgram::zeros(n);
        for i in 0..n {
            for j in 0..n {
                qp.matrix[i * n + j] = 0.5 * (rows[i][j] + rows[j][i]);
            }
        }
        qp.offset = offset;
        Ok(qp)
    }

    /// From upper-triangular polynomial terms: energy contribution of
    /// `(i, j, v)` is `v·x_i·x_j`.
    pub fn from_terms(dimension: usize, terms: &[(usize, usize, f64)], offset: f64) -> Result<Self> {
        let mut qp = QuadraticProgram::zeros(dimension);
        for &(i, j, v) in terms {
            if i >= dimension || j >= dimension {
                return Err(Error::Range(format!("term ({i},{j}) outside dimension {dimension}")));
            }
            if i == j {
                qp.matrix[i * dimension + i] += v;
            } else {
                qp.matrix[i * dimension + j] += 0.5 * v;
                qp.matrix[j * dimension + i] += 0.5 * v;
            }
        }
        qp.offset = offset;
        Ok(qp)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.dimension + j]
    }

    pub fn set_symmetric(&mut self, i: usize, j: usize, v: f64) {
        let n = self.dimension;
        self.matrix[i * n + j] = v;
        self.matrix[j * n + i] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.matrix
    }

    /// Nonzero upper-triangular polynomial terms (`i ≤ j`).
    pub fn terms(&self) -> Vec<(usize, usize, f64)> {
        let n = self.dimension;
        let mut out = Vec::new();
        for i in 0..n {
            for j in i..n {
                let q = self.get(i, j);
                if q != 0.0 {
                    out.push((i, j, if i == j { q } else { 2.0 * q }));
                }
            }
        }
        out
    }

    /// `xᵀQx + offset`.
    pub fn evaluate(&self, bits: &[u8]) -> Result<f64> {
        if bits.len() != self.dimension {
            return Err(Error::Shape(format!(
                "expected {} bits, got {}",
                self.dimension,
                bits.len()
            )));
        }
        Ok(self.energy_unchecked(bits))
    }

    pub(crate) fn energy_unchecked(&self, bits: &[u8]) -> f64 {
        let n = self.dimension;
        let mut acc = 0.0;
        for i in 0..n {
            if bits[i] == 0 {
                continue;
            }
            let row = self.row(i);
            acc += row[i];
            for j in (i + 1)..n {
                if bits[j] != 0 {
                    acc += 2.0 * row[j];
                }
            }
        }
        acc + self.offset
    }

    /// Fraction of off-diagonal pairs with a nonzero coupler.
    pub fn density(&self) -> Result<f64> {
        let n = self.dimension;
        if n < 2 {
            return Err(Error::Range("density needs at least two variables".into()));
        }
        Ok(self.coupler_count() as f64 / (n * (n - 1) / 2) as f64)
    }

    pub fn coupler_count(&self) -> usize {
        let n = self.dimension;
        (0..n)
            .map(|i| ((i + 1)..n).filter(|&j| self.get(i, j) != 0.0).count())
            .sum()
    }

    /// Problem-graph edges: pairs `i < j` with a nonzero coupler.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.dimension;
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.get(i, j) != 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn max_abs_asymmetry(&self) -> f64 {
        let n = self.dimension;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// `E(s) = Σ h_i s_i + Σ_{i<j} J_ij s_i s_j + offset` over `s ∈ {−1, +1}ⁿ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsingModel {
    pub h: Vec<f64>,
    /// Upper-triangular couplings keyed by `(i, j)` with `i < j`.
    #[serde(with = "coupling_list")]
    pub couplings: BTreeMap<(usize, usize), f64>,
    pub offset: f64,
}

mod coupling_list {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &BTreeMap<(usize, usize), f64>, s: S) -> Result<S::Ok, S::Error> {
        let list: Vec<(usize, usize, f64)> = m.iter().map(|(&(i, j), &v)| (i, j, v)).collect();
        list.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<(usize, usize), f64>, D::Error> {
        let list: Vec<(usize, usize, f64)> = Vec::deserialize(d)?;
        Ok(list.into_iter().map(|(i, j, v)| ((i.min(j), i.max(j)), v)).collect())
    }
}

impl IsingModel {
    pub fn new(n: usize) -> Self {
        IsingModel {
            h: vec![0.0; n],
            couplings: BTreeMap::new(),
            offset: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        self.couplings
            .get(&(i.min(j), i.max(j)))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn add_coupling(&mut self, i: usize, j: usize, v: f64) {
        assert_ne!(i, j, "Ising couplings have zero diagonal");
        *self.couplings.entry((i.min(j), i.max(j))).or_insert(0.0) += v;
    }

    pub fn energy(&self, spins: &[i8]) -> Result<f64> {
        if spins.len() != self.h.len() {
            return Err(Error::Shape(format!(
                "expected {} spins, got {}",
                self.h.len(),
                spins.len()
            )));
        }
        Ok(self.energy_unchecked(spins))
    }

    pub(crate) fn energy_unchecked(&self, spins: &[i8]) -> f64 {
        let mut e = self.offset;
        for (hi, &s) in self.h.iter().zip(spins) {
            e += hi * f64::from(s);
        }
        for (&(i, j), &v) in &self.couplings {
            e += v * f64::from(spins[i]) * f64::from(spins[j]);
        }
        e
    }

    /// Largest absolute field or coupling.
    pub fn max_abs_coefficient(&self) -> f64 {
        self.h
            .iter()
            .chain(self.couplings.values())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Neighbour lists `(j, J_ij)` for every spin.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.h.len()];
        for (&(i, j), &v) in &self.couplings {
            if v != 0.0 {
                adj[i].push((j, v));
                adj[j].push((i, v));
            }
        }
        adj
    }
}

pub fn spins_from_bits(bits: &[u8]) -> Vec<i8> {
    bits.iter().map(|&b| if b != 0 { 1 } else { -1 }).collect()
}

pub fn bits_from_spins(spins: &[i8]) -> Vec<u8> {
    spins.iter().map(|&s| u8::from(s > 0)).collect()
}

/// Substitutes `x = (s+1)/2`.
pub fn qubo_to_ising(qp: &QuadraticProgram) -> IsingModel {
    let n = qp.dimension();
    let mut ising = IsingModel::new(n);
    ising.offset = qp.offset;
    for i in 0..n {
        let qii = qp.get(i, i);
        ising.h[i] += 0.5 * qii;
        ising.offset += 0.5 * qii;
        for j in (i + 1)..n {
            let qij = qp.get(i, j);
            if qij == 0.0 {
                continue;
            }
            // 2·Q_ij·x_i·x_j = (Q_ij/2)(s_i s_j + s_i + s_j + 1)
            ising.add_coupling(i, j, 0.5 * qij);
            ising.h[i] += 0.5 * qij;
            ising.h[j] += 0.5 * qij;
            ising.offset += 0.5 * qij;
        }
    }
    ising
}

/// Substitutes `s = 2x − 1`.
pub fn ising_to_qubo(ising: &IsingModel) -> QuadraticProgram {
    let n = ising.len();
    let mut qp = QuadraticProgram::zeros(n);
    let mut offset = ising.offset;
    let mut diag: Vec<f64> = ising.h.iter().map(|h| 2.0 * h).collect();
    offset -= ising.h.iter().sum::<f64>();
    for (&(i, j), &v) in &ising.couplings {
        // J s_i s_j = J(4 x_i x_j − 2x_i − 2x_j + 1)
        qp.set_symmetric(i, j, 2.0 * v);
        diag[i] -= 2.0 * v;
        diag[j] -= 2.0 * v;
        offset += v;
    }
    for (i, d) in diag.into_iter().enumerate() {
        qp.set_symmetric(i, i, d);
    }
    qp.offset = offset;
    qp
}

/// What a binary variable of a compiled program stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum VariableRole {
    Holding { asset: usize, step: usize, bit: usize },
    Partition { step: usize, index: usize },
    Slack { step: usize, bit: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlackKind {
    #[default]
    Binary,
    Unary,
}

/// Slack bits used to turn the liquidation inequality into an equality.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlackLayout {
    pub kind: SlackKind,
    pub weights: Vec<u64>,
}

/// Maps bit indices back to trajectory structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableLayout {
    pub n_assets: usize,
    pub n_steps: usize,
    pub encoding: EncodingScheme,
    #[serde(default)]
    pub slack: Option<SlackLayout>,
    pub variable_map: Vec<VariableRole>,
}

impl VariableLayout {
    fn build(n_assets: usize, n_steps: usize, encoding: EncodingScheme, slack: Option<SlackLayout>) -> Self {
        let mut roles = Vec::new();
        match encoding.kind {
            EncodingKind::Partition => {
                for step in 0..n_steps {
                    for index in 0..encoding.bit_depth {
                        roles.push(VariableRole::Partition { step, index });
                    }
                }
            }
            _ => {
                for step in 0..n_steps {
                    for asset in 0..n_assets {
                        for bit in 0..encoding.bit_depth {
                            roles.push(VariableRole::Holding { asset, step, bit });
                        }
                    }
                }
            }
        }
        if let Some(s) = &slack {
            for step in 0..n_steps {
                for bit in 0..s.weights.len() {
                    roles.push(VariableRole::Slack { step, bit });
                }
            }
        }
        VariableLayout {
            n_assets,
            n_steps,
            encoding,
            slack,
            variable_map: roles,
        }
    }

    pub fn dimension(&self) -> usize {
        self.variable_map.len()
    }

    fn holding_index(&self, asset: usize, step: usize, bit: usize) -> usize {
        (step * self.n_assets + asset) * self.encoding.bit_depth + bit
    }

    fn partition_index(&self, step: usize, index: usize) -> usize {
        step * self.encoding.bit_depth + index
    }

    fn slack_index(&self, step: usize, bit: usize) -> usize {
        let base = self.n_steps
            * match self.encoding.kind {
                EncodingKind::Partition => self.encoding.bit_depth,
                _ => self.n_assets * self.encoding.bit_depth,
            };
        let width = self.slack.as_ref().map_or(0, |s| s.weights.len());
        base + step * width + bit
    }

    /// Holding `w_nt` as an affine function of the bits.
    fn holding_expr(&self, asset: usize, step: usize) -> Affine {
        let enc = &self.encoding;
        match enc.kind {
            EncodingKind::Partition => {
                let parts = enc.partitions.as_deref().unwrap_or_default();
                Affine::linear(
                    parts
                        .iter()
                        .enumerate()
                        .filter(|(_, p)| p[asset] != 0)
                        .map(|(idx, p)| (self.partition_index(step, idx), p[asset] as f64))
                        .collect(),
                )
            }
            _ => Affine::linear(
                enc.weights
                    .iter()
                    .enumerate()
                    .map(|(bit, &w)| (self.holding_index(asset, step, bit), w as f64))
                    .collect(),
            ),
        }
    }

    fn slack_expr(&self, step: usize) -> Affine {
        match &self.slack {
            None => Affine::constant(0.0),
            Some(s) => Affine::linear(
                s.weights
                    .iter()
                    .enumerate()
                    .map(|(bit, &w)| (self.slack_index(step, bit), w as f64))
                    .collect(),
            ),
        }
    }
}

/// `constant + Σ coef·x_var`.
#[derive(Clone, Debug, Default)]
struct Affine {
    constant: f64,
    terms: Vec<(usize, f64)>,
}

impl Affine {
    fn constant(c: f64) -> Self {
        Affine {
            constant: c,
            terms: Vec::new(),
        }
    }

    fn linear(terms: Vec<(usize, f64)>) -> Self {
        Affine { constant: 0.0, terms }
    }

    fn plus(mut self, other: &Affine, scale: f64) -> Self {
        self.constant += scale * other.constant;
        self.terms
            .extend(other.terms.iter().map(|&(i, c)| (i, scale * c)));
        self
    }
}

/// Accumulates a quadratic pseudo-boolean polynomial.
struct PolyBuilder {
    n: usize,
    linear: Vec<f64>,
    pairs: Vec<f64>,
    constant: f64,
}

impl PolyBuilder {
    fn new(n: usize) -> Self {
        PolyBuilder {
            n,
            linear: vec![0.0; n],
            pairs: vec![0.0; n * n],
            constant: 0.0,
        }
    }

    fn add_scaled(&mut self, a: &Affine, weight: f64) {
        if weight == 0.0 {
            return;
        }
        self.constant += weight * a.constant;
        for &(i, c) in &a.terms {
            self.linear[i] += weight * c;
        }
    }

    /// Adds `weight · a · b`.
    fn add_product(&mut self, a: &Affine, b: &Affine, weight: f64) {
        if weight == 0.0 {
            return;
        }
        self.constant += weight * a.constant * b.constant;
        for &(j, cb) in &b.terms {
            self.linear[j] += weight * a.constant * cb;
        }
        for &(i, ca) in &a.terms {
            self.linear[i] += weight * b.constant * ca;
        }
        for &(i, ca) in &a.terms {
            for &(j, cb) in &b.terms {
                let v = weight * ca * cb;
                if i == j {
                    self.linear[i] += v;
                } else {
                    self.pairs[i.min(j) * self.n + i.max(j)] += v;
                }
            }
        }
    }

    fn finish(self) -> QuadraticProgram {
        let n = self.n;
        let mut qp = QuadraticProgram::zeros(n);
        for i in 0..n {
            qp.set_symmetric(i, i, self.linear[i]);
            for j in (i + 1)..n {
                let v = self.pairs[i * n + j];
                if v != 0.0 {
                    qp.set_symmetric(i, j, 0.5 * v);
                }
            }
        }
        qp.offset = self.constant;
        qp
    }
}

/// A compiled program together with the layout needed to decode it.
#[derive(Clone, Debug, PartialEq)]
pub struct CompiledQubo {
    pub program: QuadraticProgram,
    pub layout: VariableLayout,
}

pub fn compile(spec: &ProblemSpec, scheme: &EncodingScheme) -> Result<CompiledQubo> {
    compile_with_slack(spec, scheme, SlackKind::Binary)
}

fn check_scheme(spec: &ProblemSpec, scheme: &EncodingScheme) -> Result<()> {
    if scheme.max_value != spec.max_holding {
        return Err(Error::Invalid(format!(
            "encoding built for K'={} but the spec has K'={}",
            scheme.max_value, spec.max_holding
        )));
    }
    if scheme.kind == EncodingKind::Partition {
        if spec.trade_mode != TradeMode::Rebalance {
            return Err(Error::Invalid(
                "partition encoding requires the budget equality (rebalance mode)".into(),
            ));
        }
        let parts = scheme
            .partitions
            .as_ref()
            .ok_or_else(|| Error::Invalid("partition scheme without partitions".into()))?;
        if parts.is_empty() {
            return Err(Error::Invalid("no admissible partitions for this budget".into()));
        }
        for p in parts {
            if p.len() != spec.n_assets
                || p.iter().sum::<u64>() != spec.budget
                || p.iter().any(|&v| v > spec.max_holding)
            {
                return Err(Error::Invalid(format!("partition {p:?} does not fit the spec")));
            }
        }
    } else if scheme.weights.len() != scheme.bit_depth {
        return Err(Error::Invalid("encoding weights and bit depth disagree".into()));
    }
    Ok(())
}

pub fn compile_with_slack(
    spec: &ProblemSpec,
    scheme: &EncodingScheme,
    slack_kind: SlackKind,
) -> Result<CompiledQubo> {
    spec.validate()?;
    check_scheme(spec, scheme)?;
    let slack = match spec.trade_mode {
        TradeMode::Liquidate if scheme.kind.is_linear() => Some(SlackLayout {
            kind: slack_kind,
            weights: match slack_kind {
                SlackKind::Binary => (0..crate::encoding::binary_depth(spec.budget))
                    .map(|d| 1u64 << d)
                    .collect(),
                SlackKind::Unary => vec![1; spec.budget as usize],
            },
        }),
        _ => None,
    };
    let layout = VariableLayout::build(spec.n_assets, spec.n_steps, scheme.clone(), slack);
    let (n_assets, n_steps) = (spec.n_assets, spec.n_steps);
    let w: Vec<Vec<Affine>> = (0..n_assets)
        .map(|n| (0..n_steps).map(|t| layout.holding_expr(n, t)).collect())
        .collect();
    let mut poly = PolyBuilder::new(layout.dimension());
    let gamma = spec.risk_aversion;

    for t in 0..n_steps {
        for n in 0..n_assets {
            poly.add_scaled(&w[n][t], -spec.returns[n][t]);
            let prev = if t == 0 {
                Affine::constant(spec.initial_holdings[n] as f64)
            } else {
                w[n][t - 1].clone()
            };
            let delta = w[n][t].clone().plus(&prev, -1.0);
            poly.add_product(&delta, &delta, spec.temp_cost[n][t]);
            poly.add_product(&delta, &w[n][t], -spec.perm_cost[n][t]);
        }
        if spec.risk_mode == model::RiskMode::Covariance {
            let page = &spec.covariance[t];
            for i in 0..n_assets {
                for j in 0..n_assets {
                    poly.add_product(&w[i][t], &w[j][t], 0.5 * gamma * page[i][j]);
                }
            }
        }
    }
    if spec.risk_mode == model::RiskMode::SampleVariance && gamma != 0.0 {
        let steps = n_steps as f64;
        let stream: Vec<Affine> = (0..n_steps)
            .map(|t| {
                (0..n_assets).fold(Affine::default(), |acc, n| acc.plus(&w[n][t], spec.returns[n][t]))
            })
            .collect();
        for r in &stream {
            poly.add_product(r, r, gamma / steps);
        }
        let total = stream.iter().fold(Affine::default(), |acc, r| acc.plus(r, 1.0));
        poly.add_product(&total, &total, -gamma / (steps * steps));
    }
    if let Some(fin) = &spec.final_holdings {
        let last = n_steps - 1;
        for n in 0..n_assets {
            let target = Affine::constant(fin[n] as f64);
            let delta = target.clone().plus(&w[n][last], -1.0);
            poly.add_product(&delta, &delta, spec.temp_cost[n][last]);
            poly.add_product(&delta, &target, -spec.perm_cost[n][last]);
        }
    }

    let m = spec.penalty_strength;
    for t in 0..n_steps {
        let gap = match scheme.kind {
            EncodingKind::Partition => {
                // one-hot: (Σ_p x_pt − 1)²
                let hot = Affine::linear(
                    (0..scheme.bit_depth)
                        .map(|p| (layout.partition_index(t, p), 1.0))
                        .collect(),
                );
                hot.plus(&Affine::constant(1.0), -1.0)
            }
            _ => {
                let mut gap = Affine::constant(spec.budget as f64);
                for row in &w {
                    gap = gap.plus(&row[t], -1.0);
                }
                gap.plus(&layout.slack_expr(t), -1.0)
            }
        };
        poly.add_product(&gap, &gap, m);
    }

    Ok(CompiledQubo {
        program: poly.finish(),
        layout,
    })
}

/// A bit vector read back as a trajectory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodedSolution {
    pub trajectory: Trajectory,
    /// `Σ_p x_pt·partition_p` for the partition kind; identical to
    /// `trajectory` for linear kinds.
    pub superposed: Trajectory,
    pub slack: Option<Vec<u64>>,
    /// Hot-bit count per step (partition kind only).
    pub hot_counts: Option<Vec<usize>>,
}

impl DecodedSolution {
    /// False when a partition step has zero or several hot bits.
    pub fn well_formed(&self) -> bool {
        self.hot_counts
            .as_ref()
            .is_none_or(|c| c.iter().all(|&h| h == 1))
    }

    pub fn is_feasible(&self, spec: &ProblemSpec) -> bool {
        self.well_formed() && model::is_feasible(spec, &self.trajectory)
    }
}

pub fn decode_solution(layout: &VariableLayout, bits: &[u8]) -> Result<DecodedSolution> {
    if bits.len() != layout.dimension() {
        return Err(Error::Shape(format!(
            "expected {} bits, got {}",
            layout.dimension(),
            bits.len()
        )));
    }
    let (n_assets, n_steps) = (layout.n_assets, layout.n_steps);
    let enc = &layout.encoding;
    let mut traj = Trajectory::zeros(n_assets, n_steps);
    let mut superposed = Trajectory::zeros(n_assets, n_steps);
    let mut hot_counts = None;
    match enc.kind {
        EncodingKind::Partition => {
            let parts = enc.partitions.as_deref().unwrap_or_default();
            let mut counts = Vec::with_capacity(n_steps);
            for t in 0..n_steps {
                let hot: Vec<usize> = (0..enc.bit_depth)
                    .filter(|&p| bits[layout.partition_index(t, p)] != 0)
                    .collect();
                counts.push(hot.len());
                if let Some(&first) = hot.first() {
                    for n in 0..n_assets {
                        traj.holdings[n][t] = parts[first][n];
                    }
                }
                for &p in &hot {
                    for n in 0..n_assets {
                        superposed.holdings[n][t] += parts[p][n];
                    }
                }
            }
            hot_counts = Some(counts);
        }
        _ => {
            for t in 0..n_steps {
                for n in 0..n_assets {
                    let value: u64 = enc
                        .weights
                        .iter()
                        .enumerate()
                        .map(|(d, &f)| f * u64::from(bits[layout.holding_index(n, t, d)]))
                        .sum();
                    traj.holdings[n][t] = value;
                }
            }
            superposed = traj.clone();
        }
    }
    let slack = layout.slack.as_ref().map(|s| {
        (0..n_steps)
            .map(|t| {
                s.weights
                    .iter()
                    .enumerate()
                    .map(|(d, &f)| f * u64::from(bits[layout.slack_index(t, d)]))
                    .sum()
            })
            .collect()
    });
    Ok(DecodedSolution {
        trajectory: traj,
        superposed,
        slack,
        hot_counts,
    })
}

/// Inverse of [`decode_solution`] for a trajectory the encoding can express.
/// Liquidation slack is set to the remaining budget at each step.
pub fn encode_trajectory(layout: &VariableLayout, spec: &ProblemSpec, traj: &Trajectory) -> Result<Vec<u8>> {
    spec.check_trajectory(traj)?;
    let mut bits = vec![0u8; layout.dimension()];
    let enc = &layout.encoding;
    match enc.kind {
        EncodingKind::Partition => {
            let parts = enc.partitions.as_deref().unwrap_or_default();
            for t in 0..layout.n_steps {
                let col = traj.column(t);
                let idx = parts
                    .iter()
                    .position(|p| *p == col)
                    .ok_or_else(|| Error::Range(format!("step {t} holdings {col:?} are not a partition")))?;
                bits[layout.partition_index(t, idx)] = 1;
            }
        }
        _ => {
            for t in 0..layout.n_steps {
                for n in 0..layout.n_assets {
                    let code = enc.encode_value(traj.holdings[n][t])?;
                    for (d, b) in code.into_iter().enumerate() {
                        bits[layout.holding_index(n, t, d)] = b;
                    }
                }
            }
        }
    }
    if let Some(s) = &layout.slack {
        let slack_scheme = EncodingScheme {
            kind: match s.kind {
                SlackKind::Binary => EncodingKind::Binary,
                SlackKind::Unary => EncodingKind::Unary,
            },
            weights: s.weights.clone(),
            bit_depth: s.weights.len(),
            max_value: s.weights.iter().sum(),
            partitions: None,
        };
        for t in 0..layout.n_steps {
            let rest = spec.budget.saturating_sub(traj.step_total(t));
            let code = slack_scheme.encode_value(rest)?;
            for (d, b) in code.into_iter().enumerate() {
                bits[layout.slack_index(t, d)] = b;
            }
        }
    }
    Ok(bits)
}

/// `−(objective + penalty)` of a decoded bit vector, computed through the
/// integer model rather than the compiled matrix.
pub fn integer_energy(spec: &ProblemSpec, decoded: &DecodedSolution) -> Result<f64> {
    let obj = model::objective(spec, &decoded.superposed)?;
    let pen = match (&decoded.hot_counts, &decoded.slack) {
        (Some(counts), _) => {
            -spec.penalty_strength
                * counts
                    .iter()
                    .map(|&h| {
                        let g = h as f64 - 1.0;
                        g * g
                    })
                    .sum::<f64>()
        }
        (None, Some(slack)) => model::slack_penalty(spec, &decoded.superposed, slack)?,
        (None, None) => model::penalty(spec, &decoded.superposed)?,
    };
    Ok(-(obj + pen))
}

pub const QUBO_FORMAT: &str = "trajq-qubo/1";

/// On-disk form of a compiled program.
///
/// `terms` lists `(i, j, value)` with `i ≤ j`; the energy of a bit vector is
/// `offset + Σ value·x_i·x_j` (diagonal entries are the linear terms).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuboArtifact {
    pub format: String,
    pub dimension: usize,
    pub offset: f64,
    pub terms: Vec<(usize, usize, f64)>,
    pub variable_map: Vec<VariableRole>,
    pub n_assets: usize,
    pub n_steps: usize,
    pub encoding: EncodingScheme,
    #[serde(default)]
    pub slack: Option<SlackLayout>,
    pub spec: ProblemSpec,
    pub provenance: Provenance,
}

impl QuboArtifact {
    pub fn new(compiled: &CompiledQubo, spec: &ProblemSpec, seed: Option<u64>) -> Self {
        QuboArtifact {
            format: QUBO_FORMAT.to_string(),
            dimension: compiled.program.dimension(),
            offset: compiled.program.offset,
            terms: compiled.program.terms(),
            variable_map: compiled.layout.variable_map.clone(),
            n_assets: compiled.layout.n_assets,
            n_steps: compiled.layout.n_steps,
            encoding: compiled.layout.encoding.clone(),
            slack: compiled.layout.slack.clone(),
            spec: spec.clone(),
            provenance: Provenance::of_json(spec, seed),
        }
    }

    pub fn compiled(&self) -> Result<CompiledQubo> {
        if self.format != QUBO_FORMAT {
            return Err(Error::Invalid(format!("unsupported artifact format '{}'", self.format)));
        }
        let program = QuadraticProgram::from_terms(self.dimension, &self.terms, self.offset)?;
        let layout = VariableLayout {
            n_assets: self.n_assets,
            n_steps: self.n_steps,
            encoding: self.encoding.clone(),
            slack: self.slack.clone(),
            variable_map: self.variable_map.clone(),
        };
        if layout.dimension() != self.dimension {
            return Err(Error::Shape("variable_map length differs from dimension".into()));
        }
        Ok(CompiledQubo { program, layout })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}
