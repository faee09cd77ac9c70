//! The integer trajectory problem: holdings of `N` assets over `T` steps,
//! scored by forecast returns, risk, temporary and permanent market impact.
//!
//! Everything at this layer follows the maximization convention: a larger
//! [`objective`] is a better trajectory. The binary layer (`qubo`) negates it.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskMode {
    /// `w_tᵀ Σ_t w_t` per step from the forecast covariance tensor.
    Covariance,
    /// Population variance of the realised returns stream `r_t = μ_tᵀ w_t`.
    SampleVariance,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TradeMode {
    /// Every step holds exactly `budget` units.
    Rebalance,
    /// Every step holds at most `budget` units and the position is unwound to
    /// `final_holdings` (zero) after the last step.
    Liquidate,
}

/// A full instance of the trajectory problem.
///
/// Matrices are row-major nested vectors: `returns[n][t]`, `temp_cost[n][t]`,
/// `perm_cost[n][t]` and `covariance[t][n][m]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub n_assets: usize,
    pub n_steps: usize,
    pub budget: u64,
    pub max_holding: u64,
    pub returns: Vec<Vec<f64>>,
    pub risk_aversion: f64,
    pub covariance: Vec<Vec<Vec<f64>>>,
    pub temp_cost: Vec<Vec<f64>>,
    pub perm_cost: Vec<Vec<f64>>,
    pub initial_holdings: Vec<u64>,
    #[serde(default)]
    pub final_holdings: Option<Vec<u64>>,
    pub penalty_strength: f64,
    pub risk_mode: RiskMode,
    pub trade_mode: TradeMode,
}

/// Integer holdings `holdings[n][t]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Trajectory {
    pub holdings: Vec<Vec<u64>>,
}

impl Trajectory {
    pub fn zeros(n_assets: usize, n_steps: usize) -> Self {
        Trajectory {
            holdings: vec![vec![0; n_steps]; n_assets],
        }
    }

    /// Builds a trajectory from per-step columns (`columns[t][n]`).
    pub fn from_columns(columns: &[Vec<u64>]) -> Self {
        let n_assets = columns.first().map_or(0, Vec::len);
        let holdings = (0..n_assets)
            .map(|n| columns.iter().map(|col| col[n]).collect())
            .collect();
        Trajectory { holdings }
    }

    pub fn n_assets(&self) -> usize {
        self.holdings.len()
    }

    pub fn n_steps(&self) -> usize {
        self.holdings.first().map_or(0, Vec::len)
    }

    pub fn column(&self, t: usize) -> Vec<u64> {
        self.holdings.iter().map(|row| row[t]).collect()
    }

    pub fn step_total(&self, t: usize) -> u64 {
        self.holdings.iter().map(|row| row[t]).sum()
    }

    /// Holdings flattened step-major, used for deterministic tie-breaking.
    pub fn flattened(&self) -> Vec<u64> {
        (0..self.n_steps()).flat_map(|t| self.column(t)).collect()
    }
}

fn check_matrix(name: &str, m: &[Vec<f64>], rows: usize, cols: usize) -> Result<()> {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        return Err(Error::Shape(format!("{name} must be {rows}x{cols}")));
    }
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!("{name} contains non-finite values")));
    }
    Ok(())
}

impl ProblemSpec {
    /// Checks dimensions and the structural invariants of the instance.
    pub fn validate(&self) -> Result<()> {
        let (n, t) = (self.n_assets, self.n_steps);
        if n == 0 || t == 0 {
            return Err(Error::Invalid("n_assets and n_steps must be positive".into()));
        }
        if self.max_holding > self.budget {
            return Err(Error::Invalid(format!(
                "max_holding {} exceeds budget {}",
                self.max_holding, self.budget
            )));
        }
        check_matrix("returns", &self.returns, n, t)?;
        check_matrix("temp_cost", &self.temp_cost, n, t)?;
        check_matrix("perm_cost", &self.perm_cost, n, t)?;
        if self.temp_cost.iter().flatten().any(|&c| c < 0.0) {
            return Err(Error::Invalid("temp_cost must be non-negative".into()));
        }
        if self.covariance.len() != t {
            return Err(Error::Shape(format!("covariance must have {t} pages")));
        }
        for (step, page) in self.covariance.iter().enumerate() {
            check_matrix(&format!("covariance[{step}]"), page, n, n)?;
            for i in 0..n {
                for j in 0..i {
                    let (a, b) = (page[i][j], page[j][i]);
                    let scale = a.abs().max(b.abs()).max(1.0);
                    if (a - b).abs() > 1e-12 * scale {
                        return Err(Error::Invalid(format!(
                            "covariance[{step}] is not symmetric at ({i},{j})"
                        )));
                    }
                }
            }
        }
        if !(self.risk_aversion.is_finite() && self.risk_aversion >= 0.0) {
            return Err(Error::Invalid("risk_aversion must be a non-negative number".into()));
        }
        if !(self.penalty_strength.is_finite() && self.penalty_strength > 0.0) {
            return Err(Error::Invalid("penalty_strength must be positive".into()));
        }
        if self.initial_holdings.len() != n {
            return Err(Error::Shape(format!("initial_holdings must have length {n}")));
        }
        if let Some(fin) = &self.final_holdings {
            if fin.len() != n {
                return Err(Error::Shape(format!("final_holdings must have length {n}")));
            }
        }
        if self.trade_mode == TradeMode::Liquidate {
            match &self.final_holdings {
                Some(fin) if fin.iter().all(|&v| v == 0) => {}
                _ => {
                    return Err(Error::Invalid(
                        "liquidate mode requires all-zero final_holdings".into(),
                    ))
                }
            }
        }
        Ok(())
    }

    pub fn check_trajectory(&self, traj: &Trajectory) -> Result<()> {
        if traj.holdings.len() != self.n_assets
            || traj.holdings.iter().any(|r| r.len() != self.n_steps)
        {
            return Err(Error::Shape(format!(
                "trajectory must be {}x{}",
                self.n_assets, self.n_steps
            )));
        }
        Ok(())
    }

    /// Holdings of asset `n` before step `t` (0-based), i.e. `w_{t-1}`.
    fn previous(&self, traj: &Trajectory, n: usize, t: usize) -> u64 {
        if t == 0 {
            self.initial_holdings[n]
        } else {
            traj.holdings[n][t - 1]
        }
    }

    /// Forecast return of the portfolio at step `t`: `μ_tᵀ w_t`.
    pub fn step_return(&self, traj: &Trajectory, t: usize) -> f64 {
        (0..self.n_assets)
            .map(|n| self.returns[n][t] * traj.holdings[n][t] as f64)
            .sum()
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: ProblemSpec = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }
}

/// Objective value of `traj`; higher is better.
///
/// When `final_holdings` is present the transaction-cost and permanent-impact
/// sums include a virtual step `T+1` priced with the step-`T` coefficients;
/// the returns and risk terms do not extend.
pub fn objective(spec: &ProblemSpec, traj: &Trajectory) -> Result<f64> {
    spec.check_trajectory(traj)?;
    let (n_assets, n_steps) = (spec.n_assets, spec.n_steps);
    let mut total = 0.0;
    for t in 0..n_steps {
        total += spec.step_return(traj, t);
        if spec.risk_mode == RiskMode::Covariance {
            total -= 0.5 * spec.risk_aversion * risk_covariance(spec, traj, t)?;
        }
        for n in 0..n_assets {
            let w = traj.holdings[n][t] as f64;
            let dw = w - spec.previous(traj, n, t) as f64;
            total -= spec.temp_cost[n][t] * dw * dw;
            total += spec.perm_cost[n][t] * dw * w;
        }
    }
    if spec.risk_mode == RiskMode::SampleVariance {
        total -= risk_sample_variance(spec, traj)?;
    }
    if let Some(fin) = &spec.final_holdings {
        let last = n_steps - 1;
        for n in 0..n_assets {
            let w = fin[n] as f64;
            let dw = w - traj.holdings[n][last] as f64;
            total -= spec.temp_cost[n][last] * dw * dw;
            total += spec.perm_cost[n][last] * dw * w;
        }
    }
    Ok(total)
}

/// `w_tᵀ Σ_t w_t` for the 0-based step `t`, unscaled by the risk aversion.
pub fn risk_covariance(spec: &ProblemSpec, traj: &Trajectory, t: usize) -> Result<f64> {
    spec.check_trajectory(traj)?;
    if t >= spec.n_steps {
        return Err(Error::Range(format!("step {t} outside 0..{}", spec.n_steps)));
    }
    let page = &spec.covariance[t];
    let mut acc = 0.0;
    for i in 0..spec.n_assets {
        let wi = traj.holdings[i][t] as f64;
        if wi == 0.0 {
            continue;
        }
        for j in 0..spec.n_assets {
            acc += wi * page[i][j] * traj.holdings[j][t] as f64;
        }
    }
    Ok(acc)
}

/// `γ · Var(r)` for the returns stream `r_t = μ_tᵀ w_t`, using the population
/// variance `⟨r²⟩ − ⟨r⟩²`.
pub fn risk_sample_variance(spec: &ProblemSpec, traj: &Trajectory) -> Result<f64> {
    spec.check_trajectory(traj)?;
    let t = spec.n_steps as f64;
    let r: Vec<f64> = (0..spec.n_steps).map(|s| spec.step_return(traj, s)).collect();
    let sum: f64 = r.iter().sum();
    let mut acc = 0.0;
    for &rt in &r {
        acc += rt * rt - rt * sum / t;
    }
    Ok(spec.risk_aversion / t * acc)
}

/// Budget equality (rebalance) or inequality (liquidate) at every step, and
/// the per-asset holding cap.
pub fn is_feasible(spec: &ProblemSpec, traj: &Trajectory) -> bool {
    if spec.check_trajectory(traj).is_err() {
        return false;
    }
    let capped = traj.holdings.iter().flatten().all(|&w| w <= spec.max_holding);
    let budget_ok = (0..spec.n_steps).all(|t| {
        let total = traj.step_total(t);
        match spec.trade_mode {
            TradeMode::Rebalance => total == spec.budget,
            TradeMode::Liquidate => total <= spec.budget,
        }
    });
    capped && budget_ok
}

/// Squared budget violation summed over steps, in exact integer arithmetic.
///
/// In liquidate mode only the excess over the budget counts, which is the
/// squared residual left after the best admissible slack value.
pub fn budget_violation(spec: &ProblemSpec, traj: &Trajectory) -> u128 {
    (0..spec.n_steps)
        .map(|t| {
            let total = i128::from(traj.step_total(t));
            let k = i128::from(spec.budget);
            let gap = match spec.trade_mode {
                TradeMode::Rebalance => k - total,
                TradeMode::Liquidate => (total - k).max(0),
            };
            (gap * gap) as u128
        })
        .sum()
}

/// `−M Σ_t (K − Σ_n w_nt)²`; zero iff the budget holds at every step.
pub fn penalty(spec: &ProblemSpec, traj: &Trajectory) -> Result<f64> {
    spec.check_trajectory(traj)?;
    Ok(-spec.penalty_strength * budget_violation(spec, traj) as f64)
}

/// Liquidation penalty for an explicit per-step slack assignment:
/// `−M Σ_t (K − Σ_n w_nt − s_t)²`.
pub fn slack_penalty(spec: &ProblemSpec, traj: &Trajectory, slack: &[u64]) -> Result<f64> {
    spec.check_trajectory(traj)?;
    if slack.len() != spec.n_steps {
        return Err(Error::Shape(format!("slack must have length {}", spec.n_steps)));
    }
    let total: f64 = (0..spec.n_steps)
        .map(|t| {
            let gap = spec.budget as f64 - traj.step_total(t) as f64 - slack[t] as f64;
            gap * gap
        })
        .sum();
    Ok(-spec.penalty_strength * total)
}

/// Triangle-inequality bound on `|objective|` over the box `0 ≤ w ≤ K'`.
pub fn objective_magnitude_bound(spec: &ProblemSpec) -> f64 {
    let cap = spec.max_holding as f64;
    let (n_assets, n_steps) = (spec.n_assets, spec.n_steps);
    let mut bound = 0.0;
    for t in 0..n_steps {
        let mut step_return = 0.0;
        for n in 0..n_assets {
            step_return += spec.returns[n][t].abs() * cap;
            let prev_cap = if t == 0 {
                cap.max(spec.initial_holdings[n] as f64)
            } else {
                cap
            };
            bound += spec.temp_cost[n][t].abs() * prev_cap * prev_cap;
            bound += spec.perm_cost[n][t].abs() * prev_cap * cap;
        }
        bound += step_return;
        if spec.risk_mode == RiskMode::Covariance {
            let abs_sum: f64 = spec.covariance[t].iter().flatten().map(|v| v.abs()).sum();
            bound += 0.5 * spec.risk_aversion * abs_sum * cap * cap;
        }
    }
    if spec.risk_mode == RiskMode::SampleVariance {
        // Var(r) ≤ max_t r_t²
        let max_r = (0..n_steps)
            .map(|t| (0..n_assets).map(|n| spec.returns[n][t].abs() * cap).sum::<f64>())
            .fold(0.0, f64::max);
        bound += spec.risk_aversion * max_r * max_r;
    }
    if let Some(fin) = &spec.final_holdings {
        let last = n_steps - 1;
        for n in 0..n_assets {
            let f = fin[n] as f64;
            let d = cap.max(f);
            bound += spec.temp_cost[n][last].abs() * d * d;
            bound += spec.perm_cost[n][last].abs() * d * f;
        }
    }
    bound
}

/// Default penalty strength: any infeasible bitstring then costs more than
/// any feasible one, since a unit budget violation outweighs the full spread
/// of objective values over the box.
pub fn default_penalty_strength(spec: &ProblemSpec) -> f64 {
    2.0 * objective_magnitude_bound(spec) + 1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..self.hi)
        } else {
            self.lo
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CovarianceMode {
    /// `Σ_t = B_t B_tᵀ + diag(d_t)` with Gaussian loadings; positive semidefinite.
    Factor { factors: usize, loading_scale: f64, idiosyncratic: f64 },
    /// Symmetrised uniform noise in `[-scale, scale]`; possibly indefinite.
    Raw { scale: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum PenaltyRule {
    /// [`default_penalty_strength`].
    Bound,
    /// Bound rule multiplied by `factor`.
    ScaledBound { factor: f64 },
    Fixed { value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialHoldings {
    Zero,
    /// A uniformly drawn composition of the budget respecting the cap.
    Random,
}

/// Ranges and modes for [`random_instance`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub n_assets: usize,
    pub n_steps: usize,
    pub budget: u64,
    /// Defaults to the budget.
    pub max_holding: Option<u64>,
    pub returns: Interval,
    pub risk_aversion: Interval,
    pub covariance: CovarianceMode,
    pub temp_cost: Interval,
    pub perm_cost: Interval,
    pub initial: InitialHoldings,
    pub risk_mode: RiskMode,
    pub trade_mode: TradeMode,
    pub penalty: PenaltyRule,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            n_assets: 2,
            n_steps: 3,
            budget: 3,
            max_holding: None,
            returns: Interval::new(0.0, 1.0),
            risk_aversion: Interval::new(1.0, 1.0),
            covariance: CovarianceMode::Factor {
                factors: 2,
                loading_scale: 0.2,
                idiosyncratic: 0.05,
            },
            temp_cost: Interval::new(0.02, 0.2),
            perm_cost: Interval::new(0.0, 0.05),
            initial: InitialHoldings::Zero,
            risk_mode: RiskMode::Covariance,
            trade_mode: TradeMode::Rebalance,
            penalty: PenaltyRule::Bound,
        }
    }
}

impl GenParams {
    pub fn with_dims(mut self, n_assets: usize, n_steps: usize, budget: u64) -> Self {
        self.n_assets = n_assets;
        self.n_steps = n_steps;
        self.budget = budget;
        self
    }

    pub fn cap(&self) -> u64 {
        self.max_holding.unwrap_or(self.budget)
    }

    fn validate(&self) -> Result<()> {
        if self.n_assets == 0 || self.n_steps == 0 {
            return Err(Error::Invalid("generator needs positive dimensions".into()));
        }
        if self.cap() > self.budget {
            return Err(Error::Invalid("max_holding exceeds budget".into()));
        }
        if self.trade_mode == TradeMode::Rebalance
            && (self.n_assets as u64).saturating_mul(self.cap()) < self.budget
        {
            return Err(Error::Invalid(
                "budget cannot be met: n_assets * max_holding < budget".into(),
            ));
        }
        for (name, iv) in [
            ("returns", self.returns),
            ("risk_aversion", self.risk_aversion),
            ("temp_cost", self.temp_cost),
            ("perm_cost", self.perm_cost),
        ] {
            if !(iv.lo.is_finite() && iv.hi.is_finite()) || iv.lo > iv.hi {
                return Err(Error::Invalid(format!("{name} range is empty or non-finite")));
            }
        }
        if self.risk_aversion.lo < 0.0 || self.temp_cost.lo < 0.0 {
            return Err(Error::Invalid(
                "risk_aversion and temp_cost ranges must be non-negative".into(),
            ));
        }
        match self.penalty {
            PenaltyRule::Fixed { value } if !(value > 0.0) => {
                return Err(Error::Invalid("fixed penalty must be positive".into()))
            }
            PenaltyRule::ScaledBound { factor } if !(factor > 0.0) => {
                return Err(Error::Invalid("penalty factor must be positive".into()))
            }
            _ => {}
        }
        Ok(())
    }
}

/// Uniform random composition of `total` into `parts` values, each `≤ cap`.
fn random_composition<R: Rng + ?Sized>(rng: &mut R, total: u64, parts: usize, cap: u64) -> Vec<u64> {
    // units are dropped one at a time into a random asset with spare room
    let mut out = vec![0u64; parts];
    let mut remaining = total.min(cap.saturating_mul(parts as u64));
    while remaining > 0 {
        let open: Vec<usize> = (0..parts).filter(|&n| out[n] < cap).collect();
        let n = open[rng.random_range(0..open.len())];
        out[n] += 1;
        remaining -= 1;
    }
    out
}

/// Draws a seeded random instance. The same `(params, seed)` always produces
/// the same spec.
pub fn random_instance(params: &GenParams, seed: u64) -> Result<ProblemSpec> {
    params.validate()?;
    let mut rng = seed::rng(seed);
    let (n_assets, n_steps) = (params.n_assets, params.n_steps);
    let cap = params.cap();
    let draw_matrix = |iv: Interval, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..n_assets)
            .map(|_| (0..n_steps).map(|_| iv.sample(rng)).collect())
            .collect()
    };
    let returns = draw_matrix(params.returns, &mut rng);
    let temp_cost = draw_matrix(params.temp_cost, &mut rng);
    let perm_cost = draw_matrix(params.perm_cost, &mut rng);
    let risk_aversion = params.risk_aversion.sample(&mut rng);
    let covariance = (0..n_steps)
        .map(|_| random_covariance(&mut rng, n_assets, params.covariance))
        .collect();
    let initial_holdings = match (params.trade_mode, params.initial) {
        (TradeMode::Liquidate, _) | (_, InitialHoldings::Random) => {
            random_composition(&mut rng, params.budget, n_assets, cap)
        }
        (TradeMode::Rebalance, InitialHoldings::Zero) => vec![0; n_assets],
    };
    let final_holdings = match params.trade_mode {
        TradeMode::Liquidate => Some(vec![0; n_assets]),
        TradeMode::Rebalance => None,
    };
    let mut spec = ProblemSpec {
        n_assets,
        n_steps,
        budget: params.budget,
        max_holding: cap,
        returns,
        risk_aversion,
        covariance,
        temp_cost,
        perm_cost,
        initial_holdings,
        final_holdings,
        penalty_strength: 1.0,
        risk_mode: params.risk_mode,
        trade_mode: params.trade_mode,
    };
    spec.penalty_strength = match params.penalty {
        PenaltyRule::Bound => default_penalty_strength(&spec),
        PenaltyRule::ScaledBound { factor } => factor * default_penalty_strength(&spec),
        PenaltyRule::Fixed { value } => value,
    };
    spec.validate()?;
    Ok(spec)
}

fn random_covariance<R: Rng + ?Sized>(rng: &mut R, n: usize, mode: CovarianceMode) -> Vec<Vec<f64>> {
    let mut page = vec![vec![0.0; n]; n];
    match mode {
        CovarianceMode::Factor {
            factors,
            loading_scale,
            idiosyncratic,
        } => {
            let loadings: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    (0..factors)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(rng);
                            loading_scale * z
                        })
                        .collect::<Vec<f64>>()
                })
                .collect();
            for i in 0..n {
                for j in 0..=i {
                    let v: f64 = (0..factors).map(|k| loadings[i][k] * loadings[j][k]).sum();
                    page[i][j] = v;
                    page[j][i] = v;
                }
                page[i][i] += idiosyncratic * rng.random::<f64>();
            }
        }
        CovarianceMode::Raw { scale } => {
            for i in 0..n {
                for j in 0..=i {
                    let v = if scale > 0.0 {
                        rng.random_range(-scale..scale)
                    } else {
                        0.0
                    };
                    page[i][j] = v;
                    page[j][i] = v;
                }
            }
        }
    }
    page
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn scalar_spec(mu: f64, gamma: f64, sigma: f64, c: f64, w0: u64) -> ProblemSpec {
        ProblemSpec {
            n_assets: 1,
            n_steps: 1,
            budget: 3,
            max_holding: 3,
            returns: vec![vec![mu]],
            risk_aversion: gamma,
            covariance: vec![vec![vec![sigma]]],
            temp_cost: vec![vec![c]],
            perm_cost: vec![vec![0.0]],
            initial_holdings: vec![w0],
            final_holdings: None,
            penalty_strength: 10.0,
            risk_mode: RiskMode::Covariance,
            trade_mode: TradeMode::Rebalance,
        }
    }

    fn traj(rows: &[&[u64]]) -> Trajectory {
        Trajectory {
            holdings: rows.iter().map(|r| r.to_vec()).collect(),
        }
    }

    #[test]
    fn objective_single_terms() {
        let w = traj(&[&[3]]);
        assert_eq!(objective(&scalar_spec(2.0, 0.0, 0.0, 0.0, 0), &w).unwrap(), 6.0);
        assert_eq!(objective(&scalar_spec(2.0, 2.0, 1.0, 0.0, 0), &w).unwrap(), -3.0);
        assert_eq!(objective(&scalar_spec(0.0, 0.0, 0.0, 1.0, 1), &w).unwrap(), -4.0);
    }

    #[test]
    fn objective_rejects_bad_shape() {
        let spec = scalar_spec(1.0, 0.0, 0.0, 0.0, 0);
        assert!(matches!(objective(&spec, &traj(&[&[1, 2]])), Err(Error::Shape(_))));
    }

    fn two_asset_spec(page: Vec<Vec<f64>>) -> ProblemSpec {
        ProblemSpec {
            n_assets: 2,
            n_steps: 1,
            budget: 3,
            max_holding: 3,
            returns: vec![vec![0.0], vec![0.0]],
            risk_aversion: 1.0,
            covariance: vec![page],
            temp_cost: vec![vec![0.0], vec![0.0]],
            perm_cost: vec![vec![0.0], vec![0.0]],
            initial_holdings: vec![0, 0],
            final_holdings: None,
            penalty_strength: 1.0,
            risk_mode: RiskMode::Covariance,
            trade_mode: TradeMode::Rebalance,
        }
    }

    #[test]
    fn covariance_risk_examples() {
        let id = two_asset_spec(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(risk_covariance(&id, &traj(&[&[1], &[2]]), 0).unwrap(), 5.0);
        assert_eq!(risk_covariance(&id, &traj(&[&[0], &[0]]), 0).unwrap(), 0.0);
        let ones = two_asset_spec(vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(risk_covariance(&ones, &traj(&[&[1], &[1]]), 0).unwrap(), 4.0);
        assert!(matches!(
            risk_covariance(&id, &traj(&[&[1], &[2]]), 1),
            Err(Error::Range(_))
        ));
    }

    fn stream_spec(mu: &[f64], gamma: f64) -> ProblemSpec {
        let t = mu.len();
        ProblemSpec {
            n_assets: 1,
            n_steps: t,
            budget: 1,
            max_holding: 1,
            returns: vec![mu.to_vec()],
            risk_aversion: gamma,
            covariance: vec![vec![vec![0.0]]; t],
            temp_cost: vec![vec![0.0; t]],
            perm_cost: vec![vec![0.0; t]],
            initial_holdings: vec![0],
            final_holdings: None,
            penalty_strength: 1.0,
            risk_mode: RiskMode::SampleVariance,
            trade_mode: TradeMode::Rebalance,
        }
    }

    #[test]
    fn sample_variance_examples() {
        let constant = stream_spec(&[5.0, 5.0, 5.0], 1.0);
        assert_eq!(risk_sample_variance(&constant, &traj(&[&[1, 1, 1]])).unwrap(), 0.0);
        let two = stream_spec(&[0.0, 2.0], 1.0);
        assert_eq!(risk_sample_variance(&two, &traj(&[&[1, 1]])).unwrap(), 1.0);
        let zero_gamma = stream_spec(&[0.3, 2.0], 0.0);
        assert_eq!(risk_sample_variance(&zero_gamma, &traj(&[&[1, 0]])).unwrap(), 0.0);
    }

    #[test]
    fn feasibility_examples() {
        let mut spec = two_asset_spec(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(is_feasible(&spec, &traj(&[&[1], &[2]])));
        assert!(!is_feasible(&spec, &traj(&[&[2], &[2]])));
        spec.trade_mode = TradeMode::Liquidate;
        spec.final_holdings = Some(vec![0, 0]);
        assert!(!is_feasible(&spec, &traj(&[&[2], &[2]])));
        assert!(is_feasible(&spec, &traj(&[&[1], &[1]])));
        spec.trade_mode = TradeMode::Rebalance;
        spec.max_holding = 1;
        assert!(!is_feasible(&spec, &traj(&[&[1], &[2]])));
    }

    #[test]
    fn penalty_examples() {
        let mut spec = two_asset_spec(vec![vec![0.0; 2]; 2]);
        spec.penalty_strength = 10.0;
        assert_eq!(penalty(&spec, &traj(&[&[1], &[2]])).unwrap(), 0.0);
        assert_eq!(penalty(&spec, &traj(&[&[1], &[0]])).unwrap(), -40.0);
        let mut two_steps = stream_spec(&[0.0, 0.0], 0.0);
        two_steps.budget = 3;
        two_steps.max_holding = 3;
        two_steps.n_assets = 2;
        two_steps.returns = vec![vec![0.0; 2]; 2];
        two_steps.temp_cost = vec![vec![0.0; 2]; 2];
        two_steps.perm_cost = vec![vec![0.0; 2]; 2];
        two_steps.covariance = vec![vec![vec![0.0; 2]; 2]; 2];
        two_steps.initial_holdings = vec![0, 0];
        assert_eq!(penalty(&two_steps, &traj(&[&[2, 1], &[2, 3]])).unwrap(), -2.0);
    }

    #[test]
    fn liquidation_unwind_cost() {
        // one asset, c = 0.5 at both steps, w0 = 3, w = (2, 1), unwind to 0
        let spec = ProblemSpec {
            n_assets: 1,
            n_steps: 2,
            budget: 3,
            max_holding: 3,
            returns: vec![vec![0.0, 0.0]],
            risk_aversion: 0.0,
            covariance: vec![vec![vec![0.0]]; 2],
            temp_cost: vec![vec![0.5, 0.5]],
            perm_cost: vec![vec![0.0, 0.25]],
            initial_holdings: vec![3],
            final_holdings: Some(vec![0]),
            penalty_strength: 1.0,
            risk_mode: RiskMode::Covariance,
            trade_mode: TradeMode::Liquidate,
        };
        // steps: -0.5*1 - 0.5*1 + 0.25*(-1)*1 ; unwind: -0.5*1 + 0.25*(-1)*0
        let v = objective(&spec, &traj(&[&[2, 1]])).unwrap();
        assert!((v - (-0.5 - 0.5 - 0.25 - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn zero_budget_is_well_defined() {
        let mut spec = scalar_spec(1.0, 1.0, 1.0, 1.0, 2);
        spec.budget = 0;
        spec.max_holding = 0;
        let w = traj(&[&[0]]);
        assert!(is_feasible(&spec, &w));
        assert_eq!(penalty(&spec, &w).unwrap(), 0.0);
        assert_eq!(objective(&spec, &w).unwrap(), -4.0);
        assert!(default_penalty_strength(&spec) > 0.0);
    }

    #[test]
    fn validate_catches_bad_specs() {
        let mut spec = scalar_spec(1.0, 0.0, 0.0, 0.0, 0);
        spec.max_holding = 4;
        assert!(spec.validate().is_err());
        let mut spec = scalar_spec(1.0, 0.0, 0.0, 0.0, 0);
        spec.trade_mode = TradeMode::Liquidate;
        assert!(spec.validate().is_err());
        spec.final_holdings = Some(vec![1]);
        assert!(spec.validate().is_err());
        spec.final_holdings = Some(vec![0]);
        assert!(spec.validate().is_ok());
        let mut asym = two_asset_spec(vec![vec![1.0, 0.5], vec![0.4, 1.0]]);
        assert!(asym.validate().is_err());
        asym.covariance[0][1][0] = 0.5;
        assert!(asym.validate().is_ok());
    }

    #[test]
    fn generator_is_deterministic_and_valid() {
        let params = GenParams::default().with_dims(3, 4, 3);
        let a = random_instance(&params, 11).unwrap();
        let b = random_instance(&params, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, random_instance(&params, 12).unwrap());
        a.validate().unwrap();
    }

    #[test]
    fn generator_rejects_inconsistent_params() {
        let mut params = GenParams::default().with_dims(2, 2, 5);
        params.max_holding = Some(2);
        assert!(random_instance(&params, 0).is_err());
        let mut params = GenParams::default();
        params.returns = Interval::new(1.0, 0.0);
        assert!(random_instance(&params, 0).is_err());
    }

    #[test]
    fn raw_covariance_is_symmetric() {
        let mut params = GenParams::default().with_dims(4, 3, 3);
        params.covariance = CovarianceMode::Raw { scale: 1.0 };
        let spec = random_instance(&params, 5).unwrap();
        for page in &spec.covariance {
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(page[i][j], page[j][i]);
                }
            }
        }
    }

    #[test]
    fn factor_covariance_is_psd() {
        let params = GenParams::default().with_dims(5, 4, 3);
        for seed in 0..20 {
            let spec = random_instance(&params, seed).unwrap();
            for page in &spec.covariance {
                let m = nalgebra::DMatrix::from_fn(5, 5, |i, j| page[i][j]);
                let eig = m.symmetric_eigen();
                assert!(eig.eigenvalues.min() >= -1e-10);
            }
        }
    }

    #[test]
    fn liquidation_instances_start_invested() {
        let mut params = GenParams::default().with_dims(3, 2, 3);
        params.trade_mode = TradeMode::Liquidate;
        let spec = random_instance(&params, 3).unwrap();
        assert_eq!(spec.initial_holdings.iter().sum::<u64>(), 3);
        assert_eq!(spec.final_holdings, Some(vec![0, 0, 0]));
    }

    #[test]
    fn json_uses_symbol_table_keys() {
        let spec = random_instance(&GenParams::default(), 1).unwrap();
        let v: serde_json::Value = serde_json::to_value(&spec).unwrap();
        for key in [
            "n_assets",
            "n_steps",
            "budget",
            "max_holding",
            "returns",
            "risk_aversion",
            "covariance",
            "temp_cost",
            "perm_cost",
            "initial_holdings",
            "final_holdings",
            "penalty_strength",
            "risk_mode",
            "trade_mode",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["risk_mode"], "covariance");
        let back: ProblemSpec = serde_json::from_value(v).unwrap();
        assert_eq!(back, spec);
    }
}
