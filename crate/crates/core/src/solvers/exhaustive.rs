//! Exact oracles: enumeration of integer trajectories and of bit strings.

use rayon::prelude::*;

use crate::encoding::enumerate_partitions;
use crate::error::{Error, Result};
use crate::model::{self, ProblemSpec, TradeMode, Trajectory};
use crate::qubo::QuadraticProgram;

/// Trajectory count above which the integer oracle refuses to run.
pub const INTEGER_GUARD: u128 = 10_000_000;
/// Largest dimension the bit-string oracle accepts.
pub const QUBO_GUARD: usize = 26;

pub const GUARD_OVERRIDE_VAR: &str = "TRAJQ_GUARD_OVERRIDE";

pub fn guard_lifted() -> bool {
    std::env::var(GUARD_OVERRIDE_VAR).is_ok_and(|v| !v.is_empty() && v != "0")
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegerOptimum {
    pub trajectory: Trajectory,
    pub value: f64,
    /// Number of trajectories evaluated.
    pub enumerated: u64,
}

/// Admissible holdings vectors for one step.
pub fn step_candidates(spec: &ProblemSpec) -> Vec<Vec<u64>> {
    match spec.trade_mode {
        TradeMode::Rebalance => enumerate_partitions(spec.budget, spec.n_assets, spec.max_holding),
        TradeMode::Liquidate => {
            let mut all: Vec<Vec<u64>> = (0..=spec.budget)
                .flat_map(|k| enumerate_partitions(k, spec.n_assets, spec.max_holding))
                .collect();
            all.sort();
            all
        }
    }
}

/// Maximizes the objective over every feasible trajectory; ties go to the
/// lexicographically smallest step-major flattening.
pub fn exhaustive_integer(spec: &ProblemSpec) -> Result<IntegerOptimum> {
    spec.validate()?;
    let columns = step_candidates(spec);
    if columns.is_empty() {
        return Err(Error::Invalid("no feasible holdings vector exists".into()));
    }
    let size = (columns.len() as u128).checked_pow(spec.n_steps as u32);
    if !guard_lifted() && size.is_none_or(|s| s > INTEGER_GUARD) {
        return Err(Error::Guard(format!(
            "{} candidates per step over {} steps exceeds {INTEGER_GUARD} trajectories",
            columns.len(),
            spec.n_steps
        )));
    }
    let t_len = spec.n_steps;
    let mut digits = vec![0usize; t_len];
    let mut best: Option<(f64, Vec<u64>, Trajectory)> = None;
    let mut count = 0u64;
    loop {
        let cols: Vec<Vec<u64>> = digits.iter().map(|&d| columns[d].clone()).collect();
        let traj = Trajectory::from_columns(&cols);
        let value = model::objective(spec, &traj)?;
        count += 1;
        let better = match &best {
            None => true,
            Some((v, flat, _)) => value > *v || (value == *v && traj.flattened() < *flat),
        };
        if better {
            best = Some((value, traj.flattened(), traj));
        }
        // odometer, last step fastest
        let mut pos = t_len;
        loop {
            if pos == 0 {
                let (value, _, trajectory) = best.expect("at least one trajectory");
                return Ok(IntegerOptimum {
                    trajectory,
                    value,
                    enumerated: count,
                });
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < columns.len() {
                break;
            }
            digits[pos] = 0;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuboOptimum {
    pub bits: Vec<u8>,
    pub energy: f64,
}

fn better(candidate: (f64, &[u8]), incumbent: (f64, &[u8])) -> bool {
    candidate.0 < incumbent.0 || (candidate.0 == incumbent.0 && candidate.1 < incumbent.1)
}

/// Gray-code walk over the low `free` bits with the high bits fixed to `prefix`.
fn scan_block(qp: &QuadraticProgram, free: usize, prefix: u64, tol: f64) -> QuboOptimum {
    let n = qp.dimension();
    let mut x: Vec<u8> = (0..n)
        .map(|i| if i >= free { ((prefix >> (i - free)) & 1) as u8 } else { 0 })
        .collect();
    // g[j] = Σ_{i≠j} Q_ji x_i
    let resync = |x: &[u8], g: &mut Vec<f64>| {
        for (j, gj) in g.iter_mut().enumerate() {
            let row = qp.row(j);
            *gj = (0..n)
                .filter(|&i| i != j && x[i] != 0)
                .map(|i| row[i])
                .sum();
        }
    };
    let mut g = vec![0.0; n];
    resync(&x, &mut g);
    let mut energy = qp.energy_unchecked(&x);
    let mut best = QuboOptimum {
        bits: x.clone(),
        energy,
    };
    let steps: u64 = 1u64 << free;
    for step in 1..steps {
        let k = step.trailing_zeros() as usize;
        let row = qp.row(k);
        let up = x[k] == 0;
        let delta = if up { 1.0 } else { -1.0 };
        energy += delta * (row[k] + 2.0 * g[k]);
        x[k] = u8::from(up);
        for (gj, &q) in g.iter_mut().zip(row) {
            *gj += delta * q;
        }
        g[k] -= delta * row[k];
        if step & 0x3fff == 0 {
            resync(&x, &mut g);
            energy = qp.energy_unchecked(&x);
        }
        if energy < best.energy + tol {
            let exact = qp.energy_unchecked(&x);
            if better((exact, &x), (best.energy, &best.bits)) {
                best.energy = exact;
                best.bits.clone_from(&x);
            }
        }
    }
    best
}

/// Global minimum of `xᵀQx + offset`; ties go to the lexicographically
/// smallest bit vector (bit 0 first).
pub fn exhaustive_qubo(qp: &QuadraticProgram) -> Result<QuboOptimum> {
    let n = qp.dimension();
    if n > QUBO_GUARD && !guard_lifted() {
        return Err(Error::Guard(format!(
            "dimension {n} exceeds the exhaustive limit of {QUBO_GUARD}"
        )));
    }
    if n >= 64 {
        return Err(Error::Guard(format!("dimension {n} cannot be enumerated")));
    }
    if n == 0 {
        return Ok(QuboOptimum {
            bits: Vec::new(),
            energy: qp.offset,
        });
    }
    let magnitude: f64 = qp.as_slice().iter().map(|v| v.abs()).sum::<f64>() + qp.offset.abs();
    let tol = 1e-9 * magnitude.max(1.0);
    let fixed = if n > 12 { 4.min(n) } else { 0 };
    let free = n - fixed;
    let blocks: Vec<QuboOptimum> = (0..1u64 << fixed)
        .into_par_iter()
        .map(|prefix| scan_block(qp, free, prefix, tol))
        .collect();
    Ok(blocks
        .into_iter()
        .reduce(|a, b| {
            if better((b.energy, &b.bits), (a.energy, &a.bits)) {
                b
            } else {
                a
            }
        })
        .expect("at least one block"))
}
