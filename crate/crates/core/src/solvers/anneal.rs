//! Single-spin-flip Metropolis annealing with a geometric β schedule.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampleset::{SampleMetadata, SampleRecord, SampleSet, Vartype};
use crate::error::{Error, Result};
use crate::qubo::{bits_from_spins, qubo_to_ising, IsingModel, QuadraticProgram};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealParams {
    pub reads: usize,
    pub sweeps: usize,
    pub seed: u64,
    /// `(β_min, β_max)`; estimated from the model when absent.
    #[serde(default)]
    pub beta_range: Option<(f64, f64)>,
}

impl Default for AnnealParams {
    fn default() -> Self {
        AnnealParams {
            reads: 1000,
            sweeps: 1000,
            seed: 0,
            beta_range: None,
        }
    }
}

impl AnnealParams {
    pub fn new(reads: usize, sweeps: usize, seed: u64) -> Self {
        AnnealParams {
            reads,
            sweeps,
            seed,
            beta_range: None,
        }
    }
}

/// Compressed adjacency of an Ising model.
struct Sparse {
    h: Vec<f64>,
    start: Vec<usize>,
    nbr: Vec<usize>,
    weight: Vec<f64>,
}

impl Sparse {
    fn new(ising: &IsingModel) -> Self {
        let adj = ising.adjacency();
        let mut start = Vec::with_capacity(adj.len() + 1);
        let mut nbr = Vec::new();
        let mut weight = Vec::new();
        start.push(0);
        for list in &adj {
            for &(j, v) in list {
                nbr.push(j);
                weight.push(v);
            }
            start.push(nbr.len());
        }
        Sparse {
            h: ising.h.clone(),
            start,
            nbr,
            weight,
        }
    }

    fn len(&self) -> usize {
        self.h.len()
    }

    fn fields(&self, spins: &[i8]) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                self.h[i]
                    + (self.start[i]..self.start[i + 1])
                        .map(|e| self.weight[e] * f64::from(spins[self.nbr[e]]))
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Estimates `(β_min, β_max)`: uphill moves from random states are accepted
/// with probability about 0.8 at the start, and the smallest observed uphill
/// move with probability about 0.01 at the end.
pub fn estimate_beta_range(ising: &IsingModel, seed: u64) -> (f64, f64) {
    let sparse = Sparse::new(ising);
    let n = sparse.len();
    let mut rng = seed::rng(seed::derive(seed, "beta-range", 0));
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut smallest = f64::INFINITY;
    for _ in 0..16 {
        let spins: Vec<i8> = (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let fields = sparse.fields(&spins);
        for i in 0..n {
            let de = 2.0 * f64::from(spins[i]) * fields[i];
            let up = de.abs();
            if up > 1e-12 {
                sum += up;
                count += 1;
                smallest = smallest.min(up);
            }
        }
    }
    if count == 0 {
        return (0.1, 1.0);
    }
    let mean = sum / count as f64;
    let beta_min = -(0.8f64.ln()) / mean;
    let beta_max = (100.0f64.ln() / smallest).max(beta_min);
    (beta_min, beta_max)
}

fn anneal_one(sparse: &Sparse, betas: &[f64], seed: u64) -> Vec<i8> {
    let n = sparse.len();
    let mut rng = seed::rng(seed);
    let mut spins: Vec<i8> = (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
    let mut field = sparse.fields(&spins);
    let flip = |i: usize, spins: &mut Vec<i8>, field: &mut Vec<f64>| {
        let change = -2.0 * f64::from(spins[i]);
        spins[i] = -spins[i];
        for e in sparse.start[i]..sparse.start[i + 1] {
            field[sparse.nbr[e]] += change * sparse.weight[e];
        }
    };
    for &beta in betas {
        for i in 0..n {
            let s = f64::from(spins[i]);
            let de = -2.0 * s * field[i];
            let accept = de <= 0.0 || {
                let x = beta * de;
                x < 40.0 && rng.random::<f64>() < (-x).exp()
            };
            if accept {
                flip(i, &mut spins, &mut field);
            }
        }
    }
    // zero-temperature quench to the nearest local minimum
    for _ in 0..n.max(1) {
        let mut moved = false;
        for i in 0..n {
            if -2.0 * f64::from(spins[i]) * field[i] < 0.0 {
                flip(i, &mut spins, &mut field);
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    spins
}

/// Final spin states of every read, in read order. Read `i` draws from the
/// generator seeded with `seed ^ i`.
pub fn anneal_spins(ising: &IsingModel, params: &AnnealParams) -> Result<Vec<Vec<i8>>> {
    if params.reads == 0 || params.sweeps == 0 {
        return Err(Error::Invalid("reads and sweeps must be at least 1".into()));
    }
    let (b0, b1) = match params.beta_range {
        Some(r) => r,
        None => estimate_beta_range(ising, params.seed),
    };
    if !(b0 > 0.0 && b1 >= b0 && b1.is_finite()) {
        return Err(Error::Invalid(format!("bad β range ({b0}, {b1})")));
    }
    let sweeps = params.sweeps;
    let ratio = if sweeps > 1 {
        (b1 / b0).powf(1.0 / (sweeps - 1) as f64)
    } else {
        1.0
    };
    let betas: Vec<f64> = (0..sweeps)
        .map(|k| if k + 1 == sweeps { b1 } else { b0 * ratio.powi(k as i32) })
        .collect();
    let sparse = Sparse::new(ising);
    Ok((0..params.reads)
        .into_par_iter()
        .map(|i| anneal_one(&sparse, &betas, params.seed ^ i as u64))
        .collect())
}

fn metadata(params: &AnnealParams, vartype: Vartype, started: std::time::Instant) -> SampleMetadata {
    SampleMetadata {
        solver: "simulated_annealing".into(),
        vartype,
        reads: params.reads,
        sweeps: params.sweeps,
        seed: params.seed,
        wall_time: started.elapsed().as_secs_f64(),
    }
}

pub fn simulated_annealing_ising(ising: &IsingModel, params: &AnnealParams) -> Result<SampleSet> {
    let started = std::time::Instant::now();
    let reads = anneal_spins(ising, params)?
        .into_iter()
        .map(|s| SampleRecord {
            energy: ising.energy_unchecked(&s),
            bits: bits_from_spins(&s),
            count: 1,
            gauge: None,
            feasible: None,
        })
        .collect();
    Ok(SampleSet::from_reads(reads, metadata(params, Vartype::Spin, started)))
}

/// Anneals the Ising form of `qp`; energies are re-evaluated on `qp`.
pub fn simulated_annealing(qp: &QuadraticProgram, params: &AnnealParams) -> Result<SampleSet> {
    let started = std::time::Instant::now();
    let ising = qubo_to_ising(qp);
    let reads = anneal_spins(&ising, params)?
        .into_iter()
        .map(|s| {
            let bits = bits_from_spins(&s);
            SampleRecord {
                energy: qp.energy_unchecked(&bits),
                bits,
                count: 1,
                gauge: None,
                feasible: None,
            }
        })
        .collect();
    Ok(SampleSet::from_reads(reads, metadata(params, Vartype::Binary, started)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_variable_always_optimal() {
        let qp = QuadraticProgram::from_dense(&[vec![-2.0]], 0.5).unwrap();
        let set = simulated_annealing(&qp, &AnnealParams::new(20, 10, 4)).unwrap();
        assert_eq!(set.records.len(), 1);
        assert_eq!(set.records[0].bits, vec![1]);
        assert_eq!(set.records[0].count, 20);
    }

    #[test]
    fn deterministic_and_prefix_monotone() {
        let mut m = IsingModel::new(6);
        for i in 0..6 {
            m.h[i] = 0.1 * i as f64 - 0.2;
            m.add_coupling(i, (i + 1) % 6, if i % 2 == 0 { 1.0 } else { -0.7 });
        }
        let p = AnnealParams::new(30, 20, 77);
        assert_eq!(simulated_annealing_ising(&m, &p).unwrap(), simulated_annealing_ising(&m, &p).unwrap());
        let short = anneal_spins(&m, &AnnealParams::new(10, 20, 77)).unwrap();
        let long = anneal_spins(&m, &p).unwrap();
        assert_eq!(short[..], long[..10]);
        assert!(anneal_spins(&m, &AnnealParams::new(0, 1, 0)).is_err());
    }
}
