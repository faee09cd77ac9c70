//! Hardware model of a Chimera-topology annealer: graph, minor embedding,
//! coefficient noise, gauge transforms and embedding-quality scores.

pub mod chimera;
pub mod embedding;
pub mod noise;

pub use chimera::{max_clique_size, ChimeraGraph, HardwareDescription};
pub use embedding::{
    clique_embedding, embed_problem, greedy_embedding, problem_edges, rank_embeddings, unembed,
    EmbeddedIsing, Embedding, EmbeddingStats, GreedyOptions, Unembedded,
};
pub use noise::{apply_noise, range_scale, NoiseDistribution, NoiseModel};

use rand::Rng;

use crate::error::{Error, Result};
use crate::qubo::IsingModel;

/// `h'_i = g_i h_i`, `J'_ij = g_i g_j J_ij`; `E'(g∘s) = E(s)`.
pub fn gauge_transform(ising: &IsingModel, gauge: &[i8]) -> Result<IsingModel> {
    if gauge.len() != ising.len() {
        return Err(Error::Shape(format!(
            "gauge has {} entries for {} spins",
            gauge.len(),
            ising.len()
        )));
    }
    if gauge.iter().any(|&g| g != 1 && g != -1) {
        return Err(Error::Invalid("gauge entries must be ±1".into()));
    }
    let mut out = ising.clone();
    for (h, &g) in out.h.iter_mut().zip(gauge) {
        *h *= f64::from(g);
    }
    for (&(i, j), v) in out.couplings.iter_mut() {
        *v *= f64::from(gauge[i] * gauge[j]);
    }
    Ok(out)
}

pub fn random_gauge<R: Rng>(n: usize, rng: &mut R) -> Vec<i8> {
    (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
}

/// Mean of the lowest `⌈fraction·count⌉` energies.
pub fn pi_elite_score(energies: &[f64], elite_fraction: f64) -> Result<f64> {
    if energies.is_empty() {
        return Err(Error::Invalid("no energies to score".into()));
    }
    if !(elite_fraction > 0.0 && elite_fraction <= 1.0) {
        return Err(Error::Range(format!("elite fraction {elite_fraction} outside (0, 1]")));
    }
    let mut sorted = energies.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((elite_fraction * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Ok(sorted[..k].iter().sum::<f64>() / k as f64)
}
