//! Simulated annealer pipeline: embed the Ising form on a hardware graph,
//! tune the chain strength, then sample under several random gauges with
//! coefficient noise and read the chains back by majority vote.

use serde::{Deserialize, Serialize};

use super::anneal::{anneal_spins, AnnealParams};
use super::sampleset::{SampleMetadata, SampleRecord, SampleSet, Vartype};
use crate::error::{Error, Result};
use crate::hardware::{
    apply_noise, clique_embedding, embed_problem, gauge_transform, greedy_embedding, max_clique_size,
    pi_elite_score, problem_edges, random_gauge, rank_embeddings, range_scale, unembed, ChimeraGraph,
    EmbeddedIsing, Embedding, GreedyOptions, NoiseDistribution, NoiseModel,
};
use crate::model::{self, Interval, ProblemSpec, Trajectory};
use crate::qubo::{bits_from_spins, decode_solution, qubo_to_ising, CompiledQubo, IsingModel};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Total reads per query, split evenly over the gauges.
    pub reads: usize,
    pub gauges: usize,
    pub sweeps: usize,
    pub epsilon: f64,
    pub coupler_range: Interval,
    pub field_range: Interval,
    pub noise_distribution: NoiseDistribution,
    /// Chain strengths as multiples of the largest logical coefficient;
    /// with several values the pi-elite score picks one.
    pub chain_strengths: Vec<f64>,
    pub elite_fraction: f64,
    /// Reads spent per chain-strength candidate during tuning.
    pub tuning_reads: usize,
    /// Greedy embedding attempts with distinct seeds (the clique layout is
    /// added when it fits).
    pub embedding_candidates: usize,
    pub greedy: GreedyOptions,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            reads: 1000,
            gauges: 5,
            sweeps: 1000,
            epsilon: 0.03,
            coupler_range: Interval::new(-1.0, 1.0),
            field_range: Interval::new(-2.0, 2.0),
            noise_distribution: NoiseDistribution::Uniform,
            chain_strengths: vec![0.5, 1.0, 1.5, 2.0],
            elite_fraction: 0.02,
            tuning_reads: 200,
            embedding_candidates: 1,
            greedy: GreedyOptions::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reads == 0 || self.gauges == 0 || self.sweeps == 0 {
            return Err(Error::Invalid("reads, gauges and sweeps must be positive".into()));
        }
        if self.gauges > self.reads {
            return Err(Error::Invalid("more gauges than reads".into()));
        }
        if self.chain_strengths.is_empty() || self.chain_strengths.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::Invalid("chain strengths must be positive".into()));
        }
        self.noise(0).validate()
    }

    fn noise(&self, seed: u64) -> NoiseModel {
        NoiseModel {
            epsilon: self.epsilon,
            coupler_range: self.coupler_range,
            field_range: self.field_range,
            distribution: self.noise_distribution,
            seed,
        }
    }

    /// Reads assigned to gauge `g`.
    pub fn reads_for_gauge(&self, g: usize) -> usize {
        self.reads / self.gauges + usize::from(g < self.reads % self.gauges)
    }
}

/// Seed of the annealing run under gauge `g`.
pub fn anneal_seed(master: u64, gauge: usize) -> u64 {
    seed::derive(master, "anneal", gauge as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineDiagnostics {
    pub qubits: usize,
    pub max_chain: usize,
    pub embedding_candidates: usize,
    /// Chain strength as a multiple of the largest logical coefficient.
    pub chain_factor: f64,
    pub chain_strength: f64,
    /// Uniform factor applied to fit the hardware ranges.
    pub range_scale: f64,
    pub tuning_scores: Vec<f64>,
    pub per_gauge_best: Vec<f64>,
    pub broken_chain_fraction: f64,
    pub tie_breaks: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineResult {
    pub bits: Vec<u8>,
    pub trajectory: Trajectory,
    /// Objective of `trajectory`.
    pub value: f64,
    /// Energy of `bits` on the logical program.
    pub energy: f64,
    pub feasible: bool,
    pub samples: SampleSet,
    pub embedding: Embedding,
    pub diagnostics: PipelineDiagnostics,
}

/// Candidate embeddings for a logical problem, best first.
pub fn select_embedding(
    ising: &IsingModel,
    graph: &ChimeraGraph,
    config: &PipelineConfig,
) -> Result<(Embedding, usize)> {
    let n = ising.len();
    let edges = problem_edges(ising);
    let mut candidates = Vec::new();
    let mut last_err = None;
    for c in 0..config.embedding_candidates.max(1) {
        let s = seed::derive(config.seed, "embedding", c as u64);
        match greedy_embedding(n, &edges, graph, s, config.greedy) {
            Ok(e) => candidates.push(e),
            Err(e) => last_err = Some(e),
        }
    }
    if n <= max_clique_size(graph.side()) {
        if let Ok(e) = clique_embedding(n, graph) {
            candidates.push(e);
        }
    }
    if candidates.is_empty() {
        return Err(last_err.unwrap_or_else(|| Error::Embedding("no candidate embedding".into())));
    }
    let order = rank_embeddings(&candidates)?;
    let count = candidates.len();
    Ok((candidates.swap_remove(order[0]), count))
}

struct Run<'a> {
    spec: &'a ProblemSpec,
    compiled: &'a CompiledQubo,
    embedded: &'a EmbeddedIsing,
    config: &'a PipelineConfig,
}

struct GaugeBatch {
    reads: Vec<SampleRecord>,
    best: f64,
    broken: usize,
    chains: usize,
    ties: usize,
}

impl Run<'_> {
    /// Samples `reads` states under gauge `g` and maps them to logical bits.
    fn sample(&self, g: usize, reads: usize, tag: &str) -> Result<GaugeBatch> {
        let physical = &self.embedded.model;
        let gauge = if g == 0 {
            vec![1i8; physical.len()]
        } else {
            random_gauge(physical.len(), &mut seed::rng(seed::derive(self.config.seed, tag, g as u64)))
        };
        let gauged = gauge_transform(physical, &gauge)?;
        let noise_seed = seed::derive(self.config.seed, &format!("{tag}-noise"), g as u64);
        let noisy = apply_noise(&gauged, &self.config.noise(noise_seed))?;
        let anneal_seed = if tag == "gauge" {
            anneal_seed(self.config.seed, g)
        } else {
            seed::derive(self.config.seed, tag, 1_000 + g as u64)
        };
        let params = AnnealParams::new(reads, self.config.sweeps, anneal_seed);
        let states = anneal_spins(&noisy, &params)?;
        let mut batch = GaugeBatch {
            reads: Vec::with_capacity(reads),
            best: f64::INFINITY,
            broken: 0,
            chains: 0,
            ties: 0,
        };
        for (r, mut spins) in states.into_iter().enumerate() {
            for (s, &gi) in spins.iter_mut().zip(&gauge) {
                *s *= gi;
            }
            let tie_seed = seed::derive(self.config.seed, &format!("{tag}-tie"), ((g as u64) << 32) | r as u64);
            let logical = unembed(&spins, &self.embedded.chains, tie_seed)?;
            batch.broken += logical.broken_chains;
            batch.chains += self.embedded.chains.len();
            batch.ties += logical.ties.len();
            let bits = bits_from_spins(&logical.spins);
            let energy = self.compiled.program.energy_unchecked(&bits);
            let decoded = decode_solution(&self.compiled.layout, &bits)?;
            batch.best = batch.best.min(energy);
            batch.reads.push(SampleRecord {
                bits,
                energy,
                count: 1,
                gauge: Some(g),
                feasible: Some(decoded.is_feasible(self.spec)),
            });
        }
        Ok(batch)
    }
}

/// Runs the full protocol on a compiled instance.
pub fn annealer_pipeline(
    spec: &ProblemSpec,
    compiled: &CompiledQubo,
    graph: &ChimeraGraph,
    config: &PipelineConfig,
) -> Result<PipelineResult> {
    config.validate()?;
    let started = std::time::Instant::now();
    let ising = qubo_to_ising(&compiled.program);
    let (embedding, candidate_count) = select_embedding(&ising, graph, config)?;
    let base = ising.max_abs_coefficient().max(f64::MIN_POSITIVE);

    let mut tuning_scores = Vec::new();
    let mut chosen = 0usize;
    if config.chain_strengths.len() > 1 {
        for (c, &factor) in config.chain_strengths.iter().enumerate() {
            let embedded = embed_problem(&ising, &embedding, graph, factor * base)?;
            let run = Run {
                spec,
                compiled,
                embedded: &embedded,
                config,
            };
            let batch = run.sample(c, config.tuning_reads.max(1), "tuning")?;
            let energies: Vec<f64> = batch.reads.iter().map(|r| r.energy).collect();
            tuning_scores.push(pi_elite_score(&energies, config.elite_fraction)?);
        }
        chosen = (0..tuning_scores.len())
            .min_by(|&a, &b| tuning_scores[a].total_cmp(&tuning_scores[b]))
            .unwrap_or(0);
    }
    let factor = config.chain_strengths[chosen];
    let embedded = embed_problem(&ising, &embedding, graph, factor * base)?;
    let scale = range_scale(&embedded.model, &config.noise(0));
    let run = Run {
        spec,
        compiled,
        embedded: &embedded,
        config,
    };

    let mut reads = Vec::with_capacity(config.reads);
    let mut per_gauge_best = Vec::with_capacity(config.gauges);
    let (mut broken, mut chains, mut ties) = (0usize, 0usize, 0usize);
    for g in 0..config.gauges {
        let batch = run.sample(g, config.reads_for_gauge(g), "gauge")?;
        per_gauge_best.push(batch.best);
        broken += batch.broken;
        chains += batch.chains;
        ties += batch.ties;
        reads.extend(batch.reads);
    }
    let metadata = SampleMetadata {
        solver: "annealer_pipeline".into(),
        vartype: Vartype::Binary,
        reads: config.reads,
        sweeps: config.sweeps,
        seed: config.seed,
        wall_time: started.elapsed().as_secs_f64(),
    };
    let samples = SampleSet::from_reads(reads, metadata);
    let best = samples
        .lowest_feasible()
        .or_else(|| samples.lowest())
        .cloned()
        .ok_or_else(|| Error::Numeric("pipeline produced no samples".into()))?;
    let decoded = decode_solution(&compiled.layout, &best.bits)?;
    let value = model::objective(spec, &decoded.trajectory)?;
    Ok(PipelineResult {
        feasible: best.feasible == Some(true),
        bits: best.bits,
        trajectory: decoded.trajectory,
        value,
        energy: best.energy,
        samples,
        diagnostics: PipelineDiagnostics {
            qubits: embedding.qubit_count(),
            max_chain: embedding.max_chain_length(),
            embedding_candidates: candidate_count,
            chain_factor: factor,
            chain_strength: factor * base,
            range_scale: scale,
            tuning_scores,
            per_gauge_best,
            broken_chain_fraction: if chains == 0 { 0.0 } else { broken as f64 / chains as f64 },
            tie_breaks: ties,
        },
        embedding,
    })
}
