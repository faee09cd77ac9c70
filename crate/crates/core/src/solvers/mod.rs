//! Exact oracles, simulated annealing and the annealer pipeline.

pub mod anneal;
pub mod exhaustive;
pub mod pipeline;
pub mod sampleset;

pub use anneal::{anneal_spins, estimate_beta_range, simulated_annealing, simulated_annealing_ising, AnnealParams};
pub use exhaustive::{exhaustive_integer, exhaustive_qubo, guard_lifted, IntegerOptimum, QuboOptimum};
pub use pipeline::{annealer_pipeline, PipelineConfig, PipelineDiagnostics, PipelineResult};
pub use sampleset::{SampleMetadata, SampleRecord, SampleSet, Vartype};
