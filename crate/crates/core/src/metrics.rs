//! Perturbation-based success metric `S(α)` and benchmark tables.
//!
//! A solver's answer to an instance counts as a success at level `α` when
//! its energy lies inside the range of optimal energies of copies of the
//! problem whose spectrum was perturbed by `α` percent.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{build_encoding, EncodingKind};
use crate::error::{Error, Result};
use crate::hardware::ChimeraGraph;
use crate::model::{self, GenParams};
use crate::qubo::{compile, CompiledQubo, QuadraticProgram};
use crate::seed;
use crate::solvers::{
    annealer_pipeline, exhaustive_qubo, simulated_annealing, AnnealParams, PipelineConfig,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationMode {
    /// Gaussian noise on each eigenvalue, `std = α% · |λ_i|`.
    #[default]
    Eigen,
    /// Symmetric Gaussian noise on each matrix entry with
    /// `std = α% · rms(λ)`; for sensitivity comparisons.
    Entrywise,
}

/// Eigendecomposition of a program's matrix, reused across draws.
pub struct Spectrum {
    program: QuadraticProgram,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn new(qp: &QuadraticProgram) -> Result<Self> {
        let n = qp.dimension();
        if qp.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("matrix has non-finite entries".into()));
        }
        let m = DMatrix::from_row_slice(n, n, qp.as_slice());
        let eig = SymmetricEigen::try_new(m, f64::EPSILON, 10_000)
            .ok_or_else(|| Error::Numeric("eigendecomposition did not converge".into()))?;
        Ok(Spectrum {
            program: qp.clone(),
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            eigenvectors: eig.eigenvectors,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `U·diag(λ + (α/100)|λ|∘z)·Uᵀ`, symmetrised. `z` holds one standard
    /// normal draw per eigenvalue (eigen mode) or per upper-triangular entry
    /// (entrywise mode).
    pub fn perturbed(&self, alpha: f64, z: &[f64], mode: PerturbationMode) -> QuadraticProgram {
        if alpha == 0.0 {
            return self.program.clone();
        }
        let n = self.eigenvalues.len();
        let a = alpha / 100.0;
        let mut out = QuadraticProgram::zeros(n);
        out.offset = self.program.offset;
        match mode {
            PerturbationMode::Eigen => {
                let shifted: Vec<f64> = self
                    .eigenvalues
                    .iter()
                    .zip(z)
                    .map(|(&l, &zi)| l + a * l.abs() * zi)
                    .collect();
                let u = &self.eigenvectors;
                let scaled = DMatrix::from_fn(n, n, |i, k| u[(i, k)] * shifted[k]);
                let m = scaled * u.transpose();
                for i in 0..n {
                    for j in i..n {
                        out.set_symmetric(i, j, 0.5 * (m[(i, j)] + m[(j, i)]));
                    }
                }
            }
            PerturbationMode::Entrywise => {
                let rms = (self.eigenvalues.iter().map(|l| l * l).sum::<f64>() / n.max(1) as f64).sqrt();
                let mut idx = 0;
                for i in 0..n {
                    for j in i..n {
                        out.set_symmetric(i, j, self.program.get(i, j) + a * rms * z[idx]);
                        idx += 1;
                    }
                }
            }
        }
        out
    }
}

/// Number of normal draws one perturbation consumes.
pub fn draw_len(n: usize, mode: PerturbationMode) -> usize {
    match mode {
        PerturbationMode::Eigen => n,
        PerturbationMode::Entrywise => n * (n + 1) / 2,
    }
}

pub fn normal_draws<R: Rng>(count: usize, rng: &mut R) -> Vec<f64> {
    (0..count).map(|_| rng.sample(StandardNormal)).collect()
}

/// One eigen-mode perturbation with fresh draws; `α = 0` returns the input.
pub fn perturb_spectrum<R: Rng>(qp: &QuadraticProgram, alpha: f64, rng: &mut R) -> Result<QuadraticProgram> {
    if !(alpha >= 0.0) {
        return Err(Error::Range(format!("alpha {alpha} must be non-negative")));
    }
    if alpha == 0.0 {
        return Ok(qp.clone());
    }
    let spec = Spectrum::new(qp)?;
    let z = normal_draws(qp.dimension(), rng);
    Ok(spec.perturbed(alpha, &z, PerturbationMode::Eigen))
}

/// Solver used for the perturbed copies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Oracle {
    /// Exhaustive search when within its guard, otherwise annealing with a
    /// hundredfold read budget.
    #[default]
    Auto,
    Exhaustive,
    Annealing { reads: usize, sweeps: usize },
}

impl Oracle {
    /// Minimizing bit vector and its energy on `qp`.
    pub fn solve(&self, qp: &QuadraticProgram, seed: u64) -> Result<(Vec<u8>, f64)> {
        let sa = |reads: usize, sweeps: usize| -> Result<(Vec<u8>, f64)> {
            let set = simulated_annealing(qp, &AnnealParams::new(reads, sweeps, seed))?;
            let best = set.lowest().ok_or_else(|| Error::Numeric("no samples".into()))?;
            Ok((best.bits.clone(), best.energy))
        };
        match *self {
            Oracle::Exhaustive => exhaustive_qubo(qp).map(|o| (o.bits, o.energy)),
            Oracle::Annealing { reads, sweeps } => sa(reads, sweeps),
            Oracle::Auto => match exhaustive_qubo(qp) {
                Ok(opt) => Ok((opt.bits, opt.energy)),
                Err(Error::Guard(_)) => sa(100_000, 1000),
                Err(e) => Err(e),
            },
        }
    }

    pub fn minimum(&self, qp: &QuadraticProgram, seed: u64) -> Result<f64> {
        Ok(self.solve(qp, seed)?.1)
    }
}

/// How the optima of the perturbed copies turn into a success range.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeRule {
    /// The optimal bit vectors of the perturbed copies are scored on the
    /// original program; the range runs from the true optimum to the worst
    /// of those scores. A result succeeds when it is no worse than some
    /// solution that is optimal under an `α`-perturbation.
    #[default]
    SolutionEnergy,
    /// The optimal energies of the perturbed copies themselves, `[min, max]`.
    PerturbedEnergy,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSettings {
    pub n_perturbations: usize,
    pub mode: PerturbationMode,
    pub oracle: Oracle,
    #[serde(default)]
    pub rule: RangeRule,
}

impl Default for PerturbationSettings {
    fn default() -> Self {
        PerturbationSettings {
            n_perturbations: 100,
            mode: PerturbationMode::Eigen,
            oracle: Oracle::Auto,
            rule: RangeRule::SolutionEnergy,
        }
    }
}

/// Closed energy interval a successful result must fall in.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimumRange {
    pub lo: f64,
    pub hi: f64,
}

impl OptimumRange {
    pub fn contains(&self, value: f64, tol: f64) -> bool {
        value >= self.lo - tol && value <= self.hi + tol
    }
}

fn tolerance(range: &OptimumRange, candidate: f64) -> f64 {
    1e-9 * range.lo.abs().max(range.hi.abs()).max(candidate.abs()).max(1.0)
}

/// Success ranges for every `α`, all built from the same standard normal
/// draws so that a larger `α` scales the same perturbation directions.
///
/// Under [`RangeRule::SolutionEnergy`] the upper end is non-decreasing in `α`
/// for every draw: if `x₁` minimizes `Q + α₁D` and `x₂` minimizes `Q + α₂D`
/// with `α₁ < α₂`, optimality of each gives `E(x₁) ≤ E(x₂)` on `Q`.
pub fn optimum_ranges(
    qp: &QuadraticProgram,
    alphas: &[f64],
    settings: &PerturbationSettings,
    seed: u64,
) -> Result<Vec<OptimumRange>> {
    if settings.n_perturbations == 0 {
        return Err(Error::Invalid("at least one perturbation is required".into()));
    }
    if let Some(a) = alphas.iter().find(|&&a| !(a >= 0.0)) {
        return Err(Error::Range(format!("alpha {a} must be non-negative")));
    }
    let mut rng = seed::rng(seed::derive(seed, "perturbation", 0));
    let per = draw_len(qp.dimension(), settings.mode);
    let draws: Vec<Vec<f64>> = (0..settings.n_perturbations)
        .map(|_| normal_draws(per, &mut rng))
        .collect();
    let oracle_seed = seed::derive(seed, "oracle", 0);
    let optimum = settings.oracle.minimum(qp, oracle_seed)?;
    let mut spectrum: Option<Spectrum> = None;
    let mut out = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        if alpha == 0.0 {
            out.push(OptimumRange { lo: optimum, hi: optimum });
            continue;
        }
        if spectrum.is_none() {
            spectrum = Some(Spectrum::new(qp)?);
        }
        let sp = spectrum.as_ref().expect("spectrum computed");
        let values = draws
            .iter()
            .enumerate()
            .map(|(k, z)| {
                let perturbed = sp.perturbed(alpha, z, settings.mode);
                let (bits, energy) = settings
                    .oracle
                    .solve(&perturbed, seed::derive(oracle_seed, "draw", k as u64))?;
                Ok(match settings.rule {
                    RangeRule::SolutionEnergy => qp.energy_unchecked(&bits),
                    RangeRule::PerturbedEnergy => energy,
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = match settings.rule {
            RangeRule::SolutionEnergy => optimum,
            RangeRule::PerturbedEnergy => values.iter().copied().fold(f64::INFINITY, f64::min),
        };
        out.push(OptimumRange { lo, hi: hi.max(lo) });
    }
    Ok(out)
}

/// Whether `candidate_value` (an energy of `qp`) lies within the optimal
/// range at level `alpha`.
pub fn success_within_alpha(
    qp: &QuadraticProgram,
    candidate_value: f64,
    alpha: f64,
    settings: &PerturbationSettings,
    seed: u64,
) -> Result<bool> {
    let range = optimum_ranges(qp, &[alpha], settings, seed)?[0];
    Ok(range.contains(candidate_value, tolerance(&range, candidate_value)))
}

/// Success indicators for several `α` with shared draws.
pub fn success_profile(
    qp: &QuadraticProgram,
    candidate_value: f64,
    alphas: &[f64],
    settings: &PerturbationSettings,
    seed: u64,
) -> Result<Vec<bool>> {
    Ok(optimum_ranges(qp, alphas, settings, seed)?
        .into_iter()
        .map(|r| r.contains(candidate_value, tolerance(&r, candidate_value)))
        .collect())
}

/// Solver evaluated by the benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolverConfig {
    /// Exhaustive QUBO search (the oracle itself).
    Exhaustive,
    Annealing(AnnealParams),
    Pipeline(PipelineConfig),
}

impl SolverConfig {
    pub fn name(&self) -> &'static str {
        match self {
            SolverConfig::Exhaustive => "exhaustive",
            SolverConfig::Annealing(_) => "sa",
            SolverConfig::Pipeline(_) => "pipeline",
        }
    }
}

/// A solver's answer to one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub bits: Vec<u8>,
    pub energy: f64,
    pub qubits: Option<usize>,
    pub max_chain: Option<usize>,
}

pub fn solve_candidate(
    spec: &model::ProblemSpec,
    compiled: &CompiledQubo,
    solver: &SolverConfig,
    graph: Option<&ChimeraGraph>,
    seed: u64,
) -> Result<Candidate> {
    match solver {
        SolverConfig::Exhaustive => {
            let opt = exhaustive_qubo(&compiled.program)?;
            Ok(Candidate {
                bits: opt.bits,
                energy: opt.energy,
                qubits: None,
                max_chain: None,
            })
        }
        SolverConfig::Annealing(params) => {
            let p = AnnealParams { seed, ..*params };
            let set = simulated_annealing(&compiled.program, &p)?;
            let best = set.lowest().ok_or_else(|| Error::Numeric("no samples".into()))?;
            Ok(Candidate {
                bits: best.bits.clone(),
                energy: best.energy,
                qubits: None,
                max_chain: None,
            })
        }
        SolverConfig::Pipeline(config) => {
            let graph = graph.ok_or_else(|| Error::Invalid("pipeline solver needs a hardware graph".into()))?;
            let cfg = PipelineConfig {
                seed,
                ..config.clone()
            };
            let res = annealer_pipeline(spec, compiled, graph, &cfg)?;
            Ok(Candidate {
                bits: res.bits,
                energy: res.energy,
                qubits: Some(res.diagnostics.qubits),
                max_chain: Some(res.diagnostics.max_chain),
            })
        }
    }
}

/// A cell of the benchmark grid: instance shape plus encoding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemFamily {
    pub n_assets: usize,
    pub n_steps: usize,
    pub budget: u64,
    pub encoding: EncodingKind,
    #[serde(default)]
    pub generator: GenParams,
}

impl ProblemFamily {
    pub fn new(n_assets: usize, n_steps: usize, budget: u64, encoding: EncodingKind) -> Self {
        ProblemFamily {
            n_assets,
            n_steps,
            budget,
            encoding,
            generator: GenParams::default(),
        }
    }

    pub fn params(&self) -> GenParams {
        self.generator
            .clone()
            .with_dims(self.n_assets, self.n_steps, self.budget)
    }

    pub fn instance_seed(master: u64, index: usize) -> u64 {
        seed::derive(master, "instance", index as u64)
    }

    pub fn instance(&self, master: u64, index: usize) -> Result<model::ProblemSpec> {
        model::random_instance(&self.params(), Self::instance_seed(master, index))
    }
}

/// Per-instance outcome behind an [`ExperimentRow`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceOutcome {
    pub index: usize,
    pub candidate_energy: f64,
    pub ranges: Vec<OptimumRange>,
    pub successes: Vec<bool>,
    pub qubits: Option<usize>,
    pub max_chain: Option<usize>,
}

pub fn evaluate_instance(
    family: &ProblemFamily,
    solver: &SolverConfig,
    graph: Option<&ChimeraGraph>,
    alphas: &[f64],
    settings: &PerturbationSettings,
    master: u64,
    index: usize,
) -> Result<InstanceOutcome> {
    let spec = family.instance(master, index)?;
    let scheme = build_encoding(family.encoding, spec.max_holding, spec.budget, spec.n_assets)?;
    let compiled = compile(&spec, &scheme)?;
    let cand = solve_candidate(
        &spec,
        &compiled,
        solver,
        graph,
        seed::derive(master, "solver", index as u64),
    )?;
    let ranges = optimum_ranges(
        &compiled.program,
        alphas,
        settings,
        seed::derive(master, "perturb", index as u64),
    )?;
    let successes = ranges
        .iter()
        .map(|r| r.contains(cand.energy, tolerance(r, cand.energy)))
        .collect();
    Ok(InstanceOutcome {
        index,
        candidate_energy: cand.energy,
        ranges,
        successes,
        qubits: cand.qubits,
        max_chain: cand.max_chain,
    })
}

/// One line of a results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub n_assets: usize,
    pub n_steps: usize,
    pub budget: u64,
    pub encoding: EncodingKind,
    pub vars: usize,
    pub density: f64,
    /// Mean physical qubits over instances (rounded), when embedded.
    pub qubits: Option<usize>,
    /// Longest chain over instances, when embedded.
    pub chain: Option<usize>,
    /// `(α, S(α))` with `S` in percent.
    pub s_values: Vec<(f64, f64)>,
}

impl ExperimentRow {
    pub fn from_outcomes(
        family: &ProblemFamily,
        alphas: &[f64],
        outcomes: &[InstanceOutcome],
    ) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::Invalid("no instance outcomes".into()));
        }
        let spec = family.instance(0, 0)?;
        let scheme = build_encoding(family.encoding, spec.max_holding, spec.budget, spec.n_assets)?;
        let compiled = compile(&spec, &scheme)?;
        let vars = compiled.program.dimension();
        let density = if vars >= 2 { compiled.program.density()? } else { 0.0 };
        let n = outcomes.len();
        let s_values = alphas
            .iter()
            .enumerate()
            .map(|(k, &a)| {
                let hits = outcomes.iter().filter(|o| o.successes[k]).count();
                (a, 100.0 * hits as f64 / n as f64)
            })
            .collect();
        let qubit_counts: Vec<usize> = outcomes.iter().filter_map(|o| o.qubits).collect();
        let qubits = (!qubit_counts.is_empty())
            .then(|| (qubit_counts.iter().sum::<usize>() as f64 / qubit_counts.len() as f64).round() as usize);
        let chain = outcomes.iter().filter_map(|o| o.max_chain).max();
        Ok(ExperimentRow {
            n_assets: family.n_assets,
            n_steps: family.n_steps,
            budget: family.budget,
            encoding: family.encoding,
            vars,
            density,
            qubits,
            chain,
            s_values,
        })
    }

    pub fn s(&self, alpha: f64) -> Option<f64> {
        self.s_values.iter().find(|(a, _)| *a == alpha).map(|&(_, s)| s)
    }
}

/// Runs `n_instances` seeded instances of a family and scores the solver.
pub fn success_rate(
    family: &ProblemFamily,
    solver: &SolverConfig,
    graph: Option<&ChimeraGraph>,
    alphas: &[f64],
    n_instances: usize,
    settings: &PerturbationSettings,
    seed: u64,
) -> Result<(ExperimentRow, Vec<InstanceOutcome>)> {
    if n_instances == 0 {
        return Err(Error::Invalid("n_instances must be at least 1".into()));
    }
    let outcomes = (0..n_instances)
        .into_par_iter()
        .map(|i| evaluate_instance(family, solver, graph, alphas, settings, seed, i))
        .collect::<Result<Vec<_>>>()?;
    let row = ExperimentRow::from_outcomes(family, alphas, &outcomes)?;
    Ok((row, outcomes))
}

/// Rendered forms of a results table.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub csv: String,
    pub text: String,
    pub dat: String,
}

fn alpha_label(a: f64) -> String {
    format!("S({a})")
}

fn opt(v: Option<usize>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

/// Column order: N, T, K, encoding, vars, density, qubits, chain, S(α)...
/// Rows sorted by S(first α) descending, then vars ascending.
pub fn build_report(rows: &[ExperimentRow]) -> Report {
    let mut alphas: Vec<f64> = Vec::new();
    for r in rows {
        for &(a, _) in &r.s_values {
            if !alphas.contains(&a) {
                alphas.push(a);
            }
        }
    }
    if alphas.is_empty() {
        alphas = vec![0.0, 1.0, 2.0];
    }
    alphas.sort_by(f64::total_cmp);
    let mut sorted: Vec<&ExperimentRow> = rows.iter().collect();
    let lead = alphas[0];
    sorted.sort_by(|a, b| {
        let (sa, sb) = (a.s(lead).unwrap_or(-1.0), b.s(lead).unwrap_or(-1.0));
        sb.total_cmp(&sa).then(a.vars.cmp(&b.vars))
    });
    let mut header: Vec<String> = ["N", "T", "K", "encoding", "vars", "density", "qubits", "chain"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(alphas.iter().map(|&a| alpha_label(a)));
    let cells: Vec<Vec<String>> = sorted
        .iter()
        .map(|r| {
            let mut c = vec![
                r.n_assets.to_string(),
                r.n_steps.to_string(),
                r.budget.to_string(),
                r.encoding.name().to_string(),
                r.vars.to_string(),
                format!("{:.2}", r.density),
                opt(r.qubits),
                opt(r.chain),
            ];
            c.extend(alphas.iter().map(|&a| r.s(a).map_or_else(|| "-".into(), |s| format!("{s:.2}"))));
            c
        })
        .collect();

    let mut csv = header.join(",");
    csv.push('\n');
    for c in &cells {
        csv.push_str(&c.join(","));
        csv.push('\n');
    }

    let widths: Vec<usize> = (0..header.len())
        .map(|k| cells.iter().map(|c| c[k].len()).chain([header[k].len()]).max().unwrap_or(0))
        .collect();
    let mut text = String::new();
    let line = |out: &mut String, row: &[String]| {
        let parts: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(k, (s, &w))| if k == 3 { format!("{s:<w$}") } else { format!("{s:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut text, &header);
    for c in &cells {
        line(&mut text, c);
    }

    let mut dat = format!("# {}\n", header.join(" "));
    for c in &cells {
        let _ = writeln!(dat, "{}", c.join(" "));
    }
    Report { csv, text, dat }
}

/// Parses the CSV produced by [`build_report`].
pub fn parse_report_csv(text: &str) -> Result<Vec<ExperimentRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let alphas: Vec<f64> = headers
        .iter()
        .skip(8)
        .map(|h| {
            h.trim_start_matches("S(")
                .trim_end_matches(')')
                .parse::<f64>()
                .map_err(|_| Error::Invalid(format!("bad column '{h}'")))
        })
        .collect::<Result<_>>()?;
    let parse_opt = |s: &str| -> Result<Option<usize>> {
        if s == "-" {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| Error::Invalid(format!("bad count '{s}'")))
        }
    };
    let bad = |what: &str| Error::Invalid(format!("bad {what} field"));
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let f = |k: usize| rec.get(k).unwrap_or("");
        let s_values = alphas
            .iter()
            .enumerate()
            .filter(|(k, _)| f(8 + k) != "-")
            .map(|(k, &a)| Ok((a, f(8 + k).parse::<f64>().map_err(|_| bad("S"))?)))
            .collect::<Result<Vec<_>>>()?;
        rows.push(ExperimentRow {
            n_assets: f(0).parse().map_err(|_| bad("N"))?,
            n_steps: f(1).parse().map_err(|_| bad("T"))?,
            budget: f(2).parse().map_err(|_| bad("K"))?,
            encoding: f(3).parse()?,
            vars: f(4).parse().map_err(|_| bad("vars"))?,
            density: f(5).parse().map_err(|_| bad("density"))?,
            qubits: parse_opt(f(6))?,
            chain: parse_opt(f(7))?,
            s_values,
        });
    }
    Ok(rows)
}
