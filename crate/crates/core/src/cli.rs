//! Subcommands behind the `trajq` binary: instance generation, compilation,
//! solving and the resumable benchmark harness.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{build_encoding, EncodingKind};
use crate::hardware::ChimeraGraph;
use crate::metrics::{
    build_report, parse_report_csv, success_rate, ExperimentRow, InstanceOutcome, PerturbationSettings,
    ProblemFamily, Report, SolverConfig,
};
use crate::model::{self, GenParams, ProblemSpec, Trajectory};
use crate::provenance::{json_hash, sha256_hex};
use crate::qubo::{compile, decode_solution, QuboArtifact};
use crate::solvers::{
    annealer_pipeline, exhaustive_qubo, simulated_annealing, AnnealParams, PipelineConfig, SampleMetadata,
    SampleRecord, SampleSet, Vartype,
};
use crate::{Error, Result};

/// Chimera side used by the pipeline when no hardware fixture is given.
pub const DEFAULT_CHIMERA_SIDE: usize = 12;

/// Lists of instance dimensions; the benchmark runs their cartesian product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyGrid {
    pub n_assets: Vec<usize>,
    pub n_steps: Vec<usize>,
    pub budget: Vec<u64>,
    pub encodings: Vec<EncodingKind>,
}

/// Everything needed to rerun an experiment exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub grid: FamilyGrid,
    #[serde(default)]
    pub generator: GenParams,
    pub solver: SolverConfig,
    /// Hardware fixture; relative paths resolve against the manifest file.
    #[serde(default)]
    pub hardware: Option<PathBuf>,
    pub alphas: Vec<f64>,
    pub n_instances: usize,
    #[serde(default)]
    pub perturbation: PerturbationSettings,
    pub seed: u64,
}

impl ExperimentManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: ExperimentManifest = serde_json::from_str(&text)?;
        if let Some(hw) = &manifest.hardware {
            if hw.is_relative() {
                let base = path.parent().unwrap_or_else(|| Path::new("."));
                manifest.hardware = Some(base.join(hw));
            }
        }
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.n_assets.is_empty() || g.n_steps.is_empty() || g.budget.is_empty() || g.encodings.is_empty() {
            return Err(Error::Invalid("manifest grid has an empty axis".into()));
        }
        if self.n_instances == 0 {
            return Err(Error::Invalid("n_instances must be at least 1".into()));
        }
        if self.alphas.is_empty() {
            return Err(Error::Invalid("manifest needs at least one alpha".into()));
        }
        if let Some(a) = self.alphas.iter().find(|&&a| !(a >= 0.0)) {
            return Err(Error::Range(format!("alpha {a} must be non-negative")));
        }
        if self.perturbation.n_perturbations == 0 {
            return Err(Error::Invalid("n_perturbations must be at least 1".into()));
        }
        if let SolverConfig::Pipeline(cfg) = &self.solver {
            cfg.validate()?;
        }
        Ok(())
    }

    /// Grid cells in row-major order over (N, T, K, encoding).
    pub fn cells(&self) -> Vec<ProblemFamily> {
        let g = &self.grid;
        let mut out = Vec::new();
        for &n in &g.n_assets {
            for &t in &g.n_steps {
                for &k in &g.budget {
                    for &enc in &g.encodings {
                        let mut fam = ProblemFamily::new(n, t, k, enc);
                        fam.generator = self.generator.clone();
                        out.push(fam);
                    }
                }
            }
        }
        out
    }

    pub fn load_hardware(&self) -> Result<Option<ChimeraGraph>> {
        match (&self.hardware, &self.solver) {
            (Some(path), _) => ChimeraGraph::load(path).map(Some),
            (None, SolverConfig::Pipeline(_)) => ChimeraGraph::full(DEFAULT_CHIMERA_SIDE).map(Some),
            (None, _) => Ok(None),
        }
    }
}

/// Command-line overrides applied on top of a manifest or solver defaults.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub reads: Option<usize>,
    pub gauges: Option<usize>,
    pub sweeps: Option<usize>,
    pub chain_strengths: Vec<f64>,
    pub epsilon: Option<f64>,
    pub alphas: Vec<f64>,
    pub hardware: Option<PathBuf>,
}

impl Overrides {
    pub fn apply_to_pipeline(&self, cfg: &mut PipelineConfig) {
        if let Some(r) = self.reads {
            cfg.reads = r;
        }
        if let Some(g) = self.gauges {
            cfg.gauges = g;
        }
        if let Some(s) = self.sweeps {
            cfg.sweeps = s;
        }
        if !self.chain_strengths.is_empty() {
            cfg.chain_strengths = self.chain_strengths.clone();
        }
        if let Some(e) = self.epsilon {
            cfg.epsilon = e;
        }
    }

    pub fn apply_to_anneal(&self, p: &mut AnnealParams) {
        if let Some(r) = self.reads {
            p.reads = r;
        }
        if let Some(s) = self.sweeps {
            p.sweeps = s;
        }
    }

    pub fn apply_to_manifest(&self, m: &mut ExperimentManifest) {
        if let Some(s) = self.seed {
            m.seed = s;
        }
        if !self.alphas.is_empty() {
            m.alphas = self.alphas.clone();
        }
        if let Some(hw) = &self.hardware {
            m.hardware = Some(hw.clone());
        }
        match &mut m.solver {
            SolverConfig::Pipeline(cfg) => self.apply_to_pipeline(cfg),
            SolverConfig::Annealing(p) => self.apply_to_anneal(p),
            SolverConfig::Exhaustive => {}
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn cell_name(family: &ProblemFamily) -> String {
    format!(
        "n{}_t{}_k{}_{}",
        family.n_assets,
        family.n_steps,
        family.budget,
        family.encoding.name()
    )
}

/// Writes one instance file per (cell, index) under `out_dir/<cell>/`.
pub fn cmd_gen(manifest: &ExperimentManifest, out_dir: &Path) -> Result<Vec<PathBuf>> {
    manifest.validate()?;
    let mut written = Vec::new();
    for family in manifest.cells() {
        let dir = out_dir.join(cell_name(&family));
        create_dir(&dir)?;
        for i in 0..manifest.n_instances {
            let spec = family.instance(manifest.seed, i)?;
            let path = dir.join(format!("instance_{i:04}.json"));
            write_text(&path, &(spec.to_json_pretty() + "\n"))?;
            written.push(path);
        }
    }
    Ok(written)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompileSummary {
    pub vars: usize,
    pub density: f64,
    pub penalty_strength: f64,
}

/// Compiles a spec file into a QUBO artifact. `penalty` replaces the spec's M.
pub fn cmd_compile(spec_path: &Path, kind: EncodingKind, penalty: Option<f64>, out: &Path) -> Result<CompileSummary> {
    let mut spec = ProblemSpec::from_json_file(spec_path)?;
    if let Some(m) = penalty {
        spec.penalty_strength = m;
    }
    spec.validate()?;
    let scheme = build_encoding(kind, spec.max_holding, spec.budget, spec.n_assets)?;
    let compiled = compile(&spec, &scheme)?;
    let vars = compiled.program.dimension();
    let density = if vars >= 2 { compiled.program.density()? } else { 0.0 };
    QuboArtifact::new(&compiled, &spec, None).write(out)?;
    Ok(CompileSummary {
        vars,
        density,
        penalty_strength: spec.penalty_strength,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverName {
    Exhaustive,
    Sa,
    Pipeline,
}

impl std::str::FromStr for SolverName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(SolverName::Exhaustive),
            "sa" => Ok(SolverName::Sa),
            "pipeline" => Ok(SolverName::Pipeline),
            other => Err(Error::Invalid(format!(
                "unknown solver '{other}' (expected exhaustive, sa or pipeline)"
            ))),
        }
    }
}

/// Contents of a solution file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub solver: String,
    pub seed: u64,
    /// SHA-256 of the QUBO artifact file this solution came from.
    pub qubo_hash: String,
    pub bits: Vec<u8>,
    pub trajectory: Trajectory,
    pub value: f64,
    pub energy: f64,
    pub feasible: bool,
    pub diagnostics: serde_json::Value,
    pub samples: String,
}

pub fn samples_path(out: &Path) -> PathBuf {
    out.with_extension("samples.jsonl")
}

/// Solves a QUBO artifact and writes the solution file plus its sample set.
pub fn cmd_solve(qubo_path: &Path, solver: SolverName, overrides: &Overrides, out: &Path) -> Result<Solution> {
    let raw = fs::read(qubo_path).map_err(|e| Error::io(qubo_path, e))?;
    let artifact: QuboArtifact = serde_json::from_slice(&raw)?;
    let compiled = artifact.compiled()?;
    let spec = &artifact.spec;
    let seed = overrides.seed.unwrap_or(0);
    let meta = |name: &str, reads: usize, sweeps: usize| SampleMetadata {
        solver: name.into(),
        vartype: Vartype::Binary,
        reads,
        sweeps,
        seed,
        wall_time: 0.0,
    };
    let feasible_of = |bits: &[u8]| -> Result<bool> { Ok(decode_solution(&compiled.layout, bits)?.is_feasible(spec)) };

    let (samples, diagnostics) = match solver {
        SolverName::Exhaustive => {
            let opt = exhaustive_qubo(&compiled.program)?;
            let record = SampleRecord {
                feasible: Some(feasible_of(&opt.bits)?),
                bits: opt.bits,
                energy: opt.energy,
                count: 1,
                gauge: None,
            };
            (SampleSet::from_reads(vec![record], meta("exhaustive", 1, 0)), serde_json::Value::Null)
        }
        SolverName::Sa => {
            let mut p = AnnealParams::new(1000, 1000, seed);
            overrides.apply_to_anneal(&mut p);
            let mut set = simulated_annealing(&compiled.program, &p)?;
            for r in &mut set.records {
                r.feasible = Some(feasible_of(&r.bits)?);
            }
            (set, serde_json::Value::Null)
        }
        SolverName::Pipeline => {
            let graph = match &overrides.hardware {
                Some(path) => ChimeraGraph::load(path)?,
                None => ChimeraGraph::full(DEFAULT_CHIMERA_SIDE)?,
            };
            let mut cfg = PipelineConfig {
                seed,
                ..PipelineConfig::default()
            };
            overrides.apply_to_pipeline(&mut cfg);
            let res = annealer_pipeline(spec, &compiled, &graph, &cfg)?;
            (res.samples, serde_json::to_value(&res.diagnostics)?)
        }
    };
    let best = samples
        .lowest_feasible()
        .or_else(|| samples.lowest())
        .ok_or_else(|| Error::Numeric("solver returned no samples".into()))?;
    let decoded = decode_solution(&compiled.layout, &best.bits)?;
    let sample_file = samples_path(out);
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            create_dir(dir)?;
        }
    }
    samples.write_jsonl(&sample_file)?;
    let solution = Solution {
        solver: samples.metadata.solver.clone(),
        seed,
        qubo_hash: sha256_hex(&raw),
        bits: best.bits.clone(),
        value: model::objective(spec, &decoded.trajectory)?,
        feasible: decoded.is_feasible(spec),
        trajectory: decoded.trajectory,
        energy: best.energy,
        diagnostics,
        samples: sample_file
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    write_json(out, &solution)?;
    Ok(solution)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
}

/// Persisted result of one benchmark cell, keyed by the hash of its inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub key: String,
    pub family: ProblemFamily,
    pub status: CellStatus,
    #[serde(default)]
    pub row: Option<ExperimentRow>,
    #[serde(default)]
    pub outcomes: Vec<InstanceOutcome>,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub exit_code: i32,
}

/// Hash of everything that determines a cell's result.
pub fn cell_key(manifest: &ExperimentManifest, family: &ProblemFamily, graph: Option<&ChimeraGraph>) -> String {
    json_hash(&serde_json::json!({
        "family": family,
        "solver": manifest.solver,
        "alphas": manifest.alphas,
        "n_instances": manifest.n_instances,
        "perturbation": manifest.perturbation,
        "seed": manifest.seed,
        "hardware": graph.map(json_hash),
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkSummary {
    pub rows: Vec<ExperimentRow>,
    pub computed: usize,
    pub reused: usize,
    pub failed: Vec<CellRecord>,
}

fn unix_seconds() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn read_cell(path: &Path, key: &str) -> Option<CellRecord> {
    let text = fs::read_to_string(path).ok()?;
    let rec: CellRecord = serde_json::from_str(&text).ok()?;
    (rec.key == key && rec.status == CellStatus::Ok && rec.row.is_some()).then_some(rec)
}

/// Runs every grid cell, reusing completed cell artifacts from earlier runs.
///
/// Outputs under `out_dir`: `manifest.json`, `cells/<key>.json`,
/// `results.csv`, `results.dat`, `results.txt`, and `benchmark.log`, the only
/// file carrying timestamps.
pub fn cmd_benchmark(manifest: &ExperimentManifest, out_dir: &Path, jobs: Option<usize>) -> Result<BenchmarkSummary> {
    manifest.validate()?;
    let graph = manifest.load_hardware()?;
    let cells_dir = out_dir.join("cells");
    create_dir(&cells_dir)?;
    manifest.write(out_dir.join("manifest.json"))?;
    let log_path = out_dir.join("benchmark.log");
    let log = std::sync::Mutex::new(
        fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| Error::io(&log_path, e))?,
    );
    let note = |line: String| {
        if let Ok(mut f) = log.lock() {
            let _ = writeln!(f, "{} {}", unix_seconds(), line);
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Invalid(format!("cannot build worker pool: {e}")))?;
    let families = manifest.cells();
    let results: Vec<Result<(CellRecord, bool)>> = pool.install(|| {
        families
            .par_iter()
            .map(|family| {
                let key = cell_key(manifest, family, graph.as_ref());
                let path = cells_dir.join(format!("{key}.json"));
                if let Some(rec) = read_cell(&path, &key) {
                    note(format!("cell {} {} reused", cell_name(family), key));
                    return Ok((rec, false));
                }
                let started = Instant::now();
                let run = success_rate(
                    family,
                    &manifest.solver,
                    graph.as_ref(),
                    &manifest.alphas,
                    manifest.n_instances,
                    &manifest.perturbation,
                    manifest.seed,
                );
                let rec = match run {
                    Ok((row, outcomes)) => CellRecord {
                        key: key.clone(),
                        family: family.clone(),
                        status: CellStatus::Ok,
                        row: Some(row),
                        outcomes,
                        error: None,
                        exit_code: 0,
                    },
                    Err(e) => CellRecord {
                        key: key.clone(),
                        family: family.clone(),
                        status: CellStatus::Failed,
                        row: None,
                        outcomes: Vec::new(),
                        error: Some(e.to_string()),
                        exit_code: e.exit_code(),
                    },
                };
                write_json(&path, &rec)?;
                note(format!(
                    "cell {} {} {:?} {:.3}s",
                    cell_name(family),
                    key,
                    rec.status,
                    started.elapsed().as_secs_f64()
                ));
                Ok((rec, true))
            })
            .collect()
    });

    let mut summary = BenchmarkSummary {
        rows: Vec::new(),
        computed: 0,
        reused: 0,
        failed: Vec::new(),
    };
    for r in results {
        let (rec, computed) = r?;
        if computed {
            summary.computed += 1;
        } else {
            summary.reused += 1;
        }
        match rec.row.clone() {
            Some(row) if rec.status == CellStatus::Ok => summary.rows.push(row),
            _ => summary.failed.push(rec),
        }
    }
    let mut report = build_report(&summary.rows);
    for f in &summary.failed {
        report.text.push_str(&format!(
            "failed cell {}: {}\n",
            cell_name(&f.family),
            f.error.as_deref().unwrap_or("unknown error")
        ));
    }
    write_report(&report, out_dir)?;
    Ok(summary)
}

pub fn write_report(report: &Report, out_dir: &Path) -> Result<()> {
    create_dir(out_dir)?;
    write_text(&out_dir.join("results.csv"), &report.csv)?;
    write_text(&out_dir.join("results.dat"), &report.dat)?;
    write_text(&out_dir.join("results.txt"), &report.text)
}

/// Re-renders the text and gnuplot forms of an existing `results.csv`.
pub fn cmd_report(csv_path: &Path, out_dir: &Path) -> Result<Report> {
    let text = fs::read_to_string(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let rows = parse_report_csv(&text)?;
    let report = build_report(&rows);
    write_report(&report, out_dir)?;
    Ok(report)
}
