//! Aggregated solver output: one record per distinct state.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vartype {
    /// States are QUBO bits.
    #[default]
    Binary,
    /// States are Ising spins, stored as bits with `1 ↔ +1`.
    Spin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub bits: Vec<u8>,
    pub energy: f64,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gauge: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasible: Option<bool>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SampleMetadata {
    pub solver: String,
    pub vartype: Vartype,
    pub reads: usize,
    pub sweeps: usize,
    pub seed: u64,
    /// Seconds; kept out of serialized output so artifacts stay reproducible.
    #[serde(skip)]
    pub wall_time: f64,
}

impl PartialEq for SampleMetadata {
    /// Wall time is not part of a sample set's identity.
    fn eq(&self, other: &Self) -> bool {
        self.solver == other.solver
            && self.vartype == other.vartype
            && self.reads == other.reads
            && self.sweeps == other.sweeps
            && self.seed == other.seed
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub records: Vec<SampleRecord>,
    pub metadata: SampleMetadata,
}

type Key = (Vec<u8>, Option<usize>);

impl SampleSet {
    /// Collapses individual reads into counted records ordered by energy,
    /// then state, then gauge.
    pub fn from_reads(reads: Vec<SampleRecord>, metadata: SampleMetadata) -> Self {
        let mut set = SampleSet {
            records: Vec::new(),
            metadata,
        };
        set.absorb(reads);
        set
    }

    fn absorb(&mut self, reads: Vec<SampleRecord>) {
        let mut map: BTreeMap<Key, SampleRecord> = BTreeMap::new();
        for r in std::mem::take(&mut self.records).into_iter().chain(reads) {
            match map.entry((r.bits.clone(), r.gauge)) {
                std::collections::btree_map::Entry::Occupied(mut e) => e.get_mut().count += r.count,
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(r);
                }
            }
        }
        let mut records: Vec<SampleRecord> = map.into_values().collect();
        records.sort_by(|a, b| {
            a.energy
                .total_cmp(&b.energy)
                .then_with(|| a.bits.cmp(&b.bits))
                .then_with(|| a.gauge.cmp(&b.gauge))
        });
        self.records = records;
    }

    /// Order-independent union; read counts add up.
    pub fn merge(mut self, other: SampleSet) -> Self {
        self.metadata.reads += other.metadata.reads;
        self.metadata.wall_time += other.metadata.wall_time;
        self.absorb(other.records);
        self
    }

    pub fn total_reads(&self) -> usize {
        self.records.iter().map(|r| r.count).sum()
    }

    /// Lowest-energy record (ties: smallest state).
    pub fn lowest(&self) -> Option<&SampleRecord> {
        self.records.first()
    }

    /// Lowest-energy record flagged feasible.
    pub fn lowest_feasible(&self) -> Option<&SampleRecord> {
        self.records.iter().find(|r| r.feasible == Some(true))
    }

    /// Every read's energy, expanded by count.
    pub fn energies(&self) -> Vec<f64> {
        self.records
            .iter()
            .flat_map(|r| std::iter::repeat_n(r.energy, r.count))
            .collect()
    }

    /// One JSON object per record, preceded by a metadata line.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let mut emit = |line: String| writeln!(out, "{line}").map_err(|e| Error::io(path, e));
        emit(serde_json::to_string(&serde_json::json!({ "metadata": self.metadata }))?)?;
        for r in &self.records {
            emit(serde_json::to_string(r)?)?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        #[derive(Deserialize)]
        struct Header {
            metadata: SampleMetadata,
        }
        let header: Header = serde_json::from_str(
            lines
                .next()
                .ok_or_else(|| Error::Invalid("empty sample file".into()))?,
        )?;
        let records = lines
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<SampleRecord>, _>>()?;
        Ok(SampleSet {
            records,
            metadata: header.metadata,
        })
    }
}
