//! Chimera topology: an `s × s` grid of unit cells, each a complete bipartite
//! K₄,₄ between a vertical half (side 0) and a horizontal half (side 1).
//! Side-0 qubits link to the same position in the cell below, side-1 qubits
//! to the same position in the cell to the right.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Serialized hardware fixture: the grid side and its defects.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardwareDescription {
    pub side: usize,
    #[serde(default)]
    pub inactive_qubits: Vec<usize>,
    #[serde(default)]
    pub inactive_couplers: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "HardwareDescription", into = "HardwareDescription")]
pub struct ChimeraGraph {
    side: usize,
    inactive_qubits: BTreeSet<usize>,
    inactive_couplers: BTreeSet<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl TryFrom<HardwareDescription> for ChimeraGraph {
    type Error = Error;

    fn try_from(d: HardwareDescription) -> Result<Self> {
        ChimeraGraph::new(d.side, d.inactive_qubits, d.inactive_couplers)
    }
}

impl From<ChimeraGraph> for HardwareDescription {
    fn from(g: ChimeraGraph) -> Self {
        HardwareDescription {
            side: g.side,
            inactive_qubits: g.inactive_qubits.into_iter().collect(),
            inactive_couplers: g.inactive_couplers.into_iter().collect(),
        }
    }
}

/// Edges of the defect-free graph with `a < b`, in ascending order.
fn full_edges(s: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::with_capacity(16 * s * s + 8 * s * s.saturating_sub(1));
    for row in 0..s {
        for col in 0..s {
            for i in 0..4 {
                let v = ChimeraGraph::index(s, row, col, 0, i);
                for j in 0..4 {
                    edges.push((v, ChimeraGraph::index(s, row, col, 1, j)));
                }
                if row + 1 < s {
                    edges.push((v, ChimeraGraph::index(s, row + 1, col, 0, i)));
                }
                if col + 1 < s {
                    let h = ChimeraGraph::index(s, row, col, 1, i);
                    edges.push((h, ChimeraGraph::index(s, row, col + 1, 1, i)));
                }
            }
        }
    }
    edges.sort_unstable();
    edges
}

impl ChimeraGraph {
    pub fn new(
        side: usize,
        inactive_qubits: impl IntoIterator<Item = usize>,
        inactive_couplers: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        if side == 0 {
            return Err(Error::Invalid("chimera side must be at least 1".into()));
        }
        let total = 8 * side * side;
        let inactive_qubits: BTreeSet<usize> = inactive_qubits.into_iter().collect();
        if let Some(&q) = inactive_qubits.iter().find(|&&q| q >= total) {
            return Err(Error::Range(format!("inactive qubit {q} outside 0..{total}")));
        }
        let edges = full_edges(side);
        let mut couplers = BTreeSet::new();
        for (a, b) in inactive_couplers {
            let key = (a.min(b), a.max(b));
            if edges.binary_search(&key).is_err() {
                return Err(Error::Range(format!("inactive coupler {key:?} is not a chimera edge")));
            }
            couplers.insert(key);
        }
        let mut adjacency = vec![Vec::new(); total];
        for &(a, b) in &edges {
            if inactive_qubits.contains(&a) || inactive_qubits.contains(&b) || couplers.contains(&(a, b)) {
                continue;
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(ChimeraGraph {
            side,
            inactive_qubits,
            inactive_couplers: couplers,
            adjacency,
        })
    }

    pub fn full(side: usize) -> Result<Self> {
        Self::new(side, [], [])
    }

    pub fn from_description(d: &HardwareDescription) -> Result<Self> {
        Self::new(d.side, d.inactive_qubits.iter().copied(), d.inactive_couplers.iter().copied())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let desc: HardwareDescription = serde_json::from_str(&text)?;
        Self::from_description(&desc)
    }

    fn index(s: usize, row: usize, col: usize, half: usize, k: usize) -> usize {
        (row * s + col) * 8 + half * 4 + k
    }

    /// Qubit id of position `k` on `half` (0 vertical, 1 horizontal) in cell `(row, col)`.
    pub fn qubit(&self, row: usize, col: usize, half: usize, k: usize) -> usize {
        debug_assert!(row < self.side && col < self.side && half < 2 && k < 4);
        Self::index(self.side, row, col, half, k)
    }

    /// Inverse of [`ChimeraGraph::qubit`].
    pub fn coordinates(&self, q: usize) -> (usize, usize, usize, usize) {
        let cell = q / 8;
        (cell / self.side, cell % self.side, (q % 8) / 4, q % 4)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// `8s²`, including inactive qubits.
    pub fn total_qubits(&self) -> usize {
        8 * self.side * self.side
    }

    /// Active qubits.
    pub fn num_qubits(&self) -> usize {
        self.total_qubits() - self.inactive_qubits.len()
    }

    pub fn is_active(&self, q: usize) -> bool {
        q < self.total_qubits() && !self.inactive_qubits.contains(&q)
    }

    pub fn inactive_qubits(&self) -> &BTreeSet<usize> {
        &self.inactive_qubits
    }

    pub fn inactive_couplers(&self) -> &BTreeSet<(usize, usize)> {
        &self.inactive_couplers
    }

    pub fn neighbors(&self, q: usize) -> &[usize] {
        &self.adjacency[q]
    }

    pub fn degree(&self, q: usize) -> usize {
        self.adjacency[q].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a < self.adjacency.len() && self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Active edges `(a, b)` with `a < b`, ascending.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, list) in self.adjacency.iter().enumerate() {
            out.extend(list.iter().filter(|&&b| b > a).map(|&b| (a, b)));
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// Largest complete graph that fits on a defect-free `s × s` chimera: `4s + 1`.
pub fn max_clique_size(side: usize) -> usize {
    4 * side + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        let g4 = ChimeraGraph::full(4).unwrap();
        assert_eq!(g4.num_qubits(), 128);
        assert_eq!(g4.edge_count(), 352);
        let g1 = ChimeraGraph::full(1).unwrap();
        assert_eq!((g1.num_qubits(), g1.edge_count()), (8, 16));
        assert_eq!(ChimeraGraph::full(12).unwrap().num_qubits(), 1152);
        assert!(ChimeraGraph::full(0).is_err());
    }

    #[test]
    fn clique_sizes() {
        assert_eq!(max_clique_size(12), 49);
        assert_eq!(max_clique_size(4), 17);
        assert_eq!(max_clique_size(1), 5);
    }

    #[test]
    fn coordinates_round_trip() {
        let g = ChimeraGraph::full(3).unwrap();
        for q in 0..g.total_qubits() {
            let (r, c, h, k) = g.coordinates(q);
            assert_eq!(g.qubit(r, c, h, k), q);
        }
    }

    #[test]
    fn defects_remove_edges() {
        let g = ChimeraGraph::new(2, [0], [(8, 12)]).unwrap();
        assert_eq!(g.num_qubits(), 31);
        assert_eq!(g.degree(0), 0);
        assert!(!g.has_edge(8, 12));
        assert!(g.has_edge(8, 13));
        assert!(ChimeraGraph::new(2, [], [(0, 1)]).is_err());
        assert!(ChimeraGraph::new(2, [32], []).is_err());
    }

    #[test]
    fn description_json_round_trip() {
        let g = ChimeraGraph::new(3, [5, 17], [(0, 4)]).unwrap();
        let text = serde_json::to_string(&g).unwrap();
        let back: ChimeraGraph = serde_json::from_str(&text).unwrap();
        assert_eq!(g, back);
    }
}
