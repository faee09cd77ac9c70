use proptest::prelude::*;
use rand::Rng;
use trajq::encoding::{build_encoding, EncodingKind};
use trajq::hardware::{
    apply_noise, clique_embedding, embed_problem, gauge_transform, greedy_embedding, problem_edges,
    random_gauge, unembed, ChimeraGraph, GreedyOptions, HardwareDescription, NoiseModel,
};
use trajq::model::{self, GenParams};
use trajq::qubo::{compile, qubo_to_ising, IsingModel};
use trajq::seed;

fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn table_row_ising() -> IsingModel {
    let spec = model::random_instance(&GenParams::default().with_dims(2, 3, 3), 1).unwrap();
    let scheme = build_encoding(EncodingKind::Binary, 3, 3, 2).unwrap();
    qubo_to_ising(&compile(&spec, &scheme).unwrap().program)
}

#[test]
fn chimera_degrees_and_edge_count() {
    for side in 1..=6 {
        let g = ChimeraGraph::full(side).unwrap();
        assert_eq!(g.num_qubits(), 8 * side * side);
        // 16 intra-cell edges per cell plus 4 links per adjacent cell pair
        assert_eq!(g.edge_count(), 16 * side * side + 2 * 4 * side * (side - 1));
        for q in 0..g.num_qubits() {
            assert!(g.degree(q) <= 6);
            for &p in g.neighbors(q) {
                assert!(g.has_edge(p, q));
            }
        }
    }
}

#[test]
fn yield_fixture_drops_listed_qubits_and_couplers() {
    let full = ChimeraGraph::load(fixture("chimera8.json")).unwrap();
    let g = ChimeraGraph::load(fixture("chimera8_yield.json")).unwrap();
    let d: HardwareDescription =
        serde_json::from_str(&std::fs::read_to_string(fixture("chimera8_yield.json")).unwrap()).unwrap();
    assert_eq!(g.num_qubits(), full.num_qubits() - d.inactive_qubits.len());
    for &q in &d.inactive_qubits {
        assert!(!g.is_active(q));
        assert_eq!(g.degree(q), 0);
    }
    for &(a, b) in &d.inactive_couplers {
        assert!(full.has_edge(a, b) && !g.has_edge(a, b));
    }
}

#[test]
fn clique_chains_respect_bound() {
    for side in 1..=4 {
        let g = ChimeraGraph::full(side).unwrap();
        for v in 1..=4 * side {
            let emb = clique_embedding(v, &g).unwrap();
            let edges: Vec<(usize, usize)> = (0..v).flat_map(|i| (i + 1..v).map(move |j| (i, j))).collect();
            emb.verify(v, &edges, &g).unwrap();
            assert!(emb.max_chain_length() <= v.div_ceil(4) + 1, "V={v} s={side}");
        }
    }
}

#[test]
fn five_clique_on_single_cell() {
    let g = ChimeraGraph::full(1).unwrap();
    let emb = clique_embedding(5, &g).unwrap();
    assert_eq!(emb.num_variables(), 5);
    assert!(emb.max_chain_length() <= 2);
    assert!(emb.qubit_count() <= 8);
}

/// Greedy placement of the 12-variable table problem on chimera(8): the
/// longest chain is at most 4 for at least half the seeds.
#[test]
fn greedy_table_problem_short_chains() {
    let ising = table_row_ising();
    let edges = problem_edges(&ising);
    let g = ChimeraGraph::load(fixture("chimera8.json")).unwrap();
    let seeds = 100;
    let mut short = 0;
    for s in 0..seeds {
        let emb = greedy_embedding(12, &edges, &g, s, GreedyOptions::default()).unwrap();
        emb.verify(12, &edges, &g).unwrap();
        if emb.max_chain_length() <= 4 {
            short += 1;
        }
    }
    assert!(2 * short >= seeds, "{short}/{seeds} seeds reached chain ≤ 4");
}

#[test]
fn greedy_on_yield_fixture_avoids_dead_qubits() {
    let ising = table_row_ising();
    let edges = problem_edges(&ising);
    let g = ChimeraGraph::load(fixture("chimera8_yield.json")).unwrap();
    let emb = greedy_embedding(12, &edges, &g, 3, GreedyOptions::default()).unwrap();
    emb.verify(12, &edges, &g).unwrap();
    assert!(emb.chains.iter().flatten().all(|&q| g.is_active(q)));
}

#[test]
fn native_subgraph_embeds_with_single_qubits() {
    let g = ChimeraGraph::full(2).unwrap();
    // a 4-cycle inside one cell is already native
    let qs = [g.qubit(0, 0, 0, 0), g.qubit(0, 0, 1, 0), g.qubit(0, 0, 0, 1), g.qubit(0, 0, 1, 1)];
    let edges: Vec<(usize, usize)> = (0..4)
        .flat_map(|i| (i + 1..4).map(move |j| (i, j)))
        .filter(|&(i, j)| g.has_edge(qs[i], qs[j]))
        .collect();
    assert_eq!(edges.len(), 4);
    let emb = greedy_embedding(4, &edges, &g, 0, GreedyOptions::default()).unwrap();
    assert_eq!(emb.max_chain_length(), 1);
}

#[test]
fn uniform_noise_stays_within_epsilon_halfwidth() {
    let n = 1000;
    let mut base = IsingModel::new(n);
    let mut rng = seed::rng(1);
    for h in &mut base.h {
        *h = rng.random_range(-1.0..1.0);
    }
    for i in 0..n - 1 {
        base.add_coupling(i, i + 1, rng.random_range(-0.5..0.5));
    }
    let eps = 0.03;
    let (mut worst_h, mut worst_j, mut draws) = (0.0f64, 0.0f64, 0usize);
    for s in 0..60 {
        let noisy = apply_noise(&base, &NoiseModel::new(eps, s)).unwrap();
        for (a, b) in noisy.h.iter().zip(&base.h) {
            worst_h = worst_h.max((a - b).abs());
        }
        for (k, v) in &noisy.couplings {
            worst_j = worst_j.max((v - base.couplings[k]).abs());
        }
        draws += 2 * n - 1;
    }
    assert!(draws >= 100_000);
    assert!(worst_h <= eps * 2.0 + 1e-12 && worst_h > eps * 2.0 * 0.99);
    assert!(worst_j <= eps * 1.0 + 1e-12 && worst_j > eps * 0.99);
}

#[test]
fn chain_break_costs_twice_chain_strength() {
    let g = ChimeraGraph::full(1).unwrap();
    let emb = clique_embedding(5, &g).unwrap();
    let logical = IsingModel::new(5);
    let sigma = 1.7;
    let phys = embed_problem(&logical, &emb, &g, sigma).unwrap();
    let chain = phys.chains.iter().find(|c| c.len() == 2).unwrap();
    let aligned = phys.aligned_spins(&[1; 5]);
    let mut broken = aligned.clone();
    broken[chain[1]] = -1;
    let gap = phys.model.energy(&broken).unwrap() - phys.model.energy(&aligned).unwrap();
    assert!((gap - 2.0 * sigma).abs() <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gauge_preserves_energy_pointwise(n in 1usize..10, s in any::<u64>()) {
        let mut rng = seed::rng(s);
        let mut m = IsingModel::new(n);
        for h in &mut m.h {
            *h = rng.random_range(-1.0..1.0);
        }
        for i in 0..n {
            for j in i + 1..n {
                m.add_coupling(i, j, rng.random_range(-1.0..1.0));
            }
        }
        let g = random_gauge(n, &mut rng);
        let gm = gauge_transform(&m, &g).unwrap();
        let spins: Vec<i8> = (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let flipped: Vec<i8> = spins.iter().zip(&g).map(|(a, b)| a * b).collect();
        prop_assert_eq!(m.energy(&spins).unwrap(), gm.energy(&flipped).unwrap());
    }

    #[test]
    fn unembed_recovers_aligned_chains(spins in prop::collection::vec(prop::bool::ANY, 1..8), s in any::<u64>()) {
        let logical: Vec<i8> = spins.iter().map(|&b| if b { 1 } else { -1 }).collect();
        let chains: Vec<Vec<usize>> = (0..logical.len()).map(|i| vec![3 * i, 3 * i + 1, 3 * i + 2]).collect();
        let physical: Vec<i8> = logical.iter().flat_map(|&v| [v, v, v]).collect();
        let u = unembed(&physical, &chains, s).unwrap();
        prop_assert_eq!(u.spins, logical);
        prop_assert_eq!(u.broken_chains, 0);
    }
}
