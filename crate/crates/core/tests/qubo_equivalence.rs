use proptest::prelude::*;
use trajq::encoding::{build_encoding, EncodingKind};
use trajq::model::{self, GenParams, RiskMode, TradeMode};
use trajq::qubo::{
    bits_from_spins, compile, decode_solution, integer_energy, ising_to_qubo, qubo_to_ising, spins_from_bits,
    QuadraticProgram, QuboArtifact,
};
use trajq::solvers::{exhaustive_integer, exhaustive_qubo};

fn bitstrings(n: usize) -> impl Iterator<Item = Vec<u8>> {
    (0u64..1 << n).map(move |m| (0..n).map(|i| ((m >> i) & 1) as u8).collect())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn random_program(n: usize, entries: &[f64]) -> QuadraticProgram {
    let mut terms = Vec::new();
    let mut it = entries.iter().cycle();
    for i in 0..n {
        for j in i..n {
            terms.push((i, j, *it.next().unwrap()));
        }
    }
    QuadraticProgram::from_terms(n, &terms, 0.25).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ising_round_trip_preserves_energies(n in 1usize..8, entries in prop::collection::vec(-5.0f64..5.0, 1..40)) {
        let qp = random_program(n, &entries);
        let ising = qubo_to_ising(&qp);
        let back = ising_to_qubo(&ising);
        for bits in bitstrings(n) {
            let e = qp.evaluate(&bits).unwrap();
            prop_assert!(close(e, ising.energy(&spins_from_bits(&bits)).unwrap()));
            prop_assert!(close(e, back.evaluate(&bits).unwrap()));
        }
    }

    #[test]
    fn spin_bit_maps_are_inverse(bits in prop::collection::vec(0u8..2, 0..20)) {
        prop_assert_eq!(bits_from_spins(&spins_from_bits(&bits)), bits);
    }
}

/// Every compiled energy equals the integer model's `−(objective + penalty)`,
/// across risk modes, trade modes and the partition encoding.
#[test]
fn compiled_energy_matches_integer_model_in_all_modes() {
    let kinds = [
        EncodingKind::Binary,
        EncodingKind::Unary,
        EncodingKind::Sequential,
        EncodingKind::Modified,
        EncodingKind::Partition,
    ];
    let mut checked = 0;
    for (s, kind) in kinds.into_iter().enumerate() {
        for risk in [RiskMode::Covariance, RiskMode::SampleVariance] {
            for trade in [TradeMode::Rebalance, TradeMode::Liquidate] {
                if kind == EncodingKind::Partition && trade == TradeMode::Liquidate {
                    continue;
                }
                let params = GenParams {
                    risk_mode: risk,
                    trade_mode: trade,
                    ..GenParams::default().with_dims(2, 2, 2)
                };
                let spec = model::random_instance(&params, 100 + s as u64).unwrap();
                let scheme = build_encoding(kind, spec.max_holding, spec.budget, 2).unwrap();
                let c = compile(&spec, &scheme).unwrap();
                assert!(c.program.dimension() <= 16);
                for bits in bitstrings(c.program.dimension()) {
                    let decoded = decode_solution(&c.layout, &bits).unwrap();
                    let want = integer_energy(&spec, &decoded).unwrap();
                    assert!(close(c.program.evaluate(&bits).unwrap(), want), "{kind:?} {risk:?} {trade:?}");
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 1000);
}

#[test]
fn liquidation_optimum_agrees_with_integer_search() {
    let params = GenParams {
        trade_mode: TradeMode::Liquidate,
        ..GenParams::default().with_dims(2, 2, 3)
    };
    for s in 0..5 {
        let spec = model::random_instance(&params, s).unwrap();
        let scheme = build_encoding(EncodingKind::Binary, spec.max_holding, spec.budget, 2).unwrap();
        let c = compile(&spec, &scheme).unwrap();
        let q = exhaustive_qubo(&c.program).unwrap();
        let traj = decode_solution(&c.layout, &q.bits).unwrap().trajectory;
        let int = exhaustive_integer(&spec).unwrap();
        assert!(model::is_feasible(&spec, &traj));
        assert!(close(model::objective(&spec, &traj).unwrap(), int.value));
    }
}

#[test]
fn artifact_round_trip_preserves_program() {
    let spec = model::random_instance(&GenParams::default().with_dims(2, 3, 3), 4).unwrap();
    let scheme = build_encoding(EncodingKind::Binary, 3, 3, 2).unwrap();
    let c = compile(&spec, &scheme).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.json");
    QuboArtifact::new(&c, &spec, Some(4)).write(&path).unwrap();
    let back = QuboArtifact::read(&path).unwrap().compiled().unwrap();
    assert_eq!(back.layout, c.layout);
    for bits in bitstrings(12).step_by(17) {
        assert!(close(back.program.evaluate(&bits).unwrap(), c.program.evaluate(&bits).unwrap()));
    }
}

#[test]
fn artifact_rejects_unknown_format() {
    let spec = model::random_instance(&GenParams::default().with_dims(2, 1, 1), 1).unwrap();
    let scheme = build_encoding(EncodingKind::Unary, 1, 1, 2).unwrap();
    let mut art = QuboArtifact::new(&compile(&spec, &scheme).unwrap(), &spec, None);
    art.format = "other/9".into();
    assert!(art.compiled().is_err());
}
