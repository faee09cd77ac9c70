use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use trajq::encoding::{build_encoding, EncodingKind};
use trajq::metrics::{
    build_report, normal_draws, optimum_ranges, parse_report_csv, success_profile, success_rate, ExperimentRow,
    Oracle, PerturbationMode, PerturbationSettings, ProblemFamily, RangeRule, SolverConfig, Spectrum,
};
use trajq::model::{self, GenParams};
use trajq::qubo::{compile, QuadraticProgram};
use trajq::seed;
use trajq::solvers::{exhaustive_qubo, AnnealParams};

fn program(s: u64) -> QuadraticProgram {
    let spec = model::random_instance(&GenParams::default().with_dims(2, 2, 3), s).unwrap();
    let scheme = build_encoding(EncodingKind::Binary, 3, 3, 2).unwrap();
    compile(&spec, &scheme).unwrap().program
}

fn sorted_eigenvalues(qp: &QuadraticProgram) -> Vec<f64> {
    let n = qp.dimension();
    let mut v: Vec<f64> = SymmetricEigen::new(DMatrix::from_row_slice(n, n, qp.as_slice()))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

fn settings(n: usize, rule: RangeRule) -> PerturbationSettings {
    PerturbationSettings {
        n_perturbations: n,
        mode: PerturbationMode::Eigen,
        oracle: Oracle::Exhaustive,
        rule,
    }
}

#[test]
fn eigen_perturbation_moves_each_eigenvalue_by_its_draw() {
    let qp = program(1);
    let sp = Spectrum::new(&qp).unwrap();
    let z = normal_draws(qp.dimension(), &mut seed::rng(2));
    let alpha = 3.0;
    let perturbed = sp.perturbed(alpha, &z, PerturbationMode::Eigen);
    let mut want: Vec<f64> = sp
        .eigenvalues()
        .iter()
        .zip(&z)
        .map(|(&l, &zi)| l + alpha / 100.0 * l.abs() * zi)
        .collect();
    want.sort_by(f64::total_cmp);
    let got = sorted_eigenvalues(&perturbed);
    let scale = want.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() <= 1e-9 * scale, "{a} vs {b}");
    }
    assert_eq!(perturbed.offset, qp.offset);
}

#[test]
fn entrywise_perturbation_keeps_symmetry() {
    let qp = program(2);
    let sp = Spectrum::new(&qp).unwrap();
    let n = qp.dimension();
    let z = normal_draws(n * (n + 1) / 2, &mut seed::rng(5));
    let p = sp.perturbed(2.0, &z, PerturbationMode::Entrywise);
    assert_eq!(p.max_abs_asymmetry(), 0.0);
    assert_ne!(p, qp);
}

#[test]
fn zero_alpha_range_is_the_optimum() {
    let qp = program(3);
    let opt = exhaustive_qubo(&qp).unwrap().energy;
    let r = optimum_ranges(&qp, &[0.0], &settings(5, RangeRule::SolutionEnergy), 1).unwrap();
    assert_eq!((r[0].lo, r[0].hi), (opt, opt));
}

#[test]
fn ranges_reject_bad_input() {
    let qp = program(3);
    assert!(optimum_ranges(&qp, &[-1.0], &settings(5, RangeRule::SolutionEnergy), 1).is_err());
    assert!(optimum_ranges(&qp, &[1.0], &settings(0, RangeRule::SolutionEnergy), 1).is_err());
}

#[test]
fn perturbed_energy_rule_brackets_copy_optima() {
    let qp = program(4);
    let r = optimum_ranges(&qp, &[5.0], &settings(10, RangeRule::PerturbedEnergy), 9).unwrap()[0];
    assert!(r.lo <= r.hi);
    let literal = optimum_ranges(&qp, &[0.0, 5.0], &settings(10, RangeRule::PerturbedEnergy), 9).unwrap();
    assert_eq!(literal[1], r);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Nested draws make the solution-energy range grow with α.
    #[test]
    fn solution_energy_ranges_are_nested(s in 0u64..1000, seed in any::<u64>()) {
        let qp = program(s);
        let alphas = [0.0, 1.0, 2.0, 5.0, 10.0];
        let r = optimum_ranges(&qp, &alphas, &settings(8, RangeRule::SolutionEnergy), seed).unwrap();
        for w in r.windows(2) {
            prop_assert_eq!(w[0].lo, w[1].lo);
            prop_assert!(w[0].hi <= w[1].hi + 1e-12);
        }
    }

    #[test]
    fn success_profile_is_monotone(s in 0u64..1000, seed in any::<u64>(), slack in 0.0f64..5.0) {
        let qp = program(s);
        let opt = exhaustive_qubo(&qp).unwrap().energy;
        let flags = success_profile(&qp, opt + slack, &[0.0, 1.0, 2.0, 5.0], &settings(8, RangeRule::SolutionEnergy), seed).unwrap();
        for w in flags.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
    }
}

#[test]
fn oracle_scores_full_marks_at_zero() {
    let fam = ProblemFamily::new(2, 2, 3, EncodingKind::Unary);
    let (row, outcomes) = success_rate(
        &fam,
        &SolverConfig::Exhaustive,
        None,
        &[0.0, 1.0],
        6,
        &settings(4, RangeRule::SolutionEnergy),
        5,
    )
    .unwrap();
    assert_eq!(row.s(0.0), Some(100.0));
    assert_eq!(row.s(1.0), Some(100.0));
    assert_eq!(row.vars, 12);
    assert!((row.density - 0.73).abs() < 0.005);
    assert_eq!(outcomes.len(), 6);
}

#[test]
fn weak_annealer_scores_below_oracle() {
    let fam = ProblemFamily::new(2, 3, 3, EncodingKind::Binary);
    let weak = SolverConfig::Annealing(AnnealParams::new(1, 1, 0));
    let (row, _) = success_rate(&fam, &weak, None, &[0.0], 10, &settings(2, RangeRule::SolutionEnergy), 5).unwrap();
    assert!(row.s(0.0).unwrap() < 100.0);
}

#[test]
fn report_csv_round_trips() {
    let rows = vec![
        ExperimentRow {
            n_assets: 2,
            n_steps: 3,
            budget: 3,
            encoding: EncodingKind::Binary,
            vars: 12,
            density: 0.515151,
            qubits: Some(31),
            chain: Some(3),
            s_values: vec![(0.0, 100.0), (1.0, 100.0), (2.0, 100.0)],
        },
        ExperimentRow {
            n_assets: 3,
            n_steps: 4,
            budget: 3,
            encoding: EncodingKind::Unary,
            vars: 36,
            density: 0.3,
            qubits: None,
            chain: None,
            s_values: vec![(0.0, 45.0), (1.0, 90.0), (2.0, 95.5)],
        },
    ];
    let report = build_report(&rows);
    let back = parse_report_csv(&report.csv).unwrap();
    assert_eq!(back.len(), 2);
    assert_eq!(back[0].s_values, rows[0].s_values);
    assert_eq!(back[1].qubits, None);
    assert_eq!(build_report(&back).csv, report.csv);
    assert!(report.text.lines().next().unwrap().contains("S(0)"));
    assert!(report.dat.starts_with("# N T K"));
}

#[test]
fn report_sorts_by_leading_success_rate() {
    let row = |s0: f64, vars: usize| ExperimentRow {
        n_assets: 2,
        n_steps: 2,
        budget: 3,
        encoding: EncodingKind::Binary,
        vars,
        density: 0.5,
        qubits: None,
        chain: None,
        s_values: vec![(0.0, s0)],
    };
    let r = build_report(&[row(50.0, 8), row(90.0, 16), row(90.0, 12)]);
    let vars: Vec<&str> = r.csv.lines().skip(1).map(|l| l.split(',').nth(4).unwrap()).collect();
    assert_eq!(vars, ["12", "16", "8"]);
}
