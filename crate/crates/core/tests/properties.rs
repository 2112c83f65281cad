use proptest::prelude::*;
use rand::Rng;

use lqhv::bounds::{state_bound, generic_bound};
use lqhv::gamma::{compute_gamma, covering_split_measure, measure_from_source_operator, MeasurementParametrization};
use lqhv::norms::covering_upper;
use lqhv::random::{random_density, seeded, SeededRng};
use lqhv::scenarios::{
    analog_inequality_check, joint_distribution, tuples, violation_ratio, BellFunctional, OutcomeSpace, Scenario,
};
use lqhv::source_ops::{build_tau, build_tau_tilde_at};
use lqhv::states::QuantumState;
use lqhv::Exec;

fn random_scenario(rng: &mut SeededRng, dims: &[usize], settings: &[usize], rank: usize) -> Scenario {
    let dim: usize = dims.iter().product();
    let rho = QuantumState::new(dims.to_vec(), random_density(rng, dim, rank.min(dim))).unwrap();
    let param = MeasurementParametrization::new(dims, settings, &vec![2; dims.len()]).unwrap();
    let p: Vec<f64> = (0..param.len()).map(|_| rng.random::<f64>() * 6.0 - 3.0).collect();
    Scenario::new(rho, param.povms(&p).unwrap(), OutcomeSpace::plus_minus(dims.len())).unwrap()
}

fn shapes() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    prop_oneof![
        (1usize..=3, 1usize..=3).prop_map(|(a, b)| (vec![2, 2], vec![a, b])),
        (1usize..=2, 1usize..=2).prop_map(|(a, b)| (vec![3, 2], vec![a, b])),
        (1usize..=2, 1usize..=2, 1usize..=2).prop_map(|(a, b, c)| (vec![2, 2, 2], vec![a, b, c])),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gamma_sits_between_functionals_and_source_norms(seed in any::<u64>(), (dims, settings) in shapes(), rank in 1usize..4) {
        let mut rng = seeded(seed);
        let sc = random_scenario(&mut rng, &dims, &settings, rank);
        let g = compute_gamma(&sc).unwrap();
        prop_assert!(g.gamma >= 1.0 - 1e-9);
        prop_assert!(g.optimal_measure.marginal_deviation(&sc).unwrap() <= 1e-8);
        let m = &g.optimal_measure;
        prop_assert!((m.total_variation() - (1.0 + 2.0 * m.negative_mass())).abs() <= 1e-9);

        // any functional is bounded by gamma, and the dual attains it
        let n_coeffs = settings.iter().product::<usize>() << dims.len();
        let coeffs: Vec<f64> = (0..n_coeffs).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let f = BellFunctional::new(settings.clone(), vec![2; dims.len()], coeffs).unwrap();
        prop_assert!(violation_ratio(&sc, &f, Exec::Sequential).unwrap() <= g.gamma + 1e-6);
        prop_assert!(analog_inequality_check(&sc, &f, g.gamma, Exec::Sequential).unwrap());
        let dual = violation_ratio(&sc, &g.dual_functional, Exec::Sequential).unwrap();
        prop_assert!((dual - g.gamma).abs() <= 1e-5);

        // one-site-undilated source operators bound gamma from above
        for u in 0..dims.len() {
            let mut reduced = settings.clone();
            reduced[u] = 1;
            for t in [build_tau(sc.state(), &reduced, None).unwrap(), build_tau_tilde_at(sc.state(), &reduced, u).unwrap()] {
                let (upper, _) = covering_upper(t.matrix()).unwrap();
                prop_assert!(g.gamma <= upper + 1e-6);
            }
        }
        let generic = generic_bound(&dims, &settings).unwrap();
        prop_assert!(g.gamma <= generic.final_upper + 1e-6);
        let specific = state_bound(sc.state(), &settings, Exec::Sequential).unwrap();
        prop_assert!(g.gamma <= specific.final_upper + 1e-6);
        prop_assert!(specific.final_upper <= generic.final_upper + 1e-9);
    }

    #[test]
    fn explicit_measures_reproduce_marginals(seed in any::<u64>(), (dims, settings) in shapes()) {
        let mut rng = seeded(seed);
        let sc = random_scenario(&mut rng, &dims, &settings, 4);
        let t = build_tau(sc.state(), &settings, None).unwrap();
        let mu = measure_from_source_operator(&t, sc.povms(), sc.outcomes()).unwrap();
        prop_assert!(mu.marginal_deviation(&sc).unwrap() <= 1e-9);
        prop_assert!(mu.total_variation() <= t.trace_norm().unwrap() + 1e-8);

        let g = compute_gamma(&sc).unwrap().gamma;
        let u = rng.random_range(0..dims.len());
        let mut reduced = settings.clone();
        reduced[u] = 1;
        let t = build_tau_tilde_at(sc.state(), &reduced, u).unwrap();
        let nu = covering_split_measure(&t, sc.povms(), sc.outcomes(), u).unwrap();
        prop_assert!(nu.marginal_deviation(&sc).unwrap() <= 1e-8);
        prop_assert!((nu.total_mass() - 1.0).abs() <= 1e-9);
        prop_assert!(nu.total_variation() <= t.trace_norm().unwrap() + 1e-8);
        prop_assert!(nu.total_variation() >= g - 1e-8);
    }

    #[test]
    fn distributions_are_nonsignaling(seed in any::<u64>(), (dims, settings) in shapes()) {
        let mut rng = seeded(seed);
        let sc = random_scenario(&mut rng, &dims, &settings, 2);
        let n = dims.len();
        // marginal over every site but `n_fixed` may not depend on the others' settings
        for fixed in 0..n {
            let mut reference: Vec<Option<Vec<f64>>> = vec![None; settings[fixed]];
            for s in tuples(&settings) {
                let p = joint_distribution(&sc, &s).unwrap();
                let mut marginal = vec![0.0; 2];
                for (k, v) in tuples(&vec![2; n]).zip(&p) {
                    marginal[k[fixed]] += v;
                }
                match &reference[s[fixed]] {
                    None => reference[s[fixed]] = Some(marginal),
                    Some(r) => {
                        for (a, b) in r.iter().zip(&marginal) {
                            prop_assert!((a - b).abs() <= 1e-9);
                        }
                    }
                }
            }
        }
    }
}
