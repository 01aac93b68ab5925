mod common;

use hypergam::backend::ScoreCache;
use hypergam::design::{build_osullivan_basis, orthogonalize_block, RawCovariate};
use hypergam::dof::{spectrum, DofGrid};
use hypergam::model_space::{enumerate_models, log_model_prior, prior_probability_exact, ModelIndex};
use hypergam::sampler::sample_gaussian;
use hypergam::search::{mh_search, propose, transition_probability};
use hypergam::GPrior;
use num_rational::Ratio;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn covariate(seed: u64, n: usize) -> RawCovariate<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RawCovariate::new("x", (0..n).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn design_blocks_are_orthogonal(seed in 0u64..100_000, n in 20usize..120, knots in 1usize..6, weighted in any::<bool>()) {
        let cov = covariate(seed, n);
        let basis = build_osullivan_basis(&cov, knots).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let block = orthogonalize_block(&cov, &basis, weighted.then_some(w.as_slice())).unwrap();
        let (a, b, c) = block.orthogonality_residuals();
        let tol = 1e-10 * n as f64;
        prop_assert!(a < tol && b < tol && c < tol, "{a} {b} {c}");
    }

    #[test]
    fn dof_roundtrip(seed in 0u64..100_000, frac in 0.001f64..0.999) {
        let cov = covariate(seed, 60);
        let basis = build_osullivan_basis(&cov, 4).unwrap();
        let block = orthogonalize_block(&cov, &basis, None).unwrap();
        let sp = spectrum(&block).unwrap();
        let k = sp.k() as f64;
        let d = 1.0 + frac * k;
        let rho = sp.rho_from_dof(d).unwrap();
        prop_assert!((sp.dof_from_rho(rho) - d).abs() < 1e-8);
    }

    #[test]
    fn proposal_accounting_balances_exactly(p in 1usize..5, levels in 2usize..6, seed in 0u64..10_000) {
        let grid = DofGrid::<f64>::integers(levels - 1);
        let pm = Ratio::new(3u64, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = ModelIndex::new((0..p).map(|_| rng.random_range(0..levels as u8)).collect());
        for _ in 0..50 {
            let prop = propose(&d, grid.len(), 0.75, &mut rng);
            prop_assert!(prop.model.indices().iter().all(|&i| (i as usize) < levels));
            if prop.model != d {
                let fwd = transition_probability(&d, &prop.model, levels, pm);
                let back = transition_probability(&prop.model, &d, levels, pm);
                prop_assert_eq!(fwd / prop.ratio.exact(), back);
            }
        }
    }
}

#[test]
fn prior_normalises_and_halves_exclusion() {
    for (p, levels) in [(1usize, 2usize), (2, 3), (3, 4), (4, 3), (5, 5)] {
        let grid = DofGrid::<f64>::integers(levels - 1);
        let mut total = Ratio::from_integer(0u128);
        let mut excluded = vec![Ratio::from_integer(0u128); p];
        let mut log_total = 0.0;
        for m in enumerate_models(p, &grid, 100_000).unwrap() {
            let pr = prior_probability_exact(p, m.included(), levels - 1);
            total += pr;
            for (j, &i) in m.indices().iter().enumerate() {
                if i == 0 {
                    excluded[j] += pr;
                }
            }
            log_total += log_model_prior(&m, &grid).exp();
        }
        assert_eq!(total, Ratio::from_integer(1));
        assert!(excluded.iter().all(|e| *e == Ratio::new(1, 2)));
        assert!((log_total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn chain_stays_on_grid() {
    let be = common::gaussian_toy(40, 3, 1, 3, Some(vec![0.0, 1.0, 2.0, 3.0]), GPrior::HyperGN);
    let cache = ScoreCache::new();
    let st = mh_search(&be, &cache, ModelIndex::null(3), 5_000, 0.75, 3).unwrap();
    assert!(st.visit_counts.keys().all(|m| m.indices().iter().all(|&i| i < 4)));
    assert_eq!(st.visit_counts.values().sum::<u64>(), 5_000);
}

#[test]
fn seeded_runs_are_bit_identical() {
    let be = common::gaussian_toy(40, 3, 2, 3, None, GPrior::HyperG);
    let m = ModelIndex::new(vec![3, 1, 0]);
    let a = sample_gaussian(&be, &m, 300, 17).unwrap();
    let b = sample_gaussian(&be, &m, 300, 17).unwrap();
    assert_eq!(a.beta0, b.beta0);
    assert_eq!(a.u, b.u);
    assert_eq!(a.g, b.g);
    let c = sample_gaussian(&be, &m, 300, 18).unwrap();
    assert_ne!(a.g, c.g);

    let (c1, c2) = (ScoreCache::new(), ScoreCache::new());
    let s1 = mh_search(&be, &c1, ModelIndex::null(3), 3_000, 0.75, 5).unwrap();
    let s2 = mh_search(&be, &c2, ModelIndex::null(3), 3_000, 0.75, 5).unwrap();
    assert_eq!(s1.visit_counts, s2.visit_counts);
    assert_eq!(s1.current, s2.current);
}
