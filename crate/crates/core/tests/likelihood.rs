mod common;

use common::{dense_log_marginal, random_case};
use stdisagg::infer::{log_marginal_likelihood, Engine, EngineRoute};

#[test]
fn sparse_engine_matches_dense_oracle() {
    for seed in 0..14 {
        let c = random_case(seed, true, true);
        assert!(c.obs.lattice.n_nodes() <= 200);
        let e = Engine::new(&c.obs, EngineRoute::Sparse).unwrap();
        let got = e.log_marginal(&c.model).unwrap();
        let want = dense_log_marginal(&c.obs, &c.model);
        assert!((got - want).abs() < 1e-6, "seed {seed}: {got} vs {want}");
    }
}

#[test]
fn modal_engine_matches_dense_oracle() {
    for seed in 100..112 {
        let c = random_case(seed, false, false);
        let e = Engine::new(&c.obs, EngineRoute::Modal).unwrap();
        let got = e.log_marginal(&c.model).unwrap();
        let want = dense_log_marginal(&c.obs, &c.model);
        assert!((got - want).abs() < 1e-6, "seed {seed}: {got} vs {want}");
    }
}

#[test]
fn auto_route_picks_modal_only_when_valid() {
    let c = random_case(3, false, false);
    assert_eq!(
        Engine::new(&c.obs, EngineRoute::Auto).unwrap().route(),
        EngineRoute::Modal
    );
    let mut missing = c.obs.clone();
    missing.y[0] = f64::NAN;
    assert_eq!(
        Engine::new(&missing, EngineRoute::Auto).unwrap().route(),
        EngineRoute::Sparse
    );
    assert!(Engine::new(&missing, EngineRoute::Modal).is_err());
    let ll = log_marginal_likelihood(&missing, &c.model).unwrap();
    assert!((ll - dense_log_marginal(&missing, &c.model)).abs() < 1e-6);
}

#[test]
fn engines_agree_on_posterior() {
    for seed in [5u64, 9, 21] {
        let c = random_case(seed, false, false);
        let sparse = Engine::new(&c.obs, EngineRoute::Sparse).unwrap();
        let modal = Engine::new(&c.obs, EngineRoute::Modal).unwrap();
        let a = sparse.posterior(&c.model, &c.obs.x_fine, true, 0).unwrap();
        let b = modal.posterior(&c.model, &c.obs.x_fine, true, 0).unwrap();
        for (x, y) in a.beta_mean.iter().zip(&b.beta_mean) {
            assert!((x - y).abs() < 1e-6 * x.abs().max(1.0), "beta {x} vs {y}");
        }
        for (x, y) in a.beta_cov.iter().zip(&b.beta_cov) {
            assert!((x - y).abs() < 1e-6 * x.abs().max(1.0));
        }
        for i in 0..a.mean.len() {
            assert!(
                (a.mean[i] - b.mean[i]).abs() < 1e-7,
                "mean {i}: {} vs {}",
                a.mean[i],
                b.mean[i]
            );
            assert!(
                (a.var[i] - b.var[i]).abs() < 1e-7,
                "var {i}: {} vs {}",
                a.var[i],
                b.var[i]
            );
        }
    }
}
