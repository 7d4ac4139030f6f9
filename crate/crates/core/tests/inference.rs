use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use stdisagg::aggregate::{aggregate_observe, build_projection, AggScheme};
use stdisagg::infer::{
    exceedance_of, fit, log_marginal_likelihood, predict_at, EngineRoute, FitOptions,
};
use stdisagg::stmodel::{simulate_field, SimulationRoute};
use stdisagg::{Extents, Field, LatticeSpec, ModelKind, ModelSpec, ObsModel};

fn lattice(n: usize, nt: usize) -> LatticeSpec {
    LatticeSpec::build(n, n, nt, Extents::unit_square(nt), 0).unwrap()
}

fn simulated(
    n: usize,
    nt: usize,
    scheme: AggScheme,
    model: ModelSpec,
    seed: u64,
) -> (Field, ObsModel) {
    let lat = lattice(n, nt);
    let truth =
        simulate_field(&model, &lat, &[0.3], &[], seed, SimulationRoute::Structured).unwrap();
    let proj = build_projection(&lat, scheme).unwrap();
    let y = aggregate_observe(&truth, &proj, model.tau_eps, seed + 1).unwrap();
    let obs = ObsModel::new(lat, proj, y, &[], &[], model).unwrap();
    (truth, obs)
}

#[test]
fn prediction_is_affine_equivariant() {
    let m = ModelSpec::new(ModelKind::NonSeparable121, 0.2, 0.3, 4.0, 30.0).unwrap();
    let (_, obs) = simulated(8, 6, AggScheme::new(2, 2), m, 3);
    let (a, b) = (2.5, -1.0);
    let mut scaled = obs.clone();
    for v in scaled.y.iter_mut() {
        *v = a * *v + b;
    }
    let m2 = ModelSpec {
        sigma2: m.sigma2 * a * a,
        tau_eps: m.tau_eps / (a * a),
        ..m
    };
    let p1 = predict_at(&obs, &m, EngineRoute::Sparse, 0).unwrap();
    let p2 = predict_at(&scaled, &m2, EngineRoute::Sparse, 0).unwrap();
    for i in 0..p1.mean.values.len() {
        let want = a * p1.mean.values[i] + b;
        assert!((p2.mean.values[i] - want).abs() < 1e-6, "node {i}");
        assert!((p2.sd.values[i] - a * p1.sd.values[i]).abs() < 1e-6);
    }
}

#[test]
fn fitted_hyperparameters_follow_rescaling() {
    let m = ModelSpec::new(ModelKind::Separable102, 0.1, 0.3, 6.0, 40.0).unwrap();
    let (_, obs) = simulated(12, 8, AggScheme::new(2, 2), m, 11);
    let a = 2.0;
    let mut scaled = obs.clone();
    for v in scaled.y.iter_mut() {
        *v = a * *v + 0.5;
    }
    let opts = FitOptions::default();
    let f1 = fit(&obs, &opts).unwrap();
    let f2 = fit(&scaled, &opts).unwrap();
    let rel = |x: f64, y: f64| (x - y).abs() / y.abs();
    assert!(rel(f2.theta_hat.sigma2, a * a * f1.theta_hat.sigma2) < 0.02);
    assert!(rel(f2.theta_hat.tau_eps, f1.theta_hat.tau_eps / (a * a)) < 0.02);
    assert!(rel(f2.theta_hat.range_s, f1.theta_hat.range_s) < 0.02);
    assert!((f2.beta_mean[0] - (a * f1.beta_mean[0] + 0.5)).abs() < 0.02);
}

#[test]
fn sd_shrinks_with_noise_precision() {
    let m = ModelSpec::new(ModelKind::Separable102, 0.2, 0.3, 3.0, 5.0).unwrap();
    let (_, obs) = simulated(8, 4, AggScheme::new(2, 2), m, 5);
    let mut prev: Option<Field> = None;
    for tau in [1.0, 10.0, 100.0, 1e4] {
        let p = predict_at(&obs, &ModelSpec { tau_eps: tau, ..m }, EngineRoute::Auto, 0).unwrap();
        assert!(p.sd.values.iter().all(|s| *s >= 0.0));
        if let Some(q) = &prev {
            for (a, b) in p.sd.values.iter().zip(&q.values) {
                assert!(a <= &(b + 1e-12));
            }
        }
        prev = Some(p.sd);
    }
}

#[test]
fn unaggregated_noiseless_data_is_reproduced() {
    let m = ModelSpec::new(ModelKind::Separable102, 0.5, 0.3, 3.0, 1e6).unwrap();
    let (truth, obs) = simulated(6, 3, AggScheme::new(1, 1), m, 2);
    // large enough to act as noiseless, small enough to keep Q_post well conditioned
    let sharp = ModelSpec { tau_eps: 1e10, ..m };
    let y = aggregate_observe(&truth, &obs.projection, 1e300, 0).unwrap();
    let obs = ObsModel::new(
        obs.lattice,
        obs.projection.clone(),
        y.clone(),
        &[],
        &[],
        sharp,
    )
    .unwrap();
    let p = predict_at(&obs, &sharp, EngineRoute::Sparse, 0).unwrap();
    for (a, b) in p.mean.values.iter().zip(&y) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn intercept_matches_sample_mean_on_pure_noise() {
    let lat = lattice(8, 4);
    let proj = build_projection(&lat, AggScheme::new(2, 2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let noise = Normal::new(1.7, 0.3).unwrap();
    let y: Vec<f64> = (0..proj.rows()).map(|_| noise.sample(&mut rng)).collect();
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let m0 = ModelSpec::new(ModelKind::Separable102, 0.1, 0.3, 1.0, 10.0).unwrap();
    let obs = ObsModel::new(lat, proj, y, &[], &[], m0).unwrap();
    let f = fit(&obs, &FitOptions::default()).unwrap();
    assert!(
        (f.beta_mean[0] - mean).abs() < 2.0 * sd / n.sqrt(),
        "{} vs {mean}",
        f.beta_mean[0]
    );
}

#[test]
fn variance_recovered_within_its_interval() {
    // 200 replicates: at the ~93% coverage this attains, a 20-replicate
    // version of the check is a coin flip on the seed block.
    let truth = ModelSpec::new(ModelKind::Separable102, 0.25, 0.3, 6.0, 1e6).unwrap();
    let mut hits = 0;
    for rep in 0..200 {
        let (_, obs) = simulated(12, 12, AggScheme::new(2, 2), truth, 100 + rep);
        let f = fit(&obs, &FitOptions::default()).unwrap();
        let (lo, hi) = f.theta_ci[0];
        assert!(lo < hi);
        if lo <= truth.sigma2 && truth.sigma2 <= hi {
            hits += 1;
        }
    }
    assert!(hits >= 180, "{hits}/200");
}

#[test]
fn cell_means_track_observations() {
    let m = ModelSpec::new(ModelKind::NonSeparable121, 0.1, 0.3, 6.0, 44.4).unwrap();
    let (_, obs) = simulated(12, 8, AggScheme::new(2, 2), m, 31);
    let f = fit(&obs, &FitOptions::default()).unwrap();
    let cell = obs.projection.apply(&f.latent_mean.values).unwrap();
    let resid = cell
        .iter()
        .zip(&obs.y)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / obs.y.len() as f64;
    assert!(resid <= 2.0 / f.theta_hat.tau_eps.sqrt(), "{resid}");
}

#[test]
fn true_range_beats_doubled_range() {
    let truth = ModelSpec::new(ModelKind::Separable102, 0.25, 0.2, 3.0, 1.0 / 0.0225).unwrap();
    let doubled = ModelSpec {
        range_s: 0.4,
        ..truth
    };
    let mut wins = 0;
    for rep in 0..50 {
        let (_, obs) = simulated(12, 8, AggScheme::new(2, 2), truth, 500 + rep);
        if log_marginal_likelihood(&obs, &truth).unwrap()
            >= log_marginal_likelihood(&obs, &doubled).unwrap()
        {
            wins += 1;
        }
    }
    assert!(wins >= 45, "{wins}/50");
}

#[test]
fn exceedance_limits() {
    let lat = lattice(3, 2);
    let mean = Field::new(lat, (0..lat.n_nodes()).map(|i| i as f64 * 0.1).collect()).unwrap();
    let sd = Field::constant(lat, 0.5);
    let at_mean = exceedance_of(&mean, &sd, mean.values[4]).unwrap();
    assert!((at_mean.values[4] - 0.5).abs() < 1e-12);
    let low = exceedance_of(&mean, &sd, -10.0).unwrap();
    assert!(low.values.iter().all(|p| (p - 1.0).abs() < 1e-6));
}
