//! Seeded small instances built through the regular data pipeline.

use pmcvar::formulations::ModelConfig;
use pmcvar::market_data::{
    correlation_distances, log_returns, simple_returns, synthetic_market, DistanceMatrix, ScenarioSet, SyntheticSpec,
};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct Instance {
    pub s: ScenarioSet,
    pub d: DistanceMatrix,
    pub cfg: ModelConfig,
}

/// `n` in 3..=max_n, `p` in 1..=min(max_p, n), `T` in 2..=max_t. Half of the
/// instances draw non-uniform scenario probabilities; the return floor is
/// either absent or the equal-weighted mean.
pub fn random_instance<R: Rng>(rng: &mut R, max_n: usize, max_p: usize, max_t: usize) -> Instance {
    let n = rng.gen_range(3..=max_n);
    let t = rng.gen_range(2..=max_t);
    let k = rng.gen_range(1..=n.min(4));
    let spec = SyntheticSpec::new(n, t, SyntheticSpec::even_blocks(n, k), rng.gen());
    let panel = synthetic_market(&spec).unwrap();
    let simple = simple_returns(&panel).unwrap();
    let d = correlation_distances(&log_returns(&panel).unwrap()).unwrap();
    let probs: Option<Vec<f64>> = rng.gen_bool(0.5).then(|| {
        let raw: Vec<f64> = (0..t).map(|_| rng.gen_range(0.2..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        raw.iter().map(|v| v / sum).collect()
    });
    let s = ScenarioSet::from_returns(simple.returns, probs.as_deref()).unwrap();
    let p = rng.gen_range(1..=max_p.min(n));
    let beta = [0.05, 0.1, 0.25, 0.5, 1.0][rng.gen_range(0..5)];
    let mu0 = if rng.gen_bool(0.5) { s.mu.mean().unwrap() } else { f64::NEG_INFINITY };
    let gamma = [0.0, 0.25, 0.5, 0.75, 1.0][rng.gen_range(0..5)];
    let cfg = ModelConfig::with_default_bounds(n, p, beta, mu0, gamma);
    Instance { s, d, cfg }
}
