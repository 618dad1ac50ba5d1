//! Monte Carlo simulation of the discrete process.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use super::DiscreteModel;
use crate::error::{Error, Result};

/// Simulation settings. Replicate `k` uses stream `k` of a ChaCha8
/// generator seeded with `seed`, so results do not depend on how many
/// replicates are run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    /// Generations to run.
    pub generations: u64,
    /// Replicates.
    pub reps: u64,
    /// Master seed.
    pub seed: u64,
    /// Initial population.
    pub y0: u64,
    /// Initial type-1 count (ignored for one type).
    pub y1_0: u64,
    /// Populations reaching this size stop early and count as surviving.
    pub cap: Option<u64>,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            generations: 100,
            reps: 1000,
            seed: 1,
            y0: 1,
            y1_0: 1,
            cap: None,
        }
    }
}

/// Fate of one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Died out.
    Extinct,
    /// Alive at the final generation.
    Survived,
    /// Reached the cap.
    Capped,
}

/// One simulated path's end state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Replicate {
    /// Replicate index (also the RNG stream).
    pub index: u64,
    /// Fate.
    pub outcome: Outcome,
    /// Final population.
    pub y: u64,
    /// Final type-1 count.
    pub y1: u64,
    /// Generations actually run.
    pub generations: u64,
}

impl Replicate {
    /// Alive or capped.
    #[must_use]
    pub fn survived(&self) -> bool {
        self.outcome != Outcome::Extinct
    }
}

fn validate(model: &DiscreteModel, cfg: &McConfig) -> Result<()> {
    if cfg.y0 == 0 {
        return Err(Error::Domain("initial population must be positive".into()));
    }
    if model.types() == 2 && cfg.y1_0 > cfg.y0 {
        return Err(Error::Domain(format!(
            "initial type-1 count {} exceeds population {}",
            cfg.y1_0, cfg.y0
        )));
    }
    if cfg.cap == Some(0) {
        return Err(Error::Domain("cap must be positive".into()));
    }
    Ok(())
}

fn run_one(model: &DiscreteModel, cfg: &McConfig, index: u64) -> Replicate {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let mut y = cfg.y0;
    let mut y1 = if model.types() == 2 { cfg.y1_0 } else { 0 };
    for gen in 1..=cfg.generations {
        let n = model.offspring().sample_total(y, &mut rng);
        if model.types() == 2 {
            let p = model.chi(y1, y).clamp(0.0, 1.0);
            y1 = Binomial::new(n, p)
                .expect("valid binomial")
                .sample(&mut rng);
        }
        y = n;
        if y == 0 {
            return Replicate {
                index,
                outcome: Outcome::Extinct,
                y,
                y1,
                generations: gen,
            };
        }
        if cfg.cap.is_some_and(|c| y >= c) {
            return Replicate {
                index,
                outcome: Outcome::Capped,
                y,
                y1,
                generations: gen,
            };
        }
    }
    Replicate {
        index,
        outcome: Outcome::Survived,
        y,
        y1,
        generations: cfg.generations,
    }
}

/// Runs `cfg.reps` replicates.
pub fn simulate(model: &DiscreteModel, cfg: &McConfig) -> Result<Vec<Replicate>> {
    validate(model, cfg)?;
    Ok((0..cfg.reps).map(|k| run_one(model, cfg, k)).collect())
}

/// Runs replicates until `target` have survived, giving up after
/// `max_attempts`.
pub fn simulate_survivors(
    model: &DiscreteModel,
    cfg: &McConfig,
    target: usize,
    max_attempts: u64,
) -> Result<Vec<Replicate>> {
    validate(model, cfg)?;
    let mut out = Vec::with_capacity(target);
    let mut k = 0;
    while out.len() < target {
        if k >= max_attempts {
            return Err(Error::NoConvergence {
                iterations: k as usize,
                residual: (target - out.len()) as f64,
            });
        }
        let r = run_one(model, cfg, k);
        if r.survived() {
            out.push(r);
        }
        k += 1;
    }
    Ok(out)
}

/// Fraction of replicates that went extinct.
#[must_use]
pub fn extinct_fraction(reps: &[Replicate]) -> f64 {
    if reps.is_empty() {
        return f64::NAN;
    }
    reps.iter().filter(|r| !r.survived()).count() as f64 / reps.len() as f64
}

/// Kolmogorov–Smirnov distance between the empirical law of `samples`
/// and a continuous CDF.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s: Vec<f64> = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = cdf(x);
            (f - k as f64 / n).abs().max(((k + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bgw::Poisson;
    use std::sync::Arc;

    fn model(l: f64) -> DiscreteModel {
        DiscreteModel::two_type(Arc::new(Poisson::new(l).unwrap()), 0.1, 0.1, 10).unwrap()
    }

    #[test]
    fn reproducible_by_stream() {
        let m = model(1.0);
        let cfg = McConfig {
            reps: 20,
            generations: 30,
            ..McConfig::default()
        };
        let a = simulate(&m, &cfg).unwrap();
        let b = simulate(&m, &McConfig { reps: 40, ..cfg }).unwrap();
        assert_eq!(a[..], b[..20]);
    }

    #[test]
    fn one_generation_extinction() {
        let m = model(0.8);
        let cfg = McConfig {
            reps: 40_000,
            generations: 1,
            seed: 7,
            ..McConfig::default()
        };
        let reps = simulate(&m, &cfg).unwrap();
        let f = extinct_fraction(&reps);
        assert!((f - (-0.8f64).exp()).abs() < 0.01);
    }

    #[test]
    fn cap_counts_as_survival() {
        let m = model(3.0);
        let cfg = McConfig {
            reps: 50,
            generations: 200,
            cap: Some(500),
            y0: 20,
            y1_0: 10,
            ..McConfig::default()
        };
        let reps = simulate(&m, &cfg).unwrap();
        assert!(reps.iter().all(|r| r.outcome == Outcome::Capped));
        assert_eq!(extinct_fraction(&reps), 0.0);
    }

    #[test]
    fn ks_against_uniform() {
        let s: Vec<f64> = (0..100).map(|k| (k as f64 + 0.5) / 100.0).collect();
        let d = ks_distance(&s, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.005).abs() < 1e-12);
    }

    #[test]
    fn bad_config() {
        let m = model(1.0);
        assert!(simulate(
            &m,
            &McConfig {
                y0: 0,
                ..McConfig::default()
            }
        )
        .is_err());
        assert!(simulate(
            &m,
            &McConfig {
                y0: 2,
                y1_0: 3,
                ..McConfig::default()
            }
        )
        .is_err());
    }
}
