//! Differential evolution, DE/best/1/bin.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeOptions {
    pub pop_size: usize,
    /// Mutation constant.
    pub mu: f64,
    pub p_cross: f64,
    pub max_gen: usize,
    /// Stop once `std(fitness) <= conv_tol * |mean(fitness)|`.
    pub conv_tol: f64,
    pub seed: u64,
    pub bounds: Vec<[f64; 2]>,
}

/// Search box for `[alpha0, r_D, h_S, h_D, alpha_D]`.
pub fn default_bounds() -> Vec<[f64; 2]> {
    vec![[0.0, std::f64::consts::TAU], [400.0, 1000.0], [-500.0, 500.0], [-500.0, 500.0], [-0.6, 0.6]]
}

impl Default for DeOptions {
    fn default() -> Self {
        Self { pop_size: 60, mu: 0.7, p_cross: 0.7, max_gen: 300, conv_tol: 1e-4, seed: 0, bounds: default_bounds() }
    }
}

impl DeOptions {
    pub fn validate(&self) -> Result<()> {
        if self.pop_size < 4 {
            return invalid(format!("population needs at least 4 members, got {}", self.pop_size));
        }
        if !(0.0..=2.0).contains(&self.mu) {
            return invalid(format!("mutation constant must lie in [0, 2], got {}", self.mu));
        }
        if !(0.0..=1.0).contains(&self.p_cross) {
            return invalid(format!("crossover probability must lie in [0, 1], got {}", self.p_cross));
        }
        if !(self.conv_tol >= 0.0) {
            return invalid("convergence tolerance must be non-negative");
        }
        if self.bounds.is_empty() {
            return invalid("need at least one search dimension");
        }
        for (j, [lo, hi]) in self.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return invalid(format!("bounds for dimension {j} are not an interval: [{lo}, {hi}]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeResult {
    pub best_x: Vec<f64>,
    pub best_value: f64,
    /// Best fitness after initialisation and after each generation.
    pub trace: Vec<f64>,
    pub generations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn stream_rng(seed: u64, generation: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((generation as u64) << 32) | index as u64);
    rng
}

fn latin_hypercube(opts: &DeOptions) -> Vec<Vec<f64>> {
    let n = opts.pop_size;
    let mut rng = stream_rng(opts.seed, 0, 0);
    let mut pop = vec![Vec::with_capacity(opts.bounds.len()); n];
    for &[lo, hi] in &opts.bounds {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        for (member, s) in pop.iter_mut().zip(strata) {
            let u = (s as f64 + rng.gen::<f64>()) / n as f64;
            member.push(lo + u * (hi - lo));
        }
    }
    pop
}

fn best_index(fitness: &[f64]) -> usize {
    let mut best = 0;
    for (i, &f) in fitness.iter().enumerate() {
        if f < fitness[best] {
            best = i;
        }
    }
    best
}

fn converged(fitness: &[f64], tol: f64) -> bool {
    let n = fitness.len() as f64;
    let mean = fitness.iter().sum::<f64>() / n;
    let var = fitness.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() <= tol * mean.abs()
}

/// Picks `count` distinct indices from `0..n` that avoid `exclude`.
fn distinct_others(rng: &mut ChaCha8Rng, n: usize, exclude: &[usize], count: usize) -> Vec<usize> {
    let mut picked = Vec::with_capacity(count);
    while picked.len() < count {
        let k = rng.gen_range(0..n);
        if !exclude.contains(&k) && !picked.contains(&k) {
            picked.push(k);
        }
    }
    picked
}

/// Minimises `f` over the box `opts.bounds`. Trial vectors of one generation
/// are evaluated in parallel; the result does not depend on the thread count.
pub fn de_minimize<F>(f: F, opts: &DeOptions) -> Result<DeResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    opts.validate()?;
    let d = opts.bounds.len();
    let n = opts.pop_size;
    let mut pop = latin_hypercube(opts);
    let mut fitness: Vec<f64> = pop.par_iter().map(|x| f(x)).collect();
    let mut evaluations = n;
    let mut best = best_index(&fitness);
    let mut trace = vec![fitness[best]];
    let mut generations = 0;
    let mut done = false;

    while generations < opts.max_gen && !done {
        generations += 1;
        let trials: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut rng = stream_rng(opts.seed, generations, i);
                let ks = distinct_others(&mut rng, n, &[best, i], 2);
                let (a, b) = (&pop[ks[0]], &pop[ks[1]]);
                let mut trial = pop[i].clone();
                for j in 0..d {
                    let take = j == d - 1 || rng.gen::<f64>() < opts.p_cross;
                    if take {
                        let [lo, hi] = opts.bounds[j];
                        trial[j] = (pop[best][j] + opts.mu * (a[j] - b[j])).clamp(lo, hi);
                    }
                }
                trial
            })
            .collect();
        let scores: Vec<f64> = trials.par_iter().map(|x| f(x)).collect();
        evaluations += n;
        for (i, (trial, score)) in trials.into_iter().zip(scores).enumerate() {
            if score <= fitness[i] {
                pop[i] = trial;
                fitness[i] = score;
            }
        }
        best = best_index(&fitness);
        let value = fitness[best];
        assert!(value <= *trace.last().unwrap(), "best fitness increased");
        trace.push(value);
        done = converged(&fitness, opts.conv_tol);
    }

    Ok(DeResult {
        best_x: pop[best].clone(),
        best_value: fitness[best],
        trace,
        generations,
        evaluations,
        converged: done,
    })
}
