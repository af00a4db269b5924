//! Real-coded genetic algorithm: tournament selection, blend crossover,
//! Gaussian mutation and elitism inside box bounds.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaOptions {
    pub population: usize,
    pub generations: usize,
    /// Symmetric box bound on every gene.
    pub bound: f64,
    pub tournament: usize,
    pub elite: usize,
    pub mutation_rate: f64,
    /// Mutation standard deviation relative to the seed spread.
    pub mutation_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaResult {
    pub best: Vec<f64>,
    pub best_fitness: f64,
    pub evaluations: usize,
}

/// Minimizes `fitness` starting from a population scattered around `seed`.
pub fn run<F>(fitness: F, seed: &[f64], opts: &GaOptions, rng: &mut ChaCha8Rng) -> GaResult
where
    F: Fn(&[f64]) -> f64,
{
    let n = seed.len();
    let pop_size = opts.population.max(2);
    let clamp = |x: f64| x.clamp(-opts.bound, opts.bound);
    let spread: Vec<f64> = seed
        .iter()
        .map(|x| 0.1 * x.abs() + 0.05 * opts.bound)
        .collect();
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let mut pop: Vec<Vec<f64>> = Vec::with_capacity(pop_size);
    pop.push(seed.iter().map(|&x| clamp(x)).collect());
    while pop.len() < pop_size {
        let level = 0.1 + 2.0 * pop.len() as f64 / pop_size as f64;
        pop.push(
            seed.iter()
                .zip(&spread)
                .map(|(&x, &s)| clamp(x + level * s * unit.sample(rng)))
                .collect(),
        );
    }
    let mut fit: Vec<f64> = pop.iter().map(|x| sanitize(fitness(x))).collect();
    let mut evaluations = pop_size;

    for gen in 0..opts.generations {
        let mut order: Vec<usize> = (0..pop_size).collect();
        order.sort_by(|&a, &b| fit[a].total_cmp(&fit[b]));
        let mut next: Vec<Vec<f64>> = order[..opts.elite.min(pop_size)]
            .iter()
            .map(|&i| pop[i].clone())
            .collect();
        let mut next_fit: Vec<f64> = order[..next.len()].iter().map(|&i| fit[i]).collect();
        let sigma = opts.mutation_scale * (1.0 - gen as f64 / opts.generations as f64).max(0.05);
        while next.len() < pop_size {
            let a = tournament(&fit, opts.tournament, rng);
            let b = tournament(&fit, opts.tournament, rng);
            let child: Vec<f64> = (0..n)
                .map(|j| {
                    let t: f64 = rng.random_range(-0.25..1.25);
                    let mut x = pop[a][j] + t * (pop[b][j] - pop[a][j]);
                    if rng.random::<f64>() < opts.mutation_rate {
                        x += sigma * spread[j] * unit.sample(rng);
                    }
                    clamp(x)
                })
                .collect();
            next_fit.push(sanitize(fitness(&child)));
            next.push(child);
            evaluations += 1;
        }
        pop = next;
        fit = next_fit;
    }
    let best = (0..pop_size).min_by(|&a, &b| fit[a].total_cmp(&fit[b])).unwrap();
    GaResult {
        best: pop[best].clone(),
        best_fitness: fit[best],
        evaluations,
    }
}

fn sanitize(f: f64) -> f64 {
    if f.is_nan() {
        f64::INFINITY
    } else {
        f
    }
}

fn tournament(fit: &[f64], size: usize, rng: &mut ChaCha8Rng) -> usize {
    let mut best = rng.random_range(0..fit.len());
    for _ in 1..size.max(1) {
        let c = rng.random_range(0..fit.len());
        if fit[c] < fit[best] {
            best = c;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn opts() -> GaOptions {
        GaOptions {
            population: 40,
            generations: 80,
            bound: 10.0,
            tournament: 3,
            elite: 2,
            mutation_rate: 0.2,
            mutation_scale: 1.0,
        }
    }

    #[test]
    fn improves_on_a_shifted_sphere() {
        let f = |x: &[f64]| x.iter().map(|v| (v - 1.5).powi(2)).sum::<f64>();
        let seed = vec![0.0; 4];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = run(f, &seed, &opts(), &mut rng);
        assert!(r.best_fitness < 0.5 * f(&seed), "{}", r.best_fitness);
        assert!(r.best.iter().all(|x| x.abs() <= 10.0));
    }

    #[test]
    fn elitism_never_loses_the_seed() {
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = run(f, &[0.0; 3], &opts(), &mut rng);
        assert_eq!(r.best_fitness, 0.0);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let f = |x: &[f64]| (x[0] - 2.0).powi(2) + x[1].abs();
        let a = run(f, &[0.5, 0.5], &opts(), &mut ChaCha8Rng::seed_from_u64(9));
        let b = run(f, &[0.5, 0.5], &opts(), &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }
}
