use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::algebra::{BraidStep, Generator};

use super::engine::{prepare, simulate, Prepared, TrajectoryLog};
use super::scenario::{ControllerKind, Scenario};
use super::verify::{verify, Tolerances, VerificationReport};
use super::SimError;

/// How independent work items are spread over threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is on; otherwise
    /// identical to `Sequential`.
    #[default]
    Parallel,
}

/// Order-preserving map over independent items.
pub fn par_map<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        Execution::Sequential => items.iter().map(f).collect(),
        Execution::Parallel => {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                items.iter().map(f).collect()
            }
        }
    }
}

/// Everything a single run produces.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub prepared: Prepared,
    pub log: TrajectoryLog,
    pub report: VerificationReport,
}

/// Prepare, simulate and verify with default tolerances.
pub fn run(scenario: &Scenario) -> Result<Outcome, SimError> {
    let prepared = prepare(scenario)?;
    let log = simulate(&prepared)?;
    let report = verify(&log, &prepared, Tolerances::for_prepared(&prepared));
    Ok(Outcome { prepared, log, report })
}

/// Runs independent scenarios; results keep the input order.
pub fn run_batch(scenarios: &[Scenario], exec: Execution) -> Vec<Result<Outcome, SimError>> {
    par_map(scenarios, exec, run)
}

/// A random braid whose steps each hold a random set of pairwise
/// non-adjacent generators with random signs, written with braces.
pub fn random_restricted_word<R: Rng>(rng: &mut R, strands: usize, steps: usize) -> String {
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut indices: Vec<usize> = (1..strands).collect();
        indices.shuffle(rng);
        let mut chosen: Vec<usize> = Vec::new();
        let want = rng.gen_range(1..=strands.div_ceil(2).max(1));
        for i in indices {
            if chosen.len() < want && chosen.iter().all(|&c| c.abs_diff(i) >= 2) {
                chosen.push(i);
            }
        }
        chosen.sort_unstable();
        let gens = chosen
            .into_iter()
            .map(|i| if rng.gen_bool(0.5) { Generator::positive(i) } else { Generator::inverse_of(i) })
            .collect();
        out.push(BraidStep::new(gens).expect("indices are pairwise non-adjacent").to_string());
    }
    out.join(".")
}

/// Ranges for [`random_scenario`].
#[derive(Debug, Clone, Copy)]
pub struct RandomSpec {
    pub strands: (usize, usize),
    pub max_steps: usize,
    /// `δ_jk` as a fraction of the row spacing.
    pub separation_fraction: (f64, f64),
    pub controller: ControllerKind,
}

/// A random rectangular scenario. Cell aspect ratios stay within
/// `[0.5, 2]` so crossing angles are moderate; the duration leaves the
/// reparameterized strands below `v_max`.
pub fn random_scenario(spec: &RandomSpec, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(spec.strands.0..=spec.strands.1);
    let m = rng.gen_range(1..=spec.max_steps);
    let row = rng.gen_range(0.5..2.0);
    let col = row * rng.gen_range(0.5..2.0);
    let height = row * (n - 1) as f64;
    let length = col * m as f64;
    let sep = row * rng.gen_range(spec.separation_fraction.0..=spec.separation_fraction.1);
    let v_max = rng.gen_range(0.5..2.0);
    // the fast half covers at most the full strand in half a step
    let step_time = 2.0 * row.hypot(col) / v_max * rng.gen_range(1.0..3.0);
    let word = random_restricted_word(&mut rng, n, m);
    let mut s = Scenario::rect(&word, n, height, length, step_time * m as f64, spec.controller, sep, v_max);
    s.seed = seed;
    s.name = format!("random-{seed}");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{parse_braid_word, schedule_steps};

    #[test]
    fn random_words_are_restricted() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.gen_range(2..=6);
            let m = rng.gen_range(1..=10);
            let text = random_restricted_word(&mut rng, n, m);
            let w = parse_braid_word(&text, n).unwrap();
            assert_eq!(schedule_steps(&w, true).unwrap().len(), m);
        }
    }

    #[test]
    fn par_map_keeps_order() {
        let items: Vec<u64> = (0..100).collect();
        let a = par_map(&items, Execution::Parallel, |x| x * x);
        let b = par_map(&items, Execution::Sequential, |x| x * x);
        assert_eq!(a, b);
    }
}
