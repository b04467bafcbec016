//! Many independent episodes at once.
//!
//! With the `parallel` feature (default) jobs run on the rayon pool;
//! without it, or through [`run_jobs_sequential`], they run in order. Both
//! paths return results in job order, and each episode is a pure function
//! of its job, so the output does not depend on the path taken.

use super::comparators::Comparator;
use super::episode::{run_episode, EpisodeConfig};
use super::ledger::RegretLedger;
use crate::environments::LossModel;
use crate::error::Result;
use crate::kernels::ComparatorKernel;

#[derive(Debug, Clone)]
pub struct EpisodeJob<'a, K: ComparatorKernel + ?Sized> {
    pub kernel: &'a K,
    pub model: LossModel,
    pub comparators: &'a [Comparator],
    pub config: EpisodeConfig,
}

impl<K: ComparatorKernel + ?Sized> EpisodeJob<'_, K> {
    pub fn run(&self) -> Result<RegretLedger> {
        run_episode(self.kernel, &self.model, self.comparators, &self.config)
    }
}

/// One job per seed; the seed drives both the draws and the environment
/// noise.
pub fn seed_jobs<'a, K: ComparatorKernel + ?Sized>(
    kernel: &'a K,
    model: &LossModel,
    comparators: &'a [Comparator],
    config: EpisodeConfig,
    seeds: &[u64],
) -> Vec<EpisodeJob<'a, K>> {
    seeds
        .iter()
        .map(|&s| EpisodeJob {
            kernel,
            model: model.clone().with_seed(s),
            comparators,
            config: config.with_seed(s),
        })
        .collect()
}

pub fn run_jobs_sequential<K: ComparatorKernel + ?Sized>(jobs: &[EpisodeJob<'_, K>]) -> Vec<Result<RegretLedger>> {
    jobs.iter().map(EpisodeJob::run).collect()
}

#[cfg(feature = "parallel")]
pub fn run_jobs_parallel<K: ComparatorKernel + ?Sized>(jobs: &[EpisodeJob<'_, K>]) -> Vec<Result<RegretLedger>> {
    use rayon::prelude::*;
    jobs.par_iter().map(EpisodeJob::run).collect()
}

/// Runs on the global pool when `threads` is `None`, on a dedicated pool
/// of that size otherwise; `Some(1)` is the sequential path.
pub fn run_jobs<K: ComparatorKernel + ?Sized>(
    jobs: &[EpisodeJob<'_, K>],
    threads: Option<usize>,
) -> Vec<Result<RegretLedger>> {
    #[cfg(feature = "parallel")]
    {
        match threads {
            Some(1) => run_jobs_sequential(jobs),
            None => run_jobs_parallel(jobs),
            Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => pool.install(|| run_jobs_parallel(jobs)),
                Err(_) => run_jobs_parallel(jobs),
            },
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        run_jobs_sequential(jobs)
    }
}

/// Sample mean and (n-1) standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::comparators::ComparatorSpec;
    use crate::kernels::KernelHandle;
    use crate::schedules::Mode;

    #[test]
    fn order_and_results_independent_of_path() {
        let k = KernelHandle::fixed(3).unwrap();
        let env = LossModel::fixed_gap(3, 1.0, 100).unwrap().with_noise(0.2);
        let c = vec![Comparator::build("best", ComparatorSpec::EnvironmentBest, &k, &env).unwrap()];
        let jobs = seed_jobs(&k, &env, &c, EpisodeConfig::new(Mode::Bandit, 1.0, 0), &[5, 1, 9, 2]);
        let seq: Vec<_> = run_jobs_sequential(&jobs).into_iter().map(Result::unwrap).collect();
        let par: Vec<_> = run_jobs(&jobs, Some(3)).into_iter().map(Result::unwrap).collect();
        assert_eq!(seq, par);
        assert_eq!(seq.iter().map(|l| l.seed).collect::<Vec<_>>(), vec![5, 1, 9, 2]);
    }

    #[test]
    fn mean_and_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
    }
}
