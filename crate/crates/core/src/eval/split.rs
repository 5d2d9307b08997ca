use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BenchmarkSample, EvalError};

/// Shuffle under `seed`, then give train and dev the floor of their share;
/// test takes the remainder.
pub fn split_dataset<T: Clone>(
    items: &[T],
    ratios: [f64; 3],
    seed: u64,
) -> Result<(Vec<T>, Vec<T>, Vec<T>), EvalError> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(EvalError::BadRatios(ratios));
    }
    let n = items.len();
    let share = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
    let n_train = share(ratios[0]);
    let n_dev = share(ratios[1]).min(n - n_train);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |r: &[usize]| r.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok((
        pick(&idx[..n_train]),
        pick(&idx[n_train..n_train + n_dev]),
        pick(&idx[n_train + n_dev..]),
    ))
}

/// Sample ids of a published split.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
}

/// Reproduce a published split exactly. Every sample must be listed once.
pub fn split_by_manifest(
    bench: &[BenchmarkSample],
    manifest: &SplitManifest,
) -> Result<(Vec<BenchmarkSample>, Vec<BenchmarkSample>, Vec<BenchmarkSample>), EvalError> {
    let by_id: BTreeMap<&str, &BenchmarkSample> = bench.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut used = BTreeMap::new();
    let mut take = |ids: &[String]| -> Result<Vec<BenchmarkSample>, EvalError> {
        ids.iter()
            .map(|id| {
                if used.insert(id.clone(), ()).is_some() {
                    return Err(EvalError::Manifest(format!("`{id}` listed twice")));
                }
                by_id
                    .get(id.as_str())
                    .map(|s| (*s).clone())
                    .ok_or_else(|| EvalError::Manifest(format!("unknown id `{id}`")))
            })
            .collect()
    };
    let out = (take(&manifest.train)?, take(&manifest.dev)?, take(&manifest.test)?);
    if used.len() != bench.len() {
        return Err(EvalError::Manifest(format!(
            "{} of {} samples are not listed",
            bench.len() - used.len(),
            bench.len()
        )));
    }
    Ok(out)
}
