use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CascadeSample, CascadeSimulator, Policy};
use crate::error::{Error, Result};
use crate::grid::{Contingency, LoadingProfile, Network};

pub const POOL_SCHEMA_VERSION: u32 = 1;

/// Salt mixed into the master seed for the train/test permutation.
const SPLIT_SALT: u64 = 0x5EED_5B11_7000_0001;

/// Monte Carlo cascades at one loading level plus a train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePool {
    pub samples: Vec<CascadeSample>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl SamplePool {
    /// Wraps samples with an explicit split (indices into `samples`).
    pub fn new(samples: Vec<CascadeSample>, train: Vec<usize>, test: Vec<usize>) -> Result<Self> {
        let n = samples.len();
        if train.iter().chain(&test).any(|&i| i >= n) {
            return Err(Error::Config("split index out of range".into()));
        }
        Ok(SamplePool { samples, train, test })
    }

    /// Every sample in the training split.
    pub fn all_train(samples: Vec<CascadeSample>) -> Self {
        let train = (0..samples.len()).collect();
        SamplePool { samples, train, test: Vec::new() }
    }

    pub fn train_samples(&self) -> Vec<&CascadeSample> {
        self.train.iter().map(|&i| &self.samples[i]).collect()
    }

    pub fn test_samples(&self) -> Vec<&CascadeSample> {
        self.test.iter().map(|&i| &self.samples[i]).collect()
    }

    pub fn summary(&self) -> PoolSummary {
        PoolSummary::of(&self.samples)
    }
}

/// Aggregate statistics stored alongside a pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSummary {
    pub n_samples: usize,
    /// Fraction of samples with no failure beyond the initial pair.
    pub fraction_no_propagation: f64,
    pub mean_termination_time: f64,
    pub max_termination_time: usize,
    pub mean_propagated_failures: f64,
    pub fraction_with_shed: f64,
}

impl PoolSummary {
    pub fn of(samples: &[CascadeSample]) -> Self {
        let n = samples.len().max(1) as f64;
        PoolSummary {
            n_samples: samples.len(),
            fraction_no_propagation: samples.iter().filter(|s| s.propagated_failures() == 0).count() as f64 / n,
            mean_termination_time: samples.iter().map(|s| s.termination_time as f64).sum::<f64>() / n,
            max_termination_time: samples.iter().map(|s| s.termination_time).max().unwrap_or(0),
            mean_propagated_failures: samples.iter().map(|s| s.propagated_failures() as f64).sum::<f64>() / n,
            fraction_with_shed: samples.iter().filter(|s| s.ever_shed().iter().any(|&x| x)).count() as f64 / n,
        }
    }
}

/// Metadata written next to every pool file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolManifest {
    pub schema_version: u32,
    pub case_hash: String,
    pub config_hash: String,
    pub seed: u64,
    pub policy: Policy,
    pub loading_c: f64,
    pub n_samples: usize,
    pub split_fraction: f64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Why the level produced no samples, if it did not.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<PoolSummary>,
}

/// SplitMix64 finalizer; spreads consecutive seeds over the state space.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of sample `id` under `master_seed`.
pub fn sample_seed(master_seed: u64, id: usize) -> u64 {
    splitmix64(master_seed.wrapping_add(id as u64))
}

/// The initial pair drawn for a sample seed: uniform over unordered pairs.
pub fn pair_for_seed(seed: u64, n_branches: usize) -> Result<Contingency> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = rand::seq::index::sample(&mut rng, n_branches, 2);
    Contingency::new(pick.index(0), pick.index(1), n_branches)
}

/// Deterministic train/test split of `0..n`. The training share is
/// `round(n * fraction)`, clamped so both sides are nonempty when `n >= 2`.
pub fn split_indices(n: usize, fraction: f64, master_seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(master_seed ^ SPLIT_SALT));
    order.shuffle(&mut rng);
    let mut n_train = (n as f64 * fraction).round() as usize;
    if n >= 2 {
        n_train = n_train.clamp(1, n - 1);
    }
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Simulates `n_samples` random double contingencies with a 90/10 split.
pub fn generate_pool(
    net: &Network,
    profile: LoadingProfile,
    n_samples: usize,
    policy: Policy,
    master_seed: u64,
) -> Result<SamplePool> {
    let sim = CascadeSimulator::new(net, profile, policy)?;
    generate_pool_with(&sim, n_samples, master_seed, 0.9)
}

/// Pool generation on a prepared simulator. Samples run in parallel; the
/// output order is by sample id regardless of scheduling.
pub fn generate_pool_with(
    sim: &CascadeSimulator,
    n_samples: usize,
    master_seed: u64,
    split_fraction: f64,
) -> Result<SamplePool> {
    if n_samples < 2 {
        return Err(Error::Config(format!("need at least 2 samples, got {n_samples}")));
    }
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(Error::Config(format!("split fraction must lie in (0, 1), got {split_fraction}")));
    }
    let n_br = sim.network().n_branches();
    let samples = (0..n_samples)
        .into_par_iter()
        .map(|id| {
            let seed = sample_seed(master_seed, id);
            sim.run(pair_for_seed(seed, n_br)?, id, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let (train, test) = split_indices(n_samples, split_fraction, master_seed);
    Ok(SamplePool { samples, train, test })
}

/// Writes samples as JSON lines.
pub fn write_pool(path: &Path, samples: &[CascadeSample]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for s in samples {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a JSON-lines pool. Blank lines are skipped; a bad line reports its
/// line number.
pub fn read_pool(path: &Path) -> Result<Vec<CascadeSample>> {
    let reader = BufReader::new(File::open(path)?);
    let mut samples = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample = serde_json::from_str(&line).map_err(|e| Error::Syntax {
            line: k + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        samples.push(sample);
    }
    Ok(samples)
}
