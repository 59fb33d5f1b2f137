//! Influence models: link-on-link failure propagation and link-on-bus load
//! shedding, trained from sample pools and evaluated without any flow
//! computation.

mod cached;
mod estimate;
mod fit;
mod predict;
mod threshold;

pub use estimate::{estimate_a, estimate_b, DEFAULT_P01, DEFAULT_P11};
pub use fit::{fit_d, fit_e, project_simplex, FitDiagnostics, FitOptions, SimplexFit, SimplexLeastSquares};
pub use predict::{predict_cascade, predict_load_shed, PredictedCascade, PredictedLoadShed, PredictionMode};
pub use threshold::{bus_thresholds, link_thresholds, ThresholdEntry, ThresholdPool, ThresholdSelection};

use serde::{Deserialize, Serialize};

use self::cached::Cached;
use crate::cascade::{CascadeSample, Policy};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Link failure model. `a11`/`a01` are indexed `[j][i]` (influence of `j`
/// on `i`); `d` is indexed `[i][j]` with each row on the simplex.
///
/// The weights are read once, on the first `step`; build a new model
/// rather than editing them afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceModelD {
    #[serde(rename = "A11")]
    pub a11: Matrix,
    #[serde(rename = "A01")]
    pub a01: Matrix,
    #[serde(rename = "D")]
    pub d: Matrix,
    pub threshold_pool: ThresholdPool,
    pub alpha_d: f64,
    #[serde(skip)]
    kernel: Cached<Kernel>,
}

/// Load shed model. `b11`/`b01` are `N_br x N` indexed `[j][i]`; `e` is
/// `N x N_br` with each row on the simplex. Like the link model, the
/// weights are read once, on the first `service`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceModelE {
    #[serde(rename = "B11")]
    pub b11: Matrix,
    #[serde(rename = "B01")]
    pub b01: Matrix,
    #[serde(rename = "E")]
    pub e: Matrix,
    pub threshold_pool: ThresholdPool,
    pub alpha_e: f64,
    #[serde(skip)]
    kernel: Cached<Kernel>,
}

impl InfluenceModelD {
    pub fn new(a11: Matrix, a01: Matrix, d: Matrix, threshold_pool: ThresholdPool, alpha_d: f64) -> Self {
        InfluenceModelD { a11, a01, d, threshold_pool, alpha_d, kernel: Cached::default() }
    }

    pub fn n_branches(&self) -> usize {
        self.d.rows()
    }

    /// Healthy probability of every link one step after `state`.
    pub fn step(&self, state: &[bool]) -> Vec<f64> {
        self.kernel().apply(state)
    }

    fn kernel(&self) -> &Kernel {
        self.kernel.get_or_init(|| Kernel::new(&self.d, &self.a11, &self.a01))
    }

    /// Builds the lookup structures that are otherwise built on first use.
    pub fn prepare(&self) {
        self.kernel();
        self.threshold_pool.prepare();
    }
}

impl InfluenceModelE {
    pub fn new(b11: Matrix, b01: Matrix, e: Matrix, threshold_pool: ThresholdPool, alpha_e: f64) -> Self {
        InfluenceModelE { b11, b01, e, threshold_pool, alpha_e, kernel: Cached::default() }
    }

    pub fn n_buses(&self) -> usize {
        self.e.rows()
    }

    /// Full-service probability of every bus while the links are in `state`.
    pub fn service(&self, state: &[bool]) -> Vec<f64> {
        self.kernel().apply(state)
    }

    fn kernel(&self) -> &Kernel {
        self.kernel.get_or_init(|| Kernel::new(&self.e, &self.b11, &self.b01))
    }

    /// Builds the lookup structures that are otherwise built on first use.
    pub fn prepare(&self) {
        self.kernel();
        self.threshold_pool.prepare();
    }
}

/// `out[i] = sum_j w[i][j] * (s_j ? p11[j][i] : p01[j][i])`, evaluated as
/// the all-healthy sum plus one correction per dead link.
#[derive(Debug)]
struct Kernel {
    base: Vec<f64>,
    /// Per link `j`: `(i, w[i][j] * (p01[j][i] - p11[j][i]))` for nonzero weights.
    dead: Vec<Vec<(usize, f64)>>,
}

impl Kernel {
    fn new(w: &Matrix, p11: &Matrix, p01: &Matrix) -> Self {
        let mut base = vec![0.0; w.rows()];
        let mut dead = vec![Vec::new(); w.cols()];
        for (i, b) in base.iter_mut().enumerate() {
            for (j, &wij) in w.row(i).iter().enumerate().filter(|(_, &wij)| wij != 0.0) {
                *b += wij * p11[(j, i)];
                dead[j].push((i, wij * p01[(j, i)] - wij * p11[(j, i)]));
            }
        }
        Kernel { base, dead }
    }

    fn apply(&self, state: &[bool]) -> Vec<f64> {
        let mut out = self.base.clone();
        for (col, _) in self.dead.iter().zip(state).filter(|(_, &alive)| !alive) {
            for &(i, delta) in col {
                out[i] += delta;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub alpha_d: f64,
    pub alpha_e: f64,
    pub fit: FitOptions,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { alpha_d: 0.9, alpha_e: 0.9, fit: FitOptions::default() }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        for (name, a) in [("alpha-d", self.alpha_d), ("alpha-e", self.alpha_e)] {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {a}")));
            }
        }
        Ok(())
    }
}

/// Where a model came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub case_hash: String,
    pub config_hash: String,
    pub seed: u64,
    pub policy: Policy,
    pub loading_levels: Vec<f64>,
    pub n_train: usize,
}

/// Both influence models plus fit diagnostics, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub link_model: InfluenceModelD,
    pub shed_model: InfluenceModelE,
    pub fit_d: FitDiagnostics,
    pub fit_e: FitDiagnostics,
}

impl TrainedModel {
    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            schema_version: u32,
        }
        let v: Version = serde_json::from_str(text)?;
        if v.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::SchemaVersion { found: v.schema_version, expected: MODEL_SCHEMA_VERSION });
        }
        let model: TrainedModel = serde_json::from_str(text)?;
        model.prepare();
        Ok(model)
    }

    pub fn prepare(&self) {
        self.link_model.prepare();
        self.shed_model.prepare();
    }
}

/// Trains both models on the given samples.
pub fn train(samples: &[&CascadeSample], opts: &TrainOptions) -> Result<(InfluenceModelD, InfluenceModelE, [FitDiagnostics; 2])> {
    opts.validate()?;
    if samples.is_empty() {
        return Err(Error::Config("cannot train on an empty pool".into()));
    }
    let (n_br, n_bus) = (samples[0].n_branches(), samples[0].n_buses());
    if samples.iter().any(|s| s.n_branches() != n_br || s.n_buses() != n_bus) {
        return Err(Error::Dimension("samples disagree on network size".into()));
    }
    let (a11, a01) = estimate_a(samples);
    let (d, diag_d) = fit_d(samples, &a11, &a01, &opts.fit);
    let mut link = InfluenceModelD::new(a11, a01, d, ThresholdPool::default(), opts.alpha_d);
    link.threshold_pool = build_threshold_pool_d(samples, &link);

    let (b11, b01) = estimate_b(samples);
    let (e, diag_e) = fit_e(samples, &b11, &b01, &opts.fit);
    let mut shed = InfluenceModelE::new(b11, b01, e, ThresholdPool::default(), opts.alpha_e);
    shed.threshold_pool = build_threshold_pool_e(samples, &shed);
    link.prepare();
    shed.prepare();
    Ok((link, shed, [diag_d, diag_e]))
}

/// One threshold vector per training sample for the link model.
pub fn build_threshold_pool_d(samples: &[&CascadeSample], model: &InfluenceModelD) -> ThresholdPool {
    let entries = samples
        .iter()
        .map(|s| {
            let mut predicted = vec![s.states[0].iter().map(|&a| a as u8 as f64).collect::<Vec<_>>()];
            predicted.extend(s.states[..s.states.len() - 1].iter().map(|st| model.step(st)));
            let terminal = model.step(s.final_state());
            ThresholdEntry {
                loading_c: s.loading_c,
                initial_failures: s.initial_failures.to_vec(),
                thresholds: link_thresholds(s, &predicted, &terminal, model.alpha_d),
            }
        })
        .collect();
    ThresholdPool::new(entries)
}

/// One threshold vector per training sample for the shed model.
pub fn build_threshold_pool_e(samples: &[&CascadeSample], model: &InfluenceModelE) -> ThresholdPool {
    let entries = samples
        .iter()
        .map(|s| {
            let predicted: Vec<Vec<f64>> = s.states.iter().map(|st| model.service(st)).collect();
            ThresholdEntry {
                loading_c: s.loading_c,
                initial_failures: s.initial_failures.to_vec(),
                thresholds: bus_thresholds(s, &predicted, model.alpha_e),
            }
        })
        .collect();
    ThresholdPool::new(entries)
}
