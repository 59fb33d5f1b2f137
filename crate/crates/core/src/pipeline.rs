//! Artifact-level pipeline: simulate, train, predict, evaluate, report.
//!
//! Every artifact carries the case hash and the hash of the configuration
//! that produced it; loaders refuse to combine artifacts built on different
//! cases.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cascade::{
    generate_pool_with, read_pool, write_pool, CascadeSample, CascadeSimulator, Policy, PoolManifest, SamplePool,
    POOL_SCHEMA_VERSION,
};
use crate::error::{Error, Result};
use crate::grid::native::{case_hash, parse_case, Dialect};
use crate::grid::{ieee30, line_graph_distance, Contingency, LoadingProfile, Network};
use crate::influence::{
    predict_cascade, predict_load_shed, train, FitOptions, PredictedCascade, PredictedLoadShed, PredictionMode,
    Provenance, TrainOptions, TrainedModel, MODEL_SCHEMA_VERSION,
};
use crate::matrix::Matrix;
use crate::metrics::{
    criticality, link_accuracy, link_fail_loss_states, load_shed_loss_mw, local_influence_loss, shed_accuracy,
    LossOptions, LossReport,
};
use crate::powerflow::lp::LpTolerances;
use crate::powerflow::{OpfOptions, RatingKind};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Name accepted wherever a case path is expected for the bundled IEEE
/// 30-bus system.
pub const BUILTIN_IEEE30: &str = "ieee30";

/// Everything that determines the pipeline's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Case file path, or `ieee30`.
    pub case: String,
    pub dialect: Option<Dialect>,
    pub loading: Vec<f64>,
    pub policy: Policy,
    pub samples: usize,
    pub seed: u64,
    pub split: f64,
    pub alpha_d: f64,
    pub alpha_e: f64,
    pub lp: LpTolerances,
    pub fit: FitOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            case: BUILTIN_IEEE30.into(),
            dialect: None,
            loading: LoadingProfile::sweep().iter().map(|p| p.c).collect(),
            policy: Policy::None,
            samples: 300,
            seed: 1,
            split: 0.9,
            alpha_d: 0.9,
            alpha_e: 0.9,
            lp: LpTolerances::default(),
            fit: FitOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.loading.is_empty() {
            return Err(Error::Config("at least one loading level is required".into()));
        }
        for &c in &self.loading {
            LoadingProfile::new(c)?;
        }
        if self.samples < 2 {
            return Err(Error::Config(format!("need at least 2 samples, got {}", self.samples)));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::Config(format!("split fraction must lie in (0, 1), got {}", self.split)));
        }
        self.train_options().validate()
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions { alpha_d: self.alpha_d, alpha_e: self.alpha_e, fit: self.fit }
    }

    pub fn opf_options(&self) -> OpfOptions {
        OpfOptions { rating: RatingKind::Short, tolerances: self.lp }
    }

    /// SHA-256 over the settings that affect results. The case enters by
    /// content hash, so the same case under another path hashes the same.
    pub fn config_hash(&self, case_hash: &str) -> String {
        #[derive(Serialize)]
        struct Keyed<'a> {
            case_hash: &'a str,
            loading: &'a [f64],
            policy: Policy,
            samples: usize,
            seed: u64,
            split: f64,
            alpha_d: f64,
            alpha_e: f64,
            lp: LpTolerances,
            fit: FitOptions,
        }
        let keyed = Keyed {
            case_hash,
            loading: &self.loading,
            policy: self.policy,
            samples: self.samples,
            seed: self.seed,
            split: self.split,
            alpha_d: self.alpha_d,
            alpha_e: self.alpha_e,
            lp: self.lp,
            fit: self.fit,
        };
        hex_sha256(serde_json::to_string(&keyed).expect("config serializes").as_bytes())
    }
}

fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Loads a case file (dialect guessed from the extension when not given)
/// or the bundled IEEE 30-bus system.
pub fn load_case(case: &str, dialect: Option<Dialect>) -> Result<Network> {
    if case == BUILTIN_IEEE30 {
        return Ok(ieee30());
    }
    let path = Path::new(case);
    let text = fs::read_to_string(path)?;
    parse_case(&text, dialect.unwrap_or_else(|| Dialect::from_path(path)))
}

/// Parses a 1-based `"i,j"` branch pair.
pub fn parse_contingency(text: &str, n_branches: usize) -> Result<Contingency> {
    let ids: Vec<usize> = text
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidContingency(format!("expected two branch ids like \"3,17\", got `{text}`")))?;
    match ids[..] {
        [a, b] if a >= 1 && b >= 1 => Contingency::new(a - 1, b - 1, n_branches),
        _ => Err(Error::InvalidContingency(format!("expected two 1-based branch ids, got `{text}`"))),
    }
}

/// `dir/pool.jsonl` -> `dir/pool.manifest.json`.
pub fn manifest_path(pool: &Path) -> PathBuf {
    pool.with_extension("manifest.json")
}

/// File-name tag of a loading level, e.g. `c1.50`.
pub fn level_tag(c: f64) -> String {
    format!("c{c:.2}")
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Single-line JSON with a trailing newline, for matrix-heavy documents.
pub fn write_json_compact<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Syntax { line: e.line(), column: e.column(), message: e.to_string() })
}

/// Result of simulating one loading level.
pub struct LevelOutcome {
    pub manifest: PoolManifest,
    pub pool: Option<SamplePool>,
    pub simulator: Option<CascadeSimulator>,
}

/// Simulates one loading level. A level whose intact network cannot be
/// initialized under the policy is skipped with the reason recorded.
pub fn simulate_level(net: &Network, cfg: &RunConfig, loading_c: f64) -> Result<LevelOutcome> {
    let hash = case_hash(net);
    let mut manifest = PoolManifest {
        schema_version: POOL_SCHEMA_VERSION,
        config_hash: cfg.config_hash(&hash),
        case_hash: hash,
        seed: cfg.seed,
        policy: cfg.policy,
        loading_c,
        n_samples: 0,
        split_fraction: cfg.split,
        train: Vec::new(),
        test: Vec::new(),
        skipped: None,
        summary: None,
    };
    let profile = LoadingProfile::new(loading_c)?;
    let sim = match CascadeSimulator::with_options(net, profile, cfg.policy, cfg.opf_options()) {
        Ok(sim) => sim,
        Err(e @ Error::InfeasibleInitialization { .. }) => {
            log::warn!("skipping loading {loading_c}: {e}");
            manifest.skipped = Some(e.to_string());
            return Ok(LevelOutcome { manifest, pool: None, simulator: None });
        }
        Err(e) => return Err(e),
    };
    let pool = generate_pool_with(&sim, cfg.samples, cfg.seed, cfg.split)?;
    manifest.n_samples = pool.samples.len();
    manifest.train = pool.train.clone();
    manifest.test = pool.test.clone();
    manifest.summary = Some(pool.summary());
    Ok(LevelOutcome { manifest, pool: Some(pool), simulator: Some(sim) })
}

/// Writes a pool and its manifest (the pool file is omitted for skipped
/// levels).
pub fn write_level(path: &Path, outcome: &LevelOutcome) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    if let Some(pool) = &outcome.pool {
        write_pool(path, &pool.samples)?;
    }
    write_json(&manifest_path(path), &outcome.manifest)
}

/// `simulate`: one pool per loading level. With a single level `out` is the
/// pool file; otherwise it is a directory receiving `pool-<tag>.jsonl` files.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<Vec<PoolManifest>> {
    cfg.validate()?;
    let net = load_case(&cfg.case, cfg.dialect)?;
    let mut manifests = Vec::new();
    for &c in &cfg.loading {
        let path = if cfg.loading.len() == 1 { out.to_path_buf() } else { out.join(format!("pool-{}.jsonl", level_tag(c))) };
        let outcome = simulate_level(&net, cfg, c)?;
        write_level(&path, &outcome)?;
        manifests.push(outcome.manifest);
    }
    Ok(manifests)
}

/// A pool file together with its manifest.
#[derive(Debug, Clone)]
pub struct LoadedPool {
    pub path: PathBuf,
    pub manifest: PoolManifest,
    pub pool: SamplePool,
}

pub fn load_pool(path: &Path) -> Result<LoadedPool> {
    let manifest: PoolManifest = read_json(&manifest_path(path))?;
    if manifest.schema_version != POOL_SCHEMA_VERSION {
        return Err(Error::SchemaVersion { found: manifest.schema_version, expected: POOL_SCHEMA_VERSION });
    }
    if let Some(reason) = &manifest.skipped {
        return Err(Error::Config(format!("{} holds no samples: {reason}", path.display())));
    }
    let samples = read_pool(path)?;
    if samples.len() != manifest.n_samples {
        return Err(Error::ArtifactMismatch(format!(
            "{} has {} samples, manifest says {}",
            path.display(),
            samples.len(),
            manifest.n_samples
        )));
    }
    let pool = SamplePool::new(samples, manifest.train.clone(), manifest.test.clone())?;
    Ok(LoadedPool { path: path.to_path_buf(), manifest, pool })
}

fn check_case_hash(expected: &str, found: &str, what: &str) -> Result<()> {
    if expected != found {
        return Err(Error::ArtifactMismatch(format!("{what} was built on case {found}, expected {expected}")));
    }
    Ok(())
}

fn check_network(net: &Network, samples: &[CascadeSample]) -> Result<()> {
    samples.iter().try_for_each(|s| s.validate(net.n_branches(), net.n_buses()))
}

/// Trains one model on the training splits of the given pools (all from
/// the same case and policy).
pub fn train_on_pools(pools: &[LoadedPool], cfg: &RunConfig) -> Result<TrainedModel> {
    let first = pools.first().ok_or_else(|| Error::Config("at least one pool is required".into()))?;
    for p in &pools[1..] {
        check_case_hash(&first.manifest.case_hash, &p.manifest.case_hash, &p.path.display().to_string())?;
        if p.manifest.policy != first.manifest.policy {
            return Err(Error::ArtifactMismatch(format!(
                "pools mix policies {} and {}",
                first.manifest.policy, p.manifest.policy
            )));
        }
    }
    let samples: Vec<&CascadeSample> = pools.iter().flat_map(|p| p.pool.train_samples()).collect();
    let (link_model, shed_model, [fit_d, fit_e]) = train(&samples, &cfg.train_options())?;
    let mut levels: Vec<f64> = pools.iter().map(|p| p.manifest.loading_c).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut keyed = cfg.clone();
    keyed.policy = first.manifest.policy;
    keyed.loading = levels.clone();
    Ok(TrainedModel {
        schema_version: MODEL_SCHEMA_VERSION,
        provenance: Provenance {
            case_hash: first.manifest.case_hash.clone(),
            config_hash: keyed.config_hash(&first.manifest.case_hash),
            seed: first.manifest.seed,
            policy: first.manifest.policy,
            loading_levels: levels,
            n_train: samples.len(),
        },
        link_model,
        shed_model,
        fit_d,
        fit_e,
    })
}

/// `train`: fits a model on one or more pools and writes it as JSON.
pub fn cmd_train(cfg: &RunConfig, pools: &[PathBuf], out: &Path) -> Result<TrainedModel> {
    cfg.train_options().validate()?;
    let loaded = pools.iter().map(|p| load_pool(p)).collect::<Result<Vec<_>>>()?;
    let model = train_on_pools(&loaded, cfg)?;
    write_json_compact(out, &model)?;
    Ok(model)
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    TrainedModel::from_json(&fs::read_to_string(path)?)
}

/// Link cascade and load-shed prediction for one contingency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(with = "crate::cascade::one_based_pair")]
    pub contingency: [usize; 2],
    pub loading_c: f64,
    pub mode: PredictionMode,
    pub cascade: PredictedCascade,
    pub load_shed: PredictedLoadShed,
}

/// Runs both models. Advisory mode feeds the predicted link states to the
/// shed model; eval mode needs the observed states.
pub fn predict(
    model: &TrainedModel,
    contingency: Contingency,
    loading_c: f64,
    mode: PredictionMode,
    observed_states: Option<&[Vec<bool>]>,
) -> Result<Prediction> {
    let n = model.link_model.n_branches();
    let initial = contingency.initial_state(n);
    let cascade = predict_cascade(&model.link_model, &initial, loading_c)?;
    let load_shed = match mode {
        PredictionMode::Advisory => predict_load_shed(&model.shed_model, &cascade.states, loading_c, mode)?,
        PredictionMode::Eval => {
            let states = observed_states
                .ok_or_else(|| Error::Config("eval mode needs the observed link states (--states)".into()))?;
            if states.first().map(Vec::as_slice) != Some(initial.as_slice()) {
                return Err(Error::InvalidContingency("observed states start from a different contingency".into()));
            }
            predict_load_shed(&model.shed_model, states, loading_c, mode)?
        }
    };
    Ok(Prediction { contingency: contingency.branches(), loading_c, mode, cascade, load_shed })
}

/// `predict`: in eval mode the observed states are taken from the first
/// sample of `states_pool` with the same contingency and loading.
pub fn cmd_predict(
    model_path: &Path,
    contingency: &str,
    loading_c: f64,
    mode: PredictionMode,
    states_pool: Option<&Path>,
) -> Result<Prediction> {
    let model = load_model(model_path)?;
    let pair = parse_contingency(contingency, model.link_model.n_branches())?;
    let observed = match (mode, states_pool) {
        (PredictionMode::Eval, Some(path)) => {
            let pool = load_pool(path)?;
            check_case_hash(&model.provenance.case_hash, &pool.manifest.case_hash, &path.display().to_string())?;
            let sample = pool
                .pool
                .samples
                .into_iter()
                .find(|s| s.initial_failures == pair.branches() && (s.loading_c - loading_c).abs() < 1e-9)
                .ok_or_else(|| {
                    Error::InvalidContingency(format!("no sample in {} starts from {contingency}", path.display()))
                })?;
            Some(sample.states)
        }
        _ => None,
    };
    predict(&model, pair, loading_c, mode, observed.as_deref())
}

/// Which split a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEvaluation {
    pub sample_id: usize,
    pub split: Split,
    pub link_accuracy: f64,
    pub shed_accuracy: f64,
    pub termination_time: usize,
    pub predicted_termination_time: usize,
}

/// Per-level figures: pool-mean oracle losses, the model's local influence
/// loss and prediction accuracy on both splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMetrics {
    pub loading_c: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub link_fail_loss: f64,
    pub load_shed_loss: f64,
    pub local_influence_loss: f64,
    pub link_accuracy_train: f64,
    pub link_accuracy_test: f64,
    pub shed_accuracy_train: f64,
    pub shed_accuracy_test: f64,
    /// Set when the model had no thresholds at this level.
    pub loading_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelEvaluation {
    #[serde(flatten)]
    pub metrics: LevelMetrics,
    pub samples: Vec<SampleEvaluation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub case_hash: String,
    pub model_config_hash: String,
    pub policy: Policy,
    pub levels: Vec<LevelEvaluation>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Scores a model on one pool. Shed accuracy uses the observed link states
/// so the two models' errors stay separate.
pub fn evaluate_pool(model: &TrainedModel, pool: &SamplePool, loading_c: f64, net: &Network) -> Result<LevelEvaluation> {
    check_network(net, &pool.samples)?;
    let mut split = vec![None; pool.samples.len()];
    for &i in &pool.train {
        split[i] = Some(Split::Train);
    }
    for &i in &pool.test {
        split[i] = Some(Split::Test);
    }
    let scored: Vec<(SampleEvaluation, bool)> = pool
        .samples
        .par_iter()
        .zip(&split)
        .filter_map(|(s, sp)| sp.map(|sp| (s, sp)))
        .map(|(s, sp)| {
            let cascade = predict_cascade(&model.link_model, s.initial_state(), loading_c)?;
            let shed = predict_load_shed(&model.shed_model, &s.states, loading_c, PredictionMode::Eval)?;
            let eval = SampleEvaluation {
                sample_id: s.sample_id,
                split: sp,
                link_accuracy: link_accuracy(cascade.final_state(), s.final_state()),
                shed_accuracy: shed_accuracy(&shed.ever_shed(), &s.ever_shed()),
                termination_time: s.termination_time,
                predicted_termination_time: cascade.termination_time,
            };
            Ok((eval, cascade.selection.loading_fallback || shed.selection.loading_fallback))
        })
        .collect::<Result<_>>()?;
    let samples: Vec<SampleEvaluation> = scored.iter().map(|(e, _)| e.clone()).collect();
    let of = |sp: Split, f: fn(&SampleEvaluation) -> f64| mean(samples.iter().filter(|e| e.split == sp).map(f));
    let all: Vec<&CascadeSample> = pool.samples.iter().collect();
    let weights: Vec<f64> = net.branches().iter().map(|b| b.cost_weight).collect();
    let losses = LossReport::of(&all, &weights, &net.shed_priorities(), &LossOptions::default());
    let metrics = LevelMetrics {
        loading_c,
        n_train: pool.train.len(),
        n_test: pool.test.len(),
        link_fail_loss: losses.link_fail_loss,
        load_shed_loss: losses.load_shed_loss,
        local_influence_loss: local_influence_loss(&model.link_model.d, &line_graph_distance(net))?,
        link_accuracy_train: of(Split::Train, |e| e.link_accuracy),
        link_accuracy_test: of(Split::Test, |e| e.link_accuracy),
        shed_accuracy_train: of(Split::Train, |e| e.shed_accuracy),
        shed_accuracy_test: of(Split::Test, |e| e.shed_accuracy),
        loading_fallback: scored.iter().any(|(_, f)| *f),
    };
    Ok(LevelEvaluation { metrics, samples })
}

/// `evaluate`: scores a model on each pool (one level per pool).
pub fn cmd_evaluate(model_path: &Path, pools: &[PathBuf], net: &Network, out: &Path) -> Result<EvaluationReport> {
    let model = load_model(model_path)?;
    let hash = case_hash(net);
    check_case_hash(&model.provenance.case_hash, &hash, "the case")?;
    let mut levels = Vec::new();
    for path in pools {
        let loaded = load_pool(path)?;
        check_case_hash(&model.provenance.case_hash, &loaded.manifest.case_hash, &path.display().to_string())?;
        levels.push(evaluate_pool(&model, &loaded.pool, loaded.manifest.loading_c, net)?);
    }
    let report = EvaluationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        case_hash: hash,
        model_config_hash: model.provenance.config_hash.clone(),
        policy: model.provenance.policy,
        levels,
    };
    write_json(out, &report)?;
    Ok(report)
}

/// One row of the loss / accuracy tables; skipped levels carry the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub policy: Policy,
    pub loading_c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<LevelMetrics>,
}

/// Column-wise view of the level rows of one policy, for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub policy: Policy,
    pub loading_c: Vec<f64>,
    pub link_fail_loss: Vec<Option<f64>>,
    pub load_shed_loss: Vec<Option<f64>>,
    pub local_influence_loss: Vec<Option<f64>>,
    pub link_accuracy_train: Vec<Option<f64>>,
    pub link_accuracy_test: Vec<Option<f64>>,
    pub shed_accuracy_train: Vec<Option<f64>>,
    pub shed_accuracy_test: Vec<Option<f64>>,
}

impl Series {
    pub fn of(policy: Policy, rows: &[LevelRow]) -> Self {
        let rows: Vec<&LevelRow> = rows.iter().filter(|r| r.policy == policy).collect();
        let col = |f: fn(&LevelMetrics) -> f64| rows.iter().map(|r| r.metrics.as_ref().map(f)).collect();
        Series {
            policy,
            loading_c: rows.iter().map(|r| r.loading_c).collect(),
            link_fail_loss: col(|m| m.link_fail_loss),
            load_shed_loss: col(|m| m.load_shed_loss),
            local_influence_loss: col(|m| m.local_influence_loss),
            link_accuracy_train: col(|m| m.link_accuracy_train),
            link_accuracy_test: col(|m| m.link_accuracy_test),
            shed_accuracy_train: col(|m| m.shed_accuracy_train),
            shed_accuracy_test: col(|m| m.shed_accuracy_test),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub case_hash: String,
    pub config_hash: String,
    pub rows: Vec<LevelRow>,
    pub series: Vec<Series>,
}

/// Mean wall-clock cost per test sample of the oracle and of the models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub policy: Policy,
    pub loading_c: f64,
    pub n_samples: usize,
    pub oracle_seconds: f64,
    pub prediction_seconds: f64,
    pub ratio: f64,
}

/// Rounds per timing measurement; the fastest round is kept.
const TIMING_ROUNDS: usize = 3;

/// Times the oracle and an advisory-mode prediction on every test sample,
/// each as a sequential batch on the calling thread, and keeps the fastest
/// of a few rounds per method. Model preparation (done once per load) is
/// not counted.
pub fn measure_timing(sim: &CascadeSimulator, model: &TrainedModel, pool: &SamplePool) -> Result<TimingRow> {
    model.prepare();
    let test = pool.test_samples();
    let n = test.len().max(1) as f64;
    let n_br = sim.network().n_branches();
    let pairs = test
        .iter()
        .map(|s| Contingency::new(s.initial_failures[0], s.initial_failures[1], n_br))
        .collect::<Result<Vec<_>>>()?;
    let (mut oracle, mut predicted) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..TIMING_ROUNDS {
        let start = Instant::now();
        for (s, &pair) in test.iter().zip(&pairs) {
            std::hint::black_box(sim.run(pair, s.sample_id, s.seed)?);
        }
        oracle = oracle.min(start.elapsed().as_secs_f64());
        let start = Instant::now();
        for &pair in &pairs {
            std::hint::black_box(predict(model, pair, sim.loading_c(), PredictionMode::Advisory, None)?);
        }
        predicted = predicted.min(start.elapsed().as_secs_f64());
    }
    let (oracle_seconds, prediction_seconds) = (oracle / n, predicted / n);
    Ok(TimingRow {
        policy: sim.policy(),
        loading_c: sim.loading_c(),
        n_samples: test.len(),
        oracle_seconds,
        prediction_seconds,
        ratio: if oracle_seconds > 0.0 { prediction_seconds / oracle_seconds } else { f64::INFINITY },
    })
}

/// Heat-map CSV: header of 1-based column ids, then one row per entity.
pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec![String::new()];
    header.extend((1..=m.cols()).map(|j| j.to_string()));
    w.write_record(&header).map_err(csv_error)?;
    for r in 0..m.rows() {
        let mut rec = vec![(r + 1).to_string()];
        rec.extend(m.row(r).iter().map(f64::to_string));
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(csv::Writer::from_path(path).map_err(csv_error)?)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// `tables/losses.csv` and `tables/accuracy.csv`.
pub fn write_tables(dir: &Path, rows: &[LevelRow]) -> Result<()> {
    let mut losses = csv_writer(&dir.join("losses.csv"))?;
    losses
        .write_record(["policy", "loading_c", "link_fail_loss", "load_shed_loss", "local_influence_loss", "skipped"])
        .map_err(csv_error)?;
    let mut acc = csv_writer(&dir.join("accuracy.csv"))?;
    acc.write_record([
        "policy",
        "loading_c",
        "link_accuracy_train",
        "link_accuracy_test",
        "shed_accuracy_train",
        "shed_accuracy_test",
    ])
    .map_err(csv_error)?;
    for r in rows {
        let m = r.metrics.as_ref();
        losses
            .write_record([
                r.policy.to_string(),
                r.loading_c.to_string(),
                opt(m.map(|m| m.link_fail_loss)),
                opt(m.map(|m| m.load_shed_loss)),
                opt(m.map(|m| m.local_influence_loss)),
                r.skipped.clone().unwrap_or_default(),
            ])
            .map_err(csv_error)?;
        acc.write_record([
            r.policy.to_string(),
            r.loading_c.to_string(),
            opt(m.map(|m| m.link_accuracy_train)),
            opt(m.map(|m| m.link_accuracy_test)),
            opt(m.map(|m| m.shed_accuracy_train)),
            opt(m.map(|m| m.shed_accuracy_test)),
        ])
        .map_err(csv_error)?;
    }
    losses.flush()?;
    acc.flush()?;
    Ok(())
}

/// Criticality table of a model: 1-based link id, both scores, both ranks.
pub fn write_criticality_csv(path: &Path, model: &TrainedModel) -> Result<()> {
    let report = criticality(&model.link_model, &model.shed_model);
    let rank_of = |ranking: &[usize]| {
        let mut r = vec![0; ranking.len()];
        for (pos, &j) in ranking.iter().enumerate() {
            r[j] = pos + 1;
        }
        r
    };
    let (rd, re) = (rank_of(&report.rank_cd), rank_of(&report.rank_ce));
    let mut w = csv_writer(path)?;
    w.write_record(["link", "cd", "ce", "rank_cd", "rank_ce"]).map_err(csv_error)?;
    for j in 0..report.cd.len() {
        w.write_record([
            (j + 1).to_string(),
            report.cd[j].to_string(),
            report.ce[j].to_string(),
            rd[j].to_string(),
            re[j].to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes heat maps and criticality of one model under `out`.
fn write_model_views(out: &Path, stem: &str, model: &TrainedModel) -> Result<()> {
    write_matrix_csv(&out.join("heatmaps").join(format!("{stem}-D.csv")), &model.link_model.d)?;
    write_matrix_csv(&out.join("heatmaps").join(format!("{stem}-E.csv")), &model.shed_model.e)?;
    write_criticality_csv(&out.join("criticality").join(format!("{stem}.csv")), model)
}

fn finish_report(out: &Path, case_hash: String, config_hash: String, rows: Vec<LevelRow>) -> Result<Report> {
    let mut policies: Vec<Policy> = rows.iter().map(|r| r.policy).collect();
    policies.sort();
    policies.dedup();
    let series = policies.iter().map(|&p| Series::of(p, &rows)).collect();
    write_tables(&out.join("tables"), &rows)?;
    let report = Report { schema_version: REPORT_SCHEMA_VERSION, case_hash, config_hash, rows, series };
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

/// `report --all`: the whole pipeline for every policy and loading level
/// in one go. Layout under `out`:
///
/// ```text
/// pools/<policy>/pool-<tag>.jsonl (+ .manifest.json)
/// models/<policy>/model-<tag>.json
/// predictions/<policy>/<tag>.jsonl   advisory predictions, test split
/// heatmaps/<policy>-<tag>-{D,E}.csv
/// criticality/<policy>-<tag>.csv
/// tables/{losses,accuracy}.csv
/// report.json
/// timing.json                        wall-clock, varies run to run
/// ```
pub fn cmd_report_all(cfg: &RunConfig, policies: &[Policy], out: &Path) -> Result<Report> {
    cfg.validate()?;
    let net = load_case(&cfg.case, cfg.dialect)?;
    let hash = case_hash(&net);
    let mut rows = Vec::new();
    let mut timing = Vec::new();
    for &policy in policies {
        let cfg = RunConfig { policy, ..cfg.clone() };
        for &c in &cfg.loading {
            let tag = level_tag(c);
            let pool_path = out.join("pools").join(policy.as_str()).join(format!("pool-{tag}.jsonl"));
            let outcome = simulate_level(&net, &cfg, c)?;
            write_level(&pool_path, &outcome)?;
            let (Some(pool), Some(sim)) = (&outcome.pool, &outcome.simulator) else {
                rows.push(LevelRow { policy, loading_c: c, skipped: outcome.manifest.skipped.clone(), metrics: None });
                continue;
            };
            let loaded = LoadedPool { path: pool_path, manifest: outcome.manifest.clone(), pool: pool.clone() };
            let model = train_on_pools(std::slice::from_ref(&loaded), &cfg)?;
            write_json_compact(&out.join("models").join(policy.as_str()).join(format!("model-{tag}.json")), &model)?;
            write_predictions(
                &out.join("predictions").join(policy.as_str()).join(format!("{tag}.jsonl")),
                &model,
                pool,
                c,
            )?;
            write_model_views(out, &format!("{policy}-{tag}"), &model)?;
            let evaluation = evaluate_pool(&model, pool, c, &net)?;
            rows.push(LevelRow { policy, loading_c: c, skipped: None, metrics: Some(evaluation.metrics) });
            timing.push(measure_timing(sim, &model, pool)?);
        }
    }
    write_json(&out.join("timing.json"), &timing)?;
    finish_report(out, hash.clone(), cfg.config_hash(&hash), rows)
}

/// Advisory predictions for the test split, one JSON document per line.
fn write_predictions(path: &Path, model: &TrainedModel, pool: &SamplePool, loading_c: f64) -> Result<()> {
    let n = model.link_model.n_branches();
    let lines = pool
        .test_samples()
        .par_iter()
        .map(|s| {
            let pair = Contingency::new(s.initial_failures[0], s.initial_failures[1], n)?;
            let p = predict(model, pair, loading_c, PredictionMode::Advisory, None)?;
            Ok(serde_json::to_string(&p)?)
        })
        .collect::<Result<Vec<String>>>()?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = lines.join("\n");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// `report` on existing artifacts: scores one model on the given pools and
/// writes tables, heat maps and criticality under `out`.
pub fn cmd_report(model_path: &Path, pools: &[PathBuf], net: &Network, out: &Path) -> Result<Report> {
    let model = load_model(model_path)?;
    let hash = case_hash(net);
    check_case_hash(&model.provenance.case_hash, &hash, "the case")?;
    let mut rows = Vec::new();
    for path in pools {
        let loaded = load_pool(path)?;
        check_case_hash(&hash, &loaded.manifest.case_hash, &path.display().to_string())?;
        let e = evaluate_pool(&model, &loaded.pool, loaded.manifest.loading_c, net)?;
        rows.push(LevelRow {
            policy: loaded.manifest.policy,
            loading_c: loaded.manifest.loading_c,
            skipped: None,
            metrics: Some(e.metrics),
        });
    }
    let stem = model_path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    write_model_views(out, stem, &model)?;
    finish_report(out, hash, model.provenance.config_hash.clone(), rows)
}

/// Oracle-free losses of a predicted cascade: link failures as predicted
/// and, per step, the full scaled demand of every bus predicted to shed.
pub fn predicted_losses(net: &Network, prediction: &Prediction, opts: &LossOptions) -> (f64, f64) {
    let weights: Vec<f64> = net.branches().iter().map(|b| b.cost_weight).collect();
    let link = link_fail_loss_states(&prediction.cascade.states, &weights, opts);
    let demand: Vec<f64> = net.demand().iter().map(|d| d * prediction.loading_c).collect();
    let shed: Vec<Vec<f64>> = prediction
        .load_shed
        .served
        .iter()
        .map(|l| l.iter().zip(&demand).map(|(&ok, &d)| if ok { 0.0 } else { d }).collect())
        .collect();
    (link, load_shed_loss_mw(&shed, &net.shed_priorities(), opts.discount))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contingency_parsing() {
        assert_eq!(parse_contingency("3, 17", 41).unwrap().branches(), [2, 16]);
        assert!(matches!(parse_contingency("3", 41), Err(Error::InvalidContingency(_))));
        assert!(matches!(parse_contingency("0,2", 41), Err(Error::InvalidContingency(_))));
        assert!(matches!(parse_contingency("4,4", 41), Err(Error::InvalidContingency(_))));
        assert!(matches!(parse_contingency("1,42", 41), Err(Error::InvalidContingency(_))));
    }

    #[test]
    fn config_hash_ignores_case_path() {
        let a = RunConfig::default();
        let b = RunConfig { case: "elsewhere/case30.m".into(), ..a.clone() };
        assert_eq!(a.config_hash("h"), b.config_hash("h"));
        assert_ne!(a.config_hash("h"), RunConfig { seed: 2, ..a.clone() }.config_hash("h"));
        assert_ne!(a.config_hash("h"), a.config_hash("g"));
    }

    #[test]
    fn manifest_next_to_pool() {
        assert_eq!(manifest_path(Path::new("out/pool-c1.50.jsonl")), Path::new("out/pool-c1.50.manifest.json"));
        assert_eq!(level_tag(1.5), "c1.50");
    }
}
