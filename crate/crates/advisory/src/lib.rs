//! HTTP advisory service: lists loaded cases and models, predicts cascades
//! and load shedding for a contingency, compares corrective strategies and
//! reports link criticality. Predictions use trained models only; the
//! `?oracle=true` flag on `/advise` runs the simulator instead.

pub mod store;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cascade_core::cascade::{CascadeSample, CascadeSimulator, Policy};
use cascade_core::grid::{Contingency, LoadingProfile};
use cascade_core::influence::{PredictedCascade, PredictedLoadShed, PredictionMode};
use cascade_core::metrics::{criticality, link_fail_loss, load_shed_loss, LossOptions};
use cascade_core::pipeline::{predict, predicted_losses, Prediction};
use cascade_core::{Error, ErrorBody};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use tower_http::services::ServeDir;

use store::{CaseEntry, ModelEntry, Snapshot};

/// Where the service finds its artifacts and what it serves besides the API.
#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    pub store_dir: PathBuf,
    /// Built UI assets served under `/`.
    pub static_dir: Option<PathBuf>,
    /// Allowed browser origin; any origin when unset.
    pub cors_origin: Option<String>,
}

/// Shared state: the current snapshot plus a lock serializing loads.
#[derive(Clone)]
pub struct AppState {
    store_dir: PathBuf,
    snapshot: Arc<RwLock<Arc<Snapshot>>>,
    loading: Arc<Mutex<()>>,
}

impl AppState {
    /// Scans the store directory once.
    pub fn open(store_dir: &Path) -> cascade_core::Result<Self> {
        let snap = store::scan(store_dir)?;
        Ok(AppState {
            store_dir: store_dir.to_path_buf(),
            snapshot: Arc::new(RwLock::new(Arc::new(snap))),
            loading: Arc::new(Mutex::new(())),
        })
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    /// Looks an artifact up, loading it from the store on a miss.
    fn lookup<T>(
        &self,
        id: &str,
        get: impl Fn(&Snapshot) -> Option<Arc<T>>,
        path: PathBuf,
        load: impl FnOnce(&Path) -> cascade_core::Result<T>,
        insert: impl FnOnce(&mut Snapshot, Arc<T>),
    ) -> Result<Arc<T>, ApiError> {
        if let Some(hit) = get(&self.snapshot()) {
            return Ok(hit);
        }
        if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') || !path.is_file() {
            return Err(ApiError::not_found(id));
        }
        let _guard = self.loading.lock().expect("load lock");
        if let Some(hit) = get(&self.snapshot()) {
            return Ok(hit);
        }
        let entry = Arc::new(load(&path)?);
        let mut next = Snapshot {
            cases: self.snapshot().cases.clone(),
            models: self.snapshot().models.clone(),
        };
        insert(&mut next, entry.clone());
        *self.snapshot.write().expect("snapshot lock") = Arc::new(next);
        Ok(entry)
    }

    pub fn model(&self, id: &str) -> Result<Arc<ModelEntry>, ApiError> {
        self.lookup(
            id,
            |s| s.models.get(id).cloned(),
            store::models_dir(&self.store_dir).join(format!("{id}.json")),
            store::load_model_file,
            |s, m| {
                s.models.insert(m.id.clone(), m);
            },
        )
    }

    pub fn case(&self, id: &str) -> Result<Arc<CaseEntry>, ApiError> {
        let dir = store::cases_dir(&self.store_dir);
        let path = ["m", "json"].iter().map(|ext| dir.join(format!("{id}.{ext}"))).find(|p| p.is_file());
        self.lookup(
            id,
            |s| s.cases.get(id).cloned(),
            path.unwrap_or_else(|| dir.join(id)),
            store::load_case_file,
            |s, c| {
                s.cases.insert(c.id.clone(), c);
            },
        )
    }
}

/// Error response with a `{code, message, detail}` body.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn not_found(id: &str) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            body: ErrorBody { code: "not_found".into(), message: format!("no artifact with id `{id}`"), detail: None },
        }
    }

    fn invalid(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: ErrorBody { code: "invalid_request".into(), message: message.into(), detail: None },
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidContingency(_)
            | Error::Config(_)
            | Error::Dimension(_)
            | Error::EmptyThresholdPool
            | Error::InfeasibleInitialization { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            Error::ArtifactMismatch(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError { status, body: ErrorBody::from(&e) }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::invalid(format!("malformed request body: {e}")))
}

/// 1-based pair from a request to a validated contingency.
fn contingency(pair: [usize; 2], n_branches: usize) -> Result<Contingency, ApiError> {
    if pair.contains(&0) {
        return Err(Error::InvalidContingency("branch ids are 1-based".into()).into());
    }
    Ok(Contingency::new(pair[0] - 1, pair[1] - 1, n_branches)?)
}

#[derive(Debug, Clone, Deserialize)]
pub struct PredictRequest {
    pub model_id: String,
    pub contingency: [usize; 2],
    pub loading_c: f64,
    #[serde(default)]
    pub mode: Option<PredictionMode>,
    /// Observed link states (rows of 0/1), required in eval mode.
    #[serde(default)]
    pub states: Option<Vec<Vec<u8>>>,
}

async fn list_cases(State(state): State<AppState>) -> Json<Vec<store::CaseListing>> {
    Json(state.snapshot().case_listing())
}

async fn list_models(State(state): State<AppState>) -> Json<Vec<store::ModelListing>> {
    Json(state.snapshot().model_listing())
}

async fn predict_handler(State(state): State<AppState>, body: Bytes) -> Result<Json<Prediction>, ApiError> {
    let req: PredictRequest = parse_body(&body)?;
    let entry = state.model(&req.model_id)?;
    let pair = contingency(req.contingency, entry.model.link_model.n_branches())?;
    let states: Option<Vec<Vec<bool>>> =
        req.states.map(|rows| rows.into_iter().map(|r| r.into_iter().map(|b| b != 0).collect()).collect());
    let mode = req.mode.unwrap_or(PredictionMode::Advisory);
    Ok(Json(predict(&entry.model, pair, req.loading_c, mode, states.as_deref())?))
}

/// Relative importance of the two losses when ranking strategies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub link_fail: f64,
    pub load_shed: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights { link_fail: 1.0, load_shed: 1.0 }
    }
}

impl Weights {
    fn validate(&self) -> Result<(), ApiError> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !ok(self.link_fail) || !ok(self.load_shed) || self.link_fail + self.load_shed == 0.0 {
            return Err(ApiError::invalid("weights must be nonnegative and not both zero"));
        }
        Ok(())
    }

    pub fn score(&self, link_fail_loss: f64, load_shed_loss: f64) -> f64 {
        self.link_fail * link_fail_loss + self.load_shed * load_shed_loss
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct AdviseRequest {
    pub case_id: String,
    pub contingency: [usize; 2],
    pub loading_c: f64,
    pub strategies: Vec<Policy>,
    #[serde(default)]
    pub weights: Weights,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct AdviseQuery {
    #[serde(default)]
    pub oracle: bool,
}

/// Outcome of one strategy. Entries that could not be evaluated carry an
/// error and no rank.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyEntry {
    pub strategy: Policy,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_cascade: Option<PredictedCascade>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_sheds: Option<PredictedLoadShed>,
    /// Simulated cascade, oracle mode only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_sample: Option<CascadeSample>,
    /// 1-based buses that shed load at some step.
    pub shed_buses: Vec<usize>,
    pub link_fail_loss: Option<f64>,
    pub load_shed_loss: Option<f64>,
    pub score: Option<f64>,
    pub rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

impl StrategyEntry {
    fn failed(strategy: Policy, error: ErrorBody) -> Self {
        StrategyEntry {
            strategy,
            model_id: None,
            predicted_cascade: None,
            predicted_sheds: None,
            oracle_sample: None,
            shed_buses: Vec::new(),
            link_fail_loss: None,
            load_shed_loss: None,
            score: None,
            rank: None,
            error: Some(error),
        }
    }
}

/// Strategy comparison. Provenance is the case hash plus each entry's model
/// id; the body carries no wall-clock time so identical requests get
/// identical answers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdvisoryResult {
    pub case_id: String,
    pub case_hash: String,
    pub contingency: [usize; 2],
    pub loading_c: f64,
    pub weights: Weights,
    pub oracle: bool,
    pub entries: Vec<StrategyEntry>,
}

/// Assigns ranks 1.. by ascending weighted score; ties keep request order.
pub fn rank_entries(entries: &mut [StrategyEntry], weights: &Weights) {
    let mut order: Vec<usize> = Vec::new();
    for (k, e) in entries.iter_mut().enumerate() {
        if let (Some(l), Some(s)) = (e.link_fail_loss, e.load_shed_loss) {
            e.score = Some(weights.score(l, s));
            order.push(k);
        }
    }
    order.sort_by(|&a, &b| entries[a].score.unwrap().total_cmp(&entries[b].score.unwrap()).then(a.cmp(&b)));
    for (pos, k) in order.into_iter().enumerate() {
        entries[k].rank = Some(pos + 1);
    }
}

/// Model trained for `policy` on the same case whose loading levels come
/// closest to `loading_c` (ties by id).
pub fn choose_model(snap: &Snapshot, case_hash: &str, policy: Policy, loading_c: f64) -> Option<Arc<ModelEntry>> {
    let mut best: Option<(f64, &Arc<ModelEntry>)> = None;
    for m in snap.models.values() {
        let p = &m.model.provenance;
        if p.case_hash != case_hash || p.policy != policy {
            continue;
        }
        let gap = p.loading_levels.iter().map(|l| (l - loading_c).abs()).fold(f64::INFINITY, f64::min);
        if best.is_none_or(|(g, _)| gap < g) {
            best = Some((gap, m));
        }
    }
    best.map(|(_, m)| m.clone())
}

fn one_based_true(flags: &[bool]) -> Vec<usize> {
    flags.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| i + 1).collect()
}

fn model_entry(snap: &Snapshot, case: &CaseEntry, policy: Policy, pair: Contingency, c: f64) -> StrategyEntry {
    let Some(m) = choose_model(snap, &case.hash, policy, c) else {
        return StrategyEntry::failed(
            policy,
            ErrorBody {
                code: "no_model".into(),
                message: format!("no trained model for strategy {policy} on this case"),
                detail: None,
            },
        );
    };
    match predict(&m.model, pair, c, PredictionMode::Advisory, None) {
        Ok(p) => {
            let (link, shed) = predicted_losses(&case.net, &p, &LossOptions::default());
            StrategyEntry {
                strategy: policy,
                model_id: Some(m.id.clone()),
                shed_buses: one_based_true(&p.load_shed.ever_shed()),
                predicted_cascade: Some(p.cascade),
                predicted_sheds: Some(p.load_shed),
                oracle_sample: None,
                link_fail_loss: Some(link),
                load_shed_loss: Some(shed),
                score: None,
                rank: None,
                error: None,
            }
        }
        Err(e) => StrategyEntry { model_id: Some(m.id.clone()), ..StrategyEntry::failed(policy, ErrorBody::from(&e)) },
    }
}

fn oracle_entry(case: &CaseEntry, policy: Policy, pair: Contingency, c: f64) -> StrategyEntry {
    let run = LoadingProfile::new(c)
        .and_then(|profile| CascadeSimulator::new(&case.net, profile, policy))
        .and_then(|sim| sim.run(pair, 0, 0));
    match run {
        Ok(sample) => {
            let opts = LossOptions::default();
            let weights: Vec<f64> = case.net.branches().iter().map(|b| b.cost_weight).collect();
            StrategyEntry {
                strategy: policy,
                model_id: None,
                predicted_cascade: None,
                predicted_sheds: None,
                shed_buses: one_based_true(&sample.ever_shed()),
                link_fail_loss: Some(link_fail_loss(&sample, &weights, &opts)),
                load_shed_loss: Some(load_shed_loss(&sample, &case.net.shed_priorities(), &opts)),
                oracle_sample: Some(sample),
                score: None,
                rank: None,
                error: None,
            }
        }
        Err(e) => StrategyEntry::failed(policy, ErrorBody::from(&e)),
    }
}

async fn advise_handler(
    State(state): State<AppState>,
    Query(query): Query<AdviseQuery>,
    body: Bytes,
) -> Result<Json<AdvisoryResult>, ApiError> {
    let req: AdviseRequest = parse_body(&body)?;
    if req.strategies.is_empty() {
        return Err(ApiError::invalid("at least one strategy is required"));
    }
    req.weights.validate()?;
    LoadingProfile::new(req.loading_c)?;
    let case = state.case(&req.case_id)?;
    let pair = contingency(req.contingency, case.net.n_branches())?;
    let snap = state.snapshot();
    let mut entries: Vec<StrategyEntry> = req
        .strategies
        .iter()
        .map(|&policy| {
            if query.oracle {
                oracle_entry(&case, policy, pair, req.loading_c)
            } else {
                model_entry(&snap, &case, policy, pair, req.loading_c)
            }
        })
        .collect();
    rank_entries(&mut entries, &req.weights);
    Ok(Json(AdvisoryResult {
        case_id: case.id.clone(),
        case_hash: case.hash.clone(),
        contingency: req.contingency,
        loading_c: req.loading_c,
        weights: req.weights,
        oracle: query.oracle,
        entries,
    }))
}

#[derive(Debug, Clone, Deserialize)]
pub struct CriticalityQuery {
    pub model_id: String,
}

/// Criticality scores indexed by link (position `j` is link `j + 1`) and
/// rankings as 1-based link ids, most critical first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalityResponse {
    pub model_id: String,
    pub cd: Vec<f64>,
    pub ce: Vec<f64>,
    pub rank_cd: Vec<usize>,
    pub rank_ce: Vec<usize>,
}

async fn criticality_handler(
    State(state): State<AppState>,
    Query(query): Query<CriticalityQuery>,
) -> Result<Json<CriticalityResponse>, ApiError> {
    let entry = state.model(&query.model_id)?;
    let r = criticality(&entry.model.link_model, &entry.model.shed_model);
    Ok(Json(CriticalityResponse {
        model_id: entry.id.clone(),
        rank_cd: r.rank_cd.iter().map(|j| j + 1).collect(),
        rank_ce: r.rank_ce.iter().map(|j| j + 1).collect(),
        cd: r.cd,
        ce: r.ce,
    }))
}

/// All routes, CORS and the optional static UI.
pub fn router(state: AppState, cfg: &ServiceConfig) -> Router {
    let origin = match cfg.cors_origin.as_deref().map(HeaderValue::from_str) {
        Some(Ok(v)) => AllowOrigin::exact(v),
        Some(Err(_)) => {
            log::warn!("ignoring malformed CORS origin");
            AllowOrigin::from(Any)
        }
        None => AllowOrigin::from(Any),
    };
    let cors = CorsLayer::new().allow_origin(origin).allow_methods(Any).allow_headers(Any);
    let mut app = Router::new()
        .route("/cases", get(list_cases))
        .route("/models", get(list_models))
        .route("/predict", post(predict_handler))
        .route("/advise", post(advise_handler))
        .route("/criticality", get(criticality_handler))
        .with_state(state);
    if let Some(dir) = &cfg.static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    app.layer(cors)
}

/// Binds `addr` and serves until the process stops.
pub async fn serve(cfg: ServiceConfig, addr: SocketAddr) -> std::io::Result<()> {
    let state = AppState::open(&cfg.store_dir).map_err(std::io::Error::other)?;
    let snap = state.snapshot();
    log::info!("loaded {} cases and {} models from {}", snap.cases.len(), snap.models.len(), cfg.store_dir.display());
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state, &cfg)).await
}
