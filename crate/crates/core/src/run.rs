//! Run configuration, run manifests and the summarize / evaluate / compare
//! commands behind the CLI.
//!
//! A run directory holds `manifest.json`, `summary.txt`, `trace.json` and
//! `reports/report.json`. The manifest is rewritten atomically after every
//! stage, so a crashed run still leaves a parseable partial record.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::composition::{tot_search, vanilla_summarize, CompositionError, ToTConfig, ToTTrace};
use crate::gateway::config::{Backend, GatewayConfig, ProviderConfig, ProviderKind};
use crate::gateway::replay::{replay_gateway, DeclaredProvider, RecordedChat, RecordedEmbedding};
use crate::gateway::{CacheKey, Gateway, GatewayStats};
use crate::metrics::{
    aspect_overlap, length_stats, opinion_coverage, position_representation, rouge1_recall, rouge1_recall_docasref,
};
use crate::planning::{plan, Acu, Aspect, PlanningOptions};
use crate::report::{aspects_svg, position_svg, to_csv, LengthReport, MetricParams, MetricReport};
use crate::sentence::{split_sentences, split_text, SPLITTER_ID};
use crate::session::{CallKind, LedgerEntry, Roles, Session};
use crate::thread::{flatten, parse_flat, parse_thread_tree, DocumentSet, FLAT_DELIMITER};
use crate::prompts::CATALOG_VERSION;

pub const FORMAT_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Embedding provider added when a configuration names none.
pub const BUILTIN_EMBEDDER: &str = "builtin-hashing";
const BUILTIN_MODEL: &str = "feature-hash-v1";
const BUILTIN_DIM: usize = 256;
pub const CONFIG_ENV: &str = "THREADSUMM_CONFIG";

#[derive(Debug, Error, PartialEq)]
pub enum RunError {
    /// Bad arguments, configuration or input; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// A pipeline stage or every requested metric failed; exit code 1.
    #[error("{0}")]
    Failed(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => 2,
            RunError::Failed(_) => 1,
        }
    }
}

fn usage(msg: impl Into<String>) -> RunError {
    RunError::Usage(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Tree,
    Flat,
}

impl InputFormat {
    /// `.json` files are threads; anything else is delimited flat text.
    pub fn infer(path: &Path) -> InputFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => InputFormat::Tree,
            _ => InputFormat::Flat,
        }
    }
}

impl FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tree" => Ok(InputFormat::Tree),
            "flat" => Ok(InputFormat::Flat),
            other => Err(format!("unknown input format {other:?} (expected tree or flat)")),
        }
    }
}

impl fmt::Display for InputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputFormat::Tree => "tree",
            InputFormat::Flat => "flat",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleSelection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scorer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedder: Option<String>,
}

/// The configuration file: gateway providers plus run parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub gateway: GatewayConfig,
    #[serde(default)]
    pub roles: RoleSelection,
    #[serde(default)]
    pub tot: ToTConfig,
    #[serde(default)]
    pub metrics: MetricParams,
    #[serde(default)]
    pub planning: PlanningOptions,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub baseline_vanilla: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            gateway: GatewayConfig {
                providers: Vec::new(),
                cache_dir: None,
                max_attempts: 3,
                backoff_ms: 500,
            },
            roles: RoleSelection::default(),
            tot: ToTConfig::default(),
            metrics: MetricParams::default(),
            planning: PlanningOptions::default(),
            temperature: 0.0,
            baseline_vanilla: false,
        }
    }
}

impl RunConfig {
    /// Parse a config file; returns it with the directory relative paths resolve against.
    pub fn load(path: &Path) -> Result<(RunConfig, PathBuf), RunError> {
        let text =
            fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    /// Fill in every role and add the builtin embedder when none is named.
    /// Afterwards `roles` has all three ids set. Without `need_chat` a
    /// missing chat provider leaves the generator and scorer empty.
    pub fn resolve(&mut self, provider: Option<&str>, need_chat: bool) -> Result<Roles, RunError> {
        self.gateway.validate().map_err(|e| usage(e.to_string()))?;
        let kind_of = |cfg: &GatewayConfig, id: &str| cfg.provider(id).map(|p| p.kind);
        let first = |kind| {
            self.gateway
                .providers
                .iter()
                .find(|p| p.kind == kind)
                .map(|p| p.id.clone())
        };
        let generator = provider
            .map(str::to_string)
            .or_else(|| self.roles.generator.clone())
            .or_else(|| first(ProviderKind::Chat));
        let generator = match generator {
            Some(g) => g,
            None if need_chat => return Err(usage("no chat provider configured")),
            None => String::new(),
        };
        let scorer = self.roles.scorer.clone().unwrap_or_else(|| generator.clone());
        for (role, id) in [("generator", &generator), ("scorer", &scorer)] {
            if id.is_empty() && !need_chat {
                continue;
            }
            match kind_of(&self.gateway, id) {
                Some(ProviderKind::Chat) => {}
                Some(ProviderKind::Embedding) => {
                    return Err(usage(format!("{role} {id:?} is an embedding provider")))
                }
                None => return Err(usage(format!("{role} {id:?} is not a configured provider"))),
            }
        }
        let embedder = match self.roles.embedder.clone().or_else(|| first(ProviderKind::Embedding)) {
            Some(id) => {
                match kind_of(&self.gateway, &id) {
                    Some(ProviderKind::Embedding) => {}
                    Some(ProviderKind::Chat) => return Err(usage(format!("embedder {id:?} is a chat provider"))),
                    None => return Err(usage(format!("embedder {id:?} is not a configured provider"))),
                }
                id
            }
            None => {
                if self.gateway.provider(BUILTIN_EMBEDDER).is_none() {
                    self.gateway.providers.push(ProviderConfig {
                        id: BUILTIN_EMBEDDER.into(),
                        kind: ProviderKind::Embedding,
                        backend: Backend::Hashing,
                        base_url: None,
                        model_id: BUILTIN_MODEL.into(),
                        api_key_env: None,
                        timeout_s: None,
                        script: None,
                        dim: Some(BUILTIN_DIM),
                    });
                }
                BUILTIN_EMBEDDER.to_string()
            }
        };
        self.roles = RoleSelection {
            generator: (!generator.is_empty()).then(|| generator.clone()),
            scorer: (!scorer.is_empty()).then(|| scorer.clone()),
            embedder: Some(embedder.clone()),
        };
        Ok(Roles {
            generator,
            scorer,
            embedder,
        })
    }
}

/// Config path from the flag, else from `THREADSUMM_CONFIG`.
pub fn config_path(flag: Option<&Path>) -> Option<PathBuf> {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    /// File name only, so manifests do not depend on where the input lives.
    pub file: String,
    pub format: InputFormat,
    pub fingerprint: String,
    pub documents: usize,
}

pub fn fingerprint(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Read and parse an input file. Any failure is a usage error.
pub fn load_input(path: &Path, format: Option<InputFormat>) -> Result<(DocumentSet, InputRecord), RunError> {
    let bytes = fs::read(path).map_err(|e| usage(format!("cannot read input {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| usage(format!("input {} is not valid UTF-8", path.display())))?;
    let format = format.unwrap_or_else(|| InputFormat::infer(path));
    let docs = match format {
        InputFormat::Tree => parse_thread_tree(&text).map(|t| flatten(&t)),
        InputFormat::Flat => parse_flat(&text, FLAT_DELIMITER),
    }
    .map_err(|e| usage(format!("cannot parse {} as {format}: {e}", path.display())))?;
    let record = InputRecord {
        file: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        format,
        fingerprint: fingerprint(&bytes),
        documents: docs.len(),
    };
    Ok((docs, record))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stages {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aspects: Option<Vec<Aspect>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acus: Option<Vec<Acu>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_acu_count: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub planning_responses: Vec<CacheKey>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<ToTTrace>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_vanilla: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub run_id: String,
    pub status: RunStatus,
    pub tool_version: String,
    pub splitter_id: String,
    pub prompt_catalog: String,
    pub input: InputRecord,
    pub config: RunConfig,
    #[serde(default)]
    pub stages: Stages,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricReport>,
    #[serde(default)]
    pub ledger: Vec<LedgerEntry>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<RunManifest, RunError> {
        let text =
            fs::read_to_string(path).map_err(|e| usage(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| usage(format!("invalid manifest {}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Providers and recorded responses for a replay gateway.
    pub fn recordings(&self) -> (Vec<DeclaredProvider>, Vec<RecordedChat>, Vec<RecordedEmbedding>) {
        let declared = self
            .config
            .gateway
            .providers
            .iter()
            .map(|p| DeclaredProvider {
                id: p.id.clone(),
                model_id: p.model_id.clone(),
                embedding: p.kind == ProviderKind::Embedding,
            })
            .collect();
        let mut chats = Vec::new();
        let mut embeds = Vec::new();
        for e in &self.ledger {
            match e.kind {
                CallKind::Chat => {
                    if let (Some(key), Some(text)) = (&e.key, &e.response) {
                        chats.push(RecordedChat {
                            provider_id: e.provider_id.clone(),
                            model_id: e.model_id.clone(),
                            key: key.clone(),
                            text: text.clone(),
                            latency_ms: e.latency_ms,
                            truncated: e.truncated,
                        });
                    }
                }
                CallKind::Embedding => embeds.extend(e.items.iter().map(|item| RecordedEmbedding {
                    provider_id: e.provider_id.clone(),
                    model_id: e.model_id.clone(),
                    key: item.key.clone(),
                    values: item.values.clone(),
                    latency_ms: e.latency_ms,
                })),
            }
        }
        (declared, chats, embeds)
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), std::io::Error> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

fn io_fail(path: &Path, e: std::io::Error) -> RunError {
    RunError::Failed(format!("cannot write {}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Rouge1,
    Aspects,
    Opinion,
    Position,
    Length,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] = [
        MetricKind::Rouge1,
        MetricKind::Aspects,
        MetricKind::Opinion,
        MetricKind::Position,
        MetricKind::Length,
    ];
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "rouge1" => Ok(MetricKind::Rouge1),
            "aspects" => Ok(MetricKind::Aspects),
            "opinion" => Ok(MetricKind::Opinion),
            "position" => Ok(MetricKind::Position),
            "length" => Ok(MetricKind::Length),
            other => Err(format!(
                "unknown metric {other:?} (expected rouge1, aspects, opinion, position or length)"
            )),
        }
    }
}

/// Parse a comma-separated metric list.
pub fn parse_metric_list(s: &str) -> Result<Vec<MetricKind>, String> {
    let mut out = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let m: MetricKind = part.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err("empty metric list".into());
    }
    Ok(out)
}

/// ROUGE-1 is computed against `reference` and/or the source itself.
pub struct RougeTargets<'a> {
    pub reference: Option<&'a str>,
    pub docasref: bool,
}

/// Compute `which` metrics; failures land in `errors`, keyed by metric name.
pub fn compute_metrics(
    session: &Session,
    docs: &DocumentSet,
    summary: &str,
    params: MetricParams,
    which: &[MetricKind],
    rouge: RougeTargets<'_>,
) -> MetricReport {
    let mut report = MetricReport {
        parameters: params,
        ..MetricReport::default()
    };
    let source_sentences = split_sentences(docs);
    let summary_sentences = split_text(summary);
    for m in which {
        match m {
            MetricKind::Rouge1 => {
                if let Some(reference) = rouge.reference {
                    match rouge1_recall(summary, reference) {
                        Ok(v) => report.rouge1 = Some(v),
                        Err(e) => {
                            report.errors.insert("rouge1".into(), e.to_string());
                        }
                    }
                }
                if rouge.docasref {
                    match rouge1_recall_docasref(summary, docs) {
                        Ok(v) => report.rouge1_docasref = Some(v),
                        Err(e) => {
                            report.errors.insert("rouge1_docasref".into(), e.to_string());
                        }
                    }
                }
            }
            MetricKind::Aspects => {
                if session.roles().generator.is_empty() {
                    report
                        .errors
                        .insert("aspect_overlap".into(), "no chat provider configured".into());
                    continue;
                }
                match aspect_overlap(session, docs, summary, params.aspect_match) {
                    Ok(r) => report.aspect_overlap = Some(r),
                    Err(e) => {
                        report.errors.insert("aspect_overlap".into(), e.to_string());
                    }
                }
            }
            MetricKind::Opinion => {
                match opinion_coverage(session, &source_sentences, &summary_sentences, params.k, params.t, params.seed) {
                    Ok(r) => {
                        for w in &r.warnings {
                            session.warn(format!("opinion coverage: {w}"));
                        }
                        report.opinion_coverage = Some(r);
                    }
                    Err(e) => {
                        report.errors.insert("opinion_coverage".into(), e.to_string());
                    }
                }
            }
            MetricKind::Position => {
                match position_representation(session, &source_sentences, &summary_sentences, params.quantile_cutoff) {
                    Ok(r) => report.position = Some(r),
                    Err(e) => {
                        report.errors.insert("position".into(), e.to_string());
                    }
                }
            }
            MetricKind::Length => {
                let (word_count, sentence_count) = length_stats(summary);
                report.length = Some(LengthReport {
                    word_count,
                    sentence_count,
                });
            }
        }
    }
    report
}

#[derive(Debug, Clone, Default)]
pub struct SummarizeOptions {
    pub input: PathBuf,
    pub format: Option<InputFormat>,
    pub out: PathBuf,
    pub config: Option<PathBuf>,
    pub provider: Option<String>,
    pub steps: Option<usize>,
    pub reorder_proposals: Option<usize>,
    pub paragraph_proposals: Option<usize>,
    pub baseline_vanilla: bool,
    pub replay: Option<PathBuf>,
    pub run_id: Option<String>,
    pub no_cache: bool,
}

#[derive(Debug)]
pub struct SummarizeOutcome {
    pub run_dir: PathBuf,
    pub manifest: RunManifest,
    pub stats: GatewayStats,
}

fn default_run_id(input: &InputRecord, config: &RunConfig) -> String {
    let mut h = Sha256::new();
    h.update(input.fingerprint.as_bytes());
    h.update(serde_json::to_vec(config).expect("config serializes"));
    let digest = hex::encode(h.finalize());
    format!("{}-{}", chrono::Utc::now().format("%Y%m%dT%H%M%SZ"), &digest[..8])
}

/// Create `out/<run_id>`; an auto-generated id gets a numeric suffix on collision.
fn create_run_dir(out: &Path, run_id: &str, explicit: bool) -> Result<(String, PathBuf), RunError> {
    fs::create_dir_all(out).map_err(|e| usage(format!("cannot create {}: {e}", out.display())))?;
    let mut id = run_id.to_string();
    for n in 2.. {
        let dir = out.join(&id);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok((id, dir)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists && !explicit => {
                id = format!("{run_id}-{n}");
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(usage(format!("run directory {} already exists", dir.display())))
            }
            Err(e) => return Err(usage(format!("cannot create {}: {e}", dir.display()))),
        }
    }
    unreachable!()
}

struct RunStore<'a> {
    dir: PathBuf,
    manifest: RunManifest,
    session: &'a Session,
}

impl RunStore<'_> {
    fn flush(&mut self) -> Result<(), RunError> {
        self.manifest.ledger = self.session.ledger();
        self.manifest.warnings = self.session.warnings();
        let path = self.dir.join("manifest.json");
        write_atomic(&path, &self.manifest.to_json()).map_err(|e| io_fail(&path, e))
    }

    fn write(&self, name: &str, contents: &str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_fail(parent, e))?;
        }
        write_atomic(&path, contents).map_err(|e| io_fail(&path, e))
    }

    fn fail(&mut self, stage: &str, message: String) -> RunError {
        self.manifest.status = RunStatus::Failed;
        self.manifest.error = Some(format!("{stage}: {message}"));
        let flushed = self.flush();
        let mut msg = format!("{stage} failed: {message} (partial manifest in {})", self.dir.display());
        if let Err(e) = flushed {
            msg.push_str(&format!("; {e}"));
        }
        RunError::Failed(msg)
    }
}

fn with_newline(text: &str) -> String {
    let mut s = text.to_string();
    if !s.ends_with('\n') {
        s.push('\n');
    }
    s
}

/// Run the full pipeline into a new run directory under `opts.out`.
pub fn summarize(opts: &SummarizeOptions) -> Result<SummarizeOutcome, RunError> {
    let (docs, input) = load_input(&opts.input, opts.format)?;

    let (config, roles, gateway, replayed_id) = match &opts.replay {
        Some(path) => {
            if opts.provider.is_some()
                || opts.steps.is_some()
                || opts.reorder_proposals.is_some()
                || opts.paragraph_proposals.is_some()
                || opts.baseline_vanilla
            {
                return Err(usage("--replay takes every setting from the manifest; drop the other run options"));
            }
            let recorded = RunManifest::load(path)?;
            if recorded.input.fingerprint != input.fingerprint {
                return Err(usage(format!(
                    "input {} does not match the replayed manifest (fingerprint {} vs {})",
                    opts.input.display(),
                    input.fingerprint,
                    recorded.input.fingerprint
                )));
            }
            let mut config = recorded.config.clone();
            let roles = config.resolve(None, true)?;
            let (declared, chats, embeds) = recorded.recordings();
            let gateway = replay_gateway(&declared, &chats, &embeds);
            (config, roles, gateway, Some(recorded.run_id))
        }
        None => {
            let path = config_path(opts.config.as_deref())
                .ok_or_else(|| usage(format!("no configuration: pass --config or set {CONFIG_ENV}")))?;
            let (mut config, base) = RunConfig::load(&path)?;
            if let Some(n) = opts.steps {
                config.tot.steps = n;
            }
            if let Some(n) = opts.reorder_proposals {
                config.tot.reorder_proposals = n;
            }
            if let Some(n) = opts.paragraph_proposals {
                config.tot.paragraph_proposals = n;
            }
            config.baseline_vanilla |= opts.baseline_vanilla;
            config.tot.validate().map_err(|e| usage(e.to_string()))?;
            let roles = config.resolve(opts.provider.as_deref(), true)?;
            let gateway = config.gateway.build(&base, !opts.no_cache).map_err(|e| usage(e.to_string()))?;
            (config, roles, gateway, None)
        }
    };

    let (run_id, explicit) = match (&opts.run_id, replayed_id) {
        (Some(id), _) => (id.clone(), true),
        (None, Some(id)) => (id, true),
        (None, None) => (default_run_id(&input, &config), false),
    };
    if run_id.is_empty() || run_id.contains(['/', '\\']) || run_id == "." || run_id == ".." {
        return Err(usage(format!("invalid run id {run_id:?}")));
    }
    let (run_id, dir) = create_run_dir(&opts.out, &run_id, explicit)?;

    let gateway = Arc::new(gateway);
    let session = Session::new(Arc::clone(&gateway), roles).with_temperature(config.temperature);
    let mut store = RunStore {
        dir: dir.clone(),
        manifest: RunManifest {
            format_version: FORMAT_VERSION,
            run_id,
            status: RunStatus::Running,
            tool_version: TOOL_VERSION.to_string(),
            splitter_id: SPLITTER_ID.to_string(),
            prompt_catalog: CATALOG_VERSION.to_string(),
            input,
            config: config.clone(),
            stages: Stages::default(),
            metrics: None,
            ledger: Vec::new(),
            warnings: Vec::new(),
            error: None,
        },
        session: &session,
    };
    store.flush()?;

    let planned = match plan(&session, &docs, config.planning) {
        Ok(p) => p,
        Err(e) => return Err(store.fail("planning", e.to_string())),
    };
    store.manifest.stages.aspects = Some(planned.aspects.clone());
    store.manifest.stages.acus = Some(planned.acus.clone());
    store.manifest.stages.raw_acu_count = Some(planned.raw_acu_count);
    store.manifest.stages.planning_responses = planned.raw_responses.clone();
    store.flush()?;

    let summary = match tot_search(&session, &docs, &planned.acus, &config.tot) {
        Ok((summary, trace)) => {
            let json = serde_json::to_string_pretty(&trace).expect("trace serializes") + "\n";
            store.manifest.stages.trace = Some(trace);
            store.write("trace.json", &json)?;
            summary
        }
        Err(CompositionError::StepFailed { step, trace }) => {
            let json = serde_json::to_string_pretty(&trace).expect("trace serializes") + "\n";
            store.manifest.stages.trace = Some(*trace);
            store.write("trace.json", &json)?;
            return Err(store.fail("composition", format!("no candidate survived scoring in step {step}")));
        }
        Err(e) => return Err(store.fail("composition", e.to_string())),
    };
    store.write("summary.txt", &with_newline(&summary))?;
    store.manifest.stages.summary = Some(summary.clone());
    store.flush()?;

    if config.baseline_vanilla {
        match vanilla_summarize(&session, &docs) {
            Ok(text) => {
                store.write("baseline_vanilla.txt", &with_newline(&text))?;
                store.manifest.stages.baseline_vanilla = Some(text);
                store.flush()?;
            }
            Err(e) => return Err(store.fail("baseline", e.to_string())),
        }
    }

    let report = compute_metrics(
        &session,
        &docs,
        &summary,
        config.metrics,
        &[MetricKind::Rouge1, MetricKind::Opinion, MetricKind::Position, MetricKind::Length],
        RougeTargets {
            reference: None,
            docasref: true,
        },
    );
    store.write("reports/report.json", &report.to_json())?;
    store.manifest.metrics = Some(report);
    store.manifest.status = RunStatus::Completed;
    store.flush()?;

    let manifest = store.manifest;
    Ok(SummarizeOutcome {
        run_dir: dir,
        manifest,
        stats: gateway.stats(),
    })
}

#[derive(Debug, Clone, Default)]
pub struct EvaluateOptions {
    pub summary: PathBuf,
    pub source: PathBuf,
    pub source_format: Option<InputFormat>,
    pub reference: Option<PathBuf>,
    pub docasref: bool,
    /// `None` selects every metric whose inputs are available.
    pub metrics: Option<Vec<MetricKind>>,
    pub params: MetricParams,
    pub out: PathBuf,
    pub config: Option<PathBuf>,
    pub provider: Option<String>,
}

#[derive(Debug)]
pub struct EvaluateOutcome {
    pub report: MetricReport,
    pub files: Vec<PathBuf>,
    pub stats: GatewayStats,
}

fn read_text(path: &Path, what: &str) -> Result<String, RunError> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {what} {}: {e}", path.display())))
}

/// Score a stored summary against its source and write report files to `opts.out`.
/// Returns `Failed` (after writing) when no metric succeeded.
pub fn evaluate(opts: &EvaluateOptions) -> Result<EvaluateOutcome, RunError> {
    let rouge_ready = opts.reference.is_some() || opts.docasref;
    if let Some(list) = &opts.metrics {
        if list.contains(&MetricKind::Rouge1) && !rouge_ready {
            return Err(usage("rouge1 needs --reference or --docasref"));
        }
    }
    let summary = read_text(&opts.summary, "summary")?;
    let reference = opts.reference.as_deref().map(|p| read_text(p, "reference")).transpose()?;
    let (docs, _) = load_input(&opts.source, opts.source_format)?;

    let (mut config, base) = match config_path(opts.config.as_deref()) {
        Some(path) => RunConfig::load(&path)?,
        None => (RunConfig::default(), PathBuf::new()),
    };
    let roles = config.resolve(opts.provider.as_deref(), false)?;
    let gateway = Arc::new(config.gateway.build(&base, true).map_err(|e| usage(e.to_string()))?);
    let session = Session::new(Arc::clone(&gateway), roles).with_temperature(config.temperature);

    let which: Vec<MetricKind> = match &opts.metrics {
        Some(list) => list.clone(),
        None => MetricKind::ALL
            .into_iter()
            .filter(|m| match m {
                MetricKind::Rouge1 => rouge_ready,
                MetricKind::Aspects => !session.roles().generator.is_empty(),
                _ => true,
            })
            .collect(),
    };
    let report = compute_metrics(
        &session,
        &docs,
        &summary,
        opts.params,
        &which,
        RougeTargets {
            reference: reference.as_deref(),
            docasref: opts.docasref,
        },
    );

    fs::create_dir_all(&opts.out).map_err(|e| usage(format!("cannot create {}: {e}", opts.out.display())))?;
    let mut files = Vec::new();
    let mut emit = |name: &str, contents: String| -> Result<(), RunError> {
        let path = opts.out.join(name);
        write_atomic(&path, &contents).map_err(|e| io_fail(&path, e))?;
        files.push(path);
        Ok(())
    };
    emit("report.json", report.to_json())?;
    let row = opts
        .summary
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "summary".into());
    emit("report.csv", to_csv([(row.as_str(), &report)]))?;
    if let Some(p) = &report.position {
        emit("position.svg", position_svg(p))?;
    }
    if let Some(a) = &report.aspect_overlap {
        emit("aspects.svg", aspects_svg(a))?;
    }

    if report.succeeded() == 0 {
        let detail: Vec<String> = report.errors.iter().map(|(k, v)| format!("{k}: {v}")).collect();
        return Err(RunError::Failed(format!("every metric failed ({})", detail.join("; "))));
    }
    Ok(EvaluateOutcome {
        report,
        files,
        stats: gateway.stats(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub csv: String,
    pub rows: usize,
    pub warnings: Vec<String>,
}

fn read_report(dir: &Path) -> Result<MetricReport, String> {
    let candidates = [dir.join("reports").join("report.json"), dir.join("report.json")];
    let path = candidates
        .iter()
        .find(|p| p.is_file())
        .ok_or_else(|| format!("{}: no report.json found", dir.display()))?;
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// One CSV row per readable run directory; unreadable ones become warnings.
pub fn compare(dirs: &[PathBuf]) -> Result<Comparison, RunError> {
    if dirs.len() < 2 {
        return Err(usage("compare needs at least two run directories"));
    }
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for dir in dirs {
        match read_report(dir) {
            Ok(r) => {
                let name = dir
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| dir.display().to_string());
                rows.push((name, r));
            }
            Err(e) => warnings.push(format!("skipping {e}")),
        }
    }
    if rows.is_empty() {
        return Err(RunError::Failed(format!("no readable runs ({})", warnings.join("; "))));
    }
    let csv = to_csv(rows.iter().map(|(n, r)| (n.as_str(), r)));
    Ok(Comparison {
        csv,
        rows: rows.len(),
        warnings,
    })
}

/// Build a gateway straight from a manifest's ledger.
pub fn replay_from(manifest: &RunManifest) -> Gateway {
    let (declared, chats, embeds) = manifest.recordings();
    replay_gateway(&declared, &chats, &embeds)
}
