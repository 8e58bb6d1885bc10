//! Episodic memory: entry types, the store, goal-signature retrieval,
//! state-consistent filtering, and learning-phase accumulation.
//!
//! Four entry kinds are maintained: success snippets (sub-goal action
//! sequences with precondition snapshots), failure lessons (failed actions
//! paired with corrective rules), verified schemas (action templates with
//! empirically confirmed precondition/effect pairs and a confidence score),
//! and critical failures (environment-terminal missteps, retrieved with
//! weight 2.0). Stores persist as one JSON object per line.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{parse_action, ParsedAction};
use crate::belief::{
    check_preconditions, conditions, record_signature, GoalSignature, ScienceBeliefState,
    StateSignature,
};
use crate::episode::{EpisodeRecord, Outcome};
use crate::profile::{object_class, EnvironmentProfile};

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("store is frozen; mutation rejected")]
    Frozen,
    #[error("duplicate entry id {0}")]
    DuplicateId(String),
    #[error("invalid entry {id}: {reason}")]
    InvalidEntry { id: String, reason: String },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnippetPrecondition {
    pub holding: Option<String>,
    pub action_type: String,
    pub tool_location: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessSnippet {
    pub id: String,
    pub goal_signature: String,
    pub state_signature: String,
    pub sub_goal_type: String,
    pub precondition: SnippetPrecondition,
    pub actions: Vec<String>,
    pub outcome: BTreeMap<String, String>,
    pub success_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureLesson {
    pub id: String,
    pub goal_signature: String,
    pub state_signature: String,
    pub failed_action: String,
    pub failure_type: String,
    pub failure_message: String,
    pub corrective_rule: String,
    pub occurrence_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifiedSchema {
    pub id: String,
    pub action_template: String,
    pub action_type: String,
    pub preconditions: Vec<String>,
    pub effects: Vec<String>,
    pub success_count: u32,
    pub failure_count: u32,
    pub confidence: f64,
}

fn default_critical_weight() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalFailure {
    pub id: String,
    pub goal_signature: String,
    pub state_signature: String,
    pub failed_action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_type: Option<String>,
    pub failure_message: String,
    pub corrective_rule: String,
    pub occurrence_count: u32,
    #[serde(default = "default_critical_weight")]
    pub retrieval_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MemoryEntry {
    Success(SuccessSnippet),
    Failure(FailureLesson),
    Schema(VerifiedSchema),
    CriticalFailure(CriticalFailure),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EntryKind {
    Success,
    Failure,
    Schema,
    CriticalFailure,
}

impl MemoryEntry {
    pub fn id(&self) -> &str {
        match self {
            Self::Success(e) => &e.id,
            Self::Failure(e) => &e.id,
            Self::Schema(e) => &e.id,
            Self::CriticalFailure(e) => &e.id,
        }
    }

    pub fn kind(&self) -> EntryKind {
        match self {
            Self::Success(_) => EntryKind::Success,
            Self::Failure(_) => EntryKind::Failure,
            Self::Schema(_) => EntryKind::Schema,
            Self::CriticalFailure(_) => EntryKind::CriticalFailure,
        }
    }

    /// Recorded goal signature; schemas carry none.
    pub fn goal_signature(&self) -> Option<&str> {
        match self {
            Self::Success(e) => Some(&e.goal_signature),
            Self::Failure(e) => Some(&e.goal_signature),
            Self::Schema(_) => None,
            Self::CriticalFailure(e) => Some(&e.goal_signature),
        }
    }

    /// Recorded state signature; schemas carry none.
    pub fn state_signature(&self) -> Option<&str> {
        match self {
            Self::Success(e) => Some(&e.state_signature),
            Self::Failure(e) => Some(&e.state_signature),
            Self::Schema(_) => None,
            Self::CriticalFailure(e) => Some(&e.state_signature),
        }
    }

    pub fn retrieval_weight(&self) -> f64 {
        match self {
            Self::CriticalFailure(e) => e.retrieval_weight,
            _ => 1.0,
        }
    }

    /// Deduplication key; merging collapses entries that share it.
    fn dedup_key(&self) -> String {
        match self {
            Self::Success(e) => format!(
                "s|{}|{}|{}",
                e.goal_signature,
                e.sub_goal_type,
                e.actions.join("\u{1}")
            ),
            Self::Failure(e) => format!(
                "f|{}|{}|{}",
                e.goal_signature,
                action_template(&e.failed_action),
                e.failure_type
            ),
            Self::Schema(e) => format!("v|{}", e.action_template),
            Self::CriticalFailure(e) => format!(
                "c|{}|{}|{}",
                e.goal_signature,
                action_template(&e.failed_action),
                e.failure_type.as_deref().unwrap_or("")
            ),
        }
    }

    fn validate(&self) -> Result<(), MemoryError> {
        let invalid = |reason: String| MemoryError::InvalidEntry {
            id: self.id().to_string(),
            reason,
        };
        match self {
            Self::Success(e) => {
                if e.success_count < 1 {
                    return Err(invalid("success_count must be >= 1".into()));
                }
            }
            Self::Failure(e) => {
                if e.occurrence_count < 1 {
                    return Err(invalid("occurrence_count must be >= 1".into()));
                }
            }
            Self::Schema(e) => {
                let total = e.success_count + e.failure_count;
                if total == 0 {
                    return Err(invalid("schema must have at least one observation".into()));
                }
                let expected = e.success_count as f64 / total as f64;
                if (e.confidence - expected).abs() > 1e-6 {
                    return Err(invalid(format!(
                        "confidence {} does not match counts ({expected})",
                        e.confidence
                    )));
                }
            }
            Self::CriticalFailure(e) => {
                if e.occurrence_count < 1 {
                    return Err(invalid("occurrence_count must be >= 1".into()));
                }
                if e.retrieval_weight < 1.0 {
                    return Err(invalid("retrieval_weight must be >= 1.0".into()));
                }
            }
        }
        Ok(())
    }
}

/// Strip instance numbers from an action so repeated failures across
/// instances share one lesson: `take potato 1 from countertop 3` ->
/// `take potato from countertop`.
pub fn action_template(action: &str) -> String {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r" \d+\b").unwrap());
    re.replace_all(action, "").into_owned()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KindCounts {
    pub success: usize,
    pub failure: usize,
    pub schema: usize,
    pub critical_failure: usize,
}

impl KindCounts {
    pub fn total(&self) -> usize {
        self.success + self.failure + self.schema + self.critical_failure
    }
}

/// Id-indexed entry collection. Frozen stores reject every mutation.
#[derive(Debug, Clone, Default)]
pub struct MemoryStore {
    entries: BTreeMap<String, MemoryEntry>,
    dedup: BTreeMap<String, String>,
    frozen: bool,
    next_seq: u64,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn get(&self, id: &str) -> Option<&MemoryEntry> {
        self.entries.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &MemoryEntry> {
        self.entries.values()
    }

    /// Irreversible within a process: there is no thaw.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn snapshot_counts(&self) -> KindCounts {
        let mut counts = KindCounts::default();
        for entry in self.entries.values() {
            match entry.kind() {
                EntryKind::Success => counts.success += 1,
                EntryKind::Failure => counts.failure += 1,
                EntryKind::Schema => counts.schema += 1,
                EntryKind::CriticalFailure => counts.critical_failure += 1,
            }
        }
        counts
    }

    fn alloc_id(&mut self, prefix: &str) -> String {
        let id = format!("{prefix}_{:06}", self.next_seq);
        self.next_seq += 1;
        id
    }

    fn bump_seq_for(&mut self, id: &str) {
        if let Some(num) = id.rsplit('_').next().and_then(|s| s.parse::<u64>().ok()) {
            if num >= self.next_seq {
                self.next_seq = num + 1;
            }
        }
    }

    pub fn insert(&mut self, entry: MemoryEntry) -> Result<(), MemoryError> {
        if self.frozen {
            return Err(MemoryError::Frozen);
        }
        entry.validate()?;
        let id = entry.id().to_string();
        if self.entries.contains_key(&id) {
            return Err(MemoryError::DuplicateId(id));
        }
        self.bump_seq_for(&id);
        self.dedup.insert(entry.dedup_key(), id.clone());
        self.entries.insert(id, entry);
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for entry in self.entries.values() {
            out.push_str(&serde_json::to_string(entry).expect("entries serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, MemoryError> {
        let mut store = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: MemoryEntry =
                serde_json::from_str(line).map_err(|source| MemoryError::Parse {
                    line: i + 1,
                    source,
                })?;
            store.insert(entry)?;
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<(), MemoryError> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MemoryError> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }
}

/// Weights and threshold for goal-signature retrieval. The paper-shaped
/// defaults weight object identity highest; everything is overridable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub w_obj: f64,
    pub w_dest: f64,
    pub w_mod: f64,
    pub threshold: f64,
    /// Result cap after sorting; all-above-threshold retrieval bounded for
    /// prompt budget reasons.
    pub cap: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { w_obj: 0.6, w_dest: 0.3, w_mod: 0.1, threshold: 0.5, cap: 8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub entry: MemoryEntry,
    pub match_score: f64,
    pub weighted_score: f64,
    /// Set when the recorded state signature could not be parsed and the
    /// entry passed filtering by default.
    pub scf_warning: bool,
}

fn token_set(s: &str) -> BTreeSet<String> {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}

fn token_ratio(a: &str, b: &str) -> f64 {
    let ta = token_set(a);
    let tb = token_set(b);
    if ta.is_empty() || tb.is_empty() {
        return 0.0;
    }
    let shared = ta.intersection(&tb).count() as f64;
    shared / ta.len().max(tb.len()) as f64
}

/// Field similarity: exact match scores 1, absent-on-both-sides counts as
/// agreement, profile-declared category kinship gives partial credit, and
/// shared tokens cover compound names.
fn field_similarity(a: Option<&str>, b: Option<&str>, profile: &EnvironmentProfile) -> f64 {
    match (a, b) {
        (None, None) => 1.0,
        (Some(x), Some(y)) => {
            let x = x.trim().to_lowercase();
            let y = y.trim().to_lowercase();
            if x == y {
                1.0
            } else if profile.same_category(&x, &y) {
                token_ratio(&x, &y).max(0.5)
            } else {
                token_ratio(&x, &y)
            }
        }
        _ => 0.0,
    }
}

/// Partial match between the current goal and an entry. Task-type mismatch
/// is a hard gate; schemas (which carry no goal signature) match when their
/// action produces the goal's transformation modifier.
pub fn goal_match_score(
    goal: &GoalSignature,
    entry: &MemoryEntry,
    config: &RetrievalConfig,
    profile: &EnvironmentProfile,
) -> Option<f64> {
    if let MemoryEntry::Schema(schema) = entry {
        let implied = profile.modifier_for_verb(&schema.action_type);
        return match (implied, goal.modifier.as_deref()) {
            (Some(m), Some(g)) if m == g => Some(1.0),
            _ => None,
        };
    }
    let recorded = GoalSignature::parse_recorded(entry.goal_signature()?);
    if recorded.task_type != goal.task_type {
        return None;
    }
    let score = config.w_obj
        * field_similarity(goal.object.as_deref(), recorded.object.as_deref(), profile)
        + config.w_dest
            * field_similarity(goal.destination.as_deref(), recorded.destination.as_deref(), profile)
        + config.w_mod
            * field_similarity(goal.modifier.as_deref(), recorded.modifier.as_deref(), profile);
    Some(score)
}

/// Retrieve all entries scoring at least the threshold, sorted by weighted
/// score descending with ties broken by id ascending, capped.
pub fn retrieve(
    store: &MemoryStore,
    goal: &GoalSignature,
    config: &RetrievalConfig,
    profile: &EnvironmentProfile,
) -> Vec<RetrievalResult> {
    let mut results: Vec<RetrievalResult> = store
        .iter()
        .filter_map(|entry| {
            let score = goal_match_score(goal, entry, config, profile)?;
            if score < config.threshold {
                return None;
            }
            Some(RetrievalResult {
                weighted_score: score * entry.retrieval_weight(),
                match_score: score,
                entry: entry.clone(),
                scf_warning: false,
            })
        })
        .collect();
    results.sort_by(|a, b| {
        b.weighted_score
            .partial_cmp(&a.weighted_score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.entry.id().cmp(b.entry.id()))
    });
    results.truncate(config.cap);
    results
}

/// Parse the hand component of a recorded state signature.
/// `Some(true)` means the entry was recorded while holding something.
pub fn recorded_hand_occupied(raw: &str) -> Option<bool> {
    for part in raw.split('|') {
        if let Some(value) = part.trim().strip_prefix("holding=") {
            let v = value.trim();
            return Some(!matches!(v, "" | "none" | "nothing" | "null"));
        }
    }
    None
}

/// State-consistent filtering on hand occupancy: an entry recorded with an
/// empty hand passes only when the current hand is empty, and vice versa.
/// Object identity and the location component are deliberately not checked.
/// Entries whose recorded signature cannot be parsed pass with a warning.
pub fn scf_filter(candidates: &[RetrievalResult], current: &StateSignature) -> Vec<RetrievalResult> {
    let current_occupied = !current.hand_occupancy.is_empty();
    candidates
        .iter()
        .filter_map(|c| {
            let raw = c.entry.state_signature();
            match raw.and_then(recorded_hand_occupied) {
                Some(recorded_occupied) => {
                    if recorded_occupied == current_occupied {
                        Some(c.clone())
                    } else {
                        None
                    }
                }
                None => {
                    let mut kept = c.clone();
                    kept.scf_warning = true;
                    Some(kept)
                }
            }
        })
        .collect()
}

/// Compatibility annotations recovered from a science-style recorded
/// signature (`room=kitchen|inventory=empty|progress=0`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScienceCompat {
    pub room: Option<String>,
    pub requires_instrument: bool,
    pub min_progress: Option<u32>,
}

pub fn parse_science_compat(raw: &str, profile: &EnvironmentProfile) -> Option<ScienceCompat> {
    let mut room = None;
    let mut requires_instrument = false;
    let mut min_progress = None;
    let mut any = false;
    for part in raw.split('|') {
        let part = part.trim();
        if let Some(v) = part.strip_prefix("room=") {
            room = Some(v.to_string());
            any = true;
        } else if let Some(v) = part.strip_prefix("inventory=") {
            if v != "empty" {
                requires_instrument = v
                    .split(',')
                    .any(|item| profile.is_instrument_class(object_class(item.trim())));
            }
            any = true;
        } else if let Some(v) = part.strip_prefix("progress=") {
            min_progress = v.trim().parse().ok();
            any = true;
        }
    }
    any.then_some(ScienceCompat { room, requires_instrument, min_progress })
}

/// Science-profile compatibility filter: instrument availability (hard),
/// room match (hard, vacuous while the current room is unknown), and
/// bounded progress lag (the entry's recorded pointer may exceed the
/// current one by at most one step).
pub fn scf_filter_science(
    candidates: &[RetrievalResult],
    current: &ScienceBeliefState,
    profile: &EnvironmentProfile,
) -> Vec<RetrievalResult> {
    candidates
        .iter()
        .filter_map(|c| {
            let compat = c
                .entry
                .state_signature()
                .and_then(|raw| parse_science_compat(raw, profile));
            let Some(compat) = compat else {
                let mut kept = c.clone();
                kept.scf_warning = true;
                return Some(kept);
            };
            if compat.requires_instrument && !current.holds_instrument(profile) {
                return None;
            }
            if let (Some(entry_room), Some(cur_room)) = (&compat.room, &current.room) {
                if entry_room != cur_room {
                    return None;
                }
            }
            if let Some(min) = compat.min_progress {
                if min > current.progress_pointer + 1 {
                    return None;
                }
            }
            Some(c.clone())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationSummary {
    pub success_added: usize,
    pub success_merged: usize,
    pub failure_added: usize,
    pub failure_merged: usize,
    pub schema_created: usize,
    pub schema_updated: usize,
    pub critical_added: usize,
    pub critical_merged: usize,
}

impl MutationSummary {
    pub fn total_added(&self) -> usize {
        self.success_added + self.failure_added + self.schema_created + self.critical_added
    }
}

/// Map violated condition identifiers to corrective phrasing.
fn corrective_phrase(condition: &str) -> &'static str {
    match condition {
        conditions::NOT_AT_LOCATION => "be at location",
        conditions::ALREADY_AT_LOCATION => "move somewhere new",
        conditions::OBJECT_NOT_AT_LOCATION => "object must be present at location",
        conditions::CONTAINER_CLOSED => "container must be open",
        conditions::HAND_NOT_EMPTY => "hand must be empty",
        conditions::HAND_NOT_HOLDING_OBJECT => "be holding the object",
        conditions::CONTAINER_NOT_CLOSED => "container must be closed",
        conditions::CONTAINER_NOT_OPEN => "container must be open",
        conditions::WRONG_TOOL => "use the matching tool",
        conditions::NOT_USABLE => "target a usable object",
        _ => "check the action form",
    }
}

fn gerund(verb: &str) -> &'static str {
    match verb {
        "take" => "taking",
        "put" => "putting",
        "heat" => "heating",
        "cool" => "cooling",
        "clean" => "cleaning",
        "open" => "opening",
        "close" => "closing",
        "goto" => "moving",
        "use" => "using",
        _ => "acting",
    }
}

fn corrective_text(verb: &str, violated: &[String]) -> String {
    if violated.is_empty() {
        return "verify action preconditions before retrying".to_string();
    }
    let phrases: Vec<&str> = violated.iter().map(|c| corrective_phrase(c)).collect();
    format!("must {} before {}", phrases.join(" and "), gerund(verb))
}

fn sub_goal_for(action: &ParsedAction) -> Option<&'static str> {
    match action {
        ParsedAction::Take { .. } => Some("find"),
        ParsedAction::Heat { .. } | ParsedAction::Cool { .. } | ParsedAction::Clean { .. } => {
            Some("transformed")
        }
        ParsedAction::Put { .. } => Some("placed"),
        _ => None,
    }
}

fn schema_fields(verb: &str) -> (Vec<String>, Vec<String>) {
    let participle = match verb {
        "heat" => "heated",
        "cool" => "cooled",
        "clean" => "cleaned",
        other => other,
    };
    (
        vec![
            "holding target object".to_string(),
            format!("at {verb} tool location"),
        ],
        vec![format!("object {participle}"), "still holding object".to_string()],
    )
}

/// Fold one finished episode into the store.
///
/// Successful episodes contribute one success snippet per completed
/// sub-goal (segment boundaries at take, transformation, and placement
/// successes), every failed step contributes a deduplicated failure lesson,
/// transformation attempts update verified schemas, and environment-terminal
/// missteps are stored as critical failures with retrieval weight 2.0.
pub fn record_episode(
    store: &mut MemoryStore,
    episode: &EpisodeRecord,
    goal: &GoalSignature,
    profile: &EnvironmentProfile,
) -> Result<MutationSummary, MemoryError> {
    if store.is_frozen() {
        return Err(MemoryError::Frozen);
    }
    let mut summary = MutationSummary::default();
    let goal_sig = goal.serialize();
    let failure_obs = profile.failure_observation();

    // Success snippets from sub-goal segments.
    if episode.outcome == Outcome::Success {
        let mut segment_start = 0usize;
        for (i, step) in episode.steps.iter().enumerate() {
            if step.observation == failure_obs {
                continue;
            }
            let Some(parsed) = parse_action(profile, &step.action) else {
                continue;
            };
            let Some(sub_goal) = sub_goal_for(&parsed) else {
                continue;
            };
            let start_belief = &episode.steps[segment_start].belief;
            let actions: Vec<String> = episode.steps[segment_start..=i]
                .iter()
                .map(|s| s.action.clone())
                .collect();
            let mut outcome = BTreeMap::new();
            if let Some(obj) = parsed.object() {
                outcome.insert(parsed.verb().to_string(), obj.to_string());
            }
            let snippet = SuccessSnippet {
                id: String::new(),
                goal_signature: goal_sig.clone(),
                state_signature: record_signature(start_belief, false),
                sub_goal_type: sub_goal.to_string(),
                precondition: SnippetPrecondition {
                    holding: start_belief.hand.clone(),
                    action_type: parsed.verb().to_string(),
                    tool_location: parsed.receptacle().map(|r| r.to_string()),
                },
                actions,
                outcome,
                success_count: 1,
            };
            let entry = MemoryEntry::Success(snippet);
            let key = entry.dedup_key();
            match store.dedup.get(&key).cloned() {
                Some(id) => {
                    if let Some(MemoryEntry::Success(existing)) = store.entries.get_mut(&id) {
                        existing.success_count += 1;
                        summary.success_merged += 1;
                    }
                }
                None => {
                    let id = store.alloc_id("success");
                    let mut entry = entry;
                    if let MemoryEntry::Success(s) = &mut entry {
                        s.id = id.clone();
                    }
                    store.dedup.insert(key, id.clone());
                    store.entries.insert(id, entry);
                    summary.success_added += 1;
                }
            }
            segment_start = i + 1;
        }
    }

    // Failure lessons from in-band failure feedback.
    for step in &episode.steps {
        if step.observation != failure_obs {
            continue;
        }
        let (verb, violated) = match parse_action(profile, &step.action) {
            Some(parsed) => {
                let report = check_preconditions(&parsed, &step.belief, profile);
                (parsed.verb().to_string(), report.violated_conditions)
            }
            None => (
                "acting".to_string(),
                vec![conditions::MALFORMED_ACTION.to_string()],
            ),
        };
        let lesson = FailureLesson {
            id: String::new(),
            goal_signature: goal_sig.clone(),
            state_signature: record_signature(&step.belief, true),
            failed_action: step.action.clone(),
            failure_type: "precondition_not_met".to_string(),
            failure_message: step.observation.clone(),
            corrective_rule: corrective_text(&verb, &violated),
            occurrence_count: 1,
        };
        let entry = MemoryEntry::Failure(lesson);
        let key = entry.dedup_key();
        match store.dedup.get(&key).cloned() {
            Some(id) => {
                if let Some(MemoryEntry::Failure(existing)) = store.entries.get_mut(&id) {
                    existing.occurrence_count += 1;
                    summary.failure_merged += 1;
                }
            }
            None => {
                let id = store.alloc_id("failure");
                let mut entry = entry;
                if let MemoryEntry::Failure(f) = &mut entry {
                    f.id = id.clone();
                }
                store.dedup.insert(key, id.clone());
                store.entries.insert(id, entry);
                summary.failure_added += 1;
            }
        }
    }

    // Verified schemas from transformation attempts.
    for step in &episode.steps {
        let Some(parsed) = parse_action(profile, &step.action) else {
            continue;
        };
        if !parsed.is_transformation() {
            continue;
        }
        let succeeded = step.observation != failure_obs;
        let tool = parsed.receptacle().unwrap_or_default().to_string();
        let template = format!("{} {{object}} with {}", parsed.verb(), tool);
        let key = format!("v|{template}");
        match store.dedup.get(&key).cloned() {
            Some(id) => {
                if let Some(MemoryEntry::Schema(schema)) = store.entries.get_mut(&id) {
                    if succeeded {
                        schema.success_count += 1;
                    } else {
                        schema.failure_count += 1;
                    }
                    let total = schema.success_count + schema.failure_count;
                    schema.confidence = schema.success_count as f64 / total as f64;
                    summary.schema_updated += 1;
                }
            }
            None => {
                let (preconditions, effects) = schema_fields(parsed.verb());
                let id = store.alloc_id("schema");
                let schema = VerifiedSchema {
                    id: id.clone(),
                    action_template: template,
                    action_type: parsed.verb().to_string(),
                    preconditions,
                    effects,
                    success_count: u32::from(succeeded),
                    failure_count: u32::from(!succeeded),
                    confidence: if succeeded { 1.0 } else { 0.0 },
                };
                store.dedup.insert(key, id.clone());
                store.entries.insert(id, MemoryEntry::Schema(schema));
                summary.schema_created += 1;
            }
        }
    }

    // Critical failures from environment-terminal missteps.
    if episode.outcome == Outcome::EnvDoneWrong {
        if let Some(step) = episode.steps.last() {
            let critical = CriticalFailure {
                id: String::new(),
                goal_signature: goal_sig.clone(),
                state_signature: record_signature(&step.belief, true),
                failed_action: step.action.clone(),
                failure_type: Some("environment_terminal".to_string()),
                failure_message: "episode terminated by environment".to_string(),
                corrective_rule: "do not place task-relevant objects in the garbagecan"
                    .to_string(),
                occurrence_count: 1,
                retrieval_weight: 2.0,
            };
            let entry = MemoryEntry::CriticalFailure(critical);
            let key = entry.dedup_key();
            match store.dedup.get(&key).cloned() {
                Some(id) => {
                    if let Some(MemoryEntry::CriticalFailure(existing)) =
                        store.entries.get_mut(&id)
                    {
                        existing.occurrence_count += 1;
                        summary.critical_merged += 1;
                    }
                }
                None => {
                    let id = store.alloc_id("failure");
                    let mut entry = entry;
                    if let MemoryEntry::CriticalFailure(c) = &mut entry {
                        c.id = id.clone();
                    }
                    store.dedup.insert(key, id.clone());
                    store.entries.insert(id, entry);
                    summary.critical_added += 1;
                }
            }
        }
    }

    Ok(summary)
}

/// The shipped reference entries.
pub fn appendix_store() -> MemoryStore {
    MemoryStore::from_jsonl(crate::fixtures::APPENDIX_ENTRIES)
        .expect("embedded reference entries are valid")
}
