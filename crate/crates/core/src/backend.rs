//! Decision backends: a deterministic prompt-driven scripted oracle for
//! offline evaluation, and a remote chat-completion client.
//!
//! The oracle is the harness's test instrument. It reads everything from
//! the prompt text itself (goal line, transcript, bracketed knowledge
//! blocks) and never receives engine state, so ablation conditions change
//! its behavior exactly the way they would change a language model's: rule
//! knowledge unlocks atomic transformations, memory lines shortcut search,
//! and their absence re-enables the put-object-in-tool misconception and
//! noisy search. Output is a pure function of the prompt bytes and the
//! oracle's own seed.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::action::{parse_action, ParsedAction};
use crate::belief::parse_goal;
use crate::profile::{object_class, parse_listing, EnvironmentProfile};
use crate::prompt::{PromptParts, MEMORY_HEADER, RULES_HEADER};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure after retries: {0}")]
    Transport(String),
    #[error("malformed backend response: {0}")]
    Malformed(String),
}

pub trait DecisionBackend {
    fn name(&self) -> &str;
    fn deterministic(&self) -> bool;
    /// Produce a single action line for the given prompt.
    fn next_action(&self, prompt: &PromptParts) -> Result<String, BackendError>;
}

fn hash64(parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

pub fn sha256_hex(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------
// Scripted oracle
// ---------------------------------------------------------------------

/// Competence knobs for the scripted oracle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleProfile {
    /// Consult the prompt's rules block. When false, behavior is
    /// independent of the block's presence.
    pub uses_injected_rules: bool,
    /// Consult the prompt's past-experience block for location hints.
    pub uses_injected_memory: bool,
    /// Probability of a wasted wrong-receptacle step while searching
    /// without a memory hint.
    pub search_error_rate: f64,
    /// Probability (per episode, rules conditions only) of decisively
    /// discarding the acquired target into the garbagecan.
    pub disposal_error_rate: f64,
    /// Without rule knowledge, transform by placing the object into the
    /// tool instead of the atomic action.
    pub misconception_enabled: bool,
    pub seed: u64,
}

impl Default for OracleProfile {
    fn default() -> Self {
        Self {
            uses_injected_rules: true,
            uses_injected_memory: true,
            search_error_rate: 0.6,
            disposal_error_rate: 0.08,
            misconception_enabled: true,
            seed: 0,
        }
    }
}

impl OracleProfile {
    /// Error-free profile for reference replays.
    pub fn reference() -> Self {
        Self { search_error_rate: 0.0, disposal_error_rate: 0.0, ..Self::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

pub struct ScriptedOracle {
    profile: OracleProfile,
    env: Arc<EnvironmentProfile>,
}

/// Episode knowledge reconstructed purely from prompt text.
#[derive(Debug, Default)]
struct EpisodeView {
    goal_text: String,
    /// The transcript region of the prompt; per-step randomness derives
    /// from it so paired conditions share draws until policies diverge.
    transcript: String,
    receptacles: Vec<String>,
    location: Option<String>,
    holding: Option<String>,
    /// Receptacles whose contents have been seen.
    searched: BTreeSet<String>,
    /// Known open(true)/closed(false) state per receptacle.
    open_state: BTreeMap<String, bool>,
    /// Best-known current location per object.
    object_location: BTreeMap<String, String>,
    /// (verb, object) transformation successes observed.
    transformed: BTreeSet<(String, String)>,
    /// Objects we placed into the transformation tool (misconception path).
    put_into_tool: BTreeSet<String>,
    /// Objects taken back out of the tool, believed transformed.
    pseudo_transformed: BTreeSet<String>,
    /// Last successful placement per object.
    placed_at: BTreeMap<String, String>,
    /// Objects examined under the lamp.
    examined: BTreeSet<String>,
    rules_region: String,
    memory_region: String,
}

impl ScriptedOracle {
    pub fn new(profile: OracleProfile, env: Arc<EnvironmentProfile>) -> Self {
        Self { profile, env }
    }

    fn parse_view(&self, full: &str) -> Option<EpisodeView> {
        let transcript_start = full.rfind("You are in the middle of a room.")?;
        let (head, transcript) = full.split_at(transcript_start);
        let mut view = EpisodeView::default();
        view.transcript = transcript.to_string();

        view.goal_text = transcript
            .lines()
            .rev()
            .find_map(|l| l.trim_start().strip_prefix("Your task is to: "))
            .map(|s| s.trim().to_string())?;
        let room_line = transcript.lines().next().unwrap_or("");
        let listing = room_line.split("you see ").nth(1).unwrap_or("");
        view.receptacles = parse_listing(listing);

        if let Some(start) = head.find(RULES_HEADER) {
            let region = &head[start..];
            let end = region.find("\n\n[Past Experience").unwrap_or(region.len());
            view.rules_region = region[..end].to_string();
        }
        if let Some(start) = head.find(MEMORY_HEADER) {
            view.memory_region = head[start..].to_string();
        }

        // Fold the transcript's action/observation pairs.
        let goal = parse_goal(&view.goal_text, &self.env);
        let tool_class = goal
            .modifier
            .as_deref()
            .and_then(|m| self.env.verb_for_modifier(m))
            .and_then(|v| self.env.tool_class(v))
            .unwrap_or("")
            .to_string();
        let mut pending: Option<String> = None;
        for line in transcript.lines() {
            if let Some(a) = line.strip_prefix("Action: ") {
                pending = Some(a.trim().to_string());
                continue;
            }
            let Some(obs) = line.strip_prefix("Obs: ") else {
                continue;
            };
            let Some(action_text) = pending.take() else {
                continue;
            };
            if obs == self.env.failure_observation() {
                continue;
            }
            let Some(action) = parse_action(&self.env, &action_text) else {
                continue;
            };
            match &action {
                ParsedAction::Goto { receptacle } => {
                    view.location = Some(receptacle.clone());
                    if let Some(rest) = obs.strip_prefix(&format!("The {receptacle} is closed")) {
                        let _ = rest;
                        view.open_state.insert(receptacle.clone(), false);
                    } else if obs.starts_with(&format!("The {receptacle} is open")) {
                        view.open_state.insert(receptacle.clone(), true);
                        record_contents(&mut view, receptacle, obs);
                    } else if obs.starts_with(&format!("On the {receptacle}")) {
                        record_contents(&mut view, receptacle, obs);
                    }
                }
                ParsedAction::Open { receptacle } => {
                    view.open_state.insert(receptacle.clone(), true);
                    record_contents(&mut view, receptacle, obs);
                }
                ParsedAction::Close { receptacle } => {
                    view.open_state.insert(receptacle.clone(), false);
                }
                ParsedAction::Take { object, receptacle } => {
                    view.holding = Some(object.clone());
                    view.object_location.remove(object);
                    view.placed_at.remove(object);
                    if object_class(receptacle) == tool_class
                        && view.put_into_tool.contains(object)
                    {
                        view.pseudo_transformed.insert(object.clone());
                    }
                }
                ParsedAction::Put { object, receptacle } => {
                    view.holding = None;
                    view.object_location.insert(object.clone(), receptacle.clone());
                    view.placed_at.insert(object.clone(), receptacle.clone());
                    if object_class(receptacle) == tool_class {
                        view.put_into_tool.insert(object.clone());
                    }
                }
                ParsedAction::Heat { object, .. }
                | ParsedAction::Cool { object, .. }
                | ParsedAction::Clean { object, .. } => {
                    view.transformed
                        .insert((action.verb().to_string(), object.clone()));
                }
                ParsedAction::Use { .. } => {
                    if let Some(held) = &view.holding {
                        view.examined.insert(held.clone());
                    }
                }
            }
        }
        Some(view)
    }

    fn rules_available(&self, view: &EpisodeView) -> bool {
        self.profile.uses_injected_rules && !view.rules_region.is_empty()
    }

    /// Atomic transformation semantics are known when the misconception is
    /// disabled outright or the rules block spells out the action syntax.
    fn knows_atomic(&self, view: &EpisodeView, verb: &str) -> bool {
        !self.profile.misconception_enabled
            || (self.profile.uses_injected_rules
                && view
                    .rules_region
                    .contains(&format!("Syntax: {verb} <object> with")))
    }

    /// Receptacle classes recommended by past-experience lines that mention
    /// taking the target category, in order of appearance. Hints transfer
    /// at class level: instance numbers are layout-specific.
    fn memory_hints(&self, view: &EpisodeView, target: &str) -> Vec<String> {
        if !self.profile.uses_injected_memory || view.memory_region.is_empty() {
            return Vec::new();
        }
        let mut hints = Vec::new();
        let re = regex::Regex::new(r"take ([a-z]+)(?: \d+)? from ([a-z]+)(?: \d+)?").unwrap();
        for line in view.memory_region.lines() {
            let trimmed = line.trim_start();
            if !trimmed.starts_with("OK:") {
                continue;
            }
            for caps in re.captures_iter(trimmed) {
                if &caps[1] == target && !hints.contains(&caps[2].to_string()) {
                    hints.push(caps[2].to_string());
                }
            }
        }
        hints
    }

    fn class_prior(&self, target: &str) -> Vec<&'static str> {
        match self.env.category_of(target) {
            Some("food") => vec![
                "fridge", "countertop", "cabinet", "drawer", "shelf", "microwave",
                "sidetable", "desk", "stoveburner", "toaster", "coffeemachine", "sinkbasin",
            ],
            Some("stationery") | Some("portable") | Some("light") => vec![
                "desk", "shelf", "drawer", "sidetable", "countertop", "cabinet", "fridge",
                "microwave", "stoveburner", "toaster", "coffeemachine", "sinkbasin",
            ],
            Some("dishware") => vec![
                "cabinet", "countertop", "shelf", "sinkbasin", "drawer", "fridge",
                "microwave", "sidetable", "desk", "stoveburner", "toaster", "coffeemachine",
            ],
            Some("utensil") => vec![
                "drawer", "countertop", "sinkbasin", "cabinet", "shelf", "fridge",
                "microwave", "sidetable", "desk", "stoveburner", "toaster", "coffeemachine",
            ],
            _ => vec![
                "countertop", "cabinet", "shelf", "sinkbasin", "drawer", "fridge",
                "microwave", "sidetable", "desk", "stoveburner", "toaster", "coffeemachine",
            ],
        }
    }

    /// Full search order over receptacle instances for one target category.
    fn search_order(&self, view: &EpisodeView, target: &str) -> Vec<String> {
        let instances_of = |class: &str| {
            let mut v: Vec<String> = view
                .receptacles
                .iter()
                .filter(|r| object_class(r) == class)
                .cloned()
                .collect();
            v.sort();
            v
        };
        let mut order: Vec<String> = Vec::new();
        for class in self.memory_hints(view, target) {
            for inst in instances_of(&class) {
                if !order.contains(&inst) {
                    order.push(inst);
                }
            }
        }
        if self.rules_available(view) {
            for class in self.class_prior(target) {
                for inst in instances_of(class) {
                    if !order.contains(&inst) {
                        order.push(inst);
                    }
                }
            }
        } else {
            let mut rest: Vec<String> = view
                .receptacles
                .iter()
                .filter(|r| object_class(r) != "garbagecan")
                .cloned()
                .collect();
            rest.sort();
            let mut rng = ChaCha8Rng::seed_from_u64(hash64(&[
                &self.profile.seed.to_le_bytes(),
                view.goal_text.as_bytes(),
                b"search-order",
            ]));
            rest.shuffle(&mut rng);
            for inst in rest {
                if !order.contains(&inst) {
                    order.push(inst);
                }
            }
        }
        // Completeness: everything else, garbagecan excluded.
        let mut tail: Vec<String> = view
            .receptacles
            .iter()
            .filter(|r| object_class(r) != "garbagecan" && !order.contains(r))
            .cloned()
            .collect();
        tail.sort();
        order.extend(tail);
        order.retain(|r| object_class(r) != "garbagecan");
        order
    }

    fn decide(&self, view: &EpisodeView) -> String {
        let goal = parse_goal(&view.goal_text, &self.env);
        let target = goal.object.clone().unwrap_or_default();
        let verb = goal
            .modifier
            .as_deref()
            .and_then(|m| self.env.verb_for_modifier(m))
            .map(str::to_string);
        let tool_instance = verb
            .as_deref()
            .and_then(|v| self.env.tool_class(v))
            .map(|c| format!("{c} 1"));
        let needed: usize = if goal.task_type == "pick_two_obj_and_place" { 2 } else { 1 };
        let is_look = goal.task_type == "look_at_obj_in_light";

        let believes_complete = |obj: &String| {
            let at_dest = view
                .placed_at
                .get(obj)
                .map(|r| Some(object_class(r)) == goal.destination.as_deref())
                .unwrap_or(false);
            let transformed = match &verb {
                Some(v) => {
                    view.transformed.contains(&(v.clone(), obj.clone()))
                        || view.pseudo_transformed.contains(obj)
                }
                None => true,
            };
            at_dest && transformed
        };
        let done_objects: Vec<String> = view
            .placed_at
            .keys()
            .filter(|o| object_class(o) == target && believes_complete(o))
            .cloned()
            .collect();

        let goto = |r: &str| format!("go to {r}");

        // Holding something.
        if let Some(held) = view.holding.clone() {
            if object_class(&held) != target {
                // Shed an off-plan object at a safe open surface.
                if let Some(loc) = &view.location {
                    let openable_closed = view.open_state.get(loc) == Some(&false);
                    if object_class(loc) != "garbagecan" && !openable_closed {
                        return format!("put {held} in/on {loc}");
                    }
                }
                if let Some(surface) =
                    view.receptacles.iter().find(|r| object_class(r) == "countertop")
                {
                    return goto(surface);
                }
            }

            // Decisive disposal error (rules conditions only).
            if self.rules_available(view) && done_objects.is_empty() {
                let mut episode_rng = ChaCha8Rng::seed_from_u64(hash64(&[
                    &self.profile.seed.to_le_bytes(),
                    view.goal_text.as_bytes(),
                    b"disposal",
                ]));
                if episode_rng.gen_bool(self.profile.disposal_error_rate) {
                    if let Some(bin) =
                        view.receptacles.iter().find(|r| object_class(r) == "garbagecan")
                    {
                        if view.location.as_deref() == Some(bin.as_str()) {
                            return format!("put {held} in/on {bin}");
                        }
                        return goto(bin);
                    }
                }
            }

            // Transformation stage.
            if let (Some(v), Some(tool)) = (&verb, &tool_instance) {
                let already = view.transformed.contains(&(v.clone(), held.clone()))
                    || view.pseudo_transformed.contains(&held);
                if !already {
                    if view.location.as_deref() != Some(tool.as_str()) {
                        return goto(tool);
                    }
                    if self.knows_atomic(view, v) {
                        return format!("{v} {held} with {tool}");
                    }
                    // Misconception: place the object into the tool.
                    if view.open_state.get(tool) == Some(&false) {
                        return format!("open {tool}");
                    }
                    return format!("put {held} in/on {tool}");
                }
            }

            // Placement / examination stage.
            if is_look {
                let lamp = "desklamp 1".to_string();
                match view.object_location.get(&lamp) {
                    Some(spot) => {
                        if view.location.as_deref() == Some(spot.as_str()) {
                            return format!("use {lamp}");
                        }
                        return goto(&spot.clone());
                    }
                    None => return self.search_step(view, "desklamp"),
                }
            }
            let dest_class = goal.destination.clone().unwrap_or_default();
            let dest = view
                .receptacles
                .iter()
                .filter(|r| object_class(r) == dest_class)
                .min()
                .cloned();
            if let Some(dest) = dest {
                if view.location.as_deref() != Some(dest.as_str()) {
                    return goto(&dest);
                }
                if view.open_state.get(&dest) == Some(&false) {
                    return format!("open {dest}");
                }
                return format!("put {held} in/on {dest}");
            }
            return self.search_step(view, &target);
        }

        // Hand empty. Misconception retrieval: take the object back out of
        // the tool, after which it is believed transformed.
        if let Some(tool) = &tool_instance {
            let waiting: Option<String> = view
                .put_into_tool
                .iter()
                .find(|o| {
                    view.object_location.get(*o).map(String::as_str) == Some(tool.as_str())
                        && !view.pseudo_transformed.contains(*o)
                })
                .cloned();
            if let Some(obj) = waiting {
                if view.location.as_deref() == Some(tool.as_str()) {
                    return format!("take {obj} from {tool}");
                }
                return goto(tool);
            }
        }

        // Believed complete but the episode continues: the plan was wrong
        // somewhere, so take the placed object back and redo the cycle.
        if done_objects.len() >= needed && !is_look {
            let obj = &done_objects[0];
            let spot = view.placed_at[obj].clone();
            if view.location.as_deref() == Some(spot.as_str()) {
                return format!("take {obj} from {spot}");
            }
            return goto(&spot);
        }

        // Acquire the next target instance with a known location.
        let mut candidates: Vec<(&String, &String)> = view
            .object_location
            .iter()
            .filter(|(o, _)| object_class(o) == target && !done_objects.contains(*o))
            .collect();
        candidates.sort();
        if let Some((obj, spot)) = candidates.first() {
            let obj = (*obj).clone();
            let spot = (*spot).clone();
            if view.location.as_deref() == Some(spot.as_str()) {
                if view.open_state.get(&spot) == Some(&false) {
                    return format!("open {spot}");
                }
                return format!("take {obj} from {spot}");
            }
            return goto(&spot);
        }

        self.search_step(view, &target)
    }

    /// One search move: open a closed container underfoot, otherwise head
    /// for the next unsearched receptacle in policy order, with a seeded
    /// chance of a wasted wrong-receptacle step.
    fn search_step(&self, view: &EpisodeView, target: &str) -> String {
        if let Some(loc) = &view.location {
            if view.open_state.get(loc) == Some(&false) {
                return format!("open {loc}");
            }
        }
        let order = self.search_order(view, target);
        let mut step_rng = ChaCha8Rng::seed_from_u64(hash64(&[
            &self.profile.seed.to_le_bytes(),
            view.transcript.as_bytes(),
            b"search-step",
        ]));
        let has_hint = !self.memory_hints(view, target).is_empty();
        if !has_hint && step_rng.gen_bool(self.profile.search_error_rate) {
            // Wandering: revisit a receptacle that was already searched,
            // making no progress this step.
            let revisits: Vec<&String> = order
                .iter()
                .filter(|r| {
                    view.searched.contains(*r) && view.location.as_deref() != Some(r.as_str())
                })
                .collect();
            if !revisits.is_empty() {
                let wrong = revisits[step_rng.gen_range(0..revisits.len())];
                return format!("go to {wrong}");
            }
        }
        for recep in &order {
            if !view.searched.contains(recep) && view.location.as_deref() != Some(recep.as_str())
            {
                return format!("go to {recep}");
            }
        }
        // Everything searched: cycle.
        order
            .iter()
            .find(|r| view.location.as_deref() != Some(r.as_str()))
            .map(|r| format!("go to {r}"))
            .unwrap_or_else(|| "look".to_string())
    }
}

fn record_contents(view: &mut EpisodeView, receptacle: &str, obs: &str) {
    view.searched.insert(receptacle.to_string());
    if let Some(listing) = obs.split("you see ").nth(1) {
        for obj in parse_listing(listing) {
            view.object_location.insert(obj, receptacle.to_string());
        }
    }
}

use rand::seq::SliceRandom;

impl DecisionBackend for ScriptedOracle {
    fn name(&self) -> &str {
        "scripted"
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn next_action(&self, prompt: &PromptParts) -> Result<String, BackendError> {
        match self.parse_view(&prompt.full) {
            Some(view) => Ok(self.decide(&view)),
            None => Ok("look".to_string()),
        }
    }
}

// ---------------------------------------------------------------------
// Remote chat-completion backend
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for DecodingParams {
    fn default() -> Self {
        Self { temperature: 0.0, max_tokens: 256 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 3, initial_delay_ms: 500, max_delay_ms: 8_000 }
    }
}

pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &serde_json::Value,
    ) -> Result<String, String>;
}

/// Blocking HTTP transport.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout_secs: u64) -> Self {
        Self {
            agent: ureq::AgentBuilder::new()
                .timeout(std::time::Duration::from_secs(timeout_secs))
                .build(),
        }
    }
}

impl Transport for HttpTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &serde_json::Value,
    ) -> Result<String, String> {
        let mut request = self.agent.post(url).set("Content-Type", "application/json");
        if let Some(key) = bearer {
            request = request.set("Authorization", &format!("Bearer {key}"));
        }
        match request.send_string(&body.to_string()) {
            Ok(response) => response.into_string().map_err(|e| e.to_string()),
            Err(e) => Err(e.to_string()),
        }
    }
}

/// Take the action line from a completion: the last `Action:`-prefixed line
/// wins (reasoning text may precede it), falling back to the whole trimmed
/// response.
pub fn extract_action(completion: &str) -> String {
    completion
        .lines()
        .rev()
        .find_map(|l| l.trim().strip_prefix("Action:"))
        .map(|a| a.trim().to_string())
        .unwrap_or_else(|| completion.trim().to_string())
}

pub struct RemoteBackend<T: Transport> {
    pub endpoint: String,
    pub model: String,
    api_key: Option<String>,
    pub decoding: DecodingParams,
    pub retry: RetryPolicy,
    transport: T,
    log: Option<Mutex<std::fs::File>>,
}

impl<T: Transport> RemoteBackend<T> {
    pub fn new(endpoint: &str, model: &str, api_key: Option<String>, transport: T) -> Self {
        Self {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key,
            decoding: DecodingParams::default(),
            retry: RetryPolicy::default(),
            transport,
            log: None,
        }
    }

    pub fn with_decoding(mut self, decoding: DecodingParams) -> Self {
        self.decoding = decoding;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Append request/response pairs to a JSONL log. The API key travels
    /// only in the auth header and never reaches the log.
    pub fn with_log(mut self, path: PathBuf) -> std::io::Result<Self> {
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        self.log = Some(Mutex::new(file));
        Ok(self)
    }

    pub fn request_body(&self, prompt: &PromptParts) -> serde_json::Value {
        serde_json::json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
            "temperature": self.decoding.temperature,
            "max_tokens": self.decoding.max_tokens,
        })
    }

    fn log_exchange(&self, body: &serde_json::Value, response: &str) {
        if let Some(log) = &self.log {
            if let Ok(mut file) = log.lock() {
                let line = serde_json::json!({"request": body, "response": response});
                let _ = writeln!(file, "{line}");
            }
        }
    }
}

impl<T: Transport> DecisionBackend for RemoteBackend<T> {
    fn name(&self) -> &str {
        "remote"
    }

    fn deterministic(&self) -> bool {
        false
    }

    fn next_action(&self, prompt: &PromptParts) -> Result<String, BackendError> {
        let body = self.request_body(prompt);
        let mut last_error = String::new();
        for attempt in 0..=self.retry.max_retries {
            if attempt > 0 {
                let delay = (self.retry.initial_delay_ms << (attempt - 1))
                    .min(self.retry.max_delay_ms);
                std::thread::sleep(std::time::Duration::from_millis(delay));
            }
            match self
                .transport
                .post_json(&self.endpoint, self.api_key.as_deref(), &body)
            {
                Ok(text) => {
                    self.log_exchange(&body, &text);
                    let value: serde_json::Value = match serde_json::from_str(&text) {
                        Ok(v) => v,
                        Err(e) => {
                            last_error = format!("invalid JSON: {e}");
                            continue;
                        }
                    };
                    match value["choices"][0]["message"]["content"].as_str() {
                        Some(content) => return Ok(extract_action(content)),
                        None => {
                            last_error = "response missing message content".to_string();
                            continue;
                        }
                    }
                }
                Err(e) => last_error = e,
            }
        }
        Err(BackendError::Transport(last_error))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::{build_prompt, PromptBlocks, PromptConfig};
    use std::sync::Arc;

    fn env() -> Arc<EnvironmentProfile> {
        Arc::new(EnvironmentProfile::household())
    }

    const INIT_OBS: &str = "You are in the middle of a room. Looking quickly around you, you see a countertop 1, a fridge 1, a garbagecan 1, and a microwave 1.\nYour task is to: put a hot apple in fridge.";

    fn heat_prompt(rules_on: bool) -> PromptParts {
        let mut blocks = PromptBlocks {
            system_instruction: "SYS".into(),
            icl_example: "ICL".into(),
            initial_observation: INIT_OBS.into(),
            observation: "You pick up the apple 1.".into(),
            ..Default::default()
        };
        blocks.history = vec![
            crate::prompt::HistoryPair {
                action: "go to countertop 1".into(),
                observation: "On the countertop 1, you see a apple 1.".into(),
            },
            crate::prompt::HistoryPair {
                action: "take apple 1 from countertop 1".into(),
                observation: "You pick up the apple 1.".into(),
            },
        ];
        blocks.last_action = Some("go to microwave 1".into());
        blocks.observation = "The microwave 1 is open. In it, you see nothing.".into();
        if rules_on {
            blocks.rules_block = Some(format!(
                "{RULES_HEADER}\n=== Environment-Specific ===\n  HEAT:\n    Syntax: heat <object> with microwave 1\n    CRITICAL: Single-step atomic action. Object stays in hand. Do NOT put object in microwave."
            ));
        }
        build_prompt(&blocks, &PromptConfig::default())
    }

    #[test]
    fn rules_in_prompt_unlock_the_atomic_transformation() {
        let oracle = ScriptedOracle::new(OracleProfile::reference(), env());
        let action = oracle.next_action(&heat_prompt(true)).unwrap();
        assert_eq!(action, "heat apple 1 with microwave 1");
    }

    #[test]
    fn without_rules_the_misconception_appears() {
        let oracle = ScriptedOracle::new(OracleProfile::reference(), env());
        let action = oracle.next_action(&heat_prompt(false)).unwrap();
        assert_eq!(action, "put apple 1 in/on microwave 1");
    }

    #[test]
    fn rules_insensitive_oracle_ignores_the_rules_block() {
        let profile = OracleProfile {
            uses_injected_rules: false,
            ..OracleProfile::reference()
        };
        let oracle = ScriptedOracle::new(profile, env());
        let with_rules = oracle.next_action(&heat_prompt(true)).unwrap();
        let without = oracle.next_action(&heat_prompt(false)).unwrap();
        assert_eq!(with_rules, without);
    }

    #[test]
    fn output_is_a_pure_function_of_prompt_and_seed() {
        let oracle = ScriptedOracle::new(OracleProfile::default().with_seed(9), env());
        let prompt = heat_prompt(true);
        let a = oracle.next_action(&prompt).unwrap();
        let b = oracle.next_action(&prompt).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn memory_hints_steer_the_search() {
        let mut blocks = PromptBlocks {
            system_instruction: "SYS".into(),
            icl_example: "ICL".into(),
            initial_observation: INIT_OBS.into(),
            observation: INIT_OBS.into(),
            ..Default::default()
        };
        blocks.memory_block = Some(format!(
            "{MEMORY_HEADER}\n  OK: pick_heat_then_place_in_recep: go to countertop 1 -> take apple 1 from countertop 1"
        ));
        let prompt = build_prompt(&blocks, &PromptConfig::default());
        let oracle = ScriptedOracle::new(OracleProfile::reference(), env());
        assert_eq!(oracle.next_action(&prompt).unwrap(), "go to countertop 1");
    }

    #[test]
    fn extract_action_takes_the_last_action_line() {
        let completion =
            "Thought: heat it first.\nAction: go to microwave 1\nThought: wait.\nAction: heat apple 1 with microwave 1";
        assert_eq!(extract_action(completion), "heat apple 1 with microwave 1");
        assert_eq!(extract_action("  go to fridge 1  "), "go to fridge 1");
    }

    struct StubTransport {
        response: String,
        bodies: Mutex<Vec<serde_json::Value>>,
        failures_before_success: Mutex<u32>,
    }

    impl Transport for StubTransport {
        fn post_json(
            &self,
            _url: &str,
            _bearer: Option<&str>,
            body: &serde_json::Value,
        ) -> Result<String, String> {
            self.bodies.lock().unwrap().push(body.clone());
            let mut failures = self.failures_before_success.lock().unwrap();
            if *failures > 0 {
                *failures -= 1;
                return Err("connection reset".to_string());
            }
            Ok(self.response.clone())
        }
    }

    fn prompt_parts() -> PromptParts {
        PromptParts { system: "S".into(), user: "U".into(), full: "S\n\nU".into() }
    }

    #[test]
    fn remote_backend_sends_greedy_decoding_and_extracts_the_action() {
        let transport = StubTransport {
            response: r#"{"choices":[{"message":{"content":"Action: go to fridge 1"}}]}"#.into(),
            bodies: Mutex::new(vec![]),
            failures_before_success: Mutex::new(0),
        };
        let backend = RemoteBackend::new("http://localhost/v1/chat", "test-model", None, transport);
        let action = backend.next_action(&prompt_parts()).unwrap();
        assert_eq!(action, "go to fridge 1");
        let bodies = backend.transport.bodies.lock().unwrap();
        assert_eq!(bodies[0]["temperature"], 0.0);
        assert_eq!(bodies[0]["max_tokens"], 256);
        assert_eq!(bodies[0]["messages"][0]["role"], "system");
        assert_eq!(bodies[0]["messages"][1]["role"], "user");
    }

    #[test]
    fn remote_backend_retries_with_backoff_then_succeeds() {
        let transport = StubTransport {
            response: r#"{"choices":[{"message":{"content":"Action: look"}}]}"#.into(),
            bodies: Mutex::new(vec![]),
            failures_before_success: Mutex::new(2),
        };
        let backend = RemoteBackend::new("http://localhost", "m", None, transport).with_retry(
            RetryPolicy { max_retries: 3, initial_delay_ms: 0, max_delay_ms: 0 },
        );
        assert_eq!(backend.next_action(&prompt_parts()).unwrap(), "look");
        assert_eq!(backend.transport.bodies.lock().unwrap().len(), 3);
    }

    #[test]
    fn remote_backend_fails_after_exhausting_retries() {
        let transport = StubTransport {
            response: String::new(),
            bodies: Mutex::new(vec![]),
            failures_before_success: Mutex::new(99),
        };
        let backend = RemoteBackend::new("http://localhost", "m", None, transport).with_retry(
            RetryPolicy { max_retries: 2, initial_delay_ms: 0, max_delay_ms: 0 },
        );
        assert!(matches!(
            backend.next_action(&prompt_parts()),
            Err(BackendError::Transport(_))
        ));
    }

    #[test]
    fn science_decoding_uses_larger_budget() {
        let sw = EnvironmentProfile::science();
        let decoding = DecodingParams { temperature: 0.0, max_tokens: sw.max_tokens() };
        assert_eq!(decoding.max_tokens, 512);
    }
}
