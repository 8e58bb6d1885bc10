//! Deterministic belief tracking over observation text.
//!
//! The belief state is a task-facing interface, not a world model: it tracks
//! exactly the fields needed to verify action preconditions and to screen
//! memory applicability (location, hand, container states, object
//! sightings). Updates are pure pattern matches driven by the profile's
//! ordered observation rules; no decision backend is ever consulted.
//! Transformation outcomes (heated/cooled/cleaned) are deliberately not
//! tracked: they only matter for the terminal reward, never as preconditions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::action::ParsedAction;
use crate::profile::{object_class, parse_listing, BeliefEffect, EnvironmentProfile, ScienceEffect};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContainerState {
    Open,
    Closed,
    Unknown,
}

/// The agent's tracked state: location, hand, container states, and the
/// last-observed location of each object.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BeliefState {
    /// Current receptacle, `None` while unknown (start of episode).
    pub location: Option<String>,
    /// Held object; at most one under the single-grasp constraint.
    pub hand: Option<String>,
    /// Open/closed knowledge for openable receptacle instances.
    pub container_states: BTreeMap<String, ContainerState>,
    /// Object name -> receptacle where it was last observed.
    pub object_sightings: BTreeMap<String, String>,
    pub step: u32,
    /// Observations that matched no pattern rule (diagnostic only).
    pub parse_misses: u32,
}

impl BeliefState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Receptacles currently believed open, in name order.
    pub fn open_receptacles(&self) -> Vec<&str> {
        self.container_states
            .iter()
            .filter(|(_, s)| **s == ContainerState::Open)
            .map(|(r, _)| r.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandOccupancy {
    Empty,
    Holding(String),
}

impl HandOccupancy {
    pub fn is_empty(&self) -> bool {
        matches!(self, Self::Empty)
    }
}

/// Projection of belief to its two most discriminative components.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSignature {
    pub location: Option<String>,
    pub hand_occupancy: HandOccupancy,
}

/// Pure projection of a belief state onto its signature.
pub fn state_signature(b: &BeliefState) -> StateSignature {
    StateSignature {
        location: b.location.clone(),
        hand_occupancy: match &b.hand {
            Some(obj) => HandOccupancy::Holding(obj.clone()),
            None => HandOccupancy::Empty,
        },
    }
}

/// Recorded-signature form used by memory entries: `holding=none` or
/// `holding=apple 1`, optionally extended with the open-container set as
/// `|open=a,b`.
pub fn record_signature(b: &BeliefState, include_open: bool) -> String {
    let mut s = format!(
        "holding={}",
        b.hand.as_deref().unwrap_or("none")
    );
    if include_open {
        let open = b.open_receptacles();
        if !open.is_empty() {
            s.push_str("|open=");
            s.push_str(&open.join(","));
        }
    }
    s
}

/// Parsed goal key: task type, object category, optional transformation
/// modifier, optional destination.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalSignature {
    pub task_type: String,
    pub object: Option<String>,
    pub modifier: Option<String>,
    pub destination: Option<String>,
    /// Original goal text, always retained (even when parsing failed).
    pub raw_text: String,
}

impl GoalSignature {
    pub fn unknown(raw: &str) -> Self {
        Self {
            task_type: "unknown".to_string(),
            object: None,
            modifier: None,
            destination: None,
            raw_text: raw.to_string(),
        }
    }

    fn is_science_family(task_type: &str) -> bool {
        let mut chars = task_type.chars();
        chars.next() == Some('F')
            && task_type.len() >= 2
            && chars.all(|c| c.is_ascii_digit())
    }

    /// Colon-joined key, e.g. `pick_heat_then_place_in_recep:apple:hot:fridge`
    /// or `F3:melt:water` for science families.
    pub fn serialize(&self) -> String {
        if Self::is_science_family(&self.task_type) {
            format!(
                "{}:{}:{}",
                self.task_type,
                self.modifier.as_deref().unwrap_or("none"),
                self.object.as_deref().unwrap_or("none"),
            )
        } else {
            format!(
                "{}:{}:{}:{}",
                self.task_type,
                self.object.as_deref().unwrap_or("none"),
                self.modifier.as_deref().unwrap_or("none"),
                self.destination.as_deref().unwrap_or("none"),
            )
        }
    }

    /// Parse a recorded colon-joined key back into its fields.
    pub fn parse_recorded(raw: &str) -> Self {
        let parts: Vec<&str> = raw.split(':').collect();
        let norm = |s: &str| {
            if s.is_empty() || s == "none" {
                None
            } else {
                Some(s.to_string())
            }
        };
        if !parts.is_empty() && Self::is_science_family(parts[0]) {
            Self {
                task_type: parts[0].to_string(),
                modifier: parts.get(1).and_then(|s| norm(s)),
                object: parts.get(2).and_then(|s| norm(s)),
                destination: None,
                raw_text: raw.to_string(),
            }
        } else {
            Self {
                task_type: parts.first().copied().unwrap_or("unknown").to_string(),
                object: parts.get(1).and_then(|s| norm(s)),
                modifier: parts.get(2).and_then(|s| norm(s)),
                destination: parts.get(3).and_then(|s| norm(s)),
                raw_text: raw.to_string(),
            }
        }
    }
}

/// Parse a natural-language goal against the profile's templates.
/// Unmatched text yields `task_type = "unknown"` with the raw text retained,
/// which downstream disables domain-rule filtering.
pub fn parse_goal(goal_text: &str, profile: &EnvironmentProfile) -> GoalSignature {
    let text = goal_text.trim();
    for template in profile.goal_templates() {
        if let Some(caps) = template.regex.captures(text) {
            let get = |name: &str| caps.name(name).map(|m| m.as_str().trim().to_string());
            return GoalSignature {
                task_type: template.task_type.clone(),
                object: get("obj"),
                modifier: get("mod").or_else(|| template.modifier.clone()),
                destination: get("dest"),
                raw_text: text.to_string(),
            };
        }
    }
    GoalSignature::unknown(text)
}

pub mod conditions {
    //! Identifiers for precondition-check outcomes.
    pub const MALFORMED_ACTION: &str = "malformed-action";
    pub const NOT_AT_LOCATION: &str = "not-at-location";
    pub const ALREADY_AT_LOCATION: &str = "already-at-location";
    pub const OBJECT_NOT_AT_LOCATION: &str = "object-not-at-location";
    pub const HAND_NOT_EMPTY: &str = "hand-not-empty";
    pub const HAND_NOT_HOLDING_OBJECT: &str = "hand-not-holding-object";
    pub const CONTAINER_CLOSED: &str = "container-closed";
    pub const CONTAINER_NOT_CLOSED: &str = "container-not-closed";
    pub const CONTAINER_NOT_OPEN: &str = "container-not-open";
    pub const WRONG_TOOL: &str = "wrong-tool";
    pub const NOT_USABLE: &str = "not-usable";
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreconditionReport {
    pub action_text: String,
    pub satisfied: bool,
    pub violated_conditions: Vec<String>,
    /// Conditions the belief could not refute (unknown location or
    /// container state); these pass with a warning rather than failing
    /// closed, so exploration is never blocked by ignorance.
    pub warnings: Vec<String>,
}

impl PreconditionReport {
    fn from_parts(action_text: String, violated: Vec<String>, warnings: Vec<String>) -> Self {
        Self {
            action_text,
            satisfied: violated.is_empty(),
            violated_conditions: violated,
            warnings,
        }
    }
}

/// Evaluate the precondition table for a parsed action against belief.
pub fn check_preconditions(
    action: &ParsedAction,
    b: &BeliefState,
    profile: &EnvironmentProfile,
) -> PreconditionReport {
    let mut violated = Vec::new();
    let mut warnings = Vec::new();

    let require_at = |recep: &str, violated: &mut Vec<String>, warnings: &mut Vec<String>| {
        match &b.location {
            Some(loc) if loc == recep => {}
            Some(_) => violated.push(conditions::NOT_AT_LOCATION.to_string()),
            None => warnings.push("location-unknown".to_string()),
        }
    };
    let container_open_if_openable =
        |recep: &str, violated: &mut Vec<String>, warnings: &mut Vec<String>| {
            if profile.is_openable_class(object_class(recep)) {
                match b.container_states.get(recep) {
                    Some(ContainerState::Closed) => {
                        violated.push(conditions::CONTAINER_CLOSED.to_string())
                    }
                    Some(ContainerState::Open) => {}
                    _ => warnings.push("container-state-unknown".to_string()),
                }
            }
        };

    match action {
        ParsedAction::Goto { receptacle } => {
            if b.location.as_deref() == Some(receptacle.as_str()) {
                violated.push(conditions::ALREADY_AT_LOCATION.to_string());
            }
        }
        ParsedAction::Take { object, receptacle } => {
            require_at(receptacle, &mut violated, &mut warnings);
            if b.hand.is_some() {
                violated.push(conditions::HAND_NOT_EMPTY.to_string());
            }
            match b.object_sightings.get(object.as_str()) {
                Some(seen_at) if seen_at != receptacle => {
                    violated.push(conditions::OBJECT_NOT_AT_LOCATION.to_string())
                }
                Some(_) => {}
                None => warnings.push("object-location-unknown".to_string()),
            }
            container_open_if_openable(receptacle, &mut violated, &mut warnings);
        }
        ParsedAction::Put { object, receptacle } => {
            require_at(receptacle, &mut violated, &mut warnings);
            if b.hand.as_deref() != Some(object.as_str()) {
                violated.push(conditions::HAND_NOT_HOLDING_OBJECT.to_string());
            }
            container_open_if_openable(receptacle, &mut violated, &mut warnings);
        }
        ParsedAction::Heat { object, tool }
        | ParsedAction::Cool { object, tool }
        | ParsedAction::Clean { object, tool } => {
            let expected = profile.tool_class(action.verb());
            if expected != Some(object_class(tool)) {
                violated.push(conditions::WRONG_TOOL.to_string());
            }
            require_at(tool, &mut violated, &mut warnings);
            if b.hand.as_deref() != Some(object.as_str()) {
                violated.push(conditions::HAND_NOT_HOLDING_OBJECT.to_string());
            }
        }
        ParsedAction::Open { receptacle } => {
            if !profile.is_openable_class(object_class(receptacle)) {
                violated.push(conditions::NOT_USABLE.to_string());
            }
            require_at(receptacle, &mut violated, &mut warnings);
            match b.container_states.get(receptacle.as_str()) {
                Some(ContainerState::Open) => {
                    violated.push(conditions::CONTAINER_NOT_CLOSED.to_string())
                }
                Some(ContainerState::Closed) => {}
                _ => warnings.push("container-state-unknown".to_string()),
            }
        }
        ParsedAction::Close { receptacle } => {
            if !profile.is_openable_class(object_class(receptacle)) {
                violated.push(conditions::NOT_USABLE.to_string());
            }
            require_at(receptacle, &mut violated, &mut warnings);
            match b.container_states.get(receptacle.as_str()) {
                Some(ContainerState::Closed) => {
                    violated.push(conditions::CONTAINER_NOT_OPEN.to_string())
                }
                Some(ContainerState::Open) => {}
                _ => warnings.push("container-state-unknown".to_string()),
            }
        }
        ParsedAction::Use { object } => {
            if !profile.is_lamp_class(object_class(object)) {
                violated.push(conditions::NOT_USABLE.to_string());
            }
            match (b.object_sightings.get(object.as_str()), &b.location) {
                (Some(seen_at), Some(loc)) if seen_at != loc => {
                    violated.push(conditions::NOT_AT_LOCATION.to_string())
                }
                (Some(_), Some(_)) => {}
                _ => warnings.push("object-location-unknown".to_string()),
            }
        }
    }

    PreconditionReport::from_parts(action.to_text(), violated, warnings)
}

/// Like [`check_preconditions`] but starting from raw text; unparseable
/// actions report `malformed-action`.
pub fn check_preconditions_text(
    text: &str,
    b: &BeliefState,
    profile: &EnvironmentProfile,
) -> PreconditionReport {
    match crate::action::parse_action(profile, text) {
        Some(action) => check_preconditions(&action, b, profile),
        None => PreconditionReport::from_parts(
            text.trim().to_string(),
            vec![conditions::MALFORMED_ACTION.to_string()],
            Vec::new(),
        ),
    }
}

/// Apply one observation to the belief. Unrecognized text is a silent no-op
/// on every field except the step counter, recorded in `parse_misses`.
pub fn update_belief(
    prev: &BeliefState,
    last_action: Option<&ParsedAction>,
    observation: &str,
    profile: &EnvironmentProfile,
) -> BeliefState {
    let mut next = prev.clone();
    next.step += 1;

    let obs = observation.trim_end();
    for rule in profile.observation_rules() {
        if let Some(filter) = &rule.action {
            if last_action.map(|a| a.verb()) != Some(filter.as_str()) {
                continue;
            }
        }
        let Some(caps) = rule.regex.captures(obs) else {
            continue;
        };
        let cap = |name: &str| caps.name(name).map(|m| m.as_str().to_string());
        // Resolve a receptacle for effects from the `recep` capture, falling
        // back to the action's own receptacle argument.
        let resolved_recep = cap("recep").or_else(|| {
            last_action
                .and_then(|a| a.receptacle())
                .map(|r| r.to_string())
        });
        for effect in &rule.effects {
            match effect {
                BeliefEffect::LocationFromAction => {
                    if let Some(r) = last_action.and_then(|a| a.receptacle()) {
                        next.location = Some(r.to_string());
                    }
                }
                BeliefEffect::HandFromActionObject => {
                    if let Some(o) = last_action.and_then(|a| a.object()) {
                        next.hand = Some(o.to_string());
                    }
                }
                BeliefEffect::ClearHand => next.hand = None,
                BeliefEffect::RemoveSightingOfActionObject => {
                    if let Some(o) = last_action.and_then(|a| a.object()) {
                        next.object_sightings.remove(o);
                    }
                }
                BeliefEffect::SightActionObjectAtActionReceptacle => {
                    if let (Some(o), Some(r)) = (
                        last_action.and_then(|a| a.object()),
                        last_action.and_then(|a| a.receptacle()),
                    ) {
                        next.object_sightings.insert(o.to_string(), r.to_string());
                    }
                }
                BeliefEffect::SetContainerOpen | BeliefEffect::SetContainerClosed => {
                    if let Some(r) = &resolved_recep {
                        if profile.is_openable_class(object_class(r)) {
                            let state = if *effect == BeliefEffect::SetContainerOpen {
                                ContainerState::Open
                            } else {
                                ContainerState::Closed
                            };
                            next.container_states.insert(r.clone(), state);
                        }
                    }
                }
                BeliefEffect::SightListAtReceptacle => {
                    if let (Some(list), Some(r)) = (cap("list"), &resolved_recep) {
                        for obj in parse_listing(&list) {
                            next.object_sightings.insert(obj, r.clone());
                        }
                    }
                }
                BeliefEffect::RegisterOpenablesFromList => {
                    if let Some(list) = cap("list") {
                        for name in parse_listing(&list) {
                            if profile.is_openable_class(object_class(&name)) {
                                next.container_states
                                    .entry(name)
                                    .or_insert(ContainerState::Unknown);
                            }
                        }
                    }
                }
                BeliefEffect::Noop => {}
            }
        }
        return next;
    }

    next.parse_misses += 1;
    next
}

/// Belief state for the science environment: room, inventory, state flags,
/// and a monotone sub-goal progress pointer.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScienceBeliefState {
    pub room: Option<String>,
    pub inventory: BTreeSet<String>,
    pub state_flags: BTreeMap<String, String>,
    pub progress_pointer: u32,
    pub step: u32,
    pub parse_misses: u32,
}

impl ScienceBeliefState {
    pub fn new() -> Self {
        Self::default()
    }

    /// True when the inventory contains any instrument-class item.
    pub fn holds_instrument(&self, profile: &EnvironmentProfile) -> bool {
        self.inventory
            .iter()
            .any(|o| profile.is_instrument_class(object_class(o)))
    }
}

/// Deterministic science belief update. Field updates come from the
/// profile's science rules; the progress pointer advances only when the
/// observation matches the family's next completion marker.
pub fn update_science_belief(
    prev: &ScienceBeliefState,
    last_action: Option<&str>,
    observation: &str,
    family_id: &str,
    profile: &EnvironmentProfile,
) -> ScienceBeliefState {
    let mut next = prev.clone();
    next.step += 1;

    let obs = observation.trim_end();
    let mut matched = false;
    for rule in profile.science_rules() {
        if let Some(prefix) = &rule.action_prefix {
            if !last_action.map(|a| a.starts_with(prefix.as_str())).unwrap_or(false) {
                continue;
            }
        }
        let Some(caps) = rule.regex.captures(obs) else {
            continue;
        };
        matched = true;
        let cap = |name: &str| caps.name(name).map(|m| m.as_str().to_string());
        for effect in &rule.effects {
            match effect {
                ScienceEffect::SetRoom => {
                    if let Some(room) = cap("room") {
                        next.room = Some(room);
                    }
                }
                ScienceEffect::AddInventory => {
                    if let Some(obj) = cap("obj") {
                        next.inventory.insert(obj);
                    }
                }
                ScienceEffect::RemoveInventory => {
                    if let Some(obj) = cap("obj") {
                        next.inventory.remove(&obj);
                    }
                }
                ScienceEffect::SetStateFlag => {
                    if let (Some(obj), Some(state)) = (cap("obj"), cap("state")) {
                        next.state_flags.insert(obj, state);
                    }
                }
                ScienceEffect::Noop => {}
            }
        }
        break;
    }

    let markers = profile.family_markers(family_id);
    let pointer = next.progress_pointer as usize;
    if pointer < markers.len() && markers[pointer].is_match(obs) {
        next.progress_pointer += 1;
        matched = true;
    }

    if !matched {
        next.parse_misses += 1;
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::parse_action;

    fn profile() -> EnvironmentProfile {
        EnvironmentProfile::household()
    }

    fn act(p: &EnvironmentProfile, text: &str) -> ParsedAction {
        parse_action(p, text).expect(text)
    }

    #[test]
    fn take_observation_sets_hand() {
        let p = profile();
        let b = BeliefState::new();
        let a = act(&p, "take apple 1 from countertop 1");
        let next = update_belief(&b, Some(&a), "You pick up the apple 1.", &p);
        assert_eq!(next.hand.as_deref(), Some("apple 1"));
        assert_eq!(next.step, 1);
    }

    #[test]
    fn goto_observation_sets_location_and_sightings() {
        let p = profile();
        let b = BeliefState::new();
        let a = act(&p, "go to countertop 1");
        let next = update_belief(&b, Some(&a), "On countertop 1: apple 2, apple 1, mug 3.", &p);
        assert_eq!(next.location.as_deref(), Some("countertop 1"));
        assert_eq!(next.object_sightings.get("apple 2").map(String::as_str), Some("countertop 1"));
        assert_eq!(next.object_sightings.get("apple 1").map(String::as_str), Some("countertop 1"));

        let long = update_belief(
            &b,
            Some(&a),
            "On the countertop 1, you see a apple 2, a apple 1, and a mug 3.",
            &p,
        );
        assert_eq!(long.location.as_deref(), Some("countertop 1"));
        assert_eq!(long.object_sightings.len(), 3);
    }

    #[test]
    fn nothing_happens_only_increments_step() {
        let p = profile();
        let mut b = BeliefState::new();
        b.location = Some("fridge 1".to_string());
        b.hand = Some("apple 1".to_string());
        let a = act(&p, "open fridge 1");
        let next = update_belief(&b, Some(&a), "Nothing happens.", &p);
        let mut expected = b.clone();
        expected.step += 1;
        assert_eq!(next, expected);
    }

    #[test]
    fn put_observation_clears_hand_and_records_sighting() {
        let p = profile();
        let mut b = BeliefState::new();
        b.hand = Some("apple 1".to_string());
        b.location = Some("fridge 1".to_string());
        let a = act(&p, "put apple 1 in/on fridge 1");
        let next = update_belief(&b, Some(&a), "You put the apple 1 in/on the fridge 1.", &p);
        assert_eq!(next.hand, None);
        assert_eq!(next.object_sightings.get("apple 1").map(String::as_str), Some("fridge 1"));
    }

    #[test]
    fn initial_room_listing_registers_openables_as_unknown() {
        let p = profile();
        let b = BeliefState::new();
        let obs = "You are in the middle of a room. Looking quickly around you, you see a cabinet 2, a cabinet 1, a countertop 1, a fridge 1, and a microwave 1.\nYour task is to: put a hot apple in fridge.";
        let next = update_belief(&b, None, obs, &p);
        assert_eq!(next.container_states.get("fridge 1"), Some(&ContainerState::Unknown));
        assert_eq!(next.container_states.get("cabinet 2"), Some(&ContainerState::Unknown));
        assert!(!next.container_states.contains_key("countertop 1"));
        assert_eq!(next.location, None);
    }

    #[test]
    fn unrecognized_text_counts_a_parse_miss() {
        let p = profile();
        let b = BeliefState::new();
        let next = update_belief(&b, None, "The ceiling is surprisingly clean.", &p);
        assert_eq!(next.parse_misses, 1);
        assert_eq!(next.step, 1);
        let mut expected = b.clone();
        expected.step = 1;
        expected.parse_misses = 1;
        assert_eq!(next, expected);
    }

    #[test]
    fn double_fold_is_deterministic() {
        let p = profile();
        let script = [
            (None, "You are in the middle of a room. Looking quickly around you, you see a fridge 1, and a countertop 1.\nYour task is to: put a hot apple in fridge."),
            (Some("go to countertop 1"), "On the countertop 1, you see a apple 1."),
            (Some("take apple 1 from countertop 1"), "You pick up the apple 1."),
            (Some("go to fridge 1"), "The fridge 1 is closed."),
            (Some("open fridge 1"), "You open the fridge 1. In it, you see a egg 1."),
        ];
        let run = || {
            let mut b = BeliefState::new();
            for (action, obs) in &script {
                let parsed = action.map(|a| act(&p, a));
                b = update_belief(&b, parsed.as_ref(), obs, &p);
            }
            b
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn parse_goal_matches_templates() {
        let p = profile();
        let g = parse_goal("put a hot apple in fridge.", &p);
        assert_eq!(g.task_type, "pick_heat_then_place_in_recep");
        assert_eq!(g.object.as_deref(), Some("apple"));
        assert_eq!(g.modifier.as_deref(), Some("hot"));
        assert_eq!(g.destination.as_deref(), Some("fridge"));
        assert_eq!(g.serialize(), "pick_heat_then_place_in_recep:apple:hot:fridge");

        let g = parse_goal("heat some egg and put it in diningtable", &p);
        assert_eq!(g.task_type, "pick_heat_then_place_in_recep");
        assert_eq!(g.object.as_deref(), Some("egg"));
        assert_eq!(g.destination.as_deref(), Some("diningtable"));

        let g = parse_goal("xyzzy", &p);
        assert_eq!(g.task_type, "unknown");
        assert_eq!(g.raw_text, "xyzzy");
    }

    #[test]
    fn goal_signature_round_trips_both_styles() {
        let g = GoalSignature::parse_recorded("pick_heat_then_place_in_recep:potato:hot:fridge");
        assert_eq!(g.task_type, "pick_heat_then_place_in_recep");
        assert_eq!(g.object.as_deref(), Some("potato"));
        assert_eq!(g.serialize(), "pick_heat_then_place_in_recep:potato:hot:fridge");

        let g = GoalSignature::parse_recorded("F3:melt:water");
        assert_eq!(g.task_type, "F3");
        assert_eq!(g.modifier.as_deref(), Some("melt"));
        assert_eq!(g.object.as_deref(), Some("water"));
        assert_eq!(g.serialize(), "F3:melt:water");
    }

    #[test]
    fn signature_is_a_pure_projection() {
        let mut b = BeliefState::new();
        b.location = Some("fridge 1".into());
        let sig = state_signature(&b);
        assert_eq!(sig.location.as_deref(), Some("fridge 1"));
        assert_eq!(sig.hand_occupancy, HandOccupancy::Empty);

        b.location = Some("microwave 1".into());
        b.hand = Some("apple 1".into());
        let sig = state_signature(&b);
        assert_eq!(sig.hand_occupancy, HandOccupancy::Holding("apple 1".into()));
        assert_eq!(state_signature(&b), state_signature(&b.clone()));
    }

    #[test]
    fn signature_stable_under_failure_feedback() {
        let p = profile();
        let mut b = BeliefState::new();
        b.location = Some("fridge 1".into());
        let a = act(&p, "open fridge 1");
        let next = update_belief(&b, Some(&a), "Nothing happens.", &p);
        assert_eq!(state_signature(&next), state_signature(&b));
    }

    #[test]
    fn preconditions_follow_the_table() {
        let p = profile();

        let mut b = BeliefState::new();
        b.location = Some("fridge 1".into());
        b.container_states.insert("fridge 1".into(), ContainerState::Open);
        let report = check_preconditions(&act(&p, "take mug 1 from fridge 1"), &b, &p);
        assert!(report.satisfied, "{report:?}");

        let mut b = BeliefState::new();
        b.location = Some("countertop 1".into());
        b.hand = Some("apple 1".into());
        let report = check_preconditions(&act(&p, "heat apple 1 with microwave 1"), &b, &p);
        assert_eq!(report.violated_conditions, vec![conditions::NOT_AT_LOCATION]);

        let mut b = BeliefState::new();
        b.location = Some("fridge 1".into());
        b.container_states.insert("fridge 1".into(), ContainerState::Open);
        let report = check_preconditions(&act(&p, "open fridge 1"), &b, &p);
        assert_eq!(report.violated_conditions, vec![conditions::CONTAINER_NOT_CLOSED]);
    }

    #[test]
    fn unknown_state_passes_with_warning() {
        let p = profile();
        let b = BeliefState::new();
        let report = check_preconditions(&act(&p, "take mug 1 from fridge 1"), &b, &p);
        assert!(report.satisfied);
        assert!(!report.warnings.is_empty());
    }

    #[test]
    fn malformed_action_is_reported() {
        let p = profile();
        let report = check_preconditions_text("frobnicate the sink", &BeliefState::new(), &p);
        assert!(!report.satisfied);
        assert_eq!(report.violated_conditions, vec![conditions::MALFORMED_ACTION]);
    }

    #[test]
    fn science_pickup_and_markers() {
        let p = EnvironmentProfile::science();
        let b = ScienceBeliefState::new();
        let next = update_science_belief(
            &b,
            Some("pick up thermometer"),
            "You move the thermometer to the inventory.",
            "F3",
            &p,
        );
        assert!(next.inventory.contains("thermometer"));
        assert!(next.holds_instrument(&p));

        let same = update_science_belief(&next, Some("wibble"), "No known action matches that input.", "F3", &p);
        assert_eq!(same.inventory, next.inventory);
        assert_eq!(same.progress_pointer, next.progress_pointer);

        // Focus completion is the F3 family's first marker.
        let focused = update_science_belief(&b, Some("focus on water"), "You focus on the water.", "F3", &p);
        assert_eq!(focused.progress_pointer, 1);
    }

    #[test]
    fn progress_pointer_never_decreases() {
        let p = EnvironmentProfile::science();
        let mut b = ScienceBeliefState::new();
        let observations = [
            "You focus on the water.",
            "This room is called the kitchen.",
            "You move the metal pot to the inventory.",
            "No known action matches that input.",
            "The water begins to boil.",
        ];
        let mut last = b.progress_pointer;
        for obs in observations {
            b = update_science_belief(&b, None, obs, "F3", &p);
            assert!(b.progress_pointer >= last);
            last = b.progress_pointer;
        }
        assert_eq!(b.progress_pointer, 3);
    }
}
