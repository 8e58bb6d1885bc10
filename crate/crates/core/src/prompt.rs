//! Prompt assembly.
//!
//! The per-step prompt concatenates the shared scaffolding (system
//! instruction, one-shot example, interaction transcript) with up to four
//! optional knowledge blocks: current state, task goal, active rules, and
//! filtered past experience. The baseline prompt is the strict subset with
//! all four blocks absent and every shared byte identical, so condition
//! differences are attributable to the injected knowledge alone. Output is
//! deterministic bytes for identical inputs.

use serde::{Deserialize, Serialize};

use crate::arbitration::{ArbitratedEntry, ArbitrationMode, Disposition};
use crate::belief::{BeliefState, GoalSignature, ScienceBeliefState};
use crate::memory::MemoryEntry;
use crate::profile::{EnvironmentProfile, PromptStyle};
use crate::rules::{ActiveRuleSet, Tier};

pub const STATE_HEADER: &str = "[Current State]";
pub const GOAL_HEADER: &str = "[Task Goal]";
pub const RULES_HEADER: &str = "[RULES - CRITICAL, Always Follow]";
pub const MEMORY_HEADER: &str = "[Past Experience - Learned from History]";
pub const TASK_RULES_HEADER: &str = "[Task-Specific Rules]";
pub const OBJECTIVE_HEADER: &str = "[Current Objective]";

/// The four headers whose joint absence defines the baseline condition.
pub const KNOWLEDGE_HEADERS: [&str; 4] =
    [STATE_HEADER, GOAL_HEADER, RULES_HEADER, MEMORY_HEADER];

/// Which knowledge enters the pipeline for one experimental condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionFlags {
    pub rules_on: bool,
    pub memory_on: bool,
    pub arbitration_mode: ArbitrationMode,
    pub scf_on: bool,
}

impl ConditionFlags {
    pub fn baseline() -> Self {
        Self {
            rules_on: false,
            memory_on: false,
            arbitration_mode: ArbitrationMode::HardAndSoft,
            scf_on: true,
        }
    }

    pub fn rules_only() -> Self {
        Self { rules_on: true, ..Self::baseline() }
    }

    pub fn memory_only() -> Self {
        Self { memory_on: true, ..Self::baseline() }
    }

    pub fn full() -> Self {
        Self { rules_on: true, memory_on: true, ..Self::baseline() }
    }

    /// Condition letter per the 2x2 design: A/B/C/D for
    /// baseline/rules-only/memory-only/full.
    pub fn condition_label(&self) -> &'static str {
        match (self.rules_on, self.memory_on) {
            (false, false) => "A",
            (true, false) => "B",
            (false, true) => "C",
            (true, true) => "D",
        }
    }

    pub fn from_condition_label(label: &str) -> Option<Self> {
        match label {
            "A" => Some(Self::baseline()),
            "B" => Some(Self::rules_only()),
            "C" => Some(Self::memory_only()),
            "D" => Some(Self::full()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryPair {
    pub action: String,
    pub observation: String,
}

/// All inputs to prompt construction. The optional blocks are pre-rendered
/// text: absent blocks leave no trace in the output.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PromptBlocks {
    pub system_instruction: String,
    pub icl_example: String,
    pub belief_block: Option<String>,
    pub goal_block: Option<String>,
    pub rules_block: Option<String>,
    pub memory_block: Option<String>,
    /// First observation of the episode, rendered bare at transcript start.
    pub initial_observation: String,
    /// Completed (action, observation) pairs before the latest action.
    pub history: Vec<HistoryPair>,
    /// The action whose result is the current observation; `None` at step 1.
    pub last_action: Option<String>,
    /// Current observation (equals `initial_observation` at step 1).
    pub observation: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptConfig {
    /// Oldest history pairs are dropped once the transcript exceeds this
    /// many characters; the initial observation is never dropped.
    pub history_char_budget: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self { history_char_budget: 24_000 }
    }
}

/// A built prompt: the system/user split for chat backends plus the full
/// concatenation that defines the prompt bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptParts {
    pub system: String,
    pub user: String,
    pub full: String,
}

fn render_transcript(blocks: &PromptBlocks, config: &PromptConfig) -> String {
    let mut pairs: Vec<String> = blocks
        .history
        .iter()
        .map(|p| format!("Action: {}\nObs: {}", p.action, p.observation))
        .collect();
    if let Some(last) = &blocks.last_action {
        pairs.push(format!("Action: {last}\nObs: {}", blocks.observation));
    }
    let mut used: usize = blocks.initial_observation.chars().count()
        + pairs.iter().map(|p| p.chars().count() + 2).sum::<usize>();
    let mut start = 0;
    while start < pairs.len().saturating_sub(1) && used > config.history_char_budget {
        used -= pairs[start].chars().count() + 2;
        start += 1;
    }
    let mut out = blocks.initial_observation.clone();
    for pair in &pairs[start..] {
        out.push_str("\n\n");
        out.push_str(pair);
    }
    out
}

/// Concatenate the blocks into the final prompt. Sections are joined by
/// blank lines; deleting the four knowledge blocks yields the baseline
/// prompt byte-for-byte.
pub fn build_prompt(blocks: &PromptBlocks, config: &PromptConfig) -> PromptParts {
    let system = blocks.system_instruction.trim_end().to_string();
    let mut sections: Vec<&str> = Vec::new();
    let icl = blocks.icl_example.trim_end();
    if !icl.is_empty() {
        sections.push(icl);
    }
    for block in [
        &blocks.belief_block,
        &blocks.goal_block,
        &blocks.rules_block,
        &blocks.memory_block,
    ]
    .into_iter()
    .flatten()
    {
        sections.push(block.as_str());
    }
    let transcript = render_transcript(blocks, config);
    sections.push(&transcript);
    let user = sections.join("\n\n");
    let full = format!("{system}\n\n{user}");
    PromptParts { system, user, full }
}

/// Deterministic token estimate: ceil(chars / 4). No tokenizer dependency.
pub fn estimate_tokens(text: &str) -> u32 {
    (text.chars().count() as u32).div_ceil(4)
}

/// Token estimate for the injected knowledge blocks only.
pub fn injected_tokens(blocks: &PromptBlocks) -> u32 {
    [
        &blocks.belief_block,
        &blocks.goal_block,
        &blocks.rules_block,
        &blocks.memory_block,
    ]
    .into_iter()
    .flatten()
    .map(|b| estimate_tokens(b))
    .sum()
}

// ---------------------------------------------------------------------
// Block renderers
// ---------------------------------------------------------------------

pub fn render_belief_block(belief: &BeliefState, _profile: &EnvironmentProfile) -> String {
    let mut out = format!(
        "{STATE_HEADER}\n  Holding: {}",
        belief.hand.as_deref().unwrap_or("nothing")
    );
    if let Some(location) = &belief.location {
        out.push_str(&format!("\n  Location: {location}"));
    }
    if !belief.container_states.is_empty() {
        let states: Vec<String> = belief
            .container_states
            .iter()
            .map(|(name, state)| {
                let s = match state {
                    crate::belief::ContainerState::Open => "open",
                    crate::belief::ContainerState::Closed => "closed",
                    crate::belief::ContainerState::Unknown => "unknown",
                };
                format!("{name}: {s}")
            })
            .collect();
        out.push_str(&format!("\n  Containers: {}", states.join(", ")));
    }
    if !belief.object_sightings.is_empty() {
        let seen: Vec<String> = belief
            .object_sightings
            .iter()
            .take(12)
            .map(|(obj, recep)| format!("{obj} at {recep}"))
            .collect();
        out.push_str(&format!("\n  Seen: {}", seen.join("; ")));
    }
    out
}

pub fn render_science_belief_block(belief: &ScienceBeliefState) -> String {
    let carrying = if belief.inventory.is_empty() {
        "nothing".to_string()
    } else {
        belief.inventory.iter().cloned().collect::<Vec<_>>().join(", ")
    };
    format!(
        "{STATE_HEADER}\n  Room: {}  Carrying: {}  Progress: step {}",
        belief.room.as_deref().unwrap_or("unknown"),
        carrying,
        belief.progress_pointer
    )
}

/// Stage of the household task, estimated from belief plus whether a
/// transformation success has been observed (belief deliberately does not
/// track transformation outcomes).
pub fn household_stage(
    goal: &GoalSignature,
    belief: &BeliefState,
    transform_seen: bool,
) -> (String, u32) {
    let holding_target = match (&belief.hand, &goal.object) {
        (Some(hand), Some(obj)) => crate::profile::object_class(hand) == obj,
        _ => false,
    };
    let is_transformation = goal.modifier.is_some();
    let object = goal.object.as_deref().unwrap_or("target");
    if is_transformation {
        if holding_target && transform_seen {
            (format!("place_object - {object}"), 67)
        } else if holding_target {
            (format!("transform_object - {object}"), 33)
        } else {
            (format!("find_object - {object}"), 0)
        }
    } else if holding_target {
        (format!("place_object - {object}"), 50)
    } else {
        (format!("find_object - {object}"), 0)
    }
}

pub fn render_goal_block(goal: &GoalSignature, stage: &str, progress_pct: u32) -> String {
    format!(
        "{GOAL_HEADER}\n  Goal: {}\n  Type: {}\n  Current sub-goal: {}\n  Progress: {}%",
        goal.raw_text, goal.task_type, stage, progress_pct
    )
}

/// Science objective line, derived from the family's per-step objective
/// templates and the current progress pointer.
pub fn render_science_goal_block(
    goal: &GoalSignature,
    belief: &ScienceBeliefState,
    profile: &EnvironmentProfile,
) -> String {
    let objective = profile
        .family(&goal.task_type)
        .and_then(|fam| {
            let idx = (belief.progress_pointer as usize).min(fam.objectives.len().saturating_sub(1));
            fam.objectives.get(idx).cloned()
        })
        .unwrap_or_else(|| "complete the task".to_string());
    let objective = objective
        .replace("{object}", goal.object.as_deref().unwrap_or("the target"))
        .replace("{modifier}", goal.modifier.as_deref().unwrap_or("transform"));
    format!("{OBJECTIVE_HEADER} {objective}")
}

fn render_household_rules(active: &ActiveRuleSet, belief: &BeliefState) -> String {
    let mut out = String::from(RULES_HEADER);
    out.push_str("\n=== Universal Principles ===");
    for rule in active.tier(Tier::Universal) {
        out.push_str(&format!("\n  [{}] {}", rule.id, rule.display_text()));
    }
    out.push_str("\n=== Domain Knowledge ===");
    for rule in active.tier(Tier::Domain).filter(|r| !r.task_specific) {
        out.push_str(&format!("\n  [{}] {}", rule.id, rule.display_text()));
    }
    out.push_str("\n=== Environment-Specific ===");
    for rule in active.tier(Tier::Environment) {
        let action = rule.action.as_deref().unwrap_or("?").to_uppercase();
        out.push_str(&format!("\n  {action}:"));
        if let Some(syntax) = &rule.syntax {
            out.push_str(&format!("\n    Syntax: {syntax}"));
        }
        if !rule.preconditions.is_empty() {
            out.push_str(&format!("\n    Preconditions: {}", rule.preconditions.join(", ")));
        }
        if !rule.effects.is_empty() {
            out.push_str(&format!("\n    Effects: {}", rule.effects.join(", ")));
        }
        if let Some(critical) = &rule.critical_note {
            out.push_str(&format!("\n    CRITICAL: {critical}"));
        }
    }
    out.push_str(&format!("\n\n{TASK_RULES_HEADER}"));
    match &belief.hand {
        None => out.push_str("\n  - S-002: Hands empty - can pick up an object"),
        Some(obj) => out.push_str(&format!(
            "\n  - S-001: Holding {obj} - complete the current placement before taking another object"
        )),
    }
    for rule in active.tier(Tier::Domain).filter(|r| r.task_specific) {
        out.push_str(&format!("\n  - {}: {}", rule.id, rule.display_text()));
    }
    out
}

fn render_science_rules(active: &ActiveRuleSet, profile: &EnvironmentProfile) -> String {
    let mut out = String::from("[RULES - Tier 1: Universal Principles]");
    for rule in active.tier(Tier::Universal) {
        out.push_str(&format!("\n  {}: {}", rule.id, rule.display_text()));
    }
    let family_display = profile
        .family(&active.goal_type)
        .map(|f| f.display())
        .unwrap_or_else(|| active.goal_type.clone());
    out.push_str(&format!("\n\n[RULES - Tier 2: Domain ({family_display})]"));
    if let Some(family) = profile.family(&active.goal_type) {
        if !family.procedure.is_empty() {
            out.push_str("\n  Canonical procedure:");
            for (i, step) in family.procedure.iter().enumerate() {
                out.push_str(&format!("\n    {}. {}", i + 1, step));
            }
        }
    }
    for rule in active.tier(Tier::Domain) {
        if rule.category == "warning" {
            out.push_str(&format!("\n  WARNING: {}", rule.display_text()));
        } else {
            out.push_str(&format!("\n  {}: {}", rule.id, rule.display_text()));
        }
    }
    out.push_str(&format!(
        "\n\n[RULES - Tier 3: Environment ({})]",
        profile.display_name()
    ));
    for rule in active.tier(Tier::Environment) {
        if rule.syntax.is_none() && rule.critical_note.is_none() {
            out.push_str(&format!("\n  {}: {}", rule.id, rule.display_text()));
        } else {
            let action = rule.action.as_deref().unwrap_or("?");
            out.push_str(&format!("\n  {} ({action}):", rule.id));
            if let Some(syntax) = &rule.syntax {
                out.push_str(&format!("\n    Syntax: {syntax}"));
            }
            if let Some(critical) = &rule.critical_note {
                out.push_str(&format!("\n    CRITICAL: {critical}"));
            }
        }
    }
    out
}

pub fn render_rules_block(
    active: &ActiveRuleSet,
    belief: &BeliefState,
    profile: &EnvironmentProfile,
) -> String {
    match profile.style() {
        PromptStyle::Household => render_household_rules(active, belief),
        PromptStyle::Science => render_science_rules(active, profile),
    }
}

fn goal_type_of(entry: &MemoryEntry) -> String {
    entry
        .goal_signature()
        .map(|sig| GoalSignature::parse_recorded(sig).task_type)
        .unwrap_or_else(|| "any".to_string())
}

/// Render arbitrated memory into the past-experience block. Successes come
/// first, then verified schemas, then failure lessons; dropped entries never
/// render. An empty result set states that no entries matched.
pub fn render_memory_block(entries: &[ArbitratedEntry]) -> String {
    let mut out = String::from(MEMORY_HEADER);
    let kept: Vec<&ArbitratedEntry> = entries.iter().filter(|e| e.is_kept()).collect();
    if kept.is_empty() {
        out.push_str("\n  (no matching entries found)");
        return out;
    }
    let warning_line = |entry: &ArbitratedEntry, out: &mut String| {
        if entry.disposition == Disposition::KeptWithWarning {
            if let Some(text) = &entry.warning_text {
                out.push_str(&format!("\n    Warning: {text}"));
            }
        }
    };
    for arb in kept.iter().filter(|e| matches!(e.result.entry, MemoryEntry::Success(_))) {
        if let MemoryEntry::Success(s) = &arb.result.entry {
            out.push_str(&format!(
                "\n  OK: {}: {}",
                goal_type_of(&arb.result.entry),
                s.actions.join(" -> ")
            ));
            warning_line(arb, &mut out);
        }
    }
    for arb in kept.iter().filter(|e| matches!(e.result.entry, MemoryEntry::Schema(_))) {
        if let MemoryEntry::Schema(s) = &arb.result.entry {
            out.push_str(&format!(
                "\n  VERIFIED: {} - {} (confidence {:.1})",
                s.action_template,
                s.effects.join(", "),
                s.confidence
            ));
            warning_line(arb, &mut out);
        }
    }
    for arb in kept.iter() {
        match &arb.result.entry {
            MemoryEntry::Failure(f) => {
                out.push_str(&format!("\n  AVOID: {}", f.failed_action));
                out.push_str(&format!("\n    Rule: {}", f.corrective_rule));
                warning_line(arb, &mut out);
            }
            MemoryEntry::CriticalFailure(c) => {
                out.push_str(&format!("\n  AVOID [CRITICAL]: {}", c.failed_action));
                out.push_str(&format!("\n    Rule: {}", c.corrective_rule));
                warning_line(arb, &mut out);
            }
            _ => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_blocks() -> PromptBlocks {
        PromptBlocks {
            system_instruction: "SYS".into(),
            icl_example: "ICL".into(),
            initial_observation: "You are in the middle of a room.\nYour task is to: test.".into(),
            observation: "You are in the middle of a room.\nYour task is to: test.".into(),
            ..Default::default()
        }
    }

    #[test]
    fn baseline_is_a_byte_exact_subset() {
        let config = PromptConfig::default();
        let mut blocks = base_blocks();
        blocks.history = vec![HistoryPair {
            action: "go to fridge 1".into(),
            observation: "The fridge 1 is closed.".into(),
        }];
        blocks.last_action = Some("open fridge 1".into());
        blocks.observation = "You open the fridge 1.".into();
        let baseline = build_prompt(&blocks, &config);

        blocks.belief_block = Some(format!("{STATE_HEADER}\n  Holding: nothing"));
        blocks.goal_block = Some(format!("{GOAL_HEADER}\n  Goal: test"));
        blocks.rules_block = Some(format!("{RULES_HEADER}\n  [U-1] rule"));
        blocks.memory_block = Some(format!("{MEMORY_HEADER}\n  (no matching entries found)"));
        let full = build_prompt(&blocks, &config);

        let mut stripped = full.full.clone();
        for block in [
            blocks.belief_block.as_ref().unwrap(),
            blocks.goal_block.as_ref().unwrap(),
            blocks.rules_block.as_ref().unwrap(),
            blocks.memory_block.as_ref().unwrap(),
        ] {
            stripped = stripped.replace(&format!("{block}\n\n"), "");
        }
        assert_eq!(stripped, baseline.full);
        for header in KNOWLEDGE_HEADERS {
            assert!(!baseline.full.contains(header));
            assert!(full.full.contains(header));
        }
    }

    #[test]
    fn identical_inputs_build_identical_bytes() {
        let config = PromptConfig::default();
        let mut blocks = base_blocks();
        blocks.rules_block = Some("[RULES - CRITICAL, Always Follow]\n  [X] y".into());
        assert_eq!(build_prompt(&blocks, &config).full, build_prompt(&blocks, &config).full);
    }

    #[test]
    fn block_order_is_state_goal_rules_memory() {
        let config = PromptConfig::default();
        let mut blocks = base_blocks();
        blocks.belief_block = Some(STATE_HEADER.to_string());
        blocks.goal_block = Some(GOAL_HEADER.to_string());
        blocks.rules_block = Some(RULES_HEADER.to_string());
        blocks.memory_block = Some(MEMORY_HEADER.to_string());
        let full = build_prompt(&blocks, &config).full;
        let pos = |h: &str| full.find(h).expect(h);
        assert!(pos(STATE_HEADER) < pos(GOAL_HEADER));
        assert!(pos(GOAL_HEADER) < pos(RULES_HEADER));
        assert!(pos(RULES_HEADER) < pos(MEMORY_HEADER));
        // Shared scaffolding brackets the knowledge blocks.
        assert!(full.find("SYS").unwrap() < full.find("ICL").unwrap());
        assert!(full.find("ICL").unwrap() < pos(STATE_HEADER));
        assert!(pos(MEMORY_HEADER) < full.find("Your task is to: test.").unwrap());
    }

    #[test]
    fn token_estimate_is_ceil_chars_over_four() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcd"), 1);
        assert_eq!(estimate_tokens("abcde"), 2);
        let three_k_chars = "x".repeat(3100);
        assert_eq!(estimate_tokens(&three_k_chars), 775);
        let sw_chars = "y".repeat(2900);
        assert_eq!(estimate_tokens(&sw_chars), 725);
    }

    #[test]
    fn history_truncation_drops_oldest_pairs_first() {
        let config = PromptConfig { history_char_budget: 200 };
        let mut blocks = base_blocks();
        for i in 0..30 {
            blocks.history.push(HistoryPair {
                action: format!("go to cabinet {i}"),
                observation: "On the cabinet, you see nothing.".into(),
            });
        }
        blocks.last_action = Some("open cabinet 29".into());
        blocks.observation = "Nothing happens.".into();
        let parts = build_prompt(&blocks, &config);
        assert!(parts.full.contains(&blocks.initial_observation));
        assert!(!parts.full.contains("go to cabinet 0"));
        assert!(parts.full.contains("open cabinet 29"));
    }

    #[test]
    fn science_belief_block_matches_reference_layout() {
        let belief = ScienceBeliefState::new();
        assert_eq!(
            render_science_belief_block(&belief),
            "[Current State]\n  Room: unknown  Carrying: nothing  Progress: step 0"
        );
    }

    #[test]
    fn household_stage_tracks_goal_progress() {
        let p = EnvironmentProfile::household();
        let goal = crate::belief::parse_goal("put a hot apple in fridge.", &p);
        let mut belief = BeliefState::new();
        assert_eq!(household_stage(&goal, &belief, false), ("find_object - apple".into(), 0));
        belief.hand = Some("apple 1".into());
        assert_eq!(
            household_stage(&goal, &belief, false),
            ("transform_object - apple".into(), 33)
        );
        assert_eq!(household_stage(&goal, &belief, true), ("place_object - apple".into(), 67));
    }

    #[test]
    fn empty_memory_block_says_so() {
        let block = render_memory_block(&[]);
        assert!(block.starts_with(MEMORY_HEADER));
        assert!(block.contains("(no matching entries found)"));
    }
}
