//! Rules-first arbitration between retrieved memory and active rules.
//!
//! Two layers. The hard layer removes entries whose suggested actions
//! directly violate a rule: any payload action matching an armed
//! forbidden-action template, or a snippet whose first recommended action
//! already fails rule preconditions under the current belief (later actions
//! in a sequence establish their own preconditions and are only screened
//! against forbidden templates). The soft layer annotates surviving entries
//! that reference a transformation action carrying a critical note,
//! delegating the final judgment downstream. Rule constraints always win
//! over recalled experience; arbitration never edits an entry's actions.

use serde::{Deserialize, Serialize};

use crate::action::parse_action;
use crate::belief::BeliefState;
use crate::memory::{MemoryEntry, RetrievalResult};
use crate::profile::EnvironmentProfile;
use crate::rules::{check_violation, ActiveRuleSet, Rule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArbitrationMode {
    None,
    SoftOnly,
    HardOnly,
    HardAndSoft,
}

impl ArbitrationMode {
    pub fn label(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::SoftOnly => "soft",
            Self::HardOnly => "hard",
            Self::HardAndSoft => "both",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Self::None),
            "soft" | "soft_only" => Some(Self::SoftOnly),
            "hard" | "hard_only" => Some(Self::HardOnly),
            "both" | "hard_and_soft" => Some(Self::HardAndSoft),
            _ => None,
        }
    }

    fn hard_enabled(&self) -> bool {
        matches!(self, Self::HardOnly | Self::HardAndSoft)
    }

    fn soft_enabled(&self) -> bool {
        matches!(self, Self::SoftOnly | Self::HardAndSoft)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    Kept,
    KeptWithWarning,
    Dropped,
}

impl Disposition {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Kept => "kept",
            Self::KeptWithWarning => "kept_with_warning",
            Self::Dropped => "dropped",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArbitratedEntry {
    pub result: RetrievalResult,
    pub disposition: Disposition,
    pub warning_text: Option<String>,
    pub triggering_rule_id: Option<String>,
}

impl ArbitratedEntry {
    pub fn is_kept(&self) -> bool {
        self.disposition != Disposition::Dropped
    }
}

/// The actions an entry suggests, used for rule matching. A failure
/// lesson's suggested action is its corrective guidance, never the failed
/// action itself (which is a negative example).
fn payload_actions(entry: &MemoryEntry) -> Vec<String> {
    match entry {
        MemoryEntry::Success(s) => s.actions.clone(),
        MemoryEntry::Schema(s) => vec![s.action_template.replace("{object}", "object 1")],
        MemoryEntry::Failure(f) => vec![f.corrective_rule.clone()],
        MemoryEntry::CriticalFailure(c) => vec![c.corrective_rule.clone()],
    }
}

/// Action texts scanned for soft-warning references; here the failed action
/// itself counts, since a warning on a lesson reinforces it.
fn referenced_actions(entry: &MemoryEntry) -> Vec<String> {
    match entry {
        MemoryEntry::Success(s) => s.actions.clone(),
        MemoryEntry::Schema(s) => vec![s.action_template.clone()],
        MemoryEntry::Failure(f) => vec![f.failed_action.clone()],
        MemoryEntry::CriticalFailure(c) => vec![c.failed_action.clone()],
    }
}

fn references_rule_action(text: &str, rule: &Rule, profile: &EnvironmentProfile) -> bool {
    let Some(action_name) = rule.action.as_deref() else {
        return false;
    };
    if let Some(parsed) = parse_action(profile, text) {
        return parsed.verb() == action_name;
    }
    text.split(|c: char| !c.is_alphanumeric())
        .any(|token| token == action_name)
}

fn hard_violation(
    entry: &MemoryEntry,
    rules: &ActiveRuleSet,
    belief: &BeliefState,
    profile: &EnvironmentProfile,
) -> Option<String> {
    let actions = payload_actions(entry);
    for (i, text) in actions.iter().enumerate() {
        let Some(parsed) = parse_action(profile, text) else {
            continue;
        };
        for (rule, template) in rules.armed_forbidden() {
            if template.matches(&parsed, &rules.goal_type) {
                return Some(rule.id.clone());
            }
        }
        // Precondition screening applies only to the first action of a
        // snippet; the rest execute after earlier actions change the state.
        let first_snippet_action = i == 0 && matches!(entry, MemoryEntry::Success(_));
        if first_snippet_action {
            if let Some(violation) = check_violation(rules, &parsed, belief, profile) {
                return Some(violation.rule_id);
            }
        }
    }
    None
}

fn soft_warning(
    entry: &MemoryEntry,
    rules: &ActiveRuleSet,
    profile: &EnvironmentProfile,
) -> Option<(String, String)> {
    for text in referenced_actions(entry) {
        for rule in rules.soft_warning_rules() {
            if references_rule_action(&text, rule, profile) {
                if let Some(note) = &rule.critical_note {
                    return Some((rule.id.clone(), note.clone()));
                }
            }
        }
    }
    None
}

/// Apply the two-layer policy to SCF survivors. Every input entry appears
/// in the output with its disposition, so callers can log drops.
pub fn arbitrate(
    entries: &[RetrievalResult],
    rules: &ActiveRuleSet,
    belief: &BeliefState,
    mode: ArbitrationMode,
    profile: &EnvironmentProfile,
) -> Vec<ArbitratedEntry> {
    entries
        .iter()
        .map(|result| {
            if mode.hard_enabled() {
                if let Some(rule_id) = hard_violation(&result.entry, rules, belief, profile) {
                    return ArbitratedEntry {
                        result: result.clone(),
                        disposition: Disposition::Dropped,
                        warning_text: None,
                        triggering_rule_id: Some(rule_id),
                    };
                }
            }
            if mode.soft_enabled() {
                if let Some((rule_id, note)) = soft_warning(&result.entry, rules, profile) {
                    return ArbitratedEntry {
                        result: result.clone(),
                        disposition: Disposition::KeptWithWarning,
                        warning_text: Some(note),
                        triggering_rule_id: Some(rule_id),
                    };
                }
            }
            ArbitratedEntry {
                result: result.clone(),
                disposition: Disposition::Kept,
                warning_text: None,
                triggering_rule_id: None,
            }
        })
        .collect()
}
