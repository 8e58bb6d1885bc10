//! The three-tier rule manual: loading, validation, activation, and
//! violation checking.
//!
//! Universal rules apply everywhere; domain rules are indexed by goal type
//! so only the relevant subset is activated; environment rules encode
//! per-action precondition/effect semantics. Critical notes that forbid
//! actions are compiled into declarative forbidden-action templates so the
//! hard arbitration layer stays deterministic and testable.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::ParsedAction;
use crate::belief::{check_preconditions, BeliefState};
use crate::profile::{object_class, EnvironmentProfile};

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("manual is not valid YAML: {0}")]
    Yaml(#[from] serde_yaml::Error),
    #[error("duplicate rule id {0}")]
    DuplicateId(String),
    #[error("rule {id}: missing required field {field}")]
    MissingField { id: String, field: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Universal,
    Domain,
    Environment,
}

/// A forbidden-action template compiled from a rule's critical note:
/// `verb` applied to any instance of `receptacle_class` is a violation
/// while one of `goal_types` is active.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForbiddenTemplate {
    pub verb: String,
    pub receptacle_class: String,
    pub goal_types: BTreeSet<String>,
}

impl ForbiddenTemplate {
    pub fn matches(&self, action: &ParsedAction, goal_type: &str) -> bool {
        if !self.goal_types.contains(goal_type) {
            return false;
        }
        action.verb() == self.verb
            && action
                .receptacle()
                .map(|r| object_class(r) == self.receptacle_class)
                .unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub id: String,
    #[serde(skip)]
    pub tier: Tier,
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    /// Prompt wording, when it differs from the manual's canonical text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_text: Option<String>,
    /// Domain tier: task types this rule applies to; absent means all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_types: Option<BTreeSet<String>>,
    /// Environment tier: the action this rule grounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub syntax: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub preconditions: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub effects: Vec<String>,
    #[serde(default, rename = "critical", skip_serializing_if = "Option::is_none")]
    pub critical_note: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub forbidden: Vec<ForbiddenTemplate>,
    /// Rendered under the task-specific section instead of the domain tier.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub task_specific: bool,
    /// Participates in soft arbitration: memory entries referencing this
    /// rule's action are annotated with the critical note.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub soft_warning: bool,
}

impl Default for Tier {
    fn default() -> Self {
        Tier::Universal
    }
}

impl Rule {
    /// Text used when rendering into a prompt.
    pub fn display_text(&self) -> &str {
        self.prompt_text
            .as_deref()
            .or(self.text.as_deref())
            .unwrap_or("")
    }

    /// Domain-tier applicability; rules without a goal_types list apply to
    /// every type, and the unknown type activates all domain rules.
    pub fn applies_to(&self, goal_type: &str) -> bool {
        if goal_type == "unknown" {
            return true;
        }
        match &self.goal_types {
            Some(types) => types.contains(goal_type),
            None => true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
struct ManualDoc {
    profile: String,
    #[serde(default)]
    universal: Vec<Rule>,
    #[serde(default)]
    domain: Vec<Rule>,
    #[serde(default)]
    environment: Vec<Rule>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleManual {
    #[serde(rename = "profile")]
    pub profile_id: String,
    pub universal: Vec<Rule>,
    pub domain: Vec<Rule>,
    pub environment: Vec<Rule>,
}

impl RuleManual {
    pub fn iter(&self) -> impl Iterator<Item = &Rule> {
        self.universal
            .iter()
            .chain(self.domain.iter())
            .chain(self.environment.iter())
    }

    /// The embedded household manual.
    pub fn household() -> Self {
        load_manual(crate::fixtures::ALFWORLD_MANUAL).expect("embedded household manual is valid")
    }

    /// The embedded science manual.
    pub fn science() -> Self {
        load_manual(crate::fixtures::SCIENCEWORLD_MANUAL).expect("embedded science manual is valid")
    }
}

/// Load and validate a tiered manual from its YAML form.
pub fn load_manual(document: &str) -> Result<RuleManual, RuleError> {
    let doc: ManualDoc = serde_yaml::from_str(document)?;
    let mut manual = RuleManual {
        profile_id: doc.profile,
        universal: doc.universal,
        domain: doc.domain,
        environment: doc.environment,
    };
    for rule in &mut manual.universal {
        rule.tier = Tier::Universal;
    }
    for rule in &mut manual.domain {
        rule.tier = Tier::Domain;
    }
    for rule in &mut manual.environment {
        rule.tier = Tier::Environment;
        if rule.action.is_none() {
            return Err(RuleError::MissingField { id: rule.id.clone(), field: "action" });
        }
    }
    let mut seen = BTreeSet::new();
    for rule in manual.iter() {
        if rule.text.is_none() && rule.critical_note.is_none() && rule.syntax.is_none() {
            return Err(RuleError::MissingField { id: rule.id.clone(), field: "text" });
        }
        if !seen.insert(rule.id.clone()) {
            return Err(RuleError::DuplicateId(rule.id.clone()));
        }
    }
    Ok(manual)
}

/// The rules active for one goal type: the universal and environment tiers
/// unconditionally, plus the matching domain subset, in manual file order.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveRuleSet {
    pub goal_type: String,
    pub rules: Vec<Rule>,
}

impl ActiveRuleSet {
    pub fn empty(goal_type: &str) -> Self {
        Self { goal_type: goal_type.to_string(), rules: Vec::new() }
    }

    pub fn tier(&self, tier: Tier) -> impl Iterator<Item = &Rule> {
        self.rules.iter().filter(move |r| r.tier == tier)
    }

    /// Forbidden templates armed for this rule set's goal type, paired with
    /// their owning rule.
    pub fn armed_forbidden(&self) -> impl Iterator<Item = (&Rule, &ForbiddenTemplate)> {
        let goal_type = self.goal_type.clone();
        self.tier(Tier::Environment).flat_map(move |rule| {
            let gt = goal_type.clone();
            rule.forbidden
                .iter()
                .filter(move |t| t.goal_types.contains(&gt))
                .map(move |t| (rule, t))
        })
    }

    pub fn environment_rule_for_verb(&self, verb: &str) -> Option<&Rule> {
        self.tier(Tier::Environment).find(|r| r.action.as_deref() == Some(verb))
    }

    /// Environment rules participating in soft arbitration.
    pub fn soft_warning_rules(&self) -> impl Iterator<Item = &Rule> {
        self.tier(Tier::Environment)
            .filter(|r| r.soft_warning && r.critical_note.is_some())
    }
}

/// Assemble the active set for a goal type. Pure: identical inputs yield an
/// identical set.
pub fn active_rules(manual: &RuleManual, goal_type: &str) -> ActiveRuleSet {
    let mut rules = Vec::new();
    rules.extend(manual.universal.iter().cloned());
    rules.extend(manual.domain.iter().filter(|r| r.applies_to(goal_type)).cloned());
    rules.extend(manual.environment.iter().cloned());
    ActiveRuleSet { goal_type: goal_type.to_string(), rules }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule_id: String,
    pub reason: String,
}

/// Check one action against the active rules under the current belief.
///
/// Returns the first armed forbidden-action template the action matches, or
/// the first environment-tier rule whose preconditions fail under belief
/// (unknown fields pass with a warning and never count as failures).
pub fn check_violation(
    rules: &ActiveRuleSet,
    action: &ParsedAction,
    b: &BeliefState,
    profile: &EnvironmentProfile,
) -> Option<Violation> {
    for (rule, template) in rules.armed_forbidden() {
        if template.matches(action, &rules.goal_type) {
            return Some(Violation {
                rule_id: rule.id.clone(),
                reason: rule
                    .critical_note
                    .clone()
                    .unwrap_or_else(|| format!("forbidden: {} on {}", template.verb, template.receptacle_class)),
            });
        }
    }
    if let Some(rule) = rules.environment_rule_for_verb(action.verb()) {
        let report = check_preconditions(action, b, profile);
        if !report.satisfied {
            return Some(Violation {
                rule_id: rule.id.clone(),
                reason: rule.critical_note.clone().unwrap_or_else(|| {
                    format!("preconditions not met: {}", report.violated_conditions.join(", "))
                }),
            });
        }
    }
    None
}
