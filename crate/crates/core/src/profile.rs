//! Declarative environment profiles.
//!
//! A profile describes everything the engine needs to know about a text
//! environment as data: the action grammar, receptacle vocabulary and
//! openable set, object categories, goal templates, and the ordered
//! observation pattern rules that drive deterministic belief updates.
//! Profiles are TOML documents; the two shipped profiles live under
//! `fixtures/` and are embedded via [`crate::fixtures`].

use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("profile is not valid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid regex in {context}: {source}")]
    Regex {
        context: String,
        #[source]
        source: regex::Error,
    },
    #[error("invalid profile: {0}")]
    Invalid(String),
}

/// How prompt blocks are laid out for this environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStyle {
    /// Bracketed household layout with `=== tier ===` rule sections.
    Household,
    /// Tiered `[RULES - Tier N: ...]` layout used by the science profile.
    Science,
}

/// A single belief-update effect, applied when an observation rule fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeliefEffect {
    /// Set location to the receptacle named by the last action.
    LocationFromAction,
    /// Hand now holds the object named by the last action.
    HandFromActionObject,
    ClearHand,
    /// Drop the acted-on object from the sightings map.
    RemoveSightingOfActionObject,
    /// Record the acted-on object as sighted at the action's receptacle.
    SightActionObjectAtActionReceptacle,
    /// Mark a container open; receptacle resolved from the `recep` capture,
    /// falling back to the action's receptacle.
    SetContainerOpen,
    SetContainerClosed,
    /// Record every object in the `list` capture as sighted at the resolved
    /// receptacle.
    SightListAtReceptacle,
    /// Seed container states to unknown for openable receptacles named in
    /// the `list` capture (initial room observation).
    RegisterOpenablesFromList,
    Noop,
}

/// A belief-update effect for the science profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScienceEffect {
    SetRoom,
    AddInventory,
    RemoveInventory,
    SetStateFlag,
    Noop,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ReceptacleDef {
    pub instances: u32,
    #[serde(default)]
    pub openable: bool,
}

#[derive(Debug, Clone, Deserialize)]
pub struct GoalTemplateDef {
    pub pattern: String,
    pub task_type: String,
    #[serde(default)]
    pub modifier: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ActionPatternDef {
    pub kind: String,
    pub pattern: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ObservationRuleDef {
    /// Restrict the rule to observations following this action verb.
    #[serde(default)]
    pub action: Option<String>,
    pub pattern: String,
    pub effects: Vec<BeliefEffect>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ScienceRuleDef {
    #[serde(default)]
    pub action_prefix: Option<String>,
    pub pattern: String,
    pub effects: Vec<ScienceEffect>,
}

/// One goal family for the science profile: canonical procedure steps,
/// per-step objective templates, and the observation markers that advance
/// the sub-goal progress pointer.
#[derive(Debug, Clone, Deserialize)]
pub struct FamilyDef {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub procedure: Vec<String>,
    #[serde(default)]
    pub objectives: Vec<String>,
    #[serde(default)]
    pub markers: Vec<String>,
}

impl FamilyDef {
    /// Display form used in rule-tier headers, e.g. `F3_transform_verify`.
    pub fn display(&self) -> String {
        format!("{}_{}", self.id, self.name)
    }
}

#[derive(Debug, Clone, Deserialize)]
struct ProfileDoc {
    id: String,
    #[serde(default)]
    display_name: Option<String>,
    style: PromptStyle,
    max_tokens: u32,
    failure_observation: String,
    #[serde(default)]
    task_types: Vec<String>,
    #[serde(default)]
    receptacles: BTreeMap<String, ReceptacleDef>,
    #[serde(default)]
    tools: BTreeMap<String, String>,
    #[serde(default)]
    modifiers: BTreeMap<String, String>,
    #[serde(default)]
    lamp_classes: Vec<String>,
    #[serde(default)]
    categories: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    instrument_classes: Vec<String>,
    #[serde(default)]
    goal_templates: Vec<GoalTemplateDef>,
    #[serde(default)]
    actions: Vec<ActionPatternDef>,
    #[serde(default)]
    observation_rules: Vec<ObservationRuleDef>,
    #[serde(default)]
    science_rules: Vec<ScienceRuleDef>,
    #[serde(default)]
    families: Vec<FamilyDef>,
}

pub struct GoalTemplate {
    pub regex: Regex,
    pub task_type: String,
    pub modifier: Option<String>,
}

pub struct ActionPattern {
    pub kind: String,
    pub regex: Regex,
}

pub struct ObservationRule {
    pub action: Option<String>,
    pub regex: Regex,
    pub effects: Vec<BeliefEffect>,
}

pub struct ScienceRule {
    pub action_prefix: Option<String>,
    pub regex: Regex,
    pub effects: Vec<ScienceEffect>,
}

/// A fully loaded environment profile with compiled patterns.
pub struct EnvironmentProfile {
    doc: ProfileDoc,
    goal_templates: Vec<GoalTemplate>,
    actions: Vec<ActionPattern>,
    observation_rules: Vec<ObservationRule>,
    science_rules: Vec<ScienceRule>,
    family_markers: BTreeMap<String, Vec<Regex>>,
}

fn compile(context: &str, pattern: &str) -> Result<Regex, ProfileError> {
    Regex::new(pattern).map_err(|source| ProfileError::Regex {
        context: context.to_string(),
        source,
    })
}

impl EnvironmentProfile {
    pub fn from_toml_str(text: &str) -> Result<Self, ProfileError> {
        let doc: ProfileDoc = toml::from_str(text)?;
        if doc.task_types.is_empty() {
            return Err(ProfileError::Invalid(format!(
                "profile {} declares no task types",
                doc.id
            )));
        }
        let goal_templates = doc
            .goal_templates
            .iter()
            .map(|t| {
                Ok(GoalTemplate {
                    regex: compile(&format!("goal template for {}", t.task_type), &t.pattern)?,
                    task_type: t.task_type.clone(),
                    modifier: t.modifier.clone(),
                })
            })
            .collect::<Result<Vec<_>, ProfileError>>()?;
        let actions = doc
            .actions
            .iter()
            .map(|a| {
                Ok(ActionPattern {
                    kind: a.kind.clone(),
                    regex: compile(&format!("action pattern {}", a.kind), &a.pattern)?,
                })
            })
            .collect::<Result<Vec<_>, ProfileError>>()?;
        let observation_rules = doc
            .observation_rules
            .iter()
            .enumerate()
            .map(|(i, r)| {
                Ok(ObservationRule {
                    action: r.action.clone(),
                    regex: compile(&format!("observation rule #{i}"), &r.pattern)?,
                    effects: r.effects.clone(),
                })
            })
            .collect::<Result<Vec<_>, ProfileError>>()?;
        let science_rules = doc
            .science_rules
            .iter()
            .enumerate()
            .map(|(i, r)| {
                Ok(ScienceRule {
                    action_prefix: r.action_prefix.clone(),
                    regex: compile(&format!("science rule #{i}"), &r.pattern)?,
                    effects: r.effects.clone(),
                })
            })
            .collect::<Result<Vec<_>, ProfileError>>()?;
        let mut family_markers = BTreeMap::new();
        for fam in &doc.families {
            let markers = fam
                .markers
                .iter()
                .map(|m| compile(&format!("family {} marker", fam.id), m))
                .collect::<Result<Vec<_>, ProfileError>>()?;
            family_markers.insert(fam.id.clone(), markers);
        }
        Ok(Self {
            doc,
            goal_templates,
            actions,
            observation_rules,
            science_rules,
            family_markers,
        })
    }

    /// The embedded household profile.
    pub fn household() -> Self {
        Self::from_toml_str(crate::fixtures::ALFWORLD_PROFILE)
            .expect("embedded household profile is valid")
    }

    /// The embedded science profile.
    pub fn science() -> Self {
        Self::from_toml_str(crate::fixtures::SCIENCEWORLD_PROFILE)
            .expect("embedded science profile is valid")
    }

    pub fn id(&self) -> &str {
        &self.doc.id
    }

    pub fn display_name(&self) -> &str {
        self.doc.display_name.as_deref().unwrap_or(&self.doc.id)
    }

    pub fn style(&self) -> PromptStyle {
        self.doc.style
    }

    pub fn max_tokens(&self) -> u32 {
        self.doc.max_tokens
    }

    /// The in-band failure feedback string, e.g. `Nothing happens.`.
    pub fn failure_observation(&self) -> &str {
        &self.doc.failure_observation
    }

    pub fn task_types(&self) -> &[String] {
        &self.doc.task_types
    }

    pub fn is_task_type(&self, name: &str) -> bool {
        self.doc.task_types.iter().any(|t| t == name)
    }

    pub fn receptacle_classes(&self) -> impl Iterator<Item = (&String, &ReceptacleDef)> {
        self.doc.receptacles.iter()
    }

    pub fn is_openable_class(&self, class: &str) -> bool {
        self.doc
            .receptacles
            .get(class)
            .map(|r| r.openable)
            .unwrap_or(false)
    }

    pub fn is_receptacle_class(&self, class: &str) -> bool {
        self.doc.receptacles.contains_key(class)
    }

    /// All declared receptacle instances, ordered class-ascending then
    /// instance-descending to match the room-listing convention.
    pub fn declared_instances(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (class, def) in &self.doc.receptacles {
            for i in (1..=def.instances).rev() {
                out.push(format!("{class} {i}"));
            }
        }
        out
    }

    /// Tool receptacle class for a transformation verb (`heat` -> `microwave`).
    pub fn tool_class(&self, verb: &str) -> Option<&str> {
        self.doc.tools.get(verb).map(String::as_str)
    }

    pub fn transformation_verbs(&self) -> impl Iterator<Item = &String> {
        self.doc.tools.keys()
    }

    /// Goal modifier produced by a transformation verb (`heat` -> `hot`).
    pub fn modifier_for_verb(&self, verb: &str) -> Option<&str> {
        self.doc.modifiers.get(verb).map(String::as_str)
    }

    /// Transformation verb implied by a goal modifier (`hot` -> `heat`).
    pub fn verb_for_modifier(&self, modifier: &str) -> Option<&str> {
        self.doc
            .modifiers
            .iter()
            .find(|(_, m)| m.as_str() == modifier)
            .map(|(v, _)| v.as_str())
    }

    pub fn is_lamp_class(&self, class: &str) -> bool {
        self.doc.lamp_classes.iter().any(|c| c == class)
    }

    /// Category name an object class belongs to, if any.
    pub fn category_of(&self, class: &str) -> Option<&str> {
        self.doc
            .categories
            .iter()
            .find(|(_, members)| members.iter().any(|m| m == class))
            .map(|(cat, _)| cat.as_str())
    }

    pub fn same_category(&self, a: &str, b: &str) -> bool {
        match (self.category_of(a), self.category_of(b)) {
            (Some(ca), Some(cb)) => ca == cb,
            _ => false,
        }
    }

    pub fn is_instrument_class(&self, class: &str) -> bool {
        self.doc.instrument_classes.iter().any(|c| c == class)
    }

    pub fn goal_templates(&self) -> &[GoalTemplate] {
        &self.goal_templates
    }

    pub fn action_patterns(&self) -> &[ActionPattern] {
        &self.actions
    }

    pub fn observation_rules(&self) -> &[ObservationRule] {
        &self.observation_rules
    }

    pub fn science_rules(&self) -> &[ScienceRule] {
        &self.science_rules
    }

    pub fn families(&self) -> &[FamilyDef] {
        &self.doc.families
    }

    pub fn family(&self, id: &str) -> Option<&FamilyDef> {
        self.doc.families.iter().find(|f| f.id == id)
    }

    pub fn family_markers(&self, id: &str) -> &[Regex] {
        self.family_markers
            .get(id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// Strip a trailing instance number: `apple 1` -> `apple`.
pub fn object_class(name: &str) -> &str {
    match name.rfind(' ') {
        Some(idx) if name[idx + 1..].chars().all(|c| c.is_ascii_digit()) => &name[..idx],
        _ => name,
    }
}

/// Parse a comma-separated object listing as it appears in observations,
/// e.g. `a apple 2, a apple 1, and a mug 3` or `apple 2, apple 1`.
/// Returns an empty list for `nothing`.
pub fn parse_listing(text: &str) -> Vec<String> {
    let trimmed = text.trim().trim_end_matches('.');
    if trimmed.is_empty() || trimmed == "nothing" {
        return Vec::new();
    }
    trimmed
        .split(", ")
        .flat_map(|part| part.split(" and "))
        .map(|part| {
            let p = part.trim();
            let p = p.strip_prefix("and ").unwrap_or(p);
            let p = p.strip_prefix("a ").or_else(|| p.strip_prefix("an ")).unwrap_or(p);
            p.to_string()
        })
        .filter(|p| !p.is_empty() && p != "nothing")
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn object_class_strips_instance_numbers() {
        assert_eq!(object_class("apple 1"), "apple");
        assert_eq!(object_class("countertop 12"), "countertop");
        assert_eq!(object_class("apple"), "apple");
        assert_eq!(object_class("metal pot"), "metal pot");
    }

    #[test]
    fn listing_parser_handles_articles_and_conjunction() {
        assert_eq!(
            parse_listing("a apple 2, a apple 1, and a mug 3"),
            vec!["apple 2", "apple 1", "mug 3"]
        );
        assert_eq!(parse_listing("apple 2, apple 1"), vec!["apple 2", "apple 1"]);
        assert_eq!(parse_listing("nothing"), Vec::<String>::new());
        assert_eq!(parse_listing("a mug 1"), vec!["mug 1"]);
    }

    #[test]
    fn household_profile_loads() {
        let p = EnvironmentProfile::household();
        assert_eq!(p.id(), "alfworld");
        assert!(p.is_openable_class("fridge"));
        assert!(!p.is_openable_class("countertop"));
        assert_eq!(p.tool_class("heat"), Some("microwave"));
        assert_eq!(p.max_tokens(), 256);
    }

    #[test]
    fn science_profile_loads() {
        let p = EnvironmentProfile::science();
        assert_eq!(p.id(), "scienceworld");
        assert_eq!(p.max_tokens(), 512);
        let f3 = p.family("F3").expect("F3 family");
        assert_eq!(f3.display(), "F3_transform_verify");
        assert!(!p.family_markers("F3").is_empty());
    }
}
