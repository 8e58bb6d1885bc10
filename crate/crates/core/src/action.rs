//! Parsed agent actions.
//!
//! The action grammar is declared in the environment profile as a list of
//! named regex patterns; parsing maps raw action text onto the closed
//! [`ParsedAction`] shape used by precondition checking, the simulator, and
//! rule-violation matching.

use serde::{Deserialize, Serialize};

use crate::profile::EnvironmentProfile;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParsedAction {
    Goto { receptacle: String },
    Take { object: String, receptacle: String },
    Put { object: String, receptacle: String },
    Open { receptacle: String },
    Close { receptacle: String },
    Heat { object: String, tool: String },
    Cool { object: String, tool: String },
    Clean { object: String, tool: String },
    Use { object: String },
}

impl ParsedAction {
    pub fn verb(&self) -> &'static str {
        match self {
            Self::Goto { .. } => "goto",
            Self::Take { .. } => "take",
            Self::Put { .. } => "put",
            Self::Open { .. } => "open",
            Self::Close { .. } => "close",
            Self::Heat { .. } => "heat",
            Self::Cool { .. } => "cool",
            Self::Clean { .. } => "clean",
            Self::Use { .. } => "use",
        }
    }

    /// The receptacle argument, when the action has one.
    pub fn receptacle(&self) -> Option<&str> {
        match self {
            Self::Goto { receptacle }
            | Self::Take { receptacle, .. }
            | Self::Put { receptacle, .. }
            | Self::Open { receptacle }
            | Self::Close { receptacle } => Some(receptacle),
            Self::Heat { tool, .. } | Self::Cool { tool, .. } | Self::Clean { tool, .. } => {
                Some(tool)
            }
            Self::Use { .. } => None,
        }
    }

    pub fn object(&self) -> Option<&str> {
        match self {
            Self::Take { object, .. }
            | Self::Put { object, .. }
            | Self::Heat { object, .. }
            | Self::Cool { object, .. }
            | Self::Clean { object, .. }
            | Self::Use { object } => Some(object),
            _ => None,
        }
    }

    pub fn is_transformation(&self) -> bool {
        matches!(self, Self::Heat { .. } | Self::Cool { .. } | Self::Clean { .. })
    }

    /// Canonical textual form, the inverse of [`parse_action`].
    pub fn to_text(&self) -> String {
        match self {
            Self::Goto { receptacle } => format!("go to {receptacle}"),
            Self::Take { object, receptacle } => format!("take {object} from {receptacle}"),
            Self::Put { object, receptacle } => format!("put {object} in/on {receptacle}"),
            Self::Open { receptacle } => format!("open {receptacle}"),
            Self::Close { receptacle } => format!("close {receptacle}"),
            Self::Heat { object, tool } => format!("heat {object} with {tool}"),
            Self::Cool { object, tool } => format!("cool {object} with {tool}"),
            Self::Clean { object, tool } => format!("clean {object} with {tool}"),
            Self::Use { object } => format!("use {object}"),
        }
    }
}

/// Parse action text against the profile's grammar. Returns `None` for text
/// matching no declared pattern.
pub fn parse_action(profile: &EnvironmentProfile, text: &str) -> Option<ParsedAction> {
    let text = text.trim();
    for pat in profile.action_patterns() {
        if let Some(caps) = pat.regex.captures(text) {
            let get = |name: &str| caps.name(name).map(|m| m.as_str().trim().to_string());
            let action = match pat.kind.as_str() {
                "goto" => ParsedAction::Goto { receptacle: get("recep")? },
                "take" => ParsedAction::Take { object: get("obj")?, receptacle: get("recep")? },
                "put" => ParsedAction::Put { object: get("obj")?, receptacle: get("recep")? },
                "open" => ParsedAction::Open { receptacle: get("recep")? },
                "close" => ParsedAction::Close { receptacle: get("recep")? },
                "heat" => ParsedAction::Heat { object: get("obj")?, tool: get("recep")? },
                "cool" => ParsedAction::Cool { object: get("obj")?, tool: get("recep")? },
                "clean" => ParsedAction::Clean { object: get("obj")?, tool: get("recep")? },
                "use" => ParsedAction::Use { object: get("obj")? },
                _ => continue,
            };
            return Some(action);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile() -> EnvironmentProfile {
        EnvironmentProfile::household()
    }

    #[test]
    fn parses_the_full_grammar() {
        let p = profile();
        assert_eq!(
            parse_action(&p, "go to countertop 1"),
            Some(ParsedAction::Goto { receptacle: "countertop 1".into() })
        );
        assert_eq!(
            parse_action(&p, "take apple 1 from countertop 1"),
            Some(ParsedAction::Take {
                object: "apple 1".into(),
                receptacle: "countertop 1".into()
            })
        );
        assert_eq!(
            parse_action(&p, "put apple 1 in/on fridge 1"),
            Some(ParsedAction::Put { object: "apple 1".into(), receptacle: "fridge 1".into() })
        );
        assert_eq!(
            parse_action(&p, "heat apple 1 with microwave 1"),
            Some(ParsedAction::Heat { object: "apple 1".into(), tool: "microwave 1".into() })
        );
        assert_eq!(
            parse_action(&p, "use desklamp 1"),
            Some(ParsedAction::Use { object: "desklamp 1".into() })
        );
        assert_eq!(
            parse_action(&p, "toggle desklamp 1"),
            Some(ParsedAction::Use { object: "desklamp 1".into() })
        );
        assert_eq!(parse_action(&p, "dance wildly"), None);
    }

    #[test]
    fn to_text_round_trips() {
        let p = profile();
        for text in [
            "go to fridge 1",
            "take mug 2 from cabinet 3",
            "put mug 2 in/on shelf 1",
            "open drawer 2",
            "close drawer 2",
            "cool lettuce 1 with fridge 1",
            "clean plate 1 with sinkbasin 1",
            "use desklamp 1",
        ] {
            let parsed = parse_action(&p, text).expect(text);
            assert_eq!(parsed.to_text(), text);
        }
    }
}
