//! Miniature closed-world household simulator.
//!
//! Precondition-checked actions over a ground-truth world state, sparse
//! in-band failure feedback (an invalid action returns exactly the
//! profile's failure string with no state change), transformation flags on
//! objects, and goal evaluation for the six household task types.
//!
//! Termination: reaching the goal ends the episode with reward 1. A wrong
//! placement does not terminate, with one deterministic exception that
//! reproduces environment-terminal failures: placing an instance of the
//! goal's target category into the garbagecan ends the episode with
//! reward 0.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::action::{parse_action, ParsedAction};
use crate::profile::{object_class, EnvironmentProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformFlag {
    Heated,
    Cooled,
    Cleaned,
}

impl TransformFlag {
    pub fn for_verb(verb: &str) -> Option<Self> {
        match verb {
            "heat" => Some(Self::Heated),
            "cool" => Some(Self::Cooled),
            "clean" => Some(Self::Cleaned),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    LookAtObjInLight,
    PickAndPlaceSimple,
    PickCleanThenPlaceInRecep,
    PickCoolThenPlaceInRecep,
    PickHeatThenPlaceInRecep,
    PickTwoObjAndPlace,
}

impl TaskType {
    pub const ALL: [TaskType; 6] = [
        TaskType::LookAtObjInLight,
        TaskType::PickAndPlaceSimple,
        TaskType::PickCleanThenPlaceInRecep,
        TaskType::PickCoolThenPlaceInRecep,
        TaskType::PickHeatThenPlaceInRecep,
        TaskType::PickTwoObjAndPlace,
    ];

    /// Goal-type identifier used in signatures and rule filtering.
    pub fn goal_type(&self) -> &'static str {
        match self {
            Self::LookAtObjInLight => "look_at_obj_in_light",
            Self::PickAndPlaceSimple => "pick_and_place_simple",
            Self::PickCleanThenPlaceInRecep => "pick_clean_then_place_in_recep",
            Self::PickCoolThenPlaceInRecep => "pick_cool_then_place_in_recep",
            Self::PickHeatThenPlaceInRecep => "pick_heat_then_place_in_recep",
            Self::PickTwoObjAndPlace => "pick_two_obj_and_place",
        }
    }

    /// Short column label used in reports.
    pub fn label(&self) -> &'static str {
        match self {
            Self::LookAtObjInLight => "Look",
            Self::PickAndPlaceSimple => "Place",
            Self::PickCleanThenPlaceInRecep => "Clean",
            Self::PickCoolThenPlaceInRecep => "Cool",
            Self::PickHeatThenPlaceInRecep => "Heat",
            Self::PickTwoObjAndPlace => "Two",
        }
    }

    /// Transformation verb required by the task, if any.
    pub fn transform_verb(&self) -> Option<&'static str> {
        match self {
            Self::PickCleanThenPlaceInRecep => Some("clean"),
            Self::PickCoolThenPlaceInRecep => Some("cool"),
            Self::PickHeatThenPlaceInRecep => Some("heat"),
            _ => None,
        }
    }

    pub fn from_goal_type(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|t| t.goal_type() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receptacle {
    pub class: String,
    pub openable: bool,
    pub open: bool,
}

/// Ground-truth world state: a strict superset of what belief tracks
/// (adds transformation flags and lamp-examination marks).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WorldState {
    pub receptacles: BTreeMap<String, Receptacle>,
    /// Object instance -> receptacle instance. Objects in the hand are
    /// absent from this map; every object is in exactly one place.
    pub placements: BTreeMap<String, String>,
    pub hand: Option<String>,
    pub transform_flags: BTreeMap<String, BTreeSet<TransformFlag>>,
    pub examined_under_lamp: BTreeSet<String>,
    /// `None` means the middle of the room (episode start).
    pub agent_location: Option<String>,
}

fn instance_number(name: &str) -> u32 {
    name.rsplit(' ')
        .next()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}

/// Listing order convention: class ascending, instance descending.
fn listing_sort(names: &mut [String]) {
    names.sort_by(|a, b| {
        object_class(a)
            .cmp(object_class(b))
            .then_with(|| instance_number(b).cmp(&instance_number(a)))
    });
}

fn render_listing(items: &[String]) -> String {
    if items.is_empty() {
        return "nothing".to_string();
    }
    let rendered: Vec<String> = items.iter().map(|i| format!("a {i}")).collect();
    if rendered.len() == 1 {
        rendered.into_iter().next().unwrap()
    } else {
        let (last, rest) = rendered.split_last().unwrap();
        format!("{}, and {}", rest.join(", "), last)
    }
}

impl WorldState {
    /// Objects currently placed at a receptacle, in listing order.
    pub fn contents_of(&self, receptacle: &str) -> Vec<String> {
        let mut items: Vec<String> = self
            .placements
            .iter()
            .filter(|(_, r)| r.as_str() == receptacle)
            .map(|(o, _)| o.clone())
            .collect();
        listing_sort(&mut items);
        items
    }

    /// Every object in the world, hand included.
    pub fn all_objects(&self) -> BTreeSet<String> {
        let mut objects: BTreeSet<String> = self.placements.keys().cloned().collect();
        if let Some(hand) = &self.hand {
            objects.insert(hand.clone());
        }
        objects
    }

    pub fn flags_of(&self, object: &str) -> BTreeSet<TransformFlag> {
        self.transform_flags.get(object).cloned().unwrap_or_default()
    }

    fn room_listing(&self) -> String {
        let mut names: Vec<String> = self.receptacles.keys().cloned().collect();
        listing_sort(&mut names);
        render_listing(&names)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub task_type: TaskType,
    /// Target object category (class name, not an instance).
    pub target_object: String,
    /// Destination receptacle class; for look tasks, the lamp class.
    pub destination: String,
    pub goal_text: String,
    pub initial_world: WorldState,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub observation: String,
    pub done: bool,
    pub reward: u8,
}

impl StepOutcome {
    fn continue_with(observation: String) -> Self {
        Self { observation, done: false, reward: 0 }
    }
}

/// The episode-opening observation: room listing plus the task line.
pub fn initial_observation(task: &TaskSpec) -> String {
    format!(
        "You are in the middle of a room. Looking quickly around you, you see {}.\nYour task is to: {}",
        task.initial_world.room_listing(),
        task.goal_text
    )
}

fn failure(profile: &EnvironmentProfile) -> StepOutcome {
    StepOutcome::continue_with(profile.failure_observation().to_string())
}

/// Goal predicate. Exactly the per-type conjunctions:
/// placement at the destination class, plus the matching transformation
/// flag for heat/cool/clean, two distinct instances for the multi-object
/// type, and a lamp examination mark for look tasks.
pub fn evaluate_goal(world: &WorldState, task: &TaskSpec) -> u8 {
    let at_destination = |obj: &str| {
        world
            .placements
            .get(obj)
            .and_then(|r| world.receptacles.get(r))
            .map(|r| r.class == task.destination)
            .unwrap_or(false)
    };
    let satisfied = match task.task_type {
        TaskType::PickAndPlaceSimple => world
            .placements
            .keys()
            .any(|o| object_class(o) == task.target_object && at_destination(o)),
        TaskType::PickHeatThenPlaceInRecep
        | TaskType::PickCoolThenPlaceInRecep
        | TaskType::PickCleanThenPlaceInRecep => {
            let flag = TransformFlag::for_verb(task.task_type.transform_verb().unwrap()).unwrap();
            world.placements.keys().any(|o| {
                object_class(o) == task.target_object
                    && at_destination(o)
                    && world.flags_of(o).contains(&flag)
            })
        }
        TaskType::PickTwoObjAndPlace => {
            world
                .placements
                .keys()
                .filter(|o| object_class(o) == task.target_object && at_destination(o))
                .count()
                >= 2
        }
        TaskType::LookAtObjInLight => world
            .examined_under_lamp
            .iter()
            .any(|o| object_class(o) == task.target_object),
    };
    u8::from(satisfied)
}

/// Apply one action. Any text is accepted; anything unparseable or with an
/// unsatisfied ground-truth precondition returns the in-band failure string
/// and leaves the world bitwise unchanged.
pub fn step(
    world: &WorldState,
    task: &TaskSpec,
    action_text: &str,
    profile: &EnvironmentProfile,
) -> (WorldState, StepOutcome) {
    let Some(action) = parse_action(profile, action_text) else {
        return (world.clone(), failure(profile));
    };
    let mut next = world.clone();

    let outcome = match &action {
        ParsedAction::Goto { receptacle } => {
            if !next.receptacles.contains_key(receptacle)
                || next.agent_location.as_deref() == Some(receptacle)
            {
                return (world.clone(), failure(profile));
            }
            next.agent_location = Some(receptacle.clone());
            let recep = &next.receptacles[receptacle];
            let observation = if recep.openable && !recep.open {
                format!("The {receptacle} is closed.")
            } else if recep.openable {
                format!(
                    "The {receptacle} is open. In it, you see {}.",
                    render_listing(&next.contents_of(receptacle))
                )
            } else {
                format!(
                    "On the {receptacle}, you see {}.",
                    render_listing(&next.contents_of(receptacle))
                )
            };
            StepOutcome::continue_with(observation)
        }
        ParsedAction::Take { object, receptacle } => {
            let at = next.agent_location.as_deref() == Some(receptacle);
            let there = next.placements.get(object).map(String::as_str) == Some(receptacle);
            let accessible = next
                .receptacles
                .get(receptacle)
                .map(|r| !r.openable || r.open)
                .unwrap_or(false);
            if !(at && there && accessible && next.hand.is_none()) {
                return (world.clone(), failure(profile));
            }
            next.placements.remove(object);
            next.hand = Some(object.clone());
            StepOutcome::continue_with(format!("You pick up the {object}."))
        }
        ParsedAction::Put { object, receptacle } => {
            let at = next.agent_location.as_deref() == Some(receptacle);
            let holding = next.hand.as_deref() == Some(object.as_str());
            let accessible = next
                .receptacles
                .get(receptacle)
                .map(|r| !r.openable || r.open)
                .unwrap_or(false);
            if !(at && holding && accessible) {
                return (world.clone(), failure(profile));
            }
            next.hand = None;
            next.placements.insert(object.clone(), receptacle.clone());
            let observation = format!("You put the {object} in/on the {receptacle}.");
            let recep_class = next.receptacles[receptacle].class.clone();
            if recep_class == "garbagecan" && object_class(object) == task.target_object {
                // Environment-terminal misstep: a required object is gone.
                StepOutcome { observation, done: true, reward: 0 }
            } else {
                let reward = evaluate_goal(&next, task);
                StepOutcome { observation, done: reward == 1, reward }
            }
        }
        ParsedAction::Open { receptacle } => {
            let at = next.agent_location.as_deref() == Some(receptacle);
            let closed = next
                .receptacles
                .get(receptacle)
                .map(|r| r.openable && !r.open)
                .unwrap_or(false);
            if !(at && closed) {
                return (world.clone(), failure(profile));
            }
            next.receptacles.get_mut(receptacle).unwrap().open = true;
            StepOutcome::continue_with(format!(
                "You open the {receptacle}. In it, you see {}.",
                render_listing(&next.contents_of(receptacle))
            ))
        }
        ParsedAction::Close { receptacle } => {
            let at = next.agent_location.as_deref() == Some(receptacle);
            let open = next
                .receptacles
                .get(receptacle)
                .map(|r| r.openable && r.open)
                .unwrap_or(false);
            if !(at && open) {
                return (world.clone(), failure(profile));
            }
            next.receptacles.get_mut(receptacle).unwrap().open = false;
            StepOutcome::continue_with(format!("You close the {receptacle}."))
        }
        ParsedAction::Heat { object, tool }
        | ParsedAction::Cool { object, tool }
        | ParsedAction::Clean { object, tool } => {
            let verb = action.verb();
            let at = next.agent_location.as_deref() == Some(tool.as_str());
            let holding = next.hand.as_deref() == Some(object.as_str());
            let right_tool = profile.tool_class(verb) == Some(object_class(tool));
            let tool_exists = next.receptacles.contains_key(tool);
            if !(at && holding && right_tool && tool_exists) {
                return (world.clone(), failure(profile));
            }
            let flag = TransformFlag::for_verb(verb).unwrap();
            let flags = next.transform_flags.entry(object.clone()).or_default();
            // Heated and cooled are mutually exclusive; most recent wins.
            match flag {
                TransformFlag::Heated => {
                    flags.remove(&TransformFlag::Cooled);
                }
                TransformFlag::Cooled => {
                    flags.remove(&TransformFlag::Heated);
                }
                TransformFlag::Cleaned => {}
            }
            flags.insert(flag);
            StepOutcome::continue_with(format!("You {verb} the {object} using the {tool}."))
        }
        ParsedAction::Use { object } => {
            let is_lamp = profile.is_lamp_class(object_class(object));
            let lamp_here = next.placements.get(object).map(String::as_str)
                == next.agent_location.as_deref();
            if !(is_lamp && lamp_here && next.agent_location.is_some()) {
                return (world.clone(), failure(profile));
            }
            if let Some(held) = &next.hand {
                next.examined_under_lamp.insert(held.clone());
            }
            let observation = format!("You turn on the {object}.");
            let reward = evaluate_goal(&next, task);
            StepOutcome { observation, done: reward == 1, reward }
        }
    };
    (next, outcome)
}
