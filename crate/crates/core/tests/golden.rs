//! Golden prompt-fidelity tests.
//!
//! Prompts built for the reference heat-apple scenario (household) and the
//! boil-water scenario (science) must contain every rule line and header of
//! the reference listings, compared after whitespace normalization; the
//! baseline prompt must contain none of the knowledge headers.

use std::collections::BTreeMap;
use std::sync::Arc;

use hearth_core::backend::OracleProfile;
use hearth_core::belief::{parse_goal, BeliefState, ScienceBeliefState};
use hearth_core::env::{initial_observation, Receptacle, TaskSpec, TaskType, WorldState};
use hearth_core::harness::{assemble_science_blocks, Pipeline};
use hearth_core::memory::{
    MemoryEntry, MemoryStore, RetrievalConfig, SnippetPrecondition, SuccessSnippet,
};
use hearth_core::profile::EnvironmentProfile;
use hearth_core::prompt::{build_prompt, ConditionFlags, PromptConfig, KNOWLEDGE_HEADERS};
use hearth_core::rules::RuleManual;

fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn assert_contains_all(haystack: &str, needles: &[&str]) {
    let normalized = normalize(haystack);
    for needle in needles {
        assert!(
            normalized.contains(&normalize(needle)),
            "prompt is missing: {needle}\n---\n{haystack}"
        );
    }
}

fn reference_heat_task(profile: &EnvironmentProfile) -> TaskSpec {
    let mut receptacles = BTreeMap::new();
    for (class, def) in profile.receptacle_classes() {
        for i in 1..=def.instances {
            receptacles.insert(
                format!("{class} {i}"),
                Receptacle { class: class.clone(), openable: def.openable, open: false },
            );
        }
    }
    let mut world = WorldState { receptacles, ..Default::default() };
    for (obj, recep) in [
        ("apple 2", "countertop 1"),
        ("apple 1", "countertop 1"),
        ("mug 3", "countertop 1"),
        ("potato 3", "countertop 1"),
        ("spatula 1", "countertop 1"),
        ("mug 1", "microwave 1"),
        ("bowl 1", "fridge 1"),
        ("cup 2", "fridge 1"),
        ("cup 1", "fridge 1"),
        ("egg 1", "fridge 1"),
        ("lettuce 1", "fridge 1"),
        ("desklamp 1", "desk 1"),
    ] {
        world.placements.insert(obj.to_string(), recep.to_string());
    }
    TaskSpec {
        id: "ref-heat".into(),
        task_type: TaskType::PickHeatThenPlaceInRecep,
        target_object: "apple".into(),
        destination: "fridge".into(),
        goal_text: "put a hot apple in fridge.".into(),
        initial_world: world,
        seed: 0,
    }
}

fn household_prompt(flags: &ConditionFlags) -> String {
    let pipeline = Pipeline::household();
    let task = reference_heat_task(&pipeline.profile);
    let goal = parse_goal(&task.goal_text, &pipeline.profile);
    let store = MemoryStore::new();
    let backend = pipeline.scripted_oracle(OracleProfile::reference());
    pipeline
        .decide_step(
            &BeliefState::new(),
            &initial_observation(&task),
            &[],
            &goal,
            &store,
            flags,
            &backend,
        )
        .unwrap()
        .prompt
        .full
}

#[test]
fn household_injection_contains_every_reference_line() {
    let prompt = household_prompt(&ConditionFlags::full());
    assert_contains_all(
        &prompt,
        &[
            "[Current State]",
            "Holding: nothing",
            "[Task Goal]",
            "Goal: put a hot apple in fridge.",
            "Type: pick_heat_then_place_in_recep",
            "Current sub-goal: find_object - apple",
            "Progress: 0%",
            "[RULES - CRITICAL, Always Follow]",
            "=== Universal Principles ===",
            "[U-SEARCH-001] When target object is not visible, systematically search starting from most likely locations",
            "[U-SEARCH-004] Check open spaces (countertop, table) before closed containers",
            "[U-STATE-001] Before any action, verify preconditions against current BeliefState",
            "[U-FAIL-002] If 'Nothing happens', the action's precondition was not met",
            "=== Domain Knowledge ===",
            "[D-LOC-001] Food items commonly in: fridge, countertop, diningtable, cabinet",
            "[D-TRANS-001] State-change actions require being at tool location with object in hand",
            "[D-TRANS-003] Sequence: find -> take -> go to tool -> transform -> go to dest -> place",
            "=== Environment-Specific ===",
            "HEAT:",
            "Syntax: heat <object> with microwave 1",
            "CRITICAL: Single-step atomic action. Object stays in hand. Do NOT put object in microwave.",
            "[Task-Specific Rules]",
            "- S-002: Hands empty - can pick up an object",
            "- D-HEAT-001: 'heat X with microwave' keeps X in hand - do NOT put X in microwave to heat it",
        ],
    );
}

#[test]
fn household_baseline_has_no_knowledge_headers() {
    let prompt = household_prompt(&ConditionFlags::baseline());
    for header in KNOWLEDGE_HEADERS {
        assert!(!prompt.contains(header), "baseline contains {header}");
    }
    // Shared scaffolding is still present.
    assert!(prompt.contains("Interact with a household to solve a task."));
    assert!(prompt.contains("Your task is to: put a hot apple in fridge."));
}

fn science_scenario() -> (String, String) {
    let profile = Arc::new(EnvironmentProfile::science());
    let manual = RuleManual::science();
    let goal = parse_goal("boil water", &profile);
    assert_eq!(goal.task_type, "F3");

    let mut store = MemoryStore::new();
    store
        .insert(MemoryEntry::Success(SuccessSnippet {
            id: "success_000301".into(),
            goal_signature: "F3:boil:water".into(),
            state_signature: "room=kitchen|inventory=empty|progress=0".into(),
            sub_goal_type: "transformed".into(),
            precondition: SnippetPrecondition {
                holding: None,
                action_type: "activate".into(),
                tool_location: Some("stove".into()),
            },
            actions: vec![
                "focus on substance in metal pot".into(),
                "move metal pot to stove".into(),
                "activate stove".into(),
            ],
            outcome: BTreeMap::from([("boil".to_string(), "water".to_string())]),
            success_count: 1,
        }))
        .unwrap();
    let appendix = hearth_core::memory::appendix_store();
    let critical = appendix.get("failure_000078").unwrap().clone();
    store.insert(critical).unwrap();

    let belief = ScienceBeliefState::new();
    let full_blocks = assemble_science_blocks(
        &profile,
        &manual,
        &belief,
        &goal,
        &store,
        &RetrievalConfig::default(),
        &ConditionFlags::full(),
    );
    let baseline_blocks = assemble_science_blocks(
        &profile,
        &manual,
        &belief,
        &goal,
        &store,
        &RetrievalConfig::default(),
        &ConditionFlags::baseline(),
    );
    let config = PromptConfig::default();
    (
        build_prompt(&full_blocks, &config).full,
        build_prompt(&baseline_blocks, &config).full,
    )
}

#[test]
fn science_injection_contains_every_reference_line() {
    let (prompt, _) = science_scenario();
    assert_contains_all(
        &prompt,
        &[
            "[Current State]",
            "Room: unknown  Carrying: nothing  Progress: step 0",
            "[Current Objective] find water",
            "[RULES - Tier 1: Universal Principles]",
            "U-SEARCH-001: When looking for an object, use 'look around' before moving elsewhere",
            "U-INSTR-001: Find instrument BEFORE target if required by task",
            "U-FAIL-001: If 'No known action', rephrase using exact object names from the observation",
            "U-VERIFY-001: After state-change, confirm result",
            "[RULES - Tier 2: Domain (F3_transform_verify)]",
            "Canonical procedure:",
            "1. find target substance",
            "2. focus on TARGET SUBSTANCE (NOT device)",
            "3. pick up or prepare target",
            "4. go to apparatus location",
            "5. execute transform action",
            "6. observe result (verify state change)",
            "F3-FOCUS-001: For melt/freeze/boil, 'focus on' TARGET SUBSTANCE (e.g., water), NEVER on devices (stove) or containers (metal pot)",
            "WARNING: focus on wrong object -> score=-100",
            "[RULES - Tier 3: Environment (ScienceWorld)]",
            "E-ACT-005: 'focus on <object>' USE WITH CAUTION",
            "E-SEM-003: wrong object -> score=-100, terminated",
            "[Past Experience - Learned from History]",
            "OK: F3: focus on substance in metal pot -> move metal pot to stove -> activate stove",
            "AVOID [CRITICAL]: focus on stove",
            "Rule: verify object identity matches task target before executing focus",
        ],
    );
}

#[test]
fn science_baseline_has_no_knowledge_headers() {
    let (_, baseline) = science_scenario();
    for header in KNOWLEDGE_HEADERS {
        assert!(!baseline.contains(header), "baseline contains {header}");
    }
    assert!(!baseline.contains("[RULES - Tier 1"));
    assert!(!baseline.contains("[Current Objective]"));
}

#[test]
fn full_and_baseline_prompts_differ_only_in_knowledge_blocks() {
    let full = household_prompt(&ConditionFlags::full());
    let baseline = household_prompt(&ConditionFlags::baseline());
    // Every baseline line appears in the full prompt in order.
    let mut full_lines = full.lines();
    for line in baseline.lines() {
        assert!(
            full_lines.any(|fl| fl == line),
            "baseline line not found in order in full prompt: {line:?}"
        );
    }
}
