//! Cross-module invariants and property tests.

use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;

use hearth_core::action::parse_action;
use hearth_core::backend::OracleProfile;
use hearth_core::belief::{
    check_preconditions, parse_goal, state_signature, update_belief, BeliefState, ContainerState,
};
use hearth_core::env::{initial_observation, step, Receptacle, TaskSpec, TaskType, WorldState};
use hearth_core::harness::Pipeline;
use hearth_core::memory::{
    retrieve, scf_filter, FailureLesson, MemoryEntry, MemoryStore, RetrievalConfig,
    RetrievalResult,
};
use hearth_core::profile::{object_class, EnvironmentProfile};
use hearth_core::prompt::ConditionFlags;
use hearth_core::rules::{active_rules, RuleManual};

fn household() -> Arc<EnvironmentProfile> {
    Arc::new(EnvironmentProfile::household())
}

fn small_world(profile: &EnvironmentProfile) -> WorldState {
    let mut receptacles = BTreeMap::new();
    for name in ["countertop 1", "fridge 1", "microwave 1", "sinkbasin 1", "desk 1", "garbagecan 1"]
    {
        let class = object_class(name).to_string();
        let openable = profile.is_openable_class(&class);
        receptacles.insert(name.to_string(), Receptacle { class, openable, open: false });
    }
    WorldState { receptacles, ..Default::default() }
}

fn heat_task(world: WorldState) -> TaskSpec {
    TaskSpec {
        id: "inv".into(),
        task_type: TaskType::PickHeatThenPlaceInRecep,
        target_object: "apple".into(),
        destination: "countertop".into(),
        goal_text: "put a hot apple in countertop.".into(),
        initial_world: world,
        seed: 0,
    }
}

/// Belief reconstructed from ground truth with full knowledge.
fn belief_from_world(world: &WorldState) -> BeliefState {
    let mut belief = BeliefState::new();
    belief.location = world.agent_location.clone();
    belief.hand = world.hand.clone();
    for (name, recep) in &world.receptacles {
        if recep.openable {
            belief.container_states.insert(
                name.clone(),
                if recep.open { ContainerState::Open } else { ContainerState::Closed },
            );
        }
    }
    for (obj, recep) in &world.placements {
        belief.object_sightings.insert(obj.clone(), recep.clone());
    }
    belief
}

/// Exhaustive small-world check: whenever the belief-side precondition
/// check passes with no unknown-field warnings against a fully informed
/// belief, the simulator must not answer with the in-band failure string.
#[test]
fn precondition_checks_are_sound_against_the_simulator() {
    let profile = household();
    let receptacle_names = ["countertop 1", "fridge 1", "microwave 1", "sinkbasin 1", "desk 1"];
    let mut checked = 0usize;

    // Object spots: each of apple/desklamp is at a receptacle or (apple
    // only) in the hand.
    for apple_spot in 0..=receptacle_names.len() {
        for lamp_spot in 0..receptacle_names.len() {
            for fridge_open in [false, true] {
                for micro_open in [false, true] {
                    for agent in (0..receptacle_names.len()).map(Some).chain([None]) {
                        let mut world = small_world(&profile);
                        world.receptacles.get_mut("fridge 1").unwrap().open = fridge_open;
                        world.receptacles.get_mut("microwave 1").unwrap().open = micro_open;
                        if apple_spot < receptacle_names.len() {
                            world
                                .placements
                                .insert("apple 1".into(), receptacle_names[apple_spot].into());
                        } else {
                            world.hand = Some("apple 1".into());
                        }
                        world
                            .placements
                            .insert("desklamp 1".into(), receptacle_names[lamp_spot].into());
                        world.agent_location = agent.map(|i| receptacle_names[i].to_string());

                        let task = heat_task(world.clone());
                        let belief = belief_from_world(&world);
                        let mut actions = vec!["use desklamp 1".to_string()];
                        for recep in receptacle_names {
                            actions.push(format!("go to {recep}"));
                            actions.push(format!("open {recep}"));
                            actions.push(format!("close {recep}"));
                            actions.push(format!("take apple 1 from {recep}"));
                            actions.push(format!("put apple 1 in/on {recep}"));
                        }
                        actions.push("heat apple 1 with microwave 1".into());
                        actions.push("cool apple 1 with fridge 1".into());
                        actions.push("clean apple 1 with sinkbasin 1".into());

                        for action_text in &actions {
                            let action = parse_action(&profile, action_text).unwrap();
                            let report = check_preconditions(&action, &belief, &profile);
                            if report.satisfied && report.warnings.is_empty() {
                                let (_, outcome) = step(&world, &task, action_text, &profile);
                                assert_ne!(
                                    outcome.observation,
                                    profile.failure_observation(),
                                    "belief said {action_text:?} is fine but the simulator \
                                     failed it in world {world:?}"
                                );
                                checked += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    assert!(checked > 1000, "only {checked} satisfied cases enumerated");
}

/// Belief fields that are not unknown must agree with ground truth along
/// simulator trajectories.
#[test]
fn belief_agrees_with_ground_truth_along_oracle_trajectories() {
    let profile = household();
    let pipeline = Pipeline::household();
    let counts = hearth_core::taskgen::uniform_counts(2);
    let tasks = hearth_core::taskgen::generate_tasks(99, &counts, &profile).unwrap();
    let store = MemoryStore::new();

    for task in &tasks {
        let backend = pipeline.scripted_oracle(OracleProfile::reference().with_seed(task.seed));
        let episode = pipeline.run_episode(
            &task.clone(),
            &ConditionFlags::rules_only(),
            "B",
            &backend,
            &store,
            50,
        );
        // Replay the recorded actions and compare the decision-time belief
        // of step i against the world before action i.
        let mut world = task.initial_world.clone();
        for record in &episode.steps {
            if let Some(loc) = &record.belief.location {
                assert_eq!(Some(loc), world.agent_location.as_ref(), "task {}", task.id);
            }
            if let Some(held) = &record.belief.hand {
                assert_eq!(Some(held), world.hand.as_ref(), "task {}", task.id);
            }
            for (name, state) in &record.belief.container_states {
                if *state == ContainerState::Unknown {
                    continue;
                }
                let truth = world.receptacles[name].open;
                assert_eq!(*state == ContainerState::Open, truth, "task {} recep {name}", task.id);
            }
            let (next, _) = step(&world, task, &record.action, &profile);
            world = next;
        }
    }
}

/// With rules in the prompt, the oracle never emits an action matching an
/// armed forbidden-action template.
#[test]
fn rules_aware_oracle_respects_forbidden_templates() {
    let profile = household();
    let pipeline = Pipeline::household();
    let manual = RuleManual::household();
    let tasks =
        hearth_core::taskgen::generate_tasks(123, &hearth_core::taskgen::uniform_counts(2), &profile)
            .unwrap();
    let store = MemoryStore::new();
    for task in &tasks {
        let goal = parse_goal(&task.goal_text, &profile);
        let active = active_rules(&manual, &goal.task_type);
        let backend = pipeline.scripted_oracle(OracleProfile::default().with_seed(task.seed));
        let episode = pipeline.run_episode(
            &task.clone(),
            &ConditionFlags::rules_only(),
            "B",
            &backend,
            &store,
            50,
        );
        for record in &episode.steps {
            if let Some(parsed) = parse_action(&profile, &record.action) {
                for (rule, template) in active.armed_forbidden() {
                    assert!(
                        !template.matches(&parsed, &active.goal_type),
                        "oracle emitted {} violating {} on task {}",
                        record.action,
                        rule.id,
                        task.id
                    );
                }
            }
        }
    }
}

#[test]
fn learning_two_rounds_grows_sublinearly() {
    let profile = household();
    let pipeline = Pipeline::household();
    let tasks =
        hearth_core::taskgen::generate_tasks(31, &hearth_core::taskgen::uniform_counts(2), &profile)
            .unwrap();
    let mut store = MemoryStore::new();
    let snapshots = pipeline
        .learning_phase(&tasks, 2, &mut store, 5, &OracleProfile::default(), 50)
        .unwrap();
    assert_eq!(snapshots.len(), 2);
    let round1 = snapshots[0].total();
    let round2 = snapshots[1].total();
    assert!(round1 > 0);
    assert!(round2 >= round1);
    assert!(round2 < 2 * round1, "no deduplication: {round1} -> {round2}");
    assert!(store.is_frozen());
}

fn lesson(id: &str, sig: &str, goal_sig: &str) -> MemoryEntry {
    MemoryEntry::Failure(FailureLesson {
        id: id.to_string(),
        goal_signature: goal_sig.to_string(),
        state_signature: sig.to_string(),
        failed_action: "take apple 1 from fridge 1".into(),
        failure_type: "precondition_not_met".into(),
        failure_message: "Nothing happens.".into(),
        corrective_rule: "must be at location before taking".into(),
        occurrence_count: 1,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Raising the retrieval threshold never adds results, and results are
    /// always sorted by weighted score.
    #[test]
    fn retrieval_threshold_is_monotone(
        lo in 0.0f64..1.0,
        hi in 0.0f64..1.0,
        objects in proptest::collection::vec("(apple|potato|mug|egg|plate)", 1..12),
    ) {
        let profile = EnvironmentProfile::household();
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let mut store = MemoryStore::new();
        for (i, obj) in objects.iter().enumerate() {
            store
                .insert(lesson(
                    &format!("failure_{i:06}"),
                    "holding=none",
                    &format!("pick_heat_then_place_in_recep:{obj}:hot:fridge"),
                ))
                .unwrap();
        }
        let goal = parse_goal("put a hot apple in fridge.", &profile);
        let low = retrieve(&store, &goal, &RetrievalConfig { threshold: lo, ..Default::default() }, &profile);
        let high = retrieve(&store, &goal, &RetrievalConfig { threshold: hi, ..Default::default() }, &profile);
        prop_assert!(high.len() <= low.len());
        for result in &high {
            prop_assert!(low.iter().any(|r| r.entry.id() == result.entry.id()));
        }
        for window in low.windows(2) {
            prop_assert!(window[0].weighted_score >= window[1].weighted_score);
        }
    }

    /// SCF output is a subset of its input with order preserved.
    #[test]
    fn scf_is_pure_and_order_preserving(
        holding in proptest::collection::vec(proptest::bool::ANY, 0..10),
        current_holding in proptest::bool::ANY,
    ) {
        let candidates: Vec<RetrievalResult> = holding
            .iter()
            .enumerate()
            .map(|(i, held)| RetrievalResult {
                entry: lesson(
                    &format!("failure_{i:06}"),
                    if *held { "holding=mug 2" } else { "holding=none" },
                    "pick_heat_then_place_in_recep:apple:hot:fridge",
                ),
                match_score: 1.0,
                weighted_score: 1.0,
                scf_warning: false,
            })
            .collect();
        let mut belief = BeliefState::new();
        if current_holding {
            belief.hand = Some("apple 1".into());
        }
        let sigma = state_signature(&belief);
        let output = scf_filter(&candidates, &sigma);
        prop_assert!(output.len() <= candidates.len());
        let out_ids: Vec<&str> = output.iter().map(|r| r.entry.id()).collect();
        let expected: Vec<&str> = candidates
            .iter()
            .map(|r| r.entry.id())
            .filter(|id| out_ids.contains(id))
            .collect();
        prop_assert_eq!(out_ids, expected);
        // Exactly the occupancy-compatible entries survive.
        for (i, held) in holding.iter().enumerate() {
            let id = format!("failure_{i:06}");
            let kept = output.iter().any(|r| r.entry.id() == id);
            prop_assert_eq!(kept, *held == current_holding);
        }
    }

    /// Any "Nothing happens." step leaves the world bitwise unchanged, and
    /// the object multiset is invariant under every action.
    #[test]
    fn simulator_failure_purity_and_conservation(
        actions in proptest::collection::vec(0usize..64, 1..40),
        seed in 0u64..500,
    ) {
        let profile = EnvironmentProfile::household();
        let tasks = hearth_core::taskgen::generate_tasks(
            seed,
            &BTreeMap::from([(TaskType::PickHeatThenPlaceInRecep, 1usize)]),
            &profile,
        ).unwrap();
        let task = &tasks[0];
        let vocabulary: Vec<String> = {
            let mut v = Vec::new();
            for recep in task.initial_world.receptacles.keys() {
                v.push(format!("go to {recep}"));
                v.push(format!("open {recep}"));
                v.push(format!("take apple 1 from {recep}"));
                v.push(format!("put apple 1 in/on {recep}"));
            }
            v.push("heat apple 1 with microwave 1".into());
            v.push("gibberish".into());
            v
        };
        let objects = task.initial_world.all_objects();
        let mut world = task.initial_world.clone();
        for idx in actions {
            let action = &vocabulary[idx % vocabulary.len()];
            let (next, outcome) = step(&world, task, action, &profile);
            if outcome.observation == profile.failure_observation() {
                prop_assert_eq!(&next, &world);
            }
            prop_assert_eq!(next.all_objects(), objects.clone());
            world = next;
            if outcome.done {
                break;
            }
        }
    }

    /// Folding the same observation script twice yields bitwise-equal
    /// belief states, and sightings only change for objects named in the
    /// observation.
    #[test]
    fn belief_updates_are_deterministic_and_sighting_monotone(seed in 0u64..500) {
        let profile = EnvironmentProfile::household();
        let pipeline = Pipeline::household();
        let tasks = hearth_core::taskgen::generate_tasks(
            seed,
            &BTreeMap::from([(TaskType::PickAndPlaceSimple, 1usize)]),
            &profile,
        ).unwrap();
        let task = &tasks[0];
        let store = MemoryStore::new();
        let backend = pipeline.scripted_oracle(OracleProfile::default().with_seed(seed));
        let episode = pipeline.run_episode(
            task,
            &ConditionFlags::baseline(),
            "A",
            &backend,
            &store,
            30,
        );

        let fold = || {
            let mut states = Vec::new();
            let mut belief = update_belief(
                &BeliefState::new(),
                None,
                &initial_observation(task),
                &profile,
            );
            states.push(belief.clone());
            for record in &episode.steps {
                let parsed = parse_action(&profile, &record.action);
                let next = update_belief(&belief, parsed.as_ref(), &record.observation, &profile);
                for (obj, spot) in &next.object_sightings {
                    if belief.object_sightings.get(obj) != Some(spot) {
                        prop_assert!(
                            record.observation.contains(obj.as_str()),
                            "sighting for {obj} changed without being named in {:?}",
                            record.observation
                        );
                    }
                }
                belief = next;
                states.push(belief.clone());
            }
            Ok(states)
        };
        prop_assert_eq!(fold()?, fold()?);
    }

    /// Identical seeds give byte-identical episode records.
    #[test]
    fn episodes_are_deterministic(seed in 0u64..300) {
        let profile = EnvironmentProfile::household();
        let pipeline = Pipeline::household();
        let tasks = hearth_core::taskgen::generate_tasks(
            seed,
            &BTreeMap::from([(TaskType::PickCoolThenPlaceInRecep, 1usize)]),
            &profile,
        ).unwrap();
        let store = MemoryStore::new();
        let run = || {
            let backend = pipeline.scripted_oracle(OracleProfile::default().with_seed(seed));
            pipeline.run_episode(&tasks[0], &ConditionFlags::full(), "D", &backend, &store, 50)
        };
        let a = serde_json::to_string(&run()).unwrap();
        let b = serde_json::to_string(&run()).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn episode_records_round_trip_as_jsonl() {
    let profile = household();
    let pipeline = Pipeline::household();
    let tasks =
        hearth_core::taskgen::generate_tasks(17, &hearth_core::taskgen::uniform_counts(1), &profile)
            .unwrap();
    let store = MemoryStore::new();
    let backend = pipeline.scripted_oracle(OracleProfile::default().with_seed(17));
    let episode =
        pipeline.run_episode(&tasks[0], &ConditionFlags::full(), "D", &backend, &store, 50);
    let line = serde_json::to_string(&episode).unwrap();
    let parsed: hearth_core::episode::EpisodeRecord = serde_json::from_str(&line).unwrap();
    assert_eq!(parsed, episode);
}
