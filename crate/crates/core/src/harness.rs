//! Orchestration: the single-step decision pipeline, episode execution,
//! the learning phase, the ablation matrix, and report generation.
//!
//! Evaluation is single-trial: each (task, condition) cell contributes
//! exactly one outcome. With the scripted backend everything here is
//! deterministic under the configured seeds, including report bytes.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::arbitration::{arbitrate, ArbitrationMode};
use crate::backend::{sha256_hex, BackendError, DecisionBackend, OracleProfile, ScriptedOracle};
use crate::belief::{parse_goal, state_signature, update_belief, BeliefState, GoalSignature};
use crate::env::{initial_observation, step, TaskSpec, TaskType};
use crate::episode::{ArbitrationLogEntry, EpisodeRecord, Outcome, StepRecord};
use crate::memory::{record_episode, KindCounts, MemoryError, MemoryStore, RetrievalConfig};
use crate::memory::{retrieve, scf_filter};
use crate::profile::{EnvironmentProfile, PromptStyle};
use crate::prompt::{
    build_prompt, household_stage, injected_tokens, render_belief_block, render_goal_block,
    render_memory_block, render_rules_block, ConditionFlags, HistoryPair, PromptBlocks,
    PromptConfig, PromptParts,
};
use crate::rules::{active_rules, RuleManual};
use crate::stats::mcnemar_exact;

fn mix(parts: &[u64]) -> u64 {
    let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        state = state.wrapping_add(p).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        state ^= state >> 31;
    }
    state
}

/// Everything fixed across episodes: profile, manual, prompt scaffolding,
/// and pipeline configuration.
pub struct Pipeline {
    pub profile: Arc<EnvironmentProfile>,
    pub manual: RuleManual,
    pub system_instruction: String,
    pub icl_example: String,
    pub retrieval: RetrievalConfig,
    pub prompt_config: PromptConfig,
}

impl Pipeline {
    /// The embedded household environment with its shipped manual.
    pub fn household() -> Self {
        Self {
            profile: Arc::new(EnvironmentProfile::household()),
            manual: RuleManual::household(),
            system_instruction: crate::fixtures::ALFWORLD_SYSTEM_INSTRUCTION.to_string(),
            icl_example: crate::fixtures::ALFWORLD_ICL_EXAMPLE.to_string(),
            retrieval: RetrievalConfig::default(),
            prompt_config: PromptConfig::default(),
        }
    }

    pub fn scripted_oracle(&self, profile: OracleProfile) -> ScriptedOracle {
        ScriptedOracle::new(profile, Arc::clone(&self.profile))
    }
}

#[derive(Debug, Clone)]
pub struct StepDecision {
    pub action: String,
    pub belief: BeliefState,
    pub prompt: PromptParts,
    pub arbitration: Vec<ArbitrationLogEntry>,
    pub injected_tokens: u32,
}

impl Pipeline {
    /// Whether a transformation success for the goal's verb appears in the
    /// transcript (belief does not track transformation outcomes).
    fn transform_seen(&self, goal: &GoalSignature, transcript: &[HistoryPair]) -> bool {
        let Some(verb) = goal
            .modifier
            .as_deref()
            .and_then(|m| self.profile.verb_for_modifier(m))
        else {
            return false;
        };
        let prefix = format!("You {verb} the ");
        transcript.iter().any(|p| p.observation.starts_with(&prefix))
    }

    /// One pass of the single-step decision procedure: belief update,
    /// signatures, rule activation, retrieval, state-consistent filtering,
    /// arbitration, prompt assembly, and the backend query. Condition flags
    /// gate which knowledge blocks reach the prompt; disabled memory skips
    /// retrieval entirely and disabled SCF passes candidates through.
    #[allow(clippy::too_many_arguments)]
    pub fn decide_step(
        &self,
        prev_belief: &BeliefState,
        initial_obs: &str,
        transcript: &[HistoryPair],
        goal: &GoalSignature,
        store: &MemoryStore,
        flags: &ConditionFlags,
        backend: &dyn DecisionBackend,
    ) -> Result<StepDecision, BackendError> {
        let (last_action_text, observation) = match transcript.last() {
            Some(pair) => (Some(pair.action.clone()), pair.observation.clone()),
            None => (None, initial_obs.to_string()),
        };
        let last_action = last_action_text
            .as_deref()
            .and_then(|t| crate::action::parse_action(&self.profile, t));
        let belief = update_belief(prev_belief, last_action.as_ref(), &observation, &self.profile);
        let sigma = state_signature(&belief);
        let active = active_rules(&self.manual, &goal.task_type);

        let mut arbitration_log = Vec::new();
        let memory_block = if flags.memory_on {
            let candidates = retrieve(store, goal, &self.retrieval, &self.profile);
            let filtered = if flags.scf_on {
                scf_filter(&candidates, &sigma)
            } else {
                candidates
            };
            let arbitrated = arbitrate(
                &filtered,
                &active,
                &belief,
                flags.arbitration_mode,
                &self.profile,
            );
            arbitration_log = arbitrated
                .iter()
                .map(|a| ArbitrationLogEntry {
                    entry_id: a.result.entry.id().to_string(),
                    disposition: a.disposition.label().to_string(),
                    rule_id: a.triggering_rule_id.clone(),
                })
                .collect();
            Some(render_memory_block(&arbitrated))
        } else {
            None
        };

        let knowledge_on = flags.rules_on || flags.memory_on;
        let belief_block = knowledge_on.then(|| render_belief_block(&belief, &self.profile));
        let goal_block = knowledge_on.then(|| {
            let (stage, pct) = household_stage(goal, &belief, self.transform_seen(goal, transcript));
            render_goal_block(goal, &stage, pct)
        });
        let rules_block =
            flags.rules_on.then(|| render_rules_block(&active, &belief, &self.profile));

        let (history, last_action_field) = match transcript.split_last() {
            Some((last, rest)) => (rest.to_vec(), Some(last.action.clone())),
            None => (Vec::new(), None),
        };
        let blocks = PromptBlocks {
            system_instruction: self.system_instruction.clone(),
            icl_example: self.icl_example.clone(),
            belief_block,
            goal_block,
            rules_block,
            memory_block,
            initial_observation: initial_obs.to_string(),
            history,
            last_action: last_action_field,
            observation,
        };
        let tokens = injected_tokens(&blocks);
        let prompt = build_prompt(&blocks, &self.prompt_config);
        let action = backend.next_action(&prompt)?;
        Ok(StepDecision {
            action,
            belief,
            prompt,
            arbitration: arbitration_log,
            injected_tokens: tokens,
        })
    }

    /// Run one task single-trial to termination or the step budget.
    pub fn run_episode(
        &self,
        task: &TaskSpec,
        flags: &ConditionFlags,
        condition_name: &str,
        backend: &dyn DecisionBackend,
        store: &MemoryStore,
        max_steps: u32,
    ) -> EpisodeRecord {
        let goal = parse_goal(&task.goal_text, &self.profile);
        let initial_obs = initial_observation(task);
        let mut world = task.initial_world.clone();
        let mut belief = BeliefState::new();
        let mut transcript: Vec<HistoryPair> = Vec::new();
        let mut steps = Vec::new();
        let mut outcome = Outcome::Timeout;
        let mut steps_used = 0;

        for step_index in 0..max_steps {
            let decision = match self.decide_step(
                &belief,
                &initial_obs,
                &transcript,
                &goal,
                store,
                flags,
                backend,
            ) {
                Ok(d) => d,
                Err(_) => {
                    outcome = Outcome::BackendError;
                    steps_used = step_index;
                    break;
                }
            };
            belief = decision.belief.clone();
            let (next_world, step_outcome) = step(&world, task, &decision.action, &self.profile);
            world = next_world;
            steps.push(StepRecord {
                prompt_sha256: sha256_hex(&decision.prompt.full),
                injected_tokens: decision.injected_tokens,
                action: decision.action.clone(),
                observation: step_outcome.observation.clone(),
                belief: decision.belief,
                arbitration: decision.arbitration,
            });
            transcript.push(HistoryPair {
                action: decision.action,
                observation: step_outcome.observation,
            });
            steps_used = step_index + 1;
            if step_outcome.done {
                outcome = if step_outcome.reward == 1 {
                    Outcome::Success
                } else {
                    Outcome::EnvDoneWrong
                };
                break;
            }
        }

        EpisodeRecord {
            task_id: task.id.clone(),
            task_type: task.task_type.goal_type().to_string(),
            goal_text: task.goal_text.clone(),
            condition: condition_name.to_string(),
            flags: *flags,
            steps,
            outcome,
            steps_used,
        }
    }

    /// Accumulate memory by running the seen split under the rules-only
    /// configuration, one snapshot per round, freezing the store at the end.
    /// Per-round oracle seeds differ so repeated rounds explore differently.
    pub fn learning_phase(
        &self,
        seen: &[TaskSpec],
        rounds: u32,
        store: &mut MemoryStore,
        base_seed: u64,
        oracle: &OracleProfile,
        max_steps: u32,
    ) -> Result<Vec<KindCounts>, MemoryError> {
        let mut snapshots = Vec::new();
        let flags = ConditionFlags::rules_only();
        for round in 1..=rounds {
            for (i, task) in seen.iter().enumerate() {
                let seed = mix(&[base_seed, round as u64, i as u64]);
                let backend = self.scripted_oracle(oracle.clone().with_seed(seed));
                let episode = self.run_episode(task, &flags, "learn/B", &backend, store, max_steps);
                let goal = parse_goal(&task.goal_text, &self.profile);
                record_episode(store, &episode, &goal, &self.profile)?;
            }
            snapshots.push(store.snapshot_counts());
        }
        store.freeze();
        Ok(snapshots)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TypeStats {
    pub n: usize,
    pub successes: usize,
}

impl TypeStats {
    pub fn rate(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.successes as f64 / self.n as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FailureModes {
    pub timeout: usize,
    pub env_done_wrong: usize,
    pub backend_error: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub name: String,
    pub rules_on: bool,
    pub memory_on: bool,
    pub arbitration: String,
    pub scf_on: bool,
    pub n: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub per_type: BTreeMap<String, TypeStats>,
    pub avg_steps_all: f64,
    pub avg_steps_success: f64,
    pub failure_modes: FailureModes,
    /// Per-task binary outcomes, the inputs to paired significance tests.
    pub outcomes: BTreeMap<String, bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub a: String,
    pub b: String,
    pub n01: u64,
    pub n10: u64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seed: u64,
    pub tasks: usize,
    pub max_steps: u32,
    pub memory_rounds: Vec<KindCounts>,
    pub conditions: Vec<ConditionReport>,
    pub mcnemar: Vec<PairwiseTest>,
}

impl AblationReport {
    pub fn condition(&self, name: &str) -> Option<&ConditionReport> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned human-readable table.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "Ablation report (seed {}, {} tasks, T_max {})\n\n",
            self.seed, self.tasks, self.max_steps
        ));
        out.push_str(&format!(
            "{:<14} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>7} {:>9} {:>10} {:>8} {:>8}\n",
            "Condition", "Look", "Place", "Clean", "Cool", "Heat", "Two", "All", "Steps", "Steps(S)",
            "Timeout", "EnvDone"
        ));
        for c in &self.conditions {
            let cell = |label: &str| {
                c.per_type
                    .get(label)
                    .map(|t| format!("{:.1}", t.rate() * 100.0))
                    .unwrap_or_else(|| "-".to_string())
            };
            out.push_str(&format!(
                "{:<14} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>7} {:>9} {:>10} {:>8} {:>8}\n",
                c.name,
                cell("Look"),
                cell("Place"),
                cell("Clean"),
                cell("Cool"),
                cell("Heat"),
                cell("Two"),
                format!("{:.1}", c.success_rate * 100.0),
                format!("{:.1}", c.avg_steps_all),
                format!("{:.1}", c.avg_steps_success),
                c.failure_modes.timeout,
                c.failure_modes.env_done_wrong,
            ));
        }
        if !self.memory_rounds.is_empty() {
            out.push_str("\nMemory growth per learning round:\n");
            for (i, counts) in self.memory_rounds.iter().enumerate() {
                out.push_str(&format!(
                    "  R{}: total {} (success {}, failure {}, schema {}, critical {})\n",
                    i + 1,
                    counts.total(),
                    counts.success,
                    counts.failure,
                    counts.schema,
                    counts.critical_failure
                ));
            }
        }
        if !self.mcnemar.is_empty() {
            out.push_str("\nPaired exact tests (two-sided):\n");
            for t in &self.mcnemar {
                out.push_str(&format!(
                    "  {} vs {}: n01/n10 = {}/{}, p = {:.3}\n",
                    t.a, t.b, t.n01, t.n10, t.p_value
                ));
            }
        }
        out
    }
}

fn summarize(
    name: &str,
    flags: &ConditionFlags,
    episodes: &[(TaskType, EpisodeRecord)],
) -> ConditionReport {
    let n = episodes.len();
    let successes = episodes.iter().filter(|(_, e)| e.succeeded()).count();
    let mut per_type: BTreeMap<String, TypeStats> = BTreeMap::new();
    let mut failure_modes = FailureModes::default();
    let mut outcomes = BTreeMap::new();
    let mut steps_all = 0u64;
    let mut steps_success = 0u64;
    for (task_type, episode) in episodes {
        let stats = per_type.entry(task_type.label().to_string()).or_default();
        stats.n += 1;
        if episode.succeeded() {
            stats.successes += 1;
            steps_success += episode.steps_used as u64;
        }
        match episode.outcome {
            Outcome::Timeout => failure_modes.timeout += 1,
            Outcome::EnvDoneWrong => failure_modes.env_done_wrong += 1,
            Outcome::BackendError => failure_modes.backend_error += 1,
            Outcome::Success => {}
        }
        steps_all += episode.steps_used as u64;
        outcomes.insert(episode.task_id.clone(), episode.succeeded());
    }
    ConditionReport {
        name: name.to_string(),
        rules_on: flags.rules_on,
        memory_on: flags.memory_on,
        arbitration: flags.arbitration_mode.label().to_string(),
        scf_on: flags.scf_on,
        n,
        successes,
        success_rate: if n == 0 { 0.0 } else { successes as f64 / n as f64 },
        per_type,
        avg_steps_all: if n == 0 { 0.0 } else { steps_all as f64 / n as f64 },
        avg_steps_success: if successes == 0 {
            0.0
        } else {
            steps_success as f64 / successes as f64
        },
        failure_modes,
        outcomes,
    }
}

fn discordant(a: &ConditionReport, b: &ConditionReport) -> (u64, u64) {
    let mut n01 = 0;
    let mut n10 = 0;
    for (task, &a_ok) in &a.outcomes {
        if let Some(&b_ok) = b.outcomes.get(task) {
            match (a_ok, b_ok) {
                (false, true) => n01 += 1,
                (true, false) => n10 += 1,
                _ => {}
            }
        }
    }
    (n01, n10)
}

/// Configuration for one full ablation run.
#[derive(Debug, Clone)]
pub struct AblationConfig {
    pub seed: u64,
    pub max_steps: u32,
    pub rounds: u32,
    pub oracle: OracleProfile,
    /// Extra arbitration modes evaluated as variants of the full condition
    /// (the full condition itself runs hard+soft).
    pub arbitration_modes: Vec<ArbitrationMode>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            max_steps: 50,
            rounds: 1,
            oracle: OracleProfile::default(),
            arbitration_modes: vec![
                ArbitrationMode::None,
                ArbitrationMode::SoftOnly,
                ArbitrationMode::HardOnly,
            ],
        }
    }
}

impl Pipeline {
    /// Run a labeled condition over the whole suite, one episode per task,
    /// with per-task oracle seeds shared across conditions so comparisons
    /// are paired.
    pub fn run_condition(
        &self,
        name: &str,
        flags: &ConditionFlags,
        suite: &[TaskSpec],
        store: &MemoryStore,
        config: &AblationConfig,
    ) -> ConditionReport {
        let episodes: Vec<(TaskType, EpisodeRecord)> = suite
            .iter()
            .enumerate()
            .map(|(i, task)| {
                let seed = mix(&[config.seed, 0xfeed, i as u64]);
                let backend = self.scripted_oracle(config.oracle.clone().with_seed(seed));
                (
                    task.task_type,
                    self.run_episode(task, flags, name, &backend, store, config.max_steps),
                )
            })
            .collect();
        summarize(name, flags, &episodes)
    }

    /// The full matrix: learning phase on the seen split, then the four
    /// factorial conditions plus arbitration-mode variants of the full
    /// condition, plus pairwise exact tests.
    pub fn run_ablation(
        &self,
        eval_suite: &[TaskSpec],
        seen_suite: &[TaskSpec],
        config: &AblationConfig,
    ) -> Result<(AblationReport, MemoryStore), MemoryError> {
        let mut store = MemoryStore::new();
        let memory_rounds = self.learning_phase(
            seen_suite,
            config.rounds,
            &mut store,
            mix(&[config.seed, 0x1ea2]),
            &config.oracle,
            config.max_steps,
        )?;

        let mut conditions = Vec::new();
        for (name, flags) in [
            ("A", ConditionFlags::baseline()),
            ("B", ConditionFlags::rules_only()),
            ("C", ConditionFlags::memory_only()),
            ("D", ConditionFlags::full()),
        ] {
            conditions.push(self.run_condition(name, &flags, eval_suite, &store, config));
        }
        for mode in &config.arbitration_modes {
            let flags = ConditionFlags { arbitration_mode: *mode, ..ConditionFlags::full() };
            let name = format!("D/arb={}", mode.label());
            conditions.push(self.run_condition(&name, &flags, eval_suite, &store, config));
        }

        let mut mcnemar = Vec::new();
        for i in 0..conditions.len() {
            for j in (i + 1)..conditions.len() {
                let (n01, n10) = discordant(&conditions[i], &conditions[j]);
                mcnemar.push(PairwiseTest {
                    a: conditions[i].name.clone(),
                    b: conditions[j].name.clone(),
                    n01,
                    n10,
                    p_value: mcnemar_exact(n01, n10),
                });
            }
        }

        Ok((
            AblationReport {
                seed: config.seed,
                tasks: eval_suite.len(),
                max_steps: config.max_steps,
                memory_rounds,
                conditions,
                mcnemar,
            },
            store,
        ))
    }
}

/// Science-profile prompt assembly for one decision, used where no
/// simulator exists: retrieval, science SCF, arbitration, and block
/// rendering against a science belief state.
#[allow(clippy::too_many_arguments)]
pub fn assemble_science_blocks(
    profile: &EnvironmentProfile,
    manual: &RuleManual,
    belief: &crate::belief::ScienceBeliefState,
    goal: &GoalSignature,
    store: &MemoryStore,
    retrieval: &RetrievalConfig,
    flags: &ConditionFlags,
) -> PromptBlocks {
    debug_assert_eq!(profile.style(), PromptStyle::Science);
    let active = active_rules(manual, &goal.task_type);
    let memory_block = flags.memory_on.then(|| {
        let candidates = retrieve(store, goal, retrieval, profile);
        let filtered = if flags.scf_on {
            crate::memory::scf_filter_science(&candidates, belief, profile)
        } else {
            candidates
        };
        // Science arbitration checks run against an empty household-style
        // belief; only forbidden templates and soft notes apply.
        let arbitrated = arbitrate(
            &filtered,
            &active,
            &BeliefState::new(),
            flags.arbitration_mode,
            profile,
        );
        render_memory_block(&arbitrated)
    });
    let knowledge_on = flags.rules_on || flags.memory_on;
    PromptBlocks {
        system_instruction: crate::fixtures::SCIENCEWORLD_SYSTEM_INSTRUCTION.to_string(),
        icl_example: crate::fixtures::SCIENCEWORLD_ICL_EXAMPLE.to_string(),
        belief_block: knowledge_on.then(|| crate::prompt::render_science_belief_block(belief)),
        goal_block: knowledge_on
            .then(|| crate::prompt::render_science_goal_block(goal, belief, profile)),
        rules_block: flags
            .rules_on
            .then(|| render_rules_block(&active, &BeliefState::new(), profile)),
        memory_block,
        ..Default::default()
    }
}
