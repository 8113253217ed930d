//! Closed-loop planner-critic episode runner.
//!
//! Every round gathers memory context, asks the planner for a multi-step
//! plan, and executes it. The first step of each fresh plan runs without
//! review; every later step is shown to the critic together with the rest
//! of the plan, and a rejection throws the plan away and replans from
//! scratch. Because each plan executes at least one action, an episode
//! always ends within the step budget.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::grammar::SceneView;
use crate::lifelong::{Sighting, TaskTrace};
use crate::model::{ActionCommand, Outcome, StepRecord, TaskResult, TerminatedBy, Verb};
use crate::orchestrator::{MemoryContext, Orchestrator, UpdateEvent};
use crate::preprocess::Preprocessor;
use crate::reasoner::{Gateway, Role};
use crate::sim::{Profile, Simulator, TaskSpec, NAV_POINTS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub plan_id: u32,
    pub steps: Vec<ActionCommand>,
    pub rationale: String,
    pub created_at_step: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Approve,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticVerdict {
    pub decision: Decision,
    pub reason: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("planner returned no usable step")]
    EmptyPlan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLatency {
    pub gather_ms: f64,
    pub dispatch_ms: f64,
}

/// One line of the trajectory log: an executed step, or a proposal the
/// critic rejected (then `step` and `outcome` are absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub task_id: String,
    pub pass: u32,
    pub plan_id: u32,
    /// One-based position within the plan.
    pub plan_step: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<u32>,
    pub action: ActionCommand,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<CriticVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency: Option<StepLatency>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub profile: Profile,
    pub run_seed: u64,
    pub failure_p: f64,
    /// Overrides the profile's step budget.
    pub step_budget: Option<u32>,
    pub critic_enabled: bool,
    /// Attach wall-clock timings to trajectory records.
    pub record_latency: bool,
}

impl AgentConfig {
    pub fn new(profile: Profile, run_seed: u64) -> Self {
        AgentConfig {
            profile,
            run_seed,
            failure_p: profile.default_failure_p(),
            step_budget: None,
            critic_enabled: true,
            record_latency: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub result: TaskResult,
    pub trajectory: Vec<TrajectoryRecord>,
    pub trace: TaskTrace,
    pub plans: u32,
}

/// Keep steps whose verb belongs to `verbs` and whose target is well formed.
pub fn validate_steps(raw: &Value, verbs: &[Verb]) -> Vec<ActionCommand> {
    let mut out = Vec::new();
    for step in raw.as_array().into_iter().flatten() {
        let verb_name = step["verb"].as_str().unwrap_or_default();
        let Some(verb) = Verb::parse(verb_name).filter(|v| verbs.contains(v)) else {
            log::warn!("dropping plan step with verb `{verb_name}`");
            continue;
        };
        match ActionCommand::new(verb, step["target"].as_str()) {
            Ok(a) => out.push(a),
            Err(e) => log::warn!("dropping plan step {step}: {e}"),
        }
    }
    out
}

/// Records what the agent saw during a task for the memory extractor.
#[derive(Debug, Default)]
struct TraceBuilder {
    sightings: Vec<Sighting>,
    explored: Vec<String>,
    steps: Vec<StepRecord>,
}

impl TraceBuilder {
    fn observe(&mut self, text: &str, step: u32) {
        let view = SceneView::parse(text);
        for (object, placement, support) in &view.seen {
            if !self.sightings.iter().any(|s| &s.object == object) {
                self.sightings.push(Sighting {
                    object: object.clone(),
                    placement: placement.as_str().to_string(),
                    location: support.clone(),
                    step,
                });
            }
        }
        if let Some(loc) = &view.location {
            let closed = view.has_state(loc, "closed");
            if !closed && !self.explored.contains(loc) {
                self.explored.push(loc.clone());
            }
        }
    }
}

pub struct Agent<'a> {
    gateway: Arc<Gateway>,
    memory: &'a Orchestrator,
    preprocessor: Preprocessor,
    config: AgentConfig,
}

impl<'a> Agent<'a> {
    pub fn new(gateway: Arc<Gateway>, memory: &'a Orchestrator, config: AgentConfig) -> Self {
        Agent {
            preprocessor: Preprocessor::new(gateway.clone()),
            gateway,
            memory,
            config,
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    fn verb_names(&self) -> Vec<&'static str> {
        self.config.profile.verbs().into_iter().map(Verb::as_str).collect()
    }

    fn base_payload(&self, task: &TaskSpec, observation: &str, ctx: &MemoryContext) -> Value {
        json!({
            "task_id": task.id,
            "instruction": task.instruction,
            "observation": observation,
            "verbs": self.verb_names(),
            "nav_points": NAV_POINTS,
            "context": ctx.to_json(),
        })
    }

    /// Ask the planner; an empty result is retried once with feedback.
    pub fn plan(
        &self,
        task: &TaskSpec,
        observation: &str,
        ctx: &MemoryContext,
        feedback: Option<&str>,
    ) -> Result<(Vec<ActionCommand>, String), PlanError> {
        let verbs = self.config.profile.verbs();
        let mut payload = self.base_payload(task, observation, ctx);
        if let Some(f) = feedback {
            payload["feedback"] = json!(f);
        }
        for attempt in 0..2 {
            match self.gateway.invoke(Role::Planner, &payload) {
                Ok(v) => {
                    let steps = validate_steps(&v["steps"], &verbs);
                    if !steps.is_empty() {
                        let rationale = v["rationale"].as_str().unwrap_or_default().to_string();
                        return Ok((steps, rationale));
                    }
                }
                Err(e) => log::warn!("planner call failed: {e}"),
            }
            if attempt == 0 {
                payload["feedback"] = json!(
                    "the previous plan had no executable step; propose at least one action from the allowed verbs"
                );
            }
        }
        Err(PlanError::EmptyPlan)
    }

    /// Ask the critic about `remaining[0]`; call failures approve.
    pub fn critique(
        &self,
        task: &TaskSpec,
        observation: &str,
        latest_summary: &str,
        ctx: &MemoryContext,
        remaining: &[ActionCommand],
    ) -> CriticVerdict {
        let mut payload = self.base_payload(task, observation, ctx);
        payload["proposed"] = json!(remaining[0]);
        payload["remaining"] = json!(remaining);
        payload["latest_summary"] = json!(latest_summary);
        match self.gateway.invoke(Role::Critic, &payload) {
            Ok(v) if v["decision"] == "reject" => CriticVerdict {
                decision: Decision::Reject,
                reason: v["reason"].as_str().unwrap_or_default().to_string(),
            },
            Ok(v) => CriticVerdict {
                decision: Decision::Approve,
                reason: v["reason"].as_str().unwrap_or_default().to_string(),
            },
            Err(e) => {
                log::warn!("critic call failed, approving: {e}");
                CriticVerdict {
                    decision: Decision::Approve,
                    reason: format!("critic unavailable: {e}"),
                }
            }
        }
    }

    pub fn run_episode(&self, task: &TaskSpec, pass: u32) -> EpisodeOutcome {
        let memory = self.memory;
        memory.begin_task();
        self.gateway.reset_budget();
        let mut sim = Simulator::new(self.config.profile, task.clone(), self.config.run_seed, self.config.failure_p);
        if let Some(b) = self.config.step_budget {
            sim = sim.with_budget(b);
        }
        let timed = self.config.record_latency;
        let mut trace = TraceBuilder::default();
        let mut trajectory = Vec::new();

        let mut observation = sim.observe();
        trace.observe(&observation.text, 0);
        let mut query = task.instruction.clone();
        let mut latest_summary = String::new();
        match self
            .preprocessor
            .preprocess(&observation, &task.instruction, None, Outcome::Success, None)
        {
            Ok(pre) => {
                memory.dispatch_update(&UpdateEvent::Action {
                    step: None,
                    triplets: pre.triplets,
                });
                query = pre.query;
                latest_summary = pre.summary;
            }
            Err(e) => log::error!("initial observation unusable: {e}"),
        }

        let mut plan: Option<Plan> = None;
        let mut cursor = 0usize;
        let mut plans = 0u32;
        let mut feedback: Option<String> = None;
        let mut aborted = false;

        while sim.terminated().is_none() {
            let gather_start = Instant::now();
            let ctx = memory.gather_context(&query);
            let gather_ms = ms(gather_start);

            if plan.as_ref().is_none_or(|p| cursor >= p.steps.len()) {
                match self.plan(task, &observation.text, &ctx, feedback.as_deref()) {
                    Ok((steps, rationale)) => {
                        plans += 1;
                        plan = Some(Plan {
                            plan_id: plans,
                            steps,
                            rationale,
                            created_at_step: sim.steps_used(),
                        });
                        cursor = 0;
                        feedback = None;
                    }
                    Err(e) => {
                        log::warn!("task {}: {e}; aborting episode", task.id);
                        aborted = true;
                        break;
                    }
                }
            }
            let current = plan.as_ref().expect("plan present");
            let action = current.steps[cursor].clone();

            let mut verdict = None;
            if cursor > 0 && self.config.critic_enabled {
                let v = self.critique(task, &observation.text, &latest_summary, &ctx, &current.steps[cursor..]);
                if v.decision == Decision::Reject {
                    trajectory.push(TrajectoryRecord {
                        task_id: task.id.clone(),
                        pass,
                        plan_id: current.plan_id,
                        plan_step: cursor as u32 + 1,
                        step: None,
                        action,
                        verdict: Some(v.clone()),
                        outcome: None,
                        failure_reason: None,
                        latency: timed.then_some(StepLatency {
                            gather_ms,
                            dispatch_ms: 0.0,
                        }),
                    });
                    feedback = Some(format!("the critic rejected the last plan: {}", v.reason));
                    plan = None;
                    continue;
                }
                verdict = Some(v);
            }

            let result = sim.step(&action);
            let step_index = sim.steps_used();
            observation = result.observation.clone();
            trace.observe(&observation.text, step_index);

            let mut dispatch_ms = 0.0;
            match self.preprocessor.preprocess(
                &observation,
                &task.instruction,
                Some(&action),
                result.outcome,
                result.failure_reason.as_deref(),
            ) {
                Ok(pre) => {
                    let record = StepRecord {
                        step_index,
                        action: action.clone(),
                        summary: pre.summary.clone(),
                        outcome: result.outcome,
                        failure_reason: result.failure_reason.clone(),
                    };
                    trace.steps.push(record.clone());
                    let report = memory.dispatch_update(&UpdateEvent::Action {
                        step: Some(record),
                        triplets: pre.triplets,
                    });
                    dispatch_ms = report.latency.as_secs_f64() * 1e3;
                    query = pre.query;
                    latest_summary = pre.summary;
                }
                Err(e) => log::error!("step {step_index} observation unusable: {e}"),
            }
            trajectory.push(TrajectoryRecord {
                task_id: task.id.clone(),
                pass,
                plan_id: current.plan_id,
                plan_step: cursor as u32 + 1,
                step: Some(step_index),
                action,
                verdict,
                outcome: Some(result.outcome),
                failure_reason: result.failure_reason,
                latency: timed.then_some(StepLatency { gather_ms, dispatch_ms }),
            });
            cursor += 1;
        }

        let (scn, gcn) = sim.score();
        let terminated_by = if aborted {
            TerminatedBy::Aborted
        } else {
            sim.terminated().expect("loop ends on termination")
        };
        let result = TaskResult {
            task_id: task.id.clone(),
            scn,
            gcn,
            steps_used: sim.steps_used(),
            terminated_by,
        };
        let trace = TaskTrace {
            task_id: task.id.clone(),
            instruction: task.instruction.clone(),
            result: result.clone(),
            steps: trace.steps,
            sightings: trace.sightings,
            explored: trace.explored,
        };
        memory.dispatch_update(&UpdateEvent::Task { trace: trace.clone() });
        EpisodeOutcome {
            result,
            trajectory,
            trace,
            plans,
        }
    }
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Verbs the trajectory used, for quick assertions.
pub fn executed_verbs(trajectory: &[TrajectoryRecord]) -> BTreeSet<Verb> {
    trajectory
        .iter()
        .filter(|r| r.step.is_some())
        .map(|r| r.action.verb)
        .collect()
}
