//! Backends and end-to-end scenarios shared by the integration tests.

#![allow(dead_code)]

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde_json::{json, Value};

use robomemory::agent::{Agent, AgentConfig, EpisodeOutcome};
use robomemory::grammar::TaskGoal;
use robomemory::model::{ActionCommand, Outcome, Verb};
use robomemory::orchestrator::{Disabled, Orchestrator, OrchestratorConfig, UpdateEvent};
use robomemory::preprocess::Preprocessor;
use robomemory::reasoner::{Backend, Belief, Gateway, OracleBackend, ReasonerError, Role};
use robomemory::sim::{generate_world, Category, Profile, TaskSpec};
use robomemory::vector::HashEmbedder;

pub fn memory(disabled: Disabled) -> Orchestrator {
    let config = OrchestratorConfig {
        disabled,
        ..OrchestratorConfig::default()
    };
    Orchestrator::new(config, Arc::new(HashEmbedder::default()), Some(Arc::new(Gateway::oracle())))
}

fn plan_reply(steps: &[ActionCommand], rationale: &str) -> Value {
    json!({"steps": steps, "rationale": rationale})
}

fn oracle_plan(payload: &Value) -> Result<Vec<ActionCommand>, ReasonerError> {
    let v = OracleBackend::default().call(Role::Planner, payload)?;
    Ok(serde_json::from_value(v["steps"].clone()).expect("oracle steps parse"))
}

/// Critic that rejects everything; optionally a planner that never moves
/// the task forward.
pub struct Adversarial {
    pub wander: bool,
}

impl Backend for Adversarial {
    fn call(&self, role: Role, payload: &Value) -> Result<Value, ReasonerError> {
        match role {
            Role::Critic => Ok(json!({"decision": "reject", "reason": "rejected by test critic"})),
            Role::Planner if self.wander => {
                let can_navigate = payload["verbs"]
                    .as_array()
                    .is_some_and(|v| v.iter().any(|x| x == "navigate_to"));
                let verb = if can_navigate { Verb::NavigateTo } else { Verb::Find };
                let steps: Vec<ActionCommand> =
                    ["sink", "fridge", "oven"].iter().map(|p| ActionCommand::on(verb, p)).collect();
                Ok(plan_reply(&steps, "look around"))
            }
            _ => OracleBackend::default().call(role, payload),
        }
    }
}

/// Planner that forgets a placed object: every put into the container is
/// followed by picking the object up again.
pub struct RedundantPick {
    pub object: &'static str,
    pub container: &'static str,
}

impl Backend for RedundantPick {
    fn call(&self, role: Role, payload: &Value) -> Result<Value, ReasonerError> {
        if role != Role::Planner {
            return OracleBackend::default().call(role, payload);
        }
        let mut steps = Vec::new();
        for a in oracle_plan(payload)? {
            let put_into = a.verb == Verb::PutDownTo && a.target_str() == self.container;
            steps.push(a);
            if put_into {
                steps.push(ActionCommand::on(Verb::PickUp, self.object));
            }
        }
        Ok(plan_reply(&steps, "pick up the object for the container"))
    }
}

/// Planner that once tries to pick up the object it is already holding.
#[derive(Default)]
pub struct DoublePick {
    fired: AtomicBool,
}

impl Backend for DoublePick {
    fn call(&self, role: Role, payload: &Value) -> Result<Value, ReasonerError> {
        if role == Role::Planner {
            let belief = Belief::from_payload(payload);
            if let Some(held) = belief.holding.clone() {
                if !self.fired.swap(true, Ordering::SeqCst) {
                    return Ok(plan_reply(&[ActionCommand::on(Verb::PickUp, &held)], "grab it"));
                }
            }
        }
        OracleBackend::default().call(role, payload)
    }
}

pub fn run_pair(
    backend: Arc<dyn Backend>,
    memory: &Orchestrator,
    config: AgentConfig,
    task: &TaskSpec,
) -> (EpisodeOutcome, EpisodeOutcome) {
    let agent = Agent::new(Arc::new(Gateway::new(backend)), memory, config);
    let first = agent.run_episode(task, 1);
    let second = agent.run_episode(task, 2);
    (first, second)
}

fn executed(ep: &EpisodeOutcome) -> Vec<String> {
    ep.trajectory
        .iter()
        .filter(|r| r.step.is_some())
        .map(|r| r.action.to_string())
        .collect()
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// A banana task whose banana sits on the last search point.
pub fn banana_on_counter_task() -> TaskSpec {
    (0..10_000)
        .map(|seed| {
            TaskSpec::from_instruction("banana", "put the banana on the kitchen_table", Category::PickPlace, seed)
                .expect("instruction parses")
        })
        .find(|t| {
            let w = generate_world(Profile::Realworld, t, 0);
            w.support_of("banana").is_some_and(|(_, s)| s == "kitchen_counter")
        })
        .expect("some seed puts the banana on the counter")
}

/// Pass 1 searches everywhere else and runs out of steps; pass 2 reads the
/// lesson and goes straight to the counter.
pub fn banana_search(disabled: Disabled) -> Result<(EpisodeOutcome, EpisodeOutcome), String> {
    let task = banana_on_counter_task();
    let mem = memory(disabled);
    let config = AgentConfig {
        failure_p: 0.0,
        step_budget: Some(5),
        ..AgentConfig::new(Profile::Realworld, 0)
    };
    let (p1, p2) = run_pair(Arc::new(OracleBackend::default()), &mem, config, &task);
    Ok((p1, p2))
}

pub fn scenario_banana_search() -> Result<(), String> {
    let (p1, p2) = banana_search(Disabled::none())?;
    ensure(!p1.result.succeeded(), format!("pass 1 should fail: {:?}", executed(&p1)))?;
    ensure(
        !executed(&p1).iter().any(|a| a == "navigate_to(kitchen_counter)"),
        "pass 1 should not reach the counter",
    )?;
    ensure(p2.result.succeeded(), format!("pass 2 should succeed: {:?}", executed(&p2)))?;
    ensure(
        executed(&p2).first().map(String::as_str) == Some("navigate_to(kitchen_counter)"),
        format!("pass 2 should start at the counter: {:?}", executed(&p2)),
    )?;
    let (_, control) = banana_search(Disabled { longterm: true, ..Disabled::none() })?;
    ensure(!control.result.succeeded(), "without long-term memory pass 2 should still fail")
}

/// After a pick-up the graph says `agent holds X` and no longer `agent near X`.
pub fn scenario_near_to_holds() -> Result<(), String> {
    let mem = memory(Disabled::none());
    let pre = Preprocessor::offline();
    let task = "put the banana on the kitchen_table";
    let frames = [
        (0, "you are at kitchen_counter\nyou see banana on kitchen_counter\nholding: nothing", None),
        (1, "you are at kitchen_counter\nholding: banana", Some(ActionCommand::on(Verb::PickUp, "banana"))),
    ];
    for (step_index, text, action) in frames {
        let obs = robomemory::model::Observation {
            task_id: "t".into(),
            step_index,
            text: text.into(),
            image_refs: vec![],
        };
        let out = pre
            .preprocess(&obs, task, action.as_ref(), Outcome::Success, None)
            .map_err(|e| e.to_string())?;
        mem.dispatch_update(&UpdateEvent::Action { step: None, triplets: out.triplets });
    }
    let ctx = mem.gather_context("where is the banana");
    let lines: Vec<&str> = ctx.spatial.lines().collect();
    ensure(lines.contains(&"agent holds banana"), format!("missing holds: {lines:?}"))?;
    ensure(!lines.contains(&"agent near banana"), format!("stale near: {lines:?}"))
}

pub fn spoon_task() -> TaskSpec {
    TaskSpec::from_instruction(
        "spoon",
        "put the spoon in the plate and put the plate on the kitchen_table",
        Category::PickGatherPlace,
        115,
    )
    .expect("instruction parses")
}

pub fn redundant_spoon(critic: bool) -> EpisodeOutcome {
    let mem = memory(Disabled::none());
    let config = AgentConfig {
        failure_p: 0.0,
        critic_enabled: critic,
        ..AgentConfig::new(Profile::Realworld, 0)
    };
    let backend = RedundantPick { object: "spoon", container: "plate" };
    let agent = Agent::new(Arc::new(Gateway::new(Arc::new(backend))), &mem, config);
    agent.run_episode(&spoon_task(), 1)
}

/// The critic stops a planner that wants the spoon back out of the plate.
pub fn scenario_redundant_spoon() -> Result<(), String> {
    let with = redundant_spoon(true);
    ensure(with.result.succeeded(), format!("critic run should succeed: {:?}", executed(&with)))?;
    ensure(
        with.trajectory.iter().any(|r| {
            r.verdict.as_ref().is_some_and(|v| v.reason.contains("redundant")) && r.action.target_str() == "spoon"
        }) || with.trajectory.iter().any(|r| {
            r.verdict.as_ref().is_some_and(|v| v.reason.contains("pick_up(spoon)") && v.reason.contains("redundant"))
        }),
        "critic should call the second spoon pick-up redundant",
    )?;
    ensure(
        executed(&with).iter().filter(|a| *a == "pick_up(spoon)").count() == 1,
        format!("spoon picked more than once: {:?}", executed(&with)),
    )?;
    let without = redundant_spoon(false);
    ensure(!without.result.succeeded(), format!("run without critic should fail: {:?}", executed(&without)))
}

/// A pick-up with full hands becomes a semantic experience entity.
pub fn scenario_hands_full() -> Result<(), String> {
    let mem = memory(Disabled::none());
    let config = AgentConfig {
        failure_p: 0.0,
        ..AgentConfig::new(Profile::Realworld, 0)
    };
    let task = TaskSpec::from_instruction("apple", "put the apple in the fridge", Category::PickPlace, 102)
        .expect("instruction parses");
    let agent = Agent::new(Arc::new(Gateway::new(Arc::new(DoublePick::default()))), &mem, config);
    let ep = agent.run_episode(&task, 1);
    let failed = ep
        .trajectory
        .iter()
        .find(|r| r.outcome == Some(Outcome::Failure))
        .ok_or("no failed step recorded")?;
    ensure(
        failed.action.verb == Verb::PickUp && failed.failure_reason.as_deref() == Some("hands full"),
        format!("unexpected failure {failed:?}"),
    )?;
    let texts: Vec<String> = mem.with_semantic(|s| s.store.entities().map(|e| e.text.clone()).collect());
    ensure(
        texts.iter().any(|t| t == "pick_up fails when already holding an object"),
        format!("no hands-full entity among {texts:?}"),
    )?;
    ensure(ep.result.succeeded(), "the task still completes after the failed pick-up")
}

/// Every object the goal mentions.
pub fn goal_objects(task: &TaskSpec) -> Vec<String> {
    TaskGoal::parse(&task.instruction)
        .map(|g| g.objects().into_iter().map(String::from).collect())
        .unwrap_or_default()
}
