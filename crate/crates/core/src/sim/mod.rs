//! Deterministic household-task simulator.
//!
//! A kitchen with five navigation points, a handful of interactive objects
//! and a set of distractor items that never accept actions. The agent sees
//! only what is at its current navigation point; the fridge hides its
//! contents while closed. Goal conditions are ground predicates evaluated
//! against the world, which gives `(scn, gcn)` at any time.
//!
//! Executor unreliability is modelled by failure injection: every step
//! draws one number from a seeded stream, and an otherwise valid action
//! fails with `executor_failure` when the draw falls below `p`.

mod suite;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grammar::{Placement, SceneView, TaskGoal};
use crate::model::{ActionCommand, ModelError, Observation, Outcome, TerminatedBy, Validate, Verb};

pub use suite::{kitchen_suite, load_suite, SuiteError};

pub const NAV_POINTS: [&str; 5] = ["kitchen_table", "sink", "fridge", "oven", "kitchen_counter"];
pub const START_POINT: &str = "kitchen_table";

pub const EXECUTOR_FAILURE: &str = "executor_failure";
pub const UNSUPPORTED: &str = "unsupported_action";

const OPENABLE: [&str; 2] = ["fridge", "oven"];
const SWITCHABLE: [&str; 2] = ["oven", "sink"];
const CONTAINERS: [&str; 2] = ["basket", "plate"];

/// Where each object may start.
fn spawn_points(object: &str) -> &'static [&'static str] {
    match object {
        "banana" | "apple" | "tomato" | "bread" => &["kitchen_table", "sink", "fridge", "oven", "kitchen_counter"],
        "spoon" | "cup" => &["kitchen_table", "sink", "kitchen_counter"],
        _ => &["kitchen_table", "kitchen_counter"],
    }
}

fn distractors(point: &str) -> &'static [&'static str] {
    match point {
        "kitchen_table" => &["napkin", "salt_shaker", "vase"],
        "sink" => &["sponge", "dish_soap", "towel"],
        "fridge" => &["milk_carton", "egg_tray"],
        "oven" => &["oven_mitt", "baking_tray"],
        _ => &["kettle", "toaster", "cutting_board"],
    }
}

/// Placement used for something resting directly at a navigation point.
pub fn point_placement(point: &str) -> Placement {
    if point.ends_with("counter") || point.ends_with("table") {
        Placement::On
    } else {
        Placement::In
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Household benchmark flavour: `find`, `drop` and `slice`, the
    /// environment reports success, 30 steps.
    Alfred,
    /// Real-kitchen flavour: `navigate_to` and `task_complete`, 15 steps,
    /// unreliable executor.
    Realworld,
}

impl Profile {
    pub fn verbs(self) -> Vec<Verb> {
        use Verb::*;
        match self {
            Profile::Alfred => vec![Find, PickUp, PutDownTo, Drop, Open, Close, TurnOn, TurnOff, Slice],
            Profile::Realworld => vec![NavigateTo, PickUp, PutDownTo, Open, Close, TurnOn, TurnOff, TaskComplete],
        }
    }

    pub fn supports(self, verb: Verb) -> bool {
        self.verbs().contains(&verb)
    }

    pub fn step_budget(self) -> u32 {
        match self {
            Profile::Alfred => 30,
            Profile::Realworld => 15,
        }
    }

    pub fn default_failure_p(self) -> f64 {
        match self {
            Profile::Alfred => 0.0,
            Profile::Realworld => 0.1,
        }
    }

    pub fn objects(self) -> Vec<&'static str> {
        let mut o = vec!["banana", "apple", "tomato", "bread", "spoon", "cup", "basket", "plate"];
        if self == Profile::Alfred {
            o.push("knife");
        }
        o
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Alfred => "alfred",
            Profile::Realworld => "realworld",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "alfred" => Ok(Profile::Alfred),
            "realworld" => Ok(Profile::Realworld),
            other => Err(format!("unknown profile `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    PickPlace,
    PickOperatePlace,
    PickGatherPlace,
}

/// Ground goal predicate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predicate {
    /// The object rests directly on or in the receptacle.
    ObjectAt { object: String, receptacle: String },
    /// The object rests directly in the container.
    ObjectIn { object: String, container: String },
    ObjectState { object: String, state: String },
    Holding { object: String },
}

impl Predicate {
    pub fn holds(&self, w: &WorldState) -> bool {
        match self {
            Predicate::ObjectAt { object, receptacle: r } | Predicate::ObjectIn { object, container: r } => {
                w.support_of(object).is_some_and(|(_, s)| s == r)
            }
            Predicate::ObjectState { object, state } => w.has_state(object, state),
            Predicate::Holding { object } => w.holding.as_deref() == Some(object),
        }
    }
}

/// Goal predicates implied by an instruction.
pub fn goal_conditions(goal: &TaskGoal) -> Vec<Predicate> {
    match goal {
        TaskGoal::PickUp { object } => vec![Predicate::Holding { object: object.clone() }],
        TaskGoal::PickPlace { object, receptacle, .. } => vec![Predicate::ObjectAt {
            object: object.clone(),
            receptacle: receptacle.clone(),
        }],
        TaskGoal::Operate {
            operation,
            object,
            receptacle,
            ..
        } => vec![
            Predicate::ObjectState {
                object: object.clone(),
                state: operation.result_state().to_string(),
            },
            Predicate::ObjectAt {
                object: object.clone(),
                receptacle: receptacle.clone(),
            },
        ],
        TaskGoal::Gather {
            object,
            container,
            receptacle,
            ..
        } => vec![
            Predicate::ObjectIn {
                object: object.clone(),
                container: container.clone(),
            },
            Predicate::ObjectAt {
                object: container.clone(),
                receptacle: receptacle.clone(),
            },
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub instruction: String,
    pub category: Category,
    pub goal_conditions: Vec<Predicate>,
    pub initial_seed: u64,
}

impl TaskSpec {
    /// Build a task whose goal conditions follow from the instruction.
    pub fn from_instruction(id: &str, instruction: &str, category: Category, initial_seed: u64) -> Option<TaskSpec> {
        let goal = TaskGoal::parse(instruction)?;
        Some(TaskSpec {
            id: id.to_string(),
            instruction: goal.instruction(),
            category,
            goal_conditions: goal_conditions(&goal),
            initial_seed,
        })
    }

    pub fn gcn(&self) -> u32 {
        self.goal_conditions.len() as u32
    }
}

impl Validate for TaskSpec {
    fn validate(&self) -> Result<(), ModelError> {
        if self.id.trim().is_empty() {
            return Err(ModelError::invariant("id", "task id is empty"));
        }
        if self.goal_conditions.is_empty() {
            return Err(ModelError::invariant("goal_conditions", "a task needs at least one goal condition"));
        }
        if TaskGoal::parse(&self.instruction).is_none() {
            return Err(ModelError::invariant("instruction", "instruction does not follow a known template"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectInfo {
    /// `None` while held.
    pub support: Option<(Placement, String)>,
    pub states: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    pub nav_points: Vec<String>,
    pub objects: BTreeMap<String, ObjectInfo>,
    /// States of the navigation points themselves (`fridge` closed, ...).
    pub fixtures: BTreeMap<String, BTreeSet<String>>,
    pub agent_at: String,
    pub holding: Option<String>,
}

impl WorldState {
    pub fn is_nav_point(&self, name: &str) -> bool {
        self.nav_points.iter().any(|p| p == name)
    }

    pub fn is_object(&self, name: &str) -> bool {
        self.objects.contains_key(name)
    }

    pub fn support_of(&self, object: &str) -> Option<&(Placement, String)> {
        self.objects.get(object)?.support.as_ref()
    }

    pub fn has_state(&self, thing: &str, state: &str) -> bool {
        self.objects
            .get(thing)
            .map(|o| &o.states)
            .or_else(|| self.fixtures.get(thing))
            .is_some_and(|s| s.contains(state))
    }

    /// Navigation point an object currently belongs to; the agent's
    /// position for held objects and what they carry.
    pub fn nav_of(&self, thing: &str) -> Option<&str> {
        let mut cur = thing;
        for _ in 0..=self.objects.len() {
            if let Some(p) = self.nav_points.iter().find(|p| *p == cur) {
                return Some(p);
            }
            match &self.objects.get(cur)?.support {
                Some((_, s)) => cur = s,
                None => return Some(&self.agent_at),
            }
        }
        None
    }

    /// First closed receptacle enclosing the object.
    pub fn closed_enclosure(&self, thing: &str) -> Option<&str> {
        let mut cur = thing;
        for _ in 0..=self.objects.len() {
            let (placement, sup) = self.support_of(cur)?;
            if *placement == Placement::In && self.has_state(sup, "closed") {
                return Some(sup);
            }
            cur = sup;
        }
        None
    }

    /// Reachable from where the agent stands and not hidden.
    pub fn reachable(&self, thing: &str) -> bool {
        self.nav_of(thing) == Some(self.agent_at.as_str()) && self.closed_enclosure(thing).is_none()
    }

    pub fn view(&self, failure: Option<&str>) -> SceneView {
        let here = self.agent_at.as_str();
        let seen: Vec<(String, Placement, String)> = self
            .objects
            .iter()
            .filter(|(name, o)| o.support.is_some() && self.reachable(name))
            .map(|(name, o)| {
                let (p, s) = o.support.clone().expect("filtered");
                (name.clone(), p, s)
            })
            .collect();
        let mut states: Vec<(String, String)> = self
            .fixtures
            .get(here)
            .into_iter()
            .flatten()
            .map(|s| (here.to_string(), s.clone()))
            .collect();
        for (name, o) in &self.objects {
            if seen.iter().any(|(n, _, _)| n == name) || self.holding.as_deref() == Some(name.as_str()) {
                states.extend(o.states.iter().map(|s| (name.clone(), s.clone())));
            }
        }
        SceneView {
            location: Some(here.to_string()),
            seen,
            states,
            holding: Some(self.holding.clone()),
            distractors: distractors(here).iter().map(|d| d.to_string()).collect(),
            failure: failure.map(String::from),
        }
    }
}

impl Validate for WorldState {
    fn validate(&self) -> Result<(), ModelError> {
        if !self.is_nav_point(&self.agent_at) {
            return Err(ModelError::invariant("agent_at", "agent is not at a navigation point"));
        }
        let held: Vec<&String> = self
            .objects
            .iter()
            .filter(|(_, o)| o.support.is_none())
            .map(|(n, _)| n)
            .collect();
        if held.len() > 1 {
            return Err(ModelError::invariant("objects", "more than one object is held"));
        }
        if held.first().copied() != self.holding.as_ref() {
            return Err(ModelError::invariant("holding", "held object and hand disagree"));
        }
        for name in self.objects.keys() {
            if self.nav_of(name).is_none() {
                return Err(ModelError::invariant(format!("objects.{name}"), "object has no location"));
            }
        }
        Ok(())
    }
}

/// Stable 64-bit mix of two seeds and a stream label.
fn mix_seed(a: u64, b: u64, stream: u64) -> u64 {
    let mut z = a ^ b.rotate_left(32) ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    for _ in 0..2 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Initial world for a task: object placements drawn from the seeds, with
/// placements that would already satisfy an `ObjectAt` goal redrawn.
pub fn generate_world(profile: Profile, task: &TaskSpec, run_seed: u64) -> WorldState {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(run_seed, task.initial_seed, 0));
    let mut objects = BTreeMap::new();
    for name in profile.objects() {
        let choices = spawn_points(name);
        let point = loop {
            let p = *choices.choose(&mut rng).expect("non-empty spawn list");
            let satisfied = task.goal_conditions.iter().any(|g| {
                matches!(g, Predicate::ObjectAt { object, receptacle } if object == name && receptacle == p)
            });
            if !satisfied {
                break p;
            }
        };
        objects.insert(
            name.to_string(),
            ObjectInfo {
                support: Some((point_placement(point), point.to_string())),
                states: BTreeSet::new(),
            },
        );
    }
    let mut fixtures = BTreeMap::new();
    for p in OPENABLE {
        fixtures.entry(p.to_string()).or_insert_with(BTreeSet::new).insert("closed".to_string());
    }
    for p in SWITCHABLE {
        fixtures.entry(p.to_string()).or_insert_with(BTreeSet::new).insert("off".to_string());
    }
    WorldState {
        nav_points: NAV_POINTS.iter().map(|s| s.to_string()).collect(),
        objects,
        fixtures,
        agent_at: START_POINT.to_string(),
        holding: None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepResult {
    pub observation: Observation,
    pub outcome: Outcome,
    pub failure_reason: Option<String>,
    /// Set when the episode is over after this step.
    pub terminated: Option<TerminatedBy>,
}

/// One episode of one task.
#[derive(Debug, Clone)]
pub struct Simulator {
    profile: Profile,
    task: TaskSpec,
    world: WorldState,
    failure_p: f64,
    rng: ChaCha8Rng,
    steps: u32,
    budget: u32,
    terminated: Option<TerminatedBy>,
}

impl Simulator {
    pub fn new(profile: Profile, task: TaskSpec, run_seed: u64, failure_p: f64) -> Self {
        let world = generate_world(profile, &task, run_seed);
        let rng = ChaCha8Rng::seed_from_u64(mix_seed(run_seed, task.initial_seed, 1));
        Simulator {
            profile,
            budget: profile.step_budget(),
            task,
            world,
            failure_p: failure_p.clamp(0.0, 1.0),
            rng,
            steps: 0,
            terminated: None,
        }
    }

    pub fn with_budget(mut self, budget: u32) -> Self {
        self.budget = budget;
        self
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn steps_used(&self) -> u32 {
        self.steps
    }

    pub fn budget(&self) -> u32 {
        self.budget
    }

    pub fn terminated(&self) -> Option<TerminatedBy> {
        self.terminated
    }

    fn observation(&self, failure: Option<&str>) -> Observation {
        Observation {
            task_id: self.task.id.clone(),
            step_index: self.steps,
            text: self.world.view(failure).render(),
            image_refs: Vec::new(),
        }
    }

    /// Observation of the initial state.
    pub fn observe(&self) -> Observation {
        self.observation(None)
    }

    pub fn score(&self) -> (u32, u32) {
        let scn = self
            .task
            .goal_conditions
            .iter()
            .filter(|g| g.holds(&self.world))
            .count() as u32;
        (scn, self.task.gcn())
    }

    /// Why the action cannot run in the current world, if it cannot.
    fn check(&self, a: &ActionCommand) -> Result<(), String> {
        let w = &self.world;
        if !self.profile.supports(a.verb) {
            return Err(UNSUPPORTED.into());
        }
        let t = a.target_str();
        let here = |x: &str| -> Result<(), String> {
            if !w.is_nav_point(x) && !w.is_object(x) {
                return Err(format!("{x} is not here"));
            }
            if w.nav_of(x) != Some(w.agent_at.as_str()) {
                return Err(format!("{x} is not here"));
            }
            if let Some(c) = w.closed_enclosure(x) {
                return Err(format!("{c} is closed"));
            }
            Ok(())
        };
        match a.verb {
            Verb::NavigateTo => {
                if w.is_nav_point(t) {
                    Ok(())
                } else {
                    Err(format!("{t} is not a place"))
                }
            }
            Verb::Find => {
                if w.is_nav_point(t) || (w.is_object(t) && w.closed_enclosure(t).is_none()) {
                    Ok(())
                } else {
                    Err(format!("{t} cannot be found"))
                }
            }
            Verb::PickUp => {
                if w.holding.is_some() {
                    return Err("hands full".into());
                }
                if !w.is_object(t) {
                    return Err(format!("{t} cannot be picked up"));
                }
                here(t)
            }
            Verb::PutDownTo => {
                let Some(h) = &w.holding else {
                    return Err("not holding anything".into());
                };
                if h == t || self.inside_of(t, h) {
                    return Err(format!("cannot put {h} into {t}"));
                }
                if w.is_object(t) && !CONTAINERS.contains(&t) {
                    return Err(format!("{t} cannot hold objects"));
                }
                here(t)?;
                if w.has_state(t, "closed") {
                    return Err(format!("{t} is closed"));
                }
                Ok(())
            }
            Verb::Drop => {
                if w.holding.is_none() {
                    return Err("not holding anything".into());
                }
                Ok(())
            }
            Verb::Open | Verb::Close => {
                if !OPENABLE.contains(&t) {
                    return Err(format!("{t} cannot be opened"));
                }
                here(t)
            }
            Verb::TurnOn | Verb::TurnOff => {
                if !SWITCHABLE.contains(&t) {
                    return Err(format!("{t} cannot be switched"));
                }
                here(t)
            }
            Verb::Slice => {
                if w.holding.as_deref() != Some("knife") {
                    return Err("not holding a knife".into());
                }
                if !w.is_object(t) || t == "knife" {
                    return Err(format!("{t} cannot be sliced"));
                }
                here(t)
            }
            Verb::TaskComplete => Ok(()),
        }
    }

    /// True when `thing` rests, directly or not, inside `outer`.
    fn inside_of(&self, thing: &str, outer: &str) -> bool {
        let mut cur = thing;
        for _ in 0..=self.world.objects.len() {
            match self.world.support_of(cur) {
                Some((_, s)) if s == outer => return true,
                Some((_, s)) => cur = s,
                None => return false,
            }
        }
        false
    }

    fn set_fixture(&mut self, thing: &str, on: &str, off: &str) {
        let s = self.world.fixtures.entry(thing.to_string()).or_default();
        s.remove(off);
        s.insert(on.to_string());
    }

    fn apply(&mut self, a: &ActionCommand) {
        let t = a.target_str().to_string();
        let w = &mut self.world;
        match a.verb {
            Verb::NavigateTo => w.agent_at = t,
            Verb::Find => {
                let to = w.nav_of(&t).expect("checked").to_string();
                w.agent_at = to;
            }
            Verb::PickUp => {
                w.objects.get_mut(&t).expect("checked").support = None;
                w.holding = Some(t);
            }
            Verb::PutDownTo => {
                let h = w.holding.take().expect("checked");
                let placement = if w.is_nav_point(&t) {
                    point_placement(&t)
                } else {
                    Placement::In
                };
                w.objects.get_mut(&h).expect("held object exists").support = Some((placement, t));
            }
            Verb::Drop => {
                let h = w.holding.take().expect("checked");
                let at = w.agent_at.clone();
                w.objects.get_mut(&h).expect("held object exists").support = Some((point_placement(&at), at));
            }
            Verb::Open => self.set_fixture(&t, "open", "closed"),
            Verb::Close => self.set_fixture(&t, "closed", "open"),
            Verb::TurnOn => self.set_fixture(&t, "on", "off"),
            Verb::TurnOff => self.set_fixture(&t, "off", "on"),
            Verb::Slice => {
                w.objects.get_mut(&t).expect("checked").states.insert("sliced".into());
            }
            Verb::TaskComplete => {}
        }
    }

    /// Appliance effects at the end of a step: anything inside a running
    /// oven is heated, anything inside a running sink is cleaned.
    fn tick(&mut self) {
        for (appliance, state) in [("oven", "heated"), ("sink", "cleaned")] {
            if !self.world.has_state(appliance, "on") {
                continue;
            }
            let inside: Vec<String> = self
                .world
                .objects
                .iter()
                .filter(|(_, o)| matches!(&o.support, Some((Placement::In, s)) if s == appliance))
                .map(|(n, _)| n.clone())
                .collect();
            for n in inside {
                self.world.objects.get_mut(&n).expect("listed").states.insert(state.into());
            }
        }
    }

    /// Execute one action. Calls after the episode ended change nothing.
    pub fn step(&mut self, a: &ActionCommand) -> StepResult {
        if let Some(t) = self.terminated {
            return StepResult {
                observation: self.observation(Some("episode is over")),
                outcome: Outcome::Failure,
                failure_reason: Some("episode is over".into()),
                terminated: Some(t),
            };
        }
        self.steps += 1;
        let draw: f64 = self.rng.random();
        let mut verdict = self.check(a);
        if verdict.is_ok() && a.verb != Verb::TaskComplete && draw < self.failure_p {
            verdict = Err(EXECUTOR_FAILURE.into());
        }
        if verdict.is_ok() {
            self.apply(a);
        }
        self.tick();

        let (scn, gcn) = self.score();
        self.terminated = if a.verb == Verb::TaskComplete {
            Some(if scn == gcn {
                TerminatedBy::Success
            } else {
                TerminatedBy::SelfTerminated
            })
        } else if self.profile == Profile::Alfred && scn == gcn {
            Some(TerminatedBy::Success)
        } else if self.steps >= self.budget {
            Some(TerminatedBy::StepBudget)
        } else {
            None
        };

        let failure = verdict.err();
        StepResult {
            observation: self.observation(failure.as_deref()),
            outcome: if failure.is_some() {
                Outcome::Failure
            } else {
                Outcome::Success
            },
            failure_reason: failure,
            terminated: self.terminated,
        }
    }
}
