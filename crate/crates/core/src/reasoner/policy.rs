//! Rule-based planner and critic.
//!
//! Both roles start by folding everything the agent currently knows into a
//! [`Belief`]: the live observation first, then the spatial graph lines,
//! the temporal summaries, and hints recovered from long-term memories of
//! earlier attempts at the same task. The planner simulates its own plan on
//! a copy of the belief; the critic replays the remaining plan suffix the
//! same way and rejects it at the first step that provably fails.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use regex::Regex;
use serde_json::{json, Value};

use crate::grammar::{Operation, Placement, SceneView, TaskGoal};
use crate::model::{ActionCommand, Verb};
use crate::spatial::SELF_ENTITY;

const APPLIANCES: [Operation; 2] = [Operation::Heat, Operation::Clean];

fn exclusive_partner(state: &str) -> Option<&'static str> {
    match state {
        "open" => Some("closed"),
        "closed" => Some("open"),
        "on" => Some("off"),
        "off" => Some("on"),
        _ => None,
    }
}

/// What the agent believes about the scene.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Belief {
    pub location: Option<String>,
    pub holding: Option<String>,
    /// Object → (placement, support) for every located object.
    pub support: BTreeMap<String, (Placement, String)>,
    pub states: BTreeMap<String, BTreeSet<String>>,
    pub visited: BTreeSet<String>,
    /// Supports remembered from earlier attempts; only steer exploration.
    pub hints: BTreeMap<String, String>,
    /// Locations known not to hold an object.
    pub exhausted: BTreeMap<String, BTreeSet<String>>,
    pub nav_points: Vec<String>,
}

fn text_items(v: &Value) -> Vec<(String, Vec<String>)> {
    v.as_array()
        .map(|items| {
            items
                .iter()
                .filter_map(|it| {
                    let text = it.get("text")?.as_str()?.to_string();
                    let tags = it
                        .get("tags")
                        .and_then(Value::as_array)
                        .map(|t| t.iter().filter_map(|s| s.as_str().map(String::from)).collect())
                        .unwrap_or_default();
                    Some((text, tags))
                })
                .collect()
        })
        .unwrap_or_default()
}

fn strings(v: &Value) -> Vec<String> {
    v.as_array()
        .map(|a| a.iter().filter_map(|s| s.as_str().map(String::from)).collect())
        .unwrap_or_default()
}

impl Belief {
    pub fn is_nav_point(&self, name: &str) -> bool {
        self.nav_points.iter().any(|n| n == name)
    }

    pub fn has_state(&self, thing: &str, state: &str) -> bool {
        self.states.get(thing).is_some_and(|s| s.contains(state))
    }

    pub fn set_state(&mut self, thing: &str, state: &str) {
        let set = self.states.entry(thing.to_string()).or_default();
        if let Some(p) = exclusive_partner(state) {
            set.remove(p);
        }
        set.insert(state.to_string());
    }

    /// Navigation point where `thing` currently is, following containers.
    pub fn nav_of(&self, thing: &str) -> Option<String> {
        let mut cur = thing.to_string();
        for _ in 0..8 {
            if self.is_nav_point(&cur) {
                return Some(cur);
            }
            if self.holding.as_deref() == Some(cur.as_str()) {
                return self.location.clone();
            }
            cur = self.support.get(&cur)?.1.clone();
        }
        None
    }

    /// First closed thing enclosing `object`, if any.
    pub fn closed_enclosure(&self, object: &str) -> Option<String> {
        let mut cur = object;
        for _ in 0..8 {
            let (placement, sup) = self.support.get(cur)?;
            if *placement == Placement::In && self.has_state(sup, "closed") {
                return Some(sup.clone());
            }
            cur = sup;
        }
        None
    }

    fn hinted_nav(&self, object: &str) -> Option<String> {
        let mut cur = object.to_string();
        for _ in 0..8 {
            if self.is_nav_point(&cur) {
                return Some(cur);
            }
            if let Some(n) = self.nav_of(&cur) {
                return Some(n);
            }
            cur = self.hints.get(&cur)?.clone();
        }
        None
    }

    /// A navigation point counts as searched once visited while not closed.
    pub fn searched(&self, point: &str) -> bool {
        self.visited.contains(point) && !self.has_state(point, "closed")
    }

    /// Build a belief from a planner or critic payload.
    pub fn from_payload(payload: &Value) -> Belief {
        static TEMPORAL_NAV: LazyLock<Regex> =
            LazyLock::new(|| Regex::new(r"(?:navigated to|found) (\S+): success").unwrap());
        static FOUND: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"found: ([^.]*)\.").unwrap());
        static LESSON: LazyLock<Regex> = LazyLock::new(|| {
            Regex::new(r"the (\S+) was not found at ([^;]*); do not").unwrap()
        });
        static RECIPE: LazyLock<Regex> =
            LazyLock::new(|| Regex::new(r"recipe for [^:]*: (.*)$").unwrap());
        static CALL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(\w+)\((\w*)\)").unwrap());

        let mut b = Belief {
            nav_points: strings(&payload["nav_points"]),
            ..Belief::default()
        };
        let ctx = &payload["context"];

        for line in ctx["spatial"].as_str().unwrap_or_default().lines() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [s, r, o] = parts[..] else { continue };
            match (s, r) {
                (SELF_ENTITY, "at") => b.location = Some(o.to_string()),
                (SELF_ENTITY, "visited") => {
                    b.visited.insert(o.to_string());
                }
                (SELF_ENTITY, "holds") => {
                    b.holding = (o != "nothing").then(|| o.to_string());
                }
                (_, "is") => b.set_state(s, o),
                (_, "on" | "in") if s != SELF_ENTITY => {
                    let placement = Placement::parse(r).expect("matched on/in");
                    b.support.insert(s.to_string(), (placement, o.to_string()));
                }
                _ => {}
            }
        }
        for c in TEMPORAL_NAV.captures_iter(ctx["temporal"].as_str().unwrap_or_default()) {
            if b.is_nav_point(&c[1]) {
                b.visited.insert(c[1].to_string());
            }
        }
        if let Some(h) = &b.holding {
            b.support.remove(h);
        }

        let view = SceneView::parse(payload["observation"].as_str().unwrap_or_default());
        if let Some(loc) = &view.location {
            b.location = Some(loc.clone());
            b.visited.insert(loc.clone());
        }
        for (thing, state) in &view.states {
            b.set_state(thing, state);
        }
        if let Some(h) = &view.holding {
            b.holding = h.clone();
        }
        // Facts about the current spot that the observation no longer shows
        // are stale.
        if let Some(loc) = b.location.clone() {
            let stale: Vec<String> = b
                .support
                .keys()
                .filter(|o| !view.sees(o))
                .filter(|o| b.nav_of(o).as_deref() == Some(loc.as_str()))
                .filter(|o| b.closed_enclosure(o).is_none())
                .cloned()
                .collect();
            for o in stale {
                b.support.remove(&o);
            }
        }
        for (obj, placement, sup) in &view.seen {
            b.support.insert(obj.clone(), (*placement, sup.clone()));
        }
        if let Some(h) = b.holding.clone() {
            b.support.remove(&h);
        }

        let task_tag = format!("task:{}", payload["task_id"].as_str().unwrap_or_default());
        for (text, tags) in text_items(&ctx["episodic"]) {
            if !tags.contains(&task_tag) {
                continue;
            }
            if let Some(c) = FOUND.captures(&text) {
                for part in c[1].split(", ") {
                    let words: Vec<&str> = part.split_whitespace().collect();
                    if let [obj, "on" | "in", sup] = words[..] {
                        b.hints.entry(obj.to_string()).or_insert_with(|| sup.to_string());
                    }
                }
            }
        }
        for (text, tags) in text_items(&ctx["semantic"]) {
            if !tags.contains(&task_tag) {
                continue;
            }
            if let Some(c) = LESSON.captures(&text) {
                let places = c[2].split(", ").map(str::to_string);
                b.exhausted.entry(c[1].to_string()).or_default().extend(places);
            }
            if let Some(c) = RECIPE.captures(&text) {
                let mut at: Option<String> = None;
                for call in CALL.captures_iter(&c[1]) {
                    match &call[1] {
                        "navigate_to" | "find" => at = Some(call[2].to_string()),
                        "pick_up" => {
                            if let Some(loc) = &at {
                                b.hints.entry(call[2].to_string()).or_insert_with(|| loc.clone());
                            }
                        }
                        "put_down_to" => at = None,
                        _ => {}
                    }
                }
            }
        }
        b
    }

    /// Reason the action would fail in this belief state, if provable.
    pub fn precondition_failure(&self, a: &ActionCommand) -> Option<String> {
        let t = a.target_str();
        let here = self.location.as_deref();
        let elsewhere = |thing: &str| match (self.nav_of(thing), here) {
            (Some(n), Some(l)) if n != l => Some(format!("{thing} is at {n}, not at {l}")),
            _ => None,
        };
        match a.verb {
            Verb::NavigateTo | Verb::Find if self.is_nav_point(t) && here == Some(t) => {
                Some(format!("already at {t}"))
            }
            Verb::PickUp => {
                if let Some(h) = &self.holding {
                    return Some(if h == t {
                        format!("already holding {t}")
                    } else {
                        format!("hands full: already holding {h}")
                    });
                }
                if let Some(c) = self.closed_enclosure(t) {
                    return Some(format!("{t} is inside the closed {c}"));
                }
                elsewhere(t)
            }
            Verb::PutDownTo => {
                if self.holding.is_none() {
                    return Some("not holding anything".into());
                }
                if self.has_state(t, "closed") {
                    return Some(format!("{t} is closed"));
                }
                elsewhere(t)
            }
            Verb::Drop if self.holding.is_none() => Some("not holding anything".into()),
            Verb::Open | Verb::Close | Verb::TurnOn | Verb::TurnOff => {
                let already = match a.verb {
                    Verb::Open => "open",
                    Verb::Close => "closed",
                    Verb::TurnOn => "on",
                    _ => "off",
                };
                if self.has_state(t, already) {
                    return Some(format!("{t} is already {already}"));
                }
                elsewhere(t)
            }
            _ => None,
        }
    }

    /// Optimistic effect of an action.
    pub fn apply(&mut self, a: &ActionCommand) {
        let t = a.target_str().to_string();
        match a.verb {
            Verb::NavigateTo => {
                self.location = Some(t.clone());
                self.visited.insert(t);
            }
            Verb::Find => {
                self.location = self.nav_of(&t);
                if let Some(l) = &self.location {
                    self.visited.insert(l.clone());
                }
            }
            Verb::PickUp => {
                self.support.remove(&t);
                self.holding = Some(t);
            }
            Verb::PutDownTo => {
                if let Some(x) = self.holding.take() {
                    self.support.insert(x, (placement_for(&t, self), t));
                }
            }
            Verb::Drop => {
                if let Some(x) = self.holding.take() {
                    match &self.location {
                        Some(l) => {
                            self.support.insert(x, (Placement::On, l.clone()));
                        }
                        None => {
                            self.support.remove(&x);
                        }
                    }
                }
            }
            Verb::Open => self.set_state(&t, "open"),
            Verb::Close => self.set_state(&t, "closed"),
            Verb::TurnOn => self.set_state(&t, "on"),
            Verb::TurnOff => self.set_state(&t, "off"),
            Verb::Slice => self.set_state(&t, "sliced"),
            Verb::TaskComplete => {}
        }
        for op in APPLIANCES {
            if self.has_state(op.appliance(), "on") {
                let inside: Vec<String> = self
                    .support
                    .iter()
                    .filter(|(_, (_, s))| s == op.appliance())
                    .map(|(o, _)| o.clone())
                    .collect();
                for o in inside {
                    self.set_state(&o, op.result_state());
                }
            }
        }
    }

    fn placed(&self, object: &str, receptacle: &str) -> bool {
        self.holding.as_deref() != Some(object)
            && self.support.get(object).is_some_and(|(_, s)| s == receptacle)
    }

    /// True when `object` needs no further handling for `goal`.
    pub fn object_done(&self, goal: &TaskGoal, object: &str) -> bool {
        match goal {
            TaskGoal::PickUp { object: o } => o == object && self.holding.as_deref() == Some(o),
            TaskGoal::PickPlace { object: o, receptacle, .. } => {
                o == object && self.placed(o, receptacle)
            }
            TaskGoal::Operate {
                operation,
                object: o,
                receptacle,
                ..
            } => o == object && self.placed(o, receptacle) && self.has_state(o, operation.result_state()),
            TaskGoal::Gather {
                object: o,
                container,
                receptacle,
                ..
            } => {
                let inside = self.placed(o, container);
                if object == o {
                    inside
                } else {
                    object == container && inside && self.placed(container, receptacle)
                }
            }
        }
    }

    pub fn goal_met(&self, goal: &TaskGoal) -> bool {
        goal.objects().iter().all(|o| self.object_done(goal, o))
    }
}

/// Preposition the simulator uses for a receptacle we do not observe.
fn placement_for(receptacle: &str, b: &Belief) -> Placement {
    if b.is_nav_point(receptacle) && (receptacle.ends_with("counter") || receptacle.ends_with("table")) {
        Placement::On
    } else {
        Placement::In
    }
}

/// Plan construction stops here when an object must be found first.
struct NeedsSearch(String);

struct Builder<'a> {
    b: Belief,
    verbs: &'a BTreeSet<Verb>,
    steps: Vec<ActionCommand>,
}

impl Builder<'_> {
    fn push(&mut self, a: ActionCommand) {
        self.b.apply(&a);
        self.steps.push(a);
    }

    fn can(&self, v: Verb) -> bool {
        self.verbs.contains(&v)
    }

    fn nav_verb(&self) -> Verb {
        if self.can(Verb::NavigateTo) {
            Verb::NavigateTo
        } else {
            Verb::Find
        }
    }

    fn go_to(&mut self, point: &str) {
        if self.b.location.as_deref() != Some(point) {
            let v = self.nav_verb();
            self.push(ActionCommand::on(v, point));
        }
    }

    fn open_if_closed(&mut self, thing: &str) {
        if self.b.has_state(thing, "closed") && self.can(Verb::Open) {
            self.push(ActionCommand::on(Verb::Open, thing));
        }
    }

    fn free_hand(&mut self, keep: &str) {
        let Some(held) = self.b.holding.clone() else { return };
        if held == keep {
            return;
        }
        if self.can(Verb::Drop) {
            self.push(ActionCommand::bare(Verb::Drop));
        } else if let Some(loc) = self.b.location.clone() {
            self.open_if_closed(&loc);
            self.push(ActionCommand::on(Verb::PutDownTo, &loc));
        }
    }

    fn acquire(&mut self, object: &str) -> Result<(), NeedsSearch> {
        if self.b.holding.as_deref() == Some(object) {
            return Ok(());
        }
        match self.b.nav_of(object) {
            Some(point) => {
                self.free_hand(object);
                self.go_to(&point);
                while let Some(c) = self.b.closed_enclosure(object) {
                    if !self.can(Verb::Open) {
                        break;
                    }
                    self.push(ActionCommand::on(Verb::Open, &c));
                }
            }
            None if self.can(Verb::Find) => {
                self.free_hand(object);
                self.push(ActionCommand::on(Verb::Find, object));
            }
            None => return Err(NeedsSearch(object.to_string())),
        }
        self.push(ActionCommand::on(Verb::PickUp, object));
        Ok(())
    }

    fn deliver(&mut self, object: &str, receptacle: &str) -> Result<(), NeedsSearch> {
        self.acquire(object)?;
        match self.b.nav_of(receptacle) {
            Some(point) => self.go_to(&point),
            None if self.can(Verb::Find) => self.push(ActionCommand::on(Verb::Find, receptacle)),
            None => return Err(NeedsSearch(receptacle.to_string())),
        }
        self.open_if_closed(receptacle);
        self.push(ActionCommand::on(Verb::PutDownTo, receptacle));
        Ok(())
    }

    fn solve(&mut self, goal: &TaskGoal) -> Result<(), NeedsSearch> {
        match goal {
            TaskGoal::PickUp { object } => self.acquire(object),
            TaskGoal::PickPlace {
                object, receptacle, ..
            } => {
                if !self.b.placed(object, receptacle) {
                    self.deliver(object, receptacle)?;
                }
                Ok(())
            }
            TaskGoal::Operate {
                operation,
                object,
                receptacle,
                ..
            } => {
                let appliance = operation.appliance();
                if !self.b.has_state(object, operation.result_state()) {
                    if !self.b.placed(object, appliance) {
                        self.deliver(object, appliance)?;
                    }
                    if !self.b.has_state(object, operation.result_state()) {
                        self.go_to(appliance);
                        self.push(ActionCommand::on(Verb::TurnOn, appliance));
                    }
                }
                if !self.b.placed(object, receptacle) {
                    self.deliver(object, receptacle)?;
                }
                Ok(())
            }
            TaskGoal::Gather {
                object,
                container,
                receptacle,
                ..
            } => {
                if !self.b.placed(object, container) {
                    self.deliver(object, container)?;
                }
                if !self.b.placed(container, receptacle) {
                    self.deliver(container, receptacle)?;
                }
                Ok(())
            }
        }
    }

    /// One exploration move towards finding `object`.
    fn explore(&mut self, object: &str) {
        if let Some(loc) = self.b.location.clone() {
            if self.b.has_state(&loc, "closed") && self.can(Verb::Open) {
                self.push(ActionCommand::on(Verb::Open, &loc));
                return;
            }
        }
        let here = self.b.location.clone();
        let exhausted = self.b.exhausted.get(object).cloned().unwrap_or_default();
        let open: Vec<String> = self
            .b
            .nav_points
            .iter()
            .filter(|p| Some(p.as_str()) != here.as_deref() && !self.b.searched(p))
            .cloned()
            .collect();
        let hinted = self.b.hinted_nav(object).filter(|h| open.contains(h));
        let target = hinted
            .or_else(|| open.iter().find(|p| !exhausted.contains(*p)).cloned())
            .or_else(|| open.first().cloned())
            .or_else(|| {
                self.b
                    .nav_points
                    .iter()
                    .find(|p| Some(p.as_str()) != here.as_deref())
                    .cloned()
            });
        if let Some(p) = target {
            self.go_to(&p);
            self.open_if_closed(&p);
        }
    }
}

fn verb_set(payload: &Value) -> BTreeSet<Verb> {
    strings(&payload["verbs"])
        .iter()
        .filter_map(|v| Verb::parse(v))
        .collect()
}

/// Plan from `belief` towards `goal`: a complete plan when every needed
/// object is located, otherwise the located prefix plus one search move.
pub fn plan_steps(belief: &Belief, goal: &TaskGoal, verbs: &BTreeSet<Verb>) -> (Vec<ActionCommand>, String) {
    let mut builder = Builder {
        b: belief.clone(),
        verbs,
        steps: Vec::new(),
    };
    let rationale = match builder.solve(goal) {
        Ok(()) => {
            if verbs.contains(&Verb::TaskComplete) {
                builder.push(ActionCommand::bare(Verb::TaskComplete));
            }
            "every goal object is located".to_string()
        }
        Err(NeedsSearch(object)) => {
            builder.explore(&object);
            format!("{object} has not been located yet")
        }
    };
    (builder.steps, rationale)
}

/// Deterministic planner and critic over [`Belief`].
#[derive(Debug, Clone, Copy, Default)]
pub struct OraclePolicy;

impl OraclePolicy {
    pub fn plan(&self, payload: &Value) -> Value {
        let instruction = payload["instruction"].as_str().unwrap_or_default();
        let Some(goal) = TaskGoal::parse(instruction) else {
            return json!({"steps": [], "rationale": format!("cannot parse instruction `{instruction}`")});
        };
        let belief = Belief::from_payload(payload);
        let (steps, rationale) = plan_steps(&belief, &goal, &verb_set(payload));
        json!({"steps": steps, "rationale": rationale})
    }

    pub fn critique(&self, payload: &Value) -> Value {
        let approve = json!({"decision": "approve", "reason": "ok"});
        let Some(goal) = TaskGoal::parse(payload["instruction"].as_str().unwrap_or_default()) else {
            return approve;
        };
        let mut remaining: Vec<ActionCommand> =
            serde_json::from_value(payload["remaining"].clone()).unwrap_or_default();
        if remaining.is_empty() {
            if let Ok(p) = serde_json::from_value(payload["proposed"].clone()) {
                remaining.push(p);
            }
        }
        let mut sim = Belief::from_payload(payload);
        for (i, a) in remaining.iter().enumerate() {
            let failure = if a.verb == Verb::TaskComplete {
                (!sim.goal_met(&goal)).then(|| "the task goal is not achieved yet".to_string())
            } else if a.verb == Verb::PickUp && goal.objects().contains(&a.target_str()) && sim.object_done(&goal, a.target_str()) {
                Some(format!("{} is already where the task needs it; picking it up is redundant", a.target_str()))
            } else {
                sim.precondition_failure(a)
            };
            if let Some(reason) = failure {
                let reason = if i == 0 {
                    format!("{a} would fail: {reason}")
                } else {
                    format!("step {} of the remaining plan, {a}, would fail: {reason}", i + 1)
                };
                return json!({"decision": "reject", "reason": reason});
            }
            sim.apply(a);
        }
        approve
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn realworld() -> Vec<&'static str> {
        vec!["navigate_to", "pick_up", "put_down_to", "open", "close", "turn_on", "turn_off", "task_complete"]
    }

    fn nav_points() -> Vec<&'static str> {
        vec!["kitchen_table", "sink", "fridge", "oven", "kitchen_counter"]
    }

    fn payload(instruction: &str, observation: &str, spatial: &str) -> Value {
        json!({
            "task_id": "t1",
            "instruction": instruction,
            "observation": observation,
            "verbs": realworld(),
            "nav_points": nav_points(),
            "context": {"spatial": spatial, "temporal": "", "episodic": [], "semantic": []},
        })
    }

    fn steps(v: &Value) -> Vec<String> {
        let cmds: Vec<ActionCommand> = serde_json::from_value(v["steps"].clone()).unwrap();
        cmds.iter().map(ToString::to_string).collect()
    }

    #[test]
    fn known_location_gives_full_plan() {
        let p = payload(
            "pick up the apple",
            "you are at sink\nholding: nothing",
            "agent at sink\napple on kitchen_counter",
        );
        assert_eq!(
            steps(&OraclePolicy.plan(&p)),
            ["navigate_to(kitchen_counter)", "pick_up(apple)", "task_complete()"]
        );
    }

    #[test]
    fn unknown_location_explores_in_order() {
        let p = payload("pick up the apple", "you are at kitchen_table\nholding: nothing", "");
        assert_eq!(steps(&OraclePolicy.plan(&p)), ["navigate_to(sink)"]);
        let p = payload("pick up the apple", "you are at sink\nholding: nothing", "agent visited kitchen_table");
        assert_eq!(steps(&OraclePolicy.plan(&p)), ["navigate_to(fridge)"]);
    }

    #[test]
    fn lessons_and_hints_reorder_exploration() {
        let mut p = payload("put the banana in the oven", "you are at oven\nholding: nothing", "");
        p["context"]["semantic"] = json!([{
            "text": "lesson for \"put the banana in the oven\": the banana was not found at kitchen_table, sink, fridge; do not search those locations again",
            "tags": ["task:t1", "outcome:failure", "lesson"],
        }]);
        assert_eq!(steps(&OraclePolicy.plan(&p)), ["navigate_to(kitchen_counter)"]);

        let mut p = payload("put the banana in the oven", "you are at oven\nholding: nothing", "");
        p["context"]["episodic"] = json!([{
            "text": "task t1 \"put the banana in the oven\": success after 6 steps (1/1 conditions). found: banana in fridge.",
            "tags": ["task:t1", "outcome:success", "episode"],
        }]);
        assert_eq!(steps(&OraclePolicy.plan(&p)), ["navigate_to(fridge)"]);
    }

    #[test]
    fn operate_plan_uses_appliance() {
        let p = payload(
            "heat the apple and put it on the kitchen_table",
            "you are at sink\nyou see apple in sink\nholding: nothing",
            "",
        );
        assert_eq!(
            steps(&OraclePolicy.plan(&p)),
            [
                "pick_up(apple)",
                "navigate_to(oven)",
                "put_down_to(oven)",
                "turn_on(oven)",
                "pick_up(apple)",
                "navigate_to(kitchen_table)",
                "put_down_to(kitchen_table)",
                "task_complete()"
            ]
        );
    }

    fn critic(instruction: &str, observation: &str, spatial: &str, remaining: &[ActionCommand]) -> Value {
        let mut p = payload(instruction, observation, spatial);
        p["proposed"] = json!(remaining[0]);
        p["remaining"] = json!(remaining);
        OraclePolicy.critique(&p)
    }

    #[test]
    fn critic_flags_redundant_pickup() {
        let v = critic(
            "put the spoon in the plate and put the plate on the kitchen_table",
            "you are at kitchen_counter\nyou see spoon in plate\nyou see plate on kitchen_counter\nholding: nothing",
            "",
            &[
                ActionCommand::on(Verb::PickUp, "spoon"),
                ActionCommand::on(Verb::PickUp, "plate"),
            ],
        );
        assert_eq!(v["decision"], "reject");
        assert!(v["reason"].as_str().unwrap().contains("redundant"));
    }

    #[test]
    fn critic_checks_suffix_and_completion() {
        let v = critic(
            "put the apple on the kitchen_table",
            "you are at kitchen_counter\nholding: nothing\naction failed: executor_failure",
            "apple on kitchen_counter",
            &[
                ActionCommand::on(Verb::NavigateTo, "kitchen_table"),
                ActionCommand::on(Verb::PutDownTo, "kitchen_table"),
                ActionCommand::bare(Verb::TaskComplete),
            ],
        );
        assert_eq!(v["decision"], "reject");
        assert!(v["reason"].as_str().unwrap().contains("not holding"));

        let v = critic(
            "put the apple on the kitchen_table",
            "you are at kitchen_counter\nholding: apple",
            "",
            &[
                ActionCommand::on(Verb::NavigateTo, "kitchen_table"),
                ActionCommand::on(Verb::PutDownTo, "kitchen_table"),
                ActionCommand::bare(Verb::TaskComplete),
            ],
        );
        assert_eq!(v["decision"], "approve");
    }

    #[test]
    fn stale_spatial_fact_is_dropped() {
        let p = payload(
            "pick up the apple",
            "you are at kitchen_counter\nholding: nothing",
            "apple on kitchen_counter\nagent visited kitchen_counter",
        );
        let b = Belief::from_payload(&p);
        assert!(!b.support.contains_key("apple"));
    }
}
