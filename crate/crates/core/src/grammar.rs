//! Line-oriented observation grammar and the task instruction grammar.
//!
//! Observations are plain text, one fact per line:
//!
//! ```text
//! you are at kitchen_counter
//! you see banana on kitchen_counter
//! you see apple in basket
//! fridge is closed
//! holding: nothing
//! you also see: kettle, toaster
//! action failed: hands full
//! ```
//!
//! Instructions follow four templates, see [`TaskGoal`].

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::canonical_name;

/// Placement relation between an object and its support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    On,
    In,
}

impl Placement {
    pub fn as_str(self) -> &'static str {
        match self {
            Placement::On => "on",
            Placement::In => "in",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "on" => Some(Placement::On),
            "in" => Some(Placement::In),
            _ => None,
        }
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SceneView {
    pub location: Option<String>,
    /// `(object, placement, support)` for every visible interactive object.
    pub seen: Vec<(String, Placement, String)>,
    /// `(thing, state)` pairs such as `("fridge", "closed")`.
    pub states: Vec<(String, String)>,
    /// `None` when the observation says nothing about the hand,
    /// `Some(None)` for an empty hand.
    pub holding: Option<Option<String>>,
    pub distractors: Vec<String>,
    pub failure: Option<String>,
}

impl SceneView {
    pub fn render(&self) -> String {
        let mut lines = Vec::new();
        if let Some(loc) = &self.location {
            lines.push(format!("you are at {loc}"));
        }
        for (obj, rel, sup) in &self.seen {
            lines.push(format!("you see {obj} {rel} {sup}"));
        }
        for (thing, state) in &self.states {
            lines.push(format!("{thing} is {state}"));
        }
        if let Some(h) = &self.holding {
            lines.push(format!("holding: {}", h.as_deref().unwrap_or("nothing")));
        }
        if !self.distractors.is_empty() {
            lines.push(format!("you also see: {}", self.distractors.join(", ")));
        }
        if let Some(reason) = &self.failure {
            lines.push(format!("action failed: {reason}"));
        }
        lines.join("\n")
    }

    /// Parse an observation; unknown lines are ignored.
    pub fn parse(text: &str) -> SceneView {
        static SEE: LazyLock<Regex> =
            LazyLock::new(|| Regex::new(r"^you see (\S+) (on|in) (\S+)$").unwrap());
        static STATE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\S+) is (\S+)$").unwrap());
        let mut view = SceneView::default();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(rest) = line.strip_prefix("you are at ") {
                view.location = Some(canonical_name(rest));
            } else if let Some(rest) = line.strip_prefix("holding: ") {
                let name = canonical_name(rest);
                view.holding = Some((name != "nothing" && !name.is_empty()).then_some(name));
            } else if let Some(rest) = line.strip_prefix("you also see: ") {
                view.distractors = rest
                    .split(',')
                    .map(canonical_name)
                    .filter(|s| !s.is_empty())
                    .collect();
            } else if let Some(rest) = line.strip_prefix("action failed: ") {
                view.failure = Some(rest.trim().to_string());
            } else if let Some(c) = SEE.captures(line) {
                let rel = Placement::parse(&c[2]).expect("regex restricts placement");
                view.seen
                    .push((canonical_name(&c[1]), rel, canonical_name(&c[3])));
            } else if let Some(c) = STATE.captures(line) {
                view.states
                    .push((canonical_name(&c[1]), canonical_name(&c[2])));
            }
        }
        view
    }

    pub fn sees(&self, object: &str) -> bool {
        self.seen.iter().any(|(o, _, _)| o == object)
    }

    pub fn support_of(&self, object: &str) -> Option<&str> {
        self.seen
            .iter()
            .find(|(o, _, _)| o == object)
            .map(|(_, _, s)| s.as_str())
    }

    pub fn state_of(&self, thing: &str, candidates: &[&str]) -> Option<&str> {
        self.states
            .iter()
            .rev()
            .find(|(t, s)| t == thing && candidates.contains(&s.as_str()))
            .map(|(_, s)| s.as_str())
    }

    pub fn has_state(&self, thing: &str, state: &str) -> bool {
        self.states.iter().any(|(t, s)| t == thing && s == state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    Heat,
    Clean,
}

impl Operation {
    pub fn as_str(self) -> &'static str {
        match self {
            Operation::Heat => "heat",
            Operation::Clean => "clean",
        }
    }

    /// Fixture that performs the operation when switched on.
    pub fn appliance(self) -> &'static str {
        match self {
            Operation::Heat => "oven",
            Operation::Clean => "sink",
        }
    }

    /// Object state the operation produces.
    pub fn result_state(self) -> &'static str {
        match self {
            Operation::Heat => "heated",
            Operation::Clean => "cleaned",
        }
    }
}

/// Structured reading of a task instruction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskGoal {
    /// `pick up the {object}`
    PickUp { object: String },
    /// `put the {object} {on|in} the {receptacle}`
    PickPlace {
        object: String,
        placement: Placement,
        receptacle: String,
    },
    /// `{heat|clean} the {object} and put it {on|in} the {receptacle}`
    Operate {
        operation: Operation,
        object: String,
        placement: Placement,
        receptacle: String,
    },
    /// `put the {object} in the {container} and put the {container} {on|in} the {receptacle}`
    Gather {
        object: String,
        container: String,
        placement: Placement,
        receptacle: String,
    },
}

impl TaskGoal {
    pub fn instruction(&self) -> String {
        match self {
            TaskGoal::PickUp { object } => format!("pick up the {object}"),
            TaskGoal::PickPlace {
                object,
                placement,
                receptacle,
            } => format!("put the {object} {placement} the {receptacle}"),
            TaskGoal::Operate {
                operation,
                object,
                placement,
                receptacle,
            } => format!(
                "{} the {object} and put it {placement} the {receptacle}",
                operation.as_str()
            ),
            TaskGoal::Gather {
                object,
                container,
                placement,
                receptacle,
            } => format!(
                "put the {object} in the {container} and put the {container} {placement} the {receptacle}"
            ),
        }
    }

    pub fn parse(instruction: &str) -> Option<TaskGoal> {
        static PICK: LazyLock<Regex> =
            LazyLock::new(|| Regex::new(r"^pick up the (\S+)$").unwrap());
        static PLACE: LazyLock<Regex> =
            LazyLock::new(|| Regex::new(r"^put the (\S+) (on|in) the (\S+)$").unwrap());
        static OPERATE: LazyLock<Regex> = LazyLock::new(|| {
            Regex::new(r"^(heat|clean) the (\S+) and put it (on|in) the (\S+)$").unwrap()
        });
        static GATHER: LazyLock<Regex> = LazyLock::new(|| {
            Regex::new(r"^put the (\S+) in the (\S+) and put the (\S+) (on|in) the (\S+)$").unwrap()
        });
        let text = instruction.trim().to_lowercase();
        if let Some(c) = GATHER.captures(&text) {
            if c[2] != c[3] {
                return None;
            }
            return Some(TaskGoal::Gather {
                object: c[1].to_string(),
                container: c[2].to_string(),
                placement: Placement::parse(&c[4])?,
                receptacle: c[5].to_string(),
            });
        }
        if let Some(c) = OPERATE.captures(&text) {
            let operation = if &c[1] == "heat" {
                Operation::Heat
            } else {
                Operation::Clean
            };
            return Some(TaskGoal::Operate {
                operation,
                object: c[2].to_string(),
                placement: Placement::parse(&c[3])?,
                receptacle: c[4].to_string(),
            });
        }
        if let Some(c) = PLACE.captures(&text) {
            return Some(TaskGoal::PickPlace {
                object: c[1].to_string(),
                placement: Placement::parse(&c[2])?,
                receptacle: c[3].to_string(),
            });
        }
        PICK.captures(&text).map(|c| TaskGoal::PickUp {
            object: c[1].to_string(),
        })
    }

    /// Objects the agent has to locate, in the order it needs them.
    pub fn objects(&self) -> Vec<&str> {
        match self {
            TaskGoal::PickUp { object }
            | TaskGoal::PickPlace { object, .. }
            | TaskGoal::Operate { object, .. } => vec![object],
            TaskGoal::Gather {
                object, container, ..
            } => vec![object, container],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observation_round_trip() {
        let view = SceneView {
            location: Some("kitchen_counter".into()),
            seen: vec![("banana".into(), Placement::On, "kitchen_counter".into())],
            states: vec![("fridge".into(), "closed".into())],
            holding: Some(None),
            distractors: vec!["kettle".into(), "toaster".into()],
            failure: Some("hands full".into()),
        };
        let text = view.render();
        assert_eq!(
            text,
            "you are at kitchen_counter\nyou see banana on kitchen_counter\nfridge is closed\n\
             holding: nothing\nyou also see: kettle, toaster\naction failed: hands full"
        );
        assert_eq!(SceneView::parse(&text), view);
    }

    #[test]
    fn instructions_round_trip() {
        let goals = [
            TaskGoal::PickUp {
                object: "apple".into(),
            },
            TaskGoal::PickPlace {
                object: "banana".into(),
                placement: Placement::In,
                receptacle: "oven".into(),
            },
            TaskGoal::Operate {
                operation: Operation::Clean,
                object: "cup".into(),
                placement: Placement::On,
                receptacle: "kitchen_table".into(),
            },
            TaskGoal::Gather {
                object: "apple".into(),
                container: "basket".into(),
                placement: Placement::On,
                receptacle: "kitchen_counter".into(),
            },
        ];
        for g in goals {
            assert_eq!(TaskGoal::parse(&g.instruction()), Some(g.clone()));
        }
        assert_eq!(TaskGoal::parse("dance a little"), None);
    }
}
