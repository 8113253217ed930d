//! Task suites stored as JSON arrays of [`TaskSpec`].

use std::collections::BTreeSet;

use thiserror::Error;

use super::TaskSpec;
use crate::model::{ModelError, Validate};

const KITCHEN_SUITE: &str = include_str!("../../assets/kitchen_suite.json");

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("suite is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("task {index}: {source}")]
    Task { index: usize, source: ModelError },
    #[error("duplicate task id `{0}`")]
    DuplicateId(String),
    #[error("suite has no tasks")]
    Empty,
}

pub fn load_suite(json: &str) -> Result<Vec<TaskSpec>, SuiteError> {
    let tasks: Vec<TaskSpec> = serde_json::from_str(json)?;
    if tasks.is_empty() {
        return Err(SuiteError::Empty);
    }
    let mut ids = BTreeSet::new();
    for (index, t) in tasks.iter().enumerate() {
        t.validate().map_err(|source| SuiteError::Task { index, source })?;
        if !ids.insert(t.id.clone()) {
            return Err(SuiteError::DuplicateId(t.id.clone()));
        }
    }
    Ok(tasks)
}

/// The shipped fifteen-task kitchen suite.
pub fn kitchen_suite() -> Vec<TaskSpec> {
    load_suite(KITCHEN_SUITE).expect("bundled suite is valid")
}
