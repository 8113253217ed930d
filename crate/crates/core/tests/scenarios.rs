mod common;

use std::sync::Arc;

use robomemory::agent::AgentConfig;
use robomemory::eval::{run_lifelong, EvalConfig};
use robomemory::orchestrator::Disabled;
use robomemory::reasoner::{Gateway, OracleBackend};
use robomemory::sim::{kitchen_suite, Profile};
use robomemory::vector::HashEmbedder;

fn check(r: Result<(), String>) {
    if let Err(e) = r {
        panic!("{e}");
    }
}

#[test]
fn banana_search_then_semantic_hint() {
    check(common::scenario_banana_search());
}

#[test]
fn pick_up_turns_near_into_holds() {
    check(common::scenario_near_to_holds());
}

#[test]
fn critic_blocks_redundant_spoon() {
    check(common::scenario_redundant_spoon());
}

#[test]
fn hands_full_becomes_experience() {
    check(common::scenario_hands_full());
}

#[test]
fn lesson_names_the_searched_points() {
    let (p1, _) = common::banana_search(Disabled::none()).unwrap();
    assert!(!p1.result.succeeded());
    let mem = common::memory(Disabled::none());
    let config = AgentConfig {
        failure_p: 0.0,
        step_budget: Some(5),
        ..AgentConfig::new(Profile::Realworld, 0)
    };
    let task = common::banana_on_counter_task();
    common::run_pair(Arc::new(OracleBackend::default()), &mem, config, &task);
    let lessons: Vec<String> = mem.with_semantic(|s| {
        s.store
            .entities()
            .filter(|e| e.text.contains("banana was not found"))
            .map(|e| e.text.clone())
            .collect()
    });
    assert!(!lessons.is_empty());
    assert!(lessons.iter().all(|l| !l.contains("kitchen_counter")), "{lessons:?}");
}

#[test]
fn second_attempt_needs_no_more_steps() {
    for task in kitchen_suite() {
        let config = EvalConfig {
            failure_p: 0.0,
            ..EvalConfig::new(Profile::Realworld, 4)
        };
        let run = run_lifelong(
            std::slice::from_ref(&task),
            &config,
            Arc::new(Gateway::oracle()),
            Arc::new(HashEmbedder::default()),
        )
        .unwrap();
        let first = &run.report.passes[0].results[0];
        let second = &run.report.passes[1].results[0];
        if first.succeeded() {
            assert!(second.steps_used <= first.steps_used, "{}: {first:?} then {second:?}", task.id);
        }
    }
}

#[test]
fn disabling_nothing_matches_plain_run() {
    let suite = kitchen_suite();
    let config = EvalConfig::new(Profile::Realworld, 2);
    let run = |c: &EvalConfig| {
        run_lifelong(&suite, c, Arc::new(Gateway::oracle()), Arc::new(HashEmbedder::default()))
            .unwrap()
            .report
    };
    let plain = run(&config);
    let ablated = robomemory::eval::run_ablation(
        &suite,
        &config,
        Disabled::none(),
        Arc::new(Gateway::oracle()),
        Arc::new(HashEmbedder::default()),
    )
    .unwrap()
    .report;
    assert_eq!(plain, ablated);
}

#[test]
fn critic_off_logs_no_verdicts() {
    let mem = common::memory(Disabled::none());
    let config = AgentConfig {
        critic_enabled: false,
        ..AgentConfig::new(Profile::Realworld, 1)
    };
    let task = kitchen_suite().remove(10);
    let (a, b) = common::run_pair(Arc::new(OracleBackend::default()), &mem, config, &task);
    assert!(a.trajectory.iter().chain(&b.trajectory).all(|r| r.verdict.is_none()));
}
