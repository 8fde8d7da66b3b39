mod common;

use hypocompass::literal::{lit, Literal, TestInput};
use hypocompass::patch::DiffTag;
use hypocompass::tutor::{
    events_from_jsonl, events_to_jsonl, Command, ConfirmOutcome, EventKind, ExplanationOutcome, HintOutcome, Phase, PlanEntry,
    TestFeedback, TutorError, TutorSession,
};

fn args(list: &[i64], key: i64) -> TestInput {
    TestInput::new(vec![lit::ints(list), lit::int(key)])
}

/// A one-exercise plan whose only agent holds the given practice code.
fn single_agent_plan(code_id: &str) -> Vec<PlanEntry> {
    let mut suite = common::suite("first_num_greater_than");
    suite.practice_codes.retain(|c| c.id == code_id);
    assert_eq!(suite.practice_codes.len(), 1);
    vec![PlanEntry { suite_id: "fng".into(), suite }]
}

fn correct_option(session: &TutorSession) -> String {
    let agent = session.active().unwrap();
    agent.options.iter().find(|o| o.code_id == agent.code_id).unwrap().id.clone()
}

fn wrong_options(session: &TutorSession) -> Vec<String> {
    let agent = session.active().unwrap();
    agent.options.iter().filter(|o| o.code_id != agent.code_id).map(|o| o.id.clone()).collect()
}

#[test]
fn default_plan_starts_in_suite_building_with_three_agents_each() {
    let session = TutorSession::start("s1", "stu", common::default_plan(), 7, 1_000).unwrap();
    assert_eq!(session.phase, Phase::SuiteBuilding);
    assert_eq!(session.exercise_plan.len(), 2);
    for entry in &session.exercise_plan {
        assert_eq!(entry.suite.practice_codes.len(), 3);
    }
    let names: Vec<_> = session.queue.iter().map(|a| a.display_name.as_str()).collect();
    assert_eq!(names, ["Bob", "Chelsea", "Dave"]);
    assert_eq!(session.categories.len(), 3);
    assert_eq!(session.event_log.len(), 1);
    assert_eq!(session.event_log[0].kind, EventKind::PhaseChange);
    assert!(session.queue.iter().all(|a| a.options.len() == 3));
    assert!(session.violations().is_empty());

    assert!(matches!(TutorSession::start("s", "stu", Vec::new(), 0, 0), Err(TutorError::EmptyPlan)));
    let mut plan = common::default_plan();
    plan[1].suite.verified = false;
    assert!(matches!(TutorSession::start("s", "stu", plan, 0, 0), Err(TutorError::UnverifiedSuite(id)) if id == "remove_extras"));
    let minimal = TutorSession::start("s", "stu", single_agent_plan("code-01"), 0, 0).unwrap();
    assert_eq!(minimal.queue.len(), 1);
}

#[test]
fn option_order_depends_on_the_session_seed_only() {
    let a = TutorSession::start("a", "x", common::default_plan(), 11, 0).unwrap();
    let b = TutorSession::start("b", "y", common::default_plan(), 11, 0).unwrap();
    assert_eq!(a.queue, b.queue);
    let orders: std::collections::HashSet<Vec<String>> = (0..20u64)
        .map(|seed| {
            let s = TutorSession::start("s", "x", common::default_plan(), seed, 0).unwrap();
            s.queue[0].options.iter().map(|o| o.code_id.clone()).collect()
        })
        .collect();
    assert!(orders.len() > 1);
}

#[test]
fn test_cases_are_checked_against_the_oracle() {
    let exec = common::shared_harness();
    let mut s = TutorSession::start("s", "stu", common::default_plan(), 1, 0).unwrap();
    assert_eq!(s.add_test_case(exec, args(&[3, 2, 1], 3), Literal::None, "cat-2", 10).unwrap(), TestFeedback::Accepted { index: 0 });
    match s.add_test_case(exec, args(&[1, 2, 3], 2), Literal::None, "cat-3", 20).unwrap() {
        TestFeedback::Rejected { input, message } => {
            assert_eq!(input, args(&[1, 2, 3], 2));
            assert!(message.contains("should not return None"));
            assert!(!message.contains("return 3"));
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(
        s.add_test_case(exec, args(&[3, 2, 1], 3), lit::int(3), "cat-1", 30).unwrap(),
        TestFeedback::Duplicate { existing: 0 }
    );
    assert!(matches!(s.add_test_case(exec, args(&[1], 0), lit::int(1), "cat-9", 40), Err(TutorError::UnknownCategory(_))));
    let one_arg = TestInput::new(vec![lit::ints(&[1])]);
    assert!(matches!(s.add_test_case(exec, one_arg, lit::int(1), "cat-1", 40), Err(TutorError::InvalidInput(_))));
    let not_a_list = TestInput::new(vec![lit::int(5), lit::int(3)]);
    assert!(matches!(s.add_test_case(exec, not_a_list, Literal::None, "cat-1", 40), Err(TutorError::InvalidInput(_))));

    // A non-reference input goes through the reference solution.
    assert!(matches!(s.add_test_case(exec, args(&[0, 8], 7), lit::int(8), "cat-3", 50).unwrap(), TestFeedback::Accepted { .. }));
    let id = s.apply(exec, Command::CreateCategory { name: "Negative numbers".into() }, 60).unwrap();
    assert!(format!("{id:?}").contains("user-1"));
    assert!(matches!(s.add_test_case(exec, args(&[-5, -1], -3), lit::int(-1), "user-1", 70).unwrap(), TestFeedback::Accepted { index: 2 }));

    assert_eq!(s.user_suite.len(), 3);
    let kinds: Vec<EventKind> = s.event_log.iter().map(|e| e.kind).collect();
    assert_eq!(kinds.iter().filter(|k| **k == EventKind::TestRejected).count(), 2);
    assert_eq!(kinds.iter().filter(|k| **k == EventKind::TestAdded).count(), 3);
    assert!(s.violations().is_empty());
}

#[test]
fn early_return_agent_fails_the_later_greater_number_test() {
    let exec = common::shared_harness();
    let mut s = TutorSession::start("s", "stu", single_agent_plan("code-01"), 1, 0).unwrap();
    assert!(matches!(s.run_suite_against_agent(exec, 1), Err(TutorError::WrongPhase { .. })));
    s.add_test_case(exec, args(&[3, 2, 1], 3), Literal::None, "cat-2", 5).unwrap();
    s.apply(exec, Command::StartDebugging, 6).unwrap();

    // Only a passing test so far: the agent passes, so a hint is available.
    let report = s.run_suite_against_agent(exec, 10).unwrap();
    assert!(report.all_passed);
    // Dave fails reference inputs 1, 5, 6 and 8; none are covered yet.
    match s.request_test_hint(exec, 20).unwrap() {
        HintOutcome::Hint { input_index, text, message } => {
            assert_eq!(input_index, 1);
            assert_eq!(text, s.suite().test_case_hints[1].text);
            assert!(message.starts_with("Dave:"));
        }
        other => panic!("{other:?}"),
    }

    s.add_test_case(exec, args(&[1, 2, 3], 2), lit::int(3), "cat-3", 30).unwrap();
    let report = s.run_suite_against_agent(exec, 40).unwrap();
    assert_eq!(report.results.iter().map(|r| r.passed).collect::<Vec<_>>(), [true, false]);
    assert_eq!(report.results[1].actual, "None");
    assert!(matches!(s.request_test_hint(exec, 50).unwrap(), HintOutcome::NoHint { .. }));

    assert_eq!(s.confirm(exec, 60).unwrap(), ConfirmOutcome::Rejected { failing: 4 });

    let wrong = wrong_options(&s);
    let first = s.select_explanation_choice(exec, &wrong[0], 70).unwrap();
    let again = s.select_explanation_choice(exec, &wrong[0], 80).unwrap();
    assert_eq!(first, again);
    let ExplanationOutcome::Confusion { input_index, message, .. } = first else { panic!() };
    let pool = &s.suite().practice_codes[0].explanation_pool.as_ref().unwrap().distractors;
    let link = pool.iter().find(|l| Some(l.distractor_code_id.as_str()) == s.active().unwrap().options.iter().find(|o| o.id == wrong[0]).map(|o| o.code_id.as_str())).unwrap();
    assert_eq!(input_index, link.discriminating_inputs[0]);
    assert!(message.contains(&s.suite().exercise.reference_inputs[input_index].call_expr("first_num_greater_than")));
    assert_eq!(s.active().unwrap().wrong_explanation_count, 2);
    assert_eq!(s.event_log.iter().filter(|e| e.kind == EventKind::ConfusionSent).count(), 2);
    assert!(matches!(s.select_explanation_choice(exec, "opt-9", 85), Err(TutorError::UnknownChoice(_))));

    let before = s.active().unwrap().current_source.clone();
    let correct = correct_option(&s);
    let ExplanationOutcome::FixApplied { after, diff, .. } = s.select_explanation_choice(exec, &correct, 90).unwrap() else { panic!() };
    assert_eq!(s.active_agent, 0, "choosing an explanation never advances the queue");
    let removed: Vec<_> = diff.iter().filter(|d| d.tag == DiffTag::Delete).map(|d| d.text.as_str()).collect();
    let added: Vec<_> = diff.iter().filter(|d| d.tag == DiffTag::Insert).map(|d| d.text.as_str()).collect();
    assert_eq!(removed, ["        else:", "            return None"]);
    assert_eq!(added, ["    return None"]);
    assert_ne!(before, after);
    assert!(matches!(s.select_explanation_choice(exec, &correct, 95), Err(TutorError::AlreadyFixed)));

    let report = s.run_suite_against_agent(exec, 100).unwrap();
    assert!(report.all_passed);
    assert!(matches!(s.confirm(exec, 110).unwrap(), ConfirmOutcome::Advanced { next_agent: None, phase: Phase::SessionDone, .. }));
    assert!(s.violations().is_empty());
}

#[test]
fn hint_goes_to_the_lowest_uncovered_failing_input() {
    let exec = common::shared_harness();
    // Chelsea only crashes on the empty list (input 2).
    let mut s = TutorSession::start("s", "stu", single_agent_plan("code-11"), 1, 0).unwrap();
    s.apply(exec, Command::StartDebugging, 1).unwrap();
    match s.request_test_hint(exec, 2).unwrap() {
        HintOutcome::Hint { input_index, .. } => assert_eq!(input_index, 2),
        other => panic!("{other:?}"),
    }
    // Bob passes inputs 2 and 4 and fails the other eight; the hint goes to input 0.
    let mut suite = common::suite("first_num_greater_than");
    suite.practice_codes.truncate(1);
    let mut s = TutorSession::start("s", "stu", vec![PlanEntry { suite_id: "x".into(), suite }], 1, 0).unwrap();
    s.add_test_case(exec, args(&[], 0), Literal::None, "cat-1", 1).unwrap();
    s.add_test_case(exec, args(&[5], 5), Literal::None, "cat-2", 2).unwrap();
    s.apply(exec, Command::StartDebugging, 3).unwrap();
    assert!(s.run_suite_against_agent(exec, 4).unwrap().all_passed);
    match s.request_test_hint(exec, 5).unwrap() {
        HintOutcome::Hint { input_index, .. } => assert_eq!(input_index, 0),
        other => panic!("{other:?}"),
    }
}

#[test]
fn confirming_walks_the_queue_then_the_exercises() {
    let exec = common::shared_harness();
    let mut s = TutorSession::start("s", "stu", common::default_plan(), 3, 0).unwrap();
    let mut t = 0;
    for exercise in 0..2 {
        assert_eq!(s.exercise_index, exercise);
        s.apply(exec, Command::StartDebugging, t).unwrap();
        for agent in 0..3 {
            assert_eq!(s.active_agent, agent);
            t += 1000;
            let choice = correct_option(&s);
            s.select_explanation_choice(exec, &choice, t).unwrap();
            let outcome = s.confirm(exec, t + 10).unwrap();
            let ConfirmOutcome::Advanced { next_agent, phase, .. } = outcome else { panic!() };
            if agent < 2 {
                assert_eq!(next_agent.as_deref(), Some(["Bob", "Chelsea", "Dave"][agent + 1]));
                assert_eq!(phase, Phase::Debugging);
            } else {
                assert_eq!(next_agent, None);
                assert_eq!(phase, if exercise == 0 { Phase::ExerciseDone } else { Phase::SessionDone });
            }
            assert!(s.violations().is_empty(), "{:?}", s.violations());
        }
        if exercise == 0 {
            assert!(matches!(s.apply(exec, Command::RunSuite, t), Err(TutorError::WrongPhase { .. })));
            s.apply(exec, Command::NextExercise, t + 20).unwrap();
            assert_eq!(s.phase, Phase::SuiteBuilding);
            assert!(s.user_suite.is_empty());
            assert_eq!(s.suite().exercise.function_name, "remove_extras");
        }
    }
    assert!(matches!(s.apply(exec, Command::NextExercise, t), Err(TutorError::WrongPhase { .. })));
    let metrics = s.metrics();
    assert_eq!(metrics.agents_resolved, 6);
    assert!(metrics.wrong_explanations.values().all(|&n| n == 0));
}

/// The scripted session: five tests written (one rejected), three agents
/// resolved, two wrong explanation picks along the way.
fn scripted_session(exec: &dyn hypocompass::harness::Executor) -> TutorSession {
    let mut s = TutorSession::start("scripted", "student-7", single_plan(), 42, 1_000_000).unwrap();
    let mut t = 1_000_000;
    let mut tick = |secs: u64| {
        t += secs * 1000;
        t
    };
    let tests = [
        (args(&[3, 2, 1], 3), Literal::None, "cat-2"),
        (args(&[1, 2, 3], 2), Literal::None, "cat-3"),
        (args(&[1, 2, 3], 2), lit::int(3), "cat-3"),
        (args(&[], 0), Literal::None, "cat-1"),
        (args(&[5], 4), lit::int(5), "cat-3"),
    ];
    for (input, output, cat) in tests {
        s.add_test_case(exec, input, output, cat, tick(20)).unwrap();
    }
    s.apply(exec, Command::StartDebugging, tick(5)).unwrap();
    for agent in 0..3 {
        s.run_suite_against_agent(exec, tick(10)).unwrap();
        if agent < 2 {
            let wrong = wrong_options(&s)[0].clone();
            s.select_explanation_choice(exec, &wrong, tick(30)).unwrap();
        }
        let choice = correct_option(&s);
        s.select_explanation_choice(exec, &choice, tick(25)).unwrap();
        s.run_suite_against_agent(exec, tick(5)).unwrap();
        s.confirm(exec, tick(3)).unwrap();
    }
    s
}

fn single_plan() -> Vec<PlanEntry> {
    common::default_plan().into_iter().take(1).collect()
}

#[test]
fn scripted_session_replays_exactly() {
    let exec = common::shared_harness();
    let s = scripted_session(exec);
    assert_eq!(s.phase, Phase::SessionDone);
    assert!(s.queue.iter().all(|a| a.resolved));
    let metrics = s.metrics();
    assert_eq!(metrics.tests_written, 4);
    assert_eq!(metrics.tests_rejected, 1);
    assert_eq!(metrics.wrong_explanations.values().sum::<u32>(), 2);
    assert_eq!(metrics.agents_resolved, 3);
    let phase_total: f64 = metrics.phase_seconds.values().sum();
    assert!((phase_total - metrics.total_seconds).abs() < 1.0);
    assert_eq!(metrics.total_seconds, (5 * 20 + 5 + 3 * (10 + 25 + 5 + 3) + 2 * 30) as f64);

    let log = events_to_jsonl(&s.event_log);
    assert_eq!(log.lines().count(), s.event_log.len());
    let events = events_from_jsonl(&log).unwrap();
    let replayed = TutorSession::replay("scripted", "student-7", single_plan(), 42, &events, exec).unwrap();
    assert_eq!(replayed, s);
    assert_eq!(serde_json::to_string(&replayed).unwrap(), serde_json::to_string(&s).unwrap());
}

#[test]
fn metrics_of_a_single_accepted_test() {
    let exec = common::shared_harness();
    let mut s = TutorSession::start("s", "stu", single_plan(), 0, 0).unwrap();
    assert_eq!(s.metrics().tests_written, 0);
    s.add_test_case(exec, args(&[3, 2, 1], 3), Literal::None, "cat-1", 500).unwrap();
    let m = s.metrics();
    assert_eq!(m.tests_written, 1);
    assert_eq!(m.categories_used, 1);
    assert_eq!(m.phase_seconds["suite_building"], 0.5);
}

#[test]
fn failed_commands_leave_no_trace() {
    let exec = common::shared_harness();
    let mut s = TutorSession::start("s", "stu", single_plan(), 0, 0).unwrap();
    let before = s.clone();
    assert!(s.apply(exec, Command::ConfirmResolved, 10).is_err());
    assert!(s.apply(exec, Command::SelectExplanation { choice_id: "opt-1".into() }, 10).is_err());
    assert!(s.apply(exec, Command::CreateCategory { name: "  ".into() }, 10).is_err());
    assert_eq!(s, before);
    // A clock that runs backwards is clamped.
    s.add_test_case(exec, args(&[3, 2, 1], 3), Literal::None, "cat-1", 100).unwrap();
    s.add_test_case(exec, args(&[5], 5), Literal::None, "cat-1", 50).unwrap();
    assert_eq!(s.event_log.last().unwrap().time_ms, 100);
}

#[test]
fn dialog_entries_do_not_repeat_the_speaker_name() {
    let exec = common::shared_harness();
    let mut s = TutorSession::start("s", "stu", single_agent_plan("code-01"), 1, 0).unwrap();
    s.apply(exec, Command::StartDebugging, 1).unwrap();
    let HintOutcome::Hint { message, .. } = s.request_test_hint(exec, 2).unwrap() else { panic!() };
    assert!(message.starts_with("Dave: "));
    let wrong = wrong_options(&s);
    s.select_explanation_choice(exec, &wrong[0], 3).unwrap();
    let right = correct_option(&s);
    s.select_explanation_choice(exec, &right, 4).unwrap();
    s.confirm(exec, 5).unwrap();
    let dialog = &s.queue[0].dialog;
    assert_eq!(dialog.len(), 7);
    assert!(dialog.iter().all(|m| !m.text.starts_with("Dave:")), "{dialog:?}");
    assert_eq!(dialog.last().unwrap().text, "Thank you for your help!");
}
