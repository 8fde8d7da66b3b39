//! Random command sequences against the tutor engine: structural invariants,
//! queue discipline, monotone progress, and replay hold after every step.

mod common;

use hypocompass::literal::{lit, Literal, TestInput};
use hypocompass::tutor::{Command, ConfirmOutcome, ExplanationOutcome, Phase, Response, TutorSession};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The command a diligent student would issue next.
fn guided_command(session: &TutorSession) -> Command {
    match session.phase {
        Phase::SuiteBuilding => Command::StartDebugging,
        Phase::ExerciseDone | Phase::SessionDone => Command::NextExercise,
        Phase::Debugging => {
            let agent = session.active().unwrap();
            if agent.fixed {
                Command::ConfirmResolved
            } else {
                let correct = agent.options.iter().find(|o| o.code_id == agent.code_id).unwrap();
                Command::SelectExplanation { choice_id: correct.id.clone() }
            }
        }
    }
}

fn random_command(rng: &mut ChaCha8Rng, session: &TutorSession) -> Command {
    if rng.random_bool(0.3) {
        return guided_command(session);
    }
    let exercise = &session.suite().exercise;
    let categories: Vec<String> = session.categories.iter().map(|c| c.id.clone()).collect();
    match rng.random_range(0..100) {
        0..=29 => {
            let i = rng.random_range(0..exercise.reference_inputs.len());
            let input = exercise.reference_inputs[i].clone();
            let claimed_output = if rng.random_bool(0.7) { exercise.reference_outputs[i].clone() } else { lit::int(rng.random_range(-2..4)) };
            let category_id = if rng.random_bool(0.95) { categories[rng.random_range(0..categories.len())].clone() } else { "nope".into() };
            Command::AddTest { input, claimed_output, category_id }
        }
        30..=31 => Command::AddTest { input: TestInput::new(vec![lit::int(1)]), claimed_output: Literal::None, category_id: categories[0].clone() },
        32..=35 => Command::CreateCategory { name: format!("group {}", rng.random_range(0..5)) },
        36..=45 => Command::StartDebugging,
        46..=55 => Command::RunSuite,
        56..=63 => Command::RequestHint,
        64..=83 => Command::SelectExplanation { choice_id: format!("opt-{}", rng.random_range(1..=4)) },
        84..=95 => Command::ConfirmResolved,
        _ => Command::NextExercise,
    }
}

#[test]
fn random_operation_sequences_keep_invariants() {
    let exec = common::shared_harness();
    let plan = common::default_plan();
    let mut commands_run = 0;
    let mut finished = 0;
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut session = TutorSession::start("fuzz", "student", plan.clone(), seed, 0).unwrap();
        let mut now = 0u64;
        let length = rng.random_range(5..60);
        for _ in 0..length {
            let command = random_command(&mut rng, &session);
            // Occasionally hand the engine a clock that went backwards.
            now = if rng.random_bool(0.05) { now.saturating_sub(700) } else { now + rng.random_range(0..4000) };
            let before = session.clone();
            let result = session.apply(exec, command.clone(), now);
            commands_run += 1;
            let violations = session.violations();
            assert!(violations.is_empty(), "seed {seed}, {command:?}: {violations:?}");

            let Ok(response) = result else {
                assert_eq!(session, before, "seed {seed}: failed {command:?} changed the session");
                continue;
            };
            let same_exercise = session.exercise_index == before.exercise_index;
            if same_exercise {
                // Monotone progress: resolved agents stay resolved, and code
                // only changes through a correct explanation.
                for (a, b) in before.queue.iter().zip(&session.queue) {
                    assert!(!a.resolved || b.resolved, "seed {seed}");
                    if a.current_source != b.current_source {
                        assert!(matches!(response, Response::Explanation(ExplanationOutcome::FixApplied { .. })), "seed {seed}");
                    }
                }
            }
            // Queue discipline: only a successful confirmation moves the queue
            // forward, and only next_exercise changes the exercise.
            let advanced = matches!(response, Response::Confirm(ConfirmOutcome::Advanced { .. }));
            if session.active_agent != before.active_agent && same_exercise {
                assert!(advanced, "seed {seed}: {command:?} moved the queue");
                assert_eq!(session.active_agent, before.active_agent + 1);
            }
            if !same_exercise {
                assert_eq!(command, Command::NextExercise);
                assert_eq!(session.exercise_index, before.exercise_index + 1);
            }
            assert!(session.event_log.len() > before.event_log.len());
            assert_eq!(&session.event_log[..before.event_log.len()], &before.event_log[..]);
        }
        if session.phase == Phase::SessionDone {
            finished += 1;
        }
        let replayed = TutorSession::replay("fuzz", "student", plan.clone(), seed, &session.event_log, exec).unwrap();
        assert_eq!(replayed, session, "seed {seed}: replay diverged");
    }
    assert!(commands_run > 20_000);
    assert!(finished > 0, "no sequence reached the end of the session");
    println!("{commands_run} commands, {finished} sessions finished");
}
