//! Plays a scripted student through the two checked-in practice suites:
//! build a test suite from hints, pick one wrong explanation per agent, then
//! the right one, and confirm. Prints the dialog and the session metrics.
//!
//! Needs `python3` on the PATH.
//!
//! ```text
//! cargo run -p hypocompass --example tutor_walkthrough
//! ```

use std::path::PathBuf;

use hypocompass::harness::{CachedExecutor, HarnessConfig, PythonHarness};
use hypocompass::model::parse_suite;
use hypocompass::tutor::{Command, ConfirmOutcome, ExplanationOutcome, HintOutcome, Phase, PlanEntry, Speaker, TutorSession};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let suites = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/suites");
    let mut plan = Vec::new();
    for name in ["first_num_greater_than", "remove_extras"] {
        let suite = parse_suite(&std::fs::read_to_string(suites.join(format!("{name}.json")))?)?;
        plan.push(PlanEntry { suite_id: name.to_string(), suite });
    }
    let exec = CachedExecutor::new(PythonHarness::new(HarnessConfig::default())?);
    let mut session = TutorSession::start("demo", "student-1", plan, 42, 0)?;
    let mut now = 0;
    let mut tick = || {
        now += 15_000;
        now
    };

    loop {
        let suite = session.suite().clone();
        println!("\n## {} ({})", suite.exercise.id, session.phase.name());

        // Suite building: ask for hints until none remain and add each hinted
        // input with its correct output.
        session.apply(&exec, Command::StartDebugging, tick())?;
        while session.phase == Phase::Debugging {
            while let HintOutcome::Hint { input_index, text, .. } = session.request_test_hint(&exec, tick())? {
                println!("hint: {text}");
                let input = suite.exercise.reference_inputs[input_index].clone();
                let expected = suite.exercise.reference_outputs[input_index].clone();
                let category = session.categories[0].id.clone();
                session.add_test_case(&exec, input, expected, &category, tick())?;
            }
            let report = session.run_suite_against_agent(&exec, tick())?;
            let failing = report.results.iter().filter(|r| !r.passed).count();
            println!("{} fails {failing} of {} tests", report.agent, report.results.len());

            let agent = session.active().unwrap();
            let wrong = agent.options.iter().find(|o| o.code_id != agent.code_id).map(|o| o.id.clone());
            let right = agent.options.iter().find(|o| o.code_id == agent.code_id).unwrap().id.clone();
            if let Some(wrong) = wrong {
                if let ExplanationOutcome::Confusion { message, .. } = session.select_explanation_choice(&exec, &wrong, tick())? {
                    println!("wrong pick -> {message}");
                }
            }
            if let ExplanationOutcome::FixApplied { diff, .. } = session.select_explanation_choice(&exec, &right, tick())? {
                println!("fix applied ({} diff lines)", diff.len());
            }
            match session.confirm(&exec, tick())? {
                ConfirmOutcome::Advanced { resolved, next_agent, .. } => {
                    println!("{resolved} resolved, next: {}", next_agent.as_deref().unwrap_or("none"));
                }
                ConfirmOutcome::Rejected { failing } => println!("still {failing} failing"),
            }
        }
        if session.phase == Phase::SessionDone {
            break;
        }
        session.apply(&exec, Command::NextExercise, tick())?;
    }

    let last = session.queue.last().unwrap();
    println!("\nlast dialog with {}:", last.display_name);
    for message in &last.dialog {
        let who = match message.speaker {
            Speaker::Agent => last.display_name.as_str(),
            Speaker::Student => "student",
        };
        println!("  {who}: {}", message.text);
    }
    println!("\n{:#?}", session.metrics());
    println!("{} events, violations: {:?}", session.event_log.len(), session.violations());
    Ok(())
}
