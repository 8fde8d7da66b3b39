//! Every hand-written (buggy code, snippet edit) pair in the canned fixtures
//! repairs its code locally, and the deliberately over-fixing answers are
//! caught by the gate.

mod common;

use hypocompass::harness::error_vector;
use hypocompass::patch::{diff_is_local, SnippetEdit};
use hypocompass::pipeline::{fix_gate, CannedExercise, StepFlag};

fn canned(name: &str) -> CannedExercise {
    let path = common::fixtures().join("canned").join(format!("{name}.json"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn single_bug_edits_fix_locally() {
    let exec = common::shared_harness();
    for name in ["first_num_greater_than", "remove_extras"] {
        let exercise = common::exercise(name);
        let mut checked = 0;
        for bug in canned(name).bugs {
            let (Some(old), Some(new)) = (&bug.old_snippet, &bug.new_snippet) else { continue };
            if bug.explanations.len() != 1 {
                continue;
            }
            let edit = SnippetEdit::new(old.clone(), new.clone());
            assert!(!error_vector(&bug.source, &exercise, exec).unwrap().is_zero());
            let fixed = edit.apply(&bug.source).unwrap();
            let vector = error_vector(&fixed, &exercise, exec).unwrap();
            assert!(vector.is_zero(), "{name}: {old:?} -> {new:?} leaves {vector}");
            assert!(diff_is_local(&bug.source, &fixed, &edit), "{name}: {old:?}");
            assert_eq!(fix_gate(&fixed, &fixed, &vector), None);
            checked += 1;
        }
        assert!(checked >= 10, "{name}: only {checked} pairs");
    }
}

#[test]
fn over_fixing_answers_are_rejected() {
    let exec = common::shared_harness();
    for name in ["first_num_greater_than", "remove_extras"] {
        let exercise = common::exercise(name);
        let bug = canned(name).bugs.into_iter().find(|b| b.overfix_answer.is_some()).unwrap();
        let edit = SnippetEdit::new(bug.old_snippet.unwrap(), bug.new_snippet.unwrap());
        let applied = edit.apply(&bug.source).unwrap();
        let over = bug.overfix_answer.unwrap();
        let vector = error_vector(&over, &exercise, exec).unwrap();
        // The rewrite is correct, but it changes more than the snippet does.
        assert!(vector.is_zero());
        assert!(!diff_is_local(&bug.source, &over, &edit));
        assert_eq!(fix_gate(&applied, &over, &vector), Some(StepFlag::OverFix));
    }
}

#[test]
fn partial_fixes_are_rejected() {
    let exec = common::shared_harness();
    for name in ["first_num_greater_than", "remove_extras"] {
        let exercise = common::exercise(name);
        let bug = canned(name).bugs.into_iter().find(|b| b.explanations.len() > 1).unwrap();
        let edit = SnippetEdit::new(bug.old_snippet.unwrap(), bug.new_snippet.unwrap());
        let applied = edit.apply(&bug.source).unwrap();
        let vector = error_vector(&applied, &exercise, exec).unwrap();
        assert_eq!(fix_gate(&applied, &applied, &vector), Some(StepFlag::UnderFix));
    }
}
