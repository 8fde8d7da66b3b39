mod common;

use hypocompass::handout::{export_handout, HandoutError};

#[test]
fn verified_suite_renders_codes_pools_and_hints() {
    let suite = common::suite("first_num_greater_than");
    let doc = export_handout(&suite).unwrap();
    assert!(doc.starts_with("# Debugging practice: `first_num_greater_than`"));
    for heading in ["## Exercise", "## Test categories", "## Test case hints", "## Students to help", "## Answer key"] {
        assert!(doc.contains(heading), "{heading}");
    }
    for code in &suite.practice_codes {
        assert!(doc.contains(code.source.trim_end()));
        assert!(doc.contains(&format!("### {}", code.agent_name.as_ref().unwrap())));
        assert!(doc.contains(&code.bug.as_ref().unwrap().explanation));
        for link in &code.explanation_pool.as_ref().unwrap().distractors {
            assert!(doc.contains(&link.explanation_text));
        }
    }
    for hint in &suite.test_case_hints {
        assert!(doc.contains(&hint.text));
    }
    assert!(doc.contains("+    return None"));
    assert_eq!(export_handout(&suite).unwrap(), doc);
}

#[test]
fn empty_hint_sections_are_omitted() {
    let mut suite = common::suite("remove_extras");
    suite.test_case_hints.clear();
    suite.category_hints.clear();
    let doc = export_handout(&suite).unwrap();
    assert!(!doc.contains("## Test case hints"));
    assert!(!doc.contains("## Test categories"));
    assert!(doc.contains("## Students to help"));
}

#[test]
fn unverified_suite_is_refused() {
    let mut suite = common::suite("remove_extras");
    suite.verified = false;
    assert!(matches!(export_handout(&suite), Err(HandoutError::Unverified(id)) if id == "remove_extras"));
}
