mod common;

use std::time::Instant;

use hypocompass::harness::{error_vector, expected_output, Oracle};
use hypocompass::literal::{lit, Literal, TestInput};
use hypocompass::model::ErrorVector;

#[test]
fn reference_solutions_pass_their_own_inputs() {
    let started = Instant::now();
    let exec = common::harness();
    for name in common::ALL_EXERCISES {
        let exercise = common::exercise(name);
        let vector = error_vector(&exercise.reference_solution, &exercise, &exec).unwrap();
        assert_eq!(vector.len(), exercise.reference_inputs.len());
        assert!(vector.is_zero(), "{name}: {vector}");
    }
    assert!(started.elapsed().as_secs() < 30);
}

#[test]
fn reference_outputs_for_first_num_greater_than() {
    let exec = common::harness();
    let exercise = common::exercise("first_num_greater_than");
    let oracle = Oracle::compute(&exercise, &exec).unwrap();
    // Recorded by running the reference solution under CPython 3.10.
    let expected = [
        Literal::None,
        lit::int(3),
        Literal::None,
        lit::int(5),
        Literal::None,
        lit::int(5),
        lit::int(-1),
        lit::int(4),
        lit::int(9),
        Literal::None,
    ];
    assert_eq!(oracle.outputs(), expected);
    let empty = TestInput::new(vec![lit::ints(&[]), lit::int(0)]);
    assert_eq!(expected_output(&exercise, &empty, &exec).unwrap(), Literal::None);
}

#[test]
fn early_return_code_fails_only_where_later_numbers_matter() {
    let exec = common::harness();
    let exercise = common::exercise("first_num_greater_than");
    let vector = error_vector(common::EARLY_RETURN_BUGGY, &exercise, &exec).unwrap();
    // ([3,2,1],3) passes; ([1,2,3],2) fails.
    assert_eq!(&vector.0[..2], &[false, true]);
    assert_eq!(vector, ErrorVector::from_bits(&[0, 1, 0, 0, 0, 1, 1, 0, 1, 0]));
}

#[test]
fn crashing_and_misnamed_codes_fail_their_inputs() {
    let exec = common::harness();
    let exercise = common::exercise("first_num_greater_than");
    let crash = "def first_num_greater_than(numbers_list, key):\n    return numbers_list[0] if numbers_list[0] > key else None\n";
    let vector = error_vector(crash, &exercise, &exec).unwrap();
    // Only the empty list raises; every other input happens to agree or not by value.
    assert!(vector.0[2]);
    let missing = "def something_else(numbers_list, key):\n    return None\n";
    assert_eq!(error_vector(missing, &exercise, &exec).unwrap().failures(), exercise.reference_inputs.len());
}
