#![no_main]

use alphapred::io::{parse_problem_json, problem_to_json};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(problem) = parse_problem_json(text) else { return };
    let printed = problem_to_json(&problem).expect("a parsed problem prints");
    let again = parse_problem_json(&printed).expect("printed problem parses");
    assert_eq!(again.d, problem.d);
    assert_eq!(again.q, problem.q);
    assert_eq!(again.transform, problem.transform);
});
