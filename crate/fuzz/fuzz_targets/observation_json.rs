#![no_main]

use alphapred::io::{observation_to_json, parse_observation_json};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(obs) = parse_observation_json(text) else { return };
    let printed = observation_to_json(&obs).expect("a parsed observation prints");
    assert_eq!(
        parse_observation_json(&printed).expect("printed observation parses"),
        obs
    );
});
