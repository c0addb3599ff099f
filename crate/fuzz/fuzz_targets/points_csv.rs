#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&first, rest)) = data.split_first() else {
        return;
    };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let dim = match first % 5 {
        0 => None,
        d => Some(d as usize),
    };
    if let Ok(points) = alphapred::io::parse_points_csv(text, dim) {
        if let Some(d) = dim {
            assert!(points.iter().all(|p| p.len() == d));
        }
    }
});
