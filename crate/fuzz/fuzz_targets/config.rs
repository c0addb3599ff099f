#![no_main]

use alphapred::canonical::CanonicalProblem;
use alphapred_cli::ExperimentConfig;
use libfuzzer_sys::fuzz_target;
use nalgebra::{DMatrix, DVector};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(config) = ExperimentConfig::from_json(text) else {
        return;
    };
    let _ = config.alphas();
    let problem = CanonicalProblem::from_canonical(6, 2, DVector::from_element(2, 0.5), DMatrix::identity(2, 2))
        .expect("valid problem");
    if let Ok(points) = config.grid_points(&problem) {
        assert!(points.iter().all(|p| p.params.theta.len() == 2));
    }
});
