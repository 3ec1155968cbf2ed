#![no_main]

use libfuzzer_sys::fuzz_target;
use tselab::io::{matrix_to_csv, parse_matrix_csv};
use tselab::transformer::AttentionMatrix;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(m) = parse_matrix_csv(text) else { return };
    assert!(m.rows() > 0 && m.cols() > 0);
    assert!(m.is_finite());
    // Whatever parses must survive a write/read cycle unchanged.
    assert_eq!(parse_matrix_csv(&matrix_to_csv(&m)).expect("round trip"), m);
    if m.is_square() && m.rows() <= 8 {
        if let Ok(p) = AttentionMatrix::with_tolerance(m, 1e-9) {
            let _ = tselab::spectral::spectral_report(&p);
        }
    }
});
