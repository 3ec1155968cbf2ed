#![no_main]

use libfuzzer_sys::fuzz_target;
use tselab::experiments::{ExperimentKind, ExperimentSpec};
use tselab::io::{apply_setting, parse_config};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(pairs) = parse_config(text) else { return };
    let mut keys: Vec<&str> = pairs.iter().map(|(k, _)| k.as_str()).collect();
    keys.sort_unstable();
    keys.dedup();
    assert_eq!(keys.len(), pairs.len());
    let mut spec = ExperimentSpec::defaults(ExperimentKind::EscalationFig2);
    for (k, v) in &pairs {
        assert!(!k.is_empty() && !k.contains('=') && !k.contains('#'));
        let _ = apply_setting(&mut spec, k, v);
    }
    let _ = spec.validate();
});
