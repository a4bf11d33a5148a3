#![no_main]
use d2sim::ProblemSpec;
use libfuzzer_sys::fuzz_target;

// Parsing only: a valid spec may describe an arbitrarily large instance.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = ProblemSpec::from_json(text) {
        assert_eq!(ProblemSpec::from_json(&spec.to_json()).unwrap(), spec);
    }
});
