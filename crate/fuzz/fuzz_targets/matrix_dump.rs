#![no_main]
use d2sim::MixingMatrix;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(w) = MixingMatrix::from_json(text) {
        let _ = w.validate().to_key_value_lines();
        MixingMatrix::from_json(&w.to_json()).expect("dump round-trips");
    }
});
