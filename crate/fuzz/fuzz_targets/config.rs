#![no_main]
use d2sim::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = ExperimentConfig::from_json(text) {
        let again = ExperimentConfig::from_json(&config.to_json()).expect("serialized config parses");
        assert_eq!(again, config);
    }
});
