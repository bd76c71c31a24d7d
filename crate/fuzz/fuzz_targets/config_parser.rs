#![no_main]

use hwsim::harness::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::parse(text) {
        // anything accepted must survive a round trip
        let again = ExperimentConfig::parse(&cfg.to_cfg_string()).expect("re-parse");
        assert_eq!(again.to_cfg_string(), cfg.to_cfg_string());
    }
});
