#![no_main]

use libfuzzer_sys::fuzz_target;
use mdi_decoy::config::RunConfig;

// Arbitrary text must never panic the config parser, and any config it
// accepts must survive a serialize/reparse round trip unchanged.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = RunConfig::from_toml(text) {
        let echoed = cfg.to_toml();
        let reparsed = RunConfig::from_toml(&echoed).expect("echoed config must reparse");
        assert_eq!(cfg, reparsed);
    }
});
