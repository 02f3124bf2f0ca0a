#![no_main]

use libfuzzer_sys::fuzz_target;
use mdi_decoy::oracle::PerPulseScenario;

// Arbitrary text must never panic the scenario parser; accepted scenarios
// must round-trip through the fixture format.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(scn) = PerPulseScenario::from_text(text) {
        let echoed = scn.to_text();
        let reparsed = PerPulseScenario::from_text(&echoed).expect("echoed scenario must reparse");
        assert_eq!(scn, reparsed);
    }
});
