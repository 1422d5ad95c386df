#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(scenario) = serde_json::from_str::<dynmargin::io::ScenarioFile>(text) {
            // Whatever parses must re-serialize and parse back identically.
            let again = serde_json::to_string(&scenario).unwrap();
            let reparsed: dynmargin::io::ScenarioFile = serde_json::from_str(&again).unwrap();
            assert_eq!(scenario, reparsed);
        }
    }
});
