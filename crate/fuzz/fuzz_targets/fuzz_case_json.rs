#![no_main]

use libfuzzer_sys::fuzz_target;

// Case ingestion must reject arbitrary input with an error, never panic.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(raw) = serde_json::from_str::<dynmargin::io::CaseFile>(text) {
            let _ = dynmargin::io::validate_case(raw, "fuzz");
        }
    }
});
