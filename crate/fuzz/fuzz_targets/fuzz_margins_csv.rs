#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(records) = dynmargin::io::parse_margins_csv(text) {
            // Accepted input must survive a write/parse round trip.
            let mut buf = Vec::new();
            dynmargin::io::cli::write_margins_csv_to(&mut buf, &records).unwrap();
            let reparsed =
                dynmargin::io::parse_margins_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
            assert_eq!(records, reparsed);
        }
    }
});
