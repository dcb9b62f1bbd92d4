#![no_main]

use libfuzzer_sys::fuzz_target;
use spinphoton::io::{clicks_to_string, parse_clicks};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(records) = parse_clicks(text) {
        let again = parse_clicks(&clicks_to_string(&[], &records)).expect("written clicks parse");
        assert_eq!(again.len(), records.len());
    }
});
