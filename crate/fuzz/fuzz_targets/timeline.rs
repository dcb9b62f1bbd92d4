#![no_main]

use libfuzzer_sys::fuzz_target;
use spinphoton::sequencer::parse_timeline_table;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(events) = parse_timeline_table(text) {
        assert!(events.windows(2).all(|w| w[0].time_us <= w[1].time_us));
    }
});
