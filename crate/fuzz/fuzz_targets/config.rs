#![no_main]

use libfuzzer_sys::fuzz_target;
use spinphoton::config::parse_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_config(text) {
        // Anything accepted must survive its own serialization.
        let again = parse_config(&cfg.to_toml()).expect("serialized config parses");
        assert_eq!(again, cfg);
    }
});
