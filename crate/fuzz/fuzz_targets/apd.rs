#![no_main]

use libfuzzer_sys::fuzz_target;
use spinphoton::analysis::fit_ellipse;
use spinphoton::io::parse_apd;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(points) = parse_apd(text) {
        // The fit may reject the data but must not panic.
        if let Ok(fit) = fit_ellipse(&points) {
            assert_eq!(fit.phases.len(), points.len());
        }
    }
});
