#![no_main]

use filtralab::report::parse_csv_report;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(report) = parse_csv_report(text) {
            // Anything accepted must survive a write/read cycle.
            let again = parse_csv_report(&report.to_csv().expect("rendering a parsed report")).expect("re-parse");
            assert_eq!(again.rows.len(), report.rows.len());
        }
    }
});
