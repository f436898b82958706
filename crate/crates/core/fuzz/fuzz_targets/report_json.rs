#![no_main]

use filtralab::report::parse_json_report;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(report) = parse_json_report(text) {
            let again = parse_json_report(&report.to_json().expect("rendering a parsed report")).expect("re-parse");
            assert_eq!(again.rows.len(), report.rows.len());
        }
    }
});
