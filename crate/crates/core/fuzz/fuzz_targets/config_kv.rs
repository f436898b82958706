#![no_main]

use filtralab::config::{PartialConfig, ScenarioConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(partial) = PartialConfig::parse_kv(text) {
            // Validation must reject or accept, never panic.
            let _ = ScenarioConfig::resolve(partial, None);
        }
    }
});
