#![no_main]

use libfuzzer_sys::fuzz_target;
use mocapkit_core::formats::{Document, PrepConfig, Strictness};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    for strictness in [Strictness::Strict, Strictness::Lenient] {
        let Ok(config) = PrepConfig::from_json(text, strictness) else {
            continue;
        };
        let json = config.to_json().expect("parsed config serializes");
        assert_eq!(PrepConfig::from_json(&json, Strictness::Strict).unwrap(), config);
        if let Some(map) = &config.joint_map {
            if let Ok(map) = map.to_map() {
                let _ = map.inverse();
            }
        }
    }
});
