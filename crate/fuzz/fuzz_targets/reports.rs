#![no_main]

use libfuzzer_sys::fuzz_target;
use mocapkit_core::formats::{Document, EvalReport, FitTraceFile, Strictness};

fn round_trip<T: Document + PartialEq + std::fmt::Debug>(text: &str) {
    for strictness in [Strictness::Strict, Strictness::Lenient] {
        if let Ok(doc) = T::from_json(text, strictness) {
            let json = doc.to_json().expect("parsed document serializes");
            assert_eq!(T::from_json(&json, Strictness::Strict).unwrap(), doc);
        }
    }
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    round_trip::<EvalReport>(text);
    round_trip::<FitTraceFile>(text);
});
