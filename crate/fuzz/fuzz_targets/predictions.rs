#![no_main]

use libfuzzer_sys::fuzz_target;
use mocapkit_core::formats::{Document, PredictionFile, Strictness};
use mocapkit_core::Side;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    for strictness in [Strictness::Strict, Strictness::Lenient] {
        let Ok(file) = PredictionFile::from_json(text, strictness) else {
            continue;
        };
        let json = file.to_json().expect("parsed predictions serialize");
        assert_eq!(PredictionFile::from_json(&json, Strictness::Strict).unwrap(), file);
        for frame in &file.frames {
            if let Some(body) = &frame.body {
                let _ = body.to_prediction();
            }
            if let Some(hand) = &frame.left_hand {
                let _ = hand.to_prediction(Side::Left);
            }
            if let Some(hand) = &frame.right_hand {
                let _ = hand.to_prediction(Side::Right);
            }
        }
    }
});
