#![no_main]

use libfuzzer_sys::fuzz_target;
use mocapkit_core::formats::{Document, ModelAsset, Strictness};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    for strictness in [Strictness::Strict, Strictness::Lenient] {
        let Ok(asset) = ModelAsset::from_json(text, strictness) else {
            continue;
        };
        let json = asset.to_json().expect("parsed asset serializes");
        assert_eq!(ModelAsset::from_json(&json, Strictness::Strict).unwrap(), asset);
        // validation must reject bad layouts with an error, never a panic
        if let Ok(model) = asset.to_model() {
            assert_eq!(ModelAsset::from_model(&model).to_model().unwrap().joint_count(), model.joint_count());
        }
    }
});
