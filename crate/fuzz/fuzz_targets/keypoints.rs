#![no_main]

use libfuzzer_sys::fuzz_target;
use mocapkit_core::formats::{Document, KeypointFile, Strictness};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    for strictness in [Strictness::Strict, Strictness::Lenient] {
        let Ok(file) = KeypointFile::from_json(text, strictness) else {
            continue;
        };
        let json = file.to_json().expect("parsed keypoints serialize");
        assert_eq!(KeypointFile::from_json(&json, Strictness::Strict).unwrap(), file);
        let layout = file.joint_names.clone();
        if file.dims == 2 {
            let _ = file.to_sets_2d(&layout);
        }
        let _ = file.resolve(&layout);
    }
});
