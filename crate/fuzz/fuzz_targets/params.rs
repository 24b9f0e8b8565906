#![no_main]

use libfuzzer_sys::fuzz_target;
use mocapkit_core::formats::{Document, ParamsFile, Strictness};
use mocapkit_core::toy::{gen_toy_model, SizeClass};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    for strictness in [Strictness::Strict, Strictness::Lenient] {
        let Ok(file) = ParamsFile::from_json(text, strictness) else {
            continue;
        };
        let json = file.to_json().expect("parsed params serialize");
        assert_eq!(ParamsFile::from_json(&json, Strictness::Strict).unwrap(), file);
        let model = gen_toy_model(0, SizeClass::Small);
        if let Ok(params) = file.to_params(&model) {
            let back = ParamsFile::from_params(params.iter().map(|(f, p)| (*f, p)));
            assert_eq!(back.frames.len(), file.frames.len());
        }
    }
});
