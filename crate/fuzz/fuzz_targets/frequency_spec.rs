#![no_main]
use libfuzzer_sys::fuzz_target;
use qpf_core::arithmetic::{expand_continued_fraction, FrequencySpec};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = FrequencySpec::from_json(text) {
        let _ = expand_continued_fraction(&spec, 32);
    }
});
