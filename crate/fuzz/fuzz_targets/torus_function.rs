#![no_main]
use libfuzzer_sys::fuzz_target;
use qpf_core::spectral::TorusFunction;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(f) = TorusFunction::from_json(text) {
        let back = TorusFunction::from_json(&f.to_json()).expect("serialized function parses");
        assert_eq!(back, f);
    }
});
