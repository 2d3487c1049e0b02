#![no_main]
use libfuzzer_sys::fuzz_target;
use qpf_core::kamflow::ConjugationChain;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(chain) = ConjugationChain::from_json(text) {
        let back = ConjugationChain::from_json(&chain.to_json()).expect("serialized chain parses");
        assert_eq!(back, chain);
    }
});
