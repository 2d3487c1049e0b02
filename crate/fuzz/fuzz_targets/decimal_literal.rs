#![no_main]
use libfuzzer_sys::fuzz_target;
use qpf_cli::config::parse_ln_decimal;
use qpf_core::arithmetic::decimal::parse_decimal;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_decimal(text);
    if let Ok(l) = parse_ln_decimal(text) {
        assert!(!l.is_nan());
    }
});
