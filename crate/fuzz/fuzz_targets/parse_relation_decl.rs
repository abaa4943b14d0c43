#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(decl) = llib_core::parse_relation_decl(text) {
            assert!(!decl.schema.columns().is_empty());
        }
    }
});
