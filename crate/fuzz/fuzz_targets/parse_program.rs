#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Err(e) = llib_core::parse_program(text) {
            // positions must point inside the input
            if let Some(pos) = e.pos() {
                assert!(pos.line >= 1 && pos.line <= text.lines().count().max(1) + 1);
            }
            let _ = e.render(Some(text), Some("fuzz"));
        }
    }
});
