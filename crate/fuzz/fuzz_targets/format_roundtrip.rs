#![no_main]

use libfuzzer_sys::fuzz_target;
use llib_core::{format_program, parse_program};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(program) = parse_program(text) else { return };
    let formatted = format_program(&program);
    let reparsed = parse_program(&formatted).expect("formatted program must parse");
    assert_eq!(reparsed, program);
    assert_eq!(format_program(&reparsed), formatted);
});
