#![no_main]

use std::time::{Duration, Instant};

use libfuzzer_sys::fuzz_target;
use llib_core::{analyze, compile, evaluate, Database, Limits};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(program) = llib_core::parse_program(text) else { return };
    let Ok(strat) = analyze(&program) else { return };
    let Ok(plans) = compile(&program, &strat) else { return };
    let limits = Limits {
        max_iterations: 50,
        max_rows: 10_000,
        deadline: Some(Instant::now() + Duration::from_millis(200)),
        cancel: None,
    };
    let _ = evaluate(&plans, &Database::new(), &limits);
});
