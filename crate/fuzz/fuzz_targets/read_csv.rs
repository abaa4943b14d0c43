#![no_main]

use libfuzzer_sys::fuzz_target;
use llib_core::{read_csv_from, write_csv_to, ColumnType, Schema};

fuzz_target!(|data: &[u8]| {
    let schema = Schema::of(&[
        ("A", ColumnType::Integer),
        ("B", ColumnType::Double),
        ("C", ColumnType::String),
    ])
    .unwrap();
    let header = data.first().is_some_and(|b| b & 1 == 1);
    let Ok(rel) = read_csv_from(data, &schema, header) else { return };
    // whatever was accepted must survive a write and re-read
    let mut out = Vec::new();
    write_csv_to(&rel, &mut out).unwrap();
    let again = read_csv_from(out.as_slice(), &schema, true).unwrap();
    assert_eq!(again, rel);
});
