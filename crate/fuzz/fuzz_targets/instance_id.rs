#![no_main]

use keymaze::dataset::{instance_id, parse_instance_id};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok((params, seed)) = parse_instance_id(text) {
        assert_eq!(instance_id(&params, seed), text);
    }
});
