#![no_main]

use keymaze::dataset::{instance_from_line, instance_to_line};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(instance) = instance_from_line(text, 1) {
        let line = instance_to_line(&instance);
        assert_eq!(instance_from_line(&line, 1).unwrap(), instance);
    }
});
