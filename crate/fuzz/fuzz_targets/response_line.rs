#![no_main]

use keymaze_runner::{response_from_line, response_to_line};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = response_from_line(text) {
        assert_eq!(response_from_line(&response_to_line(&r)).unwrap(), r);
    }
});
