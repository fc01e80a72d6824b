#![no_main]

use keymaze::label::{parse_label, render_label};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok((col, row)) = parse_label(text) {
        let rendered = render_label(col, row).expect("parsed labels render");
        assert_eq!(parse_label(&rendered).unwrap(), (col, row));
    }
});
