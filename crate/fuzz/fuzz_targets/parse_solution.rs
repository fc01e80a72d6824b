#![no_main]

use keymaze::render_actions;
use keymaze::verify::parse_solution;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(actions) = parse_solution(text) {
        // rendering is canonical, so it must parse back to the same list
        let again = parse_solution(&format!("Solution: {}", render_actions(&actions))).expect("canonical form parses");
        assert_eq!(again, actions);
    }
});
