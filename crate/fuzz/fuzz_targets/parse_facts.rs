#![no_main]

use keymaze::facts::parse_fact_text;
use keymaze::oracle::bfs_optimal;
use keymaze::World;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(kinds) = parse_fact_text(text) else { return };
    for k in &kinds {
        assert_eq!(keymaze::facts::parse_fact(&k.text()).unwrap(), *k);
    }
    if let Ok(world) = World::from_facts(&kinds) {
        if world.columns * world.rows <= 64 {
            let _ = bfs_optimal(&world);
        }
    }
});
