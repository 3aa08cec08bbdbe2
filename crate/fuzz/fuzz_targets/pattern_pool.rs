#![no_main]
use libfuzzer_sys::fuzz_target;
use spectool_core::miner::PatternPool;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(pool) = PatternPool::from_json(text) else { return };
    let out = pool.to_json();
    let again = PatternPool::from_json(&out).expect("written pool reloads");
    assert_eq!(again.to_json(), out);
});
