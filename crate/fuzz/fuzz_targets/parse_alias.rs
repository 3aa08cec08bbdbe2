#![no_main]
use libfuzzer_sys::fuzz_target;
use spectool_core::mapping::parse_alias;
use spectool_core::EventSignature;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let ctx = [EventSignature::success("Search"), EventSignature::fail("Web_fetch")];
    let Ok(m) = parse_alias(text, &ctx) else { return };
    assert_eq!(parse_alias(&m.to_string(), &ctx).expect("printed alias reparses"), m);
});
