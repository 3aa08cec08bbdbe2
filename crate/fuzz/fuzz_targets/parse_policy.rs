#![no_main]
use libfuzzer_sys::fuzz_target;
use spectool_core::policy::parse_policy;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(parsed) = parse_policy(text) else { return };
    let again = parse_policy(&parsed.policy.to_yaml()).expect("printed policy reparses");
    assert_eq!(again.policy, parsed.policy);
});
