#![no_main]
use libfuzzer_sys::fuzz_target;
use spectool_core::sim::{parse_arrivals, write_arrivals};

fuzz_target!(|data: &[u8]| {
    let Ok(arrivals) = parse_arrivals(data) else { return };
    let mut out = Vec::new();
    write_arrivals(&arrivals, &mut out).expect("in-memory write");
    assert_eq!(parse_arrivals(out.as_slice()).expect("written trace reparses"), arrivals);
});
