#![no_main]
use libfuzzer_sys::fuzz_target;
use spectool_core::sim::Workload;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(w) = Workload::from_json(text) else { return };
    // Resolution either fails cleanly or yields scripts over known tools.
    if let Ok(r) = w.resolve() {
        for s in r.scripts.values() {
            assert!(s.steps.iter().all(|st| r.tools.contains_key(&st.tool)));
        }
    }
});
