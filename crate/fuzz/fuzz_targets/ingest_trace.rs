#![no_main]
use libfuzzer_sys::fuzz_target;
use spectool_core::{ingest_trace, IngestConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(report) = ingest_trace(data, &IngestConfig::default()) else { return };
    for s in &report.sessions {
        // Segmentation keeps each session in time order.
        assert!(s.events.windows(2).all(|w| w[0].t_start <= w[1].t_start));
    }
});
