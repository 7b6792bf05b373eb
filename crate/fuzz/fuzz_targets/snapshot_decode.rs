#![no_main]

use libfuzzer_sys::fuzz_target;
use see_core::snapshot::Snapshot;

fuzz_target!(|data: &[u8]| {
    if let Ok(snap) = Snapshot::decode(data) {
        assert_eq!(snap.encode(), data);
    }
});
