#![no_main]

use libfuzzer_sys::fuzz_target;
use see_core::config::ConfigFile;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(file) = ConfigFile::parse(text) {
        if let Ok(cfg) = file.resolve() {
            // a resolved config must survive its own sidecar
            let back = ConfigFile::parse(&cfg.to_json()).expect("sidecar parses");
            back.resolve().expect("sidecar resolves");
        }
    }
});
