#![no_main]
use g4d_core::scene::SessionFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = SessionFile::parse(data);
});
