#![no_main]
use g4d_core::anchor::AnchorSet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(set) = AnchorSet::from_json(data) {
        let text = set.to_json().expect("serialize");
        AnchorSet::from_json(&text).expect("re-parse");
    }
});
