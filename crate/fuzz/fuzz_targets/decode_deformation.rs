#![no_main]
use g4d_core::scene::io::{decode_deformation, encode_deformation};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(field) = decode_deformation(data) {
        let bytes = encode_deformation(&field);
        let again = decode_deformation(&bytes).expect("re-decode");
        assert_eq!(encode_deformation(&again), bytes);
    }
});
