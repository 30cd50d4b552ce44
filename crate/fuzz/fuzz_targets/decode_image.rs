#![no_main]
use g4d_core::render::Image;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = Image::decode(data) {
        let bytes = img.encode();
        let again = Image::decode(&bytes).expect("re-decode");
        assert_eq!(again.encode(), bytes);
    }
});
