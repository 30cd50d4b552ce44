//! Replays the checked-in fuzz seeds through the decoders.

use std::path::PathBuf;

use g4d_core::anchor::AnchorSet;
use g4d_core::render::Image;
use g4d_core::scene::io::{decode_cloud, decode_deformation, encode_cloud, encode_deformation};
use g4d_core::scene::SessionFile;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .filter(|(name, _)| name.starts_with("seed_"))
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn cloud_seeds_round_trip() {
    let mut decoded = 0;
    for (name, bytes) in seeds("decode_cloud") {
        if let Ok(cloud) = decode_cloud(&bytes) {
            assert_eq!(encode_cloud(&cloud), bytes, "{name}");
            decoded += 1;
        }
    }
    assert!(decoded >= 1);
}

#[test]
fn deformation_seeds_round_trip() {
    for (name, bytes) in seeds("decode_deformation") {
        let field = decode_deformation(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(encode_deformation(&field), bytes, "{name}");
    }
}

#[test]
fn image_seeds_round_trip() {
    for (name, bytes) in seeds("decode_image") {
        let img = Image::decode(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(img.encode(), bytes, "{name}");
    }
}

#[test]
fn session_seeds_parse_or_reject() {
    let mut parsed = 0;
    for (_, bytes) in seeds("parse_session") {
        if SessionFile::parse(&bytes).is_ok() {
            parsed += 1;
        }
    }
    assert!(parsed >= 1);
}

#[test]
fn anchor_seeds_parse() {
    for (name, bytes) in seeds("parse_anchor_set") {
        let set = AnchorSet::from_json(std::str::from_utf8(&bytes).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(set.len() > 0);
        AnchorSet::from_json(&set.to_json().unwrap()).unwrap();
    }
}
