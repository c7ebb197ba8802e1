//! Compares the MKA derivations and frames with vectors produced by
//! `tests/oracles/mka_oracle.py`.

use serde_json::Value;
use vmuckle::mka::{self, Member, MkpduFrame};

const VECTORS: &str = include_str!("fixtures/mka_vectors.jsonl");

fn bytes(v: &Value, k: &str) -> Vec<u8> {
    hex::decode(v[k].as_str().unwrap_or_else(|| panic!("missing {k}"))).unwrap()
}

fn arr<const N: usize>(v: &Value, k: &str) -> [u8; N] {
    bytes(v, k).try_into().unwrap()
}

#[test]
fn hierarchy_sak_and_frames_match_oracle() {
    let cases: Vec<Value> = VECTORS.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(cases.len(), 101);
    let mut frames = 0;
    for c in &cases {
        let h = mka::derive_hierarchy(&bytes(c, "msk"), &bytes(c, "ckn")).unwrap();
        assert_eq!(h.cak.as_bytes(), bytes(c, "cak"));
        assert_eq!(h.kek.as_bytes(), bytes(c, "kek"));
        assert_eq!(h.ick.as_bytes(), bytes(c, "ick"));
        if c.get("frame").is_none() {
            continue;
        }
        let key_number = c["key_number"].as_u64().unwrap() as u32;
        let rec = mka::derive_sak(&h, arr(c, "sci"), key_number, arr(c, "nonce"));
        assert_eq!(rec.sak.as_bytes(), bytes(c, "sak"));

        let member = Member { member_id: arr(c, "member_id"), priority: c["priority"].as_u64().unwrap() as u8 };
        let frame = mka::wrap_sak_with_nonce(&h, &rec, member, arr(c, "wrap_nonce"));
        assert_eq!(frame.icv.to_vec(), bytes(c, "icv"));
        assert_eq!(frame.encode(), bytes(c, "frame"));

        let (from, back) = mka::unwrap_frame(&h, &bytes(c, "frame")).unwrap();
        assert_eq!((from, back), (member, rec));
        assert_eq!(MkpduFrame::decode(&bytes(c, "frame")).unwrap(), frame);
        frames += 1;
    }
    assert_eq!(frames, 100);
}
