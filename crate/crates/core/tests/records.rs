use min_core::data::{BlobStore, DataError, MemoryStore};
use min_core::{sign_record, Digest, Identifier, KeyPair, ResourceRecord, Signer};

fn id(s: &str) -> Identifier {
    s.parse().unwrap()
}

fn record(key: &KeyPair, content: &[u8]) -> ResourceRecord {
    sign_record(id("/org/doc"), Digest::of(content), id("/loc/n1"), key).unwrap()
}

#[test]
fn genuine_record_verifies_and_survives_encoding() {
    let key = KeyPair::derive("pub");
    let rec = record(&key, b"payload");
    assert!(rec.verify_with_content(&key.public_key(), b"payload"));
    let back = ResourceRecord::decode(&rec.encode()).unwrap();
    assert_eq!(back, rec);
    assert!(back.verify(&key.public_key()));
}

#[test]
fn every_tampered_field_is_rejected() {
    let key = KeyPair::derive("pub");
    let pk = key.public_key();
    let rec = record(&key, b"payload");
    assert!(!rec.verify_with_content(&pk, b"payloaD"));

    let mut r = rec.clone();
    r.content_hash.0[0] ^= 1;
    assert!(!r.verify(&pk));

    let mut r = rec.clone();
    r.locator = id("/loc/elsewhere");
    assert!(!r.verify(&pk));

    let mut r = rec.clone();
    r.name = id("/org/other");
    assert!(!r.verify(&pk));

    let mut r = rec.clone();
    r.signature[5] ^= 0x40;
    assert!(!r.verify(&pk));

    assert!(!rec.verify(&KeyPair::derive("someone else").public_key()));
}

#[test]
fn store_refuses_bytes_that_miss_their_hash() {
    let mut s = MemoryStore::new();
    let h = Digest::of(b"abc");
    assert!(matches!(
        s.put_blob(&h, b"abd"),
        Err(DataError::HashMismatch { .. })
    ));
    s.put_blob(&h, b"abc").unwrap();
    assert_eq!(s.get_blob(&h).unwrap(), b"abc");
    assert!(matches!(
        s.get_blob(&Digest::of(b"x")),
        Err(DataError::Missing(_))
    ));
}
