mod common;

use common::*;
use lingua_core::TokenSeq;
use lingua_model::checkpoint::peek_config;
use lingua_model::{Error, Model, Precision};

#[test]
fn round_trip_is_bit_exact() {
    let m: Model<f32> = tiny_model(40);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    m.save(&path).unwrap();
    let loaded = Model::<f32>::load(&path).unwrap();
    assert_eq!(loaded, m);
    assert_eq!(loaded.to_bytes(), m.to_bytes());
    let src = TokenSeq::new(vec![5, 6, 7]);
    let tgt = TokenSeq::new(vec![8, 9]);
    let a = m.log_prob(&src, L0, &tgt, L1).unwrap();
    let b = loaded.log_prob(&src, L0, &tgt, L1).unwrap();
    assert_eq!(
        a.per_token.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
        b.per_token.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn header_carries_config() {
    let m: Model<f64> = tiny_model(41);
    let bytes = m.to_bytes();
    assert_eq!(&bytes[..8], b"LNGMODEL");
    assert_eq!(peek_config(&bytes).unwrap(), tiny_config(Precision::F64));
}

#[test]
fn corrupt_files_are_rejected() {
    let m: Model<f64> = tiny_model(42);
    let bytes = m.to_bytes();
    let truncated = &bytes[..bytes.len() - 3];
    assert!(
        matches!(Model::<f64>::from_bytes(truncated), Err(Error::Checkpoint(msg)) if msg.contains("truncated"))
    );

    let mut version = bytes.clone();
    version[8] = 9;
    assert!(
        matches!(Model::<f64>::from_bytes(&version), Err(Error::Checkpoint(msg)) if msg.contains("version"))
    );

    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(Model::<f64>::from_bytes(&magic).is_err());

    assert!(matches!(
        Model::<f32>::from_bytes(&bytes),
        Err(Error::Precision { .. })
    ));

    let mut trailing = bytes.clone();
    trailing.push(0);
    assert!(Model::<f64>::from_bytes(&trailing).is_err());
}
