//! HSD1 hidden-state dump format.
//!
//! Layout (little-endian): magic `"HSD1"` (4 ASCII bytes), `u32` version = 1,
//! `u32` n_layers, then per layer: `u32` dim, `u64` n_vectors, followed by
//! `n_vectors * dim` f32 values row-major.
//!
//! Values are stored as f32 on disk and in [`HiddenStateDump`]; analysis
//! widens them to f64 at the boundary. Keeping the in-memory dump in f32
//! makes write -> read round trips bit-exact by construction.

use crate::error::{Error, Result};
use std::fs;
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"HSD1";
pub const VERSION: u32 = 1;

/// One layer of hidden vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDump {
    dim: u32,
    n_vectors: u64,
    values: Vec<f32>,
}

impl LayerDump {
    pub fn new(dim: u32, vectors: Vec<Vec<f32>>) -> Result<Self> {
        let n_vectors = vectors.len() as u64;
        let mut values = Vec::with_capacity(vectors.len() * dim as usize);
        for v in &vectors {
            if v.len() != dim as usize {
                return Err(Error::ShapeMismatch {
                    op: "LayerDump::new",
                    left: (1, dim as usize),
                    right: (1, v.len()),
                });
            }
            values.extend_from_slice(v);
        }
        Ok(LayerDump {
            dim,
            n_vectors,
            values,
        })
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn n_vectors(&self) -> u64 {
        self.n_vectors
    }

    /// Vectors widened to f64 for analysis.
    pub fn vectors_f64(&self) -> Vec<Vec<f64>> {
        self.values
            .chunks_exact(self.dim as usize)
            .map(|chunk| chunk.iter().map(|&v| v as f64).collect())
            .collect()
    }
}

/// A whole dump: zero or more layers, possibly of differing dims.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HiddenStateDump {
    pub layers: Vec<LayerDump>,
}

impl HiddenStateDump {
    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }
}

/// Serialize a dump to its on-disk byte layout.
pub fn dump_to_bytes(dump: &HiddenStateDump) -> Vec<u8> {
    let payload: usize = dump
        .layers
        .iter()
        .map(|l| 12 + l.values.len() * 4)
        .sum();
    let mut out = Vec::with_capacity(12 + payload);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(dump.layers.len() as u32).to_le_bytes());
    for layer in &dump.layers {
        out.extend_from_slice(&layer.dim.to_le_bytes());
        out.extend_from_slice(&layer.n_vectors.to_le_bytes());
        for v in &layer.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_dump(dump: &HiddenStateDump, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, dump_to_bytes(dump))?;
    Ok(())
}

/// Parse a dump from raw bytes, validating magic, version, and that the
/// header-declared payload matches the byte count exactly.
pub fn dump_from_bytes(bytes: &[u8]) -> Result<HiddenStateDump> {
    let actual = bytes.len() as u64;
    let mut pos: usize = 0;

    let need = |pos: &mut usize, n: usize| -> Result<usize> {
        let start = *pos;
        let end = start
            .checked_add(n)
            .ok_or(Error::DumpLengthMismatch {
                expected: u64::MAX,
                actual,
            })?;
        if end as u64 > actual {
            return Err(Error::DumpLengthMismatch {
                expected: end as u64,
                actual,
            });
        }
        *pos = end;
        Ok(start)
    };

    let at = need(&mut pos, 4)?;
    let magic: [u8; 4] = bytes[at..at + 4].try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::DumpBadMagic { found: magic });
    }
    let at = need(&mut pos, 4)?;
    let version = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    if version != VERSION {
        return Err(Error::DumpBadVersion { found: version });
    }
    let at = need(&mut pos, 4)?;
    let n_layers = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());

    let mut layers = Vec::with_capacity(n_layers as usize);
    for _ in 0..n_layers {
        let at = need(&mut pos, 4)?;
        let dim = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let at = need(&mut pos, 8)?;
        let n_vectors = u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        let n_values = (dim as u64)
            .checked_mul(n_vectors)
            .and_then(|v| v.checked_mul(4))
            .ok_or(Error::DumpLengthMismatch {
                expected: u64::MAX,
                actual,
            })?;
        if n_values > actual {
            // reject before attempting a huge allocation
            return Err(Error::DumpLengthMismatch {
                expected: pos as u64 + n_values,
                actual,
            });
        }
        let at = need(&mut pos, n_values as usize)?;
        let values = bytes[at..at + n_values as usize]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        layers.push(LayerDump {
            dim,
            n_vectors,
            values,
        });
    }
    if pos as u64 != actual {
        return Err(Error::DumpLengthMismatch {
            expected: pos as u64,
            actual,
        });
    }
    Ok(HiddenStateDump { layers })
}

pub fn read_dump(path: impl AsRef<Path>) -> Result<HiddenStateDump> {
    dump_from_bytes(&fs::read(path)?)
}

// ===========================================================================
// Tests
// ===========================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_vector_dump() -> HiddenStateDump {
        HiddenStateDump {
            layers: vec![LayerDump::new(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()],
        }
    }

    #[test]
    fn byte_accounting_matches_format_layout() {
        // 1 layer, dim=2, two vectors: 4+4+4 + 4+8 + 16 = 40 bytes
        let bytes = dump_to_bytes(&two_vector_dump());
        assert_eq!(bytes.len(), 40);
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dump = two_vector_dump();
        let parsed = dump_from_bytes(&dump_to_bytes(&dump)).unwrap();
        assert_eq!(dump, parsed);
    }

    #[test]
    fn zero_layer_dump_is_valid() {
        let empty = HiddenStateDump::default();
        let bytes = dump_to_bytes(&empty);
        assert_eq!(bytes.len(), 12);
        assert_eq!(dump_from_bytes(&bytes).unwrap().n_layers(), 0);
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = dump_to_bytes(&two_vector_dump());
        bytes[0] = b'X';
        match dump_from_bytes(&bytes) {
            Err(Error::DumpBadMagic { found }) => assert_eq!(&found, b"XSD1"),
            other => panic!("expected bad magic, got {other:?}"),
        }
    }

    #[test]
    fn bad_version_rejected() {
        let mut bytes = dump_to_bytes(&two_vector_dump());
        bytes[4..8].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            dump_from_bytes(&bytes),
            Err(Error::DumpBadVersion { found: 7 })
        ));
    }

    #[test]
    fn truncation_reports_byte_counts() {
        let bytes = dump_to_bytes(&two_vector_dump());
        match dump_from_bytes(&bytes[..30]) {
            Err(Error::DumpLengthMismatch { expected, actual }) => {
                assert_eq!(actual, 30);
                assert!(expected > 30);
            }
            other => panic!("expected length mismatch, got {other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = dump_to_bytes(&two_vector_dump());
        bytes.push(0);
        match dump_from_bytes(&bytes) {
            Err(Error::DumpLengthMismatch { expected, actual }) => {
                assert_eq!(expected, 40);
                assert_eq!(actual, 41);
            }
            other => panic!("expected length mismatch, got {other:?}"),
        }
    }

    #[test]
    fn oversized_declared_layer_rejected_without_allocation() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&MAGIC);
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(
            dump_from_bytes(&bytes),
            Err(Error::DumpLengthMismatch { .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dump.hsd");
        let dump = two_vector_dump();
        write_dump(&dump, &path).unwrap();
        assert_eq!(read_dump(&path).unwrap(), dump);
    }

    proptest! {
        #[test]
        fn round_trip_over_random_shapes(
            layers in proptest::collection::vec(
                (1u32..6, proptest::collection::vec(
                    proptest::collection::vec(-1e6f32..1e6, 1..5), 0..6)),
                0..5)
        ) {
            let dump = HiddenStateDump {
                layers: layers
                    .into_iter()
                    .map(|(dim, rows)| {
                        let rows: Vec<Vec<f32>> = rows
                            .into_iter()
                            .map(|mut r| { r.resize(dim as usize, 0.5); r })
                            .collect();
                        LayerDump::new(dim, rows).unwrap()
                    })
                    .collect(),
            };
            let parsed = dump_from_bytes(&dump_to_bytes(&dump)).unwrap();
            prop_assert_eq!(dump, parsed);
        }
    }
}
