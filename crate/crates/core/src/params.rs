//! Model parameter container, canonical serialization, content digests, and
//! the elementwise arithmetic every aggregation strategy is built from.
//!
//! A [`ParameterSet`] is an ordered list of named tensors stored flat in
//! row-major order, always `f64`. Entry order is fixed by model construction
//! order; two sets exchanged within one experiment must agree on the full
//! ordered name + shape sequence (the "schema"). Sets are immutable values
//! after construction and safe to share across threads.

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use std::fmt;

use crate::error::{Error, Result};
use crate::wire;

/// One named tensor: shape plus row-major values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl ParamEntry {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            shape,
            values,
        }
    }
}

/// Ordered collection of named model tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterSet {
    entries: Vec<ParamEntry>,
}

impl ParameterSet {
    /// Build a set, validating shape/value agreement, name uniqueness, and
    /// finiteness of every value.
    pub fn new(entries: Vec<ParamEntry>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            let expected: usize = e.shape.iter().product();
            if expected != e.values.len() {
                return Err(Error::ShapeValueMismatch {
                    entry: e.name.clone(),
                    shape: e.shape.clone(),
                    expected,
                    actual: e.values.len(),
                });
            }
            if let Some(idx) = e.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue {
                    entry: e.name.clone(),
                    index: idx,
                });
            }
            if entries[..i].iter().any(|prev| prev.name == e.name) {
                return Err(Error::DuplicateEntryName(e.name.clone()));
            }
        }
        Ok(Self { entries })
    }

    /// Internal constructor for values produced by arithmetic or training,
    /// where shapes are inherited and finiteness is checked at serialization
    /// time instead.
    pub(crate) fn from_entries_unchecked(entries: Vec<ParamEntry>) -> Self {
        Self { entries }
    }

    pub fn empty() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entry(&self, index: usize) -> &ParamEntry {
        &self.entries[index]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar values across all entries.
    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|e| e.values.len()).sum()
    }

    /// Same schema, all values zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry::new(e.name.clone(), e.shape.clone(), vec![0.0; e.values.len()]))
                .collect(),
        }
    }

    /// Check that `self` and `other` agree on the ordered name + shape
    /// sequence; the error names the first differing entry.
    pub fn same_schema(&self, other: &ParameterSet) -> Result<()> {
        let n = self.entries.len().max(other.entries.len());
        for i in 0..n {
            let left = self.entries.get(i);
            let right = other.entries.get(i);
            let describe = |e: Option<&ParamEntry>| match e {
                Some(e) => format!("{:?} {:?}", e.name, e.shape),
                None => "<missing>".to_string(),
            };
            let matches = match (left, right) {
                (Some(l), Some(r)) => l.name == r.name && l.shape == r.shape,
                _ => false,
            };
            if !matches {
                return Err(Error::SchemaMismatch {
                    index: i,
                    left: describe(left),
                    right: describe(right),
                });
            }
        }
        Ok(())
    }

    /// Canonical byte serialization. Per entry, in order: name length as
    /// 8-byte little-endian, UTF-8 name bytes, shape rank as 8-byte
    /// little-endian, each dimension as 8-byte little-endian, each value as
    /// 8-byte IEEE-754 little-endian. Refuses non-finite values.
    pub fn canonical_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::with_capacity(self.num_values() * 8 + self.entries.len() * 32);
        for e in &self.entries {
            wire::put_str(&mut buf, &e.name);
            wire::put_u64(&mut buf, e.shape.len() as u64);
            for &d in &e.shape {
                wire::put_u64(&mut buf, d as u64);
            }
            for (i, &v) in e.values.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFiniteValue {
                        entry: e.name.clone(),
                        index: i,
                    });
                }
                wire::put_f64(&mut buf, v);
            }
        }
        Ok(buf)
    }

    /// Reconstruct a set from its canonical bytes; inverse of
    /// [`canonical_bytes`](Self::canonical_bytes) bit for bit.
    pub fn from_canonical_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = wire::Reader::new(bytes);
        let mut entries = Vec::new();
        while !r.is_empty() {
            let name = r.str().map_err(Error::MalformedBytes)?;
            let rank = r.u64().map_err(Error::MalformedBytes)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64().map_err(Error::MalformedBytes)? as usize);
            }
            let count: usize = shape.iter().product();
            let mut values = Vec::with_capacity(count);
            for _ in 0..count {
                values.push(r.f64().map_err(Error::MalformedBytes)?);
            }
            entries.push(ParamEntry::new(name, shape, values));
        }
        Self::new(entries)
    }

    /// SHA-256 of the canonical serialization.
    pub fn digest(&self) -> Result<Digest> {
        let bytes = self.canonical_bytes()?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        Ok(Digest(hasher.finalize().into()))
    }

    /// Debug JSON export (name, shape, values arrays). The JSON form is not
    /// the digest input; only canonical bytes are.
    pub fn to_debug_json(&self) -> String {
        serde_json::to_string(self).expect("parameter sets always serialize")
    }
}

/// 32-byte SHA-256 content digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn to_hex(self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s).map_err(|e| Error::MalformedBytes(e.to_string()))?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| Error::MalformedBytes("digest must be 32 bytes".into()))?;
        Ok(Digest(arr))
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({}..)", &self.to_hex()[..12])
    }
}

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Elementwise `a * x + y` with the shared schema.
pub fn axpy(a: f64, x: &ParameterSet, y: &ParameterSet) -> Result<ParameterSet> {
    x.same_schema(y)?;
    let entries = x
        .entries
        .iter()
        .zip(&y.entries)
        .map(|(xe, ye)| {
            let values = xe
                .values
                .iter()
                .zip(&ye.values)
                .map(|(&xv, &yv)| a * xv + yv)
                .collect();
            ParamEntry::new(xe.name.clone(), xe.shape.clone(), values)
        })
        .collect();
    Ok(ParameterSet::from_entries_unchecked(entries))
}

/// Elementwise `a * x`.
pub fn scale(a: f64, x: &ParameterSet) -> ParameterSet {
    let entries = x
        .entries
        .iter()
        .map(|e| {
            ParamEntry::new(
                e.name.clone(),
                e.shape.clone(),
                e.values.iter().map(|&v| a * v).collect(),
            )
        })
        .collect();
    ParameterSet::from_entries_unchecked(entries)
}

/// Elementwise `x + y`.
pub fn add(x: &ParameterSet, y: &ParameterSet) -> Result<ParameterSet> {
    axpy(1.0, x, y)
}

/// Elementwise `x - y`.
pub fn sub(x: &ParameterSet, y: &ParameterSet) -> Result<ParameterSet> {
    axpy(-1.0, y, x)
}

/// Sum over all entries of squared elementwise differences.
pub fn l2_distance_sq(x: &ParameterSet, y: &ParameterSet) -> Result<f64> {
    x.same_schema(y)?;
    let mut total = 0.0;
    for (xe, ye) in x.entries.iter().zip(&y.entries) {
        for (&xv, &yv) in xe.values.iter().zip(&ye.values) {
            let d = xv - yv;
            total += d * d;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pset(pairs: &[(&str, Vec<usize>, Vec<f64>)]) -> ParameterSet {
        ParameterSet::new(
            pairs
                .iter()
                .map(|(n, s, v)| ParamEntry::new(*n, s.clone(), v.clone()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn empty_set_serializes_to_empty_bytes() {
        assert!(ParameterSet::empty().canonical_bytes().unwrap().is_empty());
    }

    #[test]
    fn single_entry_canonical_bytes_are_pinned() {
        // "b", shape [1], value 1.0; 1.0 is 0x3FF0000000000000 little-endian.
        let p = pset(&[("b", vec![1], vec![1.0])]);
        let mut expected = vec![1, 0, 0, 0, 0, 0, 0, 0];
        expected.push(0x62);
        expected.extend_from_slice(&[1, 0, 0, 0, 0, 0, 0, 0]);
        expected.extend_from_slice(&[1, 0, 0, 0, 0, 0, 0, 0]);
        expected.extend_from_slice(&[0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xF0, 0x3F]);
        assert_eq!(p.canonical_bytes().unwrap(), expected);
    }

    #[test]
    fn sign_bit_flip_changes_exactly_one_byte() {
        let a = pset(&[("w", vec![2], vec![1.5, 2.0])]);
        let b = pset(&[("w", vec![2], vec![1.5, -2.0])]);
        let ba = a.canonical_bytes().unwrap();
        let bb = b.canonical_bytes().unwrap();
        assert_eq!(ba.len(), bb.len());
        let diff = ba.iter().zip(&bb).filter(|(x, y)| x != y).count();
        assert_eq!(diff, 1);
    }

    #[test]
    fn digest_of_empty_set_is_sha256_of_empty_input() {
        let d = ParameterSet::empty().digest().unwrap();
        assert_eq!(
            d.to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn digest_is_deterministic_and_value_sensitive() {
        let a = pset(&[("w", vec![1], vec![1.0])]);
        assert_eq!(a.digest().unwrap(), a.digest().unwrap());
        // Adjacent representable double.
        let b = pset(&[("w", vec![1], vec![1.0000000000000002])]);
        assert_ne!(a.digest().unwrap(), b.digest().unwrap());
    }

    #[test]
    fn non_finite_value_refused() {
        let p = ParameterSet::from_entries_unchecked(vec![ParamEntry::new(
            "w",
            vec![1],
            vec![f64::NAN],
        )]);
        match p.canonical_bytes() {
            Err(Error::NonFiniteValue { entry, index }) => {
                assert_eq!(entry, "w");
                assert_eq!(index, 0);
            }
            other => panic!("expected NonFiniteValue, got {other:?}"),
        }
    }

    #[test]
    fn axpy_identity_and_hand_arithmetic() {
        let x = pset(&[("w", vec![2], vec![1.0, 2.0])]);
        let zeros = x.zeros_like();
        assert_eq!(axpy(1.0, &x, &zeros).unwrap(), x);

        let y = pset(&[("w", vec![2], vec![3.0, 5.0])]);
        let d = sub(&x, &y).unwrap();
        assert_eq!(d.entry(0).values, vec![-2.0, -3.0]);
        assert_eq!(l2_distance_sq(&x, &y).unwrap(), 13.0);
        assert_eq!(l2_distance_sq(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn schema_mismatch_names_first_differing_entry() {
        let x = pset(&[("a", vec![1], vec![0.0]), ("b", vec![2], vec![0.0, 0.0])]);
        let y = pset(&[("a", vec![1], vec![0.0]), ("c", vec![2], vec![0.0, 0.0])]);
        match x.same_schema(&y) {
            Err(Error::SchemaMismatch { index, left, right }) => {
                assert_eq!(index, 1);
                assert!(left.contains("\"b\""), "{left}");
                assert!(right.contains("\"c\""), "{right}");
            }
            other => panic!("expected SchemaMismatch, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_names_rejected() {
        let r = ParameterSet::new(vec![
            ParamEntry::new("w", vec![1], vec![0.0]),
            ParamEntry::new("w", vec![1], vec![0.0]),
        ]);
        assert!(matches!(r, Err(Error::DuplicateEntryName(_))));
    }

    #[test]
    fn debug_json_lists_entries() {
        let p = pset(&[("w", vec![2], vec![1.0, -2.5])]);
        let json = p.to_debug_json();
        assert!(json.contains("\"name\":\"w\""));
        assert!(json.contains("-2.5"));
    }
}
