//! Slates, response vectors and slate datasets.

use crate::error::{invalid, Result};

/// Ordered list of `k` document ids. Duplicates are allowed.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Slate(Vec<usize>);

impl Slate {
    pub fn new(docs: Vec<usize>, n: usize) -> Result<Self> {
        if let Some(&d) = docs.iter().find(|&&d| d >= n) {
            return Err(invalid(format!("document id {d} out of range for corpus of {n}")));
        }
        Ok(Self(docs))
    }

    /// No range check; callers guarantee ids are in the corpus.
    pub fn from_docs(docs: Vec<usize>) -> Self {
        Self(docs)
    }

    pub fn docs(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn has_duplicates(&self) -> bool {
        let mut seen = self.0.clone();
        seen.sort_unstable();
        seen.windows(2).any(|w| w[0] == w[1])
    }
}

/// Per-position binary user responses.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ResponseVector(Vec<bool>);

impl ResponseVector {
    pub fn new(r: Vec<bool>) -> Self {
        Self(r)
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        bits.iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(invalid(format!("response value {other} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn all(k: usize, value: bool) -> Self {
        Self(vec![value; k])
    }

    pub fn values(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn clicks(&self) -> usize {
        self.0.iter().filter(|&&r| r).count()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&r| if r { 1.0 } else { 0.0 }).collect()
    }

    /// Class index with position 0 as the least significant bit.
    pub fn encode_index(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &r)| r)
            .map(|(i, _)| 1usize << i)
            .sum()
    }

    pub fn decode_index(index: usize, k: usize) -> Self {
        Self((0..k).map(|i| index >> i & 1 == 1).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlateRecord {
    pub slate: Slate,
    pub response: ResponseVector,
    pub user: Option<usize>,
}

/// Training examples sharing one corpus size `n` and slate size `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlateDataset {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub records: Vec<SlateRecord>,
}

impl SlateDataset {
    pub fn new(n: usize, k: usize, seed: u64) -> Self {
        Self { n, k, seed, records: Vec::new() }
    }

    pub fn push(&mut self, record: SlateRecord) -> Result<()> {
        if record.slate.len() != self.k || record.response.len() != self.k {
            return Err(invalid(format!(
                "record has slate length {} and response length {}, dataset k = {}",
                record.slate.len(),
                record.response.len(),
                self.k
            )));
        }
        if let Some(&d) = record.slate.docs().iter().find(|&&d| d >= self.n) {
            return Err(invalid(format!("document id {d} out of range for corpus of {}", self.n)));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_users(&self) -> usize {
        self.records.iter().filter_map(|r| r.user).max().map_or(0, |u| u + 1)
    }

    pub fn is_personalized(&self) -> bool {
        self.records.iter().any(|r| r.user.is_some())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_encoding_extremes() {
        assert_eq!(ResponseVector::all(5, false).encode_index(), 0);
        assert_eq!(ResponseVector::all(5, true).encode_index(), 31);
        assert_eq!(ResponseVector::new(vec![true, false, false]).encode_index(), 1);
    }

    #[test]
    fn index_round_trip_exhaustive() {
        for k in 1..=10 {
            for idx in 0..1usize << k {
                let r = ResponseVector::decode_index(idx, k);
                assert_eq!(r.len(), k);
                assert_eq!(r.encode_index(), idx);
            }
        }
    }

    #[test]
    fn slate_range_check() {
        assert!(Slate::new(vec![0, 4], 5).is_ok());
        assert!(Slate::new(vec![0, 5], 5).is_err());
    }

    #[test]
    fn dataset_rejects_wrong_k() {
        let mut ds = SlateDataset::new(5, 2, 0);
        let rec = SlateRecord {
            slate: Slate::from_docs(vec![1, 2, 3]),
            response: ResponseVector::all(3, false),
            user: None,
        };
        assert!(ds.push(rec).is_err());
    }
}
