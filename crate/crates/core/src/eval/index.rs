//! Exhaustive retrieval index over unit image features.
//!
//! File layout: `u64` LE header length, header JSON, then `count × dim`
//! float32 LE features.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{normalize, ImageEncoder};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::format::{f32_from_le_bytes, f32_le_bytes, round_to_f32, sha256_hex};
use crate::image::Image;
use crate::Vector;

pub const INDEX_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct IndexEntry {
    pub id: String,
    /// Unit norm, float32-representable.
    pub feature: Vector,
    pub label: Option<String>,
}

#[derive(Clone, Debug)]
pub struct IndexItem {
    pub id: String,
    pub image: Image,
    pub label: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalIndex {
    entries: Vec<IndexEntry>,
    dim: usize,
    encoder_checksum: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    dim: usize,
    count: usize,
    ids: Vec<String>,
    labels: Vec<Option<String>>,
    encoder_checksum: String,
}

/// A ranked hit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredId {
    pub id: String,
    pub score: f64,
}

pub fn build_index(items: &[IndexItem], encoder: &dyn ImageEncoder, mode: Execution) -> Result<RetrievalIndex> {
    let features = exec::try_map_slice(mode, items, |item| encoder.encode_image(&item.image))?;
    let labeled = items.iter().zip(features).map(|(item, f)| (item.id.clone(), f, item.label.clone())).collect();
    RetrievalIndex::from_features(labeled, encoder.parameter_checksum())
}

impl RetrievalIndex {
    /// Normalizes and float32-rounds each feature.
    pub fn from_features(
        entries: Vec<(String, Vector, Option<String>)>,
        encoder_checksum: impl Into<String>,
    ) -> Result<Self> {
        let Some(first) = entries.first() else {
            return Err(Error::EmptyIndex);
        };
        let dim = first.1.len();
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(entries.len());
        for (id, f, label) in entries {
            if !seen.insert(id.clone()) {
                return Err(Error::DuplicateId(id));
            }
            if f.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: f.len() });
            }
            out.push(IndexEntry { id, feature: round_to_f32(&normalize(&f)?), label });
        }
        Ok(Self { entries: out, dim, encoder_checksum: encoder_checksum.into() })
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn encoder_checksum(&self) -> &str {
        &self.encoder_checksum
    }

    pub fn get(&self, id: &str) -> Option<&IndexEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// All entries by descending cosine to `query`, ties by ascending id.
    pub fn search(&self, query: &Vector) -> Result<Vec<ScoredId>> {
        if self.entries.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: query.len() });
        }
        let q = normalize(query)?;
        let mut hits: Vec<ScoredId> =
            self.entries.iter().map(|e| ScoredId { id: e.id.clone(), score: q.dot(&e.feature) }).collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
        Ok(hits)
    }

    /// 1-based rank of `id` for `query`.
    pub fn rank_of(&self, query: &Vector, id: &str) -> Result<usize> {
        self.search(query)?
            .iter()
            .position(|h| h.id == id)
            .map(|p| p + 1)
            .ok_or_else(|| Error::InvalidArgument(format!("id {id} is not in the index")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            version: INDEX_VERSION,
            dim: self.dim,
            count: self.entries.len(),
            ids: self.entries.iter().map(|e| e.id.clone()).collect(),
            labels: self.entries.iter().map(|e| e.label.clone()).collect(),
            encoder_checksum: self.encoder_checksum.clone(),
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(8 + header.len() + 4 * self.dim * self.entries.len());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for e in &self.entries {
            out.extend(f32_le_bytes(e.feature.iter()));
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let len_bytes: [u8; 8] = bytes
            .get(..8)
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| Error::Format("index file too short".into()))?;
        let header_len = usize::try_from(u64::from_le_bytes(len_bytes))
            .map_err(|_| Error::Format("index header length overflows".into()))?;
        let header_end = 8usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Format("index header is truncated".into()))?;
        let header: Header = serde_json::from_slice(&bytes[8..header_end])?;
        if header.version != INDEX_VERSION {
            return Err(Error::Format(format!("unsupported index version {}", header.version)));
        }
        if header.ids.len() != header.count || header.labels.len() != header.count {
            return Err(Error::Format("index header counts disagree".into()));
        }
        let values = f32_from_le_bytes(&bytes[header_end..])?;
        if values.len() != header.count * header.dim {
            return Err(Error::Format(format!(
                "index holds {} values, header implies {}",
                values.len(),
                header.count * header.dim
            )));
        }
        let mut seen = HashSet::new();
        let entries = header
            .ids
            .into_iter()
            .zip(header.labels)
            .zip(values.chunks(header.dim.max(1)))
            .map(|((id, label), chunk)| {
                if !seen.insert(id.clone()) {
                    return Err(Error::DuplicateId(id));
                }
                Ok(IndexEntry { id, feature: Vector::from_column_slice(chunk), label })
            })
            .collect::<Result<Vec<_>>>()?;
        if entries.is_empty() {
            return Err(Error::EmptyIndex);
        }
        Ok(Self { entries, dim: header.dim, encoder_checksum: header.encoder_checksum })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Content hash of the serialized index.
    pub fn id(&self) -> Result<String> {
        Ok(sha256_hex(&self.to_bytes()?))
    }
}

/// Ranked ids only.
pub fn rank(query: &Vector, index: &RetrievalIndex) -> Result<Vec<String>> {
    Ok(index.search(query)?.into_iter().map(|h| h.id).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{standard_normal, stream};

    fn random_index(n: usize, dim: usize, seed: u64) -> RetrievalIndex {
        let mut rng = stream(seed);
        let entries = (0..n).map(|i| (format!("img{i:03}"), standard_normal(&mut rng, dim), None)).collect();
        RetrievalIndex::from_features(entries, "test").unwrap()
    }

    #[test]
    fn single_entry() {
        let idx =
            RetrievalIndex::from_features(vec![("a".into(), Vector::from_vec(vec![3.0, 4.0]), None)], "").unwrap();
        assert!((idx.entries()[0].feature.norm() - 1.0).abs() < 1e-6);
        assert_eq!(rank(&Vector::from_vec(vec![1.0, 0.0]), &idx).unwrap(), vec!["a"]);
    }

    #[test]
    fn matching_entry_ranks_first() {
        let e = |v: [f64; 3]| Vector::from_vec(v.to_vec());
        let idx = RetrievalIndex::from_features(
            vec![
                ("x".into(), e([1.0, 0.0, 0.0]), None),
                ("y".into(), e([0.0, 1.0, 0.0]), None),
                ("z".into(), e([0.0, 0.0, 1.0]), None),
            ],
            "",
        )
        .unwrap();
        assert_eq!(rank(&e([0.0, 2.0, 0.0]), &idx).unwrap()[0], "y");
        // x and z tie at 0: ascending id.
        assert_eq!(rank(&e([0.0, 2.0, 0.0]), &idx).unwrap(), vec!["y", "x", "z"]);
    }

    #[test]
    fn ranking_equals_sort_oracle() {
        let idx = random_index(10, 6, 3);
        let q = standard_normal(&mut stream(4), 6);
        let mut oracle: Vec<(f64, String)> =
            idx.entries().iter().map(|e| (normalize(&q).unwrap().dot(&e.feature), e.id.clone())).collect();
        oracle.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let expected: Vec<String> = oracle.into_iter().map(|(_, id)| id).collect();
        assert_eq!(rank(&q, &idx).unwrap(), expected);
    }

    #[test]
    fn bytes_round_trip_and_duplicates() {
        let idx = random_index(5, 4, 8);
        let bytes = idx.to_bytes().unwrap();
        let back = RetrievalIndex::from_bytes(&bytes).unwrap();
        assert_eq!(back, idx);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert!(RetrievalIndex::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let v = Vector::from_vec(vec![1.0, 0.0]);
        let dup = RetrievalIndex::from_features(vec![("a".into(), v.clone(), None), ("a".into(), v, None)], "");
        assert!(matches!(dup, Err(Error::DuplicateId(_))));
        assert!(matches!(RetrievalIndex::from_features(vec![], ""), Err(Error::EmptyIndex)));
    }

    proptest::proptest! {
        #[test]
        fn rank_invariant_under_positive_scaling(seed in 0u64..1000, scale in 1e-3f64..1e3) {
            let idx = random_index(12, 5, seed);
            let q = standard_normal(&mut stream(seed + 1), 5);
            let scaled = &q * scale;
            proptest::prop_assert_eq!(rank(&q, &idx).unwrap(), rank(&scaled, &idx).unwrap());
        }
    }
}
