use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::encoder::TextEncoder;
use crate::error::{Error, Result};
use crate::format::sha256_hex;
use crate::Vector;

/// Mean-of-embeddings text encoder: `g(rows) = W·mean(rows)`.
#[derive(Clone, Debug)]
pub struct ToyTextEncoder {
    vocab: Vec<String>,
    lookup: HashMap<String, u32>,
    embeddings: Vec<Vector>,
    projection: DMatrix<f64>,
    context_len: usize,
}

impl ToyTextEncoder {
    pub fn new(vocab: Vec<String>, embeddings: Vec<Vector>, projection: DMatrix<f64>, context_len: usize) -> Self {
        assert_eq!(vocab.len(), embeddings.len());
        assert!(embeddings.iter().all(|e| e.len() == projection.ncols()));
        let lookup = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        Self { vocab, lookup, embeddings, projection, context_len }
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn projection(&self) -> &DMatrix<f64> {
        &self.projection
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.lookup.get(word).copied()
    }

    /// Greedy longest-prefix segmentation of one word.
    fn segment(&self, word: &str, out: &mut Vec<u32>) -> Result<()> {
        let mut rest = word;
        while !rest.is_empty() {
            let mut found = None;
            for end in (1..=rest.len()).rev() {
                if !rest.is_char_boundary(end) {
                    continue;
                }
                if let Some(&id) = self.lookup.get(&rest[..end]) {
                    found = Some((id, end));
                    break;
                }
            }
            match found {
                Some((id, end)) => {
                    out.push(id);
                    rest = &rest[end..];
                }
                None => return Err(Error::UnknownToken(word.to_string())),
            }
        }
        Ok(())
    }
}

impl TextEncoder for ToyTextEncoder {
    fn embed_dim(&self) -> usize {
        self.projection.ncols()
    }

    fn dim(&self) -> usize {
        self.projection.nrows()
    }

    fn context_len(&self) -> usize {
        self.context_len
    }

    fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        let lowered = text.to_lowercase();
        let mut ids = Vec::new();
        for chunk in lowered.split_whitespace() {
            let mut word = String::new();
            for ch in chunk.chars() {
                if matches!(ch, '-' | ',' | '.') {
                    if !word.is_empty() {
                        self.segment(&word, &mut ids)?;
                        word.clear();
                    }
                    self.segment(&ch.to_string(), &mut ids)?;
                } else {
                    word.push(ch);
                }
            }
            if !word.is_empty() {
                self.segment(&word, &mut ids)?;
            }
        }
        Ok(ids)
    }

    fn embed(&self, ids: &[u32]) -> Result<Vec<Vector>> {
        ids.iter()
            .map(|&id| self.embeddings.get(id as usize).cloned().ok_or_else(|| Error::UnknownToken(format!("id {id}"))))
            .collect()
    }

    fn encode_rows(&self, rows: &[Vector]) -> Result<Vector> {
        if rows.is_empty() {
            return Err(Error::EmptyInput);
        }
        if rows.len() > self.context_len {
            return Err(Error::SequenceTooLong { len: rows.len(), max: self.context_len });
        }
        let mut mean = Vector::zeros(self.embed_dim());
        for r in rows {
            if r.len() != self.embed_dim() {
                return Err(Error::DimensionMismatch { expected: self.embed_dim(), got: r.len() });
            }
            mean += r;
        }
        mean /= rows.len() as f64;
        Ok(&self.projection * mean)
    }

    fn rows_vjp(&self, rows: &[Vector], grad: &Vector) -> Result<Vec<Vector>> {
        if rows.is_empty() {
            return Err(Error::EmptyInput);
        }
        let g = self.projection.tr_mul(grad) / rows.len() as f64;
        Ok(vec![g; rows.len()])
    }

    fn parameter_checksum(&self) -> String {
        let mut bytes = Vec::new();
        for e in &self.embeddings {
            bytes.extend(e.iter().flat_map(|x| x.to_le_bytes()));
        }
        bytes.extend(self.projection.iter().flat_map(|x| x.to_le_bytes()));
        sha256_hex(&bytes)
    }
}
