//! Experience retrieval by embedding similarity, and knowledge retrieval by
//! solution-space match.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::canonical::CanonicalExperience;
use crate::error::{Error, Result};
use crate::space::Task;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub model_tag: String,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, model_tag: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::IncompatibleEmbeddings("empty embedding".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::IncompatibleEmbeddings(
                "embedding has non-finite components".into(),
            ));
        }
        Ok(EmbeddingVector {
            values,
            model_tag: model_tag.into(),
        })
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn check_compatible(&self, other: &EmbeddingVector) -> Result<()> {
        if self.model_tag != other.model_tag {
            return Err(Error::IncompatibleEmbeddings(format!(
                "model tags differ: `{}` vs `{}`",
                self.model_tag, other.model_tag
            )));
        }
        if self.values.len() != other.values.len() {
            return Err(Error::IncompatibleEmbeddings(format!(
                "lengths differ: {} vs {}",
                self.values.len(),
                other.values.len()
            )));
        }
        Ok(())
    }
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    a.check_compatible(b)?;
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let (na2, nb2) = (sq(&a.values), sq(&b.values));
    if na2 == 0.0 || nb2 == 0.0 {
        return Err(Error::IncompatibleEmbeddings("zero vector".into()));
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    // sqrt(n * n) == n exactly, so identical vectors score exactly 1.0
    Ok((dot / (na2 * nb2).sqrt()).clamp(-1.0, 1.0))
}

pub const BOW_DIMENSION: usize = 256;
pub const BOW_MODEL_TAG: &str = "hashing-bow-256";

/// Lowercased alphanumeric tokens of `text`.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// FNV-1a, 64 bit.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Feature-hashed bag-of-words term counts, L2 normalized. Text without any
/// token maps to the zero vector.
pub fn bag_of_words_embedding(text: &str) -> EmbeddingVector {
    let mut values = vec![0.0; BOW_DIMENSION];
    for tok in tokenize(text) {
        values[(fnv1a(tok.as_bytes()) % BOW_DIMENSION as u64) as usize] += 1.0;
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    EmbeddingVector {
        values,
        model_tag: BOW_MODEL_TAG.to_string(),
    }
}

/// A historical task with its description embedding and best experiences.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub task: Task,
    pub embedding: EmbeddingVector,
    pub experiences: Vec<CanonicalExperience>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved<'a> {
    pub entry: &'a PoolEntry,
    pub similarity: f64,
}

/// The `k` pool entries most similar to `query`, most similar first, ties by
/// ascending task id. Tasks in `exclude` are skipped.
pub fn retrieve_experience<'a>(
    query: &EmbeddingVector,
    pool: &'a [PoolEntry],
    k: usize,
    exclude: &HashSet<String>,
) -> Result<Vec<Retrieved<'a>>> {
    let mut scored = Vec::with_capacity(pool.len());
    for entry in pool.iter().filter(|e| !exclude.contains(&e.task.task_id)) {
        scored.push(Retrieved {
            entry,
            similarity: cosine_similarity(query, &entry.embedding)?,
        });
    }
    scored.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then_with(|| a.entry.task.task_id.cmp(&b.entry.task.task_id))
    });
    scored.truncate(k);
    Ok(scored)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub question: String,
    pub temperature: f64,
    pub round: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeItem {
    pub space_id: String,
    pub text: String,
    pub validation_score: f64,
    pub provenance: Provenance,
}

impl KnowledgeItem {
    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::InvalidInput("knowledge text is empty".into()));
        }
        if !self.validation_score.is_finite() {
            return Err(Error::InvalidInput("knowledge score is not finite".into()));
        }
        Ok(())
    }
}

/// All knowledge elicited for `space_id`, best validated first.
pub fn retrieve_knowledge<'a>(space_id: &str, pool: &'a [KnowledgeItem]) -> Vec<&'a KnowledgeItem> {
    let mut out: Vec<&KnowledgeItem> = pool.iter().filter(|k| k.space_id == space_id).collect();
    out.sort_by(|a, b| b.validation_score.total_cmp(&a.validation_score));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(xs.to_vec(), "t").unwrap()
    }

    #[test]
    fn cosine_cases() {
        assert_eq!(
            cosine_similarity(&v(&[0.3, 0.4]), &v(&[0.3, 0.4])).unwrap(),
            1.0
        );
        assert_eq!(
            cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(),
            0.0
        );
        let s = cosine_similarity(&v(&[1.0, 1.0]), &v(&[1.0, 0.0])).unwrap();
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn cosine_errors() {
        assert!(cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])).is_err());
        assert!(cosine_similarity(&v(&[1.0]), &v(&[1.0, 0.0])).is_err());
        let other = EmbeddingVector::new(vec![1.0, 0.0], "other").unwrap();
        assert!(cosine_similarity(&v(&[1.0, 0.0]), &other).is_err());
    }

    fn item(space: &str, score: f64, text: &str) -> KnowledgeItem {
        KnowledgeItem {
            space_id: space.into(),
            text: text.into(),
            validation_score: score,
            provenance: Provenance {
                question: "q".into(),
                temperature: 0.0,
                round: 1,
            },
        }
    }

    #[test]
    fn knowledge_by_space_then_score() {
        let pool = vec![
            item("A", 0.3, "a1"),
            item("B", 0.9, "b"),
            item("A", 0.8, "a2"),
        ];
        let got: Vec<_> = retrieve_knowledge("A", &pool)
            .iter()
            .map(|k| k.text.as_str())
            .collect();
        assert_eq!(got, vec!["a2", "a1"]);
        assert!(retrieve_knowledge("C", &pool).is_empty());
    }

    #[test]
    fn bow_ignores_order_and_case() {
        let a = bag_of_words_embedding("Tabular data with many rows");
        let b = bag_of_words_embedding("rows many WITH data tabular");
        assert_eq!(cosine_similarity(&a, &b).unwrap(), 1.0);
        assert_eq!(a.values.len(), BOW_DIMENSION);
    }
}
