//! Dense vector collections with positional ids.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::vecmath::Matrix;

/// Row-major vectors; the id of a row is its position.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    data: Vec<f64>,
    categories: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dataset dim must be >= 1"));
        }
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} values do not divide into rows of dim {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Dataset {
            dim,
            data,
            categories: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().ok_or(Error::EmptyDataset)?.len();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::invalid(format!(
                    "row {i} has dim {}, expected {dim}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Dataset::new(dim, data)
    }

    pub fn from_matrix(m: Matrix) -> Result<Self> {
        let dim = m.cols();
        Dataset::new(dim, m.into_data())
    }

    pub fn with_categories(mut self, categories: Vec<String>) -> Result<Self> {
        if categories.len() != self.len() {
            return Err(Error::Category(format!(
                "{} labels for {} rows",
                categories.len(),
                self.len()
            )));
        }
        self.categories = Some(categories);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, id: usize) -> &[f64] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn categories(&self) -> Option<&[String]> {
        self.categories.as_deref()
    }

    /// New dataset holding the given rows in the given order.
    pub fn select(&self, ids: &[usize]) -> Result<Dataset> {
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for &id in ids {
            if id >= self.len() {
                return Err(Error::UnknownId(id as u64));
            }
            data.extend_from_slice(self.row(id));
        }
        let mut out = Dataset::new(self.dim, data)?;
        if let Some(cats) = &self.categories {
            out.categories = Some(ids.iter().map(|&i| cats[i].clone()).collect());
        }
        Ok(out)
    }

    /// Concatenates datasets of equal dim.
    pub fn concat(parts: &[Dataset]) -> Result<Dataset> {
        let first = parts.first().ok_or(Error::EmptyDataset)?;
        let mut data = Vec::new();
        let mut cats: Option<Vec<String>> = first.categories.as_ref().map(|_| Vec::new());
        for p in parts {
            if p.dim != first.dim {
                return Err(Error::DimensionMismatch {
                    expected: first.dim,
                    got: p.dim,
                });
            }
            data.extend_from_slice(&p.data);
            match (&mut cats, &p.categories) {
                (Some(acc), Some(c)) => acc.extend(c.iter().cloned()),
                (None, None) => {}
                _ => return Err(Error::Category("mixing labelled and unlabelled parts".into())),
            }
        }
        let out = Dataset::new(first.dim, data)?;
        match cats {
            Some(c) => out.with_categories(c),
            None => Ok(out),
        }
    }

    /// SHA-256 over dim, count and the f64 payload. Categories excluded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"hnswlab.dataset.v1");
        h.update((self.dim as u64).to_le_bytes());
        h.update((self.len() as u64).to_le_bytes());
        for v in &self.data {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_ragged() {
        assert!(matches!(Dataset::new(2, vec![]), Err(Error::EmptyDataset)));
        assert!(Dataset::new(2, vec![1.0, 2.0, 3.0]).is_err());
        assert!(Dataset::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn hash_depends_on_shape_and_values() {
        let a = Dataset::new(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Dataset::new(4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let c = Dataset::new(2, vec![1.0, 2.0, 3.0, 4.5]).unwrap();
        assert_ne!(a.content_hash(), b.content_hash());
        assert_ne!(a.content_hash(), c.content_hash());
        assert_eq!(a.content_hash(), a.clone().content_hash());
    }

    #[test]
    fn select_and_concat_keep_labels() {
        let a = Dataset::new(1, vec![0.0, 1.0])
            .unwrap()
            .with_categories(vec!["x".into(), "y".into()])
            .unwrap();
        let s = a.select(&[1, 0]).unwrap();
        assert_eq!(s.row(0), &[1.0]);
        assert_eq!(s.categories().unwrap(), &["y".to_string(), "x".to_string()]);
        let c = Dataset::concat(&[a, s]).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(c.categories().unwrap()[3], "x");
    }
}
