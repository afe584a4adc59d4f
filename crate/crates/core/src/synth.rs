//! Synthetic datasets of prescribed intrinsic dimensionality.
//!
//! A basis `U` (k×d) is obtained by orthonormalizing k standard-normal
//! vectors; data is `X = C·U` with `C` an n×k matrix of i.i.d. standard
//! normal coefficients, so every row lies in the k-dimensional span of `U`.
//!
//! Normal variates come from `rand_distr::StandardNormal` (ziggurat) over
//! ChaCha8. Row `i` always draws from substream `i` of its seed, so output
//! is independent of the number of worker threads.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::seed;
use crate::vecmath::{self, Matrix};

/// Redraws allowed for one degenerate basis row.
pub const MAX_BASIS_RETRIES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Ambient dimension.
    pub d: usize,
    /// Number of basis vectors.
    pub k: usize,
    /// Number of vectors.
    pub n: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.d {
            return Err(Error::invalid(format!(
                "basis count k={} must satisfy 1 <= k <= d={}",
                self.k, self.d
            )));
        }
        if self.n == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(())
    }

    pub fn basis(&self) -> Result<Matrix> {
        self.validate()?;
        generate_basis(self.d, self.k, seed::derive(self.seed, "basis"))
    }

    /// Basis plus the indexed vectors.
    pub fn generate(&self) -> Result<(Matrix, Dataset)> {
        let basis = self.basis()?;
        let data = generate_dataset(&basis, self.n, seed::derive(self.seed, "data"))?;
        Ok((basis, data))
    }

    /// Query vectors drawn in the same span with an independent stream.
    pub fn queries(&self, basis: &Matrix, n_q: usize) -> Result<Dataset> {
        generate_query_set(basis, n_q, seed::derive(self.seed, "queries"))
    }
}

fn normal_row(seed: u64, stream: u64, len: usize) -> Vec<f64> {
    let mut rng = seed::substream(seed, stream);
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn generate_basis(d: usize, k: usize, seed: u64) -> Result<Matrix> {
    if k == 0 || k > d {
        return Err(Error::invalid(format!(
            "basis count k={k} must satisfy 1 <= k <= d={d}"
        )));
    }
    let mut rows: Vec<Vec<f64>> = (0..k).map(|i| normal_row(seed, i as u64, d)).collect();
    let mut retries = vec![0usize; k];
    loop {
        let v = Matrix::from_rows(&rows)?;
        match vecmath::gram_schmidt(&v) {
            Ok(u) => return Ok(u),
            Err(Error::RankDeficient { row, .. }) => {
                retries[row] += 1;
                if retries[row] > MAX_BASIS_RETRIES {
                    return Err(Error::DegenerateBasis {
                        row,
                        retries: MAX_BASIS_RETRIES,
                    });
                }
                let stream = ((retries[row] as u64) << 32) | row as u64;
                rows[row] = normal_row(seed, stream, d);
            }
            Err(e) => return Err(e),
        }
    }
}

/// `X = C·U` with `n` rows; ids are row positions.
pub fn generate_dataset(basis: &Matrix, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let (k, d) = (basis.rows(), basis.cols());
    if k == 0 {
        return Err(Error::invalid("basis has no rows"));
    }
    let mut data = vec![0.0f64; n * d];
    data.par_chunks_mut(d).enumerate().for_each(|(i, out)| {
        let coeffs = normal_row(seed, i as u64, k);
        for (j, c) in coeffs.iter().enumerate() {
            for (x, u) in out.iter_mut().zip(basis.row(j)) {
                *x += c * u;
            }
        }
    });
    Dataset::new(d, data)
}

/// Same construction as [`generate_dataset`]; callers pass a seed distinct
/// from the data seed.
pub fn generate_query_set(basis: &Matrix, n_q: usize, seed: u64) -> Result<Dataset> {
    generate_dataset(basis, n_q, seed)
}
