//! Dense vector and matrix primitives, distance metrics and Gram-Schmidt.
//!
//! Everything computes in `f64`. Hot loops work on plain slices; the checked
//! entry points ([`dot`], [`distance`]) validate dimensions first.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Residual norm below which a Gram-Schmidt row is considered dependent.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// A finite, non-empty dense vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("vector must have dim >= 1"));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Vector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for Vector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows_data(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::invalid(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows.saturating_mul(cols),
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::invalid(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Matrix::from_rows_data(rows.len(), cols, data)
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Matrix {
            rows: n,
            cols: n,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// `self · otherᵀ`, the matrix of row inner products.
    pub fn mul_transpose(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.cols,
            });
        }
        let mut data = Vec::with_capacity(self.rows * other.rows);
        for i in 0..self.rows {
            for j in 0..other.rows {
                data.push(dot_unchecked(self.row(i), other.row(j)));
            }
        }
        Ok(Matrix {
            rows: self.rows,
            cols: other.rows,
            data,
        })
    }
}

/// Distance kind. Smaller is always more similar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    L2,
    Cosine,
    InnerProduct,
}

impl Metric {
    pub fn tag(self) -> u8 {
        match self {
            Metric::L2 => 0,
            Metric::Cosine => 1,
            Metric::InnerProduct => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Metric::L2),
            1 => Some(Metric::Cosine),
            2 => Some(Metric::InnerProduct),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::L2 => "l2",
            Metric::Cosine => "cosine",
            Metric::InnerProduct => "inner_product",
        }
    }

    /// Distance without dimension checks. Cosine against a zero vector
    /// yields NaN here; callers that accept untrusted vectors go through
    /// [`distance`].
    #[inline]
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::L2 => l2_squared(a, b).sqrt(),
            Metric::Cosine => {
                let (ab, aa, bb) = dot_and_norms(a, b);
                1.0 - ab / (aa.sqrt() * bb.sqrt())
            }
            Metric::InnerProduct => -dot_unchecked(a, b),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" | "euclidean" => Ok(Metric::L2),
            "cosine" | "cos" => Ok(Metric::Cosine),
            "ip" | "inner_product" | "dot" => Ok(Metric::InnerProduct),
            other => Err(Error::invalid(format!("unknown metric '{other}'"))),
        }
    }
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

pub fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    Ok(dot_unchecked(a, b))
}

pub fn distance(a: &[f64], b: &[f64], metric: Metric) -> Result<f64> {
    check_dims(a, b)?;
    if metric == Metric::Cosine && (norm(a) == 0.0 || norm(b) == 0.0) {
        return Err(Error::ZeroVector);
    }
    Ok(metric.eval(a, b))
}

pub fn norm(a: &[f64]) -> f64 {
    dot_unchecked(a, a).sqrt()
}

// Four independent accumulators let the compiler keep the loop in vector
// registers without reassociating a single running sum.
#[inline]
pub fn dot_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn l2_squared(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        let d0 = x[0] - y[0];
        let d1 = x[1] - y[1];
        let d2 = x[2] - y[2];
        let d3 = x[3] - y[3];
        acc[0] += d0 * d0;
        acc[1] += d1 * d1;
        acc[2] += d2 * d2;
        acc[3] += d3 * d3;
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        let d = x - y;
        tail += d * d;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn dot_and_norms(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    (ab, aa, bb)
}

/// Orthonormalizes the rows of `v`.
///
/// Row `i` becomes `w_i = v_i − Σ_{j<i} ⟨v_i, u_j⟩ u_j`, normalized. The
/// projections are subtracted one at a time against the running residual
/// (modified Gram-Schmidt) and the sweep is repeated once, which keeps
/// orthogonality near machine precision even for badly conditioned input.
pub fn gram_schmidt(v: &Matrix) -> Result<Matrix> {
    let (k, d) = (v.rows(), v.cols());
    if k > d {
        return Err(Error::invalid(format!(
            "cannot orthonormalize {k} vectors in dimension {d}"
        )));
    }
    let mut out: Vec<f64> = Vec::with_capacity(k * d);
    for i in 0..k {
        let mut w = v.row(i).to_vec();
        let scale = norm(&w);
        for _pass in 0..2 {
            for j in 0..i {
                let u = &out[j * d..(j + 1) * d];
                let proj = dot_unchecked(&w, u);
                for (wi, ui) in w.iter_mut().zip(u) {
                    *wi -= proj * ui;
                }
            }
        }
        let residual = norm(&w);
        // Relative test so a tiny-but-independent row is not rejected.
        if residual < RANK_TOLERANCE || residual < RANK_TOLERANCE * scale {
            return Err(Error::RankDeficient {
                row: i,
                norm: residual,
            });
        }
        out.extend(w.iter().map(|x| x / residual));
    }
    Matrix::from_rows_data(k, d, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normal_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        Matrix::from_rows_data(rows, cols, data).unwrap()
    }

    fn max_gram_error(u: &Matrix) -> f64 {
        let g = u.mul_transpose(u).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g.get(i, j) - target).abs());
            }
        }
        worst
    }

    #[test]
    fn dot_hand_cases() {
        assert_eq!(dot(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(dot(&[2.0, 3.0], &[2.0, 3.0]).unwrap(), 13.0);
        assert_eq!(dot(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap(), 32.0);
    }

    #[test]
    fn dot_rejects_dim_mismatch() {
        assert!(matches!(
            dot(&[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn distance_hand_cases() {
        assert_eq!(distance(&[0.0, 0.0], &[3.0, 4.0], Metric::L2).unwrap(), 5.0);
        assert_eq!(
            distance(&[1.0, 0.0], &[2.0, 0.0], Metric::Cosine).unwrap(),
            0.0
        );
        assert_eq!(
            distance(&[1.0, 0.0], &[0.0, 5.0], Metric::Cosine).unwrap(),
            1.0
        );
        assert_eq!(
            distance(&[1.0, 2.0], &[3.0, 4.0], Metric::InnerProduct).unwrap(),
            -11.0
        );
    }

    #[test]
    fn cosine_rejects_zero_vector() {
        assert!(matches!(
            distance(&[0.0, 0.0], &[1.0, 0.0], Metric::Cosine),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn vector_rejects_non_finite() {
        assert!(matches!(
            Vector::new(vec![1.0, f64::NAN]),
            Err(Error::NonFinite(1))
        ));
        assert!(Vector::new(vec![]).is_err());
    }

    #[test]
    fn gram_schmidt_identity_unchanged() {
        let u = gram_schmidt(&Matrix::identity(3)).unwrap();
        assert_eq!(u, Matrix::identity(3));
    }

    #[test]
    fn gram_schmidt_hand_case() {
        let v = Matrix::from_rows(&[vec![3.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let u = gram_schmidt(&v).unwrap();
        let expected = [1.0, 0.0, 0.0, 1.0];
        for (a, b) in u.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{:?}", u.data());
        }
    }

    #[test]
    fn gram_schmidt_random_5x8() {
        let u = gram_schmidt(&normal_matrix(5, 8, 42)).unwrap();
        assert!(max_gram_error(&u) <= 1e-6);
    }

    #[test]
    fn gram_schmidt_preserves_span() {
        // Each original row must be reproduced by its projection onto U.
        let v = normal_matrix(4, 7, 3);
        let u = gram_schmidt(&v).unwrap();
        for i in 0..v.rows() {
            let mut recon = vec![0.0; v.cols()];
            for j in 0..u.rows() {
                let c = dot_unchecked(v.row(i), u.row(j));
                for (r, x) in recon.iter_mut().zip(u.row(j)) {
                    *r += c * x;
                }
            }
            for (a, b) in recon.iter().zip(v.row(i)) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gram_schmidt_names_dependent_row() {
        let v = Matrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![2.0, -3.0, 0.0],
        ])
        .unwrap();
        match gram_schmidt(&v) {
            Err(Error::RankDeficient { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn gram_schmidt_rejects_k_above_d() {
        assert!(gram_schmidt(&normal_matrix(3, 2, 1)).is_err());
    }

    #[test]
    fn gram_schmidt_orthonormal_over_100_seeds() {
        for seed in 0..100 {
            let u = gram_schmidt(&normal_matrix(12, 16, seed)).unwrap();
            assert!(max_gram_error(&u) <= 1e-6, "seed {seed}");
        }
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn vec_pair(dim: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
            (
                prop::collection::vec(-100.0..100.0f64, dim),
                prop::collection::vec(-100.0..100.0f64, dim),
            )
        }

        proptest! {
            #[test]
            fn symmetric((a, b) in (1usize..24).prop_flat_map(vec_pair)) {
                for m in [Metric::L2, Metric::Cosine] {
                    if norm(&a) == 0.0 || norm(&b) == 0.0 { continue; }
                    let ab = distance(&a, &b, m).unwrap();
                    let ba = distance(&b, &a, m).unwrap();
                    prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab.abs()));
                }
            }

            #[test]
            fn l2_triangle(
                (a, b, c) in (1usize..24).prop_flat_map(|d| (
                    prop::collection::vec(-10.0..10.0f64, d),
                    prop::collection::vec(-10.0..10.0f64, d),
                    prop::collection::vec(-10.0..10.0f64, d),
                ))
            ) {
                let ab = distance(&a, &b, Metric::L2).unwrap();
                let bc = distance(&b, &c, Metric::L2).unwrap();
                let ac = distance(&a, &c, Metric::L2).unwrap();
                prop_assert!(ac <= ab + bc + 1e-9);
            }

            #[test]
            fn dot_bilinear((a, b) in (1usize..24).prop_flat_map(vec_pair), alpha in -50.0..50.0f64) {
                let scaled: Vec<f64> = a.iter().map(|x| alpha * x).collect();
                let lhs = dot(&scaled, &b).unwrap();
                let rhs = alpha * dot(&a, &b).unwrap();
                // relative to the magnitude of the summands, not the (possibly cancelled) sum
                let mag: f64 = a.iter().zip(&b).map(|(x, y)| (alpha * x * y).abs()).sum();
                prop_assert!((lhs - rhs).abs() <= 1e-12 * mag.max(1e-300));
            }
        }
    }
}
