//! Dense row-major `f64` matrices and the handful of kernels the rest of the
//! crate needs: products, stacking, and a ridge-regularized pseudo-inverse
//! solved through a Cholesky factorization of the normal equations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default ridge used by [`pinv`] callers that do not configure one.
pub const DEFAULT_RIDGE: f64 = 1e-8;

/// Dense row-major matrix of finite `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for Matrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        Matrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "Matrix::new",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        let m = Matrix { rows, cols, data };
        m.ensure_finite("Matrix::new")?;
        Ok(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// A matrix with zero rows; the starting point for row accumulation.
    pub fn empty(cols: usize) -> Self {
        Matrix::zeros(0, cols)
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        let n = values.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m.ensure_finite("Matrix::diag")?;
        Ok(m)
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape {
                    op: "Matrix::from_rows",
                    left: (i, cols),
                    right: (1, r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Matrix::new(rows.len(), cols, data)
    }

    pub fn row_vector(values: &[f64]) -> Result<Self> {
        Matrix::new(1, values.len(), values.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        let cols = self.cols.max(1);
        self.data
            .chunks_exact(cols)
            .take(if self.cols == 0 { 0 } else { self.rows })
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Gather the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Largest absolute entry (0 for an empty matrix).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest elementwise absolute difference between equally shaped matrices.
    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                op: "max_abs_diff",
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                op: "sub",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        let m = Matrix { data, ..*self };
        m.ensure_finite("sub")?;
        Ok(m)
    }

    /// `v · self` for a row vector `v` of length `self.rows()`.
    pub fn vecmat(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::Shape {
                op: "vecmat",
                left: (1, v.len()),
                right: self.shape(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (r, &s) in v.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            for (o, &m) in out.iter_mut().zip(self.row(r)) {
                *o += s * m;
            }
        }
        ensure_finite_slice("vecmat", &out)?;
        Ok(out)
    }

    /// `self · v` for a column vector `v` of length `self.cols()`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::Shape {
                op: "matvec",
                left: self.shape(),
                right: (v.len(), 1),
            });
        }
        let out: Vec<f64> = self.row_iter().map(|row| dot(row, v)).collect();
        ensure_finite_slice("matvec", &out)?;
        Ok(out)
    }

    /// Subtract the outer product `col · rowᵀ` in place.
    pub(crate) fn sub_outer(&mut self, col: &[f64], row: &[f64]) -> Result<()> {
        if col.len() != self.rows || row.len() != self.cols {
            return Err(Error::Shape {
                op: "sub_outer",
                left: self.shape(),
                right: (col.len(), row.len()),
            });
        }
        let cols = self.cols;
        for (r, &c) in col.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for (m, &v) in self.data[r * cols..(r + 1) * cols].iter_mut().zip(row) {
                *m -= c * v;
            }
        }
        self.ensure_finite("sub_outer")
    }

    /// Append one column on the right.
    pub(crate) fn push_col(&mut self, col: &[f64]) -> Result<()> {
        if col.len() != self.rows {
            return Err(Error::Shape {
                op: "push_col",
                left: self.shape(),
                right: (col.len(), 1),
            });
        }
        let new_cols = self.cols + 1;
        let mut data = Vec::with_capacity(self.rows * new_cols);
        for (r, &c) in col.iter().enumerate() {
            data.extend_from_slice(&self.data[r * self.cols..(r + 1) * self.cols]);
            data.push(c);
        }
        self.data = data;
        self.cols = new_cols;
        self.ensure_finite("push_col")
    }

    /// Append one row at the bottom.
    pub(crate) fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.cols {
            return Err(Error::Shape {
                op: "push_row",
                left: self.shape(),
                right: (1, row.len()),
            });
        }
        ensure_finite_slice("push_row", row)?;
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }

    pub(crate) fn map_inplace(&mut self, f: impl Fn(f64) -> f64) {
        self.data.iter_mut().for_each(|v| *v = f(*v));
    }

    pub(crate) fn ensure_finite(&self, op: &'static str) -> Result<()> {
        ensure_finite_slice(op, &self.data)
    }
}

pub(crate) fn ensure_finite_slice(op: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Shape {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    let n = b.cols;
    for i in 0..a.rows {
        let out_row = &mut out.data[i * n..(i + 1) * n];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (o, &bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    out.ensure_finite("matmul")?;
    Ok(out)
}

/// `aᵀ · a` without materializing the transpose.
fn gram(a: &Matrix) -> Matrix {
    let n = a.cols;
    let mut g = Matrix::zeros(n, n);
    for row in a.row_iter() {
        for (i, &ri) in row.iter().enumerate() {
            if ri == 0.0 {
                continue;
            }
            let g_row = &mut g.data[i * n..(i + 1) * n];
            for (gij, &rj) in g_row[i..].iter_mut().zip(&row[i..]) {
                *gij += ri * rj;
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            g.data[i * n + j] = g.data[j * n + i];
        }
    }
    g
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
///
/// With `ridge == 0` a pivot below `n·ε·max(diag)` counts as singular; with a
/// positive ridge only a non-positive pivot does.
fn cholesky(g: &Matrix, ridge: f64) -> Result<Matrix> {
    let n = g.rows;
    let max_diag = (0..n).fold(0.0_f64, |m, i| m.max(g.get(i, i)));
    let floor = if ridge > 0.0 {
        0.0
    } else {
        n as f64 * f64::EPSILON * max_diag
    };
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let lj = &l.data[j * n..j * n + j];
        let pivot = g.get(j, j) - dot(lj, lj);
        if !(pivot > floor) {
            return Err(Error::RankDeficient { pivot: j, ridge });
        }
        let d = pivot.sqrt();
        l.data[j * n + j] = d;
        for i in (j + 1)..n {
            let s = g.get(i, j) - dot(&l.data[i * n..i * n + j], &l.data[j * n..j * n + j]);
            l.data[i * n + j] = s / d;
        }
    }
    Ok(l)
}

/// Solve `L Lᵀ X = B` in place given the Cholesky factor `L`.
fn cholesky_solve(l: &Matrix, b: &mut Matrix) {
    let n = l.rows;
    let m = b.cols;
    // forward: L Y = B
    for i in 0..n {
        for k in 0..i {
            let lik = l.data[i * n + k];
            if lik == 0.0 {
                continue;
            }
            let (head, tail) = b.data.split_at_mut(i * m);
            let src = &head[k * m..(k + 1) * m];
            for (t, &s) in tail[..m].iter_mut().zip(src) {
                *t -= lik * s;
            }
        }
        let d = l.data[i * n + i];
        b.data[i * m..(i + 1) * m].iter_mut().for_each(|v| *v /= d);
    }
    // backward: Lᵀ X = Y
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let lki = l.data[k * n + i];
            if lki == 0.0 {
                continue;
            }
            let (head, tail) = b.data.split_at_mut(k * m);
            let dst = &mut head[i * m..(i + 1) * m];
            for (t, &s) in dst.iter_mut().zip(&tail[..m]) {
                *t -= lki * s;
            }
        }
        let d = l.data[i * n + i];
        b.data[i * m..(i + 1) * m].iter_mut().for_each(|v| *v /= d);
    }
}

/// Ridge-regularized pseudo-inverse.
///
/// Tall (or square) inputs use `(AᵀA + ridge·I)⁻¹Aᵀ`, wide inputs use
/// `Aᵀ(AAᵀ + ridge·I)⁻¹`, so the factorized system is always the smaller one.
pub fn pinv(a: &Matrix, ridge: f64) -> Result<Matrix> {
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::Argument(format!(
            "pinv: ridge must be >= 0, got {ridge}"
        )));
    }
    if a.is_empty() {
        return Err(Error::Argument("pinv: empty matrix".into()));
    }
    let out = if a.rows >= a.cols {
        let mut g = gram(a);
        for i in 0..g.rows {
            g.data[i * g.cols + i] += ridge;
        }
        let l = cholesky(&g, ridge)?;
        let mut x = a.transpose();
        cholesky_solve(&l, &mut x);
        x
    } else {
        let at = a.transpose();
        let mut g = gram(&at);
        for i in 0..g.rows {
            g.data[i * g.cols + i] += ridge;
        }
        let l = cholesky(&g, ridge)?;
        // G⁻¹A, then transpose: Aᵀ G⁻¹ because G is symmetric.
        let mut x = a.clone();
        cholesky_solve(&l, &mut x);
        x.transpose()
    };
    out.ensure_finite("pinv")?;
    Ok(out)
}

/// Stack `extra` below `a`.
pub fn append_rows(a: &Matrix, extra: &Matrix) -> Result<Matrix> {
    if a.cols != extra.cols {
        return Err(Error::Shape {
            op: "append_rows",
            left: a.shape(),
            right: extra.shape(),
        });
    }
    let mut data = Vec::with_capacity(a.data.len() + extra.data.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&extra.data);
    Ok(Matrix {
        rows: a.rows + extra.rows,
        cols: a.cols,
        data,
    })
}

/// Place `right` beside `left`.
pub fn hstack(left: &Matrix, right: &Matrix) -> Result<Matrix> {
    if left.rows != right.rows {
        return Err(Error::Shape {
            op: "hstack",
            left: left.shape(),
            right: right.shape(),
        });
    }
    let cols = left.cols + right.cols;
    let mut data = Vec::with_capacity(left.rows * cols);
    for r in 0..left.rows {
        data.extend_from_slice(left.row(r));
        data.extend_from_slice(right.row(r));
    }
    Ok(Matrix {
        rows: left.rows,
        cols,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Matrix::new(rows, cols, data).unwrap()
    }

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_expansion() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matmul(&a, &Matrix::identity(2)).unwrap(), a);
        let v = m(&[&[5.0], &[7.0]]);
        assert_eq!(matmul(&Matrix::identity(2), &v).unwrap(), v);
        let ones = m(&[&[1.0], &[1.0]]);
        assert_eq!(matmul(&a, &ones).unwrap(), m(&[&[3.0], &[7.0]]));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = matmul(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(2, 3)"), "{msg}");
        assert!(matches!(
            err,
            Error::Shape {
                left: (2, 3),
                right: (2, 3),
                ..
            }
        ));
    }

    #[test]
    fn construction_rejects_non_finite() {
        assert!(matches!(
            Matrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite { .. })
        ));
        assert!(Matrix::new(2, 2, vec![0.0; 3]).is_err());
        let bad: std::result::Result<Matrix, _> =
            serde_json::from_str(r#"{"rows":1,"cols":2,"data":[1.0]}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn pinv_trivial_cases() {
        assert_eq!(
            pinv(&Matrix::identity(3), 0.0).unwrap(),
            Matrix::identity(3)
        );
        let d = pinv(&Matrix::diag(&[2.0, 4.0]).unwrap(), 0.0).unwrap();
        assert_eq!(d, Matrix::diag(&[0.5, 0.25]).unwrap());
    }

    #[test]
    fn pinv_left_inverse_on_tall_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random(&mut rng, 20, 8);
        let p = pinv(&a, 1e-12).unwrap();
        let r = matmul(&p, &a).unwrap();
        assert!(r.max_abs_diff(&Matrix::identity(8)).unwrap() <= 1e-6);
    }

    #[test]
    fn pinv_wide_matches_transpose_of_tall() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random(&mut rng, 5, 11);
        let p = pinv(&a, 1e-12).unwrap();
        assert_eq!(p.shape(), (11, 5));
        let q = pinv(&a.transpose(), 1e-12).unwrap().transpose();
        assert!(p.max_abs_diff(&q).unwrap() < 1e-9);
        let r = matmul(&a, &p).unwrap();
        assert!(r.max_abs_diff(&Matrix::identity(5)).unwrap() <= 1e-6);
    }

    #[test]
    fn pinv_singular_without_ridge_is_rank_error() {
        let a = m(&[&[1.0, 2.0], &[2.0, 4.0], &[3.0, 6.0]]);
        let err = pinv(&a, 0.0).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }));
        assert!(err.to_string().contains("ridge > 0"));
        assert!(pinv(&a, 1e-8).is_ok());
    }

    #[test]
    fn pinv_rejects_bad_arguments() {
        assert!(matches!(
            pinv(&Matrix::empty(3), 0.0),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            pinv(&Matrix::identity(2), -1.0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn penrose_conditions_full_column_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..25 {
            let rows = rng.random_range(6..30);
            let cols = rng.random_range(1..=rows.min(12));
            let a = random(&mut rng, rows, cols);
            let p = pinv(&a, 1e-12).unwrap();
            let apa = matmul(&matmul(&a, &p).unwrap(), &a).unwrap();
            let pap = matmul(&matmul(&p, &a).unwrap(), &p).unwrap();
            assert!(apa.max_abs_diff(&a).unwrap() <= 1e-6 * a.max_abs());
            assert!(pap.max_abs_diff(&p).unwrap() <= 1e-6 * p.max_abs());
        }
    }

    #[test]
    fn pinv_is_an_involution_on_square_full_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for n in 1..8 {
            let mut a = random(&mut rng, n, n);
            // diagonal boost keeps the random draw comfortably nonsingular
            for i in 0..n {
                a.data[i * n + i] += 2.0;
            }
            let back = pinv(&pinv(&a, 1e-12).unwrap(), 1e-12).unwrap();
            assert!(back.max_abs_diff(&a).unwrap() <= 1e-6);
        }
    }

    #[test]
    fn append_rows_cases() {
        let e = append_rows(&Matrix::empty(3), &m(&[&[1.0, 2.0, 3.0]])).unwrap();
        assert_eq!(e, m(&[&[1.0, 2.0, 3.0]]));
        let s = append_rows(&m(&[&[1.0, 2.0]]), &m(&[&[3.0, 4.0]])).unwrap();
        assert_eq!(s, m(&[&[1.0, 2.0], &[3.0, 4.0]]));
        assert!(append_rows(&Matrix::zeros(1, 2), &Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn push_col_and_sub_outer() {
        let mut a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        a.push_col(&[5.0, 6.0]).unwrap();
        assert_eq!(a, m(&[&[1.0, 2.0, 5.0], &[3.0, 4.0, 6.0]]));
        a.sub_outer(&[1.0, 0.0], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(a, m(&[&[0.0, 1.0, 4.0], &[3.0, 4.0, 6.0]]));
        let mut e = Matrix::zeros(2, 0);
        e.push_col(&[1.0, 2.0]).unwrap();
        assert_eq!(e, m(&[&[1.0], &[2.0]]));
    }

    proptest! {
        #[test]
        fn append_rows_adds_row_counts(r1 in 0usize..6, r2 in 0usize..6, c in 1usize..5, seed: u64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random(&mut rng, r1, c);
            let b = random(&mut rng, r2, c);
            let s = append_rows(&a, &b).unwrap();
            prop_assert_eq!(s.rows(), r1 + r2);
            prop_assert_eq!(s.select_rows(&(0..r1).collect::<Vec<_>>()), a);
        }

        #[test]
        fn matmul_is_associative(n in 1usize..6, k in 1usize..6, j in 1usize..6, q in 1usize..6, seed: u64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random(&mut rng, n, k);
            let b = random(&mut rng, k, j);
            let c = random(&mut rng, j, q);
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            let scale = left.max_abs().max(1.0);
            prop_assert!(left.max_abs_diff(&right).unwrap() <= 1e-9 * scale);
        }
    }
}
