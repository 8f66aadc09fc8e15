//! Dense row-major `f32` tensors.
//!
//! A [`Tensor`] is an immutable value: every operation returns a new tensor.
//! Reductions accumulate left to right in index order so results do not
//! depend on how work is scheduled.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

fn shape_str(shape: &[usize]) -> String {
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    format!("[{}]", dims.join("x"))
}

impl Tensor {
    /// Builds a tensor, checking that every dimension is positive and that
    /// `data.len()` equals the product of `shape`.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::dim(format!(
                "shape {} must have at least one dimension, all positive",
                shape_str(&shape)
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dim(format!(
                "shape {} needs {} values, got {}",
                shape_str(&shape),
                numel,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        let numel = shape.iter().product();
        Self::new(shape.to_vec(), vec![value; numel]).expect("full: invalid shape")
    }

    pub fn scalar(value: f32) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// Builds a 1-D tensor.
    pub fn vector(data: Vec<f32>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    /// Builds a 2-D tensor from equally sized rows.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::dim("from_rows: ragged rows"));
        }
        Self::new(vec![n, d], rows.concat())
    }

    /// Builds an identity matrix.
    pub fn eye(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self::new(vec![n, n], data).expect("eye: invalid size")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Number of rows when viewed as a matrix (all leading dims collapsed).
    pub fn rows(&self) -> usize {
        self.numel() / self.cols()
    }

    /// Size of the last dimension.
    pub fn cols(&self) -> usize {
        *self.shape.last().expect("tensor has at least one dim")
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f32> {
        if self.numel() != 1 {
            return Err(Error::Contract(format!(
                "item() on non-scalar tensor of shape {}",
                shape_str(&self.shape)
            )));
        }
        Ok(self.data[0])
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data.clone())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Self> {
        self.expect_same_shape(other, "elementwise op")?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f32) -> Self {
        self.map(|v| v * s)
    }

    /// In-place `self += other`; used by gradient accumulation.
    pub(crate) fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.expect_same_shape(other, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Sum of all entries, accumulated in `f64` in index order.
    pub fn sum(&self) -> f32 {
        self.data.iter().map(|&v| f64::from(v)).sum::<f64>() as f32
    }

    pub fn mean(&self) -> f32 {
        (self.data.iter().map(|&v| f64::from(v)).sum::<f64>() / self.numel() as f64) as f32
    }

    /// Sum of squares in `f64`.
    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|&v| f64::from(v) * f64::from(v)).sum()
    }

    pub(crate) fn expect_same_shape(&self, other: &Tensor, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dim(format!(
                "{what}: shapes {} and {} differ",
                shape_str(&self.shape),
                shape_str(&other.shape)
            )));
        }
        Ok(())
    }

    pub(crate) fn expect_matrix(&self, what: &str) -> Result<(usize, usize)> {
        if self.ndim() != 2 {
            return Err(Error::dim(format!(
                "{what}: expected a matrix, got shape {}",
                shape_str(&self.shape)
            )));
        }
        Ok((self.shape[0], self.shape[1]))
    }

    /// Matrix product `self · other`.
    ///
    /// Each output element accumulates over the inner dimension strictly in
    /// order `k = 0, 1, ...`.
    pub fn matmul(&self, other: &Tensor) -> Result<Self> {
        self.matmul_t(other, false, false)
    }

    /// `op(self) · op(other)` where `op` transposes when the flag is set, without
    /// materializing the transpose.
    pub fn matmul_t(&self, other: &Tensor, trans_a: bool, trans_b: bool) -> Result<Self> {
        let (ar, ac) = self.expect_matrix("matmul lhs")?;
        let (br, bc) = other.expect_matrix("matmul rhs")?;
        let (m, k) = if trans_a { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if trans_b { (bc, br) } else { (br, bc) };
        if k != k2 {
            return Err(Error::dim(format!(
                "matmul: inner dimensions of {}{} and {}{} disagree",
                shape_str(&self.shape),
                if trans_a { "^T" } else { "" },
                shape_str(&other.shape),
                if trans_b { "^T" } else { "" }
            )));
        }
        let mut out = vec![0.0f32; m * n];
        // strides of the logical (possibly transposed) operands
        let (rsa, csa) = if trans_a {
            (1, ac as isize)
        } else {
            (ac as isize, 1)
        };
        let (rsb, csb) = if trans_b {
            (1, bc as isize)
        } else {
            (bc as isize, 1)
        };
        if m > 0 && n > 0 && k > 0 {
            // SAFETY: the slices cover every index reached through these
            // dimensions and strides, and `out` does not alias the inputs.
            unsafe {
                matrixmultiply::sgemm(
                    m,
                    k,
                    n,
                    1.0,
                    self.data.as_ptr(),
                    rsa,
                    csa,
                    other.data.as_ptr(),
                    rsb,
                    csb,
                    0.0,
                    out.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
        }
        Self::new(vec![m, n], out)
    }

    pub fn transpose(&self) -> Result<Self> {
        let (m, n) = self.expect_matrix("transpose")?;
        let mut out = vec![0.0f32; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Self::new(vec![n, m], out)
    }

    /// Softmax along `axis`, computed with max-subtraction.
    pub fn softmax(&self, axis: usize) -> Result<Self> {
        if axis >= self.ndim() {
            return Err(Error::dim(format!(
                "softmax: axis {axis} out of range for shape {}",
                shape_str(&self.shape)
            )));
        }
        let n = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let outer: usize = self.shape[..axis].iter().product();
        let mut out = self.data.clone();
        let mut buf = vec![0.0f32; n];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * n * inner + i;
                for (j, slot) in buf.iter_mut().enumerate() {
                    *slot = self.data[base + j * inner];
                }
                softmax_in_place(&mut buf);
                for (j, v) in buf.iter().enumerate() {
                    out[base + j * inner] = *v;
                }
            }
        }
        Self::new(self.shape.clone(), out)
    }

    /// Copies rows `[start, start + len)` of a matrix.
    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Self> {
        let (m, n) = self.expect_matrix("slice_rows")?;
        if len == 0 || start + len > m {
            return Err(Error::dim(format!(
                "slice_rows: [{start}, {}) out of {m}",
                start + len
            )));
        }
        Self::new(
            vec![len, n],
            self.data[start * n..(start + len) * n].to_vec(),
        )
    }
}

/// Max-subtracted softmax over a single slice.
pub(crate) fn softmax_in_place(xs: &mut [f32]) {
    let max = xs.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut total = 0.0f64;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        total += f64::from(*x);
    }
    let inv = (1.0 / total) as f32;
    for x in xs.iter_mut() {
        *x *= inv;
    }
}

/// Max-subtracted log-softmax over a single slice.
pub(crate) fn log_softmax_in_place(xs: &mut [f32]) {
    let max = xs.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let total: f64 = xs.iter().map(|&x| f64::from((x - max).exp())).sum();
    let lse = max + total.ln() as f32;
    for x in xs.iter_mut() {
        *x -= lse;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    fn naive_matmul(a: &Tensor, b: &Tensor) -> Vec<f64> {
        let (m, k) = (a.shape()[0], a.shape()[1]);
        let n = b.shape()[1];
        let mut out = vec![0.0f64; m * n];
        for i in 0..m {
            for j in 0..n {
                for kk in 0..k {
                    out[i * n + j] +=
                        f64::from(a.data()[i * k + kk]) * f64::from(b.data()[kk * n + j]);
                }
            }
        }
        out
    }

    #[test]
    fn matmul_identity() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(Tensor::eye(2).matmul(&x).unwrap(), x);
    }

    #[test]
    fn matmul_row_times_column() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = SeededRng::new(11, 0);
        let a = rng.normal_tensor(&[3, 4], 0.0, 1.0);
        let b = rng.normal_tensor(&[4, 2], 0.0, 1.0);
        let got = a.matmul(&b).unwrap();
        for (g, w) in got.data().iter().zip(naive_matmul(&a, &b)) {
            assert!((f64::from(*g) - w).abs() <= 1e-6, "{g} vs {w}");
        }
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        let msg = a.matmul(&b).unwrap_err().to_string();
        assert!(msg.contains("[2x3]") && msg.contains("dimension"), "{msg}");
    }

    #[test]
    fn softmax_uniform_and_reference_values() {
        let z = Tensor::vector(vec![0.0, 0.0, 0.0])
            .unwrap()
            .softmax(0)
            .unwrap();
        for v in z.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-7);
        }
        let s = Tensor::vector(vec![1.0, 2.0, 3.0])
            .unwrap()
            .softmax(0)
            .unwrap();
        // exp(k) / (e + e^2 + e^3) evaluated directly
        let denom = 1f64.exp() + 2f64.exp() + 3f64.exp();
        for (k, v) in s.data().iter().enumerate() {
            let want = ((k + 1) as f64).exp() / denom;
            assert!((f64::from(*v) - want).abs() < 1e-4);
        }
        assert!((s.data()[0] - 0.0900).abs() < 1e-4);
        assert!((s.data()[1] - 0.2447).abs() < 1e-4);
        assert!((s.data()[2] - 0.6652).abs() < 1e-4);
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let s = Tensor::vector(vec![1000.0, 0.0])
            .unwrap()
            .softmax(0)
            .unwrap();
        assert_eq!(s.data()[0], 1.0);
        assert!(s.data()[1] >= 0.0 && s.data()[1] < 1e-30);
        assert!(s.is_finite());
    }

    #[test]
    fn softmax_along_first_axis() {
        let x = Tensor::from_rows(&[vec![0.0, 5.0], vec![0.0, -5.0]]).unwrap();
        let s = x.softmax(0).unwrap();
        assert!((s.data()[0] - 0.5).abs() < 1e-7);
        assert!((s.data()[1] + s.data()[3] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn softmax_bad_axis_is_dimension_error() {
        let x = Tensor::zeros(&[2, 2]);
        assert!(matches!(x.softmax(2), Err(Error::Dimension(_))));
    }

    #[test]
    fn constructor_rejects_bad_lengths() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
    }
}
