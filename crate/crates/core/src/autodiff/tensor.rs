use std::fmt;

use super::AutodiffError;

/// Row-major rank-2 array of `f64`. Scalars are `[1, 1]`.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 2],
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl Tensor {
    pub fn new(shape: [usize; 2], data: Vec<f64>) -> Result<Self, AutodiffError> {
        if shape[0] * shape[1] != data.len() || data.is_empty() {
            return Err(AutodiffError::InvalidData {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: [usize; 2]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: [usize; 2], value: f64) -> Self {
        Tensor {
            shape,
            data: vec![value; shape[0] * shape[1]],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: [1, 1],
            data: vec![value],
        }
    }

    /// `[n, 1]` column vector.
    pub fn column(data: Vec<f64>) -> Self {
        Tensor {
            shape: [data.len(), 1],
            data,
        }
    }

    /// `[1, n]` row vector.
    pub fn row(data: Vec<f64>) -> Self {
        Tensor {
            shape: [1, data.len()],
            data,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AutodiffError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(AutodiffError::InvalidData {
                    shape: [rows.len(), cols],
                    len: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Tensor::new([rows.len(), cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros([n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    #[inline]
    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let cols = self.shape[1];
        self.data[r * cols + c] = v;
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let c = self.shape[1];
        &self.data[r * c..(r + 1) * c]
    }

    /// The single value of a `[1, 1]` tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn is_scalar(&self) -> bool {
        self.shape == [1, 1]
    }

    pub fn all_finite(&self) -> bool {
        // `x * 0` is NaN exactly for non-finite x; lane-wise accumulation vectorizes.
        let mut acc = [0.0f64; 8];
        let mut chunks = self.data.chunks_exact(8);
        for c in &mut chunks {
            for (a, x) in acc.iter_mut().zip(c) {
                *a += x * 0.0;
            }
        }
        let tail: f64 = chunks.remainder().iter().map(|x| x * 0.0).sum();
        acc.iter().sum::<f64>() + tail == 0.0
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Element-wise combination; shapes must already agree.
    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        debug_assert_eq!(self.shape, other.shape);
        Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn transpose(&self) -> Tensor {
        let [r, c] = self.shape;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor {
            shape: [c, r],
            data: out,
        }
    }

    /// Shape of `op(self) · op(other)`, or `None` when inner dimensions disagree.
    pub(crate) fn matmul_shape(
        a: [usize; 2],
        b: [usize; 2],
        ta: bool,
        tb: bool,
    ) -> Option<[usize; 2]> {
        let (m, ka) = if ta { (a[1], a[0]) } else { (a[0], a[1]) };
        let (kb, n) = if tb { (b[1], b[0]) } else { (b[0], b[1]) };
        (ka == kb).then_some([m, n])
    }

    /// `op(self) · op(other)` where `op` optionally transposes. Shapes must agree.
    pub fn matmul_t(&self, other: &Tensor, ta: bool, tb: bool) -> Tensor {
        let [m, n] = Self::matmul_shape(self.shape, other.shape, ta, tb)
            .expect("matmul shapes checked by caller");
        let k = if ta { self.shape[0] } else { self.shape[1] };
        let (rsa, csa) = if ta {
            (1, self.shape[1] as isize)
        } else {
            (self.shape[1] as isize, 1)
        };
        let (rsb, csb) = if tb {
            (1, other.shape[1] as isize)
        } else {
            (other.shape[1] as isize, 1)
        };
        let mut out = vec![0.0; m * n];
        // SAFETY: strides describe the row-major buffers of `self`, `other`
        // and `out`, whose lengths match the dimensions checked above.
        unsafe {
            matrixmultiply::dgemm(
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
        Tensor {
            shape: [m, n],
            data: out,
        }
    }

    pub fn matmul(&self, other: &Tensor) -> Tensor {
        self.matmul_t(other, false, false)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
