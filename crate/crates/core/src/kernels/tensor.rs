use crate::error::{AtnError, Result};
use crate::kernels::rng::RngState;

/// Shape-tagged row-major array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(AtnError::arg(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    /// Entries drawn i.i.d. from U(-bound, bound).
    pub fn uniform(shape: &[usize], bound: f64, rng: &mut RngState) -> Self {
        let len = shape.iter().product();
        let data = (0..len).map(|_| rng.uniform(-bound, bound)).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Width of a 2-D tensor (or 1 for vectors).
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[1..].iter().product(),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    /// `self += scale * other`; shapes must agree.
    pub fn add_scaled(&mut self, other: &Tensor, scale: f64) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * M x` for a row-major `rows x cols` matrix.
pub(crate) fn matvec_acc(m: &[f64], rows: usize, cols: usize, x: &[f64], alpha: f64, y: &mut [f64]) {
    debug_assert_eq!(m.len(), rows * cols);
    for (r, out) in y.iter_mut().enumerate().take(rows) {
        *out += alpha * dot(&m[r * cols..(r + 1) * cols], x);
    }
}

/// `y += alpha * M^T x` for a row-major `rows x cols` matrix.
pub(crate) fn matvec_t_acc(m: &[f64], rows: usize, cols: usize, x: &[f64], alpha: f64, y: &mut [f64]) {
    debug_assert_eq!(m.len(), rows * cols);
    for (r, &xr) in x.iter().enumerate().take(rows) {
        let s = alpha * xr;
        if s == 0.0 {
            continue;
        }
        for (out, w) in y.iter_mut().zip(&m[r * cols..(r + 1) * cols]) {
            *out += s * w;
        }
    }
}

/// `M += alpha * u v^T`.
pub(crate) fn outer_acc(m: &mut [f64], u: &[f64], v: &[f64], alpha: f64) {
    let cols = v.len();
    for (r, &ur) in u.iter().enumerate() {
        let s = alpha * ur;
        if s == 0.0 {
            continue;
        }
        for (out, vc) in m[r * cols..(r + 1) * cols].iter_mut().zip(v) {
            *out += s * vc;
        }
    }
}

#[derive(Clone, Copy)]
pub(crate) enum Trans {
    No,
    Yes,
}

/// General matrix multiply on row-major buffers: `C = beta*C + op(A) op(B)`.
///
/// `op(A)` is `m x k`, `op(B)` is `k x n`, `C` is `m x n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: Trans,
    b: &[f64],
    tb: Trans,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|x| *x *= beta);
        return;
    }
    // Strides for op(A) (m x k) and op(B) (k x n) over the stored layouts.
    let (rsa, csa) = match ta {
        Trans::No => (k as isize, 1),
        Trans::Yes => (1, m as isize),
    };
    let (rsb, csb) = match tb {
        Trans::No => (n as isize, 1),
        Trans::Yes => (1, k as isize),
    };
    // SAFETY: the slices hold exactly the elements addressed by these strides,
    // as checked by the length assertions above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
