use super::Tensor;

/// Strided read-only matrix view.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub rs: isize,
    pub cs: isize,
}

impl<'a> View<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        View {
            data,
            rows,
            cols,
            rs: cols as isize,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        View {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    pub fn maybe_t(self, flag: bool) -> Self {
        if flag {
            self.t()
        } else {
            self
        }
    }
}

/// `dst (+)= lhs · rhs`. `dst` is row-major `lhs.rows × rhs.cols`, or its
/// transpose when `dst_transposed` is set. `accumulate` keeps existing contents.
pub(crate) fn gemm(lhs: View, rhs: View, dst: &mut [f64], dst_transposed: bool, accumulate: bool) {
    assert_eq!(lhs.cols, rhs.rows, "gemm inner dimension");
    let (m, k, n) = (lhs.rows, lhs.cols, rhs.cols);
    assert_eq!(dst.len(), m * n, "gemm output size");
    let (rsc, csc) = if dst_transposed {
        (1, m as isize)
    } else {
        (n as isize, 1)
    };
    let beta = if accumulate { 1.0 } else { 0.0 };
    if k == 0 {
        if !accumulate {
            dst.iter_mut().for_each(|v| *v = 0.0);
        }
        return;
    }
    // SAFETY: the view and destination extents were checked above, and every
    // stride pair describes an in-bounds walk over the corresponding slice.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            lhs.data.as_ptr(),
            lhs.rs,
            lhs.cs,
            rhs.data.as_ptr(),
            rhs.rs,
            rhs.cs,
            beta,
            dst.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

/// Numerically stable row softmax over a row-major `rows × cols` buffer.
pub(crate) fn softmax_rows_in_place(data: &mut [f64], cols: usize) {
    for row in data.chunks_mut(cols) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        let inv = 1.0 / sum;
        row.iter_mut().for_each(|v| *v *= inv);
    }
}

/// Row-wise softmax of a matrix, computed with max subtraction.
pub fn softmax_rows(m: &Tensor) -> Tensor {
    let mut out = m.clone().with_requires_grad(false);
    out.zero_grad();
    let cols = out.cols();
    softmax_rows_in_place(out.data_mut(), cols);
    out
}

/// Plain matrix product on tensors, without graph recording.
pub fn matmul(a: &Tensor, b: &Tensor) -> crate::Result<Tensor> {
    if a.shape().len() != 2 || b.shape().len() != 2 || a.cols() != b.rows() {
        return Err(crate::PotrError::shape("matmul", a.shape(), b.shape()));
    }
    let (m, n) = (a.rows(), b.cols());
    let mut out = vec![0.0; m * n];
    gemm(
        View::new(a.data(), m, a.cols()),
        View::new(b.data(), b.rows(), n),
        &mut out,
        false,
        false,
    );
    Tensor::matrix(m, n, out)
}
