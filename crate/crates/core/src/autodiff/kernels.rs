//! Numeric forward kernels for the graph ops.

use super::tensor::Tensor;

fn mat(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
    Tensor::new(shape, data).expect("kernel produced inconsistent shape")
}

/// `op(a) * op(b)` where `op` optionally transposes a stored row-major matrix.
pub(crate) fn matmul(a: &Tensor, b: &Tensor, ta: bool, tb: bool) -> Tensor {
    let (ar, ac) = (a.rows(), a.cols());
    let (br, bc) = (b.rows(), b.cols());
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let n = if tb { br } else { bc };
    let (rsa, csa) = if ta { (1, ac as isize) } else { (ac as isize, 1) };
    let (rsb, csb) = if tb { (1, bc as isize) } else { (bc as isize, 1) };
    let mut c = vec![0.0; m * n];
    if m > 0 && n > 0 && k > 0 {
        // SAFETY: strides describe the row-major buffers above and `c` holds m*n values.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.data().as_ptr(),
                rsa,
                csa,
                b.data().as_ptr(),
                rsb,
                csb,
                0.0,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
    mat(vec![m, n], c)
}

pub(crate) fn affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = (x.rows(), x.cols());
    let n = w.cols();
    let mut c = Vec::with_capacity(m * n);
    for _ in 0..m {
        c.extend_from_slice(b.data());
    }
    if m > 0 && n > 0 && k > 0 {
        // SAFETY: x is m×k, w is k×n, c is m×n, all row-major.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                x.data().as_ptr(),
                k as isize,
                1,
                w.data().as_ptr(),
                n as isize,
                1,
                1.0,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
    mat(vec![m, n], c)
}

pub(crate) fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    mat(a.shape().to_vec(), data)
}

pub(crate) fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    mat(a.shape().to_vec(), a.data().iter().map(|&x| f(x)).collect())
}

/// Applies `f(x[r][c], v[c])`.
pub(crate) fn per_col(x: &Tensor, v: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let n = x.cols();
    let vd = v.data();
    let data = x.data().iter().enumerate().map(|(i, &a)| f(a, vd[i % n])).collect();
    mat(x.shape().to_vec(), data)
}

/// Applies `f(x[r][c], v[r])`.
pub(crate) fn per_row(x: &Tensor, v: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let n = x.cols();
    let vd = v.data();
    let data = x.data().iter().enumerate().map(|(i, &a)| f(a, vd[i / n])).collect();
    mat(x.shape().to_vec(), data)
}

pub(crate) fn sum_rows(x: &Tensor) -> Tensor {
    let n = x.cols();
    let mut out = vec![0.0; n];
    for r in 0..x.rows() {
        for (o, v) in out.iter_mut().zip(x.row(r)) {
            *o += v;
        }
    }
    mat(vec![n], out)
}

pub(crate) fn sum_cols(x: &Tensor) -> Tensor {
    let out = (0..x.rows()).map(|r| x.row(r).iter().sum()).collect::<Vec<f64>>();
    mat(vec![x.rows()], out)
}

pub(crate) fn broadcast_rows(v: &Tensor, rows: usize) -> Tensor {
    let mut data = Vec::with_capacity(rows * v.len());
    for _ in 0..rows {
        data.extend_from_slice(v.data());
    }
    mat(vec![rows, v.len()], data)
}

pub(crate) fn broadcast_cols(v: &Tensor, cols: usize) -> Tensor {
    let mut data = Vec::with_capacity(cols * v.len());
    for &x in v.data() {
        data.extend(std::iter::repeat(x).take(cols));
    }
    mat(vec![v.len(), cols], data)
}

pub(crate) fn slice_cols(x: &Tensor, start: usize, len: usize) -> Tensor {
    let mut data = Vec::with_capacity(x.rows() * len);
    for r in 0..x.rows() {
        data.extend_from_slice(&x.row(r)[start..start + len]);
    }
    mat(vec![x.rows(), len], data)
}

pub(crate) fn pad_cols(x: &Tensor, start: usize, total: usize) -> Tensor {
    let w = x.cols();
    let mut data = vec![0.0; x.rows() * total];
    for r in 0..x.rows() {
        data[r * total + start..r * total + start + w].copy_from_slice(x.row(r));
    }
    mat(vec![x.rows(), total], data)
}

pub(crate) fn concat_cols(a: &Tensor, b: &Tensor) -> Tensor {
    let (wa, wb) = (a.cols(), b.cols());
    let mut data = Vec::with_capacity(a.rows() * (wa + wb));
    for r in 0..a.rows() {
        data.extend_from_slice(a.row(r));
        data.extend_from_slice(b.row(r));
    }
    mat(vec![a.rows(), wa + wb], data)
}

pub(crate) fn slice_rows(x: &Tensor, start: usize, len: usize) -> Tensor {
    let n = x.cols();
    mat(vec![len, n], x.data()[start * n..(start + len) * n].to_vec())
}

pub(crate) fn pad_rows(x: &Tensor, start: usize, total: usize) -> Tensor {
    let n = x.cols();
    let mut data = vec![0.0; total * n];
    data[start * n..start * n + x.len()].copy_from_slice(x.data());
    mat(vec![total, n], data)
}

pub(crate) fn concat_rows(a: &Tensor, b: &Tensor) -> Tensor {
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    mat(vec![a.rows() + b.rows(), a.cols()], data)
}

pub(crate) fn gather_rows(x: &Tensor, idx: &[usize]) -> Tensor {
    let n = x.cols();
    let mut data = Vec::with_capacity(idx.len() * n);
    for &i in idx {
        data.extend_from_slice(x.row(i));
    }
    mat(vec![idx.len(), n], data)
}

pub(crate) fn scatter_add_rows(x: &Tensor, idx: &[usize], rows: usize) -> Tensor {
    let n = x.cols();
    let mut data = vec![0.0; rows * n];
    for (k, &i) in idx.iter().enumerate() {
        for (o, v) in data[i * n..(i + 1) * n].iter_mut().zip(x.row(k)) {
            *o += v;
        }
    }
    mat(vec![rows, n], data)
}

pub(crate) fn segment_max(x: &Tensor, group: usize) -> Tensor {
    let n = x.cols();
    let segments = x.rows() / group;
    let mut data = Vec::with_capacity(segments * n);
    for s in 0..segments {
        let mut best = x.row(s * group).to_vec();
        for r in s * group + 1..(s + 1) * group {
            for (b, &v) in best.iter_mut().zip(x.row(r)) {
                if v > *b {
                    *b = v;
                }
            }
        }
        data.extend_from_slice(&best);
    }
    mat(vec![segments, n], data)
}

/// Routes each pooled gradient to the first row attaining the segment maximum.
pub(crate) fn segment_max_grad(gy: &Tensor, x: &Tensor, group: usize) -> Tensor {
    let n = x.cols();
    let mut data = vec![0.0; x.len()];
    for s in 0..gy.rows() {
        for c in 0..n {
            let mut arg = s * group;
            for r in s * group + 1..(s + 1) * group {
                if x.data()[r * n + c] > x.data()[arg * n + c] {
                    arg = r;
                }
            }
            data[arg * n + c] += gy.data()[s * n + c];
        }
    }
    mat(x.shape().to_vec(), data)
}

pub(crate) fn row_norm(x: &Tensor) -> Tensor {
    let out = (0..x.rows()).map(|r| x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt()).collect::<Vec<f64>>();
    mat(vec![x.rows()], out)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
