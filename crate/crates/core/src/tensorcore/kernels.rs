//! Forward/backward kernels on raw slices. Every reduction accumulates in
//! `f64` and walks its operands in a fixed order, so results are
//! bit-reproducible.

use super::Scalar;

/// `c[m×n] = a[m×k] · b[k×n]`
pub(crate) fn gemm_nn<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(m * n);
    let mut acc = vec![0.0f64; n];
    for i in 0..m {
        acc.iter_mut().for_each(|x| *x = 0.0);
        let row = &a[i * k..(i + 1) * k];
        for (p, &aip) in row.iter().enumerate() {
            let aip = aip.f64();
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (acc, &bpj) in acc.iter_mut().zip(brow) {
                *acc += aip * bpj.f64();
            }
        }
        out.extend(acc.iter().map(|&x| T::of(x)));
    }
    out
}

/// `c[m×n] = a[m×k] · b[n×k]ᵀ`
pub(crate) fn gemm_nt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let col = &b[j * k..(j + 1) * k];
            let mut acc = 0.0f64;
            for (x, y) in row.iter().zip(col) {
                acc += x.f64() * y.f64();
            }
            out.push(T::of(acc));
        }
    }
    out
}

/// `c[k×n] = a[m×k]ᵀ · b[m×n]`
pub(crate) fn gemm_tn<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut acc = vec![0.0f64; k * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (p, &aip) in arow.iter().enumerate() {
            let aip = aip.f64();
            if aip == 0.0 {
                continue;
            }
            let out = &mut acc[p * n..(p + 1) * n];
            for (o, &bij) in out.iter_mut().zip(brow) {
                *o += aip * bij.f64();
            }
        }
    }
    acc.into_iter().map(T::of).collect()
}

pub(crate) fn transpose<T: Scalar>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

/// Row-wise softmax over contiguous rows of length `n`.
pub(crate) fn softmax_rows<T: Scalar>(x: &[T], n: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks_exact(n) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.f64()));
        let exps: Vec<f64> = row.iter().map(|v| (v.f64() - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| T::of(e / total)));
    }
    out
}

/// Backward of row-wise softmax given its output `s` and upstream `g`:
/// `dx = s ⊙ (g − ⟨g, s⟩)`.
pub(crate) fn softmax_rows_backward<T: Scalar>(s: &[T], g: &[T], n: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(s.len());
    for (srow, grow) in s.chunks_exact(n).zip(g.chunks_exact(n)) {
        let dot: f64 = srow.iter().zip(grow).map(|(s, g)| s.f64() * g.f64()).sum();
        out.extend(
            srow.iter()
                .zip(grow)
                .map(|(s, g)| T::of(s.f64() * (g.f64() - dot))),
        );
    }
    out
}
