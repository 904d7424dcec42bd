//! Dense f64 kernels. All kernels accumulate into `out` so callers can fuse
//! additions; zero the buffer first for a plain product.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] = a[i].mul_add(b[i], acc[0]);
        acc[1] = a[i + 1].mul_add(b[i + 1], acc[1]);
        acc[2] = a[i + 2].mul_add(b[i + 2], acc[2]);
        acc[3] = a[i + 3].mul_add(b[i + 3], acc[3]);
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail = a[i].mul_add(b[i], tail);
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

#[inline]
pub fn axpy(out: &mut [f64], s: f64, x: &[f64]) {
    debug_assert_eq!(out.len(), x.len());
    for (o, &v) in out.iter_mut().zip(x.iter()) {
        *o = s.mul_add(v, *o);
    }
}

/// out[n x m] += a[n x k] * b[m x k]^T
pub fn matmul_nt(a: &[f64], n: usize, k: usize, b: &[f64], m: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), m * k);
    debug_assert_eq!(out.len(), n * m);
    for i in 0..n {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * m..(i + 1) * m];
        for j in 0..m {
            out_row[j] += dot(a_row, &b[j * k..(j + 1) * k]);
        }
    }
}

/// out[n x m] += a[n x k] * b[k x m]
pub fn matmul_nn(a: &[f64], n: usize, k: usize, b: &[f64], m: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), k * m);
    debug_assert_eq!(out.len(), n * m);
    for i in 0..n {
        let out_row = &mut out[i * m..(i + 1) * m];
        for l in 0..k {
            axpy(out_row, a[i * k + l], &b[l * m..(l + 1) * m]);
        }
    }
}

/// out[m x k] += a[n x m]^T * b[n x k]
pub fn matmul_tn(a: &[f64], n: usize, m: usize, b: &[f64], k: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), n * m);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * k);
    for i in 0..n {
        let b_row = &b[i * k..(i + 1) * k];
        for j in 0..m {
            axpy(&mut out[j * k..(j + 1) * k], a[i * m + j], b_row);
        }
    }
}
