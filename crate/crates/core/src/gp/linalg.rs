//! Dense helpers on row-major square matrices stored in flat slices.

/// In-place Cholesky factorization `A = L Lᵀ` of a symmetric matrix. On
/// success the lower triangle holds `L` and the strict upper triangle is
/// zeroed. Returns `false` if the matrix is not numerically positive definite.
pub(crate) fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    debug_assert_eq!(a.len(), n * n);
    for j in 0..n {
        let (_, rest) = a.split_at_mut(j * n);
        let (row_j, below) = rest.split_at_mut(n);
        let diag = row_j[j] - dot(&row_j[..j], &row_j[..j]);
        if !(diag > 0.0 && diag.is_finite()) {
            return false;
        }
        let ljj = diag.sqrt();
        row_j[j] = ljj;
        row_j[j + 1..].iter_mut().for_each(|v| *v = 0.0);
        for row_i in below.chunks_exact_mut(n) {
            row_i[j] = (row_i[j] - dot(&row_i[..j], &row_j[..j])) / ljj;
        }
    }
    true
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut s3 = 0.0;
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    let mut s = (s0 + s1) + (s2 + s3);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Solves `L x = b` in place for lower-triangular `L`.
pub(crate) fn solve_lower(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let row = &l[i * n..i * n + i];
        b[i] = (b[i] - dot(row, &b[..i])) / l[i * n + i];
    }
}

/// Solves `Lᵀ x = b` in place for lower-triangular `L`.
pub(crate) fn solve_upper_transposed(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let xi = b[i] / l[i * n + i];
        b[i] = xi;
        for k in 0..i {
            b[k] -= l[i * n + k] * xi;
        }
    }
}

/// `(L Lᵀ)⁻¹` from the Cholesky factor, as a full symmetric matrix.
pub(crate) fn inverse_from_cholesky(l: &[f64], n: usize) -> Vec<f64> {
    // Columns of L⁻¹, stored as rows of the transpose for contiguous access.
    let mut linv_t = vec![0.0; n * n];
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        for i in j..n {
            let row = &l[i * n..i * n + i];
            e[i] = (e[i] - dot(&row[j..], &e[j..i])) / l[i * n + i];
        }
        linv_t[j * n..(j + 1) * n].copy_from_slice(&e);
    }
    // K⁻¹[a][b] = sum_i L⁻¹[i][a] L⁻¹[i][b] = dot(column a, column b).
    let mut inv = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..=a {
            let start = a.max(b);
            let v = dot(
                &linv_t[a * n + start..(a + 1) * n],
                &linv_t[b * n + start..(b + 1) * n],
            );
            inv[a * n + b] = v;
            inv[b * n + a] = v;
        }
    }
    inv
}
