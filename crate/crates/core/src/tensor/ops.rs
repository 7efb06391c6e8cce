//! Sequential numeric kernels shared by the graph operations.
//!
//! Every kernel iterates in a fixed order so results are bit-stable across
//! runs and thread counts. The three matmul variants cover the forward and
//! both backward products of dense and convolution layers without ever
//! materializing a transposed copy.

/// out[m,n] += a[m,k] * b[k,n]
pub fn matmul_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// out[k,n] += a^T[k,m] * b[m,n]   (a stored as [m,k])
pub fn matmul_at_b_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// out[m,j] += a[m,k] * b^T[k,j]   (b stored as [j,k])
pub fn matmul_a_bt_acc(a: &[f64], b: &[f64], m: usize, k: usize, j: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), j * k);
    debug_assert_eq!(out.len(), m * j);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * j..(i + 1) * j];
        for (q, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[q * k..(q + 1) * k];
            let mut acc = 0.0;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            *o += acc;
        }
    }
}

/// Unfold one `[ci, h, w]` sample into `[h*w, ci*9]` patch rows for a 3x3
/// kernel with stride 1 and zero padding 1.
pub fn im2col_3x3(x: &[f64], ci: usize, h: usize, w: usize, col: &mut [f64]) {
    debug_assert_eq!(x.len(), ci * h * w);
    debug_assert_eq!(col.len(), h * w * ci * 9);
    let row_len = ci * 9;
    for i in 0..h {
        for j in 0..w {
            let col_row = &mut col[(i * w + j) * row_len..(i * w + j + 1) * row_len];
            for c in 0..ci {
                let plane = &x[c * h * w..(c + 1) * h * w];
                for du in 0..3usize {
                    let ii = i as isize + du as isize - 1;
                    for dv in 0..3usize {
                        let jj = j as isize + dv as isize - 1;
                        let v = if ii >= 0 && ii < h as isize && jj >= 0 && jj < w as isize {
                            plane[ii as usize * w + jj as usize]
                        } else {
                            0.0
                        };
                        col_row[c * 9 + du * 3 + dv] = v;
                    }
                }
            }
        }
    }
}

/// Scatter-add the adjoint of [`im2col_3x3`]: fold `[h*w, ci*9]` patch-row
/// gradients back onto the `[ci, h, w]` input gradient.
pub fn col2im_3x3_acc(dcol: &[f64], ci: usize, h: usize, w: usize, dx: &mut [f64]) {
    debug_assert_eq!(dx.len(), ci * h * w);
    debug_assert_eq!(dcol.len(), h * w * ci * 9);
    let row_len = ci * 9;
    for i in 0..h {
        for j in 0..w {
            let col_row = &dcol[(i * w + j) * row_len..(i * w + j + 1) * row_len];
            for c in 0..ci {
                let plane = &mut dx[c * h * w..(c + 1) * h * w];
                for du in 0..3usize {
                    let ii = i as isize + du as isize - 1;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    for dv in 0..3usize {
                        let jj = j as isize + dv as isize - 1;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        plane[ii as usize * w + jj as usize] += col_row[c * 9 + du * 3 + dv];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity_passes_vector_through() {
        let eye = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let v = vec![2.0, -1.0, 0.5];
        let mut out = vec![0.0; 3];
        matmul_acc(&eye, &v, 3, 3, 1, &mut out);
        assert_eq!(out, v);
    }

    #[test]
    fn matmul_transpose_variants_agree_with_plain() {
        // a: 2x3, b: 2x4 -> a^T b is 3x4; compare against explicit transpose.
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [0.5, -1.0, 2.0, 0.0, 1.5, 2.5, -0.5, 3.0];
        let mut at = [0.0; 6];
        for i in 0..2 {
            for p in 0..3 {
                at[p * 2 + i] = a[i * 3 + p];
            }
        }
        let mut want = vec![0.0; 12];
        matmul_acc(&at, &b, 3, 2, 4, &mut want);
        let mut got = vec![0.0; 12];
        matmul_at_b_acc(&a, &b, 2, 3, 4, &mut got);
        assert_eq!(got, want);

        // c: 4x3 used as b^T in a[2x3] * c^T[3x4].
        let c = [1.0, 0.0, -2.0, 0.5, 0.5, 0.5, 2.0, -1.0, 1.0, 0.0, 3.0, -3.0];
        let mut ct = [0.0; 12];
        for q in 0..4 {
            for p in 0..3 {
                ct[p * 4 + q] = c[q * 3 + p];
            }
        }
        let mut want2 = vec![0.0; 8];
        matmul_acc(&a, &ct, 2, 3, 4, &mut want2);
        let mut got2 = vec![0.0; 8];
        matmul_a_bt_acc(&a, &c, 2, 3, 4, &mut got2);
        assert_eq!(got2, want2);
    }

    #[test]
    fn im2col_col2im_round_trip_counts_patch_membership() {
        // col2im(ones) counts how many patches each pixel belongs to:
        // 9 for interior pixels, 6 on edges, 4 in corners.
        let (ci, h, w) = (1, 4, 5);
        let dcol = vec![1.0; h * w * 9];
        let mut dx = vec![0.0; h * w];
        col2im_3x3_acc(&dcol, ci, h, w, &mut dx);
        assert_eq!(dx[0], 4.0);
        assert_eq!(dx[2], 6.0);
        assert_eq!(dx[w + 2], 9.0);
    }
}
