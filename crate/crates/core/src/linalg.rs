// Small dense kernels. Matrices are row-major `Vec<f64>` with explicit sizes;
// the systems solved here are at most a few hundred unknowns.

/// In-place Cholesky of a symmetric positive definite `k × k` matrix; the
/// lower triangle receives `L`. Returns false if a pivot is not positive.
pub(crate) fn cholesky_in_place(a: &mut [f64], k: usize) -> bool {
    for j in 0..k {
        let mut d = a[j * k + j];
        for s in 0..j {
            d -= a[j * k + s] * a[j * k + s];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * k + j] = d;
        for i in (j + 1)..k {
            let mut v = a[i * k + j];
            for s in 0..j {
                v -= a[i * k + s] * a[j * k + s];
            }
            a[i * k + j] = v / d;
        }
    }
    true
}

/// Solves `L y = b` in place.
pub(crate) fn forward_sub(l: &[f64], k: usize, b: &mut [f64]) {
    for i in 0..k {
        let mut v = b[i];
        for s in 0..i {
            v -= l[i * k + s] * b[s];
        }
        b[i] = v / l[i * k + i];
    }
}

/// Solves `Lᵀ x = y` in place.
pub(crate) fn backward_sub(l: &[f64], k: usize, b: &mut [f64]) {
    for i in (0..k).rev() {
        let mut v = b[i];
        for s in (i + 1)..k {
            v -= l[s * k + i] * b[s];
        }
        b[i] = v / l[i * k + i];
    }
}

/// Solves the SPD system `A x = b`; `None` when `A` is not numerically SPD.
pub(crate) fn spd_solve(a: &[f64], k: usize, b: &[f64]) -> Option<Vec<f64>> {
    let mut l = a.to_vec();
    if !cholesky_in_place(&mut l, k) {
        return None;
    }
    let mut x = b.to_vec();
    forward_sub(&l, k, &mut x);
    backward_sub(&l, k, &mut x);
    Some(x)
}

/// Solves a general square system by Gaussian elimination with partial
/// pivoting. `None` if a pivot falls below `tol` relative to the largest
/// entry of its column.
pub(crate) fn lu_solve(a: &[f64], k: usize, b: &[f64], tol: f64) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&i, &j| m[i * k + col].abs().total_cmp(&m[j * k + col].abs()))
            .unwrap();
        if m[piv * k + col].abs() <= tol * scale {
            return None;
        }
        if piv != col {
            for c in 0..k {
                m.swap(piv * k + c, col * k + c);
            }
            x.swap(piv, col);
        }
        let p = m[col * k + col];
        for r in (col + 1)..k {
            let f = m[r * k + col] / p;
            if f != 0.0 {
                for c in col..k {
                    m[r * k + c] -= f * m[col * k + c];
                }
                x[r] -= f * x[col];
            }
        }
    }
    for r in (0..k).rev() {
        let mut v = x[r];
        for c in (r + 1)..k {
            v -= m[r * k + c] * x[c];
        }
        x[r] = v / m[r * k + r];
    }
    Some(x)
}

/// Symmetric block-tridiagonal matrix with `nb` diagonal blocks of size
/// `p × p`. `diag[j]` holds block (j, j); `off[j]` holds block (j+1, j).
pub(crate) struct BlockTridiag {
    pub p: usize,
    pub diag: Vec<Vec<f64>>,
    pub off: Vec<Vec<f64>>,
}

impl BlockTridiag {
    pub fn zeros(nb: usize, p: usize) -> Self {
        Self {
            p,
            diag: vec![vec![0.0; p * p]; nb],
            off: vec![vec![0.0; p * p]; nb.saturating_sub(1)],
        }
    }

    pub fn clear(&mut self) {
        self.diag.iter_mut().for_each(|b| b.fill(0.0));
        self.off.iter_mut().for_each(|b| b.fill(0.0));
    }

    /// Solves `H x = rhs` by block Cholesky. `rhs` is laid out block after
    /// block. Adds `ridge` times the block's largest diagonal when a pivot
    /// breaks down. Returns `None` if that still fails.
    pub fn solve(&self, rhs: &[f64], ridge: f64) -> Option<Vec<f64>> {
        let p = self.p;
        let nb = self.diag.len();
        // L_jj (lower, in a p×p buffer) and M_j = L_{j+1,j} (p×p, row-major).
        let mut ljj: Vec<Vec<f64>> = Vec::with_capacity(nb);
        let mut lsub: Vec<Vec<f64>> = Vec::with_capacity(nb.saturating_sub(1));
        for j in 0..nb {
            let mut d = self.diag[j].clone();
            if j > 0 {
                let m = &lsub[j - 1];
                // d -= M Mᵀ
                for r in 0..p {
                    for c in 0..=r {
                        let mut s = 0.0;
                        for t in 0..p {
                            s += m[r * p + t] * m[c * p + t];
                        }
                        d[r * p + c] -= s;
                        if c != r {
                            d[c * p + r] -= s;
                        }
                    }
                }
            }
            let mut chol = d.clone();
            if !cholesky_in_place(&mut chol, p) {
                let dmax = (0..p).map(|i| d[i * p + i].abs()).fold(0.0, f64::max).max(1e-300);
                chol = d.clone();
                for i in 0..p {
                    chol[i * p + i] += ridge * dmax;
                }
                if !cholesky_in_place(&mut chol, p) {
                    return None;
                }
            }
            if j + 1 < nb {
                // M = B L⁻ᵀ, i.e. each row m_r solves L m_rᵀ = b_rᵀ.
                let b = &self.off[j];
                let mut m = vec![0.0; p * p];
                for r in 0..p {
                    let mut row: Vec<f64> = b[r * p..(r + 1) * p].to_vec();
                    forward_sub(&chol, p, &mut row);
                    m[r * p..(r + 1) * p].copy_from_slice(&row);
                }
                lsub.push(m);
            }
            ljj.push(chol);
        }
        // Forward: L y = rhs.
        let mut y = rhs.to_vec();
        for j in 0..nb {
            if j > 0 {
                let (prev, cur) = y.split_at_mut(j * p);
                let prev = &prev[(j - 1) * p..];
                let m = &lsub[j - 1];
                for r in 0..p {
                    let mut s = 0.0;
                    for t in 0..p {
                        s += m[r * p + t] * prev[t];
                    }
                    cur[r] -= s;
                }
            }
            forward_sub(&ljj[j], p, &mut y[j * p..(j + 1) * p]);
        }
        // Backward: Lᵀ x = y.
        for j in (0..nb).rev() {
            if j + 1 < nb {
                let (cur, next) = y.split_at_mut((j + 1) * p);
                let next = &next[..p];
                let cur = &mut cur[j * p..];
                let m = &lsub[j];
                for t in 0..p {
                    let mut s = 0.0;
                    for r in 0..p {
                        s += m[r * p + t] * next[r];
                    }
                    cur[t] -= s;
                }
            }
            backward_sub(&ljj[j], p, &mut y[j * p..(j + 1) * p]);
        }
        if y.iter().all(|v| v.is_finite()) {
            Some(y)
        } else {
            None
        }
    }
}

/// Least squares `min ‖X b − y‖` via normal equations; `None` if `XᵀX` is
/// singular.
pub(crate) fn least_squares(x: &[f64], n: usize, p: usize, y: &[f64]) -> Option<Vec<f64>> {
    let mut xtx = vec![0.0; p * p];
    let mut xty = vec![0.0; p];
    for i in 0..n {
        let row = &x[i * p..(i + 1) * p];
        for r in 0..p {
            xty[r] += row[r] * y[i];
            for c in 0..=r {
                xtx[r * p + c] += row[r] * row[c];
            }
        }
    }
    for r in 0..p {
        for c in 0..r {
            xtx[c * p + r] = xtx[r * p + c];
        }
    }
    spd_solve(&xtx, p, &xty)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_from_blocks(h: &BlockTridiag) -> Vec<f64> {
        let p = h.p;
        let nb = h.diag.len();
        let k = p * nb;
        let mut a = vec![0.0; k * k];
        for j in 0..nb {
            for r in 0..p {
                for c in 0..p {
                    a[(j * p + r) * k + j * p + c] = h.diag[j][r * p + c];
                    if j + 1 < nb {
                        let v = h.off[j][r * p + c];
                        a[((j + 1) * p + r) * k + j * p + c] = v;
                        a[(j * p + c) * k + (j + 1) * p + r] = v;
                    }
                }
            }
        }
        a
    }

    #[test]
    fn block_solver_matches_dense_solver() {
        let p = 3;
        let nb = 4;
        let mut h = BlockTridiag::zeros(nb, p);
        // Diagonally dominant symmetric blocks.
        for j in 0..nb {
            for r in 0..p {
                for c in 0..p {
                    h.diag[j][r * p + c] = if r == c { 10.0 + j as f64 } else { 0.5 + 0.1 * (r + c) as f64 };
                }
            }
            if j + 1 < nb {
                for r in 0..p {
                    for c in 0..p {
                        h.off[j][r * p + c] = 0.3 * ((r * 7 + c * 3 + j) % 5) as f64 - 0.6;
                    }
                }
            }
        }
        let rhs: Vec<f64> = (0..p * nb).map(|i| (i as f64).sin() + 1.0).collect();
        let x = h.solve(&rhs, 0.0).unwrap();
        let dense = dense_from_blocks(&h);
        let k = p * nb;
        let x2 = spd_solve(&dense, k, &rhs).unwrap();
        for (a, b) in x.iter().zip(&x2) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn lu_detects_singularity() {
        let a = [1.0, 2.0, 2.0, 4.0];
        assert!(lu_solve(&a, 2, &[1.0, 2.0], 1e-12).is_none());
        let a = [0.0, 1.0, 1.0, 0.0];
        assert_eq!(lu_solve(&a, 2, &[3.0, 4.0], 1e-12).unwrap(), vec![4.0, 3.0]);
    }

    #[test]
    fn least_squares_recovers_line() {
        let x = [1.0, 0.0, 1.0, 1.0, 1.0, 2.0];
        let y = [1.0, 3.0, 5.0];
        let b = least_squares(&x, 3, 2, &y).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-12 && (b[1] - 2.0).abs() < 1e-12);
    }
}
