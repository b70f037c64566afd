//! Dense complex matrix helpers: a one-sided Jacobi SVD with sorted and
//! gauge-fixed outputs, basis completion, Kronecker products and norms.
//! nalgebra provides storage, QR and LU.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<C64>;

/// Components with modulus at or below this are skipped when fixing the
/// phase of a singular vector.
pub const GAUGE_THRESHOLD: f64 = 1e-12;

/// Full left singular basis of a matrix.
#[derive(Debug, Clone)]
pub struct LeftBasis {
    /// `rows x rows` unitary, columns ordered by descending singular value.
    pub u: Matrix,
    /// Singular values, descending, zero-padded to length `rows`.
    pub singular_values: Vec<f64>,
}

pub fn frobenius(m: &Matrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn identity(d: usize) -> Matrix {
    Matrix::identity(d, d)
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

/// One-sided (Hestenes) Jacobi: returns `(B V, V)` where the columns of
/// `B V` are mutually orthogonal to relative precision and `V` is unitary.
fn hestenes(mut b: Matrix) -> (Matrix, Matrix) {
    let (rows, n) = b.shape();
    let mut v = Matrix::identity(n, n);
    let tol = 4.0 * f64::EPSILON;
    for _ in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, C64::new(0.0, 0.0));
                {
                    let data = b.as_slice();
                    let (cp, cq) = (&data[p * rows..(p + 1) * rows], &data[q * rows..(q + 1) * rows]);
                    for (x, y) in cp.iter().zip(cq) {
                        alpha += x.norm_sqr();
                        beta += y.norm_sqr();
                        gamma += x.conj() * y;
                    }
                }
                let g = gamma.norm();
                if alpha == 0.0 || beta == 0.0 || g <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // rotate (a_p, e^{-i phi} a_q) by the real Jacobi angle
                let phase = gamma.conj() / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for m in [&mut b, &mut v] {
                    let len = m.nrows();
                    let data = m.as_mut_slice();
                    let (head, tail) = data.split_at_mut(q * len);
                    let cp = &mut head[p * len..(p + 1) * len];
                    let cq = &mut tail[..len];
                    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                        let yq = *y * phase;
                        let xp = *x;
                        *x = xp * c - yq * s;
                        *y = xp * s + yq * c;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    (b, v)
}

fn column_norm(m: &Matrix, j: usize) -> f64 {
    m.column(j).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Thin SVD `m = U diag(s) W^dagger` with `k = min(rows, cols)` triples in
/// descending order. Columns paired with a zero singular value are zero in
/// whichever factor had to be obtained by normalization.
pub struct ThinSvd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub w: Matrix,
}

pub fn thin_svd(m: &Matrix) -> ThinSvd {
    let (rows, cols) = m.shape();
    let tall = cols <= rows;
    let (b, v) = hestenes(if tall { m.clone() } else { m.adjoint() });
    let k = b.ncols();
    let norms: Vec<f64> = (0..k).map(|j| column_norm(&b, j)).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &c| norms[c].total_cmp(&norms[a]).then(a.cmp(&c)));
    let normalized = Matrix::from_fn(b.nrows(), k, |i, j| {
        let src = order[j];
        if norms[src] > 0.0 {
            b[(i, src)] / norms[src]
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let kept = Matrix::from_fn(v.nrows(), k, |i, j| v[(i, order[j])]);
    let s = order.iter().map(|&j| norms[j]).collect();
    let keep = rows.min(cols);
    let (u, w) = if tall { (normalized, kept) } else { (kept, normalized) };
    ThinSvd {
        u: u.columns(0, keep.min(u.ncols())).into_owned(),
        s: {
            let mut s: Vec<f64> = s;
            s.truncate(keep);
            s
        },
        w: w.columns(0, keep.min(w.ncols())).into_owned(),
    }
}

/// Singular values in descending order.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    thin_svd(m).s
}

/// Number of singular values strictly above `rel_tol * max`.
pub fn numerical_rank(sorted_desc: &[f64], rel_tol: f64) -> usize {
    match sorted_desc.first() {
        Some(&max) if max > 0.0 => sorted_desc.iter().filter(|&&s| s > rel_tol * max).count(),
        _ => 0,
    }
}

/// sigma_max / sigma_min; infinite for singular input.
pub fn condition_number(m: &Matrix) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// `|| M^dagger M - I ||_F` for square `m`.
pub fn unitarity_defect(m: &Matrix) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    let g = m.adjoint() * m;
    frobenius(&(g - identity(m.nrows())))
}

pub fn is_unitary(m: &Matrix, tol: f64) -> bool {
    unitarity_defect(m) <= tol
}

pub fn inverse(m: &Matrix) -> Result<Matrix> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "cannot invert a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let cond = condition_number(m);
    if !cond.is_finite() || cond > 1e14 {
        return Err(Error::Singular(format!("condition number {cond:.3e}")));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("LU factorization failed".into()))
}

/// Rotates a vector so that its first component with modulus above
/// [`GAUGE_THRESHOLD`] is real and positive. Returns the applied phase.
pub fn fix_phase(col: &mut [C64]) -> C64 {
    if let Some(z) = col.iter().find(|z| z.norm() > GAUGE_THRESHOLD).copied() {
        let phase = z.conj() / z.norm();
        for c in col.iter_mut() {
            *c *= phase;
        }
        phase
    } else {
        C64::new(1.0, 0.0)
    }
}

/// Extends the orthonormal columns of `cols` (`m x k`, `k <= m`) to an
/// `m x m` unitary. Each new column is the standard basis vector with the
/// largest residual outside the current span (lowest index on ties),
/// orthogonalized by two rounds of Gram-Schmidt.
pub fn complete_basis(cols: &Matrix) -> Matrix {
    let m = cols.nrows();
    let mut basis: Vec<Vec<C64>> = (0..cols.ncols())
        .map(|j| cols.column(j).iter().copied().collect())
        .collect();
    // weight[e] = ||(I - B B^dagger) e_e||^2
    let mut weight: Vec<f64> = (0..m)
        .map(|e| 1.0 - basis.iter().map(|b| b[e].norm_sqr()).sum::<f64>())
        .collect();
    while basis.len() < m {
        let mut pick = 0;
        let mut best = f64::NEG_INFINITY;
        for (e, &w) in weight.iter().enumerate() {
            let n = w.max(0.0).sqrt();
            if n > best + 1e-12 {
                best = n;
                pick = e;
            }
        }
        let mut v = vec![C64::new(0.0, 0.0); m];
        v[pick] = C64::new(1.0, 0.0);
        for _ in 0..2 {
            for b in &basis {
                let overlap: C64 = b.iter().zip(&v).map(|(x, y)| x.conj() * y).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= overlap * bi;
                }
            }
        }
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in v.iter_mut() {
            *z /= n;
        }
        for (w, z) in weight.iter_mut().zip(&v) {
            *w -= z.norm_sqr();
        }
        basis.push(v);
    }
    Matrix::from_fn(m, m, |i, j| basis[j][i])
}

/// Left singular vectors of `m` completed to a full unitary, sorted by
/// descending singular value, each column gauge-fixed with [`fix_phase`].
pub fn left_singular_basis(m: &Matrix) -> LeftBasis {
    let rows = m.nrows();
    let svd = thin_svd(m);
    let floor = svd.s.first().copied().unwrap_or(0.0) * f64::EPSILON * (rows.max(m.ncols()) as f64);
    let nonzero = svd.s.iter().filter(|&&x| x > floor && x > 0.0).count();
    let mut u = complete_basis(&svd.u.columns(0, nonzero).into_owned());
    let mut values = svd.s;
    values.resize(rows, 0.0);
    for j in 0..rows {
        let mut col: Vec<C64> = u.column(j).iter().copied().collect();
        fix_phase(&mut col);
        for (i, z) in col.into_iter().enumerate() {
            u[(i, j)] = z;
        }
    }
    LeftBasis {
        u,
        singular_values: values,
    }
}

/// Largest singular value with its left and right singular vectors, so that
/// `m ~ sigma * u * v^dagger` when `m` is rank one.
pub fn dominant_triple(m: &Matrix) -> (f64, Vec<C64>, Vec<C64>) {
    let svd = thin_svd(m);
    let left = svd.u.column(0).iter().copied().collect();
    let right = svd.w.column(0).iter().copied().collect();
    (svd.s[0], left, right)
}

/// Closest unitary in Frobenius norm (the unitary polar factor).
pub fn polar_unitary(m: &Matrix) -> Matrix {
    let svd = thin_svd(m);
    let nonzero = svd.s.iter().filter(|&&x| x > 0.0).count();
    let (u, w) = if nonzero == m.nrows() {
        (svd.u, svd.w)
    } else {
        (
            complete_basis(&svd.u.columns(0, nonzero).into_owned()),
            complete_basis(&svd.w.columns(0, nonzero).into_owned()),
        )
    };
    u * w.adjoint()
}

/// Householder QR of a square matrix. `r` is upper triangular.
pub fn qr(m: &Matrix) -> (Matrix, Matrix) {
    let f = m.clone().qr();
    (f.q(), f.r())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn basis_completion_is_unitary() {
        let s = 1.0 / 2f64.sqrt();
        let cols = Matrix::from_column_slice(3, 1, &[c(s, 0.0), c(0.0, s), c(0.0, 0.0)]);
        let u = complete_basis(&cols);
        assert!(unitarity_defect(&u) < 1e-13);
        assert_eq!(u.column(0), cols.column(0));
    }

    #[test]
    fn left_basis_of_tall_matrix_is_full() {
        let m = Matrix::from_fn(5, 2, |i, j| c((i + 2 * j) as f64, (i * j) as f64 - 1.0));
        let lb = left_singular_basis(&m);
        assert_eq!(lb.u.shape(), (5, 5));
        assert!(unitarity_defect(&lb.u) < 1e-12);
        assert_eq!(lb.singular_values.len(), 5);
        assert!(lb.singular_values[2..].iter().all(|&s| s == 0.0));
        assert!(lb.singular_values[0] >= lb.singular_values[1]);
        // leading columns span the column space
        let proj = lb.u.columns(0, 2).adjoint() * &m;
        assert!((frobenius(&proj) - frobenius(&m)).abs() < 1e-12);
    }

    #[test]
    fn phase_gauge_makes_first_component_positive() {
        let mut v = vec![c(0.0, 0.0), c(0.0, -2.0), c(1.0, 1.0)];
        fix_phase(&mut v);
        assert!(v[1].im.abs() < 1e-15 && v[1].re > 0.0);
    }

    #[test]
    fn rank_uses_relative_cutoff() {
        assert_eq!(numerical_rank(&[1e5, 1e-4, 1e-6], 1e-10), 2);
        assert_eq!(numerical_rank(&[0.0, 0.0], 1e-10), 0);
    }

    #[test]
    fn singular_inverse_is_rejected() {
        let m = Matrix::from_element(2, 2, c(1.0, 0.0));
        assert!(matches!(inverse(&m), Err(Error::Singular(_))));
    }
}
