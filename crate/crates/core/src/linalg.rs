//! Small dense helpers: sorted SVDs, canonical null spaces, least squares.

use nalgebra::{DMatrix, DVector};

use crate::expr::C64;

pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

const TIE: f64 = 1e-9;

/// Singular values in descending order (length `min(rows, cols)`).
pub fn singular_values(a: &CMat) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

pub fn min_singular_value(a: &CMat) -> f64 {
    singular_values(a).last().copied().unwrap_or(0.0)
}

/// Numerical rank with an absolute cutoff.
pub fn rank(a: &CMat, tol: f64) -> usize {
    singular_values(a).iter().filter(|s| **s > tol).count()
}

/// Right singular vectors of `a` as columns, paired with singular values
/// (descending). Rows are zero-padded so the full set of `ncols` vectors is
/// returned.
fn full_right_svd(a: &CMat) -> (Vec<f64>, CMat) {
    let n = a.ncols();
    let padded = if a.nrows() < n {
        let mut p = CMat::zeros(n, n);
        p.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s = idx.iter().map(|&i| svd.singular_values[i]).collect();
    let v = CMat::from_fn(n, idx.len(), |r, c| v_t[(idx[c], r)].conj());
    (s, v)
}

/// Orthonormal basis of the null space of a matrix expected to have full row
/// rank `a.nrows()`. Returns the basis and the smallest of the leading
/// `nrows` singular values; callers decide whether that certifies the rank.
///
/// The basis is canonical: it depends only on the null space, not on the
/// decomposition. Columns come from pivoted Gram-Schmidt on the projections of
/// the coordinate vectors (lowest index wins ties), then each column is
/// rotated so that its first non-negligible component is real and positive.
pub fn null_space(a: &CMat) -> (CMat, f64) {
    let n = a.ncols();
    let r = a.nrows().min(n);
    if n == 0 {
        return (CMat::zeros(0, 0), f64::INFINITY);
    }
    let (s, v) = full_right_svd(a);
    let min_sv = if r == 0 { f64::INFINITY } else { s[r - 1] };
    let raw = v.columns(r, n - r).into_owned();
    (canonical_basis(&raw), min_sv)
}

/// Canonical orthonormal basis for the column span of an orthonormal `q`.
pub fn canonical_basis(q: &CMat) -> CMat {
    let n = q.nrows();
    let k = q.ncols();
    let proj = q * q.adjoint();
    let mut out = CMat::zeros(n, k);
    let mut used = vec![false; n];
    for col in 0..k {
        let residuals: Vec<CVec> = (0..n)
            .map(|e| {
                let mut r = proj.column(e).into_owned();
                for j in 0..col {
                    let qj = out.column(j);
                    let c = qj.dotc(&r);
                    r -= qj * c;
                }
                r
            })
            .collect();
        let best = residuals
            .iter()
            .enumerate()
            .filter(|(e, _)| !used[*e])
            .map(|(_, r)| r.norm())
            .fold(0.0, f64::max);
        let pick = (0..n)
            .find(|&e| !used[e] && residuals[e].norm() >= best * (1.0 - TIE))
            .expect("null space column");
        used[pick] = true;
        let v = &residuals[pick] / C64::new(residuals[pick].norm(), 0.0);
        out.set_column(col, &v);
    }
    for mut c in out.column_iter_mut() {
        let scale = c.norm();
        if let Some(first) = c.iter().find(|x| x.norm() > 1e-10 * scale).copied() {
            let phase = first.conj() / first.norm();
            c *= phase;
        }
    }
    out
}

/// Rotate the orthonormal columns of `q` by the unitary that brings them
/// closest to `anchor` (polar factor of `q^H anchor`). Returns the rotated
/// basis and the smallest singular value of the overlap.
pub fn align_to(q: &CMat, anchor: &CMat) -> (CMat, f64) {
    if q.ncols() == 0 {
        return (q.clone(), 1.0);
    }
    let overlap = q.adjoint() * anchor;
    let svd = overlap.svd(true, true);
    let u = svd.u.expect("u") * svd.v_t.expect("v_t");
    let min = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    (q * u, min)
}

/// Least-squares solution of `a x = b` via SVD.
#[derive(Clone, Debug)]
pub struct LstSq {
    pub x: CMat,
    /// Frobenius norm of `a x - b`.
    pub residual: f64,
    pub singular_values: Vec<f64>,
    pub rank: usize,
}

impl LstSq {
    pub fn min_sv(&self) -> f64 {
        self.singular_values.last().copied().unwrap_or(0.0)
    }

    pub fn condition(&self) -> f64 {
        match (self.singular_values.first(), self.singular_values.last()) {
            (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
            _ => f64::INFINITY,
        }
    }
}

pub fn lstsq(a: &CMat, b: &CMat, tol: f64) -> LstSq {
    let n = a.ncols();
    if n == 0 {
        return LstSq { x: CMat::zeros(0, b.ncols()), residual: b.norm(), singular_values: vec![], rank: 0 };
    }
    let svd = a.clone().svd(true, true);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    let x = svd.solve(b, tol).expect("svd solve");
    let residual = (a * &x - b).norm();
    let rank = s.iter().filter(|v| **v > tol).count();
    s.sort_by(|p, q| q.total_cmp(p));
    if s.len() < n {
        s.resize(n, 0.0);
    }
    LstSq { x, residual, singular_values: s, rank }
}

/// Minimum-norm solution of the real system `j x = r`.
pub fn real_min_norm_solve(j: &DMatrix<f64>, r: &DVector<f64>, tol: f64) -> DVector<f64> {
    let svd = j.clone().svd(true, true);
    svd.solve(r, tol).expect("svd solve")
}

/// Orthonormal basis of the null space of a real matrix, plus the smallest
/// of its leading `nrows` singular values.
pub fn real_null_space(a: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let n = a.ncols();
    let r = a.nrows().min(n);
    let padded = if a.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let min_sv = if r == 0 { f64::INFINITY } else { svd.singular_values[idx[r - 1]] };
    let basis = DMatrix::from_fn(n, n - r, |row, c| v_t[(idx[r + c], row)]);
    (basis, min_sv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn null_space_of_single_row() {
        let a = CMat::from_row_slice(1, 2, &[c(1.0, 0.0), c(0.0, 0.0)]);
        let (n, s) = null_space(&a);
        assert!((s - 1.0).abs() < 1e-14);
        assert!((n[(0, 0)]).norm() < 1e-14);
        assert!((n[(1, 0)] - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn null_space_prefers_lowest_index_on_ties() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let a = CMat::from_row_slice(1, 2, &[c(h, 0.0), c(h, 0.0)]);
        let (n, _) = null_space(&a);
        assert!((n[(0, 0)] - c(h, 0.0)).norm() < 1e-14);
        assert!((n[(1, 0)] + c(h, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn canonical_basis_ignores_input_rotation() {
        let a = CMat::from_row_slice(1, 3, &[c(0.3, 0.1), c(-0.2, 0.5), c(0.7, -0.4)]);
        let (n1, _) = null_space(&a);
        let rot = CMat::from_row_slice(2, 2, &[c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]);
        let n2 = canonical_basis(&(&n1 * rot));
        assert!((n1 - n2).norm() < 1e-13);
    }

    #[test]
    fn alignment_recovers_anchor() {
        let a = CMat::from_row_slice(1, 3, &[c(0.3, 0.1), c(-0.2, 0.5), c(0.7, -0.4)]);
        let (n, _) = null_space(&a);
        let rot = CMat::from_row_slice(2, 2, &[c(0.6, 0.0), c(0.0, 0.8), c(0.0, 0.8), c(0.6, 0.0)]);
        let (aligned, s) = align_to(&(&n * rot), &n);
        assert!((aligned - n).norm() < 1e-13);
        assert!((s - 1.0).abs() < 1e-13);
    }
}
