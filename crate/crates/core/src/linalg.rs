//! Dense complex linear algebra on top of faer.

use crate::error::{Error, Result};
use faer::prelude::*;
use faer::Mat;
pub use faer::c64;

pub type CMat = Mat<c64>;

pub fn c(re: f64, im: f64) -> c64 {
    c64::new(re, im)
}

pub fn cr(re: f64) -> c64 {
    c64::new(re, 0.0)
}

pub fn zeros(r: usize, cols: usize) -> CMat {
    Mat::zeros(r, cols)
}

pub fn identity(n: usize) -> CMat {
    Mat::identity(n, n)
}

pub fn is_finite(a: &CMat) -> bool {
    (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)].re.is_finite() && a[(i, j)].im.is_finite()))
}

/// Frobenius norm.
pub fn fro(a: &CMat) -> f64 {
    a.norm_l2()
}

pub fn adjoint(a: &CMat) -> CMat {
    a.adjoint().to_owned()
}

pub fn col(a: &CMat, j: usize) -> Vec<c64> {
    (0..a.nrows()).map(|i| a[(i, j)]).collect()
}

pub fn from_cols(cols: &[Vec<c64>]) -> CMat {
    let r = cols.first().map_or(0, |v| v.len());
    Mat::from_fn(r, cols.len(), |i, j| cols[j][i])
}

pub fn matvec(a: &CMat, x: &[c64]) -> Vec<c64> {
    let mut y = vec![c64::new(0.0, 0.0); a.nrows()];
    for j in 0..a.ncols() {
        let xj = x[j];
        if xj == c64::new(0.0, 0.0) {
            continue;
        }
        let cj = a.col(j);
        for i in 0..a.nrows() {
            y[i] += cj[i] * xj;
        }
    }
    y
}

pub fn dot(x: &[c64], y: &[c64]) -> c64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn vnorm(x: &[c64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn solve(a: &CMat, b: &CMat) -> CMat {
    a.partial_piv_lu().solve(b)
}

pub fn inverse(a: &CMat) -> CMat {
    solve(a, &identity(a.nrows()))
}

/// Orthonormal basis of the column span (thin Q factor).
pub fn orthonormalize(a: &CMat) -> CMat {
    a.qr().compute_thin_Q()
}

pub fn singular_values(a: &CMat) -> Result<Vec<f64>> {
    a.singular_values().map_err(|_| Error::EigenFailure)
}

#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

pub fn svd(a: &CMat) -> Result<Svd> {
    let d = a.svd().map_err(|_| Error::EigenFailure)?;
    let k = a.nrows().min(a.ncols());
    let s = (0..k).map(|i| d.S().column_vector()[i].re).collect();
    Ok(Svd { u: d.U().to_owned(), s, v: d.V().to_owned() })
}

/// 2-norm condition number from singular values.
pub fn cond(a: &CMat) -> f64 {
    match singular_values(a) {
        Ok(s) if !s.is_empty() => {
            let smin = *s.last().unwrap();
            if smin == 0.0 {
                f64::INFINITY
            } else {
                s[0] / smin
            }
        }
        _ => f64::INFINITY,
    }
}

#[derive(Debug, Clone)]
pub struct EigResult {
    pub eigenvalues: Vec<c64>,
    /// Columns are unit-norm right eigenvectors.
    pub right_vectors: CMat,
    /// Columns w_j with w_j^* v_k = δ_jk (when requested).
    pub left_vectors: Option<CMat>,
    pub residual_norms: Vec<f64>,
    pub biorthogonality_error: f64,
}

impl EigResult {
    pub fn ill_conditioned(&self) -> bool {
        self.biorthogonality_error > 1e-6
    }
}

/// Full eigendecomposition. Left vectors come from an independent solve with
/// the adjoint, matched to the right eigenvalues and biorthonormalized.
pub fn eig_dense(a: &CMat, want_left: bool) -> Result<EigResult> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidInput("matrix not square".into()));
    }
    if !is_finite(a) {
        return Err(Error::NonFinite("matrix"));
    }
    let n = a.nrows();
    let e = a.eigen().map_err(|_| Error::EigenFailure)?;
    let lam: Vec<c64> = (0..n).map(|i| e.S().column_vector()[i]).collect();
    let mut v = e.U().to_owned();
    for j in 0..n {
        let nv = v.col(j).norm_l2();
        if nv > 0.0 {
            for i in 0..n {
                v[(i, j)] /= cr(nv);
            }
        }
    }
    let av = a * &v;
    let residual_norms = (0..n)
        .map(|j| {
            let mut s = 0.0;
            for i in 0..n {
                s += (av[(i, j)] - lam[j] * v[(i, j)]).norm_sqr();
            }
            s.sqrt()
        })
        .collect();
    let (left, err) = if want_left {
        let ah = adjoint(a);
        let el = ah.eigen().map_err(|_| Error::EigenFailure)?;
        let mu: Vec<c64> = (0..n).map(|i| el.S().column_vector()[i].conj()).collect();
        let wu = el.U().to_owned();
        let perm = match_nearest(&lam, &mu);
        let mut w = zeros(n, n);
        for j in 0..n {
            let src = perm[j];
            for i in 0..n {
                w[(i, j)] = wu[(i, src)];
            }
            let p: c64 = (0..n).map(|i| w[(i, j)].conj() * v[(i, j)]).sum();
            let scale = if p.norm() > 0.0 { p.conj().inv() } else { cr(f64::INFINITY) };
            for i in 0..n {
                w[(i, j)] *= scale;
            }
        }
        let g = w.adjoint() * &v;
        let mut err: f64 = 0.0;
        for j in 0..n {
            for k in 0..n {
                let target = if j == k { cr(1.0) } else { cr(0.0) };
                let d = (g[(j, k)] - target).norm();
                err = err.max(if d.is_finite() { d } else { f64::INFINITY });
            }
        }
        (Some(w), err)
    } else {
        (None, 0.0)
    };
    Ok(EigResult {
        eigenvalues: lam,
        right_vectors: v,
        left_vectors: left,
        residual_norms,
        biorthogonality_error: err,
    })
}

/// Greedy nearest matching: perm[j] is the index in `b` paired with a[j].
pub fn match_nearest(a: &[c64], b: &[c64]) -> Vec<usize> {
    let n = a.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            pairs.push(((x - y).norm(), i, j));
        }
    }
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut perm = vec![usize::MAX; n];
    let mut used = vec![false; b.len()];
    for (_, i, j) in pairs {
        if perm[i] == usize::MAX && !used[j] {
            perm[i] = j;
            used[j] = true;
        }
    }
    perm
}

#[derive(Debug, Clone)]
pub struct RankReport {
    pub rank: usize,
    pub singular_values: Vec<f64>,
}

pub fn numeric_rank(a: &CMat, tol: f64) -> Result<RankReport> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidInput(format!("rank tolerance {tol} outside (0, 1)")));
    }
    let s = singular_values(a)?;
    let smax = s.first().copied().unwrap_or(0.0);
    let rank = s.iter().filter(|&&x| x > tol * smax).count();
    Ok(RankReport { rank, singular_values: s })
}

pub fn real_to_cmat(r: usize, ncols: usize, f: impl Fn(usize, usize) -> f64) -> CMat {
    Mat::from_fn(r, ncols, |i, j| cr(f(i, j)))
}

fn one_norm(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by degree-13 Padé approximation with scaling and squaring.
pub fn expm(a: &CMat) -> CMat {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;
    let n = a.nrows();
    let norm = one_norm(a);
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let scale = cr(0.5f64.powi(s));
    let a1 = a * faer::Scale(scale);
    let id = identity(n);
    let a2 = &a1 * &a1;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let sc = |m: &CMat, x: f64| m * faer::Scale(cr(x));
    let u_inner = &a6 * &(sc(&a6, B[13]) + sc(&a4, B[11]) + sc(&a2, B[9]));
    let u = &a1 * &(u_inner + sc(&a6, B[7]) + sc(&a4, B[5]) + sc(&a2, B[3]) + sc(&id, B[1]));
    let v_inner = &a6 * &(sc(&a6, B[12]) + sc(&a4, B[10]) + sc(&a2, B[8]));
    let v = v_inner + sc(&a6, B[6]) + sc(&a4, B[4]) + sc(&a2, B[2]) + sc(&id, B[0]);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = solve(&q, &p);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_eigenvalues() {
        let a = real_to_cmat(3, 3, |i, j| if i == j { (i + 1) as f64 } else { 0.0 });
        let r = eig_dense(&a, true).unwrap();
        let mut ev: Vec<f64> = r.eigenvalues.iter().map(|z| z.re).collect();
        ev.sort_by(f64::total_cmp);
        assert_eq!(ev.len(), 3);
        for (k, x) in ev.iter().enumerate() {
            assert!((x - (k + 1) as f64).abs() < 1e-14);
        }
        assert!(r.residual_norms.iter().all(|&x| x < 1e-14));
        assert!(r.biorthogonality_error < 1e-12);
    }

    #[test]
    fn jordan_block_flagged() {
        let a = real_to_cmat(2, 2, |i, j| if i == 0 && j == 1 { 1.0 } else { 0.0 });
        let r = eig_dense(&a, true).unwrap();
        assert!(r.eigenvalues.iter().all(|z| z.norm() < 1e-7));
        assert!(r.ill_conditioned());
    }

    #[test]
    fn rank_identity_and_outer() {
        assert_eq!(numeric_rank(&identity(5), 1e-8).unwrap().rank, 5);
        let u = [1.0, 2.0, -1.0, 0.5];
        let w = [0.3, -2.0, 1.0, 4.0];
        let a = real_to_cmat(4, 4, |i, j| u[i] * w[j]);
        assert_eq!(numeric_rank(&a, 1e-8).unwrap().rank, 1);
        assert!(numeric_rank(&a, 1.5).is_err());
    }

    #[test]
    fn expm_jordan_and_rotation() {
        let a = real_to_cmat(2, 2, |i, j| if i == 0 && j == 1 { 3.0 } else { 0.0 });
        let e = expm(&a);
        assert!((e[(0, 1)] - cr(3.0)).norm() < 1e-14);
        assert!((e[(0, 0)] - cr(1.0)).norm() < 1e-14);
        let t = 7.3;
        let r = real_to_cmat(2, 2, |i, j| match (i, j) {
            (0, 1) => -t,
            (1, 0) => t,
            _ => 0.0,
        });
        let e = expm(&r);
        assert!((e[(0, 0)].re - t.cos()).abs() < 1e-13);
        assert!((e[(1, 0)].re - t.sin()).abs() < 1e-13);
    }

    #[test]
    fn expm_matches_eigen_route() {
        let a = Mat::from_fn(6, 6, |i, j| c(((i * 7 + j * 3) % 5) as f64 - 2.0, 0.1 * (i as f64 - j as f64)));
        let e = expm(&a);
        let d = eig_dense(&a, false).unwrap();
        let v = &d.right_vectors;
        let vi = inverse(v);
        let lam = Mat::from_fn(6, 6, |i, j| if i == j { d.eigenvalues[i].exp() } else { cr(0.0) });
        let e2 = v * &lam * &vi;
        assert!(fro(&(&e - &e2)) / fro(&e) < 1e-11);
    }
}
