//! Dense complex linear-algebra helpers shared across the crate.

use ndarray::prelude::*;
use ndarray_linalg::{Determinant, Factorize, Inverse, OperationNorm, Solve};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = Array2<C64>;
pub type CVec = Array1<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn eye(n: usize) -> CMat {
    CMat::eye(n)
}

/// Frobenius (Hilbert-Schmidt) norm.
pub fn fro_norm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
}

pub fn trace(a: &CMat) -> C64 {
    a.diag().sum()
}

/// Conjugate transpose.
pub fn adjoint(a: &CMat) -> CMat {
    a.t().mapv(|z| z.conj())
}

/// log(det(I + A)) as (log|.|, arg) accumulated in the log domain.
pub fn log_det_i_plus(a: &CMat) -> Result<C64> {
    let n = a.nrows();
    let m = &eye(n) + a;
    let (sign, ln) = m.sln_det().map_err(|e| Error::Linalg(e.to_string()))?;
    if !ln.is_finite() && sign.norm() == 0.0 {
        // singular: log det = -inf; represent with a very negative real part
        return Ok(c(-1e6, 0.0));
    }
    Ok(c(ln, 0.0) + sign.ln())
}

/// det(I + A) computed through the log domain (safe against over/underflow).
pub fn det_i_plus(a: &CMat) -> Result<C64> {
    Ok(log_det_i_plus(a)?.exp())
}

/// Matrix exponential by scaling-and-squaring with a (6,6) Pade approximant.
///
/// Accuracy is ample for the well-scaled operator arguments used here
/// (norms are brought below 1/2 before the Pade step).
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    let norm = match a.opnorm_one() {
        Ok(v) => v,
        Err(_) => fro_norm(a),
    };
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a.mapv(|z| z / cr(2f64.powi(s)));

    // (6,6) Pade: p(x)/p(-x) with p the truncated series of e^{x/ ...}
    let coeffs = [
        1.0,
        0.5,
        5.0 / 44.0,
        1.0 / 66.0,
        1.0 / 792.0,
        1.0 / 15840.0,
        1.0 / 665280.0,
    ];
    let mut num = eye(n).mapv(|z| z * cr(coeffs[0]));
    let mut den = num.clone();
    let mut pw = eye(n);
    for (k, &ck) in coeffs.iter().enumerate().skip(1) {
        pw = pw.dot(&scaled);
        num = num + pw.mapv(|z| z * cr(ck));
        let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
        den = den + pw.mapv(|z| z * cr(sgn * ck));
    }
    let mut result = den
        .inv()
        .expect("Pade denominator is invertible for scaled inputs")
        .dot(&num);
    for _ in 0..s {
        result = result.dot(&result);
    }
    result
}

/// Solve (I + A) X = B.
pub fn solve_i_plus(a: &CMat, b: &CMat) -> Result<CMat> {
    let n = a.nrows();
    let m = &eye(n) + a;
    let mut cols = CMat::zeros((n, b.ncols()));
    let factor = m.factorize().map_err(|e| Error::Linalg(e.to_string()))?;
    for (j, col) in b.columns().into_iter().enumerate() {
        let x = factor
            .solve(&col.to_owned())
            .map_err(|e| Error::Linalg(e.to_string()))?;
        cols.column_mut(j).assign(&x);
    }
    Ok(cols)
}

/// Rough condition estimate ||M||_F * ||M^-1||_F.
pub fn cond_fro(m: &CMat) -> f64 {
    match m.inv() {
        Ok(inv) => fro_norm(m) * fro_norm(&inv),
        Err(_) => f64::INFINITY,
    }
}

/// Minimum-cost bijective matching between two equally sized point sets,
/// by exhaustive permutation search (exact; set sizes here stay small).
///
/// Returns (assignment, max pair distance). `assignment[i] = j` pairs `a[i]`
/// with `b[j]`.
pub fn match_points(a: &[C64], b: &[C64]) -> Option<(Vec<usize>, f64)> {
    if a.len() != b.len() {
        return None;
    }
    let n = a.len();
    if n == 0 {
        return Some((vec![], 0.0));
    }
    assert!(n <= 9, "matching supports up to 9 points");
    let mut idx: Vec<usize> = (0..n).collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    permute(&mut idx, 0, &mut |perm| {
        let cost = perm
            .iter()
            .enumerate()
            .map(|(i, &j)| (a[i] - b[j]).norm())
            .fold(0.0_f64, f64::max);
        if best.as_ref().map_or(true, |(_, c0)| cost < *c0) {
            best = Some((perm.to_vec(), cost));
        }
    });
    best
}

fn permute(idx: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == idx.len() {
        visit(idx);
        return;
    }
    for i in k..idx.len() {
        idx.swap(k, i);
        permute(idx, k + 1, visit);
        idx.swap(k, i);
    }
}
