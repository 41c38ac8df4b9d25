//! Regularized determinants: the matrix-level det2 operations and identity
//! suite, the determinant of the quasienergy problem evaluated through three
//! routes (full space-time matrix, rank-reduced disk evaluator, propagator
//! closed form), Taylor coefficients of log psi, and the trace series.

use ndarray::prelude::*;
use ndarray_linalg::Eig;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::floquet::{
    conjugated_potential, free_resolvent_mode_diagonals, gamma_multipliers, TimeGrid,
    TimePeriodicPotential,
};
use crate::lattice::Laplacian;
use crate::linalg::{
    c, cr, expm, eye, fro_norm, log_det_i_plus, solve_i_plus, trace, CMat, CVec, C64, I,
};

/// How a determinant value was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Det2Method {
    /// det2 of a plain matrix argument
    Matrix,
    /// full space-time matrix V R0(lambda)
    DirectVR0,
    /// full space-time matrix |V|^1/2 R0 |V|^1/2 e^{i arg V}
    SymmetrizedBS,
    /// rank-reduced disk evaluator
    RankReduced,
    /// propagator closed form (quadrature-free in time)
    Propagator,
}

/// A regularized determinant value.
///
/// `value = det(I + A) * exp(-trace_a - normalization_log)` for the
/// underlying matrix A of the method; `trace_a` is the trace subtracted in
/// the regularizing exponent (for the rank-reduced form this is the trace of
/// the rank-one part, following the reduced determinant convention).
/// `normalization_log` removes the discrete Volterra factor where one exists
/// (zero for the matrix-level operation). All bookkeeping is done in the log
/// domain; `log_abs` is authoritative when `value` would over/underflow.
#[derive(Debug, Clone, Serialize)]
pub struct Det2Value {
    pub value: C64,
    pub log_value: C64,
    pub log_abs: f64,
    pub trace_a: C64,
    pub normalization_log: C64,
    pub method: Det2Method,
}

fn det2_from_log(
    log_value: C64,
    trace_a: C64,
    normalization_log: C64,
    method: Det2Method,
) -> Det2Value {
    let clamped = if log_value.re > 700.0 {
        c(700.0, log_value.im)
    } else if log_value.re < -700.0 {
        c(-700.0, log_value.im)
    } else {
        log_value
    };
    Det2Value {
        value: clamped.exp(),
        log_value,
        log_abs: log_value.re,
        trace_a,
        normalization_log,
        method,
    }
}

/// det2(I + A) = det((I + A) e^{-A}), computed through the log domain.
pub fn det2(a: &CMat) -> Result<Det2Value> {
    let tr = trace(a);
    let log_det = log_det_i_plus(a)?;
    Ok(det2_from_log(log_det - tr, tr, cr(0.0), Det2Method::Matrix))
}

/// |det2(I + XY) - det2(I + YX)| as (absolute, relative) residual.
pub fn det2_commutation_check(x: &CMat, y: &CMat) -> Result<(f64, f64)> {
    let ab = det2(&x.dot(y))?;
    let ba = det2(&y.dot(x))?;
    let abs = (ab.value - ba.value).norm();
    let scale = ab.value.norm().max(ba.value.norm()).max(1e-300);
    Ok((abs, abs / scale))
}

/// Residuals of the product identities for regularized determinants.
#[derive(Debug, Clone, Serialize)]
pub struct Lemma21Residuals {
    /// |det(e^A e^{-A-B} e^B) - 1|
    pub ab2: f64,
    /// relative gap between det((I+A+B)e^{-A-B}) and
    /// det((I+A)e^{-A}) det((I+R B)e^{-B}), R = (I+A)^{-1}
    pub ab4: f64,
}

pub fn lemma21_identity_suite(a: &CMat, b: &CMat) -> Result<Lemma21Residuals> {
    use ndarray_linalg::Determinant;
    let ea = expm(a);
    let eb = expm(b);
    let emab = expm(&(-(a + b)));
    let prod = ea.dot(&emab).dot(&eb);
    let det_prod = prod.det().map_err(|e| Error::Linalg(e.to_string()))?;
    let ab2 = (det_prod - cr(1.0)).norm();

    let lhs = det2(&(a + b))?;
    let da = det2(a)?;
    if !da.value.is_finite() || da.value.norm() < 1e-280 {
        return Err(Error::SingularIplusA);
    }
    let rb = solve_i_plus(a, b).map_err(|_| Error::SingularIplusA)?;
    let db_log = log_det_i_plus(&rb)? - trace(b);
    let rhs_log = da.log_value + db_log;
    let gap = (lhs.log_value - rhs_log).exp() - cr(1.0);
    Ok(Lemma21Residuals {
        ab2,
        ab4: gap.norm(),
    })
}

/// The discrete Volterra determinant log det[(I + F1) e^{-F1}] of the grid,
/// which the continuum theory fixes to exactly 1. The determinant telescopes
/// to the diagonal blocks, which are similar to diagonal matrices, so the
/// value only needs the site samples.
pub fn volterra_log(v: &TimePeriodicPotential) -> C64 {
    let w = v.grid.weight();
    let half = I * cr(w / 2.0);
    let mut total = c(0.0, 0.0);
    for z in v.values.iter() {
        total += (cr(1.0) + half * z).ln() - half * z;
    }
    total
}

/// Rank-reduced evaluator of psi(z), assembled once per (V, Laplacian, grid).
///
/// Everything lives in the Laplacian mode basis: `g_mat` is the
/// rank-reduction response G with E R1 gamma(z) C = G gamma(z), and the
/// zeros of psi are the reciprocals of the eigenvalues of (I - G) a.
#[derive(Debug, Clone)]
pub struct DeterminantEvaluator {
    pub tau: f64,
    pub m: usize,
    pub site_count: usize,
    /// Laplacian eigenvalues e_theta
    pub eigs_delta: Array1<f64>,
    /// a_theta = e^{-i tau e_theta}
    pub a_diag: CVec,
    /// G (mode basis)
    pub g_mat: CMat,
    /// i w sum_k Vtilde(t_k) (mode basis)
    pub t0: CMat,
    /// m_theta = w sum_k (Q* V(t_k) Q)_{theta theta}
    pub m_theta: CVec,
    /// eigenvalues of (I - G) a; reciprocals are the zeros of psi
    pub mono_eigs: CVec,
    /// log of the discrete Volterra determinant of the same grid
    pub volterra_log: C64,
    /// ||V||_{2,2}^2, used for search ceilings
    pub v22_squared: f64,
}

impl DeterminantEvaluator {
    pub fn assemble(v: &TimePeriodicPotential, lap: &Laplacian) -> Result<Self> {
        let s = lap.site_count();
        let m = v.grid.m;
        let w = v.grid.weight();
        let conj = conjugated_potential(v, lap);

        let mut g_mat: CMat = CMat::zeros((s, s));
        let mut t0: CMat = CMat::zeros((s, s));
        let mut m_theta: CVec = CVec::zeros(s);
        for k in 0..m {
            let vt = &conj.mode_blocks[k];
            t0 = t0 + vt.mapv(|z| I * cr(w) * z);
            for th in 0..s {
                m_theta[th] += cr(w) * vt[[th, th]];
            }
            // (I + i w/2 Vt_k) Phi_k = I - G_partial
            let lhs = vt.mapv(|z| I * cr(w / 2.0) * z);
            let rhs = &eye(s) - &g_mat;
            let phi =
                solve_i_plus(&lhs, &rhs).map_err(|_| Error::SingularF1 { cond: f64::INFINITY })?;
            let norm = fro_norm(&phi);
            if !norm.is_finite() || norm > 1e12 {
                return Err(Error::SingularF1 { cond: norm });
            }
            g_mat = g_mat + vt.dot(&phi).mapv(|z| I * cr(w) * z);
        }

        let a_diag = CVec::from_iter(
            lap.eigenvalues
                .iter()
                .map(|&e| c(0.0, -v.grid.tau * e).exp()),
        );
        // (I - G) a: columns of (I - G) scaled by a_theta
        let i_minus_g = &eye(s) - &g_mat;
        let mono = &i_minus_g * &a_diag.view().insert_axis(Axis(0));
        let (mono_eigs, _) = mono.eig().map_err(|e| Error::Linalg(e.to_string()))?;

        Ok(DeterminantEvaluator {
            tau: v.grid.tau,
            m,
            site_count: s,
            eigs_delta: lap.eigenvalues.clone(),
            a_diag,
            g_mat,
            t0,
            m_theta,
            mono_eigs,
            volterra_log: volterra_log(v),
            v22_squared: v.v22_squared(),
        })
    }

    fn resonance_guard(&self, z: C64) -> Result<()> {
        let min_gap = self
            .a_diag
            .iter()
            .map(|&a| (cr(1.0) - z * a).norm())
            .fold(f64::INFINITY, f64::min);
        if min_gap < crate::floquet::RESONANCE_THRESHOLD {
            return Err(Error::FloquetResonance {
                z,
                min_gap,
                threshold: crate::floquet::RESONANCE_THRESHOLD,
            });
        }
        Ok(())
    }

    fn gamma_trace(&self, z: C64) -> C64 {
        let mut tr_term = c(0.0, 0.0);
        for (th, &a) in self.a_diag.iter().enumerate() {
            tr_term += z * a / (cr(1.0) - z * a) * self.m_theta[th];
        }
        I * tr_term
    }

    /// The analytic branch of log psi with log psi(0) = 0, valid as a branch
    /// wherever |z| max|mu| < 1; outside it remains a correct value of the
    /// multivalued log (each determinant factor takes its principal branch).
    pub fn log_psi(&self, z: C64) -> Result<C64> {
        self.resonance_guard(z)?;
        let num: C64 = self
            .mono_eigs
            .iter()
            .map(|&mu| (cr(1.0) - z * mu).ln())
            .sum();
        let den: C64 = self.a_diag.iter().map(|&a| (cr(1.0) - z * a).ln()).sum();
        Ok(num - den - self.gamma_trace(z))
    }

    /// psi(z) through the rank-reduced form.
    pub fn psi(&self, z: C64) -> Result<Det2Value> {
        let log_value = self.log_psi(z)?;
        Ok(det2_from_log(
            log_value,
            self.gamma_trace(z),
            cr(0.0),
            Det2Method::RankReduced,
        ))
    }

    /// psi evaluated at z(lambda) = e^{i tau lambda}.
    pub fn d_of_lambda(&self, lambda: C64) -> Result<Det2Value> {
        self.psi((I * cr(self.tau) * lambda).exp())
    }

    /// Zeros of psi in |z| < r_cap with multiplicities, from the reduced
    /// monodromy eigenvalues.
    pub fn zeros_from_eigs(&self, r_cap: f64) -> Vec<(C64, usize)> {
        let mut zeros: Vec<(C64, usize)> = vec![];
        for &mu in self.mono_eigs.iter() {
            if mu.norm() * r_cap <= 1.0 {
                continue;
            }
            let z = cr(1.0) / mu;
            match zeros.iter_mut().find(|(z0, _)| (*z0 - z).norm() < 1e-9) {
                Some(entry) => entry.1 += 1,
                None => zeros.push((z, 1)),
            }
        }
        zeros
    }

    /// Taylor coefficients psi_1..psi_n of log psi from the closed trace
    /// formulas, via the geometric expansion of gamma(z).
    pub fn taylor_closed_form(&self, n_max: usize) -> Vec<C64> {
        // P_k = (T0 - G) a^k and Q_k = G a^k, columns scaled by a^k
        let p_base = &self.t0 - &self.g_mat;
        let scale = |mat: &CMat, k: usize| -> CMat {
            let ak = CVec::from_iter(self.a_diag.iter().map(|&a| a.powu(k as u32)));
            mat * &ak.view().insert_axis(Axis(0))
        };
        let p: Vec<CMat> = (1..=n_max).map(|k| scale(&p_base, k)).collect();
        let q: Vec<CMat> = (1..=n_max).map(|k| scale(&self.g_mat, k)).collect();

        let mut coeffs = vec![c(0.0, 0.0); n_max];
        // sum over m >= 1 and compositions (k_1, ..., k_m) of n
        for n in 1..=n_max {
            let mut total = c(0.0, 0.0);
            let mut parts: Vec<usize> = vec![];
            compositions(n, &mut parts, &mut |comp: &[usize]| {
                let m = comp.len();
                let mut prod = p[comp[0] - 1].clone();
                for &k in &comp[1..] {
                    prod = prod.dot(&q[k - 1]);
                }
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                total += trace(&prod) * cr(sign / m as f64);
            });
            coeffs[n - 1] = total;
        }
        coeffs
    }

    /// Taylor coefficients by Cauchy integration of log psi on a circle
    /// where |psi - 1| < 1/2. Returns (radius, coefficients).
    pub fn taylor_cauchy(&self, n_max: usize, n_samples: usize) -> Result<(f64, Vec<C64>)> {
        let zero_free = 1.0
            / self
                .mono_eigs
                .iter()
                .map(|mu| mu.norm())
                .fold(1.0_f64, f64::max);
        let mut r = 0.5_f64.min(0.9 * zero_free);
        loop {
            if r < 0.05 {
                return Err(Error::RadiusTooSmall { r_min: 0.05 });
            }
            let mut ok = true;
            for i in 0..32 {
                let z = cr(r) * c(0.0, 2.0 * std::f64::consts::PI * i as f64 / 32.0).exp();
                if (self.psi(z)?.value - cr(1.0)).norm() >= 0.5 {
                    ok = false;
                    break;
                }
            }
            if ok {
                break;
            }
            r *= 0.7;
        }
        let mut coeffs = vec![c(0.0, 0.0); n_max];
        for i in 0..n_samples {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / n_samples as f64;
            let z = cr(r) * c(0.0, theta).exp();
            let lp = self.log_psi(z)?;
            for (nm1, coeff) in coeffs.iter_mut().enumerate() {
                let n = nm1 + 1;
                *coeff += lp * c(0.0, -(n as f64) * theta).exp();
            }
        }
        for (nm1, coeff) in coeffs.iter_mut().enumerate() {
            *coeff /= cr(n_samples as f64 * r.powi(nm1 as i32 + 1));
        }
        Ok((r, coeffs))
    }
}

fn compositions(n: usize, parts: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
    if n == 0 {
        visit(parts);
        return;
    }
    for first in 1..=n {
        parts.push(first);
        compositions(n - first, parts, visit);
        parts.pop();
    }
}

/// Taylor data of log psi.
#[derive(Debug, Clone, Serialize)]
pub struct TaylorCoeffs {
    pub coeffs: Vec<C64>,
    pub radius_hint: f64,
}

pub fn taylor_psi(eval: &DeterminantEvaluator, n_max: usize) -> Result<TaylorCoeffs> {
    if n_max == 0 || n_max > 8 {
        return Err(Error::InvalidInput("taylor order must be in 1..=8".into()));
    }
    let coeffs = eval.taylor_closed_form(n_max);
    let (radius_hint, _) = eval.taylor_cauchy(n_max, 64)?;
    Ok(TaylorCoeffs {
        coeffs,
        radius_hint,
    })
}

/// Full space-time matrix of V R0(lambda) in the Laplacian mode basis.
pub fn vr0_mode_matrix(v: &TimePeriodicPotential, lap: &Laplacian, lambda: C64) -> Result<CMat> {
    let diags = free_resolvent_mode_diagonals(lap, &v.grid, lambda)?;
    let s = lap.site_count();
    let m = v.grid.m;
    let w_blocks: Vec<CMat> = (0..m)
        .map(|k| lap.to_modes_diag(&v.values.row(k).to_owned()))
        .collect();
    let mut a = CMat::zeros((m * s, m * s));
    for k in 0..m {
        for l in 0..m {
            let d = &diags[k][l];
            for th in 0..s {
                for tp in 0..s {
                    a[[k * s + th, l * s + tp]] = w_blocks[k][[th, tp]] * d[tp];
                }
            }
        }
    }
    Ok(a)
}

/// Full space-time matrix of R0(lambda) in the mode basis (block entries are
/// diagonal).
pub fn r0_mode_matrix(lap: &Laplacian, grid: &TimeGrid, lambda: C64) -> Result<CMat> {
    let diags = free_resolvent_mode_diagonals(lap, grid, lambda)?;
    let s = lap.site_count();
    let m = grid.m;
    let mut k_mat = CMat::zeros((m * s, m * s));
    for k in 0..m {
        for l in 0..m {
            let d = &diags[k][l];
            for th in 0..s {
                k_mat[[k * s + th, l * s + th]] = d[th];
            }
        }
    }
    Ok(k_mat)
}

/// The symmetrized Birman-Schwinger matrix |V|^{1/2} R0 |V|^{1/2} e^{i arg V}
/// in the mode basis.
fn bs_mode_matrix(v: &TimePeriodicPotential, lap: &Laplacian, lambda: C64) -> Result<CMat> {
    let diags = free_resolvent_mode_diagonals(lap, &v.grid, lambda)?;
    let s = lap.site_count();
    let m = v.grid.m;
    let q_blocks: Vec<CMat> = (0..m)
        .map(|k| {
            let q = CVec::from_iter(v.values.row(k).iter().map(|z| cr(z.norm().sqrt())));
            lap.to_modes_diag(&q)
        })
        .collect();
    let vfac_blocks: Vec<CMat> = (0..m)
        .map(|k| {
            let vf = CVec::from_iter(v.values.row(k).iter().map(|z| {
                if z.norm() == 0.0 {
                    c(0.0, 0.0)
                } else {
                    cr(z.norm().sqrt()) * c(0.0, z.arg()).exp()
                }
            }));
            lap.to_modes_diag(&vf)
        })
        .collect();
    let mut a = CMat::zeros((m * s, m * s));
    for k in 0..m {
        for l in 0..m {
            let d = &diags[k][l];
            // q_k * diag(d) * vfac_l
            let scaled = &q_blocks[k] * &d.view().insert_axis(Axis(0));
            let block = scaled.dot(&vfac_blocks[l]);
            a.slice_mut(s![k * s..(k + 1) * s, l * s..(l + 1) * s])
                .assign(&block);
        }
    }
    Ok(a)
}

/// The determinant at lambda through a full space-time matrix, normalized by
/// the discrete Volterra factor so the continuum identity det[(I+F1)e^{-F1}]
/// = 1 holds on the grid as well.
pub fn d_of_lambda(
    v: &TimePeriodicPotential,
    lap: &Laplacian,
    lambda: C64,
    method: Det2Method,
) -> Result<Det2Value> {
    let a = match method {
        Det2Method::DirectVR0 => vr0_mode_matrix(v, lap, lambda)?,
        Det2Method::SymmetrizedBS => bs_mode_matrix(v, lap, lambda)?,
        other => {
            return Err(Error::InvalidInput(format!(
                "d_of_lambda expects a full-matrix method, got {:?}",
                other
            )))
        }
    };
    let tr = trace(&a);
    let log_det = log_det_i_plus(&a)?;
    let norm_log = volterra_log(v);
    Ok(det2_from_log(log_det - tr - norm_log, tr, norm_log, method))
}

/// Full-matrix oracle for psi: det2 of F(z) = F1 + gamma(z) F2 assembled as
/// a dense space-time matrix (mode basis), without Volterra normalization.
pub fn psi_full_matrix(v: &TimePeriodicPotential, lap: &Laplacian, z: C64) -> Result<Det2Value> {
    let s = lap.site_count();
    let m = v.grid.m;
    let w = v.grid.weight();
    let gammas = gamma_multipliers(lap, v.grid.tau, z)?;
    let conj = conjugated_potential(v, lap);
    let mut f = CMat::zeros((m * s, m * s));
    for k in 0..m {
        for l in 0..m {
            let step = if l < k {
                1.0
            } else if l == k {
                0.5
            } else {
                0.0
            };
            for th in 0..s {
                let weight = I * cr(w) * (cr(step) + gammas[th]);
                for tp in 0..s {
                    f[[k * s + th, l * s + tp]] = weight * conj.mode_blocks[l][[th, tp]];
                }
            }
        }
    }
    let tr = trace(&f);
    let log_det = log_det_i_plus(&f)?;
    Ok(det2_from_log(
        log_det - tr,
        tr,
        cr(0.0),
        Det2Method::RankReduced,
    ))
}

/// Quadrature-free evaluator of psi through the monodromy propagator:
/// psi(z) = det(I - z U(tau)) / det(I - z a) * exp(-Tr gamma(z) F2).
#[derive(Debug, Clone)]
pub struct PropagatorEvaluator {
    pub tau: f64,
    pub u_eigs: CVec,
    pub a_diag: CVec,
    pub m_theta: CVec,
}

impl PropagatorEvaluator {
    pub fn assemble(v: &TimePeriodicPotential, lap: &Laplacian, steps: usize) -> Result<Self> {
        let mon = crate::floquet::monodromy(v, lap, steps, crate::floquet::Integrator::Rk4)?;
        let (u_eigs, _) = mon.u_tau.eig().map_err(|e| Error::Linalg(e.to_string()))?;
        let a_diag = CVec::from_iter(
            lap.eigenvalues
                .iter()
                .map(|&e| c(0.0, -v.grid.tau * e).exp()),
        );
        let w = v.grid.weight();
        let mut m_theta = CVec::zeros(lap.site_count());
        for k in 0..v.grid.m {
            let wk = lap.to_modes_diag(&v.values.row(k).to_owned());
            for th in 0..lap.site_count() {
                m_theta[th] += cr(w) * wk[[th, th]];
            }
        }
        Ok(PropagatorEvaluator {
            tau: v.grid.tau,
            u_eigs,
            a_diag,
            m_theta,
        })
    }

    pub fn log_psi(&self, z: C64) -> Result<C64> {
        let min_gap = self
            .a_diag
            .iter()
            .map(|&a| (cr(1.0) - z * a).norm())
            .fold(f64::INFINITY, f64::min);
        if min_gap < crate::floquet::RESONANCE_THRESHOLD {
            return Err(Error::FloquetResonance {
                z,
                min_gap,
                threshold: crate::floquet::RESONANCE_THRESHOLD,
            });
        }
        let num: C64 = self.u_eigs.iter().map(|&mu| (cr(1.0) - z * mu).ln()).sum();
        let den: C64 = self.a_diag.iter().map(|&a| (cr(1.0) - z * a).ln()).sum();
        let mut tr_term = c(0.0, 0.0);
        for (th, &a) in self.a_diag.iter().enumerate() {
            tr_term += z * a / (cr(1.0) - z * a) * self.m_theta[th];
        }
        Ok(num - den - I * tr_term)
    }

    pub fn psi(&self, z: C64) -> Result<Det2Value> {
        let log_value = self.log_psi(z)?;
        Ok(det2_from_log(
            log_value,
            cr(0.0),
            cr(0.0),
            Det2Method::Propagator,
        ))
    }

    pub fn d_of_lambda(&self, lambda: C64) -> Result<Det2Value> {
        self.psi((I * cr(self.tau) * lambda).exp())
    }
}

/// Partial sum of the trace series for log D(lambda), with the geometric
/// tail bound in ||R0 V||_HS.
#[derive(Debug, Clone)]
pub struct LogSeriesResult {
    pub partial_sum: C64,
    pub terms: Vec<C64>,
    pub hs_norm: f64,
    pub tail_bound: f64,
}

pub fn log_trace_series(
    v: &TimePeriodicPotential,
    lap: &Laplacian,
    lambda: C64,
    n_max: usize,
) -> Result<LogSeriesResult> {
    if n_max < 2 {
        return Err(Error::InvalidInput("series order must be >= 2".into()));
    }
    let a = vr0_mode_matrix(v, lap, lambda)?;
    let hs = fro_norm(&a);
    if hs >= 0.9 {
        return Err(Error::SeriesDiverges { norm: hs });
    }
    let mut terms = Vec::with_capacity(n_max - 1);
    let mut partial = c(0.0, 0.0);
    let mut power = a.dot(&a);
    for n in 2..=n_max {
        let t_n = trace(&power);
        terms.push(t_n);
        let sign = if n % 2 == 0 { -1.0 } else { 1.0 };
        partial += t_n * cr(sign / n as f64);
        if n < n_max {
            power = power.dot(&a);
        }
    }
    let tail_bound = hs.powi(n_max as i32 + 1) / (1.0 - hs) / (n_max as f64 + 1.0);
    Ok(LogSeriesResult {
        partial_sum: partial,
        terms,
        hs_norm: hs,
        tail_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::floquet::{GeneratorParams, TimeGrid};
    use crate::lattice::{Boundary, LatticeBox};
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn rand_cmat(rng: &mut ChaCha12Rng, rows: usize, cols: usize, scale: f64) -> CMat {
        CMat::from_shape_fn((rows, cols), |_| {
            c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * cr(scale)
        })
    }

    fn scenario(
        d: usize,
        l: usize,
        m: usize,
        amp: f64,
        seed: u64,
    ) -> (TimePeriodicPotential, Laplacian) {
        let lat = LatticeBox::cube(d, l, Boundary::Periodic).unwrap();
        let lap = Laplacian::build(&lat);
        let grid = TimeGrid::new(1.0, m).unwrap();
        let v = TimePeriodicPotential::generate(
            lat,
            grid,
            &GeneratorParams {
                seed,
                amplitude: amp,
                localization_radius: 0.9,
                imaginary_fraction: 0.6,
            },
        );
        (v, lap)
    }

    #[test]
    fn det2_of_zero_is_one() {
        let z = CMat::zeros((5, 5));
        let d = det2(&z).unwrap();
        assert!((d.value - cr(1.0)).norm() < 1e-15);
    }

    #[test]
    fn det2_rank_one_closed_form() {
        // A = c e e^*: det2 = (1 + c) e^{-c}
        let n = 6;
        let coef = c(0.4, -0.9);
        let e_vec = CVec::from_elem(n, cr(1.0 / (n as f64).sqrt()));
        let mut a = CMat::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                a[[i, j]] = coef * e_vec[i] * e_vec[j].conj();
            }
        }
        let d = det2(&a).unwrap();
        let expect = (cr(1.0) + coef) * (-coef).exp();
        assert!((d.value - expect).norm() < 1e-13);
    }

    #[test]
    fn det2_hadamard_bound_on_random_matrices() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..100 {
            let a = rand_cmat(&mut rng, 12, 12, 0.8);
            let d = det2(&a).unwrap();
            let bound = (fro_norm(&a).powi(2) / 2.0).exp();
            assert!(d.value.norm() <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn det2_commutation_on_rectangular_factors() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..100 {
            let x = rand_cmat(&mut rng, 8, 5, 1.0);
            let y = rand_cmat(&mut rng, 5, 8, 1.0);
            let (_, rel) = det2_commutation_check(&x, &y).unwrap();
            assert!(rel <= 1e-10, "relative residual {rel}");
        }
    }

    #[test]
    fn lemma21_diagonal_pair_is_exact() {
        let a = CMat::from_diag(&CVec::from_shape_fn(6, |i| c(0.1 * i as f64, -0.05)));
        let b = CMat::from_diag(&CVec::from_shape_fn(6, |i| c(-0.07, 0.2 * i as f64)));
        let res = lemma21_identity_suite(&a, &b).unwrap();
        assert!(res.ab2 < 1e-12);
        assert!(res.ab4 < 1e-12);
    }

    #[test]
    fn lemma21_random_pairs() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..50 {
            let a = rand_cmat(&mut rng, 10, 10, 0.5);
            let b = rand_cmat(&mut rng, 10, 10, 0.5);
            let res = lemma21_identity_suite(&a, &b).unwrap();
            assert!(res.ab2 < 1e-8, "ab2 = {}", res.ab2);
            assert!(res.ab4 < 1e-8, "ab4 = {}", res.ab4);
        }
    }

    #[test]
    fn lemma21_b_zero_reduces_to_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let a = rand_cmat(&mut rng, 8, 8, 0.6);
        let b = CMat::zeros((8, 8));
        let res = lemma21_identity_suite(&a, &b).unwrap();
        assert!(res.ab2 < 1e-12 && res.ab4 < 1e-12);
    }

    #[test]
    fn psi_at_zero_is_one_and_zero_potential_gives_unit_psi() {
        let (v, lap) = scenario(1, 3, 16, 0.5, 5);
        let eval = DeterminantEvaluator::assemble(&v, &lap).unwrap();
        let at_zero = eval.psi(c(0.0, 0.0)).unwrap();
        assert!((at_zero.value - cr(1.0)).norm() < 1e-12);

        let lat = LatticeBox::cube(2, 2, Boundary::Periodic).unwrap();
        let lap2 = Laplacian::build(&lat);
        let zero = TimePeriodicPotential::zero(lat, TimeGrid::new(1.0, 16).unwrap());
        let ev0 = DeterminantEvaluator::assemble(&zero, &lap2).unwrap();
        for z in [c(0.3, 0.2), c(-0.5, 0.1), c(0.0, -0.8)] {
            assert!((ev0.psi(z).unwrap().value - cr(1.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn rank_reduced_equals_full_matrix_after_volterra_factor() {
        // the grid analogue of the factorization
        // det2(I+F) = det[(I+F1)e^{-F1}] det[(I + R1 gamma F2) e^{-gamma F2}]
        let (v, lap) = scenario(1, 2, 12, 0.7, 6);
        let eval = DeterminantEvaluator::assemble(&v, &lap).unwrap();
        for z in [c(0.4, 0.1), c(-0.2, 0.55), c(0.05, -0.6)] {
            let full = psi_full_matrix(&v, &lap, z).unwrap();
            let expect = eval.psi(z).unwrap().log_value + eval.volterra_log;
            assert!(
                (full.log_value - expect).norm() < 1e-10,
                "z={z}: {} vs {}",
                full.log_value,
                expect
            );
        }
    }

    #[test]
    fn d_of_lambda_routes_agree_and_match_rank_reduced() {
        let (v, lap) = scenario(1, 2, 12, 0.7, 8);
        let eval = DeterminantEvaluator::assemble(&v, &lap).unwrap();
        let lambda = c(0.8, 0.9);
        let direct = d_of_lambda(&v, &lap, lambda, Det2Method::DirectVR0).unwrap();
        let sym = d_of_lambda(&v, &lap, lambda, Det2Method::SymmetrizedBS).unwrap();
        let rr = eval.d_of_lambda(lambda).unwrap();
        assert!((direct.value - sym.value).norm() / direct.value.norm() < 1e-10);
        assert!((direct.value - rr.value).norm() / rr.value.norm() < 1e-9);
    }

    #[test]
    fn d_periodicity_in_omega() {
        let (v, lap) = scenario(1, 2, 16, 0.6, 9);
        let omega = v.grid.omega();
        for (re, im) in [(0.3, 0.7), (1.1, 1.4)] {
            let lambda = c(re, im);
            let d1 = d_of_lambda(&v, &lap, lambda, Det2Method::DirectVR0).unwrap();
            let d2 = d_of_lambda(&v, &lap, lambda + cr(omega), Det2Method::DirectVR0).unwrap();
            assert!((d1.value - d2.value).norm() < 1e-10);
        }
    }

    #[test]
    fn d_tends_to_one_on_imaginary_axis() {
        let (v, lap) = scenario(1, 3, 24, 0.6, 10);
        let eval = DeterminantEvaluator::assemble(&v, &lap).unwrap();
        let mut gaps = vec![];
        for nu in [5.0, 10.0, 20.0, 40.0] {
            let d = eval.d_of_lambda(c(0.0, nu)).unwrap();
            gaps.push((d.value - cr(1.0)).norm().max(1e-17));
        }
        for w in gaps.windows(2) {
            assert!(w[1] <= w[0]);
        }
        // fitted log-log slope far below -0.8 (the decay is exponential)
        let slope = (gaps[1].ln() - gaps[0].ln()) / (10.0_f64.ln() - 5.0_f64.ln());
        assert!(slope <= -0.8, "slope {slope}");
    }

    #[test]
    fn rank_reduced_converges_second_order_to_propagator_reference() {
        let lat = LatticeBox::cube(1, 3, Boundary::Periodic).unwrap();
        let lap = Laplacian::build(&lat);
        let lambda = c(0.9, 0.8);
        let mut gaps = vec![];
        for m in [16, 32, 64, 128] {
            let grid = TimeGrid::new(1.0, m).unwrap();
            let v = TimePeriodicPotential::generate(
                lat.clone(),
                grid,
                &GeneratorParams {
                    seed: 11,
                    amplitude: 0.5,
                    localization_radius: 0.9,
                    imaginary_fraction: 0.6,
                },
            );
            let eval = DeterminantEvaluator::assemble(&v, &lap).unwrap();
            let refer = PropagatorEvaluator::assemble(&v, &lap, 4096).unwrap();
            let psi_rr = eval.d_of_lambda(lambda).unwrap().value;
            let psi_ref = refer.d_of_lambda(lambda).unwrap().value;
            gaps.push((psi_rr - psi_ref).norm() / psi_ref.norm());
        }
        for w in gaps.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 1.6 && order < 2.4, "gaps {:?}", gaps);
        }
    }

    #[test]
    fn taylor_closed_form_matches_cauchy_on_two_site_toy() {
        let (v, lap) = scenario(1, 2, 32, 0.6, 12);
        let eval = DeterminantEvaluator::assemble(&v, &lap).unwrap();
        let closed = eval.taylor_closed_form(4);
        let (_, cauchy) = eval.taylor_cauchy(4, 512).unwrap();
        for n in 0..4 {
            let rel = (closed[n] - cauchy[n]).norm() / cauchy[n].norm().max(1e-12);
            assert!(
                rel < 1e-8,
                "psi_{}: closed {} cauchy {}",
                n + 1,
                closed[n],
                cauchy[n]
            );
        }
    }

    #[test]
    fn taylor_zero_potential_vanishes() {
        let lat = LatticeBox::cube(1, 2, Boundary::Periodic).unwrap();
        let lap = Laplacian::build(&lat);
        let zero = TimePeriodicPotential::zero(lat, TimeGrid::new(1.0, 16).unwrap());
        let eval = DeterminantEvaluator::assemble(&zero, &lap).unwrap();
        let coeffs = eval.taylor_closed_form(3);
        assert!(coeffs.iter().all(|z| z.norm() < 1e-13));
    }

    #[test]
    fn one_site_toy_matches_analytic_psi() {
        // Delta = 0, V = i beta:
        // psi(z) = (1 - z e^{beta tau})/(1 - z) * exp(beta tau z/(1-z))
        let lat = LatticeBox::cube(1, 1, Boundary::Periodic).unwrap();
        let lap = Laplacian::build(&lat);
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let beta = 0.8;
        let vals = Array2::from_elem((64, 1), c(0.0, beta));
        let v = TimePeriodicPotential::from_values(lat, grid, vals).unwrap();
        let eval = DeterminantEvaluator::assemble(&v, &lap).unwrap();
        let refer = PropagatorEvaluator::assemble(&v, &lap, 2048).unwrap();
        for z in [c(0.2, 0.1), c(-0.4, 0.3), c(0.1, -0.5)] {
            let analytic = (cr(1.0) - z * cr(beta.exp())) / (cr(1.0) - z)
                * (cr(beta) * z / (cr(1.0) - z)).exp();
            let got_ref = refer.psi(z).unwrap().value;
            assert!(
                (got_ref - analytic).norm() < 1e-8,
                "propagator {} vs analytic {}",
                got_ref,
                analytic
            );
            let got_rr = eval.psi(z).unwrap().value;
            assert!((got_rr - analytic).norm() < 2e-4, "rr {got_rr} vs {analytic}");
        }
        // the psi zero sits at z = e^{-beta tau}
        let zeros = eval.zeros_from_eigs(0.99);
        assert_eq!(zeros.len(), 1);
        assert!((zeros[0].0 - cr((-beta).exp())).norm() < 1e-4);
    }

    #[test]
    fn trace_series_matches_grid_determinant() {
        let (v, lap) = scenario(1, 2, 16, 0.35, 13);
        let lambda = c(0.5, 10.0);
        let series = log_trace_series(&v, &lap, lambda, 12).unwrap();
        // the series approximates the unnormalized grid determinant
        let d = d_of_lambda(&v, &lap, lambda, Det2Method::DirectVR0).unwrap();
        let raw_log = d.log_value + d.normalization_log;
        assert!(
            (series.partial_sum - raw_log).norm() <= series.tail_bound + 1e-12,
            "gap {} tail {}",
            (series.partial_sum - raw_log).norm(),
            series.tail_bound
        );
    }

    #[test]
    fn trace_series_zero_potential_and_divergence_guard() {
        let lat = LatticeBox::cube(1, 2, Boundary::Periodic).unwrap();
        let lap = Laplacian::build(&lat);
        let zero = TimePeriodicPotential::zero(lat, TimeGrid::new(1.0, 16).unwrap());
        let s = log_trace_series(&zero, &lap, c(0.0, 5.0), 6).unwrap();
        assert!(s.partial_sum.norm() < 1e-15);

        let (v, lap) = scenario(1, 2, 16, 3.0, 14);
        let err = log_trace_series(&v, &lap, c(0.5, 0.4), 6);
        assert!(matches!(err, Err(Error::SeriesDiverges { .. })));
    }

    #[test]
    fn trace_term_magnitudes_obey_hs_power_bound() {
        let (v, lap) = scenario(1, 3, 16, 0.4, 15);
        let nu = 2.0;
        let series = log_trace_series(&v, &lap, c(0.7, nu), 8).unwrap();
        let c_int = v.v22_squared();
        for (i, t) in series.terms.iter().enumerate() {
            let n = i + 2;
            let bound = (4.0 * c_int / nu).powf(n as f64 / 2.0);
            assert!(
                t.norm() <= bound * (1.0 + 1e-9),
                "n={n}: {} vs {bound}",
                t.norm()
            );
        }
    }
}
