//! Time discretization of the period circle, the space-time operators built
//! from a time-periodic potential, the free resolvent in grid and Fourier
//! representations, the Floquet (time-Fourier) matrix, and the monodromy
//! propagator.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{lp_norm, Boundary, LatticeBox, Laplacian};
use crate::linalg::{adjoint, c, cond_fro, cr, eye, CMat, CVec, C64, I};

/// Uniform quadrature grid on the period circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub tau: f64,
    pub m: usize,
}

impl TimeGrid {
    pub fn new(tau: f64, m: usize) -> Result<Self> {
        if tau <= 0.0 {
            return Err(Error::InvalidInput("tau must be positive".into()));
        }
        if m < 4 {
            return Err(Error::InvalidInput("need at least 4 time samples".into()));
        }
        Ok(TimeGrid { tau, m })
    }

    pub fn weight(&self) -> f64 {
        self.tau / self.m as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        self.tau * k as f64 / self.m as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.m).map(|k| self.node(k)).collect()
    }

    pub fn omega(&self) -> f64 {
        2.0 * PI / self.tau
    }
}

/// Complex multiplication potential sampled on the time grid.
///
/// The samples define the potential everywhere through trigonometric
/// interpolation, so the grid and Fourier pictures describe the same V.
#[derive(Debug, Clone)]
pub struct TimePeriodicPotential {
    pub lattice: LatticeBox,
    pub grid: TimeGrid,
    /// (time node, site)
    pub values: Array2<C64>,
    /// DFT coefficients, row j holding the frequency `freq(j)` mode
    fourier: Array2<C64>,
}

/// Deterministic pseudo-random potential parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub seed: u64,
    pub amplitude: f64,
    pub localization_radius: f64,
    /// 0 gives a purely real potential, 1 purely imaginary
    pub imaginary_fraction: f64,
}

impl TimePeriodicPotential {
    pub fn from_values(lattice: LatticeBox, grid: TimeGrid, values: Array2<C64>) -> Result<Self> {
        if values.nrows() != grid.m || values.ncols() != lattice.site_count() {
            return Err(Error::InvalidInput(format!(
                "potential samples must be {} x {}, got {} x {}",
                grid.m,
                lattice.site_count(),
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("potential samples must be finite".into()));
        }
        let fourier = dft_time(&values, &grid);
        Ok(TimePeriodicPotential {
            lattice,
            grid,
            values,
            fourier,
        })
    }

    pub fn zero(lattice: LatticeBox, grid: TimeGrid) -> Self {
        let values = Array2::zeros((grid.m, lattice.site_count()));
        let fourier = values.clone();
        TimePeriodicPotential {
            lattice,
            grid,
            values,
            fourier,
        }
    }

    /// Smooth localized random potential with two harmonics in time.
    pub fn generate(lattice: LatticeBox, grid: TimeGrid, params: &GeneratorParams) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(params.seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let s = lattice.site_count();
        let center: Vec<f64> = lattice
            .sides
            .iter()
            .map(|&l| (l as f64 - 1.0) / 2.0)
            .collect();
        let r2 = 2.0 * params.localization_radius * params.localization_radius;
        let omega = grid.omega();
        let f = params.imaginary_fraction;
        let mut values = Array2::zeros((grid.m, s));
        for x in 0..s {
            let env = (-lattice.dist_sq(x, &center) / r2).exp();
            // two real bandlimited fields per site
            let mut fields = [[0.0; 5]; 2];
            for field in fields.iter_mut() {
                for coef in field.iter_mut() {
                    *coef = normal.sample(&mut rng);
                }
            }
            let weights = [1.0, 0.5, 0.5, 0.25, 0.25];
            for k in 0..grid.m {
                let t = grid.node(k);
                let eval = |cs: &[f64; 5]| {
                    weights[0] * cs[0]
                        + weights[1] * cs[1] * (omega * t).cos()
                        + weights[2] * cs[2] * (omega * t).sin()
                        + weights[3] * cs[3] * (2.0 * omega * t).cos()
                        + weights[4] * cs[4] * (2.0 * omega * t).sin()
                };
                let re = (1.0 - f) * eval(&fields[0]);
                let im = f * eval(&fields[1]);
                values[[k, x]] = c(re, im) * cr(params.amplitude * env);
            }
        }
        Self::from_values(lattice, grid, values).expect("generated samples are well formed")
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|z| z.norm() == 0.0)
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|z| z.im == 0.0)
    }

    /// Signed frequency of DFT row j.
    fn freq(&self, j: usize) -> i64 {
        let m = self.grid.m as i64;
        let j = j as i64;
        if 2 * j < m {
            j
        } else {
            j - m
        }
    }

    /// Fourier coefficient vector for signed frequency `j` (zero outside the
    /// resolved band).
    pub fn fourier_mode(&self, j: i64) -> CVec {
        let m = self.grid.m as i64;
        if 2 * j >= m || 2 * j < -m {
            return CVec::zeros(self.lattice.site_count());
        }
        let row = j.rem_euclid(m) as usize;
        self.fourier.row(row).to_owned()
    }

    /// Largest |j| with a non-negligible Fourier mode, relative to the peak.
    pub fn bandwidth(&self, rel_tol: f64) -> i64 {
        let peak = self
            .fourier
            .iter()
            .fold(0.0_f64, |acc, z| acc.max(z.norm()));
        if peak == 0.0 {
            return 0;
        }
        let mut band = 0;
        for j in 0..self.grid.m {
            let mag = self.fourier.row(j).iter().fold(0.0_f64, |a, z| a.max(z.norm()));
            if mag > rel_tol * peak {
                band = band.max(self.freq(j).abs());
            }
        }
        band
    }

    /// Trigonometric interpolation between grid nodes.
    pub fn value_at(&self, t: f64) -> CVec {
        let omega = self.grid.omega();
        let mut out = CVec::zeros(self.lattice.site_count());
        for j in 0..self.grid.m {
            let f = self.freq(j) as f64;
            let phase = c(0.0, f * omega * t).exp();
            out = out + self.fourier.row(j).mapv(|z| z * phase);
        }
        out
    }

    /// Mixed norm ||V||_{p,r} = ( int_0^tau ||V(t)||_p^r dt )^{1/r}
    /// by the grid quadrature.
    pub fn mixed_norm(&self, p: f64, r: f64) -> f64 {
        let w = self.grid.weight();
        let total: f64 = (0..self.grid.m)
            .map(|k| lp_norm(&self.values.row(k).to_owned(), p).powf(r) * w)
            .sum();
        total.powf(1.0 / r)
    }

    /// ||V||_{2,2}^2 = int ||V(t)||_2^2 dt.
    pub fn v22_squared(&self) -> f64 {
        let w = self.grid.weight();
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * w
    }

    /// sup_t of the operator norm of Im V(t) (diagonal, so a max of entries).
    pub fn sup_im_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, z| m.max(z.im.abs()))
    }

    /// Serialize to the JSON interchange format.
    pub fn to_json(&self) -> String {
        let mut out = String::from("{\n");
        let _ = write!(
            out,
            "  \"d\": {},\n  \"sides\": {:?},\n  \"boundary\": \"{}\",\n  \"tau\": {:.17e},\n  \"m\": {},\n  \"rows\": [\n",
            self.lattice.d,
            self.lattice.sides,
            match self.lattice.boundary {
                Boundary::Periodic => "periodic",
                Boundary::Dirichlet => "dirichlet",
            },
            self.grid.tau,
            self.grid.m
        );
        let s = self.lattice.site_count();
        for k in 0..self.grid.m {
            for x in 0..s {
                let z = self.values[[k, x]];
                let sep = if k == self.grid.m - 1 && x == s - 1 { "" } else { "," };
                let _ = write!(out, "    [{}, {}, {:.17e}, {:.17e}]{}\n", k, x, z.re, z.im, sep);
            }
        }
        out.push_str("  ]\n}\n");
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let sides: Vec<String> = self.lattice.sides.iter().map(|l| l.to_string()).collect();
        let _ = write!(
            out,
            "# d={} sides={} boundary={} tau={:.17e} m={}\n",
            self.lattice.d,
            sides.join("x"),
            match self.lattice.boundary {
                Boundary::Periodic => "periodic",
                Boundary::Dirichlet => "dirichlet",
            },
            self.grid.tau,
            self.grid.m
        );
        out.push_str("k,site_index,re,im\n");
        for k in 0..self.grid.m {
            for x in 0..self.lattice.site_count() {
                let z = self.values[[k, x]];
                let _ = write!(out, "{},{},{:.17e},{:.17e}\n", k, x, z.re, z.im);
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut d = None;
        let mut sides: Vec<usize> = vec![];
        let mut boundary = Boundary::Periodic;
        let mut tau = None;
        let mut m = None;
        let mut rows: Vec<(usize, usize, f64, f64)> = vec![];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                for tok in rest.split_whitespace() {
                    let mut parts = tok.splitn(2, '=');
                    let key = parts.next().unwrap_or("");
                    let val = parts.next().unwrap_or("");
                    match key {
                        "d" => d = Some(parse_num::<usize>(val, lineno)?),
                        "sides" => {
                            sides = val
                                .split('x')
                                .map(|s| parse_num::<usize>(s, lineno))
                                .collect::<Result<_>>()?
                        }
                        "boundary" => {
                            boundary = match val {
                                "periodic" => Boundary::Periodic,
                                "dirichlet" => Boundary::Dirichlet,
                                other => {
                                    return Err(Error::InvalidInput(format!(
                                        "line {}: unknown boundary '{}'",
                                        lineno + 1,
                                        other
                                    )))
                                }
                            }
                        }
                        "tau" => tau = Some(parse_num::<f64>(val, lineno)?),
                        "m" => m = Some(parse_num::<usize>(val, lineno)?),
                        _ => {}
                    }
                }
                continue;
            }
            if line.starts_with('k') {
                continue; // column header
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 4 {
                return Err(Error::InvalidInput(format!(
                    "line {}: expected 4 columns, got {}",
                    lineno + 1,
                    cols.len()
                )));
            }
            rows.push((
                parse_num(cols[0], lineno)?,
                parse_num(cols[1], lineno)?,
                parse_num(cols[2], lineno)?,
                parse_num(cols[3], lineno)?,
            ));
        }
        let d = d.ok_or_else(|| Error::InvalidInput("missing d in header".into()))?;
        let tau = tau.ok_or_else(|| Error::InvalidInput("missing tau in header".into()))?;
        let m = m.ok_or_else(|| Error::InvalidInput("missing m in header".into()))?;
        let lattice = LatticeBox::new(d, sides, boundary)?;
        let grid = TimeGrid::new(tau, m)?;
        let s = lattice.site_count();
        let mut values = Array2::zeros((m, s));
        for (k, x, re, im) in rows {
            if k >= m || x >= s {
                return Err(Error::InvalidInput(format!(
                    "row index ({}, {}) out of range",
                    k, x
                )));
            }
            values[[k, x]] = c(re, im);
        }
        Self::from_values(lattice, grid, values)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv(&text)
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, lineno: usize) -> Result<T> {
    s.parse::<T>()
        .map_err(|_| Error::InvalidInput(format!("line {}: cannot parse '{}'", lineno + 1, s)))
}

fn dft_time(values: &Array2<C64>, grid: &TimeGrid) -> Array2<C64> {
    let m = grid.m;
    let s = values.ncols();
    let mut out: Array2<C64> = Array2::zeros((m, s));
    for j in 0..m {
        for k in 0..m {
            let phase = c(0.0, -2.0 * PI * (j as f64) * (k as f64) / m as f64).exp();
            for x in 0..s {
                out[[j, x]] += values[[k, x]] * phase;
            }
        }
    }
    out.mapv(|z| z / cr(m as f64))
}

/// J1: i int_0^t, as the strictly-lower-triangular quadrature matrix with a
/// half-weight diagonal (the grid resolution of the kernel jump).
pub fn op_j1(grid: &TimeGrid) -> CMat {
    let m = grid.m;
    let w = grid.weight();
    let mut j1 = CMat::zeros((m, m));
    for k in 0..m {
        for l in 0..k {
            j1[[k, l]] = I * cr(w);
        }
        j1[[k, k]] = I * cr(w / 2.0);
    }
    j1
}

/// J2: i int_0^tau, every row carrying the full-period weights.
pub fn op_j2(grid: &TimeGrid) -> CMat {
    let m = grid.m;
    let w = grid.weight();
    CMat::from_elem((m, m), I * cr(w))
}

/// The conjugated potential blocks e^{i t_k Delta} V(t_k) e^{-i t_k Delta},
/// stored both in the site basis and in the Laplacian mode basis.
#[derive(Debug, Clone)]
pub struct ConjugatedPotential {
    /// site-basis blocks
    pub blocks: Vec<CMat>,
    /// mode-basis blocks: phases * (Q* V_k Q)
    pub mode_blocks: Vec<CMat>,
}

pub fn conjugated_potential(v: &TimePeriodicPotential, lap: &Laplacian) -> ConjugatedPotential {
    let s = lap.site_count();
    let m = v.grid.m;
    let mut blocks = Vec::with_capacity(m);
    let mut mode_blocks = Vec::with_capacity(m);
    for k in 0..m {
        let t = v.grid.node(k);
        let w = lap.to_modes_diag(&v.values.row(k).to_owned());
        let mut wm = CMat::zeros((s, s));
        for a in 0..s {
            for b in 0..s {
                let phase = c(0.0, t * (lap.eigenvalues[a] - lap.eigenvalues[b])).exp();
                wm[[a, b]] = phase * w[[a, b]];
            }
        }
        let site = lap.modes.dot(&wm).dot(&adjoint(&lap.modes));
        blocks.push(site);
        mode_blocks.push(wm);
    }
    ConjugatedPotential { blocks, mode_blocks }
}

/// Representation tag for dense space-time operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Repr {
    TimeGrid,
    TimeFourier(usize),
}

/// Dense operator on the tensor space (time representation x lattice sites).
#[derive(Debug, Clone)]
pub struct SpaceTimeOperator {
    pub lattice: LatticeBox,
    pub grid: TimeGrid,
    pub repr: Repr,
    pub entries: CMat,
}

impl SpaceTimeOperator {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }
}

pub const RESONANCE_THRESHOLD: f64 = 1e-8;
pub const SINGULAR_F1_COND: f64 = 1e12;

/// F1 = J1 Vtilde and F2 = J2 Vtilde as full space-time matrices
/// (site basis).
pub fn build_f1_f2(
    v: &TimePeriodicPotential,
    lap: &Laplacian,
) -> Result<(SpaceTimeOperator, SpaceTimeOperator)> {
    let conj = conjugated_potential(v, lap);
    build_f1_f2_from_blocks(v, &conj.blocks)
}

fn build_f1_f2_from_blocks(
    v: &TimePeriodicPotential,
    blocks: &[CMat],
) -> Result<(SpaceTimeOperator, SpaceTimeOperator)> {
    let m = v.grid.m;
    let s = v.lattice.site_count();
    let w = v.grid.weight();
    let n = m * s;
    let mut f1 = CMat::zeros((n, n));
    let mut f2 = CMat::zeros((n, n));
    for k in 0..m {
        for l in 0..m {
            let weight1 = if l < k {
                1.0
            } else if l == k {
                0.5
            } else {
                0.0
            };
            for a in 0..s {
                for b in 0..s {
                    let val = I * cr(w) * blocks[l][[a, b]];
                    f2[[k * s + a, l * s + b]] = val;
                    if weight1 > 0.0 {
                        f1[[k * s + a, l * s + b]] = val * cr(weight1);
                    }
                }
            }
        }
    }
    let cond = cond_fro(&(&eye(n) + &f1));
    if !cond.is_finite() || cond > SINGULAR_F1_COND {
        return Err(Error::SingularF1 { cond });
    }
    let mk = |entries| SpaceTimeOperator {
        lattice: v.lattice.clone(),
        grid: v.grid.clone(),
        repr: Repr::TimeGrid,
        entries,
    };
    Ok((mk(f1), mk(f2)))
}

/// The gamma multipliers z a_theta / (1 - z a_theta) with the resonance
/// guard |1 - z a_theta| >= threshold.
pub fn gamma_multipliers(lap: &Laplacian, tau: f64, z: C64) -> Result<CVec> {
    let mut min_gap = f64::INFINITY;
    let gammas = CVec::from_iter(lap.eigenvalues.iter().map(|&e| {
        let a = c(0.0, -tau * e).exp();
        let denom = cr(1.0) - z * a;
        min_gap = min_gap.min(denom.norm());
        z * a / denom
    }));
    if min_gap < RESONANCE_THRESHOLD {
        return Err(Error::FloquetResonance {
            z,
            min_gap,
            threshold: RESONANCE_THRESHOLD,
        });
    }
    Ok(gammas)
}

/// Free-resolvent kernel blocks in the Laplacian mode basis:
/// block (k, l) is diagonal with entries
/// i w e^{i (t_k - t_l)(lambda - e)} (1_{k>l} + 1/2 1_{k=l} + gamma(e)).
pub fn free_resolvent_mode_diagonals(
    lap: &Laplacian,
    grid: &TimeGrid,
    lambda: C64,
) -> Result<Vec<Vec<CVec>>> {
    let z = (I * cr(grid.tau) * lambda).exp();
    let gammas = gamma_multipliers(lap, grid.tau, z)?;
    let m = grid.m;
    let w = grid.weight();
    let mut blocks = Vec::with_capacity(m);
    for k in 0..m {
        let mut row = Vec::with_capacity(m);
        for l in 0..m {
            let dt = grid.node(k) - grid.node(l);
            let step = if k > l {
                1.0
            } else if k == l {
                0.5
            } else {
                0.0
            };
            let diag = CVec::from_iter(lap.eigenvalues.iter().zip(gammas.iter()).map(|(&e, &g)| {
                I * cr(w) * (I * cr(dt) * (lambda - cr(e))).exp() * (cr(step) + g)
            }));
            row.push(diag);
        }
        blocks.push(row);
    }
    Ok(blocks)
}

/// Free resolvent R0(lambda) as a full site-basis space-time matrix.
pub fn free_resolvent_grid(
    lap: &Laplacian,
    grid: &TimeGrid,
    lambda: C64,
) -> Result<SpaceTimeOperator> {
    let diags = free_resolvent_mode_diagonals(lap, grid, lambda)?;
    let s = lap.site_count();
    let m = grid.m;
    let n = m * s;
    let qh = adjoint(&lap.modes);
    let mut entries = CMat::zeros((n, n));
    for k in 0..m {
        for l in 0..m {
            let diag = &diags[k][l];
            let scaled = &lap.modes * &diag.view().insert_axis(Axis(0));
            let block = scaled.dot(&qh);
            entries
                .slice_mut(s![k * s..(k + 1) * s, l * s..(l + 1) * s])
                .assign(&block);
        }
    }
    Ok(SpaceTimeOperator {
        lattice: lap.lattice.clone(),
        grid: grid.clone(),
        repr: Repr::TimeGrid,
        entries,
    })
}

/// Free resolvent in the time-Fourier representation: block-diagonal with
/// blocks (omega n + Delta - lambda)^{-1}, n = -n_t ..= n_t.
pub fn free_resolvent_fourier(
    lap: &Laplacian,
    grid: &TimeGrid,
    lambda: C64,
    n_t: usize,
) -> Result<SpaceTimeOperator> {
    let omega = grid.omega();
    let s = lap.site_count();
    let modes = 2 * n_t + 1;
    let mut entries = CMat::zeros((modes * s, modes * s));
    for (bi, n) in (-(n_t as i64)..=n_t as i64).enumerate() {
        let shifted = lambda - cr(omega * n as f64);
        let dist = lap.spectral_dist(shifted);
        if dist < RESONANCE_THRESHOLD {
            return Err(Error::SpectrumCollision {
                lambda,
                dist,
                threshold: RESONANCE_THRESHOLD,
            });
        }
        let block = lap.apply_function(|e| cr(1.0) / (cr(e + omega * n as f64) - lambda));
        entries
            .slice_mut(s![bi * s..(bi + 1) * s, bi * s..(bi + 1) * s])
            .assign(&block);
    }
    Ok(SpaceTimeOperator {
        lattice: lap.lattice.clone(),
        grid: grid.clone(),
        repr: Repr::TimeFourier(n_t),
        entries,
    })
}

/// Convert a time-grid operator to the time-Fourier representation,
/// keeping modes |n| <= n_t.
pub fn to_fourier(op: &SpaceTimeOperator, n_t: usize) -> SpaceTimeOperator {
    assert_eq!(op.repr, Repr::TimeGrid);
    let m = op.grid.m;
    let s = op.lattice.site_count();
    assert!(2 * n_t + 1 <= m, "window exceeds available grid modes");
    let modes = 2 * n_t + 1;
    // rows of the unitary DFT restricted to the window
    let mut f = CMat::zeros((modes * s, m * s));
    for (bi, n) in (-(n_t as i64)..=n_t as i64).enumerate() {
        for k in 0..m {
            let phase = c(0.0, -2.0 * PI * (n as f64) * (k as f64) / m as f64).exp()
                / cr((m as f64).sqrt());
            for a in 0..s {
                f[[bi * s + a, k * s + a]] = phase;
            }
        }
    }
    let converted = f.dot(&op.entries).dot(&adjoint(&f));
    SpaceTimeOperator {
        lattice: op.lattice.clone(),
        grid: op.grid.clone(),
        repr: Repr::TimeFourier(n_t),
        entries: converted,
    }
}

/// The truncated Floquet matrix: diagonal blocks omega n + Delta,
/// off-diagonal blocks the potential Fourier modes V_{n-m}.
pub fn build_floquet_matrix(
    v: &TimePeriodicPotential,
    lap: &Laplacian,
    n_t: usize,
) -> SpaceTimeOperator {
    let omega = v.grid.omega();
    let s = lap.site_count();
    let modes = 2 * n_t + 1;
    let mut entries = CMat::zeros((modes * s, modes * s));
    for (bi, n) in (-(n_t as i64)..=n_t as i64).enumerate() {
        for (bj, mm) in (-(n_t as i64)..=n_t as i64).enumerate() {
            if bi == bj {
                let mut block = lap.matrix.clone();
                for a in 0..s {
                    block[[a, a]] += cr(omega * n as f64);
                }
                block = block + CMat::from_diag(&v.fourier_mode(0));
                entries
                    .slice_mut(s![bi * s..(bi + 1) * s, bj * s..(bj + 1) * s])
                    .assign(&block);
            } else {
                let mode = v.fourier_mode(n - mm);
                for a in 0..s {
                    entries[[bi * s + a, bj * s + a]] = mode[a];
                }
            }
        }
    }
    SpaceTimeOperator {
        lattice: lap.lattice.clone(),
        grid: v.grid.clone(),
        repr: Repr::TimeFourier(n_t),
        entries,
    }
}

/// Pick a Fourier cutoff so that modes beyond it are below `rel_tol` of the
/// strongest mode (at least 1, at most m/2 - 1).
pub fn default_fourier_cutoff(v: &TimePeriodicPotential, rel_tol: f64, floor: usize) -> usize {
    let band = v.bandwidth(rel_tol) as usize;
    (band + floor).min(v.grid.m / 2 - 1).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Integrator {
    Rk4,
    Magnus2,
}

/// Propagator over one period of the driven Schrodinger equation.
#[derive(Debug, Clone)]
pub struct MonodromyResult {
    pub u_tau: CMat,
    pub integrator: Integrator,
    pub steps: usize,
}

/// Time-ordered propagator U(tau) of u' = -i (Delta + V(t)) u.
pub fn monodromy(
    v: &TimePeriodicPotential,
    lap: &Laplacian,
    steps: usize,
    integrator: Integrator,
) -> Result<MonodromyResult> {
    if steps < 16 {
        return Err(Error::InvalidInput("need at least 16 integrator steps".into()));
    }
    let s = lap.site_count();
    let h = v.grid.tau / steps as f64;
    let mut u = eye(s);
    let rhs = |t: f64, state: &CMat| -> CMat {
        let mut out = lap.matrix.dot(state);
        let vt = v.value_at(t);
        for a in 0..s {
            let row_scale = vt[a];
            for b in 0..s {
                out[[a, b]] += row_scale * state[[a, b]];
            }
        }
        out.mapv(|z| -I * z)
    };
    match integrator {
        Integrator::Rk4 => {
            for step in 0..steps {
                let t = step as f64 * h;
                let k1 = rhs(t, &u);
                let k2 = rhs(t + h / 2.0, &(&u + &k1.mapv(|z| z * cr(h / 2.0))));
                let k3 = rhs(t + h / 2.0, &(&u + &k2.mapv(|z| z * cr(h / 2.0))));
                let k4 = rhs(t + h, &(&u + &k3.mapv(|z| z * cr(h))));
                u = &u
                    + &(k1 + k2.mapv(|z| z * cr(2.0)) + k3.mapv(|z| z * cr(2.0)) + k4)
                        .mapv(|z| z * cr(h / 6.0));
            }
        }
        Integrator::Magnus2 => {
            for step in 0..steps {
                let t = step as f64 * h;
                let vt = v.value_at(t + h / 2.0);
                let mut gen = lap.matrix.clone();
                for a in 0..s {
                    gen[[a, a]] += vt[a];
                }
                let stepper = crate::linalg::expm(&gen.mapv(|z| -I * cr(h) * z));
                u = stepper.dot(&u);
            }
        }
    }
    Ok(MonodromyResult {
        u_tau: u,
        integrator,
        steps,
    })
}

/// The multiplication operator diag blocks of V in the mode basis,
/// i.e. W_k = Q* V(t_k) Q.
pub fn potential_mode_blocks(v: &TimePeriodicPotential, lap: &Laplacian) -> Vec<CMat> {
    (0..v.grid.m)
        .map(|k| lap.to_modes_diag(&v.values.row(k).to_owned()))
        .collect()
}
