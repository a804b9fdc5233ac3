//! Characteristic-grid solver for one transverse Fourier mode of the
//! renormalized linear equation
//! `4 ∂_{u'}∂_{v'} q = −(|ξ|² I + i ξ_y B_y(u') + i ξ_z B_z(u')) q`,
//! its closed form for `N = 1`, and the blow-up scan built on it.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bessel::{bessel_i0_scaled, Scaled, C64};
use crate::error::{Error, Result};
use crate::quad;
use crate::renormalize::TransverseCoefficients;

/// Nodes per local oscillation wavelength demanded in `v'`.
pub const MIN_NODES_PER_WAVELENGTH: f64 = 20.0;
/// Renormalize a column once its largest entry leaves `[1e-60, 1e60]`.
const RESCALE_HI: f64 = 1e60;
const RESCALE_LO: f64 = 1e-60;

/// `u' ∈ [u_min, 1]`, `v' ∈ [1, v_max]`; steps are adjusted so both ends are nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoursatGrid {
    pub u_min: f64,
    pub v_max: f64,
    n_u: usize,
    n_v: usize,
}

impl GoursatGrid {
    pub fn new(u_min: f64, h_u: f64, v_max: f64, h_v: f64) -> Result<Self> {
        let bad = |m: &str| Err(Error::Domain(m.to_string()));
        if !(h_u > 0.0 && h_v > 0.0) {
            return bad("grid steps must be positive");
        }
        if !(u_min < 1.0 && u_min >= -1.0 - crate::renormalize::PAD - 1e-12) {
            return bad("u_min must lie in [-1.05, 1)");
        }
        if !(v_max > 1.0) {
            return bad("v_max must exceed 1");
        }
        let n_u = ((1.0 - u_min) / h_u).round().max(1.0) as usize;
        let n_v = ((v_max - 1.0) / h_v).round().max(1.0) as usize;
        Ok(GoursatGrid { u_min, v_max, n_u, n_v })
    }

    /// Number of `u'` intervals.
    pub fn n_u(&self) -> usize {
        self.n_u
    }

    /// Number of `v'` intervals.
    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn h_u(&self) -> f64 {
        (1.0 - self.u_min) / self.n_u as f64
    }

    pub fn h_v(&self) -> f64 {
        (self.v_max - 1.0) / self.n_v as f64
    }

    #[inline]
    pub fn u(&self, i: usize) -> f64 {
        if i == self.n_u {
            1.0
        } else {
            self.u_min + i as f64 * self.h_u()
        }
    }

    #[inline]
    pub fn v(&self, j: usize) -> f64 {
        if j == self.n_v {
            self.v_max
        } else {
            1.0 + j as f64 * self.h_v()
        }
    }

    /// `t = (u' + v')/2` at the corner `(u_min, 1)`.
    pub fn t0(&self) -> f64 {
        0.5 * (self.u_min + 1.0)
    }
}

type EdgeFn = Arc<dyn Fn(f64) -> Vec<C64> + Send + Sync>;

/// Data on the two characteristics: `u' = u_min` (a function of `v'`) and
/// `v' = 1` (a function of `u'`). They must agree at the corner.
#[derive(Clone)]
pub struct BoundaryData {
    on_u_min: EdgeFn,
    on_v_one: EdgeFn,
}

impl BoundaryData {
    pub fn new<F, G>(on_u_min: F, on_v_one: G) -> Self
    where
        F: Fn(f64) -> Vec<C64> + Send + Sync + 'static,
        G: Fn(f64) -> Vec<C64> + Send + Sync + 'static,
    {
        BoundaryData {
            on_u_min: Arc::new(on_u_min),
            on_v_one: Arc::new(on_v_one),
        }
    }

    /// The same constant vector on both characteristics.
    pub fn constant(q0: Vec<C64>) -> Self {
        let a = q0.clone();
        Self::new(move |_| a.clone(), move |_| q0.clone())
    }

    /// `q = 1` on both characteristics (scalar).
    pub fn ones(n: usize) -> Self {
        Self::constant(vec![C64::new(1.0, 0.0); n])
    }

    pub fn on_u_min(&self, v: f64) -> Vec<C64> {
        (self.on_u_min)(v)
    }

    pub fn on_v_one(&self, u: f64) -> Vec<C64> {
        (self.on_v_one)(u)
    }
}

/// Transverse frequency `(ξ_y, ξ_z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frequency {
    pub y: f64,
    pub z: f64,
}

impl Frequency {
    pub fn new(y: f64, z: f64) -> Self {
        Frequency { y, z }
    }

    pub fn norm_sq(&self) -> f64 {
        self.y * self.y + self.z * self.z
    }
}

/// What the solver keeps besides the running column.
#[derive(Clone, Copy, Debug)]
pub struct ModeOptions {
    /// Keep every `stride_u`-th `u'` node ...
    pub sample_stride_u: usize,
    /// ... of every `stride_v`-th column. Zero disables sampling.
    pub sample_stride_v: usize,
    /// Keep the full row `u' = 1`.
    pub keep_last_row: bool,
    /// Keep every `t_stride`-th time bin of the sup profile.
    pub t_stride: usize,
    /// Accumulate the discrete energy ledger (meaningful for `B ≡ 0`).
    pub energy: bool,
    pub min_nodes_per_wavelength: f64,
}

impl Default for ModeOptions {
    fn default() -> Self {
        ModeOptions {
            sample_stride_u: 0,
            sample_stride_v: 0,
            keep_last_row: true,
            t_stride: 1,
            energy: false,
            min_nodes_per_wavelength: MIN_NODES_PER_WAVELENGTH,
        }
    }
}

/// A stored node value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSample {
    pub i: usize,
    pub j: usize,
    pub u: f64,
    pub v: f64,
    pub q: Vec<Scaled>,
}

/// A solved mode.
#[derive(Clone, Debug)]
pub struct TransverseMode {
    pub xi: Frequency,
    pub grid: GoursatGrid,
    pub n: usize,
    pub samples: Vec<ModeSample>,
    /// `q(1, v_j)` for every column, when kept.
    pub last_row: Vec<Vec<Scaled>>,
    /// `(t, log max_{u'} |q|)`.
    pub sup_profile: Vec<(f64, f64)>,
    /// `E(i)` per `u'` row; constant for `B ≡ 0` (see [`goursat_solve`]).
    pub energy: Option<Vec<f64>>,
    /// Wavelength and nodes per wavelength from the resolution check.
    pub wavelength: f64,
}

/// Sup over `u'` of `log|q|` on lines `t = (u' + v')/2 = const`, binned.
#[derive(Clone, Debug)]
pub struct TimeBins {
    t0: f64,
    dt: f64,
    stride: usize,
    equal_steps: bool,
    h_u: f64,
    h_v: f64,
    t_last_complete: f64,
    best: Vec<f64>,
}

impl TimeBins {
    pub fn new(grid: &GoursatGrid, stride: usize) -> Self {
        let (h_u, h_v) = (grid.h_u(), grid.h_v());
        let hb = h_u.min(h_v);
        let t_end = 0.5 * (1.0 + grid.v_max);
        let bins = (((t_end - grid.t0()) / (0.5 * hb)).ceil() as usize) + 2;
        TimeBins {
            t0: grid.t0(),
            dt: 0.5 * hb,
            stride: stride.max(1),
            equal_steps: ((h_u - h_v) / h_u).abs() < 1e-12,
            h_u,
            h_v,
            t_last_complete: 0.5 * (grid.u_min + grid.v_max),
            best: vec![f64::NEG_INFINITY; bins],
        }
    }

    #[inline]
    fn bin(&self, i: usize, j: usize) -> usize {
        if self.equal_steps {
            i + j
        } else {
            ((i as f64 * self.h_u + j as f64 * self.h_v) / (2.0 * self.dt)).round() as usize
        }
    }

    /// Rows of column `j` whose bin is kept.
    pub fn rows(&self, j: usize, n_rows: usize) -> Box<dyn Iterator<Item = usize> + '_> {
        if self.equal_steps {
            let s = self.stride;
            let first = (s - j % s) % s;
            Box::new((first..n_rows).step_by(s))
        } else {
            Box::new((0..n_rows).filter(move |&i| self.bin(i, j) % self.stride == 0))
        }
    }

    #[inline]
    pub fn record(&mut self, i: usize, j: usize, log_abs: f64) {
        let k = self.bin(i, j);
        if let Some(b) = self.best.get_mut(k) {
            if log_abs > *b {
                *b = log_abs;
            }
        }
    }

    /// Complete bins only: lines that cross the whole `u'` range.
    pub fn finish(&self) -> Vec<(f64, f64)> {
        self.best
            .iter()
            .enumerate()
            .filter(|(k, v)| k % self.stride == 0 && v.is_finite())
            .map(|(k, &v)| (self.t0 + k as f64 * self.dt, v))
            .filter(|&(t, _)| t <= self.t_last_complete + 1e-9)
            .collect()
    }
}

/// Largest `|S(u')|`, `S = ∫_{u_min}^{u'} −(|ξ|² + i ξ·B)/4`, bounding the
/// matrix case by operator norms.
fn max_phase_integral(coeffs: &dyn TransverseCoefficients, xi: Frequency, grid: &GoursatGrid) -> f64 {
    let n = coeffs.n();
    let h = grid.h_u();
    let (mut iy, mut iz, mut best) = (0.0, 0.0, 0.0_f64);
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..=grid.n_u() {
        let (by, bz) = coeffs.eval(grid.u(i));
        let (fy, fz) = if n == 1 {
            (by[(0, 0)], bz[(0, 0)])
        } else {
            (by.norm(), bz.norm())
        };
        if let Some((py, pz)) = prev {
            iy += 0.5 * h * (py + fy);
            iz += 0.5 * h * (pz + fz);
        }
        prev = Some((fy, fz));
        let re = xi.norm_sq() * (grid.u(i) - grid.u_min) / 4.0;
        let im = if n == 1 {
            (xi.y * iy + xi.z * iz) / 4.0
        } else {
            (xi.y.abs() * iy + xi.z.abs() * iz) / 4.0
        };
        best = best.max(re.hypot(im));
    }
    best
}

/// Per-`u'` cell propagators `R_i = (I − γC)^{-1}(I + γC)`, row-major.
fn cell_propagators(coeffs: &dyn TransverseCoefficients, xi: Frequency, grid: &GoursatGrid) -> Result<Vec<Vec<C64>>> {
    let n = coeffs.n();
    let gamma = grid.h_u() * grid.h_v() / 16.0;
    let eye = DMatrix::<C64>::identity(n, n);
    (0..grid.n_u())
        .map(|i| {
            let u_mid = grid.u_min + (i as f64 + 0.5) * grid.h_u();
            let (by, bz) = coeffs.eval(u_mid);
            let c = -(eye.clone() * C64::new(xi.norm_sq(), 0.0)
                + by.map(|x| C64::new(0.0, xi.y * x))
                + bz.map(|x| C64::new(0.0, xi.z * x)));
            let lhs = &eye - &c * C64::new(gamma, 0.0);
            let rhs = &eye + &c * C64::new(gamma, 0.0);
            let r = lhs
                .lu()
                .solve(&rhs)
                .ok_or(Error::Singular { u: u_mid })?;
            Ok((0..n * n).map(|k| r[(k / n, k % n)]).collect())
        })
        .collect()
}

fn column_max(col: &[C64], n: usize) -> f64 {
    col.chunks_exact(n)
        .map(|q| q.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .fold(0.0, f64::max)
        .sqrt()
}

fn scaled_vec(q: &[C64], log_scale: f64) -> Vec<Scaled> {
    q.iter().map(|&z| Scaled::from_scaled_complex(z, log_scale)).collect()
}

/// Second-order implicit box scheme on the characteristic grid: per cell,
/// `q_NE − q_N − q_E + q_SW = (h_u h_v/4)·C(u_mid)·(q_NE + q_N + q_E + q_SW)/4`,
/// solved as `q_NE = R(q_N + q_E) − q_SW`.
///
/// The march goes column by column in `v'`; each column carries its own log
/// scale so growth past `exp(709)` is representable. For `B ≡ 0` the scheme
/// conserves exactly
/// `E(i) = Σ_j |q_{i,j+1} − q_{i,j}|² − g Σ_{i'<i} (|q_{i'+1,0} + q_{i',0}|² − |q_{i'+1,J} + q_{i',J}|²)`
/// with `g = |ξ|² h_u h_v / 16`, which `options.energy` records.
pub fn goursat_solve(
    coeffs: &dyn TransverseCoefficients,
    xi: Frequency,
    data: &BoundaryData,
    grid: &GoursatGrid,
    options: &ModeOptions,
) -> Result<TransverseMode> {
    let n = coeffs.n();
    let (nu, nv) = (grid.n_u(), grid.n_v());
    let s_max = max_phase_integral(coeffs, xi, grid);
    let wavelength = if s_max > 0.0 {
        2.0 * std::f64::consts::PI.powi(2) / s_max
    } else {
        f64::INFINITY
    };
    let nodes = wavelength / grid.h_v();
    if nodes < options.min_nodes_per_wavelength {
        return Err(Error::Underresolved {
            wavelength,
            nodes,
            required: options.min_nodes_per_wavelength,
        });
    }
    let props = cell_propagators(coeffs, xi, grid)?;
    let scalar: Vec<C64> = if n == 1 { props.iter().map(|r| r[0]).collect() } else { vec![] };

    let check = |v: Vec<C64>, what: &str| -> Result<Vec<C64>> {
        if v.len() != n {
            return Err(Error::Domain(format!("{what} data has {} components, expected {n}", v.len())));
        }
        Ok(v)
    };
    let mut prev = Vec::with_capacity((nu + 1) * n);
    for i in 0..=nu {
        prev.extend(check(data.on_v_one(grid.u(i)), "v'=1 edge")?);
    }
    let mut cur = vec![C64::new(0.0, 0.0); (nu + 1) * n];
    let mut scale = 0.0_f64;
    let m0 = column_max(&prev, n);
    if m0 > 0.0 && !(RESCALE_LO..=RESCALE_HI).contains(&m0) {
        scale = m0.ln();
        prev.iter_mut().for_each(|z| *z /= m0);
    }

    let mut bins = TimeBins::new(grid, options.t_stride);
    let mut samples = Vec::new();
    let mut last_row = Vec::new();
    let sampling = options.sample_stride_u > 0 && options.sample_stride_v > 0;
    let mut energy_rows = options.energy.then(|| vec![0.0; nu + 1]);
    let first_column = prev.clone();
    let first_scale = scale;

    let mut record = |col: &[C64], j: usize, scale: f64, bins: &mut TimeBins| {
        for i in bins.rows(j, nu + 1).collect::<Vec<_>>() {
            let q = &col[i * n..(i + 1) * n];
            let nrm = q.iter().map(|z| z.norm_sqr()).sum::<f64>();
            bins.record(i, j, 0.5 * nrm.ln() + scale);
        }
        if sampling && j % options.sample_stride_v == 0 {
            for i in (0..=nu).step_by(options.sample_stride_u) {
                samples.push(ModeSample {
                    i,
                    j,
                    u: grid.u(i),
                    v: grid.v(j),
                    q: scaled_vec(&col[i * n..(i + 1) * n], scale),
                });
            }
        }
        if options.keep_last_row {
            last_row.push(scaled_vec(&col[nu * n..], scale));
        }
    };
    record(&prev, 0, scale, &mut bins);

    let mut buf = vec![C64::new(0.0, 0.0); n];
    for j in 0..nv {
        let v_next = grid.v(j + 1);
        let edge = check(data.on_u_min(v_next), "u'=u_min edge")?;
        let inv_scale = (-scale).exp();
        for (c, e) in cur[..n].iter_mut().zip(edge) {
            *c = e * inv_scale;
        }
        if n == 1 {
            let mut west = cur[0];
            for i in 0..nu {
                let ne = scalar[i] * (prev[i + 1] + west) - prev[i];
                cur[i + 1] = ne;
                west = ne;
            }
        } else {
            for i in 0..nu {
                let r = &props[i];
                for a in 0..n {
                    let mut acc = C64::new(0.0, 0.0);
                    for b in 0..n {
                        acc += r[a * n + b] * (prev[(i + 1) * n + b] + cur[i * n + b]);
                    }
                    buf[a] = acc - prev[i * n + a];
                }
                cur[(i + 1) * n..(i + 2) * n].copy_from_slice(&buf);
            }
        }
        if let Some(rows) = energy_rows.as_mut() {
            let w = (2.0 * scale).exp();
            for (i, e) in rows.iter_mut().enumerate() {
                let d: f64 = (0..n).map(|c| (cur[i * n + c] - prev[i * n + c]).norm_sqr()).sum();
                *e += w * d;
            }
        }
        let m = column_max(&cur, n);
        if !m.is_finite() {
            return Err(Error::NumericalBlowup { t: 0.5 * (1.0 + v_next) });
        }
        if m > 0.0 && !(RESCALE_LO..=RESCALE_HI).contains(&m) {
            scale += m.ln();
            cur.iter_mut().for_each(|z| *z /= m);
        }
        std::mem::swap(&mut prev, &mut cur);
        record(&prev, j + 1, scale, &mut bins);
    }

    let energy = energy_rows.map(|mut rows| {
        let g = xi.norm_sq() * grid.h_u() * grid.h_v() / 16.0;
        let w = (2.0 * scale).exp();
        let w0 = (2.0 * first_scale).exp();
        let mut flux = 0.0;
        for i in 0..=nu {
            rows[i] -= g * flux;
            if i < nu {
                let p0: f64 = (0..n)
                    .map(|c| (first_column[(i + 1) * n + c] + first_column[i * n + c]).norm_sqr())
                    .sum();
                let pj: f64 = (0..n).map(|c| (prev[(i + 1) * n + c] + prev[i * n + c]).norm_sqr()).sum();
                flux += w0 * p0 - w * pj;
            }
        }
        rows
    });

    Ok(TransverseMode {
        xi,
        grid: *grid,
        n,
        samples,
        last_row,
        sup_profile: bins.finish(),
        energy,
        wavelength,
    })
}

/// Solves independent modes in parallel on the current rayon pool.
pub fn solve_modes(
    coeffs: &dyn TransverseCoefficients,
    xis: &[Frequency],
    data: &BoundaryData,
    grid: &GoursatGrid,
    options: &ModeOptions,
) -> Vec<Result<TransverseMode>> {
    xis.par_iter().map(|&xi| goursat_solve(coeffs, xi, data, grid, options)).collect()
}

/// `(t, log sup_{u'} |q|)` of a solved mode.
pub fn sup_growth_profile(mode: &TransverseMode) -> Vec<(f64, f64)> {
    mode.sup_profile.clone()
}

/// Sup profile of a field given pointwise as `log|q(u', v')|` (synthetic use).
pub fn sup_growth_profile_of<F: Fn(f64, f64) -> f64>(grid: &GoursatGrid, t_stride: usize, log_abs: F) -> Vec<(f64, f64)> {
    let mut bins = TimeBins::new(grid, t_stride);
    for j in 0..=grid.n_v() {
        for i in bins.rows(j, grid.n_u() + 1).collect::<Vec<_>>() {
            bins.record(i, j, log_abs(grid.u(i), grid.v(j)));
        }
    }
    bins.finish()
}

/// `I_0(2√((v' − 1)S))` with `S = −(|ξ|²Δu + i(ξ_y ∫B_y + ξ_z ∫B_z))/4`,
/// given the integrals.
pub fn fundamental_solution(xi: Frequency, du: f64, int_by: f64, int_bz: f64, v: f64) -> Scaled {
    let s = C64::new(-xi.norm_sq() * du, -(xi.y * int_by + xi.z * int_bz)) / 4.0;
    let z = 2.0 * ((v - 1.0) * s).sqrt();
    bessel_i0_scaled(z)
}

/// Closed-form scalar mode with boundary data 1 through `(u_0, 1)`; the
/// coefficient integrals come from adaptive Gauss–Kronrod quadrature.
pub fn closed_form_scalar(coeffs: &dyn TransverseCoefficients, xi: Frequency, u0: f64, u: f64, v: f64) -> Result<Scaled> {
    if coeffs.n() != 1 {
        return Err(Error::Domain("closed form needs a scalar system".into()));
    }
    if u < u0 {
        return Err(Error::Domain(format!("u' = {u} precedes u_0 = {u0}")));
    }
    let iy = quad::integrate(|s| coeffs.eval(s).0[(0, 0)], u0, u, 1e-10);
    let iz = if xi.z != 0.0 {
        quad::integrate(|s| coeffs.eval(s).1[(0, 0)], u0, u, 1e-10)
    } else {
        0.0
    };
    Ok(fundamental_solution(xi, u - u0, iy, iz, v))
}

/// One row of a blow-up scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupEntry {
    pub delta: f64,
    pub t_blow: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupScan {
    pub entries: Vec<BlowupEntry>,
}

/// First time the real solution `φ = δ·Re(e^{iξ_y y} q)` reaches `−1` for
/// some `y`, i.e. `log δ + log sup|q| ≥ 0`, interpolated between time bins.
pub fn blowup_time(profile: &[(f64, f64)], delta: f64) -> Option<f64> {
    let ld = delta.ln();
    let (t_first, l_first) = *profile.first()?;
    if ld + l_first >= 0.0 {
        return Some(t_first);
    }
    profile.windows(2).find_map(|w| {
        let ((t0, l0), (t1, l1)) = (w[0], w[1]);
        (ld + l1 >= 0.0).then(|| {
            let a = (-ld - l0) / (l1 - l0);
            t0 + a.clamp(0.0, 1.0) * (t1 - t0)
        })
    })
}

/// Nirenberg blow-up scan for a scalar system: `φ = exp(−η) − 1` solves the
/// linear mode equation, so `η` blows up where `φ = −1`. Data of size `δ`
/// on both characteristics.
pub fn nirenberg_blowup_scan(
    coeffs: &dyn TransverseCoefficients,
    xi: Frequency,
    deltas: &[f64],
    grid: &GoursatGrid,
    options: &ModeOptions,
) -> Result<BlowupScan> {
    if coeffs.n() != 1 {
        return Err(Error::Domain("blow-up scan needs N = 1".into()));
    }
    if deltas.is_empty() || deltas.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::Domain("deltas must be positive".into()));
    }
    if deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Domain("deltas must be strictly decreasing".into()));
    }
    let opts = ModeOptions {
        keep_last_row: false,
        sample_stride_u: 0,
        sample_stride_v: 0,
        energy: false,
        ..*options
    };
    let mode = goursat_solve(coeffs, xi, &BoundaryData::ones(1), grid, &opts)?;
    Ok(BlowupScan {
        entries: deltas
            .iter()
            .map(|&delta| BlowupEntry {
                delta,
                t_blow: blowup_time(&mode.sup_profile, delta),
            })
            .collect(),
    })
}

impl TransverseMode {
    /// `u,v,component,log_abs,arg` for the stored samples.
    pub fn samples_csv(&self) -> String {
        let mut out = String::from("u,v,component,log_abs,arg\n");
        for s in &self.samples {
            for (c, q) in s.q.iter().enumerate() {
                out.push_str(&format!("{:.10},{:.10},{c},{:.17e},{:.17e}\n", s.u, s.v, q.log_abs, q.arg));
            }
        }
        out
    }

    /// `t,log_sup` per time bin.
    pub fn sup_csv(&self) -> String {
        let mut out = String::from("t,log_sup\n");
        for (t, l) in &self.sup_profile {
            out.push_str(&format!("{t:.10},{l:.17e}\n"));
        }
        out
    }

    /// Stored value at the `(i, j)` node, if it was sampled.
    pub fn sample_at(&self, i: usize, j: usize) -> Option<&ModeSample> {
        self.samples.iter().find(|s| s.i == i && s.j == j)
    }
}

/// `S·q` for every entry, used by conjugation checks.
pub fn transform_vec(s: &DMatrix<f64>, q: &[C64]) -> Vec<C64> {
    let v = DVector::from_iterator(q.len(), q.iter().copied());
    (s.map(|x| C64::new(x, 0.0)) * v).iter().copied().collect()
}
