//! The renormalizing matrix family `A(u)`, the transformed transverse
//! coefficients `B_y(u)`, `B_z(u)`, Condition 2 and the growth rate `K`.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nullform::{CouplingTensors, SemilinearSystem};
use crate::profiles::WaveProfile;
use crate::quad;

pub type C64 = Complex<f64>;

/// Grid padding beyond `[−1, 1]`.
pub const PAD: f64 = 0.05;
/// Largest accepted local error estimate of one RK4 step.
pub const STEP_TOL: f64 = 1e-8;
/// Threshold below which a real part counts as zero in Condition 2.
pub const CONDITION_TWO_TOL: f64 = 1e-8;
const EIGEN_MAX_SWEEPS: usize = 1000;

/// Uniform grid `u_k = (k − K/2)·h`, `k = 0..=K`, covering `[−1−pad, 1+pad]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UGrid {
    pub h: f64,
    pub half_nodes: usize,
}

impl UGrid {
    pub fn covering(h: f64, pad: f64) -> Self {
        assert!(h > 0.0);
        let half = ((1.0 + pad) / h - 1e-9).ceil() as usize;
        UGrid { h, half_nodes: half }
    }

    pub fn len(&self) -> usize {
        2 * self.half_nodes + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn node(&self, k: usize) -> f64 {
        (k as f64 - self.half_nodes as f64) * self.h
    }

    pub fn first(&self) -> f64 {
        self.node(0)
    }

    pub fn last(&self) -> f64 {
        self.node(self.len() - 1)
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.node(k))
    }
}

/// `A(u)` and `A(u)^{-1}` on a grid, with `A ≡ I` for `u ≥ 1`.
#[derive(Clone, Debug)]
pub struct Renormalizer {
    grid: UGrid,
    a: Vec<DMatrix<f64>>,
    a_inv: Vec<DMatrix<f64>>,
    generator: Vec<DMatrix<f64>>,
    det: Vec<f64>,
    max_step_error: f64,
}

fn rk4_step<G: Fn(f64) -> DMatrix<f64>>(gen: &G, u: f64, a: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    // A' = −½ A C(u)
    let f = |u: f64, a: &DMatrix<f64>| -0.5 * a * gen(u);
    let k1 = f(u, a);
    let k2 = f(u + 0.5 * h, &(a + &k1 * (0.5 * h)));
    let k3 = f(u + 0.5 * h, &(a + &k2 * (0.5 * h)));
    let k4 = f(u + h, &(a + &k3 * h));
    a + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

impl Renormalizer {
    /// Integrates `A' = −½·A·C(u)` from the right end of the grid leftwards
    /// with classical RK4, starting from `A = I`. `generator(u)` must vanish
    /// for `u ≥ 1`. Each step is checked against two half steps.
    pub fn from_generator<G>(n: usize, h: f64, generator: G) -> Result<Self>
    where
        G: Fn(f64) -> DMatrix<f64>,
    {
        if !(h > 0.0 && h <= 1e-2) {
            return Err(Error::Domain(format!("renormalizer step h = {h} must lie in (0, 0.01]")));
        }
        let grid = UGrid::covering(h, PAD);
        let len = grid.len();
        let mut a = vec![DMatrix::identity(n, n); len];
        let mut worst = 0.0_f64;
        for k in (0..len - 1).rev() {
            let u = grid.node(k + 1);
            let full = rk4_step(&generator, u, &a[k + 1], -h);
            let half = rk4_step(&generator, u, &a[k + 1], -0.5 * h);
            let half = rk4_step(&generator, u - 0.5 * h, &half, -0.5 * h);
            let estimate = max_abs(&(&full - &half)) / 15.0;
            worst = worst.max(estimate);
            if !(estimate <= STEP_TOL) {
                return Err(Error::StepRejected { u, estimate });
            }
            a[k] = half;
        }
        let mut a_inv = Vec::with_capacity(len);
        let mut det = Vec::with_capacity(len);
        for (k, m) in a.iter().enumerate() {
            let lu = m.clone().lu();
            let d = lu.determinant();
            let inv = lu.try_inverse().ok_or(Error::Singular { u: grid.node(k) })?;
            det.push(d);
            a_inv.push(inv);
        }
        let generator = grid.nodes().map(&generator).collect();
        Ok(Renormalizer {
            grid,
            a,
            a_inv,
            generator,
            det,
            max_step_error: worst,
        })
    }

    pub fn n(&self) -> usize {
        self.a[0].nrows()
    }

    pub fn grid(&self) -> UGrid {
        self.grid
    }

    pub fn a_node(&self, k: usize) -> &DMatrix<f64> {
        &self.a[k]
    }

    pub fn a_inv_node(&self, k: usize) -> &DMatrix<f64> {
        &self.a_inv[k]
    }

    /// `C(u_k) = (a·f')(u_k)`.
    pub fn generator_node(&self, k: usize) -> &DMatrix<f64> {
        &self.generator[k]
    }

    pub fn det_node(&self, k: usize) -> f64 {
        self.det[k]
    }

    /// Largest step-doubling error estimate met during integration.
    pub fn max_step_error(&self) -> f64 {
        self.max_step_error
    }

    fn locate(&self, u: f64) -> Option<(usize, f64)> {
        let s = (u - self.grid.first()) / self.grid.h;
        if s <= 0.0 || s >= (self.grid.len() - 1) as f64 {
            return None;
        }
        let k = s.floor() as usize;
        Some((k, s - k as f64))
    }

    /// `A(u)` by cubic Hermite interpolation using `A' = −½AC` at the nodes.
    /// Constant beyond the grid ends.
    pub fn a_at(&self, u: f64) -> DMatrix<f64> {
        match self.locate(u) {
            None if u <= self.grid.first() => self.a[0].clone(),
            None => self.a[self.grid.len() - 1].clone(),
            Some((k, t)) => {
                let h = self.grid.h;
                let d0 = -0.5 * &self.a[k] * &self.generator[k];
                let d1 = -0.5 * &self.a[k + 1] * &self.generator[k + 1];
                let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
                let h10 = t * (1.0 - t) * (1.0 - t);
                let h01 = t * t * (3.0 - 2.0 * t);
                let h11 = t * t * (t - 1.0);
                &self.a[k] * h00 + d0 * (h10 * h) + &self.a[k + 1] * h01 + d1 * (h11 * h)
            }
        }
    }

    /// `A'(u) = −½·A(u)·C(u)` with `C` supplied by the caller at `u`.
    pub fn a_prime_at(&self, u: f64, generator_at_u: &DMatrix<f64>) -> DMatrix<f64> {
        -0.5 * self.a_at(u) * generator_at_u
    }

    /// Largest `|det A(u_k) − exp(½∫_{u_k}^{∞} tr C)|` over the nodes, with the
    /// trace integral supplied by `trace_integral(u)`.
    pub fn liouville_defect<F: Fn(f64) -> f64>(&self, trace_integral: F) -> f64 {
        (0..self.grid.len())
            .map(|k| (self.det[k] - (0.5 * trace_integral(self.grid.node(k))).exp()).abs())
            .fold(0.0, f64::max)
    }

    /// Largest `‖A·A^{-1} − I‖_max` over the nodes.
    pub fn inverse_defect(&self) -> f64 {
        let n = self.n();
        self.a
            .iter()
            .zip(&self.a_inv)
            .map(|(a, ai)| max_abs(&(a * ai - DMatrix::<f64>::identity(n, n))))
            .fold(0.0, f64::max)
    }
}

/// Solves for `A(u)` with generator `C(u) = a·f'(u)`.
pub fn solve_renormalizer(system: &SemilinearSystem, profile: &WaveProfile, h: f64) -> Result<Renormalizer> {
    if system.n() != profile.n() {
        return Err(Error::InvalidProfile(format!(
            "profile has {} components but the system has {}",
            profile.n(),
            system.n()
        )));
    }
    let couplings = system.coupling_tensors();
    Renormalizer::from_generator(system.n(), h, |u| couplings.a_dot(&profile.eval(u, 1)))
}

/// Transverse first-order coefficients as functions of `u' = t − x`.
pub trait TransverseCoefficients: Sync {
    fn n(&self) -> usize;
    /// `(B_y(u), B_z(u))`.
    fn eval(&self, u: f64) -> (DMatrix<f64>, DMatrix<f64>);
}

/// `B_y`, `B_z` tabulated on a [`UGrid`].
#[derive(Clone, Debug)]
pub struct LinearizedCoefficients {
    grid: UGrid,
    n: usize,
    by: Vec<DMatrix<f64>>,
    bz: Vec<DMatrix<f64>>,
    zero_outside: bool,
}

impl LinearizedCoefficients {
    /// Tabulates an arbitrary coefficient function (synthetic tests).
    pub fn from_fn<F>(n: usize, h: f64, f: F) -> Self
    where
        F: Fn(f64) -> (DMatrix<f64>, DMatrix<f64>),
    {
        let grid = UGrid::covering(h, PAD);
        let (by, bz) = grid.nodes().map(f).unzip();
        LinearizedCoefficients {
            grid,
            n,
            by,
            bz,
            zero_outside: false,
        }
    }

    /// Scalar `B_y = b(u)`, `B_z = 0`.
    pub fn scalar<F: Fn(f64) -> f64>(h: f64, b: F) -> Self {
        Self::from_fn(1, h, |u| (DMatrix::from_element(1, 1, b(u)), DMatrix::zeros(1, 1)))
    }

    pub fn grid(&self) -> UGrid {
        self.grid
    }

    pub fn by_node(&self, k: usize) -> &DMatrix<f64> {
        &self.by[k]
    }

    pub fn bz_node(&self, k: usize) -> &DMatrix<f64> {
        &self.bz[k]
    }

    /// True when `B_y` and `B_z` vanish at every node.
    pub fn is_zero(&self) -> bool {
        self.by.iter().chain(&self.bz).all(|m| m.iter().all(|&v| v == 0.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.by.iter().chain(&self.bz).map(max_abs).fold(0.0, f64::max)
    }

    /// Coefficients in `(y, z)` axes rotated by `phi`:
    /// `B_y' = cos φ B_y + sin φ B_z`, `B_z' = −sin φ B_y + cos φ B_z`.
    /// The pencil direction `θ` of the original becomes `θ − φ`.
    pub fn rotated(&self, phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        let by = self.by.iter().zip(&self.bz).map(|(y, z)| y * c + z * s).collect();
        let bz = self.by.iter().zip(&self.bz).map(|(y, z)| z * c - y * s).collect();
        LinearizedCoefficients {
            by,
            bz,
            ..self.clone()
        }
    }

    /// `S·B·S^{-1}` at every node.
    pub fn conjugated(&self, s: &DMatrix<f64>) -> Self {
        let si = s.clone().try_inverse().expect("conjugating matrix must be invertible");
        LinearizedCoefficients {
            by: self.by.iter().map(|b| s * b * &si).collect(),
            bz: self.bz.iter().map(|b| s * b * &si).collect(),
            ..self.clone()
        }
    }

    /// `u, B_y entries row-major, B_z entries row-major` per line.
    pub fn to_csv(&self) -> String {
        let n = self.n;
        let mut out = String::from("u");
        for name in ["by", "bz"] {
            for i in 0..n {
                for j in 0..n {
                    out.push_str(&format!(",{name}_{i}{j}"));
                }
            }
        }
        out.push('\n');
        for k in 0..self.grid.len() {
            out.push_str(&format!("{:.6}", self.grid.node(k)));
            for m in [&self.by[k], &self.bz[k]] {
                for i in 0..n {
                    for j in 0..n {
                        out.push_str(&format!(",{:.17e}", m[(i, j)]));
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    fn interp(&self, table: &[DMatrix<f64>], u: f64) -> DMatrix<f64> {
        let n = self.n;
        let s = (u - self.grid.first()) / self.grid.h;
        if s <= 0.0 {
            return table[0].clone();
        }
        if s >= (self.grid.len() - 1) as f64 {
            return table[self.grid.len() - 1].clone();
        }
        let (k, w) = quad::lagrange4_stencil(self.grid.len(), s);
        let mut out = DMatrix::zeros(n, n);
        for (m, wm) in w.iter().enumerate() {
            out += &table[k + m] * *wm;
        }
        out
    }
}

impl TransverseCoefficients for LinearizedCoefficients {
    fn n(&self) -> usize {
        self.n
    }

    fn eval(&self, u: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        if self.zero_outside && u.abs() >= 1.0 {
            return (DMatrix::zeros(self.n, self.n), DMatrix::zeros(self.n, self.n));
        }
        (self.interp(&self.by, u), self.interp(&self.bz, u))
    }
}

/// Coefficients given in closed form.
pub struct AnalyticCoefficients<F> {
    n: usize,
    f: F,
}

impl<F> AnalyticCoefficients<F>
where
    F: Fn(f64) -> (DMatrix<f64>, DMatrix<f64>) + Sync,
{
    pub fn new(n: usize, f: F) -> Self {
        AnalyticCoefficients { n, f }
    }
}

impl<F> TransverseCoefficients for AnalyticCoefficients<F>
where
    F: Fn(f64) -> (DMatrix<f64>, DMatrix<f64>) + Sync,
{
    fn n(&self) -> usize {
        self.n
    }

    fn eval(&self, u: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.f)(u)
    }
}

/// Scalar closed-form `B_y = b(u)`, `B_z = 0`.
pub fn scalar_coefficients<F>(b: F) -> AnalyticCoefficients<impl Fn(f64) -> (DMatrix<f64>, DMatrix<f64>) + Sync>
where
    F: Fn(f64) -> f64 + Sync,
{
    AnalyticCoefficients::new(1, move |u| (DMatrix::from_element(1, 1, b(u)), DMatrix::zeros(1, 1)))
}

/// `B_y(u) = A(u)(b·f'(u))A(u)^{-1}`, `B_z(u) = A(u)(c·f'(u))A(u)^{-1}` on the
/// renormalizer grid.
pub fn linearized_coefficients(
    renormalizer: &Renormalizer,
    couplings: &CouplingTensors,
    profile: &WaveProfile,
) -> LinearizedCoefficients {
    let grid = renormalizer.grid();
    let mut by = Vec::with_capacity(grid.len());
    let mut bz = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let fp = profile.eval(grid.node(k), 1);
        let a = renormalizer.a_node(k);
        let ai = renormalizer.a_inv_node(k);
        by.push(a * couplings.b_dot(&fp) * ai);
        bz.push(a * couplings.c_dot(&fp) * ai);
    }
    LinearizedCoefficients {
        grid,
        n: couplings.n(),
        by,
        bz,
        zero_outside: true,
    }
}

/// Eigenvalues of a real square matrix. Closed form up to 2×2, Schur beyond.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<C64>> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "square matrix expected");
    match n {
        0 => Ok(vec![]),
        1 => Ok(vec![C64::new(m[(0, 0)], 0.0)]),
        2 => {
            let half_tr = 0.5 * (m[(0, 0)] + m[(1, 1)]);
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            let disc = half_tr * half_tr - det;
            if disc >= 0.0 {
                let r = disc.sqrt();
                Ok(vec![C64::new(half_tr + r, 0.0), C64::new(half_tr - r, 0.0)])
            } else {
                let r = (-disc).sqrt();
                Ok(vec![C64::new(half_tr, r), C64::new(half_tr, -r)])
            }
        }
        _ => {
            let schur = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, EIGEN_MAX_SWEEPS)
                .ok_or(Error::EigenNonConvergence(EIGEN_MAX_SWEEPS))?;
            Ok(schur.complex_eigenvalues().iter().copied().collect())
        }
    }
}

/// Largest real part among the eigenvalues.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> Result<f64> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("spectral abscissa of a non-finite matrix".into()));
    }
    Ok(eigenvalues(m)?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Top eigenvalue (largest real part), a unit eigenvector for it, and the gap
/// to the next distinct real part (infinite for a single eigenvalue).
pub fn top_eigenpair(m: &DMatrix<f64>) -> Result<(C64, DVector<C64>, f64)> {
    let n = m.nrows();
    let eig = eigenvalues(m)?;
    let top = eig
        .iter()
        .copied()
        .max_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)))
        .expect("nonempty");
    let scale = max_abs(m).max(1.0);
    let gap = eig
        .iter()
        .filter(|z| (top.re - z.re) > 1e-12 * scale)
        .map(|z| top.re - z.re)
        .fold(f64::INFINITY, f64::min);
    let mc: DMatrix<C64> = m.map(|v| C64::new(v, 0.0));
    let shift = top + C64::new(1e-10 * scale, 1e-10 * scale);
    let shifted = &mc - DMatrix::<C64>::identity(n, n) * shift;
    let lu = shifted.lu();
    let mut v = DVector::<C64>::from_fn(n, |i, _| C64::new(1.0 + 0.1 * i as f64, 0.3 - 0.05 * i as f64));
    for _ in 0..8 {
        let w = lu.solve(&v).ok_or(Error::EigenNonConvergence(0))?;
        let nrm = w.norm();
        if !(nrm.is_finite() && nrm > 0.0) {
            return Err(Error::EigenNonConvergence(0));
        }
        v = w / C64::new(nrm, 0.0);
    }
    Ok((top, v, gap))
}

/// Witness of Condition 2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionTwoWitness {
    pub u0: f64,
    /// Rotation angle in `[0, π)`.
    pub theta: f64,
    /// `+1` or `−1`: the combination is `sign·(cos θ B_y + sin θ B_z)`.
    pub sign: f64,
    pub eigenvalue_re: f64,
    pub eigenvalue_im: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionTwo {
    pub satisfied: bool,
    pub witness: Option<ConditionTwoWitness>,
}

fn combination(coeffs: &LinearizedCoefficients, k: usize, theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    coeffs.by_node(k) * c + coeffs.bz_node(k) * s
}

/// Best `(value, sign, eigenvalue)` over both signs: `max |Re λ|`.
fn two_sided_abscissa(m: &DMatrix<f64>) -> Result<(f64, f64, C64)> {
    let eig = eigenvalues(m)?;
    let hi = eig.iter().copied().max_by(|a, b| a.re.total_cmp(&b.re)).expect("nonempty");
    let lo = eig.iter().copied().min_by(|a, b| a.re.total_cmp(&b.re)).expect("nonempty");
    if hi.re >= -lo.re {
        Ok((hi.re, 1.0, hi))
    } else {
        Ok((-lo.re, -1.0, -lo))
    }
}

/// Scans `u_0` over every `u_stride`-th node and `θ` over `n_theta` points of
/// `[0, π)`, then refines `θ` by golden section at the best node. Satisfied
/// when some combination has an eigenvalue with `|Re λ| > 1e-8`.
pub fn check_condition_two(coeffs: &LinearizedCoefficients, n_theta: usize, u_stride: usize) -> Result<ConditionTwo> {
    assert!(n_theta > 0 && u_stride > 0);
    let grid = coeffs.grid();
    let mut best: Option<(f64, usize, f64)> = None;
    for t in 0..n_theta {
        let theta = std::f64::consts::PI * t as f64 / n_theta as f64;
        for k in (0..grid.len()).step_by(u_stride) {
            let (v, _, _) = two_sided_abscissa(&combination(coeffs, k, theta))?;
            if best.is_none_or(|(bv, _, _)| v > bv) {
                best = Some((v, k, theta));
            }
        }
    }
    let (mut value, k, mut theta) = best.expect("grids are nonempty");
    if n_theta > 1 {
        let dt = std::f64::consts::PI / n_theta as f64;
        let (t, v) = quad::golden_max(
            |th| two_sided_abscissa(&combination(coeffs, k, th)).map(|r| r.0).unwrap_or(f64::NEG_INFINITY),
            theta - dt,
            theta + dt,
            40,
        );
        if v > value {
            value = v;
            theta = t;
        }
    }
    // The pencil is odd in theta -> theta + pi, and the sign is recomputed below.
    theta = theta.rem_euclid(std::f64::consts::PI);
    let (_, sign, ev) = two_sided_abscissa(&combination(coeffs, k, theta))?;
    let satisfied = value > CONDITION_TWO_TOL;
    Ok(ConditionTwo {
        satisfied,
        witness: satisfied.then_some(ConditionTwoWitness {
            u0: grid.node(k),
            theta,
            sign,
            eigenvalue_re: ev.re,
            eigenvalue_im: ev.im,
        }),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrowthMethod {
    ScalarIntegral,
    SpectralAbscissa,
}

/// Predicted `K` in the `exp(K√t)` growth law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthRateEstimate {
    pub k: f64,
    /// False when no candidate interval gives a positive rate.
    pub positive: bool,
    pub method: GrowthMethod,
    pub theta: f64,
    pub sign: f64,
    pub u1: f64,
    pub u2: f64,
}

/// Options of [`growth_rate_estimate`].
#[derive(Clone, Copy, Debug)]
pub struct GrowthOptions {
    pub n_theta: usize,
    /// Node stride of the coarse interval search.
    pub coarse_stride: usize,
}

impl Default for GrowthOptions {
    fn default() -> Self {
        GrowthOptions {
            n_theta: 360,
            coarse_stride: 4,
        }
    }
}

/// Best `(∫_{u_a}^{u_b} w)/(√2 √(u_b − u_a))` over node pairs inside the
/// runs where `positive_only` demands `w > 0` (or anywhere, using `|∫ w|`).
fn best_interval(nodes: &[f64], w: &[f64], h: f64, stride: usize, positive_only: bool) -> (f64, usize, usize, f64) {
    let cum = quad::cumulative_integral(w, h);
    let mut best = (0.0, 0, 0, 1.0);
    let mut consider = |a: usize, b: usize| {
        let i = cum[b] - cum[a];
        let (val, sign) = if positive_only { (i, 1.0) } else { (i.abs(), i.signum()) };
        let v = val / (std::f64::consts::SQRT_2 * (nodes[b] - nodes[a]).sqrt());
        if v > best.0 {
            best = (v, a, b, sign);
        }
    };
    if positive_only {
        let mut k = 0;
        while k < w.len() {
            if w[k] > 0.0 {
                let start = k;
                while k < w.len() && w[k] > 0.0 {
                    k += 1;
                }
                let end = k - 1;
                let idx: Vec<usize> = (start..=end).step_by(stride).chain(std::iter::once(end)).collect();
                for (ia, &a) in idx.iter().enumerate() {
                    for &b in &idx[ia + 1..] {
                        if b > a {
                            consider(a, b);
                        }
                    }
                }
            } else {
                k += 1;
            }
        }
    } else {
        let idx: Vec<usize> = (0..w.len()).step_by(stride).chain(std::iter::once(w.len() - 1)).collect();
        for (ia, &a) in idx.iter().enumerate() {
            for &b in &idx[ia + 1..] {
                if b > a {
                    consider(a, b);
                }
            }
        }
    }
    best
}

/// Refines a coarse interval by a full-resolution search in a window around it.
fn refine_interval(nodes: &[f64], w: &[f64], h: f64, coarse: (usize, usize), radius: usize, positive_only: bool) -> (f64, usize, usize, f64) {
    let lo = coarse.0.saturating_sub(radius);
    let hi = (coarse.1 + radius).min(w.len() - 1);
    let cum = quad::cumulative_integral(w, h);
    let mut best = (0.0, coarse.0, coarse.1, 1.0);
    for a in lo..=(coarse.0 + radius).min(hi) {
        for b in coarse.1.saturating_sub(radius).max(a + 1)..=hi {
            if positive_only && w[a..=b].iter().any(|&x| x <= 0.0) {
                continue;
            }
            let i = cum[b] - cum[a];
            let (val, sign) = if positive_only { (i, 1.0) } else { (i.abs(), i.signum()) };
            let v = val / (std::f64::consts::SQRT_2 * (nodes[b] - nodes[a]).sqrt());
            if v > best.0 {
                best = (v, a, b, sign);
            }
        }
    }
    best
}

/// Predicted growth rate: the larger of the scalar-integral path (only for
/// `N = 1` with `B_z ≡ 0`) and the spectral-abscissa path over rotations.
pub fn growth_rate_estimate(coeffs: &LinearizedCoefficients, opts: GrowthOptions) -> Result<GrowthRateEstimate> {
    let grid = coeffs.grid();
    let inside: Vec<usize> = (0..grid.len()).filter(|&k| grid.node(k).abs() <= 1.0 + 1e-9).collect();
    let nodes: Vec<f64> = inside.iter().map(|&k| grid.node(k)).collect();
    let h = grid.h;
    let mut result = GrowthRateEstimate {
        k: 0.0,
        positive: false,
        method: GrowthMethod::SpectralAbscissa,
        theta: 0.0,
        sign: 1.0,
        u1: nodes[0],
        u2: nodes[nodes.len() - 1],
    };

    let scalar = coeffs.n == 1 && inside.iter().all(|&k| coeffs.bz_node(k)[(0, 0)] == 0.0);
    if scalar {
        let w: Vec<f64> = inside.iter().map(|&k| coeffs.by_node(k)[(0, 0)]).collect();
        let (v, a, b, sign) = best_interval(&nodes, &w, h, 1, false);
        if v > result.k {
            result = GrowthRateEstimate {
                k: v,
                positive: true,
                method: GrowthMethod::ScalarIntegral,
                theta: 0.0,
                sign,
                u1: nodes[a],
                u2: nodes[b],
            };
        }
    }

    let lambda = |theta: f64, sign: f64| -> Result<Vec<f64>> {
        inside
            .iter()
            .map(|&k| spectral_abscissa(&(combination(coeffs, k, theta) * sign)))
            .collect()
    };
    let mut coarse: Option<(f64, f64, f64, usize, usize)> = None;
    for t in 0..opts.n_theta {
        let theta = std::f64::consts::PI * t as f64 / opts.n_theta as f64;
        for sign in [1.0, -1.0] {
            let w = lambda(theta, sign)?;
            let (v, a, b, _) = best_interval(&nodes, &w, h, opts.coarse_stride, true);
            if v > 0.0 && coarse.is_none_or(|c| v > c.0) {
                coarse = Some((v, theta, sign, a, b));
            }
        }
    }
    if let Some((_, theta0, sign, a0, b0)) = coarse {
        let radius = 2 * opts.coarse_stride;
        let eval = |theta: f64| -> (f64, usize, usize) {
            match lambda(theta, sign) {
                Ok(w) => {
                    let (v, a, b, _) = refine_interval(&nodes, &w, h, (a0, b0), radius, true);
                    (v, a, b)
                }
                Err(_) => (f64::NEG_INFINITY, a0, b0),
            }
        };
        let dt = std::f64::consts::PI / opts.n_theta.max(1) as f64;
        let (theta, _) = quad::golden_max(|th| eval(th).0, theta0 - dt, theta0 + dt, 30);
        let (mut best_theta, mut best) = (theta0, eval(theta0));
        let refined = eval(theta);
        if refined.0 > best.0 {
            best = refined;
            best_theta = theta;
        }
        if best.0 > result.k {
            let (mut th, mut sg) = (best_theta, sign);
            if th < 0.0 {
                th += std::f64::consts::PI;
                sg = -sg;
            } else if th >= std::f64::consts::PI {
                th -= std::f64::consts::PI;
                sg = -sg;
            }
            result = GrowthRateEstimate {
                k: best.0,
                positive: true,
                method: GrowthMethod::SpectralAbscissa,
                theta: th,
                sign: sg,
                u1: nodes[best.1],
                u2: nodes[best.2],
            };
        }
    }
    Ok(result)
}
