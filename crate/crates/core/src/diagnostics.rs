//! Interaction-region geometry, commutation vector fields on grid functions,
//! and the growth/decay fits shared by the solvers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default lower end of fit windows; earlier times are transient.
pub const DEFAULT_T_MIN: f64 = 5.0;
/// Fewest points a fit accepts.
pub const MIN_FIT_POINTS: usize = 8;

/// `S_t`: `|t − x| ≤ 1` and `t − r ≥ −1` on the slice of time `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionRegion {
    pub t: f64,
}

impl InteractionRegion {
    pub fn new(t: f64) -> Self {
        InteractionRegion { t }
    }

    #[inline]
    pub fn contains(&self, x: f64, y: f64, z: f64) -> bool {
        let r = (x * x + y * y + z * z).sqrt();
        (self.t - x).abs() <= 1.0 && self.t - r >= -1.0
    }

    /// Exact volume `π(4t + 4/3)`, valid for `t ≥ 1`.
    pub fn exact_volume(&self) -> f64 {
        std::f64::consts::PI * (4.0 * self.t + 4.0 / 3.0)
    }

    /// Radius of the bounding cylinder around the `x` axis.
    pub fn cylinder_radius(&self) -> f64 {
        2.0 * self.t.sqrt()
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub t: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Samples the cylinder `t − 1 ≤ x ≤ t + 1`, `y² + z² ≤ 4t` uniformly.
pub fn region_volume(t: f64, samples: usize, seed: u64) -> Result<VolumeEstimate> {
    if !(t >= 1.0) {
        return Err(Error::Domain(format!("region volume needs t >= 1, got {t}")));
    }
    if samples < 100_000 {
        return Err(Error::Domain(format!("region volume needs at least 1e5 samples, got {samples}")));
    }
    let region = InteractionRegion::new(t);
    let rad = region.cylinder_radius();
    let cyl = 2.0 * std::f64::consts::PI * rad * rad;
    // Fixed-size batches keep the result independent of the thread count.
    const BATCH: usize = 65_536;
    let batches = samples.div_ceil(BATCH);
    let hits: usize = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let count = BATCH.min(samples - b * BATCH);
            (0..count)
                .filter(|_| {
                    let x = t - 1.0 + 2.0 * rng.random::<f64>();
                    let rho = rad * rng.random::<f64>().sqrt();
                    let phi = 2.0 * std::f64::consts::PI * rng.random::<f64>();
                    region.contains(x, rho * phi.cos(), rho * phi.sin())
                })
                .count()
        })
        .sum();
    let p = hits as f64 / samples as f64;
    Ok(VolumeEstimate {
        t,
        estimate: cyl * p,
        std_error: cyl * (p * (1.0 - p) / samples as f64).sqrt(),
        samples,
        seed,
    })
}

/// Measure on the unit sphere of the directions `ω` with `rω ∈ S_t`, by a
/// midpoint rule in `cos θ` with `n_cos` cells. Membership on `S(r)` depends
/// only on `r` and `x = r cos θ`, so the azimuth integrates to `2π`.
pub fn sphere_cap_quadrature(t: f64, r: f64, n_cos: usize) -> f64 {
    if t - r < -1.0 {
        return 0.0;
    }
    let dc = 2.0 / n_cos as f64;
    let hits = (0..n_cos)
        .into_par_iter()
        .filter(|&a| {
            let c = -1.0 + (a as f64 + 0.5) * dc;
            (t - r * c).abs() <= 1.0
        })
        .count();
    2.0 * std::f64::consts::PI * hits as f64 * dc
}

/// Default resolution of [`sphere_cap_measure`].
pub const CAP_N_COS: usize = 1_000_000;

/// `σ(S(r) ∩ S_t)` by quadrature of the membership indicator.
pub fn sphere_cap_measure(t: f64, r: f64) -> Result<f64> {
    if !(t >= 2.0) || !(r > 0.0) {
        return Err(Error::Domain(format!("sphere cap needs t >= 2 and r > 0 (t={t}, r={r})")));
    }
    Ok(sphere_cap_quadrature(t, r, CAP_N_COS))
}

/// Exact cap measure `2π(min(1, (t+1)/r) − max(−1, (t−1)/r))₊` for `r ≤ t + 1`.
pub fn sphere_cap_exact(t: f64, r: f64) -> f64 {
    if r > t + 1.0 {
        return 0.0;
    }
    let hi = ((t + 1.0) / r).min(1.0);
    let lo = ((t - 1.0) / r).max(-1.0);
    2.0 * std::f64::consts::PI * (hi - lo).max(0.0)
}

/// The commutation fields: translations, rotations, boosts and scaling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VectorField {
    Dt,
    Dx,
    Dy,
    Dz,
    RotXY,
    RotXZ,
    RotYZ,
    BoostX,
    BoostY,
    BoostZ,
    Scaling,
}

impl VectorField {
    pub const ALL: [VectorField; 11] = [
        VectorField::Dt,
        VectorField::Dx,
        VectorField::Dy,
        VectorField::Dz,
        VectorField::RotXY,
        VectorField::RotXZ,
        VectorField::RotYZ,
        VectorField::BoostX,
        VectorField::BoostY,
        VectorField::BoostZ,
        VectorField::Scaling,
    ];

    pub const ROTATIONS: [VectorField; 3] = [VectorField::RotXY, VectorField::RotXZ, VectorField::RotYZ];

    pub fn is_translation(self) -> bool {
        matches!(self, VectorField::Dt | VectorField::Dx | VectorField::Dy | VectorField::Dz)
    }

    pub fn name(self) -> &'static str {
        match self {
            VectorField::Dt => "dt",
            VectorField::Dx => "dx",
            VectorField::Dy => "dy",
            VectorField::Dz => "dz",
            VectorField::RotXY => "rot_xy",
            VectorField::RotXZ => "rot_xz",
            VectorField::RotYZ => "rot_yz",
            VectorField::BoostX => "boost_x",
            VectorField::BoostY => "boost_y",
            VectorField::BoostZ => "boost_z",
            VectorField::Scaling => "scaling",
        }
    }

    /// Components `(c_t, c_x, c_y, c_z)` at `p = (t, x, y, z)`.
    #[inline]
    pub fn coefficients(self, p: [f64; 4]) -> [f64; 4] {
        let [t, x, y, z] = p;
        match self {
            VectorField::Dt => [1.0, 0.0, 0.0, 0.0],
            VectorField::Dx => [0.0, 1.0, 0.0, 0.0],
            VectorField::Dy => [0.0, 0.0, 1.0, 0.0],
            VectorField::Dz => [0.0, 0.0, 0.0, 1.0],
            VectorField::RotXY => [0.0, -y, x, 0.0],
            VectorField::RotXZ => [0.0, -z, 0.0, x],
            VectorField::RotYZ => [0.0, 0.0, -z, y],
            VectorField::BoostX => [x, t, 0.0, 0.0],
            VectorField::BoostY => [y, 0.0, t, 0.0],
            VectorField::BoostZ => [z, 0.0, 0.0, t],
            VectorField::Scaling => [t, x, y, z],
        }
    }
}

/// Derivatives tangent to outgoing cones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GoodDerivative {
    /// `∂_t + ∂_r`.
    Outgoing,
    /// `Ω/r` for a rotation `Ω`.
    Angular(VectorField),
}

impl GoodDerivative {
    pub const ALL: [GoodDerivative; 4] = [
        GoodDerivative::Outgoing,
        GoodDerivative::Angular(VectorField::RotXY),
        GoodDerivative::Angular(VectorField::RotXZ),
        GoodDerivative::Angular(VectorField::RotYZ),
    ];

    pub fn coefficients(self, p: [f64; 4]) -> [f64; 4] {
        let r = (p[1] * p[1] + p[2] * p[2] + p[3] * p[3]).sqrt();
        match self {
            GoodDerivative::Outgoing => [1.0, p[1] / r, p[2] / r, p[3] / r],
            GoodDerivative::Angular(f) => f.coefficients(p).map(|c| c / r),
        }
    }
}

/// Samples of a function on a uniform `(t, x, y, z)` lattice with a validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub origin: [f64; 4],
    pub spacing: [f64; 4],
    pub dims: [usize; 4],
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl GridFunction {
    pub fn from_fn<F: Fn([f64; 4]) -> f64 + Sync>(origin: [f64; 4], spacing: [f64; 4], dims: [usize; 4], f: F) -> Self {
        let len = dims.iter().product();
        let mut g = GridFunction {
            origin,
            spacing,
            dims,
            values: vec![0.0; len],
            valid: vec![true; len],
        };
        let pts: Vec<[f64; 4]> = (0..len).map(|k| g.point_of(k)).collect();
        g.values = pts.par_iter().map(|&p| f(p)).collect();
        g
    }

    /// Builds from values already laid out `((it·nx + ix)·ny + iy)·nz + iz`.
    pub fn from_values(origin: [f64; 4], spacing: [f64; 4], dims: [usize; 4], values: Vec<f64>) -> Self {
        assert_eq!(values.len(), dims.iter().product::<usize>());
        let valid = vec![true; values.len()];
        GridFunction {
            origin,
            spacing,
            dims,
            values,
            valid,
        }
    }

    #[inline]
    pub fn index(&self, i: [usize; 4]) -> usize {
        ((i[0] * self.dims[1] + i[1]) * self.dims[2] + i[2]) * self.dims[3] + i[3]
    }

    #[inline]
    fn multi_index(&self, mut k: usize) -> [usize; 4] {
        let iz = k % self.dims[3];
        k /= self.dims[3];
        let iy = k % self.dims[2];
        k /= self.dims[2];
        let ix = k % self.dims[1];
        [k / self.dims[1], ix, iy, iz]
    }

    #[inline]
    pub fn point(&self, i: [usize; 4]) -> [f64; 4] {
        std::array::from_fn(|a| self.origin[a] + i[a] as f64 * self.spacing[a])
    }

    fn point_of(&self, k: usize) -> [f64; 4] {
        self.point(self.multi_index(k))
    }

    pub fn get(&self, i: [usize; 4]) -> Option<f64> {
        let k = self.index(i);
        self.valid[k].then_some(self.values[k])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Drops the first and last time slices.
    pub fn trim_t(&self) -> Self {
        assert!(self.dims[0] >= 3, "need three time slices to trim");
        let slab = self.dims[1] * self.dims[2] * self.dims[3];
        let mut origin = self.origin;
        origin[0] += self.spacing[0];
        let mut dims = self.dims;
        dims[0] -= 2;
        GridFunction {
            origin,
            spacing: self.spacing,
            dims,
            values: self.values[slab..slab * (dims[0] + 1)].to_vec(),
            valid: self.valid[slab..slab * (dims[0] + 1)].to_vec(),
        }
    }

    /// Largest `|value|` over valid points.
    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.valid)
            .filter(|(_, &ok)| ok)
            .fold(0.0, |m, (v, _)| m.max(v.abs()))
    }

    /// `Σ value² · h_x h_y h_z` over valid points of one time slice.
    pub fn slice_energy(&self, it: usize) -> f64 {
        let slab = self.dims[1] * self.dims[2] * self.dims[3];
        let cell = self.spacing[1] * self.spacing[2] * self.spacing[3];
        self.values[it * slab..(it + 1) * slab]
            .iter()
            .zip(&self.valid[it * slab..(it + 1) * slab])
            .filter(|(_, &ok)| ok)
            .map(|(v, _)| v * v)
            .sum::<f64>()
            * cell
    }
}

/// Applies `Σ_μ c_μ(p) ∂_μ` by second-order central differences. The result
/// loses the first and last time slices; interior points whose stencil
/// leaves the lattice or touches an invalid value are flagged invalid.
pub fn apply_coefficients<C>(coeffs: C, g: &GridFunction) -> Result<GridFunction>
where
    C: Fn([f64; 4]) -> [f64; 4] + Sync,
{
    if g.dims[0] < 3 {
        return Err(Error::Domain("applying a field needs at least three time slices".into()));
    }
    let mut out = g.trim_t();
    let strides = [
        g.dims[1] * g.dims[2] * g.dims[3],
        g.dims[2] * g.dims[3],
        g.dims[3],
        1,
    ];
    let inv2h: [f64; 4] = std::array::from_fn(|a| 0.5 / g.spacing[a]);
    let slab = strides[0];
    out.values
        .par_chunks_mut(slab)
        .zip(out.valid.par_chunks_mut(slab))
        .enumerate()
        .for_each(|(it_out, (vals, oks))| {
            let it = it_out + 1;
            for (local, (v, ok)) in vals.iter_mut().zip(oks.iter_mut()).enumerate() {
                let k = it * slab + local;
                let idx = [it, local / strides[1], (local / strides[2]) % g.dims[2], local % g.dims[3]];
                let p = g.point(idx);
                let c = coeffs(p);
                let mut acc = 0.0;
                let mut good = g.valid[k];
                for a in 0..4 {
                    if c[a] == 0.0 {
                        continue;
                    }
                    if idx[a] == 0 || idx[a] + 1 == g.dims[a] {
                        good = false;
                        break;
                    }
                    let (kp, km) = (k + strides[a], k - strides[a]);
                    if !(g.valid[kp] && g.valid[km]) {
                        good = false;
                        break;
                    }
                    acc += c[a] * (g.values[kp] - g.values[km]) * inv2h[a];
                }
                *ok = good;
                *v = if good { acc } else { 0.0 };
            }
        });
    Ok(out)
}

/// Central-difference application of a commutation field.
pub fn apply_field(field: VectorField, g: &GridFunction) -> Result<GridFunction> {
    apply_coefficients(|p| field.coefficients(p), g)
}

pub fn apply_good_derivative(d: GoodDerivative, g: &GridFunction) -> Result<GridFunction> {
    apply_coefficients(|p| d.coefficients(p), g)
}

/// `sqrt(Σ a²) / sqrt(Σ b²)` over points valid in both.
pub fn l2_ratio(a: &GridFunction, b: &GridFunction) -> f64 {
    assert_eq!(a.dims, b.dims);
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..a.values.len() {
        if a.valid[k] && b.valid[k] {
            num += a.values[k] * a.values[k];
            den += b.values[k] * b.values[k];
        }
    }
    (num / den).sqrt()
}

/// Worst ratio `‖[Ω, ∂̄]h‖ / ‖∂̄h‖` over rotations `Ω` and good derivatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutatorReport {
    pub max_ratio: f64,
    pub worst: (String, String),
}

pub fn commutator_check(h: &GridFunction) -> Result<CommutatorReport> {
    // |∂̄h|² summed over all good derivatives, on two trimmed slices less.
    let mut good_sq: Option<GridFunction> = None;
    for d in GoodDerivative::ALL {
        let gd = apply_good_derivative(d, h)?.trim_t();
        good_sq = Some(match good_sq {
            None => GridFunction {
                values: gd.values.iter().map(|v| v * v).collect(),
                ..gd
            },
            Some(mut acc) => {
                for k in 0..acc.values.len() {
                    acc.values[k] += gd.values[k] * gd.values[k];
                    acc.valid[k] &= gd.valid[k];
                }
                acc
            }
        });
    }
    let mut good = good_sq.expect("four good derivatives");
    good.values.iter_mut().for_each(|v| *v = v.sqrt());

    let mut report = CommutatorReport {
        max_ratio: 0.0,
        worst: (String::new(), String::new()),
    };
    for om in VectorField::ROTATIONS {
        let om_h = apply_field(om, h)?;
        for d in GoodDerivative::ALL {
            let a = apply_field(om, &apply_good_derivative(d, h)?)?;
            let b = apply_good_derivative(d, &om_h)?;
            let mut comm = a.clone();
            for k in 0..comm.values.len() {
                comm.values[k] -= b.values[k];
                comm.valid[k] &= b.valid[k];
            }
            let ratio = l2_ratio(&comm, &good);
            if ratio > report.max_ratio {
                report.max_ratio = ratio;
                report.worst = (om.name().into(), format!("{d:?}"));
            }
        }
    }
    Ok(report)
}

/// Fourth-order central derivative of a closure along axis `a`.
fn directional<F: Fn([f64; 4]) -> f64>(f: &F, p: [f64; 4], a: usize, eps: f64) -> f64 {
    let at = |s: f64| {
        let mut q = p;
        q[a] += s;
        f(q)
    };
    (-at(2.0 * eps) + 8.0 * at(eps) - 8.0 * at(-eps) + at(-2.0 * eps)) / (12.0 * eps)
}

/// `Γ_1 ⋯ Γ_k F` at `p` by nested finite differences (`fields[0]` outermost).
pub fn apply_string<F: Fn([f64; 4]) -> f64>(fields: &[VectorField], f: &F, p: [f64; 4], eps: f64) -> f64 {
    match fields.split_first() {
        None => f(p),
        Some((first, rest)) => {
            let c = first.coefficients(p);
            let inner = |q: [f64; 4]| apply_string(rest, f, q, eps);
            (0..4)
                .filter(|&a| c[a] != 0.0)
                .map(|a| c[a] * directional(&inner, p, a, eps))
                .sum()
        }
    }
}

/// All ordered strings of `k` commutation fields.
pub fn all_strings(k: usize) -> Vec<Vec<VectorField>> {
    (0..k).fold(vec![vec![]], |acc, _| {
        acc.into_iter()
            .flat_map(|s| {
                VectorField::ALL.iter().map(move |&f| {
                    let mut s = s.clone();
                    s.push(f);
                    s
                })
            })
            .collect()
    })
}

/// Sample points of `S_t`: a lattice over the bounding cylinder, filtered.
pub fn region_points(t: f64, n_x: usize, n_yz: usize) -> Vec<[f64; 4]> {
    let region = InteractionRegion::new(t);
    let rad = region.cylinder_radius();
    let mut pts = Vec::new();
    for a in 0..n_x {
        let x = t - 1.0 + 2.0 * a as f64 / (n_x - 1) as f64;
        for b in 0..n_yz {
            let y = -rad + 2.0 * rad * b as f64 / (n_yz - 1) as f64;
            for c in 0..n_yz {
                let z = -rad + 2.0 * rad * c as f64 / (n_yz - 1) as f64;
                if region.contains(x, y, z) {
                    pts.push([t, x, y, z]);
                }
            }
        }
    }
    pts
}

/// Growth of `max_{S_t} |Γ^α F|` in `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightGrowthReport {
    pub k: usize,
    pub ts: Vec<f64>,
    pub maxima: Vec<f64>,
    pub fit: FitResult,
    pub bound: f64,
    pub within_bound: bool,
}

/// Maximum over `S_t` sample points and the given strings of `|Γ^α F|`
/// for `F(t, x, y, z) = profile(t − x)`, fitted against `log(1 + t)`.
pub fn weight_growth_check<P>(profile: P, strings: &[Vec<VectorField>], ts: &[f64]) -> Result<WeightGrowthReport>
where
    P: Fn(f64) -> f64 + Sync,
{
    let k = strings.iter().map(Vec::len).max().unwrap_or(0);
    if !(1..=2).contains(&k) {
        return Err(Error::Domain("weight growth check supports strings of length 1 or 2".into()));
    }
    let f = |p: [f64; 4]| profile(p[0] - p[1]);
    let maxima: Vec<f64> = ts
        .iter()
        .map(|&t| {
            let pts = region_points(t, 41, 41);
            pts.par_iter()
                .map(|&p| {
                    strings
                        .iter()
                        .map(|s| apply_string(s, &f, p, 1e-2).abs())
                        .fold(0.0, f64::max)
                })
                .reduce(|| 0.0, f64::max)
        })
        .collect();
    let series: Vec<(f64, f64)> = ts.iter().copied().zip(maxima.iter().copied()).collect();
    let fit = fit_power_decay_window(&series, f64::NEG_INFINITY, 3)?;
    let bound = k as f64 / 2.0 + 0.1;
    Ok(WeightGrowthReport {
        k,
        ts: ts.to_vec(),
        maxima,
        within_bound: fit.exponent <= bound,
        fit,
        bound,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitModel {
    /// `log y = a + K √t`.
    ExpSqrt,
    /// `log y = a + p log(1 + t)`.
    Power,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    /// `K` or `p`.
    pub exponent: f64,
    pub intercept: f64,
    pub r2: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
}

/// Ordinary least squares `y ≈ intercept + slope·x`: `(slope, intercept, R²)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    // Constant data up to rounding: the model fits exactly.
    let r2 = if ss_tot > 1e-24 * n * (1.0 + my * my) {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    (slope, intercept, r2)
}

fn fit_log_series(
    series: &[(f64, f64)],
    t_min: f64,
    min_points: usize,
    model: FitModel,
) -> Result<FitResult> {
    let pts: Vec<(f64, f64)> = series.iter().copied().filter(|&(t, _)| t >= t_min).collect();
    if pts.len() < min_points {
        return Err(Error::Fit(format!(
            "{} points with t >= {t_min}, need {min_points}",
            pts.len()
        )));
    }
    if pts.iter().any(|&(t, l)| !(t.is_finite() && l.is_finite())) {
        return Err(Error::Fit("non-finite sample".into()));
    }
    let xs: Vec<f64> = pts
        .iter()
        .map(|&(t, _)| match model {
            FitModel::ExpSqrt => t.sqrt(),
            FitModel::Power => (1.0 + t).ln(),
        })
        .collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (exponent, intercept, r2) = linear_fit(&xs, &ys);
    Ok(FitResult {
        model,
        exponent,
        intercept,
        r2,
        t_min: pts[0].0,
        t_max: pts[pts.len() - 1].0,
        points: pts.len(),
    })
}

fn logs(series: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    series
        .iter()
        .map(|&(t, y)| {
            if y > 0.0 {
                Ok((t, y.ln()))
            } else {
                Err(Error::Fit(format!("non-positive value {y} at t = {t}")))
            }
        })
        .collect()
}

/// Least squares of `log y` against `√t` over `t ≥ t_min`.
pub fn fit_sqrt_exponential(series: &[(f64, f64)], t_min: f64) -> Result<FitResult> {
    fit_log_series(&logs(series)?, t_min, MIN_FIT_POINTS, FitModel::ExpSqrt)
}

/// As [`fit_sqrt_exponential`] for series already given as `(t, log y)`.
pub fn fit_sqrt_exponential_log(series: &[(f64, f64)], t_min: f64) -> Result<FitResult> {
    fit_log_series(series, t_min, MIN_FIT_POINTS, FitModel::ExpSqrt)
}

/// Least squares of `log y` against `log(1 + t)` over `t ≥ t_min`.
pub fn fit_power_decay(series: &[(f64, f64)], t_min: f64) -> Result<FitResult> {
    fit_log_series(&logs(series)?, t_min, MIN_FIT_POINTS, FitModel::Power)
}

pub fn fit_power_decay_log(series: &[(f64, f64)], t_min: f64) -> Result<FitResult> {
    fit_log_series(series, t_min, MIN_FIT_POINTS, FitModel::Power)
}

/// Power fit on a short series (weight-growth checks use a handful of times).
pub fn fit_power_decay_window(series: &[(f64, f64)], t_min: f64, min_points: usize) -> Result<FitResult> {
    fit_log_series(&logs(series)?, t_min, min_points, FitModel::Power)
}

/// Median of pairwise slopes, a trend estimate robust to outliers.
pub fn sens_slope(series: &[(f64, f64)]) -> Result<f64> {
    let mut slopes = Vec::new();
    for (a, &(t0, y0)) in series.iter().enumerate() {
        for &(t1, y1) in &series[a + 1..] {
            if t1 != t0 {
                slopes.push((y1 - y0) / (t1 - t0));
            }
        }
    }
    if slopes.is_empty() {
        return Err(Error::Fit("trend needs two distinct times".into()));
    }
    slopes.sort_by(f64::total_cmp);
    let m = slopes.len();
    Ok(if m % 2 == 1 {
        slopes[m / 2]
    } else {
        0.5 * (slopes[m / 2 - 1] + slopes[m / 2])
    })
}
