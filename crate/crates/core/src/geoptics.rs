//! Geometric-optics ansatz along a null direction: transport hierarchy on a
//! bundle of rays, remainder measurement, and the comparison ODE.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::renormalize::{spectral_abscissa, top_eigenpair, TransverseCoefficients, C64};

/// Eigen-gap below which the lower-bound construction is not checked.
pub const MIN_EIGEN_GAP: f64 = 1e-3;
/// Slack in the comparison-ODE bounds.
pub const BOUND_EPSILON: f64 = 0.1;

pub fn minkowski_dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]
}

/// `L = (1, 1 − Δ/T, −√(2Δ/T − Δ²/T²), 0)` with `Δ = u₂ − u₁`, and `L̄`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullDirection {
    pub u1: f64,
    pub u2: f64,
    pub t_final: f64,
    pub l: [f64; 4],
    pub l_bar: [f64; 4],
}

pub fn null_vector(u1: f64, u2: f64, t_final: f64) -> Result<NullDirection> {
    let width = u2 - u1;
    if !(width > 0.0 && t_final > width) {
        return Err(Error::Domain(format!(
            "null direction needs T > u2 - u1 > 0 (u1={u1}, u2={u2}, T={t_final})"
        )));
    }
    let q = width / t_final;
    let ly = -(q * (2.0 - q)).sqrt();
    let l = [1.0, 1.0 - q, ly, 0.0];
    Ok(NullDirection {
        u1,
        u2,
        t_final,
        l,
        l_bar: [l[0], -l[1], -l[2], -l[3]],
    })
}

impl NullDirection {
    pub fn null_defect(&self) -> f64 {
        minkowski_dot(&self.l, &self.l).abs()
    }

    /// `u' = t − x` along the ray from `x = −u₁`: `u₁ + (u₂ − u₁)t/T`.
    pub fn u_prime(&self, t: f64) -> f64 {
        self.u1 + (self.u2 - self.u1) * t / self.t_final
    }

    /// `√((u₂ − u₁)T/2)`, the factor in front of the growth integrals.
    pub fn exponent_scale(&self) -> f64 {
        ((self.u2 - self.u1) * self.t_final / 2.0).sqrt()
    }
}

/// `μ = exp(δ√T)` with `δ = 0.1`, capped at `10⁶`.
pub fn default_frequency(t_final: f64) -> f64 {
    (0.1 * t_final.sqrt()).exp().min(1e6)
}

/// Straight rays `ζ(s) = (s, ξ + s L_spatial)` from a cubic lattice of base
/// points `ξ` centred at `(−u₁, 0, 0)`, sampled at `steps + 1` times in `[0, T]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayBundle {
    pub direction: NullDirection,
    pub steps: usize,
    pub rays_per_axis: usize,
    pub spacing: f64,
}

impl RayBundle {
    pub fn new(direction: NullDirection, steps: usize, rays_per_axis: usize, spacing: f64) -> Result<Self> {
        if rays_per_axis < 5 || rays_per_axis % 2 == 0 {
            return Err(Error::Domain(format!(
                "ray bundle needs an odd number >= 5 of rays per axis, got {rays_per_axis}"
            )));
        }
        if steps < 8 || !(spacing > 0.0) {
            return Err(Error::Domain("ray bundle needs >= 8 steps and positive spacing".into()));
        }
        Ok(RayBundle {
            direction,
            steps,
            rays_per_axis,
            spacing,
        })
    }

    /// Spacing that resolves the transverse variation of the transport
    /// solutions, which grows like `|L_y| T`.
    pub fn default_spacing(direction: &NullDirection) -> f64 {
        0.05 / (1.0 + 0.5 * direction.l[2].abs() * direction.t_final)
    }

    pub fn ray_count(&self) -> usize {
        self.rays_per_axis.pow(3)
    }

    pub fn dt(&self) -> f64 {
        self.direction.t_final / self.steps as f64
    }

    pub fn center_ray(&self) -> usize {
        let c = self.rays_per_axis / 2;
        self.ray_index([c, c, c])
    }

    pub fn ray_index(&self, i: [usize; 3]) -> usize {
        (i[0] * self.rays_per_axis + i[1]) * self.rays_per_axis + i[2]
    }

    fn ray_multi(&self, r: usize) -> [usize; 3] {
        let n = self.rays_per_axis;
        [r / (n * n), (r / n) % n, r % n]
    }

    pub fn base_point(&self, r: usize) -> [f64; 3] {
        let c = (self.rays_per_axis / 2) as f64;
        let i = self.ray_multi(r);
        [
            -self.direction.u1 + (i[0] as f64 - c) * self.spacing,
            (i[1] as f64 - c) * self.spacing,
            (i[2] as f64 - c) * self.spacing,
        ]
    }

    /// Spacetime point of ray `r` at time `s`.
    pub fn point(&self, r: usize, s: f64) -> [f64; 4] {
        let b = self.base_point(r);
        let l = self.direction.l;
        [s, b[0] + l[1] * s, b[1] + l[2] * s, b[2] + l[3] * s]
    }

    /// `u' = t − x` of ray `r` at time `s`.
    pub fn u_prime(&self, r: usize, s: f64) -> f64 {
        s * (1.0 - self.direction.l[1]) - self.base_point(r)[0]
    }
}

/// Transport solutions `φ_0..φ_M` on every ray and time node.
#[derive(Clone, Debug)]
pub struct GeoOpticsSolution {
    pub bundle: RayBundle,
    pub n: usize,
    pub order: usize,
    /// `terms[j][(r·(steps+1) + k)·n + c]`.
    pub terms: Vec<Vec<C64>>,
    /// Forcing of each level at the nodes (zero for `j = 0`).
    pub forcing: Vec<Vec<C64>>,
    /// Rays on which level `j` is defined (cross-ray stencils shrink the set).
    pub valid: Vec<Vec<bool>>,
    /// Relative defect of each transport equation, re-measured by differencing.
    pub transport_defect: Vec<f64>,
    /// `B_y`, `B_z` per `x`-layer of rays at half-step times.
    by: Vec<Vec<DMatrix<f64>>>,
    bz: Vec<Vec<DMatrix<f64>>>,
}

fn mat_vec(m: &DMatrix<f64>, v: &[C64], out: &mut [C64]) {
    let n = v.len();
    for i in 0..n {
        out[i] = (0..n).map(|j| v[j] * m[(i, j)]).sum();
    }
}

/// Fourth-order first derivative of equally spaced samples.
fn derivative4(y: &[C64], h: f64) -> Vec<C64> {
    let k = y.len();
    assert!(k >= 5);
    let s = 1.0 / (12.0 * h);
    (0..k)
        .map(|i| {
            let d = if i >= 2 && i + 2 < k {
                -y[i + 2] + y[i + 1] * 8.0 - y[i - 1] * 8.0 + y[i - 2]
            } else if i == 0 {
                y[0] * -25.0 + y[1] * 48.0 - y[2] * 36.0 + y[3] * 16.0 - y[4] * 3.0
            } else if i == 1 {
                y[0] * -3.0 - y[1] * 10.0 + y[2] * 18.0 - y[3] * 6.0 + y[4]
            } else if i + 1 == k {
                -(y[k - 1] * -25.0 + y[k - 2] * 48.0 - y[k - 3] * 36.0 + y[k - 4] * 16.0 - y[k - 5] * 3.0)
            } else {
                -(y[k - 1] * -3.0 - y[k - 2] * 10.0 + y[k - 3] * 18.0 - y[k - 4] * 6.0 + y[k - 5])
            };
            d * s
        })
        .collect()
}

fn sup_norm(v: &[C64], n: usize) -> f64 {
    v.chunks(n).map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()).fold(0.0, f64::max)
}

/// Solves `2∂_L φ_j + (L_y B_y + L_z B_z) φ_j = −(□φ_{j−1} − B_y∂_yφ_{j−1} − B_z∂_zφ_{j−1})`
/// for `j = 0..=order` by RK4 along each ray, with `φ_0(0) = initial(ξ)` and
/// `φ_j(0) = 0` for `j ≥ 1`.
pub fn transport_solve<I>(
    coeffs: &dyn TransverseCoefficients,
    bundle: &RayBundle,
    order: usize,
    initial: I,
) -> Result<GeoOpticsSolution>
where
    I: Fn([f64; 3]) -> DVector<C64>,
{
    if bundle.rays_per_axis < 2 * order + 3 {
        return Err(Error::Domain(format!(
            "order {order} needs at least {} rays per axis",
            2 * order + 3
        )));
    }
    let n = coeffs.n();
    let nodes = bundle.steps + 1;
    let rays = bundle.ray_count();
    let half = bundle.dt() / 2.0;
    let by: Vec<Vec<DMatrix<f64>>>;
    let bz: Vec<Vec<DMatrix<f64>>>;
    {
        let layers: Vec<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> = (0..bundle.rays_per_axis)
            .into_par_iter()
            .map(|ix| {
                let r = bundle.ray_index([ix, 0, 0]);
                (0..2 * bundle.steps + 1)
                    .map(|m| coeffs.eval(bundle.u_prime(r, m as f64 * half)))
                    .unzip()
            })
            .collect();
        (by, bz) = layers.into_iter().unzip();
    }
    let mut sol = GeoOpticsSolution {
        bundle: bundle.clone(),
        n,
        order,
        terms: Vec::new(),
        forcing: Vec::new(),
        valid: Vec::new(),
        transport_defect: Vec::new(),
        by,
        bz,
    };
    let mut phi0 = vec![C64::new(0.0, 0.0); rays * nodes * n];
    for r in 0..rays {
        let v = initial(bundle.base_point(r));
        if v.len() != n {
            return Err(Error::Domain(format!("initial data has {} components, expected {n}", v.len())));
        }
        phi0[r * nodes * n..r * nodes * n + n].copy_from_slice(v.as_slice());
    }
    for j in 0..=order {
        let (forcing, valid) = if j == 0 {
            (vec![C64::new(0.0, 0.0); rays * nodes * n], vec![true; rays])
        } else {
            sol.source_terms(j - 1)
        };
        let forcing: Vec<C64> = forcing.iter().map(|z| -z).collect();
        let mut phi = if j == 0 { phi0.clone() } else { vec![C64::new(0.0, 0.0); rays * nodes * n] };
        phi.par_chunks_mut(nodes * n)
            .zip(forcing.par_chunks(nodes * n))
            .enumerate()
            .for_each(|(r, (ray, f))| {
                if valid[r] {
                    sol.integrate_ray(r, ray, f);
                }
            });
        sol.terms.push(phi);
        sol.forcing.push(forcing);
        sol.valid.push(valid);
        let defect = sol.level_defect(j);
        sol.transport_defect.push(defect);
    }
    Ok(sol)
}

impl GeoOpticsSolution {
    fn layer(&self, r: usize) -> usize {
        self.bundle.ray_multi(r)[0]
    }

    /// `G = L_y B_y + L_z B_z` at half-step index `m`.
    fn g_at(&self, r: usize, m: usize) -> DMatrix<f64> {
        let l = self.bundle.direction.l;
        let ix = self.layer(r);
        &self.by[ix][m] * l[2] + &self.bz[ix][m] * l[3]
    }

    fn integrate_ray(&self, r: usize, ray: &mut [C64], forcing: &[C64]) {
        let n = self.n;
        let nodes = self.bundle.steps + 1;
        let dt = self.bundle.dt();
        let f_at = |m: usize| -> Vec<C64> {
            if m % 2 == 0 {
                forcing[(m / 2) * n..(m / 2 + 1) * n].to_vec()
            } else {
                let (base, w) = quad::lagrange4_stencil(nodes, m as f64 / 2.0);
                (0..n)
                    .map(|c| (0..4).map(|a| forcing[(base + a) * n + c] * w[a]).sum())
                    .collect()
            }
        };
        let rhs = |m: usize, y: &[C64]| -> Vec<C64> {
            let mut gy = vec![C64::new(0.0, 0.0); n];
            mat_vec(&self.g_at(r, m), y, &mut gy);
            let f = f_at(m);
            (0..n).map(|c| (f[c] - gy[c]) * 0.5).collect()
        };
        let axpy = |y: &[C64], k: &[C64], a: f64| -> Vec<C64> { y.iter().zip(k).map(|(y, k)| y + k * a).collect() };
        for step in 0..self.bundle.steps {
            let y: Vec<C64> = ray[step * n..(step + 1) * n].to_vec();
            let m = 2 * step;
            let k1 = rhs(m, &y);
            let k2 = rhs(m + 1, &axpy(&y, &k1, dt / 2.0));
            let k3 = rhs(m + 1, &axpy(&y, &k2, dt / 2.0));
            let k4 = rhs(m + 2, &axpy(&y, &k3, dt));
            for c in 0..n {
                ray[(step + 1) * n + c] = y[c] + (k1[c] + (k2[c] + k3[c]) * 2.0 + k4[c]) * (dt / 6.0);
            }
        }
    }

    /// `∂_s φ_j` at the nodes from the transport equation itself.
    fn along_ray_derivative(&self, j: usize, r: usize) -> Vec<C64> {
        let n = self.n;
        let nodes = self.bundle.steps + 1;
        let phi = &self.terms[j][r * nodes * n..(r + 1) * nodes * n];
        let f = &self.forcing[j][r * nodes * n..(r + 1) * nodes * n];
        let mut out = vec![C64::new(0.0, 0.0); nodes * n];
        let mut gy = vec![C64::new(0.0, 0.0); n];
        for k in 0..nodes {
            mat_vec(&self.g_at(r, 2 * k), &phi[k * n..(k + 1) * n], &mut gy);
            for c in 0..n {
                out[k * n + c] = (f[k * n + c] - gy[c]) * 0.5;
            }
        }
        out
    }

    fn level_defect(&self, j: usize) -> f64 {
        let n = self.n;
        let nodes = self.bundle.steps + 1;
        let dt = self.bundle.dt();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for r in (0..self.bundle.ray_count()).filter(|&r| self.valid[j][r]) {
            let phi = &self.terms[j][r * nodes * n..(r + 1) * nodes * n];
            let exact = self.along_ray_derivative(j, r);
            for c in 0..n {
                let comp: Vec<C64> = (0..nodes).map(|k| phi[k * n + c]).collect();
                let d = derivative4(&comp, dt);
                for k in 0..nodes {
                    worst = worst.max((d[k] - exact[k * n + c]).norm());
                    scale = scale.max(exact[k * n + c].norm());
                }
            }
        }
        if scale > 0.0 {
            worst / scale
        } else {
            worst
        }
    }

    /// `S_j = □φ_j − B_y∂_yφ_j − B_z∂_zφ_j` at every node of the rays whose
    /// cross-ray stencil lies inside the level-`j` rays.
    pub fn source_terms(&self, j: usize) -> (Vec<C64>, Vec<bool>) {
        let n = self.n;
        let b = &self.bundle;
        let nodes = b.steps + 1;
        let rays = b.ray_count();
        let na = b.rays_per_axis;
        let d = b.spacing;
        let dt = b.dt();
        let l = b.direction.l;
        let lsp = [l[1], l[2], l[3]];

        let ds: Vec<Vec<C64>> = (0..rays)
            .into_par_iter()
            .map(|r| {
                if self.valid[j][r] {
                    self.along_ray_derivative(j, r)
                } else {
                    Vec::new()
                }
            })
            .collect();
        let valid: Vec<bool> = (0..rays)
            .map(|r| {
                let i = b.ray_multi(r);
                if i.iter().any(|&a| a == 0 || a + 1 == na) {
                    return false;
                }
                (0..27).all(|m| {
                    let off = [m / 9, (m / 3) % 3, m % 3];
                    let q = b.ray_index([i[0] + off[0] - 1, i[1] + off[1] - 1, i[2] + off[2] - 1]);
                    self.valid[j][q]
                })
            })
            .collect();
        let phi = &self.terms[j];
        let mut out = vec![C64::new(0.0, 0.0); rays * nodes * n];
        out.par_chunks_mut(nodes * n).enumerate().for_each(|(r, dst)| {
            if !valid[r] {
                return;
            }
            let i = b.ray_multi(r);
            let nb = |da: isize, db: isize, dc: isize| {
                b.ray_index([
                    (i[0] as isize + da) as usize,
                    (i[1] as isize + db) as usize,
                    (i[2] as isize + dc) as usize,
                ])
            };
            let unit = |a: usize, s: isize| -> [isize; 3] {
                let mut o = [0isize; 3];
                o[a] = s;
                o
            };
            let ix = i[0];
            for c in 0..n {
                let comp = |q: usize, k: usize| phi[(q * nodes + k) * n + c];
                let ds_r: Vec<C64> = (0..nodes).map(|k| ds[r][k * n + c]).collect();
                let dss = derivative4(&ds_r, dt);
                for k in 0..nodes {
                    let center = comp(r, k);
                    let mut box_val = dss[k];
                    for a in 0..3 {
                        let p = unit(a, 1);
                        let m = unit(a, -1);
                        let (qp, qm) = (nb(p[0], p[1], p[2]), nb(m[0], m[1], m[2]));
                        let dsa = (ds[qp][k * n + c] - ds[qm][k * n + c]) / (2.0 * d);
                        let daa = (comp(qp, k) - center * 2.0 + comp(qm, k)) / (d * d);
                        box_val += -dsa * (2.0 * lsp[a]) + daa * (lsp[a] * lsp[a] - 1.0);
                        for bb in (a + 1)..3 {
                            let o = |sa: isize, sb: isize| {
                                let mut v = [0isize; 3];
                                v[a] = sa;
                                v[bb] = sb;
                                nb(v[0], v[1], v[2])
                            };
                            let dab = (comp(o(1, 1), k) - comp(o(1, -1), k) - comp(o(-1, 1), k) + comp(o(-1, -1), k))
                                / (4.0 * d * d);
                            box_val += dab * (2.0 * lsp[a] * lsp[bb]);
                        }
                    }
                    let dy: Vec<C64> = (0..n)
                        .map(|e| (phi[(nb(0, 1, 0) * nodes + k) * n + e] - phi[(nb(0, -1, 0) * nodes + k) * n + e]) / (2.0 * d))
                        .collect();
                    let dz: Vec<C64> = (0..n)
                        .map(|e| (phi[(nb(0, 0, 1) * nodes + k) * n + e] - phi[(nb(0, 0, -1) * nodes + k) * n + e]) / (2.0 * d))
                        .collect();
                    let by = &self.by[ix][2 * k];
                    let bz = &self.bz[ix][2 * k];
                    let first: C64 = (0..n).map(|e| dy[e] * by[(c, e)] + dz[e] * bz[(c, e)]).sum();
                    dst[k * n + c] = box_val - first;
                }
            }
        });
        (out, valid)
    }

    /// `Σ_j φ_j/(iμ)^j` on ray `r` at node `k`.
    pub fn ansatz_amplitude(&self, mu: f64, r: usize, k: usize) -> Vec<C64> {
        let n = self.n;
        let nodes = self.bundle.steps + 1;
        let imu = C64::new(0.0, mu);
        let mut out = vec![C64::new(0.0, 0.0); n];
        let mut w = C64::new(1.0, 0.0);
        for j in 0..=self.order {
            if !self.valid[j][r] {
                break;
            }
            for c in 0..n {
                out[c] += self.terms[j][(r * nodes + k) * n + c] * w;
            }
            w /= imu;
        }
        out
    }

    /// `φ_j` on ray `r` as rows `(t, u', Re φ_j[c], Im φ_j[c] ...)` for all `j`.
    pub fn ray_csv(&self, r: usize) -> String {
        let n = self.n;
        let nodes = self.bundle.steps + 1;
        let mut out = String::from("t,u_prime");
        for j in 0..=self.order {
            for c in 0..n {
                out.push_str(&format!(",re_phi{j}_{c},im_phi{j}_{c}"));
            }
        }
        out.push('\n');
        for k in 0..nodes {
            let t = k as f64 * self.bundle.dt();
            out.push_str(&format!("{t:.17e},{:.17e}", self.bundle.u_prime(r, t)));
            for j in 0..=self.order {
                for c in 0..n {
                    let z = if self.valid[j][r] {
                        self.terms[j][(r * nodes + k) * n + c]
                    } else {
                        C64::new(f64::NAN, f64::NAN)
                    };
                    out.push_str(&format!(",{:.17e},{:.17e}", z.re, z.im));
                }
            }
            out.push('\n');
        }
        out
    }

    /// `φ_0` along the central ray.
    pub fn center_track(&self) -> Vec<DVector<C64>> {
        let n = self.n;
        let nodes = self.bundle.steps + 1;
        let r = self.bundle.center_ray();
        (0..nodes)
            .map(|k| DVector::from_column_slice(&self.terms[0][(r * nodes + k) * n..(r * nodes + k + 1) * n]))
            .collect()
    }
}

/// Size of the ansatz remainder source relative to the ansatz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub mu: f64,
    pub order: usize,
    /// `sup |(iμ)^{−M} S_M| / sup |ansatz|`.
    pub residual: f64,
    pub source_sup: f64,
    pub ansatz_sup: f64,
    pub transport_defect: Vec<f64>,
}

/// With the phase `exp(iμ L̄·ζ)` factored out exactly, the ansatz leaves
/// `(iμ)^{−M}(□φ_M − B_y∂_yφ_M − B_z∂_zφ_M)` once the hierarchy holds. This
/// measures that source on the rays where it can be differenced.
pub fn ansatz_residual(solution: &GeoOpticsSolution, mu: f64) -> ResidualReport {
    let (src, valid) = solution.source_terms(solution.order);
    let n = solution.n;
    let nodes = solution.bundle.steps + 1;
    let mut source_sup: f64 = 0.0;
    let mut ansatz_sup: f64 = 0.0;
    for r in (0..solution.bundle.ray_count()).filter(|&r| valid[r]) {
        source_sup = source_sup.max(sup_norm(&src[r * nodes * n..(r + 1) * nodes * n], n));
        for k in 0..nodes {
            let a = solution.ansatz_amplitude(mu, r, k);
            ansatz_sup = ansatz_sup.max(a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt());
        }
    }
    let source_sup = source_sup / mu.powi(solution.order as i32);
    ResidualReport {
        mu,
        order: solution.order,
        residual: source_sup / ansatz_sup,
        source_sup,
        ansatz_sup,
        transport_defect: solution.transport_defect.clone(),
    }
}

/// `R' = ½ P(t/T)(−L_y) R` with `P(a) = B_y(a u₂ + (1 − a) u₁)`.
pub struct ComparisonOde<'a> {
    pub coeffs: &'a dyn TransverseCoefficients,
    pub direction: NullDirection,
}

impl ComparisonOde<'_> {
    pub fn p(&self, a: f64) -> DMatrix<f64> {
        let d = &self.direction;
        self.coeffs.eval(a * d.u2 + (1.0 - a) * d.u1).0
    }

    fn generator(&self, t: f64) -> DMatrix<f64> {
        self.p(t / self.direction.t_final) * (-0.5 * self.direction.l[2])
    }

    /// Fourth-order Magnus integration with two Gauss points per step;
    /// returns `R` at every step boundary.
    pub fn integrate(&self, r0: &DVector<C64>, steps: usize) -> Vec<DVector<C64>> {
        let h = self.direction.t_final / steps as f64;
        let c = 3f64.sqrt() / 6.0;
        let propagators: Vec<DMatrix<f64>> = (0..steps)
            .into_par_iter()
            .map(|k| {
                let t = k as f64 * h;
                let a1 = self.generator(t + (0.5 - c) * h);
                let a2 = self.generator(t + (0.5 + c) * h);
                let comm = &a1 * &a2 - &a2 * &a1;
                let omega = (&a1 + &a2) * (h / 2.0) - comm * (3f64.sqrt() * h * h / 12.0);
                omega.exp()
            })
            .collect();
        let mut out = Vec::with_capacity(steps + 1);
        let mut r = r0.clone();
        out.push(r.clone());
        for e in &propagators {
            let ec = e.map(|v| C64::new(v, 0.0));
            r = ec * r;
            out.push(r.clone());
        }
        out
    }

    /// `∫_0^a λ(P(τ)) dτ` with `λ` the spectral abscissa.
    pub fn lambda_integral(&self, a: f64) -> f64 {
        quad::integrate(|tau| spectral_abscissa(&self.p(tau)).unwrap_or(f64::NAN), 0.0, a, 1e-10)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum LowerBound {
    /// `margin = log|R(T)|/|R₀| − scale·(∫λ − ε)`.
    Achieved { margin: f64 },
    Failed { margin: f64 },
    Inconclusive { min_gap: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub direction: NullDirection,
    pub exponent_scale: f64,
    pub lambda_integral: f64,
    /// Largest `log|R(t)| − scale·(∫_0^{t/T} λ + ε)` over samples and random data.
    pub upper_margin: f64,
    pub upper_holds: bool,
    pub lower: LowerBound,
    /// `log|R(T)|` for the constructed data.
    pub constructed_log_growth: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonOptions {
    pub steps: usize,
    pub samples: usize,
    pub random_trials: usize,
    pub seed: u64,
    pub gap_samples: usize,
}

impl Default for ComparisonOptions {
    fn default() -> Self {
        ComparisonOptions {
            steps: 4000,
            samples: 50,
            random_trials: 8,
            seed: 0,
            gap_samples: 200,
        }
    }
}

/// Upper bound for random unit data and lower bound for data along the top
/// eigenvector of `P(0)`, both with `ε = 0.1` and unit constant.
pub fn comparison_ode_check(ode: &ComparisonOde<'_>, opts: ComparisonOptions) -> Result<ComparisonReport> {
    let dir = ode.direction;
    if dir.t_final < 1e3 {
        return Err(Error::Domain(format!("comparison check needs T >= 1e3, got {}", dir.t_final)));
    }
    if opts.samples == 0 || opts.steps % opts.samples != 0 {
        return Err(Error::Domain("steps must be a positive multiple of samples".into()));
    }
    let n = ode.coeffs.n();
    let scale = dir.exponent_scale();
    let every = opts.steps / opts.samples;
    let checkpoints: Vec<(usize, f64)> = (1..=opts.samples)
        .map(|s| {
            let a = s as f64 / opts.samples as f64;
            (s * every, ode.lambda_integral(a))
        })
        .collect();
    let lambda_integral = checkpoints.last().expect("samples > 0").1;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut upper_margin = f64::NEG_INFINITY;
    for _ in 0..opts.random_trials {
        let mut r0 = DVector::<C64>::from_fn(n, |_, _| C64::new(StandardNormal.sample(&mut rng), 0.0));
        let nrm = r0.norm();
        r0 /= C64::new(nrm, 0.0);
        let path = ode.integrate(&r0, opts.steps);
        for &(k, lam) in &checkpoints {
            upper_margin = upper_margin.max(path[k].norm().ln() - scale * (lam + BOUND_EPSILON));
        }
    }

    let min_gap = (0..=opts.gap_samples)
        .map(|s| top_eigenpair(&ode.p(s as f64 / opts.gap_samples as f64)).map(|e| e.2))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let (_, v0, _) = top_eigenpair(&ode.p(0.0))?;
    let path = ode.integrate(&v0, opts.steps);
    let constructed_log_growth = path[opts.steps].norm().ln() - v0.norm().ln();
    let margin = constructed_log_growth - scale * (lambda_integral - BOUND_EPSILON);
    let lower = if min_gap < MIN_EIGEN_GAP {
        LowerBound::Inconclusive { min_gap }
    } else if margin >= 0.0 {
        LowerBound::Achieved { margin }
    } else {
        LowerBound::Failed { margin }
    };
    Ok(ComparisonReport {
        direction: dir,
        exponent_scale: scale,
        lambda_integral,
        upper_margin,
        upper_holds: upper_margin <= 0.0,
        lower,
        constructed_log_growth,
    })
}
