//! Finite-difference evolution of the perturbation `ψ = φ − f(t − x)` in 3+1
//! dimensions against the analytic plane-wave background.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{apply_field, GridFunction, VectorField};
use crate::error::{Error, Result};
use crate::nullform::{CouplingTensors, Covector4, SemilinearSystem};
use crate::profiles::{bump_derivatives, WaveProfile};
use crate::quad;
use crate::renormalize::{Renormalizer, TransverseCoefficients};

pub const DEFAULT_CFL: f64 = 0.45;
/// Decay-weight exponent; strict runs use 0.009.
pub const DEFAULT_DELTA: f64 = 0.05;

/// Periodic box `[−W_y, W_y) × [−W_z, W_z)` in `y` and `z`. A single node
/// across gives planar data in that direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Strip {
    pub y_half_width: f64,
    pub z_half_width: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Half-width `L` of the cube (of the `x` extent in strip mode).
    pub half_width: f64,
    pub h: f64,
    pub cfl: f64,
    pub t_max: f64,
    pub strip: Option<Strip>,
}

impl GridSpec {
    pub fn new(half_width: f64, h: f64, t_max: f64) -> Result<Self> {
        let spec = GridSpec {
            half_width,
            h,
            cfl: DEFAULT_CFL,
            t_max,
            strip: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_strip(mut self, y_half_width: f64, z_half_width: f64) -> Result<Self> {
        self.strip = Some(Strip { y_half_width, z_half_width });
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.h > 0.0) {
            problems.push(format!("grid spacing must be positive, got {}", self.h));
        }
        if !(self.cfl > 0.0 && self.cfl <= DEFAULT_CFL) {
            problems.push(format!("CFL ratio must lie in (0, {DEFAULT_CFL}], got {}", self.cfl));
        }
        if !(self.t_max >= 0.0) {
            problems.push(format!("t_max must be non-negative, got {}", self.t_max));
        }
        if !(self.half_width >= self.t_max + 2.0) {
            problems.push(format!(
                "half-width {} is below t_max + 2 = {}",
                self.half_width,
                self.t_max + 2.0
            ));
        }
        let cells = 2.0 * self.half_width / self.h;
        if (cells - cells.round()).abs() > 1e-9 * cells.max(1.0) {
            problems.push("2L/h must be an integer".into());
        }
        if let Some(s) = self.strip {
            for w in [s.y_half_width, s.z_half_width] {
                let c = 2.0 * w / self.h;
                if !(w > 0.0) || (c - c.round()).abs() > 1e-9 * c.max(1.0) || c.round() < 1.0 {
                    problems.push(format!("strip width 2W/h must be a positive integer, got W = {w}"));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        let nx = (2.0 * self.half_width / self.h).round() as usize + 1;
        match self.strip {
            None => [nx, nx, nx],
            Some(s) => [
                nx,
                (2.0 * s.y_half_width / self.h).round() as usize,
                (2.0 * s.z_half_width / self.h).round() as usize,
            ],
        }
    }

    pub fn periodic(&self) -> bool {
        self.strip.is_some()
    }

    /// Largest stable step, `cfl·h/√3`.
    pub fn dt_max(&self) -> f64 {
        self.cfl * self.h / 3f64.sqrt()
    }

    pub fn steps(&self) -> usize {
        (self.t_max / self.dt_max() - 1e-9).ceil().max(0.0) as usize
    }

    /// Step actually used: `t_max` divided into whole steps.
    pub fn dt(&self) -> f64 {
        let s = self.steps();
        if s == 0 {
            self.dt_max()
        } else {
            self.t_max / s as f64
        }
    }

    pub fn origin(&self) -> [f64; 3] {
        match self.strip {
            None => [-self.half_width; 3],
            Some(s) => [-self.half_width, -s.y_half_width, -s.z_half_width],
        }
    }

    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin()[axis] + i as f64 * self.h
    }
}

/// `ψ` and `π = ∂_t ψ`, interleaved: value `c` at node `(ix, iy, iz)` sits at
/// `((ix·ny + iy)·nz + iz)·n + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub n: usize,
    pub dims: [usize; 3],
    pub psi: Vec<f64>,
    pub pi: Vec<f64>,
}

impl FieldState {
    pub fn zero(spec: &GridSpec, n: usize) -> Self {
        let dims = spec.dims();
        let len = dims.iter().product::<usize>() * n;
        FieldState {
            t: 0.0,
            n,
            dims,
            psi: vec![0.0; len],
            pi: vec![0.0; len],
        }
    }

    pub fn sup_psi(&self) -> f64 {
        self.psi.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    #[inline]
    pub fn node(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.dims[1] + iy) * self.dims[2] + iz
    }
}

/// `ψ_c = ε·bump(r)` for the listed components, `π = 0`.
pub fn initial_bump(spec: &GridSpec, eps: f64, n: usize, components: &[usize]) -> Result<FieldState> {
    if !(eps >= 0.0) {
        return Err(Error::Domain(format!("bump amplitude must be non-negative, got {eps}")));
    }
    if let Some(&c) = components.iter().find(|&&c| c >= n) {
        return Err(Error::Domain(format!("component {c} out of range for N = {n}")));
    }
    let mut s = FieldState::zero(spec, n);
    let [nx, ny, nz] = s.dims;
    for ix in 0..nx {
        for iy in 0..ny {
            for iz in 0..nz {
                let (x, y, z) = (spec.coord(0, ix), spec.coord(1, iy), spec.coord(2, iz));
                let b = bump_derivatives((x * x + y * y + z * z).sqrt())[0];
                let k = s.node(ix, iy, iz);
                for &c in components {
                    s.psi[k * n + c] = eps * b;
                }
            }
        }
    }
    Ok(s)
}

/// Right-hand side of the evolved equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhsMode {
    /// `Q(dψ + df) − Q(df)`.
    Nonlinear,
    /// The part of the above that is linear in `dψ`.
    Linearized,
    /// `□ψ = 0`.
    Free,
}

/// Stencil operator bound to a system, a background profile and a grid.
pub struct Fdtd<'a> {
    pub spec: GridSpec,
    pub system: &'a SemilinearSystem,
    pub profile: &'a WaveProfile,
    pub mode: RhsMode,
    dims: [usize; 3],
}

/// Neighbour indices along one axis, `None` on a Dirichlet wall.
#[inline]
fn neighbours(i: usize, n: usize, periodic: bool) -> Option<(usize, usize)> {
    if periodic {
        Some(((i + n - 1) % n, (i + 1) % n))
    } else if i == 0 || i + 1 == n {
        None
    } else {
        Some((i - 1, i + 1))
    }
}

impl<'a> Fdtd<'a> {
    pub fn new(spec: GridSpec, system: &'a SemilinearSystem, profile: &'a WaveProfile, mode: RhsMode) -> Result<Self> {
        spec.validate()?;
        if profile.n() != system.n() {
            return Err(Error::InvalidProfile(format!(
                "profile has {} components, system has {}",
                profile.n(),
                system.n()
            )));
        }
        Ok(Fdtd {
            dims: spec.dims(),
            spec,
            system,
            profile,
            mode,
        })
    }

    pub fn n(&self) -> usize {
        self.system.n()
    }

    /// `f'(t − x_i)` and `Q(df)` for every `x` layer.
    fn background(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let mut fp = vec![0.0; self.dims[0] * n];
        let mut q0 = vec![0.0; self.dims[0] * n];
        let mut grads = vec![Covector4::default(); n];
        for ix in 0..self.dims[0] {
            let u = t - self.spec.coord(0, ix);
            self.profile.eval_into(u, 1, &mut fp[ix * n..(ix + 1) * n]);
            for c in 0..n {
                grads[c] = fp[ix * n + c] * Covector4::kappa();
            }
            self.system.tensor().quadratic_rhs_into(&grads, &mut q0[ix * n..(ix + 1) * n]);
        }
        (fp, q0)
    }

    /// Central-difference gradient `(π, ∂_x, ∂_y, ∂_z)` of every component at
    /// an interior node; `None` on walls.
    #[inline]
    fn gradients(&self, psi: &[f64], pi: &[f64], ix: usize, iy: usize, iz: usize, out: &mut [Covector4]) -> Option<()> {
        let [nx, ny, nz] = self.dims;
        let per = self.spec.periodic();
        let (xm, xp) = neighbours(ix, nx, false)?;
        let (ym, yp) = neighbours(iy, ny, per)?;
        let (zm, zp) = neighbours(iz, nz, per)?;
        let n = self.n();
        let at = |a: usize, b: usize, c: usize| ((a * ny + b) * nz + c) * n;
        let k = at(ix, iy, iz);
        let inv = 0.5 / self.spec.h;
        for c in 0..n {
            out[c] = Covector4::new(
                pi[k + c],
                (psi[at(xp, iy, iz) + c] - psi[at(xm, iy, iz) + c]) * inv,
                (psi[at(ix, yp, iz) + c] - psi[at(ix, ym, iz) + c]) * inv,
                (psi[at(ix, iy, zp) + c] - psi[at(ix, iy, zm) + c]) * inv,
            );
        }
        Some(())
    }

    /// Writes the source `□ψ = S(∂ψ)` at interior nodes into `out` and, when
    /// `with_laplacian`, adds the 7-point Laplacian (giving `∂_t π`).
    fn assemble(&self, psi: &[f64], pi: &[f64], t: f64, with_laplacian: bool, out: &mut [f64]) {
        let n = self.n();
        let [_, ny, nz] = self.dims;
        let (fp, q0) = if self.mode == RhsMode::Free {
            (Vec::new(), Vec::new())
        } else {
            self.background(t)
        };

        let per = self.spec.periodic();
        let inv_h2 = 1.0 / (self.spec.h * self.spec.h);
        let tensor = self.system.tensor();
        let scratch = || {
            (
                vec![Covector4::default(); n],
                vec![Covector4::default(); n],
                vec![0.0; n],
                vec![0.0; n],
            )
        };
        let min_slabs = (4096 / (ny * nz)).max(1);
        out.par_chunks_mut(ny * nz * n).enumerate().with_min_len(min_slabs).for_each_init(scratch, |(grads, shifted, q1, q2), (ix, slab)| {
            let kappa = Covector4::kappa();
            for iy in 0..ny {
                for iz in 0..nz {
                    let local = (iy * nz + iz) * n;
                    if self.gradients(psi, pi, ix, iy, iz, grads).is_none() {
                        slab[local..local + n].iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    match self.mode {
                        RhsMode::Free => q1.iter_mut().for_each(|v| *v = 0.0),
                        RhsMode::Nonlinear | RhsMode::Linearized => {
                            for c in 0..n {
                                shifted[c] = grads[c] + fp[ix * n + c] * kappa;
                            }
                            tensor.quadratic_rhs_into(shifted, q1);
                            for c in 0..n {
                                q1[c] -= q0[ix * n + c];
                            }
                            if self.mode == RhsMode::Linearized {
                                tensor.quadratic_rhs_into(grads, q2);
                                for c in 0..n {
                                    q1[c] -= q2[c];
                                }
                            }
                        }
                    }
                    for c in 0..n {
                        let mut v = q1[c];
                        if with_laplacian {
                            let (xm, xp) = (ix - 1, ix + 1);
                            let (ym, yp) = neighbours(iy, ny, per).expect("interior");
                            let (zm, zp) = neighbours(iz, nz, per).expect("interior");
                            let at = |a: usize, b: usize, d: usize| ((a * ny + b) * nz + d) * n + c;
                            let centre = psi[at(ix, iy, iz)];
                            v += (psi[at(xp, iy, iz)]
                                + psi[at(xm, iy, iz)]
                                + psi[at(ix, yp, iz)]
                                + psi[at(ix, ym, iz)]
                                + psi[at(ix, iy, zp)]
                                + psi[at(ix, iy, zm)]
                                - 6.0 * centre)
                                * inv_h2;
                        }
                        slab[local + c] = v;
                    }
                }
            }
        });
    }

    /// The source term alone, `Q(dψ + df) − Q(df)` (or its linear part).
    pub fn source_term(&self, state: &FieldState) -> Vec<f64> {
        let mut out = vec![0.0; state.psi.len()];
        self.assemble(&state.psi, &state.pi, state.t, false, &mut out);
        out
    }

    /// `∂_t π` at the state.
    pub fn acceleration(&self, state: &FieldState) -> Vec<f64> {
        let mut out = vec![0.0; state.psi.len()];
        self.assemble(&state.psi, &state.pi, state.t, true, &mut out);
        out
    }

    /// Kick-drift-kick step. The closing kick needs `π` at the new time, so it
    /// is predicted with the half-step value and corrected once. `accel`
    /// holds `∂_t π` at the current state and is updated in place.
    pub fn step(&self, state: &mut FieldState, accel: &mut Vec<f64>, dt: f64) -> Result<()> {
        let half = 0.5 * dt;
        state
            .pi
            .par_iter_mut()
            .zip(accel.par_iter())
            .for_each(|(p, a)| *p += half * a);
        state
            .psi
            .par_iter_mut()
            .zip(state.pi.par_iter())
            .for_each(|(q, p)| *q += dt * p);
        state.t += dt;
        let pi_half = state.pi.clone();
        self.assemble(&state.psi, &pi_half, state.t, true, accel);
        if self.mode != RhsMode::Free {
            let predicted: Vec<f64> = pi_half.par_iter().zip(accel.par_iter()).map(|(p, a)| p + half * a).collect();
            self.assemble(&state.psi, &predicted, state.t, true, accel);
        }
        state
            .pi
            .par_iter_mut()
            .zip(pi_half.par_iter().zip(accel.par_iter()))
            .for_each(|(p, (ph, a))| *p = ph + half * a);
        let finite = state.psi.par_iter().chain(state.pi.par_iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NumericalBlowup { t: state.t });
        }
        Ok(())
    }
}

/// Renormalizer data for `γ = A(t − x)ψ`.
pub struct Transform<'a> {
    pub renormalizer: &'a Renormalizer,
    pub couplings: &'a CouplingTensors,
}

impl Transform<'_> {
    /// `A(u)` and `A'(u)`.
    fn at(&self, profile: &WaveProfile, u: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let gen = self.couplings.a_dot(&profile.eval(u, 1));
        (self.renormalizer.a_at(u), self.renormalizer.a_prime_at(u, &gen))
    }
}

/// `Q(u) = ∫_{−1}^u (|B_y|² + |B_z|²)` in operator norms, tabulated on `[−1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiplierWeight {
    h: f64,
    q: Vec<f64>,
}

fn operator_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

impl MultiplierWeight {
    pub fn new(coeffs: &dyn TransverseCoefficients, h: f64) -> Self {
        let steps = (2.0 / h).round() as usize;
        let h = 2.0 / steps as f64;
        let dens: Vec<f64> = (0..=steps)
            .map(|k| {
                let (by, bz) = coeffs.eval(-1.0 + k as f64 * h);
                operator_norm(&by).powi(2) + operator_norm(&bz).powi(2)
            })
            .collect();
        MultiplierWeight {
            h,
            q: quad::cumulative_integral(&dens, h),
        }
    }

    pub fn q(&self, u: f64) -> f64 {
        let s = (u + 1.0) / self.h;
        if s <= 0.0 {
            return 0.0;
        }
        let k = s.floor() as usize;
        if k + 1 >= self.q.len() {
            return *self.q.last().expect("nonempty");
        }
        let w = s - k as f64;
        self.q[k] * (1.0 - w) + self.q[k + 1] * w
    }

    /// `g = √Q(u') √(v' + 1)` with `u' = t − x`, `v' = t + x`.
    pub fn g(&self, t: f64, x: f64) -> f64 {
        self.q(t - x).max(0.0).sqrt() * (t + x + 1.0).max(0.0).sqrt()
    }
}

/// Pointwise and integrated diagnostics at one output time.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub t: f64,
    /// `½Σ(π² + |D₊ψ|²)h³`.
    pub flat_energy: f64,
    /// Energy conserved exactly by the free scheme: the flat energy minus `dt²/8 Σ(Δ_hψ)² h³`.
    pub discrete_energy: f64,
    pub sup_psi: f64,
    pub sup_dpsi: f64,
    /// `sup (1+t+r)^{1−δ}(1+|t−r|)^{1/2}|∂ψ|`.
    pub decay_weighted: f64,
    /// `sup (1+t+r)^{3/2−δ}|∂̄ψ|`.
    pub good_weighted: f64,
    /// `Σ (1+|t−r|)^{−1−δ}|∂̄ψ|² h³`.
    pub good_norm: f64,
    /// `flat_energy` of the nodewise `γ = Aψ`, `∂_tγ = A∂_tψ + A'ψ`.
    pub gamma_energy: Option<f64>,
    /// `½Σ_{|t−x|≤1} e^{−g}(|∂_yη|² + |∂_zη|² + |∂_tη + ∂_xη|²)h³`, cells cut
    /// by the zone edge counted by their overlap.
    pub multiplier_energy: Option<f64>,
    /// The same sum without the weight.
    pub zone_energy: Option<f64>,
    /// `Σ_{|α|≤1}` flat energies of `∂Γ^αψ`.
    pub e1: Option<f64>,
    /// `Σ_{|α|≤2}` flat energies of `∂Γ^αψ`.
    pub e2: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsLedger {
    pub delta: f64,
    pub rows: Vec<LedgerRow>,
}

impl DiagnosticsLedger {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.17e}"));
        let mut out = String::from(
            "t,flat_energy,discrete_energy,sup_psi,sup_dpsi,decay_weighted,good_weighted,good_norm,gamma_energy,multiplier_energy,zone_energy,e1,e2\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{},{},{},{},{}\n",
                r.t,
                r.flat_energy,
                r.discrete_energy,
                r.sup_psi,
                r.sup_dpsi,
                r.decay_weighted,
                r.good_weighted,
                r.good_norm,
                opt(r.gamma_energy),
                opt(r.multiplier_energy),
                opt(r.zone_energy),
                opt(r.e1),
                opt(r.e2)
            ));
        }
        out
    }

    pub fn series(&self, f: impl Fn(&LedgerRow) -> f64) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.t, f(r))).collect()
    }
}

#[derive(Default)]
struct Partial {
    flat: f64,
    lap_sq: f64,
    sup_dpsi: f64,
    decay: f64,
    good_w: f64,
    good_norm: f64,
    gamma: f64,
    mult: f64,
    zone: f64,
}

impl Partial {
    fn merge(mut self, o: Partial) -> Partial {
        self.flat += o.flat;
        self.lap_sq += o.lap_sq;
        self.sup_dpsi = self.sup_dpsi.max(o.sup_dpsi);
        self.decay = self.decay.max(o.decay);
        self.good_w = self.good_w.max(o.good_w);
        self.good_norm += o.good_norm;
        self.gamma += o.gamma;
        self.mult += o.mult;
        self.zone += o.zone;
        self
    }
}

/// Nodewise `γ = Aψ`, `∂_tγ = A∂_tψ + A'ψ`.
fn gamma_state(profile: &WaveProfile, spec: &GridSpec, tr: &Transform<'_>, state: &FieldState) -> FieldState {
    let n = state.n;
    let slab = state.dims[1] * state.dims[2] * n;
    let mut out = state.clone();
    for ix in 0..state.dims[0] {
        let (a, a_prime) = tr.at(profile, state.t - spec.coord(0, ix));
        for node in (ix * slab..(ix + 1) * slab).step_by(n) {
            for i in 0..n {
                let (mut v, mut p) = (0.0, 0.0);
                for j in 0..n {
                    v += a[(i, j)] * state.psi[node + j];
                    p += a[(i, j)] * state.pi[node + j] + a_prime[(i, j)] * state.psi[node + j];
                }
                out.psi[node + i] = v;
                out.pi[node + i] = p;
            }
        }
    }
    out
}

/// Forward-difference energy `½(π² + |D₊ψ|²)h³` of one node, edges into
/// Dirichlet walls included. Leapfrog conserves its sum up to `O(dt²)`.
fn forward_energy(spec: &GridSpec, state: &FieldState, [ix, iy, iz]: [usize; 3]) -> f64 {
    let n = state.n;
    let [nx, ny, nz] = state.dims;
    let h = spec.h;
    let per = spec.periodic();
    let at = |a: usize, b: usize, c: usize| ((a * ny + b) * nz + c) * n;
    let k = at(ix, iy, iz);
    let mut e = 0.0;
    for c in 0..n {
        let v = state.psi[k + c];
        e += state.pi[k + c].powi(2);
        if ix + 1 < nx {
            e += ((state.psi[at(ix + 1, iy, iz) + c] - v) / h).powi(2);
        }
        if per || iy + 1 < ny {
            e += ((state.psi[at(ix, (iy + 1) % ny, iz) + c] - v) / h).powi(2);
        }
        if per || iz + 1 < nz {
            e += ((state.psi[at(ix, iy, (iz + 1) % nz) + c] - v) / h).powi(2);
        }
        if ix == 0 {
            e += (v / h).powi(2);
        }
        if !per && iy == 0 {
            e += (v / h).powi(2);
        }
        if !per && iz == 0 {
            e += (v / h).powi(2);
        }
    }
    0.5 * e * h * h * h
}

/// Diagnostics of one state. `transform` adds the `γ` energy; `weight` adds
/// the multiplier energy of `γ` (of `ψ` without a transform) over `|t − x| ≤ 1`.
pub fn state_diagnostics(
    fdtd: &Fdtd<'_>,
    state: &FieldState,
    dt: f64,
    delta: f64,
    transform: Option<&Transform<'_>>,
    weight: Option<&MultiplierWeight>,
) -> LedgerRow {
    let n = state.n;
    let [nx, ny, nz] = state.dims;
    let spec = &fdtd.spec;
    let h = spec.h;
    let h3 = h * h * h;
    let t = state.t;
    let per = spec.periodic();
    let layers: Vec<Option<(DMatrix<f64>, DMatrix<f64>)>> = (0..nx)
        .map(|ix| transform.map(|tr| tr.at(fdtd.profile, t - spec.coord(0, ix))))
        .collect();
    let gamma_field = transform.map(|tr| gamma_state(fdtd.profile, spec, tr, state));
    let p = (0..nx)
        .into_par_iter()
        .map(|ix| {
            let mut acc = Partial::default();
            let mut grads = vec![Covector4::default(); n];
            let x = spec.coord(0, ix);
            let at = |a: usize, b: usize, c: usize| (a * ny + b) * nz + c;
            for iy in 0..ny {
                for iz in 0..nz {
                    let k = at(ix, iy, iz);
                    acc.flat += forward_energy(spec, state, [ix, iy, iz]);
                    if let Some(g) = &gamma_field {
                        acc.gamma += forward_energy(spec, g, [ix, iy, iz]);
                    }
                    if fdtd.gradients(&state.psi, &state.pi, ix, iy, iz, &mut grads).is_none() {
                        continue;
                    }
                    let (y, z) = (spec.coord(1, iy), spec.coord(2, iz));
                    let r = (x * x + y * y + z * z).sqrt();
                    let mut d2 = 0.0;
                    let mut good2 = 0.0;
                    for (c, g) in grads.iter().enumerate() {
                        let [pt, px, py, pz] = g.0;
                        d2 += pt * pt + px * px + py * py + pz * pz;
                        if r > 1e-12 {
                            let (ox, oy, oz) = (x / r, y / r, z / r);
                            let radial = ox * px + oy * py + oz * pz;
                            let l = pt + radial;
                            let (tx, ty, tz) = (px - radial * ox, py - radial * oy, pz - radial * oz);
                            good2 += l * l + tx * tx + ty * ty + tz * tz;
                        } else {
                            good2 += pt * pt + px * px + py * py + pz * pz;
                        }
                        let (xm, xp) = (ix - 1, ix + 1);
                        let (ym, yp) = neighbours(iy, ny, per).expect("interior");
                        let (zm, zp) = neighbours(iz, nz, per).expect("interior");
                        let lap = (state.psi[at(xp, iy, iz) * n + c]
                            + state.psi[at(xm, iy, iz) * n + c]
                            + state.psi[at(ix, yp, iz) * n + c]
                            + state.psi[at(ix, ym, iz) * n + c]
                            + state.psi[at(ix, iy, zp) * n + c]
                            + state.psi[at(ix, iy, zm) * n + c]
                            - 6.0 * state.psi[k * n + c])
                            / (h * h);
                        acc.lap_sq += lap * lap * h3;
                    }
                    let d = d2.sqrt();
                    let u = (t - r).abs();
                    acc.sup_dpsi = acc.sup_dpsi.max(d);
                    acc.decay = acc.decay.max((1.0 + t + r).powf(1.0 - delta) * (1.0 + u).sqrt() * d);
                    acc.good_w = acc.good_w.max((1.0 + t + r).powf(1.5 - delta) * good2.sqrt());
                    acc.good_norm += (1.0 + u).powf(-1.0 - delta) * good2 * h3;

                    if transform.is_some() || weight.is_some() {
                        // ∂γ = A∂ψ + A'ψ ∂u with u = t − x.
                        let psi_k = &state.psi[k * n..(k + 1) * n];
                        let mut dg = vec![[0.0; 4]; n];
                        for i in 0..n {
                            for j in 0..n {
                                let (a, ap) = match &layers[ix] {
                                    Some((a, ap)) => (a[(i, j)], ap[(i, j)]),
                                    None => (if i == j { 1.0 } else { 0.0 }, 0.0),
                                };
                                let g = grads[j].0;
                                dg[i][0] += a * g[0] + ap * psi_k[j];
                                dg[i][1] += a * g[1] - ap * psi_k[j];
                                dg[i][2] += a * g[2];
                                dg[i][3] += a * g[3];
                            }
                        }
                        if let Some(w) = weight {
                            // Fraction of the cell [x − h/2, x + h/2] inside |t − x| ≤ 1.
                            let frac = (((t + 1.0).min(x + 0.5 * h) - (t - 1.0).max(x - 0.5 * h)) / h).clamp(0.0, 1.0);
                            if frac > 0.0 {
                                let dens: f64 = dg
                                    .iter()
                                    .map(|v| v[2] * v[2] + v[3] * v[3] + (v[0] + v[1]).powi(2))
                                    .sum();
                                acc.mult += frac * (-w.g(t, x)).exp() * 0.5 * dens * h3;
                                acc.zone += frac * 0.5 * dens * h3;
                            }
                        }
                    }
                }
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        // In layer order, so the sums do not depend on work stealing.
        .fold(Partial::default(), Partial::merge);
    LedgerRow {
        t,
        flat_energy: p.flat,
        discrete_energy: p.flat - dt * dt / 8.0 * p.lap_sq,
        sup_psi: state.sup_psi(),
        sup_dpsi: p.sup_dpsi,
        decay_weighted: p.decay,
        good_weighted: p.good_w,
        good_norm: p.good_norm,
        gamma_energy: transform.map(|_| p.gamma),
        multiplier_energy: weight.map(|_| p.mult),
        zone_energy: weight.map(|_| p.zone),
        e1: None,
        e2: None,
    }
}

/// Flat energies of `∂Γ^αψ` for `|α| ≤ order`, from seven equally spaced
/// time slices centred on the evaluation time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedNorms {
    pub t: f64,
    pub order: usize,
    /// `per_order[k] = Σ_{|α|=k}`.
    pub per_order: Vec<f64>,
}

impl WeightedNorms {
    pub fn e1(&self) -> f64 {
        self.per_order.iter().take(2).sum()
    }

    pub fn e2(&self) -> Option<f64> {
        (self.order >= 2).then(|| self.per_order.iter().take(3).sum())
    }
}

fn flat_energy_at_centre(g: &GridFunction) -> Result<f64> {
    let mut g = g.clone();
    while g.dims[0] > 3 {
        g = g.trim_t();
    }
    let mut e = 0.0;
    for d in [VectorField::Dt, VectorField::Dx, VectorField::Dy, VectorField::Dz] {
        e += 0.5 * apply_field(d, &g)?.slice_energy(0);
    }
    Ok(e)
}

pub fn weighted_norms(spec: &GridSpec, window: &[FieldState], order: usize) -> Result<WeightedNorms> {
    if window.len() != 7 {
        return Err(Error::Domain(format!("weighted norms need 7 time slices, got {}", window.len())));
    }
    if order > 2 {
        return Err(Error::Domain("weighted norms support orders 0, 1, 2".into()));
    }
    let n = window[0].n;
    let dims = window[0].dims;
    let dt = window[1].t - window[0].t;
    let o = spec.origin();
    let mut per_order = vec![0.0; order + 1];
    for c in 0..n {
        let values: Vec<f64> = window
            .iter()
            .flat_map(|s| s.psi.iter().skip(c).step_by(n).copied())
            .collect();
        let g0 = GridFunction::from_values(
            [window[0].t, o[0], o[1], o[2]],
            [dt, spec.h, spec.h, spec.h],
            [7, dims[0], dims[1], dims[2]],
            values,
        );
        per_order[0] += flat_energy_at_centre(&g0)?;
        if order == 0 {
            continue;
        }
        for outer in VectorField::ALL {
            let g1 = apply_field(outer, &g0)?;
            per_order[1] += flat_energy_at_centre(&g1)?;
            if order == 2 {
                for inner in VectorField::ALL {
                    per_order[2] += flat_energy_at_centre(&apply_field(inner, &g1)?)?;
                }
            }
        }
    }
    Ok(WeightedNorms {
        t: window[3].t,
        order,
        per_order,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedSchedule {
    pub order: usize,
    /// Evaluate at output times that are multiples of this.
    pub every: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub output_every: f64,
    pub delta: f64,
    pub weighted: Option<WeightedSchedule>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            output_every: 0.5,
            delta: DEFAULT_DELTA,
            weighted: None,
        }
    }
}

/// Runs to `t_max`, recording diagnostics every `output_every`. Weighted norms
/// need three steps past their time, so the run continues briefly past the
/// last such time; the returned state is the one at `t_max`.
pub fn evolve(
    fdtd: &Fdtd<'_>,
    initial: FieldState,
    opts: &EvolveOptions,
    transform: Option<&Transform<'_>>,
    weight: Option<&MultiplierWeight>,
) -> Result<(DiagnosticsLedger, FieldState)> {
    let spec = fdtd.spec;
    let steps = spec.steps();
    let dt = spec.dt();
    let stride = ((opts.output_every / dt).round() as usize).max(1);
    let mut outputs: Vec<usize> = (0..=steps).step_by(stride).collect();
    if *outputs.last().expect("nonempty") != steps {
        outputs.push(steps);
    }
    let weighted_steps: Vec<usize> = match opts.weighted {
        Some(w) if w.every > 0.0 => outputs
            .iter()
            .copied()
            .filter(|&s| {
                let t = s as f64 * dt;
                let m = t / w.every;
                (m - m.round()).abs() * w.every < 0.5 * dt * stride as f64 && s >= 3
            })
            .collect(),
        _ => Vec::new(),
    };
    let last_needed = weighted_steps.iter().map(|s| s + 3).max().unwrap_or(0).max(steps);

    let mut ledger = DiagnosticsLedger {
        delta: opts.delta,
        rows: Vec::new(),
    };
    let mut state = initial;
    let mut accel = fdtd.acceleration(&state);
    let mut window: Vec<FieldState> = Vec::new();
    let mut final_state = None;
    for s in 0..=last_needed {
        if s > 0 {
            fdtd.step(&mut state, &mut accel, dt)?;
        }
        if outputs.contains(&s) {
            ledger
                .rows
                .push(state_diagnostics(fdtd, &state, dt, opts.delta, transform, weight));
        }
        if s == steps {
            final_state = Some(state.clone());
        }
        if let Some(&centre) = weighted_steps.iter().find(|&&c| s + 3 >= c && s <= c + 3) {
            window.push(state.clone());
            if s == centre + 3 {
                let order = opts.weighted.expect("scheduled").order;
                let w = weighted_norms(&spec, &window, order)?;
                window.clear();
                let t = centre as f64 * dt;
                if let Some(row) = ledger.rows.iter_mut().find(|r| (r.t - t).abs() < 1e-9 * (1.0 + t)) {
                    row.e1 = Some(w.e1());
                    row.e2 = w.e2();
                }
            }
        }
    }
    Ok((ledger, final_state.expect("reached t_max")))
}

/// Sidecar describing a flat binary snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub dims: [usize; 3],
    pub spacing: f64,
    pub origin: [f64; 3],
    pub time: f64,
    pub components: Vec<String>,
    /// Arrays in file order.
    pub arrays: Vec<String>,
    pub layout: String,
    pub dtype: String,
    pub endianness: String,
}

/// Writes `<stem>.bin` (ψ then π, little-endian `f64`) and `<stem>.json`.
pub fn write_snapshot(spec: &GridSpec, state: &FieldState, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
    let bin = dir.join(format!("{stem}.bin"));
    let json = dir.join(format!("{stem}.json"));
    let mut bytes = Vec::with_capacity(16 * state.psi.len());
    for v in state.psi.iter().chain(&state.pi) {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(&bin)?.write_all(&bytes)?;
    let meta = SnapshotMeta {
        dims: state.dims,
        spacing: spec.h,
        origin: spec.origin(),
        time: state.t,
        components: (0..state.n).map(|c| format!("psi_{c}")).collect(),
        arrays: vec!["psi".into(), "pi".into()],
        layout: "((ix*ny + iy)*nz + iz)*n + c".into(),
        dtype: "f64".into(),
        endianness: "little".into(),
    };
    fs::write(&json, serde_json::to_string_pretty(&meta)?)?;
    Ok((bin, json))
}

/// Reads a snapshot written by [`write_snapshot`].
pub fn read_snapshot(bin: &Path, json: &Path) -> Result<(SnapshotMeta, FieldState)> {
    let meta: SnapshotMeta = serde_json::from_str(&fs::read_to_string(json)?)?;
    let bytes = fs::read(bin)?;
    let n = meta.components.len();
    let len = meta.dims.iter().product::<usize>() * n;
    if bytes.len() != 16 * len {
        return Err(Error::Domain(format!("snapshot holds {} bytes, expected {}", bytes.len(), 16 * len)));
    }
    let vals: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    let state = FieldState {
        t: meta.time,
        n,
        dims: meta.dims,
        psi: vals[..len].to_vec(),
        pi: vals[len..].to_vec(),
    };
    Ok((meta, state))
}
