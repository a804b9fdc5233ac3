//! Compactly supported plane-wave profiles `f: R → R^N` and their
//! Hölder-1/2 seminorm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nullform::{Covector4, SemilinearSystem};

/// Default grid step of the seminorm search.
pub const DEFAULT_HU: f64 = 1e-3;

/// Shape of one profile component before scaling by its amplitude.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "shape")]
pub enum Shape {
    /// `exp(1 − 1/(1 − u²))` on `|u| < 1`.
    Bump,
    /// `p(u)·exp(1 − 1/(1 − u²))` with `p(u) = Σ_k coeffs[k] u^k`.
    PolyBump { coeffs: Vec<f64> },
    /// `f(u) = u` on `[−1, 1]` and 0 outside. Not smooth; for tests only.
    Linear,
}

/// Derivatives `[g, g', g'', g''']` of the normalized bump at `u`.
pub fn bump_derivatives(u: f64) -> [f64; 4] {
    if u.abs() >= 1.0 {
        return [0.0; 4];
    }
    let s = 1.0 - u * u;
    let inv = 1.0 / s;
    // exp(1 − 1/s) underflows well before s reaches the subnormal range.
    if inv > 740.0 {
        return [0.0; 4];
    }
    let g = (1.0 - inv).exp();
    let p1 = -2.0 * u * inv * inv;
    let p2 = -2.0 * inv * inv - 8.0 * u * u * inv * inv * inv;
    let p3 = -24.0 * u * inv * inv * inv - 48.0 * u * u * u * inv * inv * inv * inv;
    [
        g,
        p1 * g,
        (p2 + p1 * p1) * g,
        (p3 + 3.0 * p1 * p2 + p1 * p1 * p1) * g,
    ]
}

impl Shape {
    /// Derivative of the given order (0..=3) at `u`.
    pub fn derivative(&self, u: f64, order: usize) -> f64 {
        assert!(order <= 3, "derivatives are available up to order 3");
        match self {
            Shape::Bump => bump_derivatives(u)[order],
            Shape::PolyBump { coeffs } => {
                if u.abs() >= 1.0 {
                    return 0.0;
                }
                let g = bump_derivatives(u);
                let p = poly_eval_derivs(coeffs, u);
                let binom = [[1.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0], [1.0, 2.0, 1.0, 0.0], [1.0, 3.0, 3.0, 1.0]];
                (0..=order).map(|k| binom[order][k] * p[k] * g[order - k]).sum()
            }
            Shape::Linear => {
                if u.abs() > 1.0 {
                    0.0
                } else {
                    match order {
                        0 => u,
                        1 => 1.0,
                        _ => 0.0,
                    }
                }
            }
        }
    }
}

fn poly_eval_derivs(coeffs: &[f64], u: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (order, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        let mut pow = 1.0;
        for (k, &ck) in coeffs.iter().enumerate().skip(order) {
            let falling: f64 = (0..order).map(|m| (k - m) as f64).product();
            acc += ck * falling * pow;
            pow *= u;
        }
        *slot = acc;
    }
    out
}

/// One component `c·shape(u)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileComponent {
    pub amplitude: f64,
    #[serde(flatten)]
    pub shape: Shape,
}

/// The vector-valued plane-wave profile.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveProfile {
    components: Vec<ProfileComponent>,
    h_u: f64,
}

/// Scenario form: `{"shape": "bump", "amplitudes": [...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub shape: String,
    pub amplitudes: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_u: Option<f64>,
}

impl WaveProfile {
    pub fn new(components: Vec<ProfileComponent>) -> Self {
        WaveProfile {
            components,
            h_u: DEFAULT_HU,
        }
    }

    /// Every component a bump with the given amplitude.
    pub fn bump(amplitudes: &[f64]) -> Self {
        Self::with_shape(Shape::Bump, amplitudes)
    }

    pub fn with_shape(shape: Shape, amplitudes: &[f64]) -> Self {
        Self::new(
            amplitudes
                .iter()
                .map(|&amplitude| ProfileComponent {
                    amplitude,
                    shape: shape.clone(),
                })
                .collect(),
        )
    }

    pub fn zero(n: usize) -> Self {
        Self::bump(&vec![0.0; n])
    }

    pub fn with_step(mut self, h_u: f64) -> Self {
        assert!(h_u > 0.0 && h_u <= 1.0);
        self.h_u = h_u;
        self
    }

    pub fn from_spec(spec: &ProfileSpec) -> Result<Self> {
        let shape = match spec.shape.as_str() {
            "bump" => Shape::Bump,
            "poly_bump" => Shape::PolyBump {
                coeffs: spec
                    .coeffs
                    .clone()
                    .ok_or_else(|| Error::InvalidProfile("poly_bump needs \"coeffs\"".into()))?,
            },
            "linear" => Shape::Linear,
            other => return Err(Error::InvalidProfile(format!("unknown shape {other:?}"))),
        };
        if spec.amplitudes.is_empty() || spec.amplitudes.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidProfile("amplitudes must be finite and nonempty".into()));
        }
        let mut p = Self::with_shape(shape, &spec.amplitudes);
        if let Some(h) = spec.h_u {
            if !(h > 0.0 && h <= 0.1) {
                return Err(Error::InvalidProfile(format!("h_u = {h} outside (0, 0.1]")));
            }
            p.h_u = h;
        }
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.components.len()
    }

    pub fn h_u(&self) -> f64 {
        self.h_u
    }

    pub fn components(&self) -> &[ProfileComponent] {
        &self.components
    }

    /// Indices of components that are not identically zero.
    pub fn active(&self) -> Vec<usize> {
        self.components
            .iter()
            .enumerate()
            .filter(|(_, c)| c.amplitude != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// `f_i^{(order)}(u)`.
    #[inline]
    pub fn component(&self, i: usize, u: f64, order: usize) -> f64 {
        let c = &self.components[i];
        if c.amplitude == 0.0 {
            return 0.0;
        }
        c.amplitude * c.shape.derivative(u, order)
    }

    /// `f^{(order)}(u)` as a vector.
    pub fn eval(&self, u: f64, order: usize) -> Vec<f64> {
        (0..self.n()).map(|i| self.component(i, u, order)).collect()
    }

    pub fn eval_into(&self, u: f64, order: usize, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.component(i, u, order);
        }
    }

    /// Seminorm of component `i` on the profile's own grid step.
    pub fn holder_half_seminorm(&self, i: usize) -> HolderHalf {
        holder_half_seminorm(self, i)
    }
}

/// `sup |f(u_1) − f(u_0)| / √(u_1 − u_0)` with its witness pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderHalf {
    pub value: f64,
    pub u0: f64,
    pub u1: f64,
}

/// Exhaustive search over grid pairs `−1 ≤ u_0 < u_1 ≤ 1` at the profile's step.
pub fn holder_half_seminorm(profile: &WaveProfile, i: usize) -> HolderHalf {
    holder_half_on_grid(profile, i, profile.h_u)
}

/// As [`holder_half_seminorm`] with an explicit grid step.
pub fn holder_half_on_grid(profile: &WaveProfile, i: usize, h: f64) -> HolderHalf {
    assert!(i < profile.n(), "component index out of range");
    let n = (2.0 / h).round() as usize;
    let nodes: Vec<f64> = (0..=n).map(|k| -1.0 + 2.0 * k as f64 / n as f64).collect();
    let vals: Vec<f64> = nodes.iter().map(|&u| profile.component(i, u, 0)).collect();
    let mut best = HolderHalf {
        value: 0.0,
        u0: -1.0,
        u1: 1.0,
    };
    for a in 0..n {
        let fa = vals[a];
        let ua = nodes[a];
        for b in (a + 1)..=n {
            let v = (vals[b] - fa).abs() / (nodes[b] - ua).sqrt();
            if v > best.value {
                best = HolderHalf {
                    value: v,
                    u0: ua,
                    u1: nodes[b],
                };
            }
        }
    }
    best
}

/// Largest `|□f(t − x) − Q(df)|` over the sample phases, with `df = f'·(dt − dx)`.
///
/// `□` of a function of `t − x` is `⟨κ, κ⟩ f''` by the chain rule.
pub fn verify_travelling_wave(system: &SemilinearSystem, profile: &WaveProfile, samples: &[f64]) -> f64 {
    assert_eq!(system.n(), profile.n(), "system and profile sizes differ");
    let k = Covector4::kappa();
    let kk = k.minkowski_sq();
    samples
        .iter()
        .map(|&u| {
            let grads: Vec<Covector4> = (0..profile.n()).map(|j| profile.component(j, u, 1) * k).collect();
            let q = system.quadratic_rhs(&grads);
            (0..profile.n())
                .map(|i| (kk * profile.component(i, u, 2) - q[i]).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}
