//! Null forms on R^{3+1} and semilinear systems built from them.
//!
//! A bilinear form is stored as a 4×4 matrix `M` acting on covectors with slots
//! `(t, x, y, z)`, so `m(ξ, η) = ξᵀ M η`. The metric has signature (+,−,−,−).

use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance of the symmetric-part null test.
pub const NULL_TOL: f64 = 1e-10;

/// A covector with components in the slots `(t, x, y, z)`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Covector4(pub [f64; 4]);

impl Covector4 {
    pub const ZERO: Covector4 = Covector4([0.0; 4]);
    pub const DT: Covector4 = Covector4([1.0, 0.0, 0.0, 0.0]);
    pub const DX: Covector4 = Covector4([0.0, 1.0, 0.0, 0.0]);
    pub const DY: Covector4 = Covector4([0.0, 0.0, 1.0, 0.0]);
    pub const DZ: Covector4 = Covector4([0.0, 0.0, 0.0, 1.0]);

    pub fn new(t: f64, x: f64, y: f64, z: f64) -> Self {
        Covector4([t, x, y, z])
    }

    /// `d(t − x)`, the gradient of the plane-wave phase.
    pub fn kappa() -> Self {
        Covector4([1.0, -1.0, 0.0, 0.0])
    }

    /// `dt + dx`.
    pub fn kappa_bar() -> Self {
        Covector4([1.0, 1.0, 0.0, 0.0])
    }

    /// Minkowski square `ξ_t² − ξ_x² − ξ_y² − ξ_z²`.
    pub fn minkowski_sq(&self) -> f64 {
        let [t, x, y, z] = self.0;
        t * t - x * x - y * y - z * z
    }

    pub fn euclid_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }
}

impl Add for Covector4 {
    type Output = Covector4;
    fn add(self, o: Covector4) -> Covector4 {
        Covector4(std::array::from_fn(|a| self.0[a] + o.0[a]))
    }
}

impl Sub for Covector4 {
    type Output = Covector4;
    fn sub(self, o: Covector4) -> Covector4 {
        Covector4(std::array::from_fn(|a| self.0[a] - o.0[a]))
    }
}

impl Mul<Covector4> for f64 {
    type Output = Covector4;
    fn mul(self, v: Covector4) -> Covector4 {
        Covector4(v.0.map(|c| self * c))
    }
}

impl Neg for Covector4 {
    type Output = Covector4;
    fn neg(self) -> Covector4 {
        Covector4(self.0.map(|c| -c))
    }
}

/// A constant-coefficient bilinear form `m(ξ, η) = ξᵀ M η`.
///
/// Construction does not enforce the null condition; use [`is_null_form`] to
/// test it. [`NullFormTensor`] only accepts forms that pass.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct NullForm {
    m: [[f64; 4]; 4],
}

const METRIC_DIAG: [f64; 4] = [1.0, -1.0, -1.0, -1.0];

impl NullForm {
    pub fn new(m: [[f64; 4]; 4]) -> Self {
        NullForm { m }
    }

    /// Row-major 16 entries.
    pub fn from_row_major(v: &[f64]) -> Result<Self> {
        if v.len() != 16 {
            return Err(Error::InvalidSystem(format!(
                "matrix must have 16 entries, got {}",
                v.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidSystem("matrix entries must be finite".into()));
        }
        Ok(NullForm {
            m: std::array::from_fn(|a| std::array::from_fn(|b| v[4 * a + b])),
        })
    }

    pub fn row_major(&self) -> [f64; 16] {
        std::array::from_fn(|k| self.m[k / 4][k % 4])
    }

    /// The standard null form `ξ_α η^α`.
    pub fn standard() -> Self {
        let mut m = [[0.0; 4]; 4];
        for (a, row) in m.iter_mut().enumerate() {
            row[a] = METRIC_DIAG[a];
        }
        NullForm { m }
    }

    /// The antisymmetric form `e_a ∧ e_b`: `M[a][b] = 1`, `M[b][a] = −1`.
    pub fn wedge(a: usize, b: usize) -> Self {
        assert!(a < 4 && b < 4 && a != b, "wedge needs two distinct slots");
        let mut m = [[0.0; 4]; 4];
        m[a][b] = 1.0;
        m[b][a] = -1.0;
        NullForm { m }
    }

    pub fn zero() -> Self {
        NullForm::default()
    }

    pub fn matrix(&self) -> &[[f64; 4]; 4] {
        &self.m
    }

    pub fn transpose(&self) -> Self {
        NullForm {
            m: std::array::from_fn(|a| std::array::from_fn(|b| self.m[b][a])),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        NullForm {
            m: self.m.map(|row| row.map(|v| s * v)),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.m
            .iter()
            .flatten()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.m.iter().flatten().all(|&v| v == 0.0)
    }

    #[inline]
    pub fn eval(&self, xi: &Covector4, eta: &Covector4) -> f64 {
        let mut s = 0.0;
        for a in 0..4 {
            let row = &self.m[a];
            s += xi.0[a] * (row[0] * eta.0[0] + row[1] * eta.0[1] + row[2] * eta.0[2] + row[3] * eta.0[3]);
        }
        s
    }
}

impl Add for NullForm {
    type Output = NullForm;
    fn add(self, o: NullForm) -> NullForm {
        NullForm {
            m: std::array::from_fn(|a| std::array::from_fn(|b| self.m[a][b] + o.m[a][b])),
        }
    }
}

/// `ξᵀ M η`.
pub fn eval_form(form: &NullForm, xi: &Covector4, eta: &Covector4) -> f64 {
    form.eval(xi, eta)
}

/// Outcome of the symmetric-part null test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NullCheck {
    pub is_null: bool,
    /// Least-squares proportionality constant: `Sym(M) ≈ c·diag(1,−1,−1,−1)`.
    pub c: f64,
    /// `‖Sym(M) − c·diag(1,−1,−1,−1)‖_max`.
    pub residual: f64,
}

/// Tests `Sym(M) = c·diag(1,−1,−1,−1)` with the least-squares `c`.
///
/// In 3+1 dimensions a quadratic form vanishes on the whole null cone exactly
/// when it is a multiple of the metric, so this is the null condition.
pub fn is_null_form(form: &NullForm, tol: f64) -> NullCheck {
    assert!(tol > 0.0, "tolerance must be positive");
    let m = &form.m;
    let sym = |a: usize, b: usize| 0.5 * (m[a][b] + m[b][a]);
    let c = (sym(0, 0) - sym(1, 1) - sym(2, 2) - sym(3, 3)) / 4.0;
    let mut residual = 0.0_f64;
    for a in 0..4 {
        for b in 0..4 {
            let target = if a == b { c * METRIC_DIAG[a] } else { 0.0 };
            residual = residual.max((sym(a, b) - target).abs());
        }
    }
    NullCheck {
        is_null: residual <= tol,
        c,
        residual,
    }
}

/// Draws a future-directed null covector `s·(1, ω)` with `ω` uniform on the
/// unit sphere and `s` standard normal.
pub fn random_null_covector<R: Rng + ?Sized>(rng: &mut R) -> Covector4 {
    loop {
        let w: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let n = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        if n > 1e-8 {
            let s: f64 = rng.sample(StandardNormal);
            return Covector4([s, s * w[0] / n, s * w[1] / n, s * w[2] / n]);
        }
    }
}

/// Largest `|vᵀMv| / ‖v‖²` over `samples` seeded null covectors.
pub fn null_vector_witness<R: Rng + ?Sized>(form: &NullForm, samples: usize, rng: &mut R) -> f64 {
    (0..samples)
        .map(|_| {
            let v = random_null_covector(rng);
            form.eval(&v, &v).abs() / v.euclid_sq()
        })
        .fold(0.0, f64::max)
}

/// Boolean verdict of the null-vector route, comparable to [`is_null_form`]
/// at the same tolerance: the symmetric test passing implies
/// `|vᵀMv| ≤ 4·tol·‖v‖²`.
pub fn is_null_by_vectors<R: Rng + ?Sized>(form: &NullForm, tol: f64, samples: usize, rng: &mut R) -> bool {
    null_vector_witness(form, samples, rng) <= 4.0 * tol
}

/// The coupling coefficients `m_{ijℓ}` of a system, stored pre-symmetrized so
/// that `M[i][j][ℓ] = M[i][ℓ][j]ᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct NullFormTensor {
    n: usize,
    forms: Vec<NullForm>,
    /// `(i, j, ℓ, flat index)` of the nonzero forms.
    active: Vec<(usize, usize, usize, usize)>,
}

impl NullFormTensor {
    /// Builds the tensor from raw entries `(i, j, ℓ, M)`. Repeated indices add
    /// up. Each raw entry must be a null form; the stored tensor is the average
    /// `(R[i][j][ℓ] + R[i][ℓ][j]ᵀ)/2`, which leaves every `Q_i` unchanged.
    pub fn from_entries<I>(n: usize, entries: I, tol: f64) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, usize, NullForm)>,
    {
        if n == 0 {
            return Err(Error::InvalidSystem("N must be at least 1".into()));
        }
        let idx = |i: usize, j: usize, l: usize| (i * n + j) * n + l;
        let mut raw = vec![NullForm::zero(); n * n * n];
        for (i, j, l, form) in entries {
            if i >= n || j >= n || l >= n {
                return Err(Error::InvalidSystem(format!(
                    "form index ({i},{j},{l}) out of range for N = {n}"
                )));
            }
            let check = is_null_form(&form, tol);
            if !check.is_null {
                return Err(Error::NotNull {
                    i,
                    j,
                    l,
                    residual: check.residual,
                });
            }
            raw[idx(i, j, l)] = raw[idx(i, j, l)] + form;
        }
        let mut forms = vec![NullForm::zero(); n * n * n];
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    forms[idx(i, j, l)] = (raw[idx(i, j, l)] + raw[idx(i, l, j)].transpose()).scale(0.5);
                }
            }
        }
        let active = (0..forms.len())
            .filter(|&k| !forms[k].is_zero())
            .map(|k| (k / (n * n), (k / n) % n, k % n, k))
            .collect();
        Ok(NullFormTensor { n, forms, active })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn form(&self, i: usize, j: usize, l: usize) -> &NullForm {
        &self.forms[(i * self.n + j) * self.n + l]
    }

    /// Nonzero entries as `(i, j, ℓ, form)`.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, usize, usize, &NullForm)> {
        self.active.iter().map(move |&(i, j, l, k)| (i, j, l, &self.forms[k]))
    }

    /// `Q_i = Σ_{j,ℓ} m_{ijℓ}(dφ_j, dφ_ℓ)`, written into `out`.
    pub fn quadratic_rhs_into(&self, grads: &[Covector4], out: &mut [f64]) {
        debug_assert_eq!(grads.len(), self.n);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, j, l, f) in self.nonzero() {
            out[i] += f.eval(&grads[j], &grads[l]);
        }
    }

    pub fn quadratic_rhs(&self, grads: &[Covector4]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.quadratic_rhs_into(grads, &mut out);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.forms.iter().map(NullForm::max_abs).fold(0.0, f64::max)
    }
}

/// JSON shape of one raw form entry.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FormEntry {
    pub i: usize,
    pub j: usize,
    pub l: usize,
    pub matrix: Vec<f64>,
}

/// JSON shape of a system definition.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SystemDoc {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default)]
    pub label: Option<String>,
    pub forms: Vec<FormEntry>,
}

/// `□φ_i = Σ_{j,ℓ} m_{ijℓ}(dφ_j, dφ_ℓ)` for `i = 0..N`.
#[derive(Clone, Debug, PartialEq)]
pub struct SemilinearSystem {
    pub label: String,
    tensor: NullFormTensor,
}

impl SemilinearSystem {
    pub fn new(label: impl Into<String>, tensor: NullFormTensor) -> Self {
        SemilinearSystem {
            label: label.into(),
            tensor,
        }
    }

    pub fn from_entries<I>(label: impl Into<String>, n: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, usize, NullForm)>,
    {
        Ok(Self::new(label, NullFormTensor::from_entries(n, entries, NULL_TOL)?))
    }

    /// `□φ_0 = 2 g(dφ_0, dφ_1)`, `□φ_1 = g(dφ_0, dφ_0)` with `g` the standard
    /// form. The plane wave lives in component 1.
    pub fn example1() -> Self {
        let g = NullForm::standard();
        Self::from_entries("example1", 2, [(0, 0, 1, g), (0, 1, 0, g), (1, 0, 0, g)])
            .expect("fixture is valid")
    }

    /// `□φ_0 = 2 (dt∧dy)(dφ_0, dφ_1)`, `□φ_1 = g(dφ_0, dφ_0)`. The plane wave
    /// lives in component 1.
    pub fn example2() -> Self {
        let w = NullForm::wedge(0, 2);
        let g = NullForm::standard();
        Self::from_entries(
            "example2",
            2,
            [(0, 0, 1, w), (0, 1, 0, w.transpose()), (1, 0, 0, g)],
        )
        .expect("fixture is valid")
    }

    /// Named built-in systems: `"example1"`, `"example2"`.
    pub fn fixture(name: &str) -> Result<Self> {
        match name {
            "example1" => Ok(Self::example1()),
            "example2" => Ok(Self::example2()),
            other => Err(Error::InvalidSystem(format!("unknown fixture {other:?}"))),
        }
    }

    pub fn from_doc(doc: &SystemDoc) -> Result<Self> {
        let entries = doc
            .forms
            .iter()
            .map(|e| NullForm::from_row_major(&e.matrix).map(|m| (e.i, e.j, e.l, m)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_entries(doc.label.clone().unwrap_or_else(|| "custom".into()), doc.n, entries)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SystemDoc = serde_json::from_str(text)?;
        Self::from_doc(&doc)
    }

    /// The stored (symmetrized) tensor as a JSON document.
    pub fn to_doc(&self) -> SystemDoc {
        SystemDoc {
            n: self.n(),
            label: Some(self.label.clone()),
            forms: self
                .tensor
                .nonzero()
                .map(|(i, j, l, f)| FormEntry {
                    i,
                    j,
                    l,
                    matrix: f.row_major().to_vec(),
                })
                .collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.tensor.n()
    }

    pub fn tensor(&self) -> &NullFormTensor {
        &self.tensor
    }

    pub fn quadratic_rhs(&self, grads: &[Covector4]) -> Vec<f64> {
        self.tensor.quadratic_rhs(grads)
    }

    pub fn coupling_tensors(&self) -> CouplingTensors {
        coupling_tensors(self)
    }

    pub fn check_condition_one(&self, active: &[usize]) -> ConditionOne {
        check_condition_one(&self.coupling_tensors(), active)
    }
}

/// `Q(dφ)` for a system.
pub fn quadratic_rhs(system: &SemilinearSystem, grads: &[Covector4]) -> Vec<f64> {
    system.quadratic_rhs(grads)
}

/// First-order coefficients of the linearization around `f(t − x)`.
///
/// With `κ = dt − dx` the linear part of `Q_i(dψ + f'κ) − Q_i(f'κ)` is
/// `Σ_{j,ℓ} f'_j (a_{ijℓ} ∂₊ψ_ℓ + b_{ijℓ} ∂_yψ_ℓ + c_{ijℓ} ∂_zψ_ℓ)` where
/// `∂₊ = ∂_t + ∂_x`. The middle index contracts with `f'`, the last with `ψ`.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingTensors {
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl CouplingTensors {
    /// Builds coupling tensors from raw arrays indexed `(i*N + j)*N + ℓ`.
    pub fn from_raw(n: usize, a: Vec<f64>, b: Vec<f64>, c: Vec<f64>) -> Self {
        assert!(a.len() == n * n * n && b.len() == n * n * n && c.len() == n * n * n);
        CouplingTensors { n, a, b, c }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, l: usize) -> usize {
        (i * self.n + j) * self.n + l
    }

    pub fn a(&self, i: usize, j: usize, l: usize) -> f64 {
        self.a[self.idx(i, j, l)]
    }

    pub fn b(&self, i: usize, j: usize, l: usize) -> f64 {
        self.b[self.idx(i, j, l)]
    }

    pub fn c(&self, i: usize, j: usize, l: usize) -> f64 {
        self.c[self.idx(i, j, l)]
    }

    fn contract(&self, t: &[f64], fp: &[f64]) -> nalgebra::DMatrix<f64> {
        let n = self.n;
        nalgebra::DMatrix::from_fn(n, n, |i, q| (0..n).map(|l| t[self.idx(i, l, q)] * fp[l]).sum())
    }

    /// `(a·f')_{iq} = Σ_ℓ a_{iℓq} f'_ℓ`.
    pub fn a_dot(&self, fp: &[f64]) -> nalgebra::DMatrix<f64> {
        self.contract(&self.a, fp)
    }

    pub fn b_dot(&self, fp: &[f64]) -> nalgebra::DMatrix<f64> {
        self.contract(&self.b, fp)
    }

    pub fn c_dot(&self, fp: &[f64]) -> nalgebra::DMatrix<f64> {
        self.contract(&self.c, fp)
    }
}

/// Evaluates each `m_{ijℓ}` and its symmetric partner on `κ = dt − dx`
/// against `dt + dx`, `dy`, `dz`.
pub fn coupling_tensors(system: &SemilinearSystem) -> CouplingTensors {
    let t = system.tensor();
    let n = t.n();
    let k = Covector4::kappa();
    let kb = Covector4::kappa_bar();
    let mut a = vec![0.0; n * n * n];
    let mut b = vec![0.0; n * n * n];
    let mut c = vec![0.0; n * n * n];
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                let m = t.form(i, j, l);
                let p = t.form(i, l, j);
                let at = (i * n + j) * n + l;
                a[at] = 0.5 * (m.eval(&k, &kb) + p.eval(&kb, &k));
                b[at] = m.eval(&k, &Covector4::DY) + p.eval(&Covector4::DY, &k);
                c[at] = m.eval(&k, &Covector4::DZ) + p.eval(&Covector4::DZ, &k);
            }
        }
    }
    CouplingTensors { n, a, b, c }
}

/// Outcome of the Condition 1 check.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionOne {
    pub holds: bool,
    /// Triples `(i, j, ℓ)` with `b` or `c` nonzero and `j` or `ℓ` active.
    pub violations: Vec<(usize, usize, usize)>,
}

/// `b_{ijℓ} = c_{ijℓ} = 0` whenever `j` or `ℓ` is an active component.
pub fn check_condition_one(couplings: &CouplingTensors, active: &[usize]) -> ConditionOne {
    let n = couplings.n();
    let scale = couplings
        .b
        .iter()
        .chain(couplings.c.iter())
        .chain(couplings.a.iter())
        .fold(1.0_f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale;
    let is_active = |k: usize| active.contains(&k);
    let mut violations = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                if !(is_active(j) || is_active(l)) {
                    continue;
                }
                if couplings.b(i, j, l).abs() > tol || couplings.c(i, j, l).abs() > tol {
                    violations.push((i, j, l));
                }
            }
        }
    }
    ConditionOne {
        holds: violations.is_empty(),
        violations,
    }
}

/// A random null form `c·g + W` with `W` antisymmetric and gaussian entries.
pub fn random_null_form<R: Rng + ?Sized>(rng: &mut R) -> NullForm {
    let c: f64 = rng.sample(StandardNormal);
    let mut m = NullForm::standard().scale(c).m;
    for a in 0..4 {
        for b in (a + 1)..4 {
            let w: f64 = rng.sample(StandardNormal);
            m[a][b] += w;
            m[b][a] -= w;
        }
    }
    NullForm::new(m)
}

/// A random null form whose antisymmetric part satisfies `W(κ, dy) = W(κ, dz) = 0`,
/// so it contributes nothing to the `b` and `c` tensors.
pub fn random_tangential_null_form<R: Rng + ?Sized>(rng: &mut R) -> NullForm {
    let mut f = random_null_form(rng);
    // W(κ,dy) = W[0][2] − W[1][2]; force W[1][2] = W[0][2] and W[1][3] = W[0][3].
    let m = &mut f.m;
    m[1][2] = m[0][2];
    m[2][1] = -m[0][2];
    m[1][3] = m[0][3];
    m[3][1] = -m[0][3];
    f
}

/// A seeded random system: every `(i, j, ℓ)` slot with `j ≤ ℓ` receives a
/// random null form (and its transpose at `(i, ℓ, j)`).
pub fn random_system<R: Rng + ?Sized>(n: usize, rng: &mut R) -> SemilinearSystem {
    let mut entries = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for l in j..n {
                let f = random_null_form(rng);
                entries.push((i, j, l, f));
                if l != j {
                    entries.push((i, l, j, f.transpose()));
                }
            }
        }
    }
    SemilinearSystem::from_entries("random", n, entries).expect("random null forms are null")
}
