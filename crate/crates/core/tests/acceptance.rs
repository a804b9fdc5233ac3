//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test -p nullwave-core --test acceptance` runs all ten; extra
//! numeric arguments select a subset, e.g. `-- 3 8`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use nalgebra::DVector;
use nullwave_core::diagnostics::{
    all_strings, fit_power_decay, fit_sqrt_exponential, fit_sqrt_exponential_log, region_volume, sphere_cap_measure,
    weight_growth_check, FitResult,
};
use nullwave_core::fdtd::*;
use nullwave_core::geoptics::*;
use nullwave_core::mode::*;
use nullwave_core::nullform::*;
use nullwave_core::profiles::{bump_derivatives, WaveProfile};
use nullwave_core::quad;
use nullwave_core::renormalize::*;
use nullwave_core::scenario::blowup_fit;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

fn bump(u: f64) -> f64 {
    bump_derivatives(u)[0]
}

fn bump_prime(u: f64) -> f64 {
    bump_derivatives(u)[1]
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

/// Unstable runs shared between criteria 4, 5 and 6.
#[derive(Default)]
struct Shared {
    /// `(ξ, K_fit, K_predicted)` of the Bessel-oracle modes that solved.
    c4_modes: Option<Vec<(f64, f64, f64)>>,
    c5_mode: Option<(f64, f64)>,
}

// ---------------------------------------------------------------- 1

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut disagreements = Vec::new();
    let mut null_count = 0;
    for k in 0..500 {
        let form = match k % 4 {
            0 => random_null_form(&mut rng),
            1 => random_tangential_null_form(&mut rng),
            2 => {
                let scale = 10f64.powf(rng.random_range(-6.0..0.0));
                let mut m = *random_null_form(&mut rng).matrix();
                for a in 0..4 {
                    for b in a..4 {
                        let d = scale * rng.random_range(-1.0..1.0);
                        m[a][b] += d;
                        if a != b {
                            m[b][a] += d;
                        }
                    }
                }
                NullForm::new(m)
            }
            _ => {
                let mut m = [[0.0; 4]; 4];
                m.iter_mut().flatten().for_each(|v| *v = rng.random_range(-1.0..1.0));
                NullForm::new(m)
            }
        };
        let sym = is_null_form(&form, NULL_TOL).is_null;
        let vec = is_null_by_vectors(&form, NULL_TOL, 10_000, &mut rng);
        null_count += sym as usize;
        if sym != vec {
            disagreements.push(k);
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        disagreements.is_empty() && elapsed < Duration::from_secs(5),
        format!(
            "500 matrices ({null_count} null), disagreements {:?}, {}",
            disagreements,
            secs(elapsed)
        ),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let h = 1e-3;
    let scalar = Renormalizer::from_generator(1, h, |u| DMatrix::from_element(1, 1, 2.0 * bump_prime(u))).unwrap();
    let mut scalar_err: f64 = 0.0;
    for (k, u) in scalar.grid().nodes().enumerate() {
        scalar_err = scalar_err.max((scalar.a_node(k)[(0, 0)] - (-bump(u)).exp()).abs());
    }
    // The same factor inside the example-1 system, where only ψ_0 is renormalized.
    let sys = SemilinearSystem::example1();
    let prof = WaveProfile::bump(&[0.0, 1.0]);
    let ren = solve_renormalizer(&sys, &prof, h).unwrap();
    let mut system_err: f64 = 0.0;
    for (k, u) in ren.grid().nodes().enumerate() {
        let want = DMatrix::from_row_slice(2, 2, &[(-bump(u)).exp(), 0.0, 0.0, 1.0]);
        system_err = system_err.max((ren.a_node(k) - want).amax());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut liouville: f64 = 0.0;
    for _ in 0..20 {
        let sys = random_system(3, &mut rng);
        let amps: Vec<f64> = (0..3).map(|_| rng.random_range(-0.5..0.5)).collect();
        let prof = WaveProfile::bump(&amps);
        let cpl = sys.coupling_tensors();
        let r = solve_renormalizer(&sys, &prof, h).unwrap();
        let trace_integral = |u: f64| quad::integrate(|s| cpl.a_dot(&prof.eval(s, 1)).trace(), u, 1.0, 1e-13);
        liouville = liouville.max(r.liouville_defect(trace_integral));
    }
    let elapsed = start.elapsed();
    Outcome::new(
        scalar_err <= 1e-8 && system_err <= 1e-8 && liouville <= 1e-8 && elapsed < Duration::from_secs(10),
        format!(
            "|A - exp(-f)| scalar {scalar_err:.2e}, in example 1 {system_err:.2e}; Liouville defect {liouville:.2e} over 20 systems; {}",
            secs(elapsed)
        ),
    )
}

// ---------------------------------------------------------------- 3

/// Largest entry distance between the contracted tensors and the expected
/// coefficient matrices over samples of `u`.
fn tensor_error(sys: &SemilinearSystem, expect: impl Fn(f64) -> [DMatrix<f64>; 3]) -> f64 {
    let cpl = sys.coupling_tensors();
    let prof = WaveProfile::bump(&[0.0, 1.0]);
    (0..=80)
        .map(|k| -1.2 + 0.03 * k as f64)
        .map(|u| {
            let fp = prof.eval(u, 1);
            let [a, b, c] = expect(fp[1]);
            (cpl.a_dot(&fp) - a).amax().max((cpl.b_dot(&fp) - b).amax()).max((cpl.c_dot(&fp) - c).amax())
        })
        .fold(0.0, f64::max)
}

/// Smooth perturbation data with distinct components.
fn smooth_state(spec: &GridSpec, eps: f64) -> FieldState {
    let mut s = FieldState::zero(spec, 2);
    let [nx, ny, nz] = s.dims;
    for ix in 0..nx {
        for iy in 0..ny {
            for iz in 0..nz {
                let (x, y, z) = (spec.coord(0, ix), spec.coord(1, iy), spec.coord(2, iz));
                let g = (-(x * x + y * y + z * z)).exp();
                let k = s.node(ix, iy, iz);
                s.psi[2 * k] = eps * g * (1.0 + 0.5 * x + 0.3 * y);
                s.psi[2 * k + 1] = eps * g * (0.7 - 0.4 * z + 0.2 * x * y);
                s.pi[2 * k] = eps * g * (0.6 - 0.8 * y);
                s.pi[2 * k + 1] = eps * g * (-0.5 + 0.9 * x);
            }
        }
    }
    s
}

/// Linearized source from the nonlinear scheme at `ε` and `ε/2`; the source
/// is exactly quadratic in `ε`, so Richardson removes the second-order part.
fn richardson_linearization(fdtd: &Fdtd<'_>, spec: &GridSpec, eps: f64) -> Vec<f64> {
    let full = fdtd.source_term(&smooth_state(spec, eps));
    let half = fdtd.source_term(&smooth_state(spec, eps / 2.0));
    full.iter().zip(&half).map(|(f, h)| (4.0 * h - f) / eps).collect()
}

/// `(Σ_j a f'_j)(π + ∂_xψ) + (Σ_j b f'_j)∂_yψ + (Σ_j c f'_j)∂_zψ` at interior
/// nodes with the scheme's central differences, scaled by `sign`.
fn contraction(sys: &SemilinearSystem, prof: &WaveProfile, spec: &GridSpec, state: &FieldState, sign: f64) -> Vec<Option<[f64; 2]>> {
    let cpl = sys.coupling_tensors();
    let [nx, ny, nz] = state.dims;
    let inv = 0.5 / spec.h;
    let mut out = vec![None; nx * ny * nz];
    for ix in 1..nx - 1 {
        let fp = prof.eval(state.t - spec.coord(0, ix), 1);
        let (a, b, c) = (cpl.a_dot(&fp), cpl.b_dot(&fp), cpl.c_dot(&fp));
        for iy in 1..ny - 1 {
            for iz in 1..nz - 1 {
                let k = state.node(ix, iy, iz);
                let psi = |node: usize, l: usize| state.psi[2 * node + l];
                let mut v = [0.0; 2];
                for l in 0..2 {
                    let dx = (psi(state.node(ix + 1, iy, iz), l) - psi(state.node(ix - 1, iy, iz), l)) * inv;
                    let dy = (psi(state.node(ix, iy + 1, iz), l) - psi(state.node(ix, iy - 1, iz), l)) * inv;
                    let dz = (psi(state.node(ix, iy, iz + 1), l) - psi(state.node(ix, iy, iz - 1), l)) * inv;
                    let plus = state.pi[2 * k + l] + dx;
                    for (i, vi) in v.iter_mut().enumerate() {
                        *vi += sign * (a[(i, l)] * plus + b[(i, l)] * dy + c[(i, l)] * dz);
                    }
                }
                out[k] = Some(v);
            }
        }
    }
    out
}

fn oracle_mismatch(oracle: &[f64], predicted: &[Option<[f64; 2]>]) -> f64 {
    let scale = oracle.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let worst = predicted
        .iter()
        .enumerate()
        .filter_map(|(k, p)| p.map(|p| (k, p)))
        .flat_map(|(k, p)| (0..2).map(move |i| (oracle[2 * k + i] - p[i]).abs()))
        .fold(0.0, f64::max);
    worst / scale
}

fn criterion_3() -> Outcome {
    let zero = || DMatrix::zeros(2, 2);
    let e00 = |v: f64| DMatrix::from_row_slice(2, 2, &[v, 0.0, 0.0, 0.0]);
    let ex1 = SemilinearSystem::example1();
    let ex2 = SemilinearSystem::example2();
    // Example 1: 2f'(∂_t + ∂_x)ψ_0 in the ψ_0 equation; example 2: −2f'∂_yψ_0.
    let t1 = tensor_error(&ex1, |fp| [e00(2.0 * fp), zero(), zero()]);
    let t2 = tensor_error(&ex2, |fp| [zero(), e00(-2.0 * fp), zero()]);

    let spec = GridSpec::new(2.5, 0.1, 0.5).unwrap();
    let prof = WaveProfile::bump(&[0.0, 1.0]);
    let eps = 1e-3;
    let mut lines = Vec::new();
    let mut oracle_ok = true;
    for (name, sys) in [("example 1", &ex1), ("example 2", &ex2)] {
        let fdtd = Fdtd::new(spec, sys, &prof, RhsMode::Nonlinear).unwrap();
        let oracle = richardson_linearization(&fdtd, &spec, eps);
        let state = smooth_state(&spec, 1.0);
        let plus = oracle_mismatch(&oracle, &contraction(sys, &prof, &spec, &state, 1.0));
        let minus = oracle_mismatch(&oracle, &contraction(sys, &prof, &spec, &state, -1.0));
        let sign = if plus <= minus { "+" } else { "-" };
        oracle_ok &= plus.min(minus) <= 1e-3;
        lines.push(format!("{name}: oracle sign {sign}, mismatch {:.2e} (other sign {:.2e})", plus.min(minus), plus.max(minus)));
    }
    Outcome::new(
        t1 <= 1e-10 && t2 <= 1e-10 && oracle_ok,
        format!("tensor errors {t1:.1e}, {t2:.1e}; {}", lines.join("; ")),
    )
}

// ---------------------------------------------------------------- 4

fn criterion_4(shared: &mut Shared) -> Outcome {
    let start = Instant::now();
    let amp = 2.0;
    let coeffs = scalar_coefficients(move |u| amp * bump_prime(u));
    let k_pred = WaveProfile::bump(&[amp]).holder_half_seminorm(0).value / std::f64::consts::SQRT_2;
    let h = 1.0 / 400.0;
    let grid = GoursatGrid::new(-1.0, h, 200.0, h).unwrap();
    let opts = ModeOptions {
        sample_stride_u: 40,
        sample_stride_v: 800,
        ..Default::default()
    };
    let mut pass = true;
    let mut lines = Vec::new();
    let mut solved = Vec::new();
    for xi in [5.0, 20.0, 50.0] {
        let freq = Frequency::new(xi, 0.0);
        let mode = match goursat_solve(&coeffs, freq, &BoundaryData::ones(1), &grid, &opts) {
            Ok(m) => m,
            Err(e) => {
                pass = false;
                lines.push(format!("xi {xi}: solver refused ({e})"));
                continue;
            }
        };
        let (mut log_err, mut q_err): (f64, f64) = (0.0, 0.0);
        for s in &mode.samples {
            let want = closed_form_scalar(&coeffs, freq, -1.0, s.u, s.v).unwrap();
            let got = s.q[0];
            log_err = log_err.max((got.log_abs - want.log_abs).abs() / want.log_abs.abs().max(1.0));
            if want.log_abs <= 1e3f64.ln() {
                let w = want.to_complex();
                q_err = q_err.max((got.to_complex() - w).norm() / w.norm());
            }
        }
        pass &= log_err <= 1e-5 && q_err <= 1e-5;
        lines.push(format!("xi {xi}: log|q| {log_err:.1e}, q {q_err:.1e}"));
        if let Ok(fit) = fit_sqrt_exponential_log(&mode.sup_profile, 5.0) {
            solved.push((xi, fit.exponent, k_pred));
        }
    }
    shared.c4_modes = Some(solved);
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(60);
    Outcome::new(pass, format!("{}; {}", lines.join("; "), secs(elapsed)))
}

// ---------------------------------------------------------------- 5

const C5_XI: f64 = 8.0;

fn criterion_5(shared: &mut Shared) -> Outcome {
    let start = Instant::now();
    let prof = WaveProfile::bump(&[1.0]);
    let coeffs = LinearizedCoefficients::scalar(1e-3, |u| prof.component(0, u, 1));
    let grid = GoursatGrid::new(-1.0, 4e-4, 1800.0, 0.025).unwrap();
    let k_pred = prof.holder_half_seminorm(0).value / std::f64::consts::SQRT_2;
    let opts = ModeOptions {
        keep_last_row: false,
        t_stride: 40,
        ..Default::default()
    };
    let mode = match goursat_solve(&coeffs, Frequency::new(C5_XI, 0.0), &BoundaryData::ones(1), &grid, &opts) {
        Ok(m) => m,
        Err(e) => return Outcome::new(false, format!("solver refused: {e}")),
    };
    let fit = match fit_sqrt_exponential_log(&mode.sup_profile, 100.0) {
        Ok(f) => f,
        Err(e) => return Outcome::new(false, format!("fit failed: {e}")),
    };
    shared.c5_mode = Some((fit.exponent, k_pred));
    let rel = (fit.exponent - k_pred).abs() / k_pred;
    let elapsed = start.elapsed();
    Outcome::new(
        rel <= 0.1 && elapsed < Duration::from_secs(300),
        format!(
            "xi {C5_XI}, t up to {:.0}: K_fit {:.4} vs |f|_1/2/sqrt2 {:.4} ({:.1}% off, R2 {:.4}); {}",
            fit.t_max,
            fit.exponent,
            k_pred,
            100.0 * rel,
            fit.r2,
            secs(elapsed)
        ),
    )
}

// ---------------------------------------------------------------- 6

fn strip_mode_state(spec: &GridSpec, n: usize, a: f64, xi: f64) -> FieldState {
    let mut s = FieldState::zero(spec, n);
    let [nx, ny, nz] = s.dims;
    for ix in 1..nx - 1 {
        let d = bump_derivatives(spec.coord(0, ix));
        for iy in 0..ny {
            let c = a * (xi * spec.coord(1, iy)).cos();
            for iz in 0..nz {
                let k = s.node(ix, iy, iz);
                s.psi[n * k] = c * d[0];
                s.pi[n * k] = -c * d[1];
            }
        }
    }
    s
}

fn strip_spec(xi: f64, cells: usize, t_max: f64) -> GridSpec {
    let h = 2.0 * std::f64::consts::PI / (xi * cells as f64);
    let half_width = ((t_max + 2.0) / h).ceil() * h;
    GridSpec::new(half_width, h, t_max)
        .unwrap()
        .with_strip(0.5 * cells as f64 * h, 0.5 * h)
        .unwrap()
}

/// Largest relative rise per unit time between consecutive samples.
fn worst_rise(series: &[(f64, f64)]) -> f64 {
    series
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / (w[0].1 * (w[1].0 - w[0].0)))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn criterion_6(shared: &mut Shared) -> Outcome {
    if shared.c4_modes.is_none() {
        criterion_4(shared);
    }
    if shared.c5_mode.is_none() {
        criterion_5(shared);
    }
    let mut runs: Vec<(String, f64, f64)> = Vec::new();
    for &(xi, k_fit, k_pred) in shared.c4_modes.as_deref().unwrap_or(&[]) {
        runs.push((format!("mode xi {xi}"), k_fit, k_pred));
    }
    if let Some((k_fit, k_pred)) = shared.c5_mode {
        runs.push((format!("mode xi {C5_XI} to t 900"), k_fit, k_pred));
    }

    let sys = SemilinearSystem::example2();
    let prof = WaveProfile::bump(&[0.0, 1.0]);
    let ren = solve_renormalizer(&sys, &prof, 1e-3).unwrap();
    let couplings = sys.coupling_tensors();
    let coeffs = linearized_coefficients(&ren, &couplings, &prof);
    let k_pred = growth_rate_estimate(&coeffs, GrowthOptions::default()).unwrap().k;
    let xi = 2.0;
    let spec = strip_spec(xi, 48, 20.0);
    let fdtd = Fdtd::new(spec, &sys, &prof, RhsMode::Linearized).unwrap();
    let transform = Transform { renormalizer: &ren, couplings: &couplings };
    let weight = MultiplierWeight::new(&coeffs, 1e-3);
    let opts = EvolveOptions { output_every: 0.5, ..Default::default() };
    let (ledger, _) = evolve(&fdtd, strip_mode_state(&spec, 2, 1e-3, xi), &opts, Some(&transform), Some(&weight)).unwrap();
    let gamma = ledger.series(|r| r.gamma_energy.unwrap().sqrt());
    let fdtd_fit: Option<FitResult> = fit_sqrt_exponential(&gamma, 5.0).ok();
    if let Some(fit) = fdtd_fit {
        runs.push(("fdtd example 2 strip".into(), fit.exponent, k_pred));
    }
    let rise = worst_rise(&ledger.series(|r| r.multiplier_energy.unwrap()));

    let bound_ok = runs.iter().all(|(_, k_fit, k_pred)| *k_fit <= 10.0 * k_pred);
    let pass = bound_ok && fdtd_fit.is_some() && runs.len() >= 4 && rise <= 1e-3;
    let listed: Vec<String> = runs
        .iter()
        .map(|(name, f, p)| format!("{name}: K_fit {f:.3} vs 10K {:.3}", 10.0 * p))
        .collect();
    Outcome::new(
        pass,
        format!("{}; multiplier energy worst relative rise per unit time {rise:.1e}", listed.join("; ")),
    )
}

// ---------------------------------------------------------------- 7

fn example_one_run(eps: f64) -> DiagnosticsLedger {
    let sys = SemilinearSystem::example1();
    let prof = WaveProfile::bump(&[0.0, 1.0]);
    let ren = solve_renormalizer(&sys, &prof, 1e-3).unwrap();
    let couplings = sys.coupling_tensors();
    let spec = GridSpec::new(24.0, 0.5, 20.0).unwrap();
    let fdtd = Fdtd::new(spec, &sys, &prof, RhsMode::Nonlinear).unwrap();
    let init = initial_bump(&spec, eps, 2, &[0, 1]).unwrap();
    let transform = Transform { renormalizer: &ren, couplings: &couplings };
    evolve(&fdtd, init, &EvolveOptions::default(), Some(&transform), None).unwrap().0
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let base = example_one_run(1e-2);
    let doubled = example_one_run(2e-2);
    let decay = fit_power_decay(&base.series(|r| r.sup_dpsi), 5.0);
    let gamma = base.series(|r| r.gamma_energy.unwrap());
    let growth = gamma.last().unwrap().1 / gamma[0].1 - 1.0;
    let peak_growth = gamma.iter().map(|p| p.1).fold(0.0, f64::max) / gamma[0].1 - 1.0;
    let ratio = doubled.rows.last().unwrap().sup_dpsi / base.rows.last().unwrap().sup_dpsi;
    let elapsed = start.elapsed();
    let (exp_ok, exp_text) = match &decay {
        Ok(f) => (f.exponent <= -0.7, format!("sup|dpsi| exponent {:.3} (R2 {:.3})", f.exponent, f.r2)),
        Err(e) => (false, format!("power fit failed: {e}")),
    };
    Outcome::new(
        exp_ok && growth <= 0.05 && (1.8..=2.2).contains(&ratio) && elapsed < Duration::from_secs(900),
        format!(
            "{exp_text}; gamma energy change {:+.2}% (peak {:+.2}%); doubling ratio {ratio:.3}; {}",
            100.0 * growth,
            100.0 * peak_growth,
            secs(elapsed)
        ),
    )
}

// ---------------------------------------------------------------- 8

fn ones(_: [f64; 3]) -> DVector<C64> {
    DVector::from_element(1, C64::new(1.0, 0.0))
}

fn criterion_8() -> Outcome {
    let coeffs = scalar_coefficients(bump_prime);

    let dir = null_vector(-1.0, 1.0, 200.0).unwrap();
    let bundle = RayBundle::new(dir, 2000, 5, RayBundle::default_spacing(&dir)).unwrap();
    let sol = transport_solve(&coeffs, &bundle, 0, ones).unwrap();
    let mut phi0_err: f64 = 0.0;
    for r in 0..bundle.ray_count() {
        for k in (0..=2000).step_by(25) {
            let t = k as f64 * bundle.dt();
            let integral = quad::integrate(|s| bump_prime(bundle.u_prime(r, s)), 0.0, t.max(1e-300), 1e-13);
            let exact = (-0.5 * dir.l[2] * integral).exp();
            phi0_err = phi0_err.max((sol.terms[0][r * 2001 + k] - exact).norm() / exact);
        }
    }

    let dir = null_vector(-1.0, 1.0, 100.0).unwrap();
    let bundle = RayBundle::new(dir, 1000, 9, 0.02).unwrap();
    let mut scaling_ok = true;
    let mut factors = Vec::new();
    for order in [1usize, 2] {
        let sol = transport_solve(&coeffs, &bundle, order, ones).unwrap();
        let res: Vec<f64> = [1e3, 2e3, 4e3].iter().map(|&mu| ansatz_residual(&sol, mu).residual).collect();
        let expected = 2f64.powi(order as i32);
        for w in res.windows(2) {
            let factor = w[0] / w[1];
            scaling_ok &= factor >= expected / 2.0 && factor <= expected * 2.0;
            factors.push(format!("M{order} {factor:.3}"));
        }
    }

    let sys = SemilinearSystem::example2();
    let prof = WaveProfile::bump(&[0.0, 1.0]);
    let ren = solve_renormalizer(&sys, &prof, 1e-3).unwrap();
    let lin = linearized_coefficients(&ren, &sys.coupling_tensors(), &prof);
    let est = growth_rate_estimate(&lin, GrowthOptions::default()).unwrap();
    let ode = ComparisonOde {
        coeffs: &lin,
        direction: null_vector(est.u1, est.u2, 1e4).unwrap(),
    };
    let (lower_ok, lower_text) = match comparison_ode_check(&ode, ComparisonOptions::default()) {
        Ok(rep) => (
            matches!(rep.lower, LowerBound::Achieved { .. }),
            format!("lower bound {:?} on [{:.3}, {:.3}]", rep.lower, est.u1, est.u2),
        ),
        Err(e) => (false, format!("comparison check failed: {e}")),
    };
    Outcome::new(
        phi0_err <= 1e-8 && scaling_ok && lower_ok,
        format!("phi_0 error {phi0_err:.1e}; residual ratios {}; {lower_text}", factors.join(", ")),
    )
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let prof = WaveProfile::bump(&[1.0]);
    let coeffs = LinearizedCoefficients::scalar(1e-3, |u| prof.component(0, u, 1));
    let k = prof.holder_half_seminorm(0).value / std::f64::consts::SQRT_2;
    let grid = GoursatGrid::new(-1.0, 4e-4, 800.0, 0.025).unwrap();
    let scan = match nirenberg_blowup_scan(&coeffs, Frequency::new(C5_XI, 0.0), &[1e-2, 1e-3, 1e-4], &grid, &ModeOptions::default()) {
        Ok(s) => s,
        Err(e) => return Outcome::new(false, format!("scan failed: {e}")),
    };
    let times: Vec<String> = scan
        .entries
        .iter()
        .map(|e| format!("{:.0e}->{}", e.delta, e.t_blow.map_or("none".into(), |t| format!("{t:.1}"))))
        .collect();
    let all_blew = scan.entries.iter().all(|e| e.t_blow.is_some());
    let elapsed = start.elapsed();
    match blowup_fit(&scan.entries) {
        Some(fit) if all_blew => {
            let rel = (fit.slope * k - 1.0).abs();
            Outcome::new(
                fit.r2 >= 0.98 && rel <= 0.2 && elapsed < Duration::from_secs(600),
                format!(
                    "T_blow {}; slope {:.3} vs 1/K {:.3} ({:.1}% off), R2 {:.5}; {}",
                    times.join(", "),
                    fit.slope,
                    1.0 / k,
                    100.0 * rel,
                    fit.r2,
                    secs(elapsed)
                ),
            )
        }
        _ => Outcome::new(false, format!("T_blow {}: not every amplitude blew up", times.join(", "))),
    }
}

// ---------------------------------------------------------------- 10

fn criterion_10() -> Outcome {
    let mut volumes = Vec::new();
    let mut vol_ok = true;
    for (seed, t) in [4.0, 16.0, 64.0, 256.0].into_iter().enumerate() {
        let v = region_volume(t, 1_000_000, seed as u64).unwrap();
        vol_ok &= v.estimate <= 100.0 * t;
        volumes.push(format!("{:.2}t", v.estimate / t));
    }
    let caps: Vec<f64> = (4..=10)
        .map(|p| {
            let t = 2f64.powi(p);
            t * sphere_cap_measure(t, t).unwrap()
        })
        .collect();
    let cap_ratio = caps.iter().fold(0.0_f64, |m, &c| m.max(c)) / caps.iter().fold(f64::INFINITY, |m, &c| m.min(c));
    let ts = [4.0, 8.0, 16.0, 32.0, 64.0, 128.0];
    let mut weight_ok = true;
    let mut exps = Vec::new();
    for k in [1, 2] {
        let rep = weight_growth_check(bump, &all_strings(k), &ts).unwrap();
        weight_ok &= rep.fit.exponent <= k as f64 / 2.0 + 0.1;
        exps.push(format!("k{k} {:.3}", rep.fit.exponent));
    }
    Outcome::new(
        vol_ok && cap_ratio <= 3.0 && weight_ok,
        format!(
            "volumes {}; cap max/min {cap_ratio:.3}; weight exponents {}",
            volumes.join(", "),
            exps.join(", ")
        ),
    )
}

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |c: usize| selected.is_empty() || selected.contains(&c);
    // Panics are reported on the criterion line instead.
    std::panic::set_hook(Box::new(|_| {}));
    let mut shared = Shared::default();
    let mut failed = Vec::new();
    for c in 1..=10 {
        if !wanted(c) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(|| match c {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => criterion_4(&mut shared),
            5 => criterion_5(&mut shared),
            6 => criterion_6(&mut shared),
            7 => criterion_7(),
            8 => criterion_8(),
            9 => criterion_9(),
            _ => criterion_10(),
        }))
        .unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        println!("criterion {c}: {} {}", if outcome.pass { "PASS" } else { "FAIL" }, outcome.detail);
        if !outcome.pass {
            failed.push(c);
        }
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
