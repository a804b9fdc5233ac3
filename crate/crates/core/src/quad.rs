//! Small numerical helpers: adaptive quadrature and high-order cumulative
//! integration of tabulated data.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One Gauss–Kronrod 7/15 panel: (Kronrod estimate, |Kronrod − Gauss|).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod integration of `f` over `[a, b]` to absolute
/// tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut stack = vec![(lo, hi, tol, 0usize)];
    let mut total = 0.0;
    while let Some((x0, x1, t, depth)) = stack.pop() {
        let (v, err) = gk15(&f, x0, x1);
        if err <= t || depth >= 40 || (x1 - x0) < 1e-14 * (1.0 + x0.abs()) {
            total += v;
        } else {
            let m = 0.5 * (x0 + x1);
            stack.push((x0, m, 0.5 * t, depth + 1));
            stack.push((m, x1, 0.5 * t, depth + 1));
        }
    }
    sign * total
}

/// Cumulative integral of equally spaced samples, fourth-order accurate:
/// `out[k] ≈ ∫_{x_0}^{x_k}`. Needs at least 4 samples; fewer fall back to
/// the trapezoid rule.
pub fn cumulative_integral(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    let mut out = vec![0.0; n];
    if n < 4 {
        for k in 1..n {
            out[k] = out[k - 1] + 0.5 * h * (y[k - 1] + y[k]);
        }
        return out;
    }
    for k in 0..n - 1 {
        let piece = if k == 0 {
            h / 24.0 * (9.0 * y[0] + 19.0 * y[1] - 5.0 * y[2] + y[3])
        } else if k == n - 2 {
            h / 24.0 * (9.0 * y[n - 1] + 19.0 * y[n - 2] - 5.0 * y[n - 3] + y[n - 4])
        } else {
            h / 24.0 * (-y[k - 1] + 13.0 * y[k] + 13.0 * y[k + 1] - y[k + 2])
        };
        out[k + 1] = out[k] + piece;
    }
    out
}

/// Four-point Lagrange interpolation of equally spaced samples starting at
/// `x0`; clamps to the end values outside the table.
pub fn lagrange4(y: &[f64], x0: f64, h: f64, x: f64) -> f64 {
    let n = y.len();
    let s = (x - x0) / h;
    if s <= 0.0 {
        return y[0];
    }
    if s >= (n - 1) as f64 {
        return y[n - 1];
    }
    let (k, w) = lagrange4_stencil(n, s);
    (0..4).map(|m| w[m] * y[k + m]).sum()
}

/// First node and weights of the four-point stencil at fractional index `s`.
pub fn lagrange4_stencil(n: usize, s: f64) -> (usize, [f64; 4]) {
    assert!(n >= 4, "need at least 4 samples");
    let base = (s.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let t = s - base as f64;
    let w = [
        -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0,
        t * (t - 2.0) * (t - 3.0) / 2.0,
        -t * (t - 1.0) * (t - 3.0) / 2.0,
        t * (t - 1.0) * (t - 2.0) / 6.0,
    ];
    (base, w)
}

/// Golden-section maximization of a unimodal function on `[a, b]`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let r = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_kronrod_polynomial_and_smooth() {
        assert!((integrate(|x| x * x, 0.0, 3.0, 1e-12) - 9.0).abs() < 1e-12);
        assert!((integrate(f64::sin, 0.0, std::f64::consts::PI, 1e-12) - 2.0).abs() < 1e-12);
        assert!((integrate(|x| x, 2.0, 0.0, 1e-12) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn cumulative_is_exact_for_cubics() {
        let h = 0.1;
        let y: Vec<f64> = (0..21).map(|k| (k as f64 * h).powi(3)).collect();
        let c = cumulative_integral(&y, h);
        for (k, v) in c.iter().enumerate() {
            let x = k as f64 * h;
            assert!((v - x.powi(4) / 4.0).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn lagrange_reproduces_cubics() {
        let y: Vec<f64> = (0..10).map(|k| { let x = k as f64 * 0.5; x * x * x - x }).collect();
        for &x in &[0.1, 1.3, 2.2, 4.4] {
            assert!((lagrange4(&y, 0.0, 0.5, x) - (x * x * x - x)).abs() < 1e-12);
        }
    }

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, v) = golden_max(|x| -(x - 0.3) * (x - 0.3) + 2.0, -1.0, 1.0, 80);
        assert!((x - 0.3).abs() < 1e-7 && (v - 2.0).abs() < 1e-12);
    }
}
