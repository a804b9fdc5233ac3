//! Modified Bessel function `I_0` of complex argument, with an overflow-free
//! scaled representation.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

pub type C64 = Complex<f64>;

/// Series/asymptotic switch point in `|z|`.
pub const CROSSOVER: f64 = 30.0;

/// `exp(log_abs + i·arg)`; carries magnitudes far beyond `f64::MAX`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaled {
    pub log_abs: f64,
    pub arg: f64,
}

impl Scaled {
    pub const ONE: Scaled = Scaled { log_abs: 0.0, arg: 0.0 };

    pub fn from_complex(z: C64) -> Self {
        Scaled {
            log_abs: z.norm().ln(),
            arg: z.arg(),
        }
    }

    /// `z·exp(log_scale)`.
    pub fn from_scaled_complex(z: C64, log_scale: f64) -> Self {
        Scaled {
            log_abs: z.norm().ln() + log_scale,
            arg: z.arg(),
        }
    }

    /// Overflows to infinity past `exp(709)`.
    pub fn to_complex(self) -> C64 {
        C64::from_polar(self.log_abs.exp(), self.arg)
    }

    /// `|self − other| / |other|` computed without leaving the scaled form.
    pub fn relative_error(self, reference: Scaled) -> f64 {
        let ratio = C64::from_polar((self.log_abs - reference.log_abs).exp(), self.arg - reference.arg);
        (ratio - 1.0).norm()
    }
}

/// Double-double arithmetic, enough for the cancelling power series.
#[derive(Clone, Copy, Debug)]
struct Dd {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn new(hi: f64) -> Self {
        Dd { hi, lo: 0.0 }
    }

    fn from_pair((hi, lo): (f64, f64)) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        Dd { hi, lo }
    }

    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Dd::from_pair((s, e + f))
    }

    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        Dd::from_pair((p, e + (self.hi * o.lo + self.lo * o.hi)))
    }

    fn div_f64(self, d: f64) -> Dd {
        let q1 = self.hi / d;
        let (p, e) = two_prod(q1, d);
        let r = self.add(Dd { hi: -p, lo: -e });
        let q2 = r.hi / d;
        Dd::from_pair((q1, q2))
    }
}

#[derive(Clone, Copy, Debug)]
struct CDd {
    re: Dd,
    im: Dd,
}

impl CDd {
    fn mul(self, o: CDd) -> CDd {
        CDd {
            re: self.re.mul(o.re).add(self.im.mul(o.im).neg()),
            im: self.re.mul(o.im).add(self.im.mul(o.re)),
        }
    }

    fn add(self, o: CDd) -> CDd {
        CDd {
            re: self.re.add(o.re),
            im: self.im.add(o.im),
        }
    }

    fn div_f64(self, d: f64) -> CDd {
        CDd {
            re: self.re.div_f64(d),
            im: self.im.div_f64(d),
        }
    }

    fn approx(self) -> C64 {
        C64::new(self.re.hi + self.re.lo, self.im.hi + self.im.lo)
    }
}

/// `Σ (z²/4)^k / (k!)²` summed in double-double.
pub fn bessel_i0_series(z: C64) -> C64 {
    let (a2, a2e) = two_prod(z.re, z.re);
    let (b2, b2e) = two_prod(z.im, z.im);
    let (ab, abe) = two_prod(z.re, z.im);
    // z²/4, exact up to double-double rounding.
    let w = CDd {
        re: Dd::from_pair((a2, a2e)).add(Dd::from_pair((b2, b2e)).neg()).div_f64(4.0),
        im: Dd::from_pair((ab, abe)).div_f64(2.0),
    };
    let w_abs = 0.25 * z.norm_sqr();
    let mut term = CDd {
        re: Dd::new(1.0),
        im: Dd::ZERO,
    };
    let mut sum = term;
    for k in 1..400u32 {
        let k2 = f64::from(k * k);
        term = term.mul(w).div_f64(k2);
        sum = sum.add(term);
        if k2 > w_abs {
            let t = term.approx().norm();
            let s = sum.approx().norm();
            if t <= 1e-20 * s || t == 0.0 {
                break;
            }
        }
    }
    sum.approx()
}

/// Large-`|z|` expansion with both exponential branches, valid for
/// `Re z ≥ 0`; returned scaled.
fn asymptotic_right_half(z: C64) -> Scaled {
    debug_assert!(z.re >= 0.0);
    let inv = 1.0 / z;
    let mut pow = C64::new(1.0, 0.0);
    let mut b = 1.0_f64;
    let mut dominant = C64::new(1.0, 0.0);
    let mut recessive = C64::new(1.0, 0.0);
    let mut last = f64::INFINITY;
    for k in 1..200u32 {
        let odd = f64::from(2 * k - 1);
        b *= odd * odd / (8.0 * f64::from(k));
        pow *= inv;
        let t = pow * b;
        let tn = t.norm();
        // Optimal truncation: stop once terms stop decreasing.
        if tn >= last || tn < 1e-18 {
            break;
        }
        last = tn;
        dominant += t;
        recessive += if k % 2 == 0 { t } else { -t };
    }
    let s = if z.im > 0.0 {
        1.0
    } else if z.im < 0.0 {
        -1.0
    } else {
        0.0
    };
    let bracket = dominant + C64::new(0.0, s) * (-2.0 * z).exp() * recessive;
    let root = (2.0 * std::f64::consts::PI * z).sqrt();
    Scaled {
        log_abs: z.re - root.norm().ln() + bracket.norm().ln(),
        arg: z.im - root.arg() + bracket.arg(),
    }
}

/// Asymptotic evaluation for any `z ≠ 0`, using that `I_0` is even.
pub fn bessel_i0_asymptotic(z: C64) -> Scaled {
    asymptotic_right_half(if z.re < 0.0 { -z } else { z })
}

/// `I_0(z)` in scaled form: power series for `|z| ≤ 30`, asymptotic beyond.
pub fn bessel_i0_scaled(z: C64) -> Scaled {
    if z.norm() <= CROSSOVER {
        Scaled::from_complex(bessel_i0_series(z))
    } else {
        bessel_i0_asymptotic(z)
    }
}

/// `I_0(z)`; infinite once the magnitude exceeds `f64::MAX`.
pub fn bessel_i0(z: C64) -> C64 {
    if z.norm() <= CROSSOVER {
        bessel_i0_series(z)
    } else {
        bessel_i0_asymptotic(z).to_complex()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dd_division_is_accurate() {
        let x = Dd::new(1.0).div_f64(3.0);
        let back = x.mul(Dd::new(3.0));
        assert!((back.hi - 1.0 + back.lo).abs() < 1e-30);
    }

    #[test]
    fn scaled_roundtrip() {
        let z = C64::new(-3.0, 4.0);
        let s = Scaled::from_complex(z);
        assert!((s.to_complex() - z).norm() < 1e-14);
        assert!(s.relative_error(s) == 0.0);
    }
}
