//! Small numerical kernels: adaptive Gauss–Kronrod quadrature and a
//! safeguarded bracketed root finder.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("integrand returned a non-finite value at x = {x}")]
    NonFinite { x: f64 },
    #[error("quadrature did not reach tolerance {tol} on [{a}, {b}]")]
    NoConvergence { a: f64, b: f64, tol: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RootError {
    #[error("no sign change on [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    NoBracket {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },
    #[error("function returned a non-finite value at x = {x}")]
    NonFinite { x: f64 },
}

// Kronrod 15-point nodes (nonnegative half) and weights; the Gauss 7-point
// rule uses every other node.
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
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_DEPTH: u32 = 50;

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<(f64, f64), QuadratureError> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let eval = |x: f64| {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(QuadratureError::NonFinite { x })
        }
    };
    let fc = eval(c)?;
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let pair = eval(c - dx)? + eval(c + dx)?;
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    Ok((kronrod * h, ((kronrod - gauss) * h).abs()))
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol` by recursive
/// bisection with a G7/K15 pair.
pub fn adaptive_integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, QuadratureError> {
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return adaptive_integrate(f, b, a, tol).map(|v| -v);
    }
    let (whole, err) = gk15(&f, a, b)?;
    refine(&f, a, b, whole, err, tol, 0)
}

fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    err: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, QuadratureError> {
    if err <= tol {
        return Ok(whole);
    }
    if depth >= MAX_DEPTH || (b - a) <= f64::EPSILON * (a.abs() + b.abs()) {
        return Err(QuadratureError::NoConvergence { a, b, tol });
    }
    let m = 0.5 * (a + b);
    let (left, el) = gk15(f, a, m)?;
    let (right, er) = gk15(f, m, b)?;
    if el + er <= tol {
        return Ok(left + right);
    }
    Ok(refine(f, a, m, left, el, 0.5 * tol, depth + 1)?
        + refine(f, m, b, right, er, 0.5 * tol, depth + 1)?)
}

/// Finds a root of `f` on `[lo, hi]` given a sign change, to absolute
/// tolerance `tol` in `x`.
///
/// Uses Illinois-modified false position steps, falling back to bisection
/// whenever the bracket fails to shrink by half.
pub fn find_root<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64, RootError> {
    let (mut a, mut b) = (lo, hi);
    let check = |x: f64, v: f64| {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(RootError::NonFinite { x })
        }
    };
    let mut fa = check(a, f(a))?;
    let mut fb = check(b, f(b))?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(RootError::NoBracket {
            lo,
            hi,
            f_lo: fa,
            f_hi: fb,
        });
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let width = b - a;
        if width.abs() <= tol {
            break;
        }
        let mut x = (a * fb - b * fa) / (fb - fa);
        if !x.is_finite() || x <= a.min(b) || x >= a.max(b) {
            x = 0.5 * (a + b);
        }
        let fx = check(x, f(x))?;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == fb.signum() {
            b = x;
            fb = fx;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = x;
            fa = fx;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
        if (b - a).abs() > 0.5 * width.abs() {
            let m = 0.5 * (a + b);
            let fm = check(m, f(m))?;
            if fm == 0.0 {
                return Ok(m);
            }
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
                fb = fm;
            }
            side = 0;
        }
    }
    // Return the endpoint with the smaller residual.
    Ok(if fa.abs() < fb.abs() { a } else { b })
}
