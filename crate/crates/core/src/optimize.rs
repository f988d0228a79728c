//! One-dimensional maximizers used by the exponent engines.
//!
//! Every outage exponent in this crate is a Legendre–Fenchel transform on the
//! nonpositive half-line, `sup_{λ ≤ 0} g(λ)` with `g` concave and smooth, so the
//! workhorse here is a derivative bisection on `g'` after an outward doubling
//! bracket. Golden-section search is kept for the outer one-dimensional
//! minimizations where no derivative is available.

/// Largest `|λ|` the bracket search is allowed to reach.
pub const LAMBDA_CAP: f64 = 1e12;

const MAX_BISECTIONS: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConcaveMax {
    pub argmax: f64,
    pub value: f64,
    /// The bracket hit [`LAMBDA_CAP`] before `g'` turned positive; `value` is
    /// then the capped supremum (a lower bound on the true one).
    pub capped: bool,
}

/// Maximizes a concave `g` over `λ ≤ 0` given its derivative `dg`.
///
/// If `dg(0) >= 0` the maximizer is the boundary `λ = 0`. Otherwise the lower
/// end is doubled from `-1` until `dg` is positive, and the root of `dg` is
/// bisected to machine precision.
pub fn maximize_concave_nonpositive<G, D>(g: G, dg: D) -> ConcaveMax
where
    G: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let d0 = dg(0.0);
    if !(d0 < 0.0) {
        return ConcaveMax {
            argmax: 0.0,
            value: g(0.0),
            capped: false,
        };
    }

    let mut hi = 0.0;
    let mut lo = -1.0;
    loop {
        let d = dg(lo);
        if d > 0.0 {
            break;
        }
        if d == 0.0 {
            return ConcaveMax {
                argmax: lo,
                value: g(lo),
                capped: false,
            };
        }
        hi = lo;
        lo *= 2.0;
        if -lo > LAMBDA_CAP {
            let argmax = -LAMBDA_CAP;
            return ConcaveMax {
                argmax,
                value: g(argmax),
                capped: true,
            };
        }
    }

    // dg(lo) > 0 > dg(hi)
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let d = dg(mid);
        if d > 0.0 {
            lo = mid;
        } else if d < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            hi = mid;
            break;
        }
    }

    let (g_lo, g_hi) = (g(lo), g(hi));
    let (argmax, value) = if g_lo >= g_hi { (lo, g_lo) } else { (hi, g_hi) };
    ConcaveMax {
        argmax,
        value,
        capped: false,
    }
}

/// Golden-section minimization of a unimodal `f` on `[a, b]`.
///
/// Returns `(x_min, f(x_min))`, stopping once the bracket is narrower than `tol`.
pub fn golden_section_min<F>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
