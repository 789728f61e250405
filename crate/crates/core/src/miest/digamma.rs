use crate::scalar::Real;

/// Digamma function for `x > 0`: upward recurrence to `x >= 10`, then the
/// asymptotic series through the `x^-14` term.
pub fn digamma<T: Real>(x: T) -> T {
    if x.is_nan() || x <= T::zero() {
        return T::nan();
    }
    if x.is_infinite() {
        return x;
    }
    let mut x = x;
    let mut acc = T::zero();
    let ten = T::lit(10.0);
    while x < ten {
        acc = acc - x.recip();
        x = x + T::one();
    }
    // B_2k / (2k) for k = 1..7
    const COEF: [f64; 7] = [
        1.0 / 12.0,
        -1.0 / 120.0,
        1.0 / 252.0,
        -1.0 / 240.0,
        1.0 / 132.0,
        -691.0 / 32760.0,
        1.0 / 12.0,
    ];
    let inv2 = (x * x).recip();
    let mut series = T::zero();
    for c in COEF.iter().rev() {
        series = (series + T::lit(*c)) * inv2;
    }
    acc + x.ln() - T::lit(0.5) / x - series
}
