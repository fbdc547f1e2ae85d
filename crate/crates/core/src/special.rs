//! Rank-one Dunkl kernel and the special functions behind it.
//!
//! For the reflection group Z_2 acting on R with multiplicity k the kernel
//! E_k(z) = E(x, y), z = x*y, has Taylor coefficients c_n fixed by
//! (n + k(1 - (-1)^n)) c_n = c_{n-1}, c_0 = 1.  Large arguments are handled
//! through the confluent hypergeometric form E_k(z) = e^{-z} M(k+1, 2k+1, 2z)
//! and, on the imaginary axis, through Bessel asymptotics.

use num_complex::Complex64;
use statrs::function::gamma::{gamma, ln_gamma};

/// Above this |z| the real kernel switches from the Taylor recursion to the
/// Kummer asymptotic expansion.
const REAL_SERIES_LIMIT: f64 = 25.0;
/// Imaginary-axis thresholds: plain f64 series, then double-double series,
/// then Hankel asymptotics.
const IMAG_F64_LIMIT: f64 = 8.0;
const IMAG_DD_LIMIT: f64 = 30.0;

#[inline]
fn denom(n: usize, k: f64) -> f64 {
    if n % 2 == 1 {
        n as f64 + 2.0 * k
    } else {
        n as f64
    }
}

/// e^{-|z|} E_k(z). Finite and positive for every real z.
pub fn kernel_scaled(k: f64, z: f64) -> f64 {
    if k == 0.0 {
        return if z >= 0.0 { 1.0 } else { (2.0 * z).exp() };
    }
    if z.abs() <= REAL_SERIES_LIMIT {
        series_scaled(k, z)
    } else {
        asymptotic_scaled(k, z)
    }
}

/// E_k(z); overflows to infinity beyond |z| ~ 700, use [`kernel_scaled`] there.
pub fn kernel(k: f64, z: f64) -> f64 {
    kernel_scaled(k, z) * z.abs().exp()
}

/// ln E_k(z).
pub fn kernel_ln(k: f64, z: f64) -> f64 {
    z.abs() + kernel_scaled(k, z).ln()
}

fn series_scaled(k: f64, z: f64) -> f64 {
    let mut term = (-z.abs()).exp();
    let mut sum = term;
    let mut small = 0;
    let mut n = 1;
    loop {
        let d = denom(n, k);
        term *= z / d;
        sum += term;
        if n as f64 > z.abs() {
            // ratio of consecutive terms is below |z|/(n+1) from here on
            let q = z.abs() / (n as f64 + 1.0);
            let tail = term.abs() * q / (1.0 - q);
            if term.abs() <= 1e-16 * sum.abs() {
                small += 1;
            } else {
                small = 0;
            }
            if small >= 5 && tail <= 1e-12 * sum.abs() {
                break;
            }
        }
        n += 1;
        if n > 10_000 {
            break;
        }
    }
    sum
}

fn asymptotic_scaled(k: f64, z: f64) -> f64 {
    let x = 2.0 * z.abs();
    let b = 2.0 * k + 1.0;
    let a = if z >= 0.0 { k + 1.0 } else { k };
    let prefactor = (ln_gamma(b) - ln_gamma(a) + (a - b) * x.ln()).exp();
    let mut term: f64 = 1.0;
    let mut sum: f64 = 1.0;
    let mut s = 1.0;
    loop {
        let next = term * (b - a + s - 1.0) * (s - a) / (s * x);
        if next.abs() >= term.abs() || next.abs() < 1e-18 * sum.abs() {
            if next.abs() < term.abs() {
                sum += next;
            }
            break;
        }
        term = next;
        sum += term;
        s += 1.0;
    }
    prefactor * sum
}

/// e^{-|z|} dE_k/dz (z).
pub fn kernel_scaled_derivative(k: f64, z: f64) -> f64 {
    if k == 0.0 {
        return kernel_scaled(0.0, z);
    }
    if z.abs() < 0.5 {
        let mut term = 1.0;
        let mut sum = 0.0;
        let mut n = 1;
        loop {
            term /= denom(n, k);
            let contribution = n as f64 * term * z.powi(n as i32 - 1);
            sum += contribution;
            if n > 3 && contribution.abs() < 1e-18 * sum.abs().max(1e-300) {
                break;
            }
            n += 1;
        }
        return sum * (-z.abs()).exp();
    }
    // E' = E - k (E(z) - E(-z)) / z, both scaled by the same e^{-|z|}
    let s_plus = kernel_scaled(k, z);
    let s_minus = kernel_scaled(k, -z);
    s_plus - k * (s_plus - s_minus) / z
}

/// Logarithmic derivative E_k'(z) / E_k(z).
pub fn kernel_log_derivative(k: f64, z: f64) -> f64 {
    kernel_scaled_derivative(k, z) / kernel_scaled(k, z)
}

/// 1 - sign(z) E_k'(z) / E_k(z), computed without cancellation.
///
/// Both branches are ratios of Kummer functions with positive series, so
/// the gap keeps full relative accuracy where E'/E is within rounding of
/// +-1. At z = 0 the gap is 1.
pub fn kernel_log_derivative_gap(k: f64, z: f64) -> f64 {
    if z == 0.0 {
        return 1.0;
    }
    if k == 0.0 {
        return if z > 0.0 { 0.0 } else { 2.0 };
    }
    let x = 2.0 * z.abs();
    let b = 2.0 * k + 1.0;
    if z > 0.0 {
        2.0 * k / b * kummer_ratio((k + 1.0, b + 1.0), (k + 1.0, b), x)
    } else {
        2.0 * (k + 1.0) / b * kummer_ratio((k, b + 1.0), (k, b), x)
    }
}

/// M(a1, b1, x) / M(a2, b2, x) for x >= 0 and positive parameters.
fn kummer_ratio(p: (f64, f64), q: (f64, f64), x: f64) -> f64 {
    if x <= 50.0 {
        kummer_series(p.0, p.1, x) / kummer_series(q.0, q.1, x)
    } else {
        let ln_pre = ln_gamma(p.1) - ln_gamma(p.0) - ln_gamma(q.1)
            + ln_gamma(q.0)
            + (p.0 - p.1 - q.0 + q.1) * x.ln();
        ln_pre.exp() * kummer_asymptotic_sum(p.0, p.1, x) / kummer_asymptotic_sum(q.0, q.1, x)
    }
}

fn kummer_series(a: f64, b: f64, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut n = 0.0;
    loop {
        term *= (a + n) * x / ((b + n) * (n + 1.0));
        sum += term;
        n += 1.0;
        if n > x && term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Sum_n (b - a)_n (1 - a)_n / n! x^{-n}, truncated at the smallest term.
fn kummer_asymptotic_sum(a: f64, b: f64, x: f64) -> f64 {
    let mut term: f64 = 1.0;
    let mut sum: f64 = 1.0;
    let mut s = 1.0;
    loop {
        let next = term * (b - a + s - 1.0) * (s - a) / (s * x);
        if next.abs() >= term.abs() || next.abs() < 1e-18 * sum.abs() {
            if next.abs() < term.abs() {
                sum += next;
            }
            break;
        }
        term = next;
        sum += term;
        s += 1.0;
    }
    sum
}

/// E_k(-i s) for real s; modulus at most one.
pub fn kernel_imag(k: f64, s: f64) -> Complex64 {
    if k == 0.0 {
        return Complex64::new(s.cos(), -s.sin());
    }
    let a = s.abs();
    if a <= IMAG_F64_LIMIT {
        imag_series_f64(k, s)
    } else if a <= IMAG_DD_LIMIT {
        imag_series_dd(k, s)
    } else {
        let re = bessel_j_normalized(k - 0.5, a);
        let im = -s / (2.0 * k + 1.0) * bessel_j_normalized(k + 0.5, a);
        Complex64::new(re, im)
    }
}

fn imag_series_f64(k: f64, s: f64) -> Complex64 {
    let mut term = 1.0;
    let mut re = 1.0;
    let mut im = 0.0;
    let mut n = 1;
    loop {
        term *= s / denom(n, k);
        match n % 4 {
            0 => re += term,
            1 => im -= term,
            2 => re -= term,
            _ => im += term,
        }
        if n as f64 > s.abs() && term.abs() < 1e-18 {
            break;
        }
        n += 1;
    }
    Complex64::new(re, im)
}

/// n + 2k (odd n) or n carried without rounding.
fn denom_dd(n: usize, k: f64) -> Dd {
    if n % 2 == 1 {
        let (hi, lo) = two_sum(n as f64, 2.0 * k);
        Dd { hi, lo }
    } else {
        Dd::from(n as f64)
    }
}

fn imag_series_dd(k: f64, s: f64) -> Complex64 {
    let mut term = Dd::from(1.0);
    let mut re = Dd::from(1.0);
    let mut im = Dd::from(0.0);
    let mut n = 1;
    loop {
        term = term.mul_f64(s).div(denom_dd(n, k));
        match n % 4 {
            0 => re = re.add(term),
            1 => im = im.sub(term),
            2 => re = re.sub(term),
            _ => im = im.add(term),
        }
        if n as f64 > s.abs() && term.hi.abs() < 1e-20 {
            break;
        }
        n += 1;
    }
    Complex64::new(re.hi + re.lo, im.hi + im.lo)
}

/// Normalized Bessel function j_nu(s) = Gamma(nu+1) (2/s)^nu J_nu(s), with
/// j_nu(0) = 1. Taylor series for small s, Hankel expansion for large s.
pub fn bessel_j_normalized(nu: f64, s: f64) -> f64 {
    let s = s.abs();
    if s <= IMAG_DD_LIMIT {
        // sum_m (-1)^m (s/2)^{2m} / (m! (nu+1)_m) in double-double
        let q = -0.25 * s * s;
        let mut term = Dd::from(1.0);
        let mut sum = Dd::from(1.0);
        let mut m = 1.0;
        loop {
            term = term
                .mul_f64(q)
                .div(Dd::from(nu).add(Dd::from(m)).mul_f64(m));
            sum = sum.add(term);
            if m * m > -q && term.hi.abs() < 1e-20 {
                break;
            }
            m += 1.0;
        }
        return sum.hi + sum.lo;
    }
    hankel_j(nu, s)
}

fn hankel_j(nu: f64, s: f64) -> f64 {
    let (p, q) = hankel_pq(nu, s);
    let chi = s - (0.5 * nu + 0.25) * std::f64::consts::PI;
    let j = (2.0 / (std::f64::consts::PI * s)).sqrt() * (p * chi.cos() - q * chi.sin());
    gamma(nu + 1.0) * (2.0 / s).powf(nu) * j
}

fn hankel_pq(nu: f64, s: f64) -> (f64, f64) {
    let mu = 4.0 * nu * nu;
    let mut a = 1.0;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut last = f64::INFINITY;
    for m in 1..200 {
        let odd = (2 * m - 1) as f64;
        a *= (mu - odd * odd) / (m as f64 * 8.0 * s);
        if a.abs() >= last || a.abs() < 1e-18 {
            break;
        }
        last = a.abs();
        let sign = if (m / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if m % 2 == 1 {
            q += sign * a;
        } else {
            p += sign * a;
        }
    }
    (p, q)
}

/// Unevaluated sum hi + lo with |lo| <= ulp(hi)/2.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl From<f64> for Dd {
    fn from(hi: f64) -> Self {
        Dd { hi, lo: 0.0 }
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl Dd {
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }

    fn sub(self, o: Dd) -> Dd {
        self.add(Dd {
            hi: -o.hi,
            lo: -o.lo,
        })
    }

    fn mul_f64(self, b: f64) -> Dd {
        let p = self.hi * b;
        let e = self.hi.mul_add(b, -p);
        let (hi, lo) = quick_two_sum(p, e + self.lo * b);
        Dd { hi, lo }
    }

    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self.sub(b.mul_f64(q1));
        let q2 = r.hi / b.hi;
        let r = r.sub(b.mul_f64(q2));
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }.add(Dd::from(q3))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Direct Taylor sum with explicit coefficients; valid for modest |z|.
    fn taylor(k: f64, z: f64) -> f64 {
        let mut c = 1.0;
        let mut sum = 1.0;
        for n in 1..400 {
            c /= denom(n, k);
            sum += c * z.powi(n as i32);
        }
        sum
    }

    #[test]
    fn log_derivative_gap_matches_taylor_quotient() {
        for &k in &[0.5, 1.0, 2.3] {
            for &z in &[-3.0, -1.2, -0.3, 0.2, 1.0, 2.7] {
                let mut c = 1.0;
                let mut d = 0.0;
                for n in 1..400 {
                    c /= denom(n, k);
                    d += n as f64 * c * f64::powi(z, n as i32 - 1);
                }
                let expected = 1.0 - z.signum() * d / taylor(k, z);
                assert_relative_eq!(
                    kernel_log_derivative_gap(k, z),
                    expected,
                    max_relative = 1e-12
                );
            }
        }
    }

    #[test]
    fn log_derivative_gap_large_argument() {
        for &k in &[0.5, 1.0, 2.3] {
            for &u in &[200.0, 1e3, 1e5] {
                // gap ~ k/u for z = u, (k + 1)/u for z = -u
                assert!((kernel_log_derivative_gap(k, u) * u - k).abs() < 5.0 * k * k / u);
                let neg = kernel_log_derivative_gap(k, -u) * u - (k + 1.0);
                assert!(neg.abs() < 5.0 * (k + 1.0).powi(2) / u);
            }
            for &z in &[25.0, -25.0] {
                let below = kernel_log_derivative_gap(k, z * (1.0 - 1e-12));
                let above = kernel_log_derivative_gap(k, z * (1.0 + 1e-12));
                assert_relative_eq!(below, above, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn zero_multiplicity_is_exponential() {
        for z in [-3.0, -0.1, 0.0, 2.5] {
            assert_relative_eq!(kernel(0.0, z), f64::exp(z), max_relative = 1e-15);
        }
        let e = kernel_imag(0.0, 1.3);
        assert_relative_eq!(e.re, 1.3f64.cos(), max_relative = 1e-15);
        assert_relative_eq!(e.im, -(1.3f64.sin()), max_relative = 1e-15);
    }

    #[test]
    fn series_matches_taylor_oracle() {
        for &k in &[0.5, 1.0, 2.3] {
            for &z in &[-4.0, -1.0, 0.3, 1.0, 5.0] {
                assert_relative_eq!(kernel(k, z), taylor(k, z), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn half_integer_closed_forms() {
        // k = 1: E(z) = e^z - (e^z - ... ) has closed form via sinh/cosh:
        // j_{1/2}(iz) = sinh z / z, j_{3/2}(iz) = 3 (z cosh z - sinh z)/z^3
        for z in [-40.0f64, -26.0, -3.0, 0.7, 12.0, 30.0, 60.0] {
            let e = z.sinh() / z + z / 3.0 * 3.0 * (z * z.cosh() - z.sinh()) / z.powi(3);
            assert_relative_eq!(kernel(1.0, z), e, max_relative = 1e-12);
        }
    }

    #[test]
    fn routes_agree_at_switch() {
        for &k in &[0.5, 1.0, 2.3] {
            for &z in &[REAL_SERIES_LIMIT, -REAL_SERIES_LIMIT] {
                let a = series_scaled(k, z);
                let b = asymptotic_scaled(k, z);
                assert_relative_eq!(a, b, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn derivative_matches_difference() {
        for &k in &[0.5, 1.0, 2.3] {
            for &z in &[-3.0, -0.2, 0.0, 0.4, 2.0] {
                let h = 1e-4;
                let fd = (kernel(k, z + h) - kernel(k, z - h)) / (2.0 * h);
                let d = kernel_scaled_derivative(k, z) * z.abs().exp();
                assert_relative_eq!(d, fd, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn imaginary_routes_are_consistent() {
        for &k in &[0.5, 1.0, 2.3] {
            let s = IMAG_F64_LIMIT;
            assert!((imag_series_f64(k, s) - imag_series_dd(k, s)).norm() < 1e-12);
            let s = IMAG_DD_LIMIT;
            let series = imag_series_dd(k, s);
            let re = hankel_j(k - 0.5, s);
            let im = -s / (2.0 * k + 1.0) * hankel_j(k + 0.5, s);
            assert!(
                (series - Complex64::new(re, im)).norm() < 1e-12,
                "k={k} {series} {re} {im}"
            );
        }
    }

    #[test]
    fn imaginary_half_integer_closed_form() {
        // k = 1: j_{1/2}(s) = sin s / s, j_{3/2}(s) = 3 (sin s - s cos s) / s^3
        for s in [0.5f64, 7.0, 15.0, 29.0, 45.0, 120.0] {
            let e = kernel_imag(1.0, s);
            let re = s.sin() / s;
            let im = -s / 3.0 * 3.0 * (s.sin() - s * s.cos()) / s.powi(3);
            assert!((e.re - re).abs() < 1e-13, "s={s}");
            assert!((e.im - im).abs() < 1e-13, "s={s}");
        }
    }
}
