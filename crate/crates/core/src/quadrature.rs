//! Gauss-Legendre rules.

use crate::scalar::Real;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// nodes ascending. Roots of `P_n` are polished by Newton iteration.
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    assert!(n >= 1, "quadrature needs at least one node");
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let nf = T::lit(n as f64);
    let pi = T::PI();
    let tol = T::epsilon() * T::lit(4.0);
    for i in 0..(n + 1) / 2 {
        // Tricomi initial guess for the i-th largest root.
        let k = T::lit(i as f64 + 0.75);
        let mut x = (pi * k / (nf + T::lit(0.5))).cos();
        let mut dp = T::one();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x = x - dx;
            if dx.abs() <= tol {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = T::lit(2.0) / ((T::one() - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = T::zero();
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_with_derivative<T: Real>(n: usize, x: T) -> (T, T) {
    let mut p0 = T::one();
    let mut p1 = x;
    for k in 2..=n {
        let kf = T::lit(k as f64);
        let p2 = ((T::lit(2.0) * kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (T::one(), T::zero());
    }
    let nf = T::lit(n as f64);
    let d = nf * (x * p1 - p0) / (x * x - T::one());
    (p1, d)
}

/// Rule mapped to `[a, b]`.
pub fn rule_on<T: Real>(n: usize, a: T, b: T) -> Vec<(T, T)> {
    let (x, w) = gauss_legendre::<T>(n);
    let half = T::lit(0.5) * (b - a);
    let mid = T::lit(0.5) * (a + b);
    x.into_iter().zip(w).map(|(xi, wi)| (mid + half * xi, half * wi)).collect()
}

/// `∫_a^b f` with an `n`-point rule.
pub fn integrate<T: Real>(f: impl Fn(T) -> T, a: T, b: T, n: usize) -> T {
    rule_on(n, a, b).into_iter().map(|(x, w)| w * f(x)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 5, 16, 64, 128] {
            let (_, w) = gauss_legendre::<f64>(n);
            assert_abs_diff_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn three_point_rule() {
        let (x, w) = gauss_legendre::<f64>(3);
        assert_abs_diff_eq!(x[2], (0.6f64).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 8.0 / 9.0, epsilon = 1e-15);
        assert_eq!(x[1], 0.0);
    }

    #[test]
    fn exact_for_polynomials() {
        // n nodes integrate degree 2n-1 exactly.
        let v = integrate(|x: f64| x.powi(9) + 3.0 * x.powi(4), 0.0, 2.0, 5);
        assert_abs_diff_eq!(v, 1024.0 / 10.0 + 3.0 * 32.0 / 5.0, epsilon = 1e-11);
    }

    #[test]
    fn f32_rule() {
        let v = integrate(|x: f32| x.exp(), 0.0, 1.0, 8);
        assert!((v - (1f32.exp() - 1.0)).abs() < 1e-5);
    }
}
