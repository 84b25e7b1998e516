//! Jump measures, counter-based random streams and expectation operators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::scalar::Real;

/// Lane used for jump-measure draws.
pub const LANE_JUMP: u64 = 0;
/// Lane used for set-valued selection draws.
pub const LANE_SELECT: u64 = 1;
/// Lane used for initial-condition sampling.
pub const LANE_INIT: u64 = 2;
/// Lane used by Monte Carlo expectation.
pub const LANE_EXPECT: u64 = 3;

/// Default number of Gauss-Legendre nodes.
pub const DEFAULT_NODES: usize = 64;
/// Default Monte Carlo sample count.
pub const DEFAULT_MC_SAMPLES: usize = 100_000;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based stream: draw `k` of trial `i` on a lane is a pure function
/// of `(seed, i, lane, k)`, so trials never share state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RandomStream {
    master_seed: u64,
    trial: u64,
    lane: u64,
    counter: u64,
}

impl RandomStream {
    pub fn new(master_seed: u64, trial: u64) -> Self {
        RandomStream { master_seed, trial, lane: LANE_JUMP, counter: 0 }
    }

    /// Fresh stream for the same trial on another lane.
    pub fn lane(&self, lane: u64) -> Self {
        RandomStream { lane, counter: 0, ..*self }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn trial(&self) -> u64 {
        self.trial
    }

    pub fn draw_counter(&self) -> u64 {
        self.counter
    }

    /// Raw 64 bits for sub-draw `sub` of the current logical draw.
    pub fn bits(&self, sub: u64) -> u64 {
        let mut h = splitmix64(self.master_seed ^ 0x5348_4453_4C41_4221);
        h = splitmix64(h ^ self.trial);
        h = splitmix64(h ^ self.lane.rotate_left(17));
        h = splitmix64(h ^ self.counter);
        splitmix64(h ^ sub.wrapping_mul(0xA24B_AED4_963E_E407))
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform_at(&self, sub: u64) -> f64 {
        (self.bits(sub) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn open_uniform_at(&self, sub: u64) -> f64 {
        ((self.bits(sub) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal from sub-draws `sub` and `sub + 1` (Box-Muller, cosine branch).
    pub fn normal_at(&self, sub: u64) -> f64 {
        let u1 = self.open_uniform_at(sub);
        let u2 = self.uniform_at(sub + 1);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Same trial and lane positioned at logical draw `k`.
    pub fn at_counter(&self, k: u64) -> Self {
        RandomStream { counter: k, ..*self }
    }

    pub fn advance(&mut self) {
        self.counter += 1;
    }

    /// One logical uniform draw.
    pub fn next_uniform(&mut self) -> f64 {
        let u = self.uniform_at(0);
        self.advance();
        u
    }
}

/// Probability measure of the jump randomness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JumpMeasure {
    /// Finitely supported scalar measure `Σ λ_i δ_{v_i}`.
    Discrete { points: Vec<f64>, weights: Vec<f64> },
    UniformInterval { a: f64, b: f64 },
    /// Density `e^{-(T-v)} / (1 - e^{-T})` on `[0, T]`.
    TruncatedExponential { t: f64 },
    UniformBall { radius: f64, dim: usize },
    /// Independent components; a draw concatenates the component draws.
    Product { components: Vec<JumpMeasure> },
}

/// How `E_μ[f]` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Expectation {
    ExactDiscrete,
    Quadrature { nodes: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

impl Expectation {
    /// Exact enumeration when every component is discrete, Gauss-Legendre
    /// when every component is one-dimensional, Monte Carlo otherwise.
    pub fn auto(measure: &JumpMeasure) -> Self {
        if measure.is_discrete() {
            Expectation::ExactDiscrete
        } else if measure.is_one_dimensional_product() {
            Expectation::Quadrature { nodes: DEFAULT_NODES }
        } else {
            Expectation::MonteCarlo { samples: DEFAULT_MC_SAMPLES, seed: 0 }
        }
    }

    fn name(&self) -> String {
        match self {
            Expectation::ExactDiscrete => "exact_discrete".into(),
            Expectation::Quadrature { nodes } => format!("quadrature({nodes})"),
            Expectation::MonteCarlo { samples, .. } => format!("monte_carlo({samples})"),
        }
    }
}

/// Closed-form mean of the reflected truncated exponential on `[0, t]`.
pub fn truncated_exponential_mean(t: f64) -> f64 {
    t - 1.0 + t * (-t).exp() / -(-t).exp_m1()
}

impl JumpMeasure {
    pub fn kind_name(&self) -> &'static str {
        match self {
            JumpMeasure::Discrete { .. } => "discrete",
            JumpMeasure::UniformInterval { .. } => "uniform_interval",
            JumpMeasure::TruncatedExponential { .. } => "truncated_exponential",
            JumpMeasure::UniformBall { .. } => "uniform_ball",
            JumpMeasure::Product { .. } => "product",
        }
    }

    /// Dimension of one draw.
    pub fn dim(&self) -> usize {
        match self {
            JumpMeasure::UniformBall { dim, .. } => *dim,
            JumpMeasure::Product { components } => components.iter().map(|c| c.dim()).sum(),
            _ => 1,
        }
    }

    pub fn is_discrete(&self) -> bool {
        match self {
            JumpMeasure::Discrete { .. } => true,
            JumpMeasure::Product { components } => components.iter().all(|c| c.is_discrete()),
            _ => false,
        }
    }

    fn is_one_dimensional_product(&self) -> bool {
        match self {
            JumpMeasure::UniformBall { .. } => false,
            JumpMeasure::Product { components } => components.iter().all(|c| c.is_one_dimensional_product()),
            _ => true,
        }
    }

    /// Density of a one-dimensional absolutely continuous measure.
    fn density(&self, v: f64) -> f64 {
        match *self {
            JumpMeasure::UniformInterval { a, b } => {
                if (a..=b).contains(&v) {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            JumpMeasure::TruncatedExponential { t } => {
                if (0.0..=t).contains(&v) {
                    (v - t).exp() / -(-t).exp_m1()
                } else {
                    0.0
                }
            }
            _ => f64::NAN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidMeasure(m));
        match self {
            JumpMeasure::Discrete { points, weights } => {
                if points.is_empty() || points.len() != weights.len() {
                    return bad("discrete support and weights must be nonempty and equally long".into());
                }
                if points.iter().any(|p| !p.is_finite()) {
                    return bad("discrete support points must be finite".into());
                }
                if weights.iter().any(|&w| !(w >= 0.0)) {
                    return bad("discrete weights must be nonnegative".into());
                }
                let s: f64 = weights.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return bad(format!("discrete weights sum to {s}, not 1"));
                }
            }
            JumpMeasure::UniformInterval { a, b } => {
                if !(a.is_finite() && b.is_finite() && a <= b) {
                    return bad(format!("uniform interval needs finite a <= b, got [{a}, {b}]"));
                }
            }
            JumpMeasure::TruncatedExponential { t } => {
                if !(t.is_finite() && *t > 0.0) {
                    return bad(format!("truncated exponential needs T > 0, got {t}"));
                }
                let mass = quadrature::integrate(|v| self.density(v), 0.0, *t, DEFAULT_NODES);
                if (mass - 1.0).abs() > 1e-10 {
                    return bad(format!("truncated exponential density integrates to {mass}"));
                }
            }
            JumpMeasure::UniformBall { radius, dim } => {
                if !(radius.is_finite() && *radius >= 0.0) || *dim == 0 {
                    return bad(format!("uniform ball needs radius >= 0 and dim >= 1, got {radius}, {dim}"));
                }
            }
            JumpMeasure::Product { components } => {
                if components.is_empty() {
                    return bad("product of zero measures".into());
                }
                for c in components {
                    c.validate()?;
                }
            }
        }
        Ok(())
    }

    fn draw(&self, s: &RandomStream, sub: &mut u64) -> Vec<f64> {
        let mut next = || {
            let u = s.uniform_at(*sub);
            *sub += 1;
            u
        };
        match self {
            JumpMeasure::Discrete { points, weights } => {
                let u = next();
                let mut acc = 0.0;
                for (p, w) in points.iter().zip(weights) {
                    acc += w;
                    if u < acc {
                        return vec![*p];
                    }
                }
                // Rounding left u above the cumulative sum; take the last atom with mass.
                let last = weights.iter().rposition(|&w| w > 0.0).unwrap_or(points.len() - 1);
                vec![points[last]]
            }
            JumpMeasure::UniformInterval { a, b } => {
                let u = next();
                vec![a + (b - a) * u]
            }
            JumpMeasure::TruncatedExponential { t } => {
                let u = next();
                // Inverse CDF of the reflected density.
                let v = t + (u + (1.0 - u) * (-t).exp()).ln();
                vec![v.clamp(0.0, *t)]
            }
            JumpMeasure::UniformBall { radius, dim } => {
                let g: Vec<f64> = (0..*dim)
                    .map(|_| {
                        let n = s.normal_at(*sub);
                        *sub += 2;
                        n
                    })
                    .collect();
                let u = s.uniform_at(*sub);
                *sub += 1;
                let n = g.iter().map(|a| a * a).sum::<f64>().sqrt();
                let r = radius * u.powf(1.0 / *dim as f64);
                if n == 0.0 {
                    let mut e = vec![0.0; *dim];
                    e[0] = r;
                    return e;
                }
                g.into_iter().map(|a| a / n * r).collect()
            }
            JumpMeasure::Product { components } => {
                components.iter().flat_map(|c| c.draw(s, sub)).collect()
            }
        }
    }

    /// One draw; advances the stream by exactly one logical draw.
    pub fn sample(&self, stream: &mut RandomStream) -> Vec<f64> {
        let mut sub = 0;
        let v = self.draw(stream, &mut sub);
        stream.advance();
        v
    }

    /// Weighted nodes `(v_k, w_k)` with `E_μ[f] ≈ Σ w_k f(v_k)`.
    pub fn rule<T: Real>(&self, method: &Expectation) -> Result<Vec<(Vec<T>, T)>> {
        let mismatch = || Error::MethodMismatch { method: method.name(), measure: self.kind_name().into() };
        match method {
            Expectation::ExactDiscrete => {
                if !self.is_discrete() {
                    return Err(mismatch());
                }
                self.tensor_rule(0)
            }
            Expectation::Quadrature { nodes } => {
                if !self.is_one_dimensional_product() || *nodes == 0 {
                    return Err(mismatch());
                }
                self.tensor_rule(*nodes)
            }
            Expectation::MonteCarlo { samples, seed } => {
                if *samples == 0 {
                    return Err(mismatch());
                }
                let mut s = RandomStream::new(*seed, 0).lane(LANE_EXPECT);
                let w = T::one() / T::lit(*samples as f64);
                Ok((0..*samples)
                    .map(|_| (self.sample(&mut s).into_iter().map(T::lit).collect(), w))
                    .collect())
            }
        }
    }

    fn tensor_rule<T: Real>(&self, nodes: usize) -> Result<Vec<(Vec<T>, T)>> {
        Ok(match self {
            JumpMeasure::Discrete { points, weights } => points
                .iter()
                .zip(weights)
                .filter(|(_, &w)| w > 0.0)
                .map(|(&p, &w)| (vec![T::lit(p)], T::lit(w)))
                .collect(),
            JumpMeasure::UniformInterval { a, b } if a == b => vec![(vec![T::lit(*a)], T::one())],
            JumpMeasure::UniformInterval { a, b } => {
                let scale = T::one() / (T::lit(*b) - T::lit(*a));
                quadrature::rule_on(nodes, T::lit(*a), T::lit(*b))
                    .into_iter()
                    .map(|(x, w)| (vec![x], w * scale))
                    .collect()
            }
            JumpMeasure::TruncatedExponential { t } => {
                let tt = T::lit(*t);
                let norm = -(-tt).exp_m1();
                quadrature::rule_on(nodes, T::zero(), tt)
                    .into_iter()
                    .map(|(x, w)| (vec![x], w * (x - tt).exp() / norm))
                    .collect()
            }
            JumpMeasure::UniformBall { .. } => unreachable!("checked by caller"),
            JumpMeasure::Product { components } => {
                let mut acc: Vec<(Vec<T>, T)> = vec![(vec![], T::one())];
                for c in components {
                    let r = c.tensor_rule::<T>(nodes)?;
                    acc = acc
                        .iter()
                        .flat_map(|(p, w)| {
                            r.iter().map(move |(q, u)| {
                                let mut v = p.clone();
                                v.extend_from_slice(q);
                                (v, *w * *u)
                            })
                        })
                        .collect();
                }
                acc
            }
        })
    }
}

/// `E_μ[f]` by the requested method.
pub fn expectation<T: Real>(measure: &JumpMeasure, f: impl Fn(&[T]) -> T, method: &Expectation) -> Result<T> {
    Ok(measure.rule::<T>(method)?.iter().map(|(v, w)| *w * f(v)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ex1() -> JumpMeasure {
        JumpMeasure::Discrete { points: vec![-1.0, 1.0], weights: vec![17.0 / 20.0, 3.0 / 20.0] }
    }

    #[test]
    fn discrete_frequency() {
        let m = ex1();
        let mut s = RandomStream::new(11, 3);
        let n = 100_000;
        let neg = (0..n).filter(|_| m.sample(&mut s)[0] == -1.0).count();
        let f = neg as f64 / n as f64;
        assert!((f - 0.85).abs() < 0.01, "frequency {f}");
        assert_eq!(s.draw_counter(), n as u64);
    }

    #[test]
    fn degenerate_interval() {
        let m = JumpMeasure::UniformInterval { a: 0.0, b: 0.0 };
        let mut s = RandomStream::new(1, 0);
        for _ in 0..100 {
            assert_eq!(m.sample(&mut s), vec![0.0]);
        }
        assert_eq!(expectation::<f64>(&m, |v| v[0] + 2.0, &Expectation::Quadrature { nodes: 8 }).unwrap(), 2.0);
    }

    #[test]
    fn truncated_exponential_quadrature_mean() {
        let m = JumpMeasure::TruncatedExponential { t: 100.0 };
        m.validate().unwrap();
        let q = expectation::<f64>(&m, |v| v[0], &Expectation::Quadrature { nodes: 64 }).unwrap();
        assert!((q - truncated_exponential_mean(100.0)).abs() < 1e-10);
    }

    #[test]
    fn constant_integrand_is_preserved() {
        let measures = [
            ex1(),
            JumpMeasure::UniformInterval { a: 0.0, b: 2.0 },
            JumpMeasure::TruncatedExponential { t: 3.0 },
            JumpMeasure::UniformBall { radius: 1.0, dim: 2 },
            JumpMeasure::Product { components: vec![ex1(), JumpMeasure::UniformInterval { a: 0.0, b: 2.0 }] },
        ];
        for m in &measures {
            let e = expectation::<f64>(m, |_| 2.5, &Expectation::auto(m)).unwrap();
            assert_abs_diff_eq!(e, 2.5, epsilon = 1e-10);
        }
    }

    #[test]
    fn method_mismatch() {
        let m = JumpMeasure::UniformInterval { a: 0.0, b: 1.0 };
        assert!(matches!(
            expectation::<f64>(&m, |v| v[0], &Expectation::ExactDiscrete),
            Err(Error::MethodMismatch { .. })
        ));
        let b = JumpMeasure::UniformBall { radius: 1.0, dim: 2 };
        assert!(expectation::<f64>(&b, |v| v[0], &Expectation::Quadrature { nodes: 8 }).is_err());
    }

    #[test]
    fn invalid_weights() {
        let m = JumpMeasure::Discrete { points: vec![0.0, 1.0], weights: vec![0.5, 0.6] };
        assert!(m.validate().is_err());
        assert!(JumpMeasure::UniformInterval { a: 1.0, b: 0.0 }.validate().is_err());
    }

    #[test]
    fn ball_draws_stay_inside() {
        let m = JumpMeasure::UniformBall { radius: 2.0, dim: 3 };
        let mut s = RandomStream::new(5, 9);
        let mut mean_r3 = 0.0;
        let n = 20_000;
        for _ in 0..n {
            let v = m.sample(&mut s);
            let r = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(r <= 2.0 + 1e-12);
            mean_r3 += (r / 2.0).powi(3);
        }
        // (r/R)^d is uniform on [0,1].
        assert!((mean_r3 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn product_dimension_and_replay() {
        let m = JumpMeasure::Product { components: vec![ex1(), JumpMeasure::UniformInterval { a: 0.0, b: 2.0 }] };
        assert_eq!(m.dim(), 2);
        let mut a = RandomStream::new(42, 7);
        let mut b = RandomStream::new(42, 7);
        for _ in 0..50 {
            assert_eq!(m.sample(&mut a), m.sample(&mut b));
        }
    }

    #[test]
    fn lanes_are_distinct() {
        let s = RandomStream::new(1, 1);
        assert_ne!(s.bits(0), s.lane(LANE_SELECT).bits(0));
        assert_ne!(s.bits(0), RandomStream::new(1, 2).bits(0));
    }

    #[test]
    fn serde_tags() {
        let m = JumpMeasure::Product { components: vec![ex1(), JumpMeasure::TruncatedExponential { t: 100.0 }] };
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"kind\":\"product\""));
        let back: JumpMeasure = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
