//! Definiteness checks for switched-system matrix inequalities and the
//! `(σ, η)` feasibility search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Strictness margin for `≺ 0`.
pub const TOL_PD: f64 = 1e-10;
/// Symmetry tolerance on mode certificates.
pub const TOL_SYM: f64 = 1e-12;
/// Fraction of the certificate spread used when choosing `σ`.
pub const SIGMA_SAFETY: f64 = 0.95;

/// `(λ_max(Sym(M)) < -TOL_PD, λ_max(Sym(M)))`.
pub fn check_negative_definite<T: Real>(m: &Matrix<T>) -> Result<(bool, T)> {
    if !m.is_square() {
        return Err(Error::NotSquare { rows: m.rows(), cols: m.cols() });
    }
    if !m.is_finite() {
        return Err(Error::Config("matrix has non-finite entries".into()));
    }
    let l = m.lambda_max_sym()?;
    Ok((l < -T::lit(TOL_PD), l))
}

/// `σ⁻¹ ln(1 + σ)`, decreasing from 1 at `σ → 0` to 0 at infinity.
pub fn log_ratio<T: Real>(sigma: T) -> T {
    sigma.ln_1p() / sigma
}

/// Mode data for the switched inequalities:
/// (i) `A_qᵀP_q + P_qA_q + σηT⁻¹P_q ≺ 0`, (ii) `σ⁻¹ln(1+σ)P − P_q ≺ 0` with
/// `P = Σ λ_q P_q`, and optionally (iii) `LᵀP_z + P_zL ≺ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedLmiInstance<T> {
    pub a: Vec<Matrix<T>>,
    pub p: Vec<Matrix<T>>,
    pub lambda: Vec<T>,
    pub sigma: T,
    pub eta: T,
    pub t_cap: T,
    /// `(L, P_z)`.
    pub fast_pair: Option<(Matrix<T>, Matrix<T>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiEntry {
    /// `"i"`, `"ii"` or `"iii"`.
    pub inequality: String,
    /// Zero-based mode index; absent for the fast pair.
    pub mode: Option<usize>,
    pub lambda_max: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiReport {
    pub sigma: f64,
    pub eta: f64,
    pub entries: Vec<LmiEntry>,
    pub pass: bool,
}

impl LmiReport {
    pub fn first_failure(&self) -> Option<&LmiEntry> {
        self.entries.iter().find(|e| !e.pass)
    }
}

fn check_certificate<T: Real>(p: &Matrix<T>, mode: usize) -> Result<()> {
    let fail = |reason: String| Err(Error::Infeasible { mode, reason });
    if !p.is_square() {
        return fail(format!("P is {}x{}", p.rows(), p.cols()));
    }
    if p.max_abs_diff(&p.transpose()) > T::lit(TOL_SYM) {
        return fail("P is not symmetric".into());
    }
    let l = p.lambda_min_sym()?;
    if !(l > T::zero()) {
        return fail(format!("P is not positive definite (λ_min = {l})"));
    }
    Ok(())
}

impl<T: Real> SwitchedLmiInstance<T> {
    pub fn validate(&self) -> Result<()> {
        if self.a.is_empty() || self.a.len() != self.p.len() || self.a.len() != self.lambda.len() {
            return Err(Error::Dimension(format!(
                "{} mode matrices, {} certificates, {} probabilities",
                self.a.len(),
                self.p.len(),
                self.lambda.len()
            )));
        }
        let n = self.a[0].rows();
        for (q, (a, p)) in self.a.iter().zip(&self.p).enumerate() {
            if a.rows() != n || a.cols() != n || p.rows() != n || p.cols() != n {
                return Err(Error::Dimension(format!("mode {q} matrices are not {n}x{n}")));
            }
            check_certificate(p, q)?;
        }
        if self.lambda.iter().any(|&l| !(l >= T::zero())) {
            return Err(Error::InvalidMeasure("mode probabilities must be nonnegative".into()));
        }
        let s: T = self.lambda.iter().copied().sum();
        if (s - T::one()).abs() > T::lit(1e-12).max(T::epsilon() * T::lit(16.0)) {
            return Err(Error::InvalidMeasure(format!("mode probabilities sum to {s}")));
        }
        if !(self.sigma > T::zero() && self.eta >= T::zero() && self.t_cap > T::zero()) {
            return Err(Error::Config(format!("need σ > 0, η ≥ 0, T > 0; got {}, {}, {}", self.sigma, self.eta, self.t_cap)));
        }
        if let Some((_, pz)) = &self.fast_pair {
            check_certificate(pz, self.a.len())?;
        }
        Ok(())
    }

    /// `P = Σ λ_q P_q`.
    pub fn mean_certificate(&self) -> Matrix<T> {
        let n = self.p[0].rows();
        self.p.iter().zip(&self.lambda).fold(Matrix::zeros(n, n), |acc, (p, &l)| &acc + &p.scale(l))
    }
}

/// Evaluates every inequality for every mode.
pub fn check_switched_lmis<T: Real>(inst: &SwitchedLmiInstance<T>) -> Result<LmiReport> {
    inst.validate()?;
    let mut entries = vec![];
    let drift = inst.sigma * inst.eta / inst.t_cap;
    let pbar = inst.mean_certificate();
    let g = log_ratio(inst.sigma);
    for (q, (a, p)) in inst.a.iter().zip(&inst.p).enumerate() {
        let m = &(&(&a.transpose() * p) + &(p * a)) + &p.scale(drift);
        let (pass, l) = check_negative_definite(&m)?;
        entries.push(LmiEntry { inequality: "i".into(), mode: Some(q), lambda_max: l.as_f64(), pass });
        let (pass, l) = check_negative_definite(&(&pbar.scale(g) - p))?;
        entries.push(LmiEntry { inequality: "ii".into(), mode: Some(q), lambda_max: l.as_f64(), pass });
    }
    if let Some((l_mat, pz)) = &inst.fast_pair {
        let (pass, l) = check_negative_definite(&(&(&l_mat.transpose() * pz) + &(pz * l_mat)))?;
        entries.push(LmiEntry { inequality: "iii".into(), mode: None, lambda_max: l.as_f64(), pass });
    }
    Ok(LmiReport { sigma: inst.sigma.as_f64(), eta: inst.eta.as_f64(), pass: entries.iter().all(|e| e.pass), entries })
}

/// `min_q λ_min(P^{-1/2} P_q P^{-1/2})`.
pub fn certificate_spread<T: Real>(p: &[Matrix<T>], lambda: &[T]) -> Result<T> {
    let n = p[0].rows();
    let pbar = p.iter().zip(lambda).fold(Matrix::zeros(n, n), |acc, (m, &l)| &acc + &m.scale(l));
    let s = pbar.spd_inv_sqrt()?;
    let mut g = T::infinity();
    for m in p {
        g = g.min((&(&s * m) * &s).lambda_min_sym()?);
    }
    Ok(g)
}

/// Smallest `σ` (to bisection accuracy) with `σ⁻¹ln(1+σ) < target`, found by
/// doubling to a bracket and bisecting.
pub fn sigma_for<T: Real>(target: T) -> T {
    if target >= T::one() {
        return T::one();
    }
    let mut hi = T::one();
    while log_ratio(hi) >= target {
        hi = hi + hi;
    }
    let mut lo = T::zero();
    for _ in 0..200 {
        let mid = T::lit(0.5) * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if log_ratio(mid) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Picks `σ` with `σ⁻¹ln(1+σ) = SIGMA_SAFETY · min_q λ_min(P^{-1/2}P_qP^{-1/2})`
/// and the sufficient bound
/// `η̄(σ) = min_q(−λ_max(A_qᵀP_q + P_qA_q)) · T / (σ · max_q λ_max(P_q))`.
/// The pair `(σ, η̄/2)` is re-verified before returning.
pub fn feasibility_search<T: Real>(a: &[Matrix<T>], p: &[Matrix<T>], lambda: &[T], t_cap: T) -> Result<(T, T)> {
    feasibility_search_with(a, p, lambda, t_cap, T::lit(SIGMA_SAFETY))
}

pub fn feasibility_search_with<T: Real>(a: &[Matrix<T>], p: &[Matrix<T>], lambda: &[T], t_cap: T, safety: T) -> Result<(T, T)> {
    let probe = SwitchedLmiInstance { a: a.to_vec(), p: p.to_vec(), lambda: lambda.to_vec(), sigma: T::one(), eta: T::zero(), t_cap, fast_pair: None };
    probe.validate()?;
    let mut decay = T::infinity();
    let mut p_max = T::zero();
    for (q, (aq, pq)) in a.iter().zip(p).enumerate() {
        let (ok, l) = check_negative_definite(&(&(&aq.transpose() * pq) + &(pq * aq)))?;
        if !ok {
            return Err(Error::Infeasible { mode: q, reason: format!("A_qᵀP_q + P_qA_q is not negative definite (λ_max = {l})") });
        }
        decay = decay.min(-l);
        p_max = p_max.max(pq.lambda_max_sym()?);
    }
    let spread = certificate_spread(p, lambda)?;
    let sigma = sigma_for(safety * spread);
    let eta_bar = decay * t_cap / (sigma * p_max);
    let report = check_switched_lmis(&SwitchedLmiInstance { sigma, eta: T::lit(0.5) * eta_bar, ..probe })?;
    if let Some(e) = report.first_failure() {
        return Err(Error::Infeasible {
            mode: e.mode.unwrap_or(a.len()),
            reason: format!("inequality ({}) fails at the returned pair (λ_max = {})", e.inequality, e.lambda_max),
        });
    }
    Ok((sigma, eta_bar))
}
