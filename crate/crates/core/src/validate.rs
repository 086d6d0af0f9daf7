//! Whole-spec validation. Violations are returned as data; nothing here panics
//! on malformed input.

use serde::{Deserialize, Serialize};

use crate::conic::{solve, AffineExpr, ClarabelBackend, Cone, ProgramBuilder, SolverSettings};
use crate::linalg::cholesky;
use crate::problem::{ConstraintSet, Covariance, Curve, MarketModel, ProblemSpec, UtilityParams};
use crate::scalar::Scalar;

/// Tolerance for the survival/density consistency check.
pub const SURVIVAL_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    NonFinite,
    DimensionMismatch,
    GammaZero,
    GammaNotBelowOne,
    RhoZero,
    RhoNotBelowOne,
    BetaNotPositive,
    DiscountNotPositive,
    CovarianceNotSymmetric,
    CovarianceNotPsd,
    CovarianceSingular,
    IdiosyncraticVariance,
    RiskFreeIndex,
    RiskFreeVolatility,
    ThetaSetInfeasible,
    HorizonNotPositive,
    WealthNotPositive,
    CurveMalformed,
    MortalityInvalid,
    SurvivalInconsistent,
    IncomeNegative,
    IncomeRequiresRiskFree,
    IncomeRequiresBudgetSet,
    InsuranceRequiresMortality,
    PayoutRatioNegative,
    PremiumBounds,
    SpendingLimitInvalid,
    MinCashInvalid,
    UnsupportedVersion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
}

#[derive(Default)]
struct Report(Vec<Violation>);

impl Report {
    fn push(&mut self, code: ViolationCode, message: impl Into<String>) {
        self.0.push(Violation {
            code,
            message: message.into(),
        });
    }
}

/// Every invariant violation of `spec`; empty iff it is well formed.
pub fn validate<S: Scalar>(spec: &ProblemSpec<S>) -> Vec<Violation> {
    let mut r = Report::default();
    if spec.version != crate::problem::SPEC_VERSION {
        r.push(ViolationCode::UnsupportedVersion, format!("unsupported spec version {}", spec.version));
    }
    if !(spec.horizon.is_finite() && spec.horizon > S::zero()) {
        r.push(ViolationCode::HorizonNotPositive, "horizon must be positive");
    }
    if !(spec.w_init.is_finite() && spec.w_init > S::zero()) {
        r.push(ViolationCode::WealthNotPositive, "w_init must be positive");
    }
    check_utility(&spec.utility, &mut r);
    let market_ok = check_market(&spec.market, &mut r);
    let n = spec.num_assets();
    let dims = spec.theta_set.dimension_errors(n);
    for d in &dims {
        r.push(ViolationCode::DimensionMismatch, format!("theta_set: {d}"));
    }
    if dims.is_empty() && market_ok && !theta_feasible(&spec.theta()) {
        r.push(ViolationCode::ThetaSetInfeasible, "theta_set is empty");
    }
    check_extensions(spec, &mut r);
    r.0
}

fn check_utility<S: Scalar>(u: &UtilityParams<S>, r: &mut Report) {
    if !u.gamma.is_finite() || !u.beta.is_finite() {
        r.push(ViolationCode::NonFinite, "utility parameters must be finite");
        return;
    }
    if u.gamma == S::zero() {
        r.push(ViolationCode::GammaZero, "gamma must be nonzero");
    }
    if u.gamma >= S::one() {
        r.push(ViolationCode::GammaNotBelowOne, "gamma must be below 1");
    }
    if let Some(rho) = u.rho {
        if rho == S::zero() {
            r.push(ViolationCode::RhoZero, "rho must be nonzero");
        }
        if !(rho < S::one()) {
            r.push(ViolationCode::RhoNotBelowOne, "rho must be below 1");
        }
    }
    if !(u.beta > S::zero()) {
        r.push(ViolationCode::BetaNotPositive, "beta must be positive");
    }
    if let Some(d) = &u.discount {
        if !d.is_well_formed() {
            r.push(ViolationCode::CurveMalformed, "discount curve is malformed");
        } else if !(d.min_value() > S::zero()) {
            r.push(ViolationCode::DiscountNotPositive, "discount must be positive");
        }
    }
}

/// Returns true when the covariance is usable for later checks.
fn check_market<S: Scalar>(m: &MarketModel<S>, r: &mut Report) -> bool {
    let n = m.num_assets();
    if n == 0 {
        r.push(ViolationCode::DimensionMismatch, "market has no assets");
        return false;
    }
    if m.mu.iter().any(|v| !v.is_finite()) {
        r.push(ViolationCode::NonFinite, "mu must be finite");
    }
    if m.cov.num_assets() != n {
        r.push(
            ViolationCode::DimensionMismatch,
            format!("covariance has {} assets, mu has {n}", m.cov.num_assets()),
        );
        return false;
    }
    if let Some(i) = m.risk_free_index {
        if i >= n {
            r.push(ViolationCode::RiskFreeIndex, format!("risk_free_index {i} out of range"));
            return false;
        }
    }
    let rf = m.risk_free_index;
    let tol = S::lit(1e-12);
    match &m.cov {
        Covariance::Dense(s) => {
            if !s.is_square() {
                r.push(ViolationCode::DimensionMismatch, "covariance must be square");
                return false;
            }
            if !s.is_finite() {
                r.push(ViolationCode::NonFinite, "covariance must be finite");
                return false;
            }
            if !s.is_symmetric(tol) {
                r.push(ViolationCode::CovarianceNotSymmetric, "covariance not symmetric");
                return false;
            }
            match cholesky(s) {
                Err(_) => {
                    r.push(ViolationCode::CovarianceNotPsd, "covariance not PSD");
                    return false;
                }
                Ok(l) => {
                    for i in 0..n {
                        if Some(i) != rf && l[(i, i)] <= S::zero() {
                            r.push(
                                ViolationCode::CovarianceSingular,
                                format!("covariance singular at asset {i} (only the risk-free asset may have zero variance)"),
                            );
                        }
                    }
                }
            }
            if let Some(i) = rf {
                if s.row(i).iter().any(|&v| v != S::zero()) {
                    r.push(ViolationCode::RiskFreeVolatility, "risk-free asset must have a zero covariance row");
                }
            }
        }
        Covariance::Factor {
            loadings,
            factor_cov,
            idio_var,
        } => {
            if loadings.cols() != factor_cov.rows() || !factor_cov.is_square() || idio_var.len() != n {
                r.push(ViolationCode::DimensionMismatch, "factor model shapes are inconsistent");
                return false;
            }
            if !loadings.is_finite() || !factor_cov.is_finite() || idio_var.iter().any(|v| !v.is_finite()) {
                r.push(ViolationCode::NonFinite, "factor model must be finite");
                return false;
            }
            if !factor_cov.is_symmetric(tol) {
                r.push(ViolationCode::CovarianceNotSymmetric, "factor covariance not symmetric");
                return false;
            }
            if cholesky(factor_cov).is_err() {
                r.push(ViolationCode::CovarianceNotPsd, "factor covariance not PSD");
                return false;
            }
            for (i, &d) in idio_var.iter().enumerate() {
                if d < S::zero() {
                    r.push(ViolationCode::IdiosyncraticVariance, format!("idio_var[{i}] is negative"));
                } else if d == S::zero() && Some(i) != rf {
                    r.push(
                        ViolationCode::IdiosyncraticVariance,
                        format!("idio_var[{i}] must be positive for a risky asset"),
                    );
                }
            }
            if let Some(i) = rf {
                if loadings.row(i).iter().any(|&v| v != S::zero()) || idio_var[i] != S::zero() {
                    r.push(ViolationCode::RiskFreeVolatility, "risk-free asset must have zero loadings and variance");
                }
            }
        }
    }
    true
}

/// Feasibility of Θ by a zero-objective cone solve.
pub fn theta_feasible<S: Scalar>(theta: &ConstraintSet<S>) -> bool {
    let n = theta
        .eq
        .first()
        .map(|e| e.a.len())
        .or_else(|| theta.ineq.first().map(|e| e.g.len()))
        .unwrap_or(0);
    if theta.is_simple_budget() && n > 0 {
        return true;
    }
    let mut b = ProgramBuilder::new();
    let x = b.add_vars(n);
    let lin = |coef: &[S], c: S| {
        coef.iter()
            .enumerate()
            .filter(|(_, v)| **v != S::zero())
            .fold(AffineExpr::constant(c), |e, (i, &v)| e.plus(x.start + i, v))
    };
    for e in &theta.eq {
        b.add_equality(lin(&e.a, -e.b));
    }
    for e in &theta.ineq {
        let neg: Vec<S> = e.g.iter().map(|&v| -v).collect();
        b.add_nonnegative(lin(&neg, e.h));
    }
    for c in &theta.socs {
        let mut rows = vec![lin(&c.q, c.r)];
        for i in 0..c.p.rows() {
            rows.push(lin(c.p.row(i), S::zero()));
        }
        b.add_cone(Cone::SecondOrder(rows.len()), &rows);
    }
    match solve(&b.finish(), &SolverSettings::default(), &ClarabelBackend) {
        Ok(res) => res.status.has_primal(),
        Err(_) => false,
    }
}

fn check_curve<S: Scalar>(c: &Curve<S>, name: &str, r: &mut Report) -> bool {
    if c.is_well_formed() {
        true
    } else {
        r.push(ViolationCode::CurveMalformed, format!("{name}: times must be nondecreasing with one value each"));
        false
    }
}

fn check_extensions<S: Scalar>(spec: &ProblemSpec<S>, r: &mut Report) {
    let ext = &spec.extensions;
    let n = spec.num_assets();
    if let Some(tv) = &ext.time_varying {
        if tv.times.is_empty() || tv.times.len() != tv.mu.len() || tv.mu.iter().any(|m| m.len() != n) {
            r.push(ViolationCode::DimensionMismatch, "time_varying: one mean vector of length n per time");
        }
        if let Some(c) = &tv.cov_scale {
            if check_curve(c, "time_varying.cov_scale", r) && c.min_value() < S::zero() {
                r.push(ViolationCode::CurveMalformed, "time_varying.cov_scale must be nonnegative");
            }
        }
    }
    if let Some(m) = &ext.mortality {
        let ok = !m.times.is_empty()
            && m.times.len() == m.density.len()
            && m.times.len() == m.survival.len()
            && m.times.windows(2).all(|w| w[0] <= w[1]);
        if !ok {
            r.push(ViolationCode::MortalityInvalid, "mortality: times, density and survival must align");
        } else {
            if m.density.iter().any(|&p| !(p >= S::zero())) {
                r.push(ViolationCode::MortalityInvalid, "mortality density must be nonnegative");
            }
            if m.survival.iter().any(|&s| !(s >= S::zero() && s <= S::one())) {
                r.push(ViolationCode::MortalityInvalid, "survival must lie in [0, 1]");
            }
            if m.survival[0] != S::one() {
                r.push(ViolationCode::MortalityInvalid, "survival must start at 1");
            }
            if m.survival.windows(2).any(|w| w[1] > w[0]) {
                r.push(ViolationCode::MortalityInvalid, "survival must be nonincreasing");
            }
            if m.consistency_error() > S::lit(SURVIVAL_TOLERANCE) {
                r.push(
                    ViolationCode::SurvivalInconsistent,
                    format!("survival differs from s_T + ∫p by {}", m.consistency_error()),
                );
            }
        }
    }
    if let Some(ins) = &ext.insurance {
        if ext.mortality.is_none() {
            r.push(ViolationCode::InsuranceRequiresMortality, "insurance requires a mortality block");
        }
        if check_curve(&ins.payout_ratio, "insurance.payout_ratio", r) && ins.payout_ratio.min_value() < S::zero() {
            r.push(ViolationCode::PayoutRatioNegative, "payout ratio must be nonnegative");
        }
        if let (Some(lo), Some(hi)) = (ins.premium_min, ins.premium_max) {
            if lo > hi {
                r.push(ViolationCode::PremiumBounds, "premium_min exceeds premium_max");
            }
        }
    }
    if let Some(inc) = &ext.income {
        if check_curve(&inc.rate, "income.rate", r) && inc.rate.min_value() < S::zero() {
            r.push(ViolationCode::IncomeNegative, "income must be nonnegative");
        }
        if spec.market.risk_free_index.is_none() {
            r.push(ViolationCode::IncomeRequiresRiskFree, "income requires a risk-free asset");
        }
        if !spec.theta().is_simple_budget() {
            r.push(ViolationCode::IncomeRequiresBudgetSet, "income requires theta_set = {1ᵀθ = 1}");
        }
    }
    if let Some(c) = &ext.consumption_floor {
        check_curve(c, "consumption_floor", r);
    }
    if let Some(sl) = &ext.spending_limit {
        if !(sl.eta > S::zero()) {
            r.push(ViolationCode::SpendingLimitInvalid, "spending limit eta must be positive");
        }
        if !sl.dividend.is_empty() && sl.dividend.len() != n {
            r.push(ViolationCode::SpendingLimitInvalid, "dividend vector must have one entry per asset");
        }
    }
    if let Some(mc) = &ext.min_cash {
        if mc.asset >= n {
            r.push(ViolationCode::MinCashInvalid, format!("min_cash asset {} out of range", mc.asset));
        }
        if let Some(f) = &mc.floor {
            check_curve(f, "min_cash.floor", r);
        }
        if mc.consumption_multiple.is_some_and(|k| k < S::zero()) {
            r.push(ViolationCode::MinCashInvalid, "consumption multiple must be nonnegative");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::problem::{IncomeModel, InsuranceModel, MortalityModel};

    fn codes(spec: &ProblemSpec<f64>) -> Vec<ViolationCode> {
        validate(spec).into_iter().map(|v| v.code).collect()
    }

    #[test]
    fn reference_spec_is_valid() {
        assert!(validate(&ProblemSpec::<f64>::reference()).is_empty());
    }

    #[test]
    fn gamma_zero_is_reported() {
        let mut s = ProblemSpec::<f64>::reference();
        s.utility.gamma = 0.0;
        let v = validate(&s);
        assert!(v.iter().any(|v| v.message == "gamma must be nonzero"));
    }

    #[test]
    fn negative_eigenvalue_is_not_psd() {
        let mut s = ProblemSpec::<f64>::reference();
        // eigenvalues 0.04 and −1e−3 after rotation by 45°
        let (a, b) = (0.5 * (0.04 - 1e-3), 0.5 * (0.04 + 1e-3));
        s.market.cov = Covariance::Dense(Matrix::from_rows(&[vec![a, b], vec![b, a]]).unwrap());
        assert!(validate(&s).iter().any(|v| v.message == "covariance not PSD"));
    }

    #[test]
    fn malformed_inputs_never_panic() {
        let mut s = ProblemSpec::<f64>::reference();
        s.market.mu = vec![0.1];
        s.horizon = -1.0;
        s.w_init = f64::NAN;
        s.utility.beta = 0.0;
        s.utility.rho = Some(2.0);
        s.theta_set.eq[0].a = vec![1.0; 5];
        let c = codes(&s);
        for want in [
            ViolationCode::DimensionMismatch,
            ViolationCode::HorizonNotPositive,
            ViolationCode::WealthNotPositive,
            ViolationCode::BetaNotPositive,
            ViolationCode::RhoNotBelowOne,
        ] {
            assert!(c.contains(&want), "missing {want:?} in {c:?}");
        }
    }

    #[test]
    fn empty_theta_is_detected() {
        let mut s = ProblemSpec::<f64>::reference();
        s.theta_set = ConstraintSet::long_only(2).with_ineq(vec![1.0, 1.0], 0.5);
        assert_eq!(codes(&s), vec![ViolationCode::ThetaSetInfeasible]);
    }

    #[test]
    fn extension_compatibility() {
        let mut s = ProblemSpec::<f64>::reference();
        s.extensions.income = Some(IncomeModel::constant(0.1));
        s.extensions.insurance = Some(InsuranceModel::fair(&MortalityModel::uniform_density(10.0, 0.05)));
        let c = codes(&s);
        assert!(c.contains(&ViolationCode::IncomeRequiresRiskFree));
        assert!(c.contains(&ViolationCode::InsuranceRequiresMortality));
    }

    #[test]
    fn inconsistent_survival_is_rejected() {
        let mut s = ProblemSpec::<f64>::reference();
        s.extensions.mortality = Some(MortalityModel {
            times: vec![0.0, 10.0],
            density: vec![0.05, 0.05],
            survival: vec![1.0, 0.6],
        });
        assert_eq!(codes(&s), vec![ViolationCode::SurvivalInconsistent]);
    }

    #[test]
    fn risk_free_asset_is_allowed_zero_variance() {
        let mut s = ProblemSpec::<f64>::reference();
        s.market.cov = Covariance::Dense(Matrix::diagonal(&[0.04, 0.0]));
        assert_eq!(codes(&s), vec![ViolationCode::CovarianceSingular]);
        s.market.risk_free_index = Some(1);
        assert!(codes(&s).is_empty());
    }
}
