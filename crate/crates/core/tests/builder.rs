use merton_ce::builder::{build, BuildOptions, CeBuilder};
use merton_ce::conic::{ClarabelBackend, SocTowerBackend, SolverSettings};
use merton_ce::linalg::Matrix;
use merton_ce::problem::{
    synthetic::factor_market, Covariance, Curve, IncomeModel, InsuranceModel, MarketModel, MortalityModel, ProblemSpec,
    TimeVarying, UtilityParams,
};
use merton_ce::{Analytic, Plan};

fn settings() -> SolverSettings<f64> {
    SolverSettings::with_tolerance(1e-9)
}

fn solve(spec: &ProblemSpec<f64>, k: usize) -> Plan {
    build(spec, &BuildOptions::new(k)).unwrap().solve(&settings(), &ClarabelBackend).unwrap()
}

fn riskless(rate: f64, horizon: f64) -> ProblemSpec<f64> {
    let mut market = MarketModel::new(vec![rate], Covariance::Dense(Matrix::diagonal(&[0.0])));
    market.risk_free_index = Some(0);
    ProblemSpec::new(market, UtilityParams::new(0.5, 1.0), horizon, 1.0)
}

fn first_half_share(c: &[f64]) -> f64 {
    let half: f64 = c[..c.len() / 2].iter().sum();
    half / c.iter().sum::<f64>()
}

#[test]
fn mix_is_constant_along_the_plan() {
    let spec = ProblemSpec::reference();
    let plan = solve(&spec, 200);
    let theta = Analytic::solve(&spec).unwrap().theta_ce;
    // x_K is never invested, so only the K decision periods count.
    let worst = plan.weights[..200]
        .iter()
        .flat_map(|w| w.iter().zip(&theta).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    assert!(worst <= 1e-3, "{worst}");
}

#[test]
fn return_collapse_front_loads_consumption() {
    let base = riskless(0.05, 10.0);
    let mut collapsed = base.clone();
    collapsed.extensions.time_varying = Some(TimeVarying {
        times: vec![0.0, 5.0, 5.0, 10.0],
        mu: vec![vec![0.05], vec![0.05], vec![0.0], vec![0.0]],
        cov_scale: None,
    });
    let (a, b) = (solve(&base, 40), solve(&collapsed, 40));
    assert!(first_half_share(&b.consumption) > first_half_share(&a.consumption) + 0.01);
}

#[test]
fn halving_survival_shifts_toward_bequest() {
    let spec = ProblemSpec::reference();
    let mortality = MortalityModel::uniform_density(10.0, 0.05);
    let mut halved = mortality.clone();
    halved.survival.iter_mut().for_each(|s| *s *= 0.5);
    let run = |m: &MortalityModel<f64>| {
        let mut s = spec.clone();
        s.extensions.mortality = Some(m.clone());
        solve(&s, 50)
    };
    let (full, half) = (run(&mortality), run(&halved));
    assert!(half.consumption[0] < full.consumption[0]);
    assert!(half.wealth[25] > full.wealth[25]);
}

#[test]
fn point_mass_death_at_the_horizon_approaches_the_base_problem() {
    let spec = ProblemSpec::reference();
    let gap = |k: usize| {
        let h = 10.0 / k as f64;
        let t = 10.0 - h;
        let m = MortalityModel {
            times: vec![0.0, t, t, 10.0],
            density: vec![0.0, 0.0, 1.0 / h, 1.0 / h],
            survival: vec![1.0, 1.0, 1.0, 0.0],
        };
        assert!(m.consistency_error() < 1e-12);
        let mut s = spec.clone();
        s.extensions.mortality = Some(m);
        (solve(&s, k).objective - solve(&spec, k).objective).abs()
    };
    // The last period both consumes and bequeaths w_{K−1}; its consumption
    // utility is h^{1−γ} w^γ/γ, so the gap closes like √h at γ = 1/2.
    let (g1, g2) = (gap(25), gap(100));
    assert!((g2 / g1 - 0.5).abs() < 0.1, "{g1} {g2}");
}

fn with_insurance(payout: f64) -> Plan {
    let mut spec = ProblemSpec::reference();
    spec.extensions.mortality = Some(MortalityModel::uniform_density(10.0, 0.05));
    spec.extensions.insurance =
        Some(InsuranceModel::new(Curve::constant(payout)).with_premium_bounds(Some(0.0), None));
    solve(&spec, 40)
}

#[test]
fn worthless_insurance_is_not_bought() {
    let l = with_insurance(0.0).premiums.unwrap();
    assert!(l.iter().all(|&x| x.abs() < 1e-6), "{l:?}");
}

#[test]
fn generous_insurance_is_bought() {
    // Fair payout is p/s ≤ 0.1 here; a premium pays off once pβλ exceeds the
    // marginal value of wealth a_t, which is about 5 early on.
    let l = with_insurance(1000.0).premiums.unwrap();
    assert!(l[0] > 1e-3, "{}", l[0]);
}

#[test]
fn income_keeps_total_wealth_positive_from_near_zero_savings() {
    let mut market = MarketModel::new(vec![0.08, 0.02], Covariance::Dense(Matrix::diagonal(&[0.04, 0.0])));
    market.risk_free_index = Some(1);
    let mut spec = ProblemSpec::new(market, UtilityParams::new(0.5, 1.0), 10.0, 1e-3);
    spec.extensions.income = Some(IncomeModel::constant(1.0));
    assert!(merton_ce::validate(&spec).is_empty());
    let program = build(&spec, &BuildOptions::new(40)).unwrap();
    let plan = program.solve(&settings(), &ClarabelBackend).unwrap();
    let v = merton_ce::problem::human_capital(&IncomeModel::constant(1.0), 0.02, &plan.times, 16);
    assert!(plan.wealth.iter().zip(&v).all(|(w, v)| w + v > 0.0));
    assert!(plan.wealth.iter().take(40).any(|&w| w < 0.1));
}

#[test]
fn epstein_zin_exponent_changes_smoothing() {
    let spec = ProblemSpec::reference();
    let dispersion = |rho: f64| {
        let mut s = spec.clone();
        s.utility.rho = Some(rho);
        let c = solve(&s, 50).consumption;
        let mean = c.iter().sum::<f64>() / c.len() as f64;
        (c.iter().map(|x| (x / mean - 1.0).powi(2)).sum::<f64>() / c.len() as f64).sqrt()
    };
    // Lower ρ means lower intertemporal substitution, hence a flatter path.
    assert!(dispersion(-1.0) < dispersion(0.3));
    assert!(dispersion(0.3) < dispersion(0.7));
}

#[test]
fn factor_and_dense_covariances_agree() {
    let factor = factor_market::<f64>(20, 3, 4);
    let mut dense = factor.clone();
    dense.cov = Covariance::Dense(factor.cov.to_dense());
    let plan = |m: MarketModel<f64>| solve(&ProblemSpec::new(m, UtilityParams::new(-1.0, 1.0), 5.0, 1.0), 20).objective;
    let (a, b) = (plan(factor), plan(dense));
    assert!((a / b - 1.0).abs() <= 1e-6, "{a} {b}");
}

#[test]
fn soc_tower_backend_agrees_with_power_cones() {
    let mut mortal = ProblemSpec::reference();
    mortal.extensions.mortality = Some(MortalityModel::uniform_density(10.0, 0.05));
    let mut averse = ProblemSpec::reference();
    averse.utility.gamma = -2.0;
    for spec in [ProblemSpec::reference(), mortal, averse] {
        let program = build(&spec, &BuildOptions::new(20)).unwrap();
        let a = program.solve(&settings(), &ClarabelBackend).unwrap().objective;
        let b = program.solve(&settings(), &SocTowerBackend::default()).unwrap().objective;
        assert!((a / b - 1.0).abs() <= 1e-5, "{a} {b}");
    }
}

#[test]
fn builder_steps_compose_like_the_spec_path() {
    let mut spec = ProblemSpec::reference();
    let m = MortalityModel::uniform_density(10.0, 0.05);
    spec.extensions.mortality = Some(m.clone());
    let opts = BuildOptions::new(30);
    let mut manual = CeBuilder::base(&spec, &opts).unwrap();
    manual.apply_mortality(&m).unwrap();
    let manual = manual.build();
    let direct = build(&spec, &opts).unwrap();
    assert_eq!(manual.program.to_text(), direct.program.to_text());
}
