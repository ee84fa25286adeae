//! Trajectory farms and Monte Carlo estimators: squared time integrals,
//! field covariances against the Ornstein-Uhlenbeck oracle, mean current,
//! stationarity and scaling summaries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{exact_bad_box_probability, Configuration, ModelParams, BAD_BOX_MAX_LEN};
use crate::error::{Error, Result};
use crate::kmc::{Direction, Engine, Event, Observer};
use crate::local::{h_function, jump_activity, ExactRates, LocalFunction};
use crate::observables::{FieldRecorder, Term, TermAccumulator, TestFunction, TestWeights};
use crate::quad::integrate;
use crate::rational::{to_f64, Q};
use crate::stats::{fit_power_law, mean_se, EstimateParams, EstimatorReport, ScalingFit};

/// Smallest trajectory count accepted by the estimators.
pub const MIN_TRAJECTORIES: usize = 16;

/// Runs `f(0), …, f(count−1)` on a rayon pool of `threads` workers (the
/// global pool when `None`) and returns the results in index order.
pub fn farm<T, F>(count: usize, threads: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    let job = || (0..count as u64).into_par_iter().map(&f).collect::<Vec<T>>();
    match threads {
        None => Ok(job()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Farm options shared by the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FarmOptions {
    pub n_traj: usize,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl FarmOptions {
    pub fn new(n_traj: usize, seed: u64) -> Self {
        Self { n_traj, seed, threads: None }
    }

    fn validate(&self) -> Result<()> {
        if self.n_traj < MIN_TRAJECTORIES {
            return Err(Error::InvalidInput(format!("n_traj = {} is below {MIN_TRAJECTORIES}", self.n_traj)));
        }
        Ok(())
    }
}

/// Term values of one trajectory at each requested time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRun {
    /// `values[k][j]`: term `k` at `times[j]`.
    pub values: Vec<Vec<f64>>,
    pub blocked: bool,
    pub events: u64,
}

/// Simulates trajectory `index` and integrates every term up to each of `times`.
pub fn run_terms(
    params: &ModelParams,
    terms: &[(Term, TestWeights)],
    times: &[f64],
    seed: u64,
    index: u64,
) -> Result<TermRun> {
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let mut accs =
        terms.iter().map(|(t, w)| TermAccumulator::new(t.clone(), w.clone(), params)).collect::<Result<Vec<_>>>()?;
    let mut engine = Engine::from_equilibrium(params, seed, index)?;
    let blocked = engine.is_blocked();
    let summary = engine.run_observed(t_max, times, &mut accs);
    let values = accs
        .iter()
        .map(|a| {
            let mut v: Vec<f64> = a.samples().iter().map(|s| s.1).collect();
            v.resize(times.len(), a.value());
            v
        })
        .collect();
    Ok(TermRun { values, blocked: blocked || summary.blocked_at.is_some(), events: summary.events })
}

/// `𝔼[(term)²]` at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquaredExpectation {
    pub term: String,
    pub report: EstimatorReport,
    /// Trajectories dropped because they were blocked.
    pub excluded: usize,
    /// Upper bound on the blocked probability from the bad-box law.
    pub blocked_bound: f64,
}

/// Estimates `𝔼_ρⁿ[(∫_0^t Σ V ψ ds)²]` for each term and each time, as the mean
/// of squares over independent trajectories. Blocked trajectories are excluded
/// and counted.
pub fn squared_expectation(
    params: &ModelParams,
    terms: &[(Term, TestWeights)],
    times: &[f64],
    opts: FarmOptions,
) -> Result<Vec<Vec<SquaredExpectation>>> {
    Ok(squared_expectation_runs(params, terms, times, opts)?.0)
}

/// As [`squared_expectation`], also returning the per-trajectory runs.
pub fn squared_expectation_runs(
    params: &ModelParams,
    terms: &[(Term, TestWeights)],
    times: &[f64],
    opts: FarmOptions,
) -> Result<(Vec<Vec<SquaredExpectation>>, Vec<TermRun>)> {
    opts.validate()?;
    let runs = farm(opts.n_traj, opts.threads, |i| run_terms(params, terms, times, opts.seed, i))?
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let kept: Vec<&TermRun> = runs.iter().filter(|r| !r.blocked).collect();
    let excluded = runs.len() - kept.len();
    let bound = blocked_probability_bound(params)?;
    let mut out = Vec::with_capacity(terms.len());
    for (k, (term, _)) in terms.iter().enumerate() {
        let mut row = Vec::with_capacity(times.len());
        for (j, &t) in times.iter().enumerate() {
            let squares: Vec<f64> = kept.iter().map(|r| r.values[k][j].powi(2)).collect();
            let ep = estimate_params(params, term, t);
            row.push(SquaredExpectation {
                term: term.to_string(),
                report: EstimatorReport::from_samples(&squares, ep),
                excluded,
                blocked_bound: bound,
            });
        }
        out.push(row);
    }
    Ok((out, runs))
}

fn estimate_params(params: &ModelParams, term: &Term, t: f64) -> EstimateParams {
    let (ell, eps) = match term {
        Term::Bgp2Inner { ell } => (Some(*ell), None),
        Term::Rest { eps } | Term::EnergyB { eps, .. } => {
            (Some((eps * params.n as f64 + 1e-9).floor() as usize), Some(*eps))
        }
        _ => (None, None),
    };
    EstimateParams {
        n: params.n,
        m: params.m,
        rho: params.rho_f64(),
        b: params.b,
        gamma: params.gamma,
        ell,
        eps,
        t,
    }
}

/// `ν_ρ(blocked) ≤ ν_ρ(Λ bad)` for the longest box the exact law handles.
pub fn blocked_probability_bound(params: &ModelParams) -> Result<f64> {
    let ell = (params.ring - 1).min(BAD_BOX_MAX_LEN);
    Ok(to_f64(&exact_bad_box_probability(&params.rho_exact(), ell, params.m)?))
}

/// `t (ℓ/n + t n/ℓ²) K`.
pub fn bgp2_rhs_bound(t: f64, ell: f64, n: f64, k: f64) -> f64 {
    t * (ell / n + t * n / (ell * ell)) * k
}

/// Minimiser of `ℓ ↦ ℓ/n + t n/ℓ²`: `ℓ* = (2 t n²)^{1/3}`.
pub fn optimal_block_length(t: f64, n: f64) -> f64 {
    (2.0 * t * n * n).cbrt()
}

/// `χ(ρ) ∫∫ H(u) k_{D(ρ)t}(u−v) G(v) du dv`, with `k_s` the centred Gaussian of variance `s`.
pub fn ou_covariance_oracle(h: &TestFunction, g: &TestFunction, t: f64, rho: f64, m: usize) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidInput(format!("t = {t} must be non-negative")));
    }
    let chi = rho * (1.0 - rho);
    let d = m as f64 * rho.powi(m as i32 - 1);
    let s = d * t;
    let (ha, hb) = (h.center() - h.support_radius(), h.center() + h.support_radius());
    if s == 0.0 {
        return Ok(chi * integrate(|u| h.eval_exact(u) * g.eval_exact(u), ha, hb, 1e-12, 64)?);
    }
    let reach = 12.0 * s.sqrt();
    let (ga, gb) = (g.center() - g.support_radius(), g.center() + g.support_radius());
    let norm = 1.0 / (2.0 * std::f64::consts::PI * s).sqrt();
    let smoothed = |u: f64| -> f64 {
        let (a, b) = ((u - reach).max(ga), (u + reach).min(gb));
        if a >= b {
            return 0.0;
        }
        integrate(|v| (-(u - v) * (u - v) / (2.0 * s)).exp() * g.eval_exact(v), a, b, 1e-12, 16)
            .map(|x| x * norm)
            .unwrap_or(f64::NAN)
    };
    let total = integrate(|u| h.eval_exact(u) * smoothed(u), ha, hb, 1e-10, 32)?;
    if !total.is_finite() {
        return Err(Error::Quadrature("inner convolution did not converge".into()));
    }
    Ok(chi * total)
}

/// `𝔼[𝒴_t(H) 𝒴_0(H)]` at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub t: f64,
    pub report: EstimatorReport,
    pub oracle: f64,
    pub z: f64,
}

/// Field covariance averaged over `translates` copies of `H` spread evenly
/// around the ring, one sample per trajectory.
pub fn field_covariance(
    params: &ModelParams,
    h: &TestFunction,
    times: &[f64],
    translates: usize,
    opts: FarmOptions,
) -> Result<(Vec<CovarianceReport>, usize)> {
    opts.validate()?;
    let k = translates.max(1);
    let period = params.ring as f64 / params.n as f64;
    let functions: Vec<TestFunction> = (0..k).map(|j| h.shifted(j as f64 * period / k as f64)).collect();
    let mut grid = vec![0.0];
    grid.extend(times.iter().copied().filter(|&t| t > 0.0));
    let t_max = grid.iter().copied().fold(0.0, f64::max);
    let runs = farm(opts.n_traj, opts.threads, |i| -> Result<(Vec<f64>, bool)> {
        let mut engine = Engine::from_equilibrium(params, opts.seed, i)?;
        let mut rec = FieldRecorder::new(functions.clone(), params);
        let summary = engine.run_observed(t_max, &grid, &mut rec);
        let y0 = &rec.samples[0].values;
        let per_time = times
            .iter()
            .map(|&t| {
                let idx = grid.iter().position(|&g| g == t).unwrap_or(0);
                let yt = &rec.samples[idx].values;
                yt.iter().zip(y0).map(|(a, b)| a * b).sum::<f64>() / k as f64
            })
            .collect();
        Ok((per_time, summary.blocked_at.is_some()))
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let kept: Vec<&Vec<f64>> = runs.iter().filter(|r| !r.1).map(|r| &r.0).collect();
    let excluded = runs.len() - kept.len();
    let mut out = Vec::new();
    for (j, &t) in times.iter().enumerate() {
        let xs: Vec<f64> = kept.iter().map(|r| r[j]).collect();
        let report = EstimatorReport::from_samples(&xs, estimate_params(params, &Term::Current, t));
        let oracle = ou_covariance_oracle(h, h, t, params.rho_f64(), params.m)?;
        let z = report.z_score(oracle);
        out.push(CovarianceReport { t, report, oracle, z });
    }
    Ok((out, excluded))
}

/// Counts right and left jumps.
#[derive(Debug, Default, Clone, Copy)]
pub struct JumpCounter {
    pub right: u64,
    pub left: u64,
}

impl Observer for JumpCounter {
    fn on_jump(&mut self, _cfg: &Configuration, event: &Event) {
        match event.dir {
            Direction::Right => self.right += 1,
            Direction::Left => self.left += 1,
        }
    }
}

/// Mean current per bond, `(#right − #left)/(n² t L)`, against `E_ρ[j_{0,1}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentReport {
    pub report: EstimatorReport,
    pub exact: f64,
    pub z: f64,
}

pub fn mean_current(params: &ModelParams, t: f64, opts: FarmOptions) -> Result<CurrentReport> {
    opts.validate()?;
    let scale = (params.n as f64).powi(2) * t * params.ring as f64;
    let samples = farm(opts.n_traj, opts.threads, |i| -> Result<f64> {
        let mut engine = Engine::from_equilibrium(params, opts.seed, i)?;
        let mut counter = JumpCounter::default();
        engine.run_observed(t, &[], &mut counter);
        Ok((counter.right as f64 - counter.left as f64) / scale)
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let report = EstimatorReport::from_samples(&samples, estimate_params(params, &Term::Current, t));
    let rates = ExactRates::from_params(params);
    let exact = to_f64(&crate::local::current(&rates, crate::local::Part::Full)?.expectation(&params.rho_exact()));
    let z = report.z_score(exact);
    Ok(CurrentReport { report, exact, z })
}

/// One line of the stationarity smoke test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmokeLine {
    pub observable: String,
    pub report: EstimatorReport,
    pub exact: f64,
    pub z: f64,
}

/// Compares spatial averages of `η(0)`, `η(0)η(1)`, `c_{0,1}` and `h` at `t_max`
/// (started from `ν_ρ`) with their exact means.
pub fn stationarity_smoke_test(params: &ModelParams, t_max: f64, opts: FarmOptions) -> Result<Vec<SmokeLine>> {
    opts.validate()?;
    let m = params.m;
    let constraint = LocalFunction::from_fn(-(m as i64 - 1), 2 * m, |p| {
        Q::from_integer(crate::constraint::constraint_with(m, 0, |j| p.get(j)).into())
    })?;
    let observables: Vec<(String, LocalFunction)> = vec![
        ("eta(0)".into(), LocalFunction::occupation(0)),
        ("eta(0)eta(1)".into(), LocalFunction::product(&[0, 1])?),
        ("c(0,1)".into(), constraint),
        ("h".into(), h_function(m)?),
    ];
    let tables: Vec<(i64, usize, Vec<f64>)> =
        observables.iter().map(|(_, f)| (f.offset(), f.width(), f.table().iter().map(to_f64).collect())).collect();
    let samples = farm(opts.n_traj, opts.threads, |i| -> Result<Vec<f64>> {
        let mut engine = Engine::from_equilibrium(params, opts.seed, i)?;
        engine.run_observed(t_max, &[], &mut ());
        let cfg = engine.configuration();
        Ok(tables
            .iter()
            .map(|(off, w, vals)| {
                let s: f64 = (0..cfg.len() as i64)
                    .map(|x| {
                        let bits = (0..*w).fold(0usize, |acc, k| acc | (cfg.get(x + off + k as i64) as usize) << k);
                        vals[bits]
                    })
                    .sum();
                s / cfg.len() as f64
            })
            .collect())
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let rho = params.rho_exact();
    Ok(observables
        .iter()
        .enumerate()
        .map(|(k, (name, f))| {
            let xs: Vec<f64> = samples.iter().map(|s| s[k]).collect();
            let report = EstimatorReport::from_samples(&xs, estimate_params(params, &Term::Current, t_max));
            let exact = to_f64(&f.expectation(&rho));
            let z = report.z_score(exact);
            SmokeLine { observable: name.clone(), report, exact, z }
        })
        .collect())
}

/// `𝔼[(B^ε − B^δ)²] / (ε (t−s) ‖∇H‖₂²)` with `B^ε = ∫_s^t Σ ∇_n H (→η^{εn})² dr`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyStatistic {
    pub eps: f64,
    pub delta: f64,
    pub value: f64,
    pub std_error: f64,
}

pub fn energy_statistic(
    params: &ModelParams,
    h: &TestFunction,
    eps: f64,
    delta: f64,
    window: (f64, f64),
    opts: FarmOptions,
) -> Result<EnergyStatistic> {
    opts.validate()?;
    let (s, t) = window;
    if !(t > s && s >= 0.0) {
        return Err(Error::InvalidInput(format!("bad time window [{s}, {t}]")));
    }
    let w = TestWeights::gradient_of(h, params.n, params.ring);
    let terms = vec![(Term::EnergyB { eps, s, t }, w.clone()), (Term::EnergyB { eps: delta, s, t }, w)];
    let runs = farm(opts.n_traj, opts.threads, |i| run_terms(params, &terms, &[t], opts.seed, i))?
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let norm = eps * (t - s) * h.grad_norm2_sq()?;
    let xs: Vec<f64> = runs.iter().filter(|r| !r.blocked).map(|r| (r.values[0][0] - r.values[1][0]).powi(2) / norm).collect();
    let (value, std_error) = mean_se(&xs);
    Ok(EnergyStatistic { eps, delta, value, std_error })
}

/// Estimate with standard error at one `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n: u32,
    pub value: f64,
    pub std_error: f64,
}

/// True when `v_{k+1} ≤ v_k + k_sigma √(se_k² + se_{k+1}²)` along the grid.
pub fn nonincreasing_within(points: &[GridPoint], k_sigma: f64) -> bool {
    points.windows(2).all(|w| w[1].value <= w[0].value + k_sigma * w[0].std_error.hypot(w[1].std_error))
}

/// Smallest global constant `C` with `value ≤ C · rhs` on every point.
pub fn fitted_constant(values: &[f64], rhs: &[f64]) -> f64 {
    values.iter().zip(rhs).map(|(v, r)| v / r).fold(0.0, f64::max)
}

/// Log-log fit of the grid values against `n`.
pub fn scaling_fit(points: &[GridPoint]) -> Option<ScalingFit> {
    fit_power_law(&points.iter().map(|p| (p.n as f64, p.value)).collect::<Vec<_>>())
}

/// Nonlinear-term magnitudes and field covariances for each asymmetry exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverEntry {
    pub gamma: f64,
    pub rest: Vec<GridPoint>,
    pub fit: Option<ScalingFit>,
    pub predicted_exponent: f64,
    pub covariance: Vec<CovarianceReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverConfig {
    pub m: usize,
    #[serde(with = "crate::config::ratio_serde")]
    pub rho: num_rational::Ratio<i64>,
    pub b: f64,
    pub gammas: Vec<f64>,
    pub ns: Vec<u32>,
    /// Ring size as a multiple of `n`.
    pub ring_factor: usize,
    pub eps: f64,
    pub t: f64,
    pub covariance_n: u32,
    pub covariance_times: Vec<f64>,
    pub translates: usize,
    pub opts: FarmOptions,
}

/// Per `γ`: `𝔼[(rest term)²]` along `ns` with a log-log fit against the
/// predicted `n^{1−2γ}`, and the field covariance against the OU oracle.
pub fn crossover_report(cfg: &CrossoverConfig) -> Result<Vec<CrossoverEntry>> {
    let h = TestFunction::gaussian(0.0, 1.0);
    let mut out = Vec::new();
    for &gamma in &cfg.gammas {
        let mut rest = Vec::new();
        for &n in &cfg.ns {
            let params = ModelParams::new(cfg.m, cfg.rho, cfg.b, gamma, n, cfg.ring_factor * n as usize)?;
            let w = TestWeights::gradient_of(&h, n, params.ring);
            let r = squared_expectation(&params, &[(Term::Rest { eps: cfg.eps }, w)], &[cfg.t], cfg.opts)?;
            let rep = &r[0][0].report;
            rest.push(GridPoint { n, value: rep.estimate, std_error: rep.std_error });
        }
        let covariance = if cfg.covariance_times.is_empty() {
            Vec::new()
        } else {
            let n = cfg.covariance_n;
            let params = ModelParams::new(cfg.m, cfg.rho, cfg.b, gamma, n, cfg.ring_factor * n as usize)?;
            field_covariance(&params, &h, &cfg.covariance_times, cfg.translates, cfg.opts)?.0
        };
        out.push(CrossoverEntry {
            gamma,
            fit: scaling_fit(&rest),
            predicted_exponent: 1.0 - 2.0 * gamma,
            rest,
            covariance,
        });
    }
    Ok(out)
}

/// `E_ρ[jump activity] = D(ρ)χ(ρ)`-type exact check helper: mean total jump rate per bond.
pub fn exact_jump_activity(params: &ModelParams) -> Result<f64> {
    Ok(to_f64(&jump_activity(&ExactRates::from_params(params))?.expectation(&params.rho_exact())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    #[test]
    fn rhs_bound_shape() {
        assert_eq!(bgp2_rhs_bound(0.0, 8.0, 32.0, 1.0), 0.0);
        let (t, n) = (0.7, 64.0);
        let star = optimal_block_length(t, n);
        let f = |l: f64| bgp2_rhs_bound(t, l, n, 1.0);
        assert!(f(star) <= f(star * 1.01) && f(star) <= f(star * 0.99));
        let eps = 0.25;
        assert!((bgp2_rhs_bound(1.0, eps * n, n, 2.0) - 2.0 * (eps + 1.0 / (eps * eps * n))).abs() < 1e-12);
    }

    #[test]
    fn ou_oracle_gaussian_closed_form() {
        let h = TestFunction::gaussian(0.0, 1.0);
        let rho: f64 = 2.0 / 3.0;
        let chi = rho * (1.0 - rho);
        for t in [0.0, 0.1, 0.5, 1.0, 3.0] {
            let s = 2.0 * rho * t;
            let exact = chi * (2.0 * std::f64::consts::PI / (s + 2.0)).sqrt();
            let v = ou_covariance_oracle(&h, &h, t, rho, 2).unwrap();
            assert!((v - exact).abs() < 1e-8, "t = {t}: {v} vs {exact}");
        }
        let far = ou_covariance_oracle(&h, &h, 1e4, rho, 2).unwrap();
        assert!(far < 0.02);
        assert!(ou_covariance_oracle(&h, &h, -1.0, rho, 2).is_err());
    }

    #[test]
    fn ou_oracle_at_zero_is_weighted_norm() {
        let h = TestFunction::hermite(2, 0.1, 0.8);
        let v = ou_covariance_oracle(&h, &h, 0.0, 0.5, 3).unwrap();
        assert!((v - 0.25 * h.norm2_sq().unwrap()).abs() < 1e-10);
    }

    #[test]
    fn farm_is_ordered_and_thread_independent() {
        let a = farm(50, Some(1), |i| i * i).unwrap();
        let b = farm(50, Some(3), |i| i * i).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[7], 49);
    }

    #[test]
    fn deg1_vanishes_without_drift() {
        let p = ModelParams::new(2, Ratio::new(2, 3), 0.0, 1.0, 8, 64).unwrap();
        let h = TestFunction::gaussian(0.0, 1.0);
        let w = TestWeights::gradient_of(&h, 8, 64);
        let r = squared_expectation(&p, &[(Term::Deg1, w)], &[0.05], FarmOptions::new(16, 3)).unwrap();
        assert_eq!(r[0][0].report.estimate, 0.0);
        assert!(squared_expectation(&p, &[], &[0.05], FarmOptions::new(4, 3)).is_err());
    }

    #[test]
    fn monotone_and_constant_helpers() {
        let pts = [
            GridPoint { n: 32, value: 1.0, std_error: 0.1 },
            GridPoint { n: 64, value: 1.1, std_error: 0.1 },
            GridPoint { n: 128, value: 0.5, std_error: 0.1 },
        ];
        assert!(nonincreasing_within(&pts, 2.0));
        assert!(!nonincreasing_within(&pts, 0.5));
        assert_eq!(fitted_constant(&[1.0, 3.0], &[2.0, 2.0]), 1.5);
    }

    #[test]
    fn jump_activity_mean_is_d_chi() {
        let p = ModelParams::new(3, Ratio::new(1, 2), 0.4, 1.0, 4, 32).unwrap();
        assert!((exact_jump_activity(&p).unwrap() - p.diffusion() * p.chi()).abs() < 1e-12);
    }
}
