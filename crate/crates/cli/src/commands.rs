//! Subcommands. Each writes its outputs under `config.out` and returns an
//! [`Outcome`]; the typed results are also available to callers.

use std::path::PathBuf;
use std::time::Instant;

use kclg_core::analysis::{
    bgp2_rhs_bound, field_covariance, fitted_constant, nonincreasing_within, scaling_fit, squared_expectation_runs,
    CovarianceReport, FarmOptions, GridPoint, SquaredExpectation, TermRun,
};
use kclg_core::config::sample_equilibrium_with;
use kclg_core::kmc::run_trajectory;
use kclg_core::observables::{block_length, field_variance_exact, fluctuation_field, TestFunction, TestWeights};
use kclg_core::path::build_exchange_path;
use kclg_core::rng::{initial_stream, stream_rng};
use kclg_core::stats::{jarque_bera, variance_se, z_score};
use kclg_core::{BoxSpec, Configuration, ModelParams, ScalingFit, Term};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::output::OutputDir;
use crate::verify::{exact_suite, VerifyReport};
use crate::CliError;

/// Summary of a finished command.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub summary: String,
    pub files: Vec<PathBuf>,
}

/// Agreement threshold for Monte Carlo comparisons, in standard errors.
pub const Z_TOLERANCE: f64 = 4.0;

fn farm_options(cfg: &RunConfig, seed: u64) -> FarmOptions {
    FarmOptions { n_traj: cfg.n_traj, seed, threads: cfg.threads }
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<(Outcome, VerifyReport), CliError> {
    if cfg.m_list.is_empty() {
        return Err(CliError::Config("m_list is empty".into()));
    }
    let start = Instant::now();
    let report = exact_suite(&cfg.m_list, cfg.corrupted, cfg.path_trials, cfg.seed);
    let elapsed = start.elapsed().as_secs_f64();
    let out = OutputDir::create("verify", cfg, vec![cfg.seed])?;
    let file = out.write_json("verify.json", &report)?;
    let summary = format!("{report}\nruntime {elapsed:.2} s");
    Ok((Outcome { passed: report.all_passed(), summary, files: vec![file] }, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub params: ModelParams,
    pub t_max: f64,
    pub events: usize,
    pub particles: usize,
    pub blocked_at: Option<f64>,
    pub snapshots: usize,
    pub final_configuration: String,
}

/// One trajectory: `events.bin` (omitted when `t_max = 0`), `snapshots.csv`, `summary.json`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let params = cfg.params()?;
    let traj = run_trajectory(&params, cfg.t_max, cfg.sampling_dt, cfg.seed, 0)?;
    let out = OutputDir::create("simulate", cfg, vec![cfg.seed])?;
    let mut files = Vec::new();
    if cfg.t_max > 0.0 {
        let mut buf = Vec::new();
        traj.write_event_log(&mut buf)?;
        files.push(out.write_bytes("events.bin", &buf)?);
    }
    let rows: Vec<Vec<String>> =
        traj.sampling_times.iter().zip(&traj.snapshots).map(|(t, c)| vec![t.to_string(), c.to_string()]).collect();
    files.push(out.write_csv("snapshots.csv", &["time", "occupation"], &rows)?);
    let summary = SimulationSummary {
        params,
        t_max: cfg.t_max,
        events: traj.events.len(),
        particles: traj.initial.count(),
        blocked_at: traj.blocked_at,
        snapshots: traj.snapshots.len(),
        final_configuration: traj.final_configuration().to_string(),
    };
    files.push(out.write_json("summary.json", &summary)?);
    let text = format!("{} events up to t = {}, {} snapshots", summary.events, cfg.t_max, summary.snapshots);
    Ok(Outcome { passed: true, summary: text, files })
}

/// One point of a term series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub n: u32,
    pub ring: usize,
    pub term: String,
    pub estimate: SquaredExpectation,
    /// `t (ℓ/n + t n/ℓ²) ‖V‖²_{2,n}` for the bgp2 term.
    pub rhs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermSeries {
    pub term: String,
    pub gamma: f64,
    pub points: Vec<SeriesPoint>,
    pub nonincreasing_2sigma: bool,
    pub fit: Option<ScalingFit>,
}

impl TermSeries {
    fn new(term: &str, gamma: f64, points: Vec<SeriesPoint>) -> Self {
        let grid = grid_points(&points);
        Self {
            term: term.to_string(),
            gamma,
            nonincreasing_2sigma: nonincreasing_within(&grid, 2.0),
            fit: scaling_fit(&grid),
            points,
        }
    }
}

fn grid_points(points: &[SeriesPoint]) -> Vec<GridPoint> {
    points
        .iter()
        .map(|p| GridPoint { n: p.n, value: p.estimate.report.estimate, std_error: p.estimate.report.std_error })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestScaling {
    pub series: TermSeries,
    pub predicted_exponent: f64,
    pub tolerance: f64,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSummary {
    pub bgp2: TermSeries,
    /// Smallest `C` with every bgp2 value below `C · rhs`.
    pub fitted_c: f64,
    pub below_bound: bool,
    pub lemma62: TermSeries,
    pub rest: Vec<RestScaling>,
    pub passed: bool,
}

/// Per-trajectory values of one grid run.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRun {
    pub n: u32,
    pub gamma: f64,
    pub seed: u64,
    pub terms: Vec<String>,
    pub runs: Vec<TermRun>,
}

/// Offsets `(⌊ε√n⌋, ⌊εn^{3/4}⌋)` of the degree-three term, kept strictly increasing and positive.
pub fn lemma62_offsets(eps: f64, n: u32) -> (i64, i64) {
    let nf = n as f64;
    let y = ((eps * nf.sqrt() + 1e-9).floor() as i64).max(1);
    let z = ((eps * nf.powf(0.75) + 1e-9).floor() as i64).max(y + 1);
    (y, z)
}

/// Tolerance on the fitted exponent of the rest term: ±0.25 where no decay
/// is predicted, ±0.35 otherwise.
pub fn rest_tolerance(predicted: f64) -> f64 {
    if predicted.abs() < 1e-12 {
        0.25
    } else {
        0.35
    }
}

/// Grid estimates of the bgp2, degree-three and rest terms at `cfg.gamma`, and
/// of the rest term alone at each of `cfg.rest_gammas`.
pub fn scaling_pipeline(cfg: &RunConfig) -> Result<(ScalingSummary, Vec<GridRun>, Vec<u64>), CliError> {
    if cfg.ns.len() < 2 {
        return Err(CliError::Config("ns needs at least two grid points".into()));
    }
    let h = TestFunction::gaussian(0.0, cfg.width);
    let t = cfg.t_max;
    if !(t > 0.0) {
        return Err(CliError::Config("t_max must be positive for the scaling pipeline".into()));
    }
    let mut seeds = Vec::new();
    let mut grid_runs = Vec::new();
    let (mut bgp2, mut l62) = (Vec::new(), Vec::new());
    let mut rest_by_gamma: Vec<(f64, Vec<SeriesPoint>)> = Vec::new();
    let gammas: Vec<f64> = std::iter::once(cfg.gamma).chain(cfg.rest_gammas.iter().copied()).collect();
    for (g_idx, &gamma) in gammas.iter().enumerate() {
        let mut rest = Vec::new();
        for (k, &n) in cfg.ns.iter().enumerate() {
            let params = cfg.grid_params(n, gamma)?;
            let w = TestWeights::gradient_of(&h, n, params.ring);
            let rest_term = Term::Rest { eps: cfg.eps };
            let mut terms = vec![(rest_term, w.clone())];
            let main = g_idx == 0;
            let ell = match cfg.ell {
                Some(l) => l,
                None => block_length(cfg.eps, n)?,
            };
            if main {
                let (y, z) = lemma62_offsets(cfg.eps, n);
                terms.push((Term::Bgp2Inner { ell }, w.clone()));
                terms.push((Term::Lemma62 { y, z }, w.clone()));
            }
            let seed = cfg.seed.wrapping_add((g_idx * cfg.ns.len() + k) as u64);
            seeds.push(seed);
            let (est, runs) = squared_expectation_runs(&params, &terms, &[t], farm_options(cfg, seed))?;
            let point = |i: usize, rhs: Option<f64>| SeriesPoint {
                n,
                ring: params.ring,
                term: terms[i].0.to_string(),
                estimate: est[i][0].clone(),
                rhs,
            };
            rest.push(point(0, None));
            if main {
                let k_norm = w.norm_2n();
                bgp2.push(point(1, Some(bgp2_rhs_bound(t, ell as f64, n as f64, k_norm))));
                l62.push(point(2, None));
            }
            grid_runs.push(GridRun { n, gamma, seed, terms: terms.iter().map(|x| x.0.to_string()).collect(), runs });
        }
        rest_by_gamma.push((gamma, rest));
    }
    let values: Vec<f64> = bgp2.iter().map(|p| p.estimate.report.estimate).collect();
    let rhs: Vec<f64> = bgp2.iter().map(|p| p.rhs.unwrap_or(f64::NAN)).collect();
    let fitted_c = fitted_constant(&values, &rhs);
    let below_bound = values.iter().zip(&rhs).all(|(v, r)| *v <= fitted_c * r * (1.0 + 1e-12));
    let bgp2 = TermSeries::new("bgp2-inner", cfg.gamma, bgp2);
    let lemma62 = TermSeries::new("lemma62", cfg.gamma, l62);
    let rest: Vec<RestScaling> = rest_by_gamma
        .into_iter()
        .map(|(gamma, pts)| {
            let series = TermSeries::new("rest", gamma, pts);
            let predicted = 1.0 - 2.0 * gamma;
            let tolerance = rest_tolerance(predicted);
            let within = series.fit.as_ref().is_some_and(|f| (f.exponent - predicted).abs() <= tolerance);
            RestScaling { series, predicted_exponent: predicted, tolerance, within_tolerance: within }
        })
        .collect();
    let passed = bgp2.nonincreasing_2sigma
        && below_bound
        && lemma62.nonincreasing_2sigma
        && rest.iter().all(|r| r.within_tolerance);
    Ok((ScalingSummary { bgp2, fitted_c, below_bound, lemma62, rest, passed }, grid_runs, seeds))
}

/// Runs [`scaling_pipeline`] and writes `bgp2.json` and `bgp2_trajectories.csv`.
pub fn cmd_bgp2(cfg: &RunConfig) -> Result<(Outcome, ScalingSummary), CliError> {
    let (summary, runs, seeds) = scaling_pipeline(cfg)?;
    let out = OutputDir::create("bgp2", cfg, seeds)?;
    let mut rows = Vec::new();
    for g in &runs {
        for (i, r) in g.runs.iter().enumerate() {
            for (k, term) in g.terms.iter().enumerate() {
                rows.push(vec![
                    g.n.to_string(),
                    g.gamma.to_string(),
                    g.seed.to_string(),
                    i.to_string(),
                    format!("\"{term}\""),
                    r.values[k][0].to_string(),
                    u8::from(r.blocked).to_string(),
                    r.events.to_string(),
                ]);
            }
        }
    }
    let cols = ["n", "gamma", "seed", "trajectory", "term", "integral", "blocked", "events"];
    let csv = out.write_csv("bgp2_trajectories.csv", &cols, &rows)?;
    let json = out.write_json("bgp2.json", &summary)?;
    let mut text = String::new();
    for s in [&summary.bgp2, &summary.lemma62] {
        text.push_str(&format!("{} nonincreasing within 2 sigma: {}\n", s.term, s.nonincreasing_2sigma));
    }
    text.push_str(&format!("fitted C = {:.4}\n", summary.fitted_c));
    for r in &summary.rest {
        let e = r.series.fit.as_ref().map_or(f64::NAN, |f| f.exponent);
        text.push_str(&format!(
            "rest at gamma = {}: exponent {e:.3}, predicted {} +/- {}\n",
            r.series.gamma, r.predicted_exponent, r.tolerance
        ));
    }
    Ok((Outcome { passed: summary.passed, summary: text.trim_end().to_string(), files: vec![json, csv] }, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSummary {
    pub params: ModelParams,
    pub width: f64,
    pub translates: usize,
    pub excluded: usize,
    pub reports: Vec<CovarianceReport>,
    pub passed: bool,
}

/// `𝔼[𝒴_t(H)𝒴_0(H)]` at `cfg.times` against the OU oracle.
pub fn cmd_covariance(cfg: &RunConfig) -> Result<(Outcome, CovarianceSummary), CliError> {
    let params = cfg.params()?;
    if cfg.times.is_empty() {
        return Err(CliError::Config("times is empty".into()));
    }
    let h = TestFunction::gaussian(0.0, cfg.width);
    let (reports, excluded) = field_covariance(&params, &h, &cfg.times, cfg.translates, farm_options(cfg, cfg.seed))?;
    let passed = reports.iter().all(|r| r.z.abs() < Z_TOLERANCE);
    let summary = CovarianceSummary { params, width: cfg.width, translates: cfg.translates, excluded, reports, passed };
    let out = OutputDir::create("covariance", cfg, vec![cfg.seed])?;
    let rows: Vec<Vec<String>> = summary
        .reports
        .iter()
        .map(|r| {
            vec![r.t.to_string(), r.report.estimate.to_string(), r.report.std_error.to_string(), r.oracle.to_string(), r.z.to_string()]
        })
        .collect();
    let csv = out.write_csv("covariance.csv", &["t", "estimate", "std_error", "oracle", "z"], &rows)?;
    let json = out.write_json("covariance.json", &summary)?;
    let text = summary
        .reports
        .iter()
        .map(|r| format!("t = {}: {:.5} +/- {:.5} vs OU {:.5} (z = {:.2})", r.t, r.report.estimate, r.report.std_error, r.oracle, r.z))
        .collect::<Vec<_>>()
        .join("\n");
    Ok((Outcome { passed, summary: text, files: vec![json, csv] }, summary))
}

pub const DEFAULT_DEMO_CONFIGURATION: &str = "1000110000000000";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathDemo {
    pub initial: String,
    pub y: i64,
    pub z: i64,
    pub box_anchor: i64,
    pub box_len: usize,
    pub moves: Vec<i64>,
    pub max_bond_usage: usize,
    pub final_is_exchange: bool,
}

/// Allowed path exchanging `y` and `z` with a cluster found to the right of `z`
/// (or to the left of `y` when `box_len` does not fit on the right). Writes one
/// frame per line to `frames.txt`.
pub fn cmd_path_demo(cfg: &RunConfig) -> Result<(Outcome, PathDemo), CliError> {
    let text = cfg.configuration.as_deref().unwrap_or(DEFAULT_DEMO_CONFIGURATION);
    let c: Configuration = text.parse().map_err(|e| CliError::Config(format!("configuration: {e}")))?;
    let (y, z) = (cfg.y.min(cfg.z), cfg.y.max(cfg.z));
    let len = c.len() as i64;
    if y == z || z - y >= len {
        return Err(CliError::Config(format!("sites y = {y}, z = {z} must be distinct on a ring of {len}")));
    }
    let room = (len - (z - y) - 1 - 2 * cfg.m as i64).max(cfg.m as i64) as usize;
    let box_len = cfg.box_len.unwrap_or(room);
    let bx = BoxSpec::new(z, box_len);
    let path = build_exchange_path(&c, y, z, bx, cfg.m)?;
    let frames = path.frames(&c)?;
    let last = frames.last().cloned().unwrap_or_else(|| c.clone());
    let ok = last == c.exchange(y, z);
    let demo = PathDemo {
        initial: c.to_string(),
        y,
        z,
        box_anchor: bx.anchor,
        box_len,
        moves: path.moves.clone(),
        max_bond_usage: path.max_bond_usage(),
        final_is_exchange: ok,
    };
    let out = OutputDir::create("path-demo", cfg, vec![])?;
    let mut body: String = frames.iter().map(|f| format!("{f}\n")).collect();
    let frames_file = out.write_bytes("frames.txt", body.as_bytes())?;
    let json = out.write_json("path.json", &demo)?;
    body.push_str(&format!("{} moves, max bond usage {}", path.len(), demo.max_bond_usage));
    Ok((Outcome { passed: ok, summary: body, files: vec![frames_file, json] }, demo))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldLawLine {
    pub test_function: String,
    pub variance: f64,
    pub std_error: f64,
    pub exact: f64,
    pub z: f64,
    pub jarque_bera: f64,
    pub normality_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSummary {
    pub params: ModelParams,
    pub samples: usize,
    pub lines: Vec<FieldLawLine>,
    pub passed: bool,
}

/// Normality threshold on the Jarque-Bera p-value.
pub const NORMALITY_LEVEL: f64 = 0.01;

fn field_law_functions(width: f64) -> Vec<(String, TestFunction)> {
    vec![
        (format!("gaussian({width})"), TestFunction::gaussian(0.0, width)),
        (format!("hermite1({width})"), TestFunction::hermite(1, 0.0, width)),
        (format!("bump({})", 2.0 * width), TestFunction::bump(0.0, 2.0 * width)),
    ]
}

/// Samples `ν_ρ` and compares the law of `𝒴_0(H)` with `N(0, χ n⁻¹ Σ H(x/n)²)`.
pub fn cmd_sample_equilibrium(cfg: &RunConfig) -> Result<(Outcome, EquilibriumSummary), CliError> {
    let params = cfg.params()?;
    if cfg.samples < 16 {
        return Err(CliError::Config("samples must be at least 16".into()));
    }
    let functions = field_law_functions(cfg.width);
    let values = kclg_core::analysis::farm(cfg.samples, cfg.threads, |i| {
        let mut rng = stream_rng(cfg.seed, initial_stream(i));
        let c = sample_equilibrium_with(params.rho, params.ring, &mut rng);
        functions.iter().map(|(_, h)| fluctuation_field(&c, h, &params, 0.0)).collect::<Vec<f64>>()
    })?;
    let mut lines = Vec::new();
    for (k, (name, h)) in functions.iter().enumerate() {
        let xs: Vec<f64> = values.iter().map(|v| v[k]).collect();
        let (variance, std_error) = variance_se(&xs);
        let exact = field_variance_exact(h, &params);
        let (jb, p) = jarque_bera(&xs);
        lines.push(FieldLawLine {
            test_function: name.clone(),
            variance,
            std_error,
            exact,
            z: z_score(variance, std_error, exact),
            jarque_bera: jb,
            normality_p: p,
        });
    }
    let passed = lines.iter().all(|l| l.z.abs() < Z_TOLERANCE && l.normality_p > NORMALITY_LEVEL);
    let summary = EquilibriumSummary { params, samples: cfg.samples, lines, passed };
    let out = OutputDir::create("sample-equilibrium", cfg, vec![cfg.seed])?;
    let mut cols = vec!["sample".to_string()];
    cols.extend(functions.iter().map(|(n, _)| format!("\"{n}\"")));
    let rows: Vec<Vec<String>> = values
        .iter()
        .enumerate()
        .map(|(i, v)| std::iter::once(i.to_string()).chain(v.iter().map(f64::to_string)).collect())
        .collect();
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let csv = out.write_csv("field_samples.csv", &col_refs, &rows)?;
    let json = out.write_json("equilibrium.json", &summary)?;
    let text = summary
        .lines
        .iter()
        .map(|l| {
            format!("{}: var {:.5} +/- {:.5} vs {:.5} (z = {:.2}), normality p = {:.3}", l.test_function, l.variance, l.std_error, l.exact, l.z, l.normality_p)
        })
        .collect::<Vec<_>>()
        .join("\n");
    Ok((Outcome { passed, summary: text, files: vec![json, csv] }, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degree_three_offsets_on_the_default_grid() {
        let got: Vec<(i64, i64)> = [32, 64, 128, 256].iter().map(|&n| lemma62_offsets(0.25, n)).collect();
        assert_eq!(got, vec![(1, 3), (2, 5), (2, 9), (4, 16)]);
        assert_eq!(lemma62_offsets(0.01, 4), (1, 2));
    }

    #[test]
    fn tolerance_depends_on_predicted_decay() {
        assert_eq!(rest_tolerance(0.0), 0.25);
        assert_eq!(rest_tolerance(-1.0), 0.35);
    }
}
