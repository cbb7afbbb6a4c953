//! The evaluation harness: occlusion-grid accuracy tables and agent-count
//! scaling benchmarks over the intersection model.
//!
//! A table run simulates a batch of scenarios, degrades the light channel
//! of each with every configured occlusion pattern, runs every method on
//! the identical degraded trace (paired design), and scores the most
//! probable label sequence against the simulated truth. Work is spread
//! over a thread pool, but every random draw comes from a stream keyed by
//! (scenario, grid cell, trial) and results are reduced in grid order, so
//! the report is a pure function of the configuration and master seed.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::{hmm_smooth, map_sequence, smooth, InferenceError, PosteriorSequence};
use crate::model::AaseModel;
use crate::rng::{derive_seed, pack_cell, tags};
use crate::schema::csv_field;
use crate::sim::{
    accuracy, apply_occlusion, majority_baseline, simulate, OcclusionKind, OcclusionPattern,
};
use crate::trace::ObservationTrace;
use crate::traffic::{build_traffic_model, TrafficConfig, TrafficError};

/// An inference method the table can score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Full model: light observations plus agent observations.
    Aase,
    /// Global chain only: the light observations alone.
    Hmm,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Aase => "aase",
            Method::Hmm => "hmm",
        })
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

/// Everything a table run needs. All fields have defaults, so a config
/// file can set only what it cares about.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Base intersection model; agent counts may be re-drawn per scenario.
    pub traffic: TrafficConfig,
    pub horizon: usize,
    pub scenarios: usize,
    pub kinds: Vec<OcclusionKind>,
    pub fractions: Vec<f64>,
    pub methods: Vec<Method>,
    /// Trials per grid cell for the seeded random kinds; the deterministic
    /// kinds always run once per scenario.
    pub trials: usize,
    pub master_seed: u64,
    /// When false, the timing column is written as zero so two runs of the
    /// same configuration produce byte-identical reports.
    pub include_timing: bool,
    /// Redraw 1..=4 vehicles per direction from the scenario seed instead
    /// of using the counts in `traffic`.
    pub randomize_agent_counts: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            traffic: TrafficConfig::default(),
            horizon: 300,
            scenarios: 21,
            kinds: OcclusionKind::ALL.to_vec(),
            fractions: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            methods: vec![Method::Aase, Method::Hmm],
            trials: 5,
            master_seed: 0,
            include_timing: true,
            randomize_agent_counts: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::BadConfig(msg));
        if self.scenarios == 0 {
            return bad("scenario count must be at least 1".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if self.kinds.is_empty() {
            return bad("at least one occlusion kind is required".into());
        }
        if self.fractions.is_empty() {
            return bad("at least one fraction is required".into());
        }
        for &x in &self.fractions {
            if !(0.0..=1.0).contains(&x) || !x.is_finite() {
                return bad(format!("occlusion fraction {x} lies outside [0, 1]"));
            }
        }
        if self.trials == 0 || self.trials > 255 {
            return bad("trials must lie in 1..=255".into());
        }
        self.traffic.validate()?;
        Ok(())
    }
}

/// One aggregated grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub pattern: OcclusionKind,
    pub fraction: f64,
    pub method: Method,
    /// Samples aggregated into this cell: scenarios times per-cell trials.
    pub trials: usize,
    pub mean_accuracy: f64,
    /// Standard error of the mean accuracy; zero for a single sample.
    pub stderr: f64,
    pub mean_infer_ms: f64,
    /// Footnote flag: this method ran with the light channel fully blank.
    pub blind_global_channel: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub scenarios: usize,
    pub horizon: usize,
    /// Most frequent true light state across all scenarios, and the
    /// accuracy of constantly predicting it.
    pub majority_label: String,
    pub majority_accuracy: f64,
}

struct Scenario {
    model: AaseModel,
    trace: ObservationTrace,
    truth_labels: Vec<String>,
}

fn build_scenario(cfg: &RunConfig, s: usize) -> Result<Scenario, HarnessError> {
    let mut traffic = cfg.traffic.clone();
    if cfg.randomize_agent_counts {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            cfg.master_seed,
            tags::SCENARIO,
            s as u64,
        ));
        traffic.n_parallel = rng.gen_range(1..=4);
        traffic.n_perpendicular = rng.gen_range(1..=4);
    }
    let model = build_traffic_model(&traffic)?;
    let sim_seed = derive_seed(cfg.master_seed, tags::MODEL, s as u64);
    let (truth, trace) = simulate(&model, cfg.horizon, sim_seed);
    let truth_labels = truth
        .global_states
        .iter()
        .map(|&ix| model.global.space.label(ix).to_string())
        .collect();
    Ok(Scenario {
        model,
        trace,
        truth_labels,
    })
}

fn run_method(
    method: Method,
    model: &AaseModel,
    trace: &ObservationTrace,
) -> Result<PosteriorSequence, InferenceError> {
    match method {
        Method::Aase => smooth(model, trace),
        Method::Hmm => hmm_smooth(&model.global, &trace.global_obs),
    }
}

/// Runs the full occlusion grid and aggregates accuracy per
/// (pattern, fraction, method) cell.
pub fn run_table(cfg: &RunConfig) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let scenarios: Vec<Scenario> = (0..cfg.scenarios)
        .into_par_iter()
        .map(|s| build_scenario(cfg, s))
        .collect::<Result<_, _>>()?;

    let space = &scenarios[0].model.global.space;
    let majority_label =
        majority_baseline(space, scenarios.iter().map(|sc| sc.truth_labels.as_slice()));
    let steps: usize = scenarios.iter().map(|sc| sc.truth_labels.len()).sum();
    let hits: usize = scenarios
        .iter()
        .flat_map(|sc| sc.truth_labels.iter())
        .filter(|l| **l == majority_label)
        .count();
    let majority_accuracy = hits as f64 / steps as f64;

    // one job per (scenario, grid cell, trial); methods run inside the job
    // so they score the identical degraded trace
    struct Job {
        scenario: usize,
        cell: usize,
        trial: usize,
    }
    let grid: Vec<(OcclusionKind, f64)> = cfg
        .kinds
        .iter()
        .flat_map(|&k| cfg.fractions.iter().map(move |&x| (k, x)))
        .collect();
    let mut jobs = Vec::new();
    for s in 0..cfg.scenarios {
        for (cell, &(kind, _)) in grid.iter().enumerate() {
            let trials = if kind.is_random() { cfg.trials } else { 1 };
            for trial in 0..trials {
                jobs.push(Job {
                    scenario: s,
                    cell,
                    trial,
                });
            }
        }
    }

    // sample = per-method (accuracy, elapsed ms)
    let samples: Vec<Vec<(f64, f64)>> = jobs
        .par_iter()
        .map(|job| {
            let sc = &scenarios[job.scenario];
            let (kind, fraction) = grid[job.cell];
            let seed = derive_seed(
                cfg.master_seed,
                tags::OCCLUSION,
                pack_cell(job.scenario as u64, job.cell as u64, job.trial as u64),
            );
            let occluded =
                apply_occlusion(&sc.trace, &OcclusionPattern::new(kind, fraction, seed));
            cfg.methods
                .iter()
                .map(|&method| {
                    let start = Instant::now();
                    let post = run_method(method, &sc.model, &occluded)?;
                    let ms = start.elapsed().as_secs_f64() * 1e3;
                    let acc = accuracy(&map_sequence(&post), &sc.truth_labels);
                    Ok((acc, ms))
                })
                .collect::<Result<Vec<_>, InferenceError>>()
        })
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    for (cell, &(kind, fraction)) in grid.iter().enumerate() {
        for (m, &method) in cfg.methods.iter().enumerate() {
            let mut accs = Vec::new();
            let mut ms_sum = 0.0;
            for (job, per_method) in jobs.iter().zip(&samples) {
                if job.cell == cell {
                    accs.push(per_method[m].0);
                    ms_sum += per_method[m].1;
                }
            }
            let n = accs.len();
            let mean = accs.iter().sum::<f64>() / n as f64;
            let stderr = if n < 2 {
                0.0
            } else {
                let var =
                    accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            };
            rows.push(ReportRow {
                pattern: kind,
                fraction,
                method,
                trials: n,
                mean_accuracy: mean,
                stderr,
                mean_infer_ms: if cfg.include_timing {
                    ms_sum / n as f64
                } else {
                    0.0
                },
                blind_global_channel: method == Method::Hmm && fraction >= 1.0,
            });
        }
    }

    Ok(ExperimentReport {
        rows,
        scenarios: cfg.scenarios,
        horizon: cfg.horizon,
        majority_label,
        majority_accuracy,
    })
}

/// Renders the report with one row per grid cell and `#`-prefixed footer
/// lines for run-level facts.
pub fn report_to_csv(report: &ExperimentReport) -> String {
    let mut out = String::from(
        "pattern,fraction,method,trials,mean_accuracy,stderr,mean_infer_ms\n",
    );
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{:.3}\n",
            row.pattern, row.fraction, row.method, row.trials, row.mean_accuracy, row.stderr,
            row.mean_infer_ms
        ));
    }
    out.push_str(&format!("# scenarios: {}\n", report.scenarios));
    out.push_str(&format!("# horizon: {}\n", report.horizon));
    out.push_str(&format!(
        "# majority_label: {}\n",
        csv_field(&report.majority_label)
    ));
    out.push_str(&format!(
        "# majority_accuracy: {:.6}\n",
        report.majority_accuracy
    ));
    if report.rows.iter().any(|r| r.blind_global_channel) {
        out.push_str(
            "# footnote: hmm rows at fraction 1 ran with every light observation dropped; \
             their output is the prior chain\n",
        );
    }
    out
}

/// A self-contained accuracy-vs-fraction chart for one occlusion kind: one
/// line per method, whiskers at one standard error, and a dashed line at
/// the majority-baseline accuracy.
pub fn accuracy_plot_svg(report: &ExperimentReport, kind: OcclusionKind) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const L: f64 = 60.0;
    const R: f64 = 20.0;
    const T: f64 = 40.0;
    const B: f64 = 50.0;
    let x_of = |frac: f64| L + frac * (W - L - R);
    let y_of = |acc: f64| T + (1.0 - acc) * (H - T - B);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">\
         Accuracy vs occluded fraction ({kind})</text>\n",
        W / 2.0
    ));
    // axes and gridlines
    for i in 0..=5 {
        let acc = i as f64 / 5.0;
        let y = y_of(acc);
        svg.push_str(&format!(
            "<line x1=\"{L}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" \
             stroke=\"#ddd\"/>\n",
            W - R
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{acc:.1}</text>\n",
            L - 6.0,
            y + 4.0
        ));
    }
    let mut fractions: Vec<f64> = report
        .rows
        .iter()
        .filter(|r| r.pattern == kind)
        .map(|r| r.fraction)
        .collect();
    fractions.sort_by(f64::total_cmp);
    fractions.dedup();
    for &frac in &fractions {
        let x = x_of(frac);
        svg.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{frac}</text>\n",
            H - B + 18.0
        ));
    }
    svg.push_str(&format!(
        "<line x1=\"{L}\" y1=\"{T}\" x2=\"{L}\" y2=\"{:.1}\" stroke=\"black\"/>\n\
         <line x1=\"{L}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        H - B,
        H - B,
        W - R,
        H - B
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">occluded fraction</text>\n",
        (L + W - R) / 2.0,
        H - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {:.1})\">accuracy</text>\n",
        (T + H - B) / 2.0,
        (T + H - B) / 2.0
    ));
    // majority baseline
    let ym = y_of(report.majority_accuracy);
    svg.push_str(&format!(
        "<line x1=\"{L}\" y1=\"{ym:.1}\" x2=\"{:.1}\" y2=\"{ym:.1}\" stroke=\"#888\" \
         stroke-dasharray=\"6 4\"/>\n",
        W - R
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"#666\">majority = {:.3}</text>\n",
        L + 8.0,
        ym - 6.0,
        report.majority_accuracy
    ));

    let color = |method: Method| match method {
        Method::Aase => "#1f77b4",
        Method::Hmm => "#d62728",
    };
    let mut methods: Vec<Method> = report.rows.iter().map(|r| r.method).collect();
    methods.dedup();
    let mut seen = Vec::new();
    for m in methods {
        if !seen.contains(&m) {
            seen.push(m);
        }
    }
    for (mi, &method) in seen.iter().enumerate() {
        let mut pts: Vec<&ReportRow> = report
            .rows
            .iter()
            .filter(|r| r.pattern == kind && r.method == method)
            .collect();
        pts.sort_by(|a, b| a.fraction.total_cmp(&b.fraction));
        let path: Vec<String> = pts
            .iter()
            .map(|r| format!("{:.1},{:.1}", x_of(r.fraction), y_of(r.mean_accuracy)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n",
            path.join(" "),
            color(method)
        ));
        for r in &pts {
            let x = x_of(r.fraction);
            let y = y_of(r.mean_accuracy);
            svg.push_str(&format!(
                "<circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"3\" fill=\"{}\"/>\n",
                color(method)
            ));
            if r.stderr > 0.0 {
                svg.push_str(&format!(
                    "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" \
                     stroke=\"{}\"/>\n",
                    y_of(r.mean_accuracy - r.stderr),
                    y_of(r.mean_accuracy + r.stderr),
                    color(method)
                ));
            }
        }
        let ly = T + 16.0 * mi as f64;
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" \
             stroke=\"{}\" stroke-width=\"2\"/>\n",
            W - R - 110.0,
            W - R - 86.0,
            color(method)
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\">{method}</text>\n",
            W - R - 80.0,
            ly + 4.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

// ---------------------------------------------------------------------------
// scaling benchmark

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Base intersection model; agent counts are overridden per point.
    pub traffic: TrafficConfig,
    /// Total vehicle counts to time, ascending.
    pub n_list: Vec<usize>,
    pub horizon: usize,
    /// Timed repetitions per point (after one discarded warm-up).
    pub timed_runs: usize,
    pub master_seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            traffic: TrafficConfig::default(),
            n_list: vec![4, 8, 16, 32],
            horizon: 300,
            timed_runs: 5,
            master_seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::BadConfig(msg));
        if self.n_list.len() < 3 {
            return bad("the benchmark needs at least 3 agent counts".into());
        }
        if !self.n_list.windows(2).all(|w| w[0] < w[1]) {
            return bad("agent counts must be strictly ascending".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.timed_runs == 0 {
            return bad("timed_runs must be at least 1".into());
        }
        self.traffic.validate()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchPoint {
    pub agents: usize,
    pub median_ms: f64,
    pub runs_ms: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub points: Vec<BenchPoint>,
    /// Least-squares fit of median time on agent count.
    pub slope_ms_per_agent: f64,
    pub intercept_ms: f64,
    pub r_squared: f64,
}

/// Times smoothing on the intersection model at each agent count. Every
/// point simulates with the same master seed, so the traces differ only by
/// the extra agents.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport, HarnessError> {
    cfg.validate()?;
    let mut points = Vec::new();
    for &n in &cfg.n_list {
        let traffic = TrafficConfig {
            n_parallel: n - n / 2,
            n_perpendicular: n / 2,
            ..cfg.traffic.clone()
        };
        let model: AaseModel = build_traffic_model(&traffic)?;
        let (_, trace) = simulate(&model, cfg.horizon, cfg.master_seed);
        smooth(&model, &trace)?; // warm-up, discarded
        let mut runs_ms = Vec::with_capacity(cfg.timed_runs);
        for _ in 0..cfg.timed_runs {
            let start = Instant::now();
            smooth(&model, &trace)?;
            runs_ms.push(start.elapsed().as_secs_f64() * 1e3);
        }
        points.push(BenchPoint {
            agents: n,
            median_ms: median(&runs_ms),
            runs_ms,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.agents as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.median_ms).collect();
    let (slope_ms_per_agent, intercept_ms, r_squared) = fit_line(&xs, &ys);
    Ok(BenchReport {
        points,
        slope_ms_per_agent,
        intercept_ms,
        r_squared,
    })
}

pub fn bench_to_csv(report: &BenchReport) -> String {
    let mut out = String::from("agents,median_ms\n");
    for p in &report.points {
        out.push_str(&format!("{},{:.3}\n", p.agents, p.median_ms));
    }
    out.push_str(&format!(
        "# slope_ms_per_agent: {:.4}\n# intercept_ms: {:.4}\n# r_squared: {:.4}\n",
        report.slope_ms_per_agent, report.intercept_ms, report.r_squared
    ));
    out
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    }
}

/// Ordinary least squares of y on x: (slope, intercept, r squared). A flat
/// target is reported as perfectly fit by its own mean.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "a line fit needs at least two points");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    (slope, intercept, r2)
}
