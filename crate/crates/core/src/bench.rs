//! Experiment harness: runs the solution methods over seeded sample
//! batches, scores them against the exact baseline and writes reports.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bnb::{solve_misocp, BnbConfig, BnbResult};
use crate::dc::{run_dc, DcConfig, DcOutcome};
use crate::error::{Error, Result};
use crate::scenario::{generate_sample, Sample, ScenarioSpec};
use crate::trust_region::{run_stage_two, Escalation, TrustRegionConfig, WarmStart};
use crate::v2g::{assemble_primal, V2gModel};

/// Feasibility tolerance used when scoring solutions.
pub const CHECK_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline,
    DcOnly,
    TwoStage,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Baseline => "baseline",
            Method::DcOnly => "dc_only",
            Method::TwoStage => "two_stage",
        })
    }
}

/// `|x - x*| / (|x*| + 1e-8) * 100`.
pub fn gap(x_tilde: f64, x_star: f64) -> f64 {
    (x_tilde - x_star).abs() / (x_star.abs() + 1e-8) * 100.0
}

/// One method on one sample. Wall time is kept out of the CSV so that
/// repeated runs produce identical files; see [`TimingRecord`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub sample: usize,
    pub seed: u64,
    pub method: Method,
    /// Configured trust-region radius (two-stage only).
    pub delta: Option<usize>,
    pub status: String,
    pub objective: Option<f64>,
    pub c_g: Option<f64>,
    pub c_ev: Option<f64>,
    /// Against the baseline, when it was proved optimal.
    pub gap_pct: Option<f64>,
    pub gap_c_g_pct: Option<f64>,
    pub gap_c_ev_pct: Option<f64>,
    pub feasible: bool,
    pub proved_optimal: bool,
    pub delta_used: Option<usize>,
    pub flip_count: Option<usize>,
    pub nodes: Option<usize>,
    #[serde(skip)]
    pub solve_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub sample: usize,
    pub method: Method,
    pub delta: Option<usize>,
    pub solve_time_s: f64,
}

impl MetricsRecord {
    fn empty(sample: usize, seed: u64, method: Method, delta: Option<usize>) -> Self {
        Self {
            sample,
            seed,
            method,
            delta,
            status: String::new(),
            objective: None,
            c_g: None,
            c_ev: None,
            gap_pct: None,
            gap_c_g_pct: None,
            gap_c_ev_pct: None,
            feasible: false,
            proved_optimal: false,
            delta_used: None,
            flip_count: None,
            nodes: None,
            solve_time_s: 0.0,
        }
    }

    pub fn timing(&self) -> TimingRecord {
        TimingRecord {
            sample: self.sample,
            method: self.method,
            delta: self.delta,
            solve_time_s: self.solve_time_s,
        }
    }

    /// Fills objective, costs and feasibility from a solution vector and
    /// returns the finalized vector.
    fn score(&mut self, model: &V2gModel, mut values: Vec<f64>) -> Vec<f64> {
        model.finalize(&mut values);
        let costs = model.cost_breakdown(&values);
        self.objective = Some(model.program.objective_value(&values));
        self.c_g = Some(costs.c_g);
        self.c_ev = Some(costs.c_ev);
        self.feasible = model.check_full_feasibility(&values, CHECK_TOL).feasible;
        values
    }
}

/// Settings for a batch run.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub spec: ScenarioSpec,
    /// Sample `i` uses seed `spec.seed + i`.
    pub samples: usize,
    pub methods: Vec<Method>,
    pub deltas: Vec<usize>,
    /// Overrides the instance-scaled default.
    pub lambda: Option<f64>,
    pub max_iters: usize,
    pub escalation: bool,
    pub jobs: usize,
    pub bnb: BnbConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            spec: ScenarioSpec::default(),
            samples: 20,
            methods: vec![Method::Baseline, Method::TwoStage],
            deltas: vec![2],
            lambda: None,
            max_iters: 50,
            escalation: true,
            jobs: 1,
            bnb: BnbConfig {
                time_limit: Some(600.0),
                ..BnbConfig::default()
            },
        }
    }
}

impl ExperimentConfig {
    pub fn dc_config(&self, model: &V2gModel) -> DcConfig {
        let mut c = DcConfig::for_model(model);
        if let Some(l) = self.lambda {
            c.lambda = l;
        }
        c.max_iters = self.max_iters;
        c
    }

    pub fn tr_config(&self, delta: usize) -> TrustRegionConfig {
        TrustRegionConfig {
            delta,
            escalation: if self.escalation {
                Escalation::Default
            } else {
                Escalation::Disabled
            },
            ..TrustRegionConfig::default()
        }
    }
}

/// Every scored solution, as seen by an observer passed to
/// [`run_experiment_observed`].
pub struct SolutionView<'a> {
    pub model: &'a V2gModel,
    pub record: &'a MetricsRecord,
    /// Finalized solution vector.
    pub values: &'a [f64],
    /// Two-stage only.
    pub warm_start: Option<&'a WarmStart>,
    pub dc: Option<&'a DcOutcome>,
}

pub type Observer<'a> = &'a (dyn Fn(&SolutionView) + Sync);

fn ignore(_: &SolutionView) {}

/// Exact branch-and-bound on the full program.
pub fn run_baseline(
    cfg: &ExperimentConfig,
    model: &V2gModel,
    id: usize,
    seed: u64,
) -> (MetricsRecord, Option<BnbResult>) {
    run_baseline_observed(cfg, model, id, seed, &ignore)
}

fn run_baseline_observed(
    cfg: &ExperimentConfig,
    model: &V2gModel,
    id: usize,
    seed: u64,
    obs: Observer,
) -> (MetricsRecord, Option<BnbResult>) {
    let mut r = MetricsRecord::empty(id, seed, Method::Baseline, None);
    let t = Instant::now();
    let res = solve_misocp(&model.program, &cfg.bnb);
    r.solve_time_s = t.elapsed().as_secs_f64();
    match res {
        Ok(res) => {
            r.status = res.solution.status.to_string();
            r.proved_optimal = res.proved_optimal;
            r.nodes = Some(res.nodes_explored);
            if !res.solution.values.is_empty() {
                let x = r.score(model, res.solution.values.clone());
                obs(&SolutionView {
                    model,
                    record: &r,
                    values: &x,
                    warm_start: None,
                    dc: None,
                });
            }
            (r, Some(res))
        }
        Err(e) => {
            r.status = format!("error: {e}");
            (r, None)
        }
    }
}

/// Runs every configured method on one sample. Failures become records with
/// `feasible = false`; they never abort the batch.
pub fn run_sample(cfg: &ExperimentConfig, id: usize, sample: &Sample) -> Vec<MetricsRecord> {
    run_sample_observed(cfg, id, sample, &ignore)
}

pub fn run_sample_observed(cfg: &ExperimentConfig, id: usize, sample: &Sample, obs: Observer) -> Vec<MetricsRecord> {
    let seed = sample.seed;
    let model = match assemble_primal(&sample.case, &sample.sessions, &sample.prices) {
        Ok(m) => m,
        Err(e) => {
            log::error!("sample {id}: {e}");
            let mut r = MetricsRecord::empty(id, seed, Method::Baseline, None);
            r.status = format!("model_error: {e}");
            return vec![r];
        }
    };
    let mut out = Vec::new();

    let mut baseline: Option<(f64, f64, f64)> = None;
    if cfg.methods.contains(&Method::Baseline) {
        let (r, _) = run_baseline_observed(cfg, &model, id, seed, obs);
        if r.proved_optimal {
            baseline = Some((r.objective.unwrap(), r.c_g.unwrap(), r.c_ev.unwrap()));
        }
        out.push(r);
    }

    let needs_dc = cfg
        .methods
        .iter()
        .any(|m| matches!(m, Method::DcOnly | Method::TwoStage));
    let dc: Option<std::result::Result<DcOutcome, Error>> =
        needs_dc.then(|| run_dc(&model.program, &cfg.dc_config(&model)));

    if cfg.methods.contains(&Method::DcOnly) {
        let mut r = MetricsRecord::empty(id, seed, Method::DcOnly, None);
        match dc.as_ref().expect("dc ran") {
            Ok(d) => {
                r.solve_time_s = d.time;
                r.status = format!("{:?}", d.status).to_lowercase();
                let x = r.score(&model, d.values.clone());
                obs(&SolutionView {
                    model: &model,
                    record: &r,
                    values: &x,
                    warm_start: None,
                    dc: Some(d),
                });
            }
            Err(e) => r.status = format!("error: {e}"),
        }
        out.push(r);
    }

    if cfg.methods.contains(&Method::TwoStage) {
        for &delta in &cfg.deltas {
            let mut r = MetricsRecord::empty(id, seed, Method::TwoStage, Some(delta));
            match dc.as_ref().expect("dc ran") {
                Ok(d) => {
                    let t = Instant::now();
                    match run_stage_two(&model.program, d, &cfg.tr_config(delta), &cfg.bnb) {
                        Ok(o) => {
                            r.status = o.status.to_string();
                            r.proved_optimal = o.stage2_proved;
                            r.delta_used = Some(o.delta_used);
                            r.flip_count = Some(o.flip_count);
                            r.nodes = Some(o.stage2_nodes);
                            let x = r.score(&model, o.values);
                            obs(&SolutionView {
                                model: &model,
                                record: &r,
                                values: &x,
                                warm_start: Some(&o.warm_start),
                                dc: Some(d),
                            });
                        }
                        Err(e) => r.status = format!("error: {e}"),
                    }
                    r.solve_time_s = d.time + t.elapsed().as_secs_f64();
                }
                Err(e) => r.status = format!("error: {e}"),
            }
            out.push(r);
        }
    }

    if let Some((obj, cg, cev)) = baseline {
        for r in out.iter_mut().filter(|r| r.method != Method::Baseline && r.feasible) {
            r.gap_pct = r.objective.map(|x| gap(x, obj));
            r.gap_c_g_pct = r.c_g.map(|x| gap(x, cg));
            r.gap_c_ev_pct = r.c_ev.map(|x| gap(x, cev));
        }
        if let Some(b) = out.iter_mut().find(|r| r.method == Method::Baseline) {
            b.gap_pct = Some(0.0);
            b.gap_c_g_pct = Some(0.0);
            b.gap_c_ev_pct = Some(0.0);
        }
    }
    for r in &out {
        log::info!(
            "sample {id} {}{}: {} obj {:?} {:.2}s",
            r.method,
            r.delta.map_or(String::new(), |d| format!(" delta {d}")),
            r.status,
            r.objective,
            r.solve_time_s
        );
    }
    out
}

/// Aggregates for one (method, radius) group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub method: Method,
    pub delta: Option<usize>,
    pub n: usize,
    pub n_feasible: usize,
    /// `N_f / N`, in percent.
    pub feasibility_ratio: f64,
    pub mean_objective: Option<f64>,
    pub mean_c_g: Option<f64>,
    pub mean_c_ev: Option<f64>,
    /// Mean of per-sample gaps over samples with a proved baseline.
    pub mean_gap_pct: Option<f64>,
    pub mean_gap_c_g_pct: Option<f64>,
    pub mean_gap_c_ev_pct: Option<f64>,
    /// Gap between this group's mean objective and the baseline's, over
    /// the same samples.
    pub gap_of_means_pct: Option<f64>,
    pub n_scored: usize,
    pub mean_time_s: f64,
    pub median_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub samples: usize,
    pub groups: Vec<GroupSummary>,
    pub baseline_unproved: usize,
    /// Median baseline time over median two-stage time, per radius.
    pub speedup: BTreeMap<String, f64>,
    /// `1 - t_two_stage / t_baseline` on medians, in percent.
    pub time_reduction_pct: BTreeMap<String, f64>,
    #[serde(skip)]
    pub records: Vec<MetricsRecord>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl ExperimentReport {
    /// Pure fold over per-sample records.
    pub fn from_records(records: Vec<MetricsRecord>) -> Self {
        let samples = records
            .iter()
            .map(|r| r.sample)
            .collect::<std::collections::BTreeSet<_>>()
            .len();
        let mut keys: Vec<(Method, Option<usize>)> = records.iter().map(|r| (r.method, r.delta)).collect();
        keys.sort();
        keys.dedup();

        let baseline: BTreeMap<usize, &MetricsRecord> = records
            .iter()
            .filter(|r| r.method == Method::Baseline && r.proved_optimal)
            .map(|r| (r.sample, r))
            .collect();

        let mut groups = Vec::new();
        for (method, delta) in keys {
            let rs: Vec<&MetricsRecord> = records
                .iter()
                .filter(|r| r.method == method && r.delta == delta)
                .collect();
            let feas: Vec<&&MetricsRecord> = rs.iter().filter(|r| r.feasible).collect();
            let col =
                |f: &dyn Fn(&MetricsRecord) -> Option<f64>| -> Vec<f64> { feas.iter().filter_map(|r| f(r)).collect() };
            let scored: Vec<&&MetricsRecord> = feas.iter().filter(|r| r.gap_pct.is_some()).copied().collect();
            let gap_of_means = {
                let mine: Vec<f64> = scored.iter().filter_map(|r| r.objective).collect();
                let base: Vec<f64> = scored
                    .iter()
                    .filter_map(|r| baseline.get(&r.sample).and_then(|b| b.objective))
                    .collect();
                match (mean(&mine), mean(&base)) {
                    (Some(a), Some(b)) if mine.len() == base.len() => Some(gap(a, b)),
                    _ => None,
                }
            };
            let times: Vec<f64> = rs.iter().map(|r| r.solve_time_s).collect();
            groups.push(GroupSummary {
                method,
                delta,
                n: rs.len(),
                n_feasible: feas.len(),
                feasibility_ratio: if rs.is_empty() {
                    0.0
                } else {
                    100.0 * feas.len() as f64 / rs.len() as f64
                },
                mean_objective: mean(&col(&|r| r.objective)),
                mean_c_g: mean(&col(&|r| r.c_g)),
                mean_c_ev: mean(&col(&|r| r.c_ev)),
                mean_gap_pct: mean(&col(&|r| r.gap_pct)),
                mean_gap_c_g_pct: mean(&col(&|r| r.gap_c_g_pct)),
                mean_gap_c_ev_pct: mean(&col(&|r| r.gap_c_ev_pct)),
                gap_of_means_pct: gap_of_means,
                n_scored: scored.len(),
                mean_time_s: mean(&times).unwrap_or(f64::NAN),
                median_time_s: median(&times),
            });
        }

        let base_median = groups
            .iter()
            .find(|g| g.method == Method::Baseline)
            .map(|g| g.median_time_s);
        let mut speedup = BTreeMap::new();
        let mut reduction = BTreeMap::new();
        if let Some(b) = base_median {
            for g in groups.iter().filter(|g| g.method == Method::TwoStage) {
                let key = format!("delta_{}", g.delta.unwrap_or(0));
                speedup.insert(key.clone(), b / g.median_time_s);
                reduction.insert(key, 100.0 * (1.0 - g.median_time_s / b));
            }
        }
        let baseline_unproved = records
            .iter()
            .filter(|r| r.method == Method::Baseline && !r.proved_optimal)
            .count();
        Self {
            samples,
            groups,
            baseline_unproved,
            speedup,
            time_reduction_pct: reduction,
            records,
        }
    }

    pub fn group(&self, method: Method, delta: Option<usize>) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| g.method == method && g.delta == delta)
    }

    /// Writes `records.csv`, `timings.csv`, `report.json` and
    /// `solve_times.svg` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_records(&dir.join("records.csv"), &self.records)?;
        let mut w = csv::Writer::from_path(dir.join("timings.csv"))?;
        for r in &self.records {
            w.serialize(r.timing())?;
        }
        w.flush()?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        std::fs::write(dir.join("solve_times.svg"), time_chart(&self.records))?;
        Ok(())
    }

    /// Rebuilds a report from `records.csv` (and `timings.csv` if present).
    pub fn read(dir: &Path) -> Result<Self> {
        let mut records = read_records(&dir.join("records.csv"))?;
        let tpath = dir.join("timings.csv");
        if tpath.exists() {
            let mut rdr = csv::Reader::from_path(&tpath)?;
            let mut times = BTreeMap::new();
            for t in rdr.deserialize::<TimingRecord>() {
                let t = t?;
                times.insert((t.sample, t.method, t.delta), t.solve_time_s);
            }
            for r in &mut records {
                if let Some(&s) = times.get(&(r.sample, r.method, r.delta)) {
                    r.solve_time_s = s;
                }
            }
        }
        Ok(Self::from_records(records))
    }
}

pub fn write_records(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for r in rdr.deserialize() {
        out.push(r.map_err(|e| Error::schema(path, e.to_string()))?);
    }
    Ok(out)
}

/// Line chart of per-sample wall time, one line per method and radius.
pub fn time_chart(records: &[MetricsRecord]) -> String {
    let (w, h, pad) = (640.0, 360.0, 48.0);
    let mut series: BTreeMap<(Method, Option<usize>), Vec<(usize, f64)>> = BTreeMap::new();
    for r in records {
        series
            .entry((r.method, r.delta))
            .or_default()
            .push((r.sample, r.solve_time_s));
    }
    let max_x = records.iter().map(|r| r.sample).max().unwrap_or(0).max(1) as f64;
    let max_y = records.iter().map(|r| r.solve_time_s).fold(0.0, f64::max).max(1e-3);
    let px = |x: usize| pad + x as f64 / max_x * (w - 2.0 * pad);
    let py = |y: f64| h - pad - y / max_y * (h - 2.0 * pad);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <line x1=\"{pad}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <text x=\"{cx}\" y=\"{lx}\" text-anchor=\"middle\">sample</text>\n\
         <text x=\"12\" y=\"{pad}\">time (s), max {max_y:.2}</text>\n",
        b = h - pad,
        r = w - pad,
        cx = w / 2.0,
        lx = h - 12.0,
    );
    for (k, ((method, delta), pts)) in series.iter().enumerate() {
        let color = colors[k % colors.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
        let label = match delta {
            Some(d) => format!("{method} (delta {d})"),
            None => method.to_string(),
        };
        svg += &format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n\
             <text x=\"{}\" y=\"{}\" fill=\"{color}\">{label}</text>\n",
            path.join(" "),
            w - pad - 150.0,
            pad + 16.0 * k as f64,
        );
    }
    svg + "</svg>\n"
}

/// Generates the samples and runs every method on each.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    run_experiment_observed(cfg, &ignore)
}

/// As [`run_experiment`], handing every scored solution to `obs`.
pub fn run_experiment_observed(cfg: &ExperimentConfig, obs: Observer) -> Result<ExperimentReport> {
    cfg.spec.validate()?;
    cfg.bnb.validate()?;
    let work = |i: usize| -> Vec<MetricsRecord> {
        let seed = cfg.spec.seed.wrapping_add(i as u64);
        match generate_sample(&cfg.spec, seed) {
            Ok(s) => run_sample_observed(cfg, i, &s, obs),
            Err(e) => {
                log::error!("sample {i}: {e}");
                let mut r = MetricsRecord::empty(i, seed, Method::Baseline, None);
                r.status = format!("sample_error: {e}");
                vec![r]
            }
        }
    };
    let per_sample: Vec<Vec<MetricsRecord>> = if cfg.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::Invariant(format!("thread pool: {e}")))?;
        pool.install(|| (0..cfg.samples).into_par_iter().map(work).collect())
    } else {
        (0..cfg.samples).map(work).collect()
    };
    Ok(ExperimentReport::from_records(
        per_sample.into_iter().flatten().collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_values() {
        assert_eq!(gap(5.0, 5.0), 0.0);
        assert_eq!(gap(0.0, 0.0), 0.0);
        assert!((gap(3070.734, 3070.656) - 0.00254).abs() < 1e-5);
        assert!((gap(-2.0, -4.0) - 50.0).abs() < 1e-6);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    fn rec(sample: usize, method: Method, obj: f64, feasible: bool, t: f64) -> MetricsRecord {
        let mut r = MetricsRecord::empty(sample, sample as u64, method, None);
        r.objective = Some(obj);
        r.c_g = Some(obj - 1.0);
        r.c_ev = Some(1.0);
        r.feasible = feasible;
        r.solve_time_s = t;
        if method == Method::Baseline {
            r.proved_optimal = true;
            r.gap_pct = Some(0.0);
        } else {
            r.delta = Some(2);
            r.gap_pct = Some(gap(obj, 100.0));
        }
        r
    }

    #[test]
    fn report_folds_records() {
        let records = vec![
            rec(0, Method::Baseline, 100.0, true, 10.0),
            rec(0, Method::TwoStage, 101.0, true, 1.0),
            rec(1, Method::Baseline, 100.0, true, 30.0),
            rec(1, Method::TwoStage, 100.0, false, 3.0),
        ];
        let rep = ExperimentReport::from_records(records);
        assert_eq!(rep.samples, 2);
        let ts = rep.group(Method::TwoStage, Some(2)).unwrap();
        assert_eq!(ts.feasibility_ratio, 50.0);
        assert_eq!(ts.n_scored, 1);
        assert!((ts.mean_gap_pct.unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(rep.speedup["delta_2"], 20.0 / 2.0);
    }

    #[test]
    fn csv_round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![
            rec(0, Method::Baseline, 100.0, true, 10.0),
            rec(0, Method::TwoStage, 101.0, true, 1.0),
        ];
        let rep = ExperimentReport::from_records(records.clone());
        rep.write(dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("records.csv")).unwrap();
        assert!(text.starts_with(
            "sample,seed,method,delta,status,objective,c_g,c_ev,gap_pct,gap_c_g_pct,gap_c_ev_pct,feasible,proved_optimal,delta_used,flip_count,nodes\n"
        ));
        let back = ExperimentReport::read(dir.path()).unwrap();
        assert_eq!(back.records, records);
        assert_eq!(back.groups, rep.groups);
        assert!(std::fs::read_to_string(dir.path().join("solve_times.svg"))
            .unwrap()
            .starts_with("<svg"));
    }
}
