//! Simulation grid runner, performance measures, closed-form calculators and
//! report output.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyze::{
    ancova, ancova_full, ci_halfwidth, mmrm, rubin_pool, AnalysisError, Component, EstimateTriple, MmrmData,
    PooledEstimate,
};
use crate::mi::{impute, ImputationConfig};
use crate::modelspec::{builtin_spec, ModelName};
use crate::trialgen::{generate_trial, true_estimand, DgmParams, Scenario, TrialError, TrueEstimand, VISITS};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("nothing to report")]
    EmptyReport,
    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),
    #[error(transparent)]
    Trial(#[from] TrialError),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

/// An analysis applied to each replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AnalysisModel {
    /// ANCOVA on the complete treatment-policy data, before withdrawal.
    Full,
    Mmrm,
    Mi(ModelName),
}

impl AnalysisModel {
    pub fn all() -> Vec<AnalysisModel> {
        let mut v = vec![AnalysisModel::Full, AnalysisModel::Mmrm];
        v.extend(ModelName::ALL.into_iter().map(AnalysisModel::Mi));
        v
    }

    pub fn code(self) -> u64 {
        match self {
            AnalysisModel::Full => 100,
            AnalysisModel::Mmrm => 101,
            AnalysisModel::Mi(m) => m.code(),
        }
    }
}

impl fmt::Display for AnalysisModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnalysisModel::Full => f.write_str("FULL"),
            AnalysisModel::Mmrm => f.write_str("MMRM"),
            AnalysisModel::Mi(m) => m.fmt(f),
        }
    }
}

impl FromStr for AnalysisModel {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "FULL" => Ok(AnalysisModel::Full),
            "MMRM" => Ok(AnalysisModel::Mmrm),
            other => other
                .parse::<ModelName>()
                .map(AnalysisModel::Mi)
                .map_err(|_| HarnessError::Config(format!("unknown model {s:?}"))),
        }
    }
}

impl Serialize for AnalysisModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AnalysisModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Full,
}

impl FromStr for Profile {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Profile::Desk),
            "full" => Ok(Profile::Full),
            _ => Err(HarnessError::Config(format!("unknown profile {s:?}"))),
        }
    }
}

/// Twelve grid cells covering both trajectories, all mechanisms, rates and
/// withdrawal balances.
pub const DESK_SCENARIOS: [u32; 12] = [1, 18, 30, 20, 11, 34, 40, 54, 65, 71, 47, 60];

/// Default seed of the simulation grid.
pub const DEFAULT_SEED: u64 = 20_240_917;

/// Scenario overrides read from JSON: replacement DGM parameters for every
/// grid cell (missing fields keep their defaults) and extra custom cells.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    pub dgm: Option<DgmParams>,
    /// Custom cells, numbered from [`CUSTOM_SCENARIO_BASE`] + 1.
    pub scenarios: Vec<Scenario>,
}

pub const CUSTOM_SCENARIO_BASE: u32 = 1000;

impl Overrides {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let o: Overrides = serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("overrides: {e}")))?;
        if let Some(d) = &o.dgm {
            d.validate()?;
        }
        for s in &o.scenarios {
            s.validate()?;
        }
        Ok(o)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenarios: Vec<u32>,
    pub n_sims: usize,
    pub models: Vec<AnalysisModel>,
    pub imputations: usize,
    pub seed: u64,
    pub threads: usize,
    pub out_dir: Option<PathBuf>,
    pub overrides: Overrides,
}

impl RunConfig {
    pub fn profile(p: Profile) -> Self {
        let (scenarios, n_sims) = match p {
            Profile::Desk => (DESK_SCENARIOS.to_vec(), 250),
            Profile::Full => ((1..=crate::trialgen::GRID_SIZE).collect(), 1000),
        };
        Self {
            scenarios,
            n_sims,
            models: AnalysisModel::all(),
            imputations: 25,
            seed: DEFAULT_SEED,
            threads: 0,
            out_dir: None,
            overrides: Overrides::default(),
        }
    }

    /// Resolve scenario ids to cells, applying overrides.
    pub fn resolve_scenarios(&self) -> Result<Vec<(u32, Scenario)>, HarnessError> {
        let mut out = Vec::new();
        for &id in &self.scenarios {
            let s = if id > CUSTOM_SCENARIO_BASE {
                self.overrides
                    .scenarios
                    .get((id - CUSTOM_SCENARIO_BASE - 1) as usize)
                    .cloned()
                    .ok_or_else(|| HarnessError::Config(format!("no custom scenario {id}")))?
            } else {
                let mut s = Scenario::from_id(id)?;
                if let Some(d) = &self.overrides.dgm {
                    s.dgm = d.clone();
                }
                s
            };
            s.validate()?;
            s.dgm.validate()?;
            out.push((id, s));
        }
        Ok(out)
    }

    /// Models in run order with FULL first.
    pub fn run_models(&self) -> Vec<AnalysisModel> {
        let mut models = vec![AnalysisModel::Full];
        for m in &self.models {
            if !models.contains(m) {
                models.push(*m);
            }
        }
        models
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.scenarios.is_empty() {
            return Err(HarnessError::Config("no scenarios selected".into()));
        }
        if self.n_sims == 0 {
            return Err(HarnessError::Config("n_sims must be positive".into()));
        }
        let needs_mi = self.models.iter().any(|m| matches!(m, AnalysisModel::Mi(_)));
        if needs_mi && self.imputations < 2 {
            return Err(HarnessError::Config("pooling needs at least 2 imputations".into()));
        }
        Ok(())
    }
}

/// Pooled estimates of one model on one replicate, in `Component::ALL`
/// order, or the reason the model did not produce stable estimates.
pub type ModelOutcome = Result<[PooledEstimate; 3], String>;

#[derive(Debug, Clone)]
pub struct ReplicateOutcome {
    pub replicate: u64,
    pub results: Vec<(AnalysisModel, ModelOutcome)>,
}

/// "Stable": converged, finite and not absurdly large, positive variance.
fn stable(p: [PooledEstimate; 3]) -> ModelOutcome {
    let effect = p[0];
    if !(effect.point.abs() < 1e6) {
        return Err(format!("unstable effect {}", effect.point));
    }
    if p.iter().any(|e| !(e.total_var > 0.0) || !e.point.is_finite()) {
        return Err("non-positive total variance".into());
    }
    Ok(p)
}

fn singles(t: EstimateTriple) -> [PooledEstimate; 3] {
    Component::ALL.map(|c| PooledEstimate::single(t.get(c)))
}

/// Run every model of `models` on one replicate of a scenario.
pub fn run_replicate(
    scenario_id: u32,
    scenario: &Scenario,
    replicate: u64,
    models: &[AnalysisModel],
    imputations: usize,
    seed: u64,
) -> Result<ReplicateOutcome, HarnessError> {
    let ds = generate_trial(scenario_id, scenario, replicate, seed)?;
    let complete_df = (ds.subjects.len() - 3) as f64;
    let results = models
        .iter()
        .map(|&model| {
            let r = match model {
                AnalysisModel::Full => ancova_full(&ds, VISITS).map(singles).map_err(|e| e.to_string()),
                AnalysisModel::Mmrm => MmrmData::from_dataset(&ds)
                    .and_then(|d| mmrm(&d))
                    .map(|f| singles(f.estimates))
                    .map_err(|e| e.to_string()),
                AnalysisModel::Mi(name) => {
                    let cfg = ImputationConfig {
                        m: imputations,
                        seed,
                        ..Default::default()
                    };
                    pooled_mi(&ds, name, &cfg, complete_df)
                }
            };
            (model, r.and_then(stable))
        })
        .collect();
    Ok(ReplicateOutcome { replicate, results })
}

fn pooled_mi(
    ds: &crate::trialgen::TrialDataset,
    name: ModelName,
    cfg: &ImputationConfig,
    complete_df: f64,
) -> ModelOutcome {
    let completed = impute(ds, &builtin_spec(name), cfg).map_err(|e| e.to_string())?;
    if let Some(f) = completed.first_failure() {
        return Err(f.to_string());
    }
    let fits: Vec<EstimateTriple> = completed
        .copies
        .iter()
        .map(|c| ancova(&completed.arms, &c.column(0), &c.column(VISITS)))
        .collect::<Result<_, AnalysisError>>()
        .map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(3);
    for c in Component::ALL {
        let per_copy: Vec<(f64, f64)> = fits.iter().map(|t| (t.get(c).point, t.get(c).variance)).collect();
        out.push(rubin_pool(&per_copy, complete_df).map_err(|e| e.to_string())?);
    }
    Ok([out[0], out[1], out[2]])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scenario_id: u32,
    pub model: AnalysisModel,
    pub estimand: String,
    pub n_sims: usize,
    pub conv_rate: f64,
    pub bias: Option<f64>,
    pub mcse_bias: Option<f64>,
    pub mean_halfwidth: Option<f64>,
    pub halfwidth_change_vs_full: Option<f64>,
    pub coverage: Option<f64>,
    pub mcse_coverage: Option<f64>,
}

impl MetricsRow {
    pub fn component(&self) -> Option<Component> {
        Component::parse(&self.estimand)
    }
}

/// Fraction of intervals containing `truth` and its Monte Carlo SE.
pub fn coverage(intervals: &[(f64, f64)], truth: f64) -> (f64, f64) {
    let n = intervals.len() as f64;
    let hits = intervals.iter().filter(|(lo, hi)| *lo <= truth && truth <= *hi).count() as f64;
    let p = hits / n;
    (p, (p * (1.0 - p) / n).sqrt())
}

fn truth_of(t: &TrueEstimand, c: Component) -> f64 {
    match c {
        Component::Effect => t.effect,
        Component::MeanControl => t.mean_change_control,
        Component::MeanActive => t.mean_change_active,
    }
}

/// Aggregate replicate outcomes of one scenario into metrics rows.
pub fn aggregate(
    scenario_id: u32,
    truth: &TrueEstimand,
    models: &[AnalysisModel],
    outcomes: &[ReplicateOutcome],
) -> Vec<MetricsRow> {
    let n_sims = outcomes.len();
    let mut rows = Vec::new();
    let mut full_halfwidth = [None; 3];
    for (k, &model) in models.iter().enumerate() {
        for (ci, c) in Component::ALL.into_iter().enumerate() {
            let est: Vec<PooledEstimate> = outcomes
                .iter()
                .filter_map(|o| o.results[k].1.as_ref().ok().map(|p| p[ci]))
                .collect();
            let n = est.len();
            let conv_rate = n as f64 / n_sims as f64;
            let t = truth_of(truth, c);
            let (mut bias, mut mcse_bias, mut mean_halfwidth, mut cov, mut mcse_cov) = (None, None, None, None, None);
            if n > 0 {
                let nf = n as f64;
                let mean = est.iter().map(|e| e.point).sum::<f64>() / nf;
                bias = Some(mean - t);
                if n > 1 {
                    let var = est.iter().map(|e| (e.point - mean).powi(2)).sum::<f64>() / (nf - 1.0);
                    mcse_bias = Some((var / nf).sqrt());
                }
                mean_halfwidth = Some(est.iter().map(ci_halfwidth).sum::<f64>() / nf);
                let intervals: Vec<(f64, f64)> = est.iter().map(|e| (e.ci_low, e.ci_high)).collect();
                let (p, se) = coverage(&intervals, t);
                cov = Some(p);
                mcse_cov = Some(se);
            }
            if model == AnalysisModel::Full {
                full_halfwidth[ci] = mean_halfwidth;
            }
            let change = match (mean_halfwidth, full_halfwidth[ci]) {
                (Some(h), Some(f)) if f > 0.0 => Some(if model == AnalysisModel::Full {
                    0.0
                } else {
                    100.0 * (h / f - 1.0)
                }),
                _ => None,
            };
            rows.push(MetricsRow {
                scenario_id,
                model,
                estimand: c.as_str().to_string(),
                n_sims,
                conv_rate,
                bias,
                mcse_bias,
                mean_halfwidth,
                halfwidth_change_vs_full: change,
                coverage: cov,
                mcse_coverage: mcse_cov,
            });
        }
    }
    rows
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Replicate outcomes of every selected scenario, in (scenario, replicate)
/// order.
pub fn run_outcomes(cfg: &RunConfig) -> Result<Vec<(u32, Scenario, Vec<ReplicateOutcome>)>, HarnessError> {
    cfg.validate()?;
    let scenarios = cfg.resolve_scenarios()?;
    let models = cfg.run_models();
    let mut out = Vec::with_capacity(scenarios.len());
    for (id, scenario) in scenarios {
        let start = std::time::Instant::now();
        let outcomes: Result<Vec<ReplicateOutcome>, HarnessError> = with_pool(cfg.threads, || {
            (0..cfg.n_sims as u64)
                .into_par_iter()
                .map(|r| run_replicate(id, &scenario, r, &models, cfg.imputations, cfg.seed))
                .collect()
        })?;
        log::info!("scenario {id} ({}): {:.1?}", scenario.label(), start.elapsed());
        out.push((id, scenario, outcomes?));
    }
    Ok(out)
}

/// Run the grid and return one metrics row per (scenario, model, estimand).
pub fn run_grid(cfg: &RunConfig) -> Result<Vec<MetricsRow>, HarnessError> {
    let models = cfg.run_models();
    let outcomes = run_outcomes(cfg)?;
    Ok(outcomes
        .iter()
        .flat_map(|(id, s, o)| aggregate(*id, &true_estimand(s, VISITS), &models, o))
        .collect())
}

/// Common-MAR bias of one arm's mean change: completers on treatment
/// (`n1`, mean `mu1`) and observed discontinuers (`n2`, mean `mu2`), with as
/// many discontinuers missing as observed.
pub fn theory_bias(n1: f64, n2: f64, mu1: f64, mu2: f64) -> f64 {
    n1 * n2 * (mu1 - mu2) / ((n1 + n2) * (n1 + 2.0 * n2))
}

/// Relative variance increase of an arm mean when `n3` of the `n2 + n3`
/// discontinuers are missing.
pub fn theory_var_inflation(n1: f64, n2: f64, n3: f64) -> Result<f64, HarnessError> {
    if n2 == 0.0 {
        return Err(HarnessError::DivisionByZero("n2 = 0"));
    }
    let n = n1 + n2 + n3;
    Ok(n3 / n * (1.0 + n3 / n2))
}

/// Arm-mean inflation at a discontinuation rate with a fraction
/// `withdrawal` of discontinuers missing.
pub fn theory_rate_inflation(disc_rate: f64, withdrawal: f64) -> Result<f64, HarnessError> {
    theory_var_inflation(1.0 - disc_rate, disc_rate * (1.0 - withdrawal), disc_rate * withdrawal)
}

/// Treatment-effect inflation: the average of the two arms' inflations,
/// assuming independent arms with equal variance.
pub fn theory_effect_inflation(rate_control: f64, rate_active: f64, withdrawal: f64) -> Result<f64, HarnessError> {
    Ok((theory_rate_inflation(rate_control, withdrawal)? + theory_rate_inflation(rate_active, withdrawal)?) / 2.0)
}

pub const METRICS_FILE: &str = "metrics.csv";

pub fn write_metrics_csv(rows: &[MetricsRow], path: &Path) -> Result<(), HarnessError> {
    let csv_err = |e: csv::Error| HarnessError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>, HarnessError> {
    let csv_err = |e: csv::Error| HarnessError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// Write `metrics.csv` and one effect heatmap per trajectory into `out_dir`.
pub fn report(rows: &[MetricsRow], out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let csv_path = out_dir.join(METRICS_FILE);
    write_metrics_csv(rows, &csv_path)?;
    let mut written = vec![csv_path];
    for trajectory in crate::trialgen::Trajectory::ALL {
        let subset: Vec<&MetricsRow> = rows
            .iter()
            .filter(|r| r.component() == Some(Component::Effect))
            .filter(|r| scenario_trajectory(r.scenario_id) == Some(trajectory))
            .collect();
        if subset.is_empty() {
            continue;
        }
        let path = out_dir.join(format!("heatmap_{}.svg", trajectory.short()));
        fs::write(&path, heatmap_svg(&subset, &trajectory.to_string())).map_err(|e| HarnessError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

fn scenario_trajectory(id: u32) -> Option<crate::trialgen::Trajectory> {
    Scenario::from_id(id).ok().map(|s| s.trajectory)
}

fn scenario_label(id: u32) -> String {
    Scenario::from_id(id)
        .map(|s| format!("{id}: {}", s.label()))
        .unwrap_or_else(|_| format!("{id}: custom"))
}

#[derive(Clone, Copy)]
enum Panel {
    Bias,
    HalfwidthChange,
    Coverage,
}

impl Panel {
    const ALL: [Panel; 3] = [Panel::Bias, Panel::HalfwidthChange, Panel::Coverage];

    fn title(self) -> &'static str {
        match self {
            Panel::Bias => "Bias (mL)",
            Panel::HalfwidthChange => "Change in 95% CI halfwidth vs FULL (%)",
            Panel::Coverage => "95% CI coverage",
        }
    }

    fn value(self, r: &MetricsRow) -> Option<f64> {
        match self {
            Panel::Bias => r.bias,
            Panel::HalfwidthChange => r.halfwidth_change_vs_full,
            Panel::Coverage => r.coverage,
        }
    }

    fn text(self, v: f64) -> String {
        match self {
            Panel::Bias => format!("{v:.1}"),
            Panel::HalfwidthChange => format!("{v:.0}"),
            Panel::Coverage => format!("{:.1}", 100.0 * v),
        }
    }

    /// Fill colour: white at the ideal value, deeper with distance.
    fn colour(self, v: f64) -> String {
        let (t, warm) = match self {
            Panel::Bias => ((v.abs() / 40.0).min(1.0), v > 0.0),
            Panel::HalfwidthChange => ((v.abs() / 60.0).min(1.0), v > 0.0),
            Panel::Coverage => (((0.95 - v).abs() / 0.15).min(1.0), v > 0.95),
        };
        let fade = |c: f64| (255.0 - t * (255.0 - c)).round() as u8;
        let (r, g, b) = if warm { (214.0, 96.0, 77.0) } else { (67.0, 147.0, 195.0) };
        format!("#{:02x}{:02x}{:02x}", fade(r), fade(g), fade(b))
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Heatmap with scenarios as rows and models as columns, one panel each for
/// bias, halfwidth change and coverage.
pub fn heatmap_svg(rows: &[&MetricsRow], title: &str) -> String {
    let mut scenarios: Vec<u32> = rows.iter().map(|r| r.scenario_id).collect();
    scenarios.sort_unstable();
    scenarios.dedup();
    let mut models: Vec<AnalysisModel> = rows.iter().map(|r| r.model).collect();
    models.sort_unstable();
    models.dedup();

    let (cell_w, cell_h, label_w, top) = (52.0, 20.0, 260.0, 70.0);
    let panel_w = label_w + cell_w * models.len() as f64 + 30.0;
    let width = panel_w * 3.0;
    let height = top + cell_h * scenarios.len() as f64 + 20.0;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    s.push_str(&format!(
        "<text x=\"10\" y=\"18\" font-size=\"15\">{}</text>\n",
        escape(&format!("Treatment effect: {title}"))
    ));
    for (p, panel) in Panel::ALL.into_iter().enumerate() {
        let x0 = p as f64 * panel_w;
        s.push_str(&format!(
            "<text x=\"{}\" y=\"40\" font-size=\"13\">{}</text>\n",
            x0 + 10.0,
            escape(panel.title())
        ));
        for (j, m) in models.iter().enumerate() {
            s.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{m}</text>\n",
                x0 + label_w + cell_w * (j as f64 + 0.5),
                top - 6.0
            ));
        }
        for (i, id) in scenarios.iter().enumerate() {
            let y = top + cell_h * i as f64;
            s.push_str(&format!(
                "<text x=\"{}\" y=\"{}\">{}</text>\n",
                x0 + 10.0,
                y + 14.0,
                escape(&scenario_label(*id))
            ));
            for (j, m) in models.iter().enumerate() {
                let x = x0 + label_w + cell_w * j as f64;
                let v = rows
                    .iter()
                    .find(|r| r.scenario_id == *id && r.model == *m)
                    .and_then(|r| panel.value(r));
                let (fill, text) = match v {
                    Some(v) => (panel.colour(v), panel.text(v)),
                    None => ("#bbbbbb".to_string(), "NA".to_string()),
                };
                s.push_str(&format!(
                    "<rect class=\"cell\" x=\"{x}\" y=\"{y}\" width=\"{cell_w}\" height=\"{cell_h}\" fill=\"{fill}\" stroke=\"#ffffff\"/>\n"
                ));
                s.push_str(&format!(
                    "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{text}</text>\n",
                    x + cell_w / 2.0,
                    y + 14.0
                ));
            }
        }
    }
    s.push_str("</svg>\n");
    s
}
