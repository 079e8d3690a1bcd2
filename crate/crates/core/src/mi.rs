//! Sequential monotone multiple imputation.
//!
//! For each copy, each by-group and each visit in turn, the visit's formula
//! is fitted on the rows where the response is observed, the regression
//! parameters are drawn from their posterior, and the missing responses are
//! imputed from the drawn regression plus noise. Residual models also carry
//! the centred columns `R_0..R_2` forward, recomputed from the drawn
//! parameters of each copy.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modelspec::{
    derive_vars, ByGroups, DerivedVars, DesignLayout, Formula, ModelName, ModelSpec,
    OutcomeRow, SpecError, VarRef, VariableSource,
};
use crate::statcore::{bayes_regression_draw, ols_fit, RngStream, StatError};
use crate::trialgen::{fmt_value, Arm, TrialDataset, VISITS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImputationConfig {
    pub m: usize,
    pub seed: u64,
    pub min_resid_df: usize,
    pub sigma_floor: f64,
}

impl Default for ImputationConfig {
    fn default() -> Self {
        Self {
            m: 25,
            seed: 20_240_917,
            min_resid_df: 1,
            sigma_floor: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ImputeError {
    #[error("model {0}: {1}")]
    Spec(ModelName, SpecError),
    #[error("at least one imputation copy is required")]
    NoCopies,
}

/// Why one regression step could not be used.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFailure {
    pub copy: usize,
    pub group: String,
    pub visit: usize,
    pub reason: String,
}

impl fmt::Display for StepFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "copy {} group {} visit {}: {}",
            self.copy, self.group, self.visit, self.reason
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CopyStatus {
    Ok,
    Failed(StepFailure),
}

impl CopyStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, CopyStatus::Ok)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostic {
    pub copy: usize,
    pub group: String,
    pub visit: usize,
    pub rows_used: usize,
    pub rank: usize,
    pub residual_df: usize,
}

/// One imputed copy: outcomes `Y0..Y3` per subject in dataset order, plus
/// the residual columns for residual models.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletedCopy {
    pub outcomes: Vec<[f64; 4]>,
    pub residuals: Option<Vec<[f64; VISITS]>>,
}

impl CompletedCopy {
    pub fn column(&self, visit: usize) -> Vec<f64> {
        self.outcomes.iter().map(|y| y[visit]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct CompletedData {
    pub model: ModelName,
    pub arms: Vec<Arm>,
    pub copies: Vec<CompletedCopy>,
    pub status: Vec<CopyStatus>,
    pub diagnostics: Vec<StepDiagnostic>,
}

impl CompletedData {
    pub fn all_ok(&self) -> bool {
        self.status.iter().all(CopyStatus::is_ok)
    }

    pub fn first_failure(&self) -> Option<&StepFailure> {
        self.status.iter().find_map(|s| match s {
            CopyStatus::Failed(f) => Some(f),
            CopyStatus::Ok => None,
        })
    }

    pub fn ok_copies(&self) -> impl Iterator<Item = &CompletedCopy> {
        self.copies
            .iter()
            .zip(&self.status)
            .filter(|(_, s)| s.is_ok())
            .map(|(c, _)| c)
    }
}

/// Random-stream domain for imputation, distinct from the generator's.
const DOMAIN_IMPUTE: u64 = 10;

struct Group {
    label: String,
    members: Vec<usize>,
}

fn by_groups(dataset: &TrialDataset, vars: &[DerivedVars], by: ByGroups) -> Vec<Group> {
    let mut map: BTreeMap<(usize, String), Vec<usize>> = BTreeMap::new();
    for (i, s) in dataset.subjects.iter().enumerate() {
        let pattern = match by {
            ByGroups::Arm => String::new(),
            ByGroups::ArmFinalPattern => vars[i].final_pattern(),
        };
        map.entry((s.arm.index(), pattern)).or_default().push(i);
    }
    map.into_iter()
        .map(|((arm, pattern), members)| {
            let arm = Arm::BOTH[arm];
            let label = if pattern.is_empty() {
                arm.to_string()
            } else {
                format!("{arm}/{pattern}")
            };
            Group { label, members }
        })
        .collect()
}

/// Sum of the intercept and class-level coefficients that apply to `src`:
/// the centering used for residual columns.
pub fn update_residual<S: VariableSource>(
    layout: &DesignLayout,
    coefficients: &[f64],
    src: &S,
    y: f64,
) -> Result<f64, SpecError> {
    Ok(y - layout.intercept_part(src, coefficients)?)
}

struct StepOutcome {
    layout: DesignLayout,
    draw: DVector<f64>,
    sigma: f64,
    diag: (usize, usize, usize),
}

/// Fit one step on `fit_rows` and draw its parameters.
fn fit_and_draw(
    formula: &Formula,
    rows: &[OutcomeRow],
    fit_rows: &[usize],
    min_resid_df: usize,
    sigma_floor: f64,
    rng: &mut RngStream,
) -> Result<StepOutcome, String> {
    if fit_rows.is_empty() {
        return Err("no rows with an observed response".into());
    }
    let fit: Vec<OutcomeRow> = fit_rows.iter().map(|&i| rows[i]).collect();
    let layout = DesignLayout::for_rows(formula, &fit).map_err(|e| e.to_string())?;
    let x = layout.matrix(&fit).map_err(|e| e.to_string())?;
    let response = VarRef::new(&formula.response);
    let y = DVector::from_iterator(
        fit.len(),
        fit.iter().map(|r| {
            r.continuous_ref(&response)
                .expect("fit rows have an observed response")
        }),
    );
    let ls = ols_fit(&x, &y).map_err(|e| e.to_string())?;
    if ls.residual_df() < min_resid_df {
        return Err(format!(
            "{} residual df with {} rows and rank {}",
            ls.residual_df(),
            ls.n_used,
            ls.rank
        ));
    }
    let (draw, sigma) = bayes_regression_draw(&ls, rng).map_err(|e| e.to_string())?;
    if sigma < sigma_floor {
        return Err(StatError::DegenerateVariance(sigma * sigma).to_string());
    }
    Ok(StepOutcome {
        diag: (ls.n_used, ls.rank, ls.residual_df()),
        layout,
        draw,
        sigma,
    })
}

fn impute_copy(
    dataset: &TrialDataset,
    spec: &ModelSpec,
    cfg: &ImputationConfig,
    vars: &[DerivedVars],
    groups: &[Group],
    copy: usize,
    diagnostics: &mut Vec<StepDiagnostic>,
) -> (CompletedCopy, CopyStatus) {
    let n = dataset.subjects.len();
    let mut y: Vec<[Option<f64>; 4]> = dataset.subjects.iter().map(|s| s.observed).collect();
    let mut r: Vec<[f64; VISITS]> = vec![[f64::NAN; VISITS]; n];
    let coords = |group: usize, step: usize| {
        [
            dataset.scenario_id as u64,
            dataset.replicate_id,
            spec.name.code(),
            copy as u64,
            group as u64,
            step as u64,
            DOMAIN_IMPUTE,
        ]
    };
    let fail = |group: &str, visit: usize, reason: String| StepFailure {
        copy,
        group: group.to_string(),
        visit,
        reason,
    };
    let finish = |y: Vec<[Option<f64>; 4]>, r: Vec<[f64; VISITS]>, status: CopyStatus| {
        let outcomes = y
            .into_iter()
            .map(|row| row.map(|v| v.unwrap_or(f64::NAN)))
            .collect();
        let residuals = spec.residual_mode.then_some(r);
        (CompletedCopy { outcomes, residuals }, status)
    };

    if spec.residual_mode {
        // Baseline centering: per-arm intercept-only draw on Y0.
        for arm in Arm::BOTH {
            let members: Vec<usize> = (0..n).filter(|&i| dataset.subjects[i].arm == arm).collect();
            let values: Vec<f64> = members.iter().filter_map(|&i| y[i][0]).collect();
            let mut rng = RngStream::for_coordinates(cfg.seed, &coords(arm.index(), 0));
            let x = DMatrix::from_element(values.len(), 1, 1.0);
            let draw = ols_fit(&x, &DVector::from_vec(values))
                .and_then(|ls| bayes_regression_draw(&ls, &mut rng));
            let mu0 = match draw {
                Ok((b, _)) => b[0],
                Err(e) => return finish(y, r, CopyStatus::Failed(fail(&arm.to_string(), 0, e.to_string()))),
            };
            for &i in &members {
                match y[i][0] {
                    Some(v) => r[i][0] = v - mu0,
                    None => {
                        let reason = "baseline outcome missing".to_string();
                        return finish(y, r, CopyStatus::Failed(fail(&arm.to_string(), 0, reason)));
                    }
                }
            }
        }
    }

    for visit in 1..=VISITS {
        let formula = spec.formula(visit);
        for (g, group) in groups.iter().enumerate() {
            let missing: Vec<usize> = group.members.iter().copied().filter(|&i| y[i][visit].is_none()).collect();
            if missing.is_empty() && !spec.residual_mode {
                continue;
            }
            let mut rng = RngStream::for_coordinates(cfg.seed, &coords(g, visit));
            let rows: Vec<OutcomeRow> = (0..n)
                .map(|i| OutcomeRow {
                    vars: vars[i],
                    y: &y[i],
                    r: Some(&r[i]),
                })
                .collect();
            let fit_rows: Vec<usize> = group.members.iter().copied().filter(|&i| y[i][visit].is_some()).collect();
            let step = match fit_and_draw(formula, &rows, &fit_rows, cfg.min_resid_df, cfg.sigma_floor, &mut rng) {
                Ok(s) => s,
                Err(reason) => return finish(y, r, CopyStatus::Failed(fail(&group.label, visit, reason))),
            };
            diagnostics.push(StepDiagnostic {
                copy,
                group: group.label.clone(),
                visit,
                rows_used: step.diag.0,
                rank: step.diag.1,
                residual_df: step.diag.2,
            });

            let coef = step.draw.as_slice();
            let mut xrow = vec![0.0; step.layout.len()];
            let mut imputed = Vec::with_capacity(missing.len());
            for &i in &missing {
                step.layout
                    .fill_row(&rows[i], &mut xrow)
                    .expect("covariates are complete before the step");
                let mean: f64 = xrow.iter().zip(coef).map(|(a, b)| a * b).sum();
                imputed.push((i, mean + step.sigma * rng.normal()));
            }
            let centering: Vec<(usize, f64)> = if spec.residual_mode && visit < VISITS {
                group
                    .members
                    .iter()
                    .map(|&i| {
                        let c = step
                            .layout
                            .intercept_part(&rows[i], coef)
                            .expect("class levels are known");
                        (i, c)
                    })
                    .collect()
            } else {
                Vec::new()
            };
            drop(rows);
            for (i, v) in imputed {
                y[i][visit] = Some(v);
            }
            for (i, c) in centering {
                r[i][visit] = y[i][visit].expect("complete after imputation") - c;
            }
        }
    }
    finish(y, r, CopyStatus::Ok)
}

/// Impute `dataset` under `spec` into `cfg.m` completed copies.
///
/// A failing step marks its copy as failed; other copies still run.
pub fn impute(dataset: &TrialDataset, spec: &ModelSpec, cfg: &ImputationConfig) -> Result<CompletedData, ImputeError> {
    if cfg.m == 0 {
        return Err(ImputeError::NoCopies);
    }
    spec.check_monotone().map_err(|e| ImputeError::Spec(spec.name, e))?;
    let vars: Vec<DerivedVars> = dataset.subjects.iter().map(derive_vars).collect();
    let groups = by_groups(dataset, &vars, spec.by_groups);
    let mut copies = Vec::with_capacity(cfg.m);
    let mut status = Vec::with_capacity(cfg.m);
    let mut diagnostics = Vec::new();
    for copy in 0..cfg.m {
        let (c, s) = impute_copy(dataset, spec, cfg, &vars, &groups, copy, &mut diagnostics);
        if let CopyStatus::Failed(f) = &s {
            log::debug!("{} replicate {}: {f}", spec.name, dataset.replicate_id);
        }
        copies.push(c);
        status.push(s);
    }
    Ok(CompletedData {
        model: spec.name,
        arms: dataset.subjects.iter().map(|s| s.arm).collect(),
        copies,
        status,
        diagnostics,
    })
}

/// Regression parameters of one step over the full layout of its formula.
#[derive(Debug, Clone)]
pub struct StepParams {
    pub layout: DesignLayout,
    pub coefficients: Vec<f64>,
}

impl StepParams {
    /// Parameters given by column label; unnamed columns are 0.
    pub fn from_labels(formula: &Formula, values: &[(&str, f64)]) -> Result<Self, SpecError> {
        let layout = DesignLayout::full(formula)?;
        let mut coefficients = vec![0.0; layout.len()];
        for (label, v) in values {
            let k = layout
                .position(label)
                .ok_or_else(|| SpecError::UnknownVariable((*label).to_string()))?;
            coefficients[k] = *v;
        }
        Ok(Self { layout, coefficients })
    }
}

/// Expected values of a subject's variables under the composed regressions.
struct Expectation {
    vars: DerivedVars,
    y: [f64; 4],
    r: [f64; VISITS],
}

impl VariableSource for Expectation {
    fn continuous(&self, name: &str) -> Option<f64> {
        OutcomeRow {
            vars: self.vars,
            y: &self.y.map(Some),
            r: Some(&self.r),
        }
        .continuous(name)
    }

    fn class_level(&self, name: &str) -> Option<usize> {
        self.vars.class_level(name)
    }
}

/// Expected outcome at visits 1..=3 for every final discontinuation
/// pattern, evaluating the sequential regressions in `params` from the
/// baseline mean. Residual models are centred on each step's intercept part,
/// so their residual expectations are 0.
pub fn predict_pattern_means(
    spec: &ModelSpec,
    params: &[StepParams],
    baseline_mean: f64,
) -> Result<BTreeMap<String, [f64; VISITS]>, SpecError> {
    let mut out = BTreeMap::new();
    for disc in [None, Some(3), Some(2), Some(1)] {
        let vars = DerivedVars::from_disc_time(disc);
        let mut e = Expectation {
            vars,
            y: [baseline_mean, f64::NAN, f64::NAN, f64::NAN],
            r: [0.0, f64::NAN, f64::NAN],
        };
        for visit in 1..=VISITS {
            let p = &params[visit - 1];
            let x = p.layout.row(&e)?;
            let mean: f64 = x.iter().zip(&p.coefficients).map(|(a, b)| a * b).sum();
            e.y[visit] = mean;
            if spec.residual_mode && visit < VISITS {
                e.r[visit] = update_residual(&p.layout, &p.coefficients, &e, mean)?;
            }
        }
        out.insert(vars.final_pattern(), [e.y[1], e.y[2], e.y[3]]);
    }
    Ok(out)
}

pub const COMPLETED_HEADER: [&str; 11] = [
    "id",
    "arm",
    "y0",
    "y1",
    "y2",
    "y3",
    "disc_time",
    "withdrawn",
    "replicate",
    "scenario_id",
    "copy",
];

/// Write every copy of `completed` as CSV, one row per subject and copy.
pub fn write_completed_csv<W: Write>(
    dataset: &TrialDataset,
    completed: &CompletedData,
    writer: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COMPLETED_HEADER)?;
    for (c, copy) in completed.copies.iter().enumerate() {
        for (s, y) in dataset.subjects.iter().zip(&copy.outcomes) {
            let mut rec = vec![s.id.to_string(), s.arm.to_string()];
            rec.extend(y.iter().map(|v| fmt_value(v.is_finite().then_some(*v))));
            rec.push(s.disc_time.unwrap_or(0).to_string());
            rec.push(u8::from(s.withdrawn).to_string());
            rec.push(dataset.replicate_id.to_string());
            rec.push(dataset.scenario_id.to_string());
            rec.push(c.to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}
