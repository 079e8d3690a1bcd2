//! Analysis models: complete-data ANCOVA, MMRM on the observed data, and
//! Rubin's rules for combining imputed fits.
//!
//! Outcomes come in litres; every estimate is reported in mL (variances in
//! mL²).

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

use crate::statcore::{maximize, ols_fit, MaximizeOptions, StatError};
use crate::trialgen::{Arm, TrialDataset, LITRES_TO_ML, VISITS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Stat(#[from] StatError),
    #[error("input lengths differ: {0}")]
    Shape(String),
    #[error("missing outcome for subject {0}")]
    MissingOutcome(usize),
    #[error("MMRM optimiser did not converge: {0}")]
    NonConvergence(String),
    #[error("MMRM covariance is singular (Cholesky diagonal {0:e})")]
    SingularCovariance(f64),
    #[error("pooling needs at least two copies, got {0}")]
    TooFewCopies(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub point: f64,
    pub variance: f64,
    pub df: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateTriple {
    pub mean_change_control: Estimate,
    pub mean_change_active: Estimate,
    pub effect: Estimate,
}

/// Which component of an [`EstimateTriple`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Component {
    Effect,
    MeanControl,
    MeanActive,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Effect, Component::MeanControl, Component::MeanActive];

    pub fn as_str(self) -> &'static str {
        match self {
            Component::Effect => "effect",
            Component::MeanControl => "mean_control",
            Component::MeanActive => "mean_active",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl EstimateTriple {
    pub fn get(&self, c: Component) -> Estimate {
        match c {
            Component::Effect => self.effect,
            Component::MeanControl => self.mean_change_control,
            Component::MeanActive => self.mean_change_active,
        }
    }
}

fn estimate(c: &DVector<f64>, beta: &DVector<f64>, cov: &DMatrix<f64>, df: f64) -> Estimate {
    let scale = LITRES_TO_ML * LITRES_TO_ML;
    Estimate {
        point: c.dot(beta) * LITRES_TO_ML,
        variance: (c.transpose() * cov * c)[(0, 0)] * scale,
        df,
    }
}

/// LS-means of change at the pooled mean baseline and their contrast, for a
/// model whose (intercept, treatment, baseline) coefficients sit at
/// `offset..offset + 3`.
fn ls_triple(beta: &DVector<f64>, cov: &DMatrix<f64>, offset: usize, mean_y0: f64, df: f64) -> EstimateTriple {
    let p = beta.len();
    let mut control = DVector::zeros(p);
    control[offset] = 1.0;
    control[offset + 2] = mean_y0;
    let mut active = control.clone();
    active[offset + 1] = 1.0;
    let mut effect = DVector::zeros(p);
    effect[offset + 1] = 1.0;
    EstimateTriple {
        mean_change_control: estimate(&control, beta, cov, df),
        mean_change_active: estimate(&active, beta, cov, df),
        effect: estimate(&effect, beta, cov, df),
    }
}

/// ANCOVA of change `yj − y0` on intercept, treatment and baseline.
pub fn ancova(arms: &[Arm], y0: &[f64], yj: &[f64]) -> Result<EstimateTriple, AnalysisError> {
    let n = arms.len();
    if y0.len() != n || yj.len() != n {
        return Err(AnalysisError::Shape(format!(
            "{n} arms, {} baselines, {} outcomes",
            y0.len(),
            yj.len()
        )));
    }
    if let Some(i) = (0..n).find(|&i| !y0[i].is_finite() || !yj[i].is_finite()) {
        return Err(AnalysisError::MissingOutcome(i));
    }
    let x = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => f64::from(u8::from(arms[i].is_active())),
        _ => y0[i],
    });
    let y = DVector::from_fn(n, |i, _| yj[i] - y0[i]);
    let fit = ols_fit(&x, &y)?;
    if !fit.is_full_rank() {
        return Err(StatError::InsufficientData {
            n_used: n,
            rank: fit.rank,
        }
        .into());
    }
    let cov = fit.xtx_inverse.as_matrix() * fit.residual_variance;
    let mean_y0 = y0.iter().sum::<f64>() / n as f64;
    Ok(ls_triple(&fit.coefficients, &cov, 0, mean_y0, (n - 3) as f64))
}

/// ANCOVA at `visit` on the policy outcomes before any withdrawal.
pub fn ancova_full(dataset: &TrialDataset, visit: usize) -> Result<EstimateTriple, AnalysisError> {
    let arms: Vec<Arm> = dataset.subjects.iter().map(|s| s.arm).collect();
    let full: Vec<[f64; 4]> = dataset.subjects.iter().map(|s| s.policy_outcomes()).collect();
    let y0: Vec<f64> = full.iter().map(|y| y[0]).collect();
    let yj: Vec<f64> = full.iter().map(|y| y[visit]).collect();
    ancova(&arms, &y0, &yj)
}

/// Number of MMRM fixed effects: intercept, treatment and baseline at each
/// post-baseline visit.
pub const MMRM_FIXED_EFFECTS: usize = 3 * VISITS;

const CHOLESKY_FLOOR: f64 = 1e-6;

/// Sufficient statistics of the subjects observed at visits `1..=k`.
#[derive(Debug, Clone)]
struct PatternStats {
    k: usize,
    count: f64,
    /// Σ x xᵀ with x = (1, z, y0)
    sxx: [[f64; 3]; 3],
    /// sxy[t] = Σ x · d_t
    sxy: Vec<[f64; 3]>,
    /// syy[s][t] = Σ d_s · d_t
    syy: Vec<Vec<f64>>,
}

/// Monotone data prepared for REML.
#[derive(Debug, Clone)]
pub struct MmrmData {
    patterns: Vec<PatternStats>,
    n_subjects: usize,
    n_obs: usize,
    mean_y0: f64,
}

impl MmrmData {
    /// `rows` hold `(arm, y0, [y1, y2, y3])` with missing values as `None`.
    /// Subjects without any post-baseline outcome are left out.
    pub fn new(rows: &[(Arm, f64, [Option<f64>; VISITS])]) -> Result<Self, AnalysisError> {
        let mut patterns: Vec<PatternStats> = (1..=VISITS)
            .map(|k| PatternStats {
                k,
                count: 0.0,
                sxx: [[0.0; 3]; 3],
                sxy: vec![[0.0; 3]; k],
                syy: vec![vec![0.0; k]; k],
            })
            .collect();
        let mut n_subjects = 0;
        let mut n_obs = 0;
        let mut sum_y0 = 0.0;
        for (i, (arm, y0, y)) in rows.iter().enumerate() {
            if !y0.is_finite() {
                return Err(AnalysisError::MissingOutcome(i));
            }
            let k = y.iter().take_while(|v| v.is_some()).count();
            if y[k..].iter().any(Option::is_some) {
                return Err(AnalysisError::Shape(format!("subject {i} has non-monotone missingness")));
            }
            if k == 0 {
                continue;
            }
            let x = [1.0, f64::from(u8::from(arm.is_active())), *y0];
            let d: Vec<f64> = y[..k].iter().map(|v| v.expect("observed prefix") - y0).collect();
            let p = &mut patterns[k - 1];
            p.count += 1.0;
            for a in 0..3 {
                for b in 0..3 {
                    p.sxx[a][b] += x[a] * x[b];
                }
            }
            for s in 0..k {
                for a in 0..3 {
                    p.sxy[s][a] += x[a] * d[s];
                }
                for t in 0..k {
                    p.syy[s][t] += d[s] * d[t];
                }
            }
            n_subjects += 1;
            n_obs += k;
            sum_y0 += y0;
        }
        patterns.retain(|p| p.count > 0.0);
        if n_subjects == 0 {
            return Err(StatError::InsufficientData { n_used: 0, rank: 0 }.into());
        }
        Ok(Self {
            patterns,
            n_subjects,
            n_obs,
            mean_y0: sum_y0 / n_subjects as f64,
        })
    }

    pub fn from_dataset(dataset: &TrialDataset) -> Result<Self, AnalysisError> {
        let rows: Vec<(Arm, f64, [Option<f64>; VISITS])> = dataset
            .subjects
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let y0 = s.observed[0].ok_or(AnalysisError::MissingOutcome(i))?;
                Ok((s.arm, y0, [s.observed[1], s.observed[2], s.observed[3]]))
            })
            .collect::<Result<_, AnalysisError>>()?;
        Self::new(&rows)
    }

    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    /// Covariance from the six lower-triangular Cholesky entries
    /// `(L00, L10, L11, L20, L21, L22)`.
    pub fn covariance(theta: &[f64]) -> DMatrix<f64> {
        let l = cholesky_factor(theta);
        &l * l.transpose()
    }

    /// GLS pieces at covariance `sigma`: (log Σ n_k log|Σ_k|, A, c, y'V⁻¹y).
    fn gls_terms(&self, sigma: &DMatrix<f64>) -> Option<(f64, DMatrix<f64>, DVector<f64>, f64)> {
        let p = MMRM_FIXED_EFFECTS;
        let mut logdet = 0.0;
        let mut a = DMatrix::zeros(p, p);
        let mut c = DVector::zeros(p);
        let mut yvy = 0.0;
        for pat in &self.patterns {
            let k = pat.k;
            let sub = sigma.view((0, 0), (k, k)).into_owned();
            let chol = sub.cholesky()?;
            let ld: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
            let inv = chol.inverse();
            logdet += pat.count * ld;
            for s in 0..k {
                for t in 0..k {
                    let w = inv[(s, t)];
                    for i in 0..3 {
                        for j in 0..3 {
                            a[(3 * s + i, 3 * t + j)] += w * pat.sxx[i][j];
                        }
                        c[3 * s + i] += w * pat.sxy[t][i];
                    }
                    yvy += w * pat.syy[s][t];
                }
            }
        }
        Some((logdet, a, c, yvy))
    }

    /// Restricted log-likelihood at Cholesky parameters `theta`.
    pub fn reml_loglik(&self, theta: &[f64]) -> f64 {
        let sigma = Self::covariance(theta);
        let Some((logdet, a, c, yvy)) = self.gls_terms(&sigma) else {
            return f64::NAN;
        };
        let Some(chol_a) = a.cholesky() else {
            return f64::NAN;
        };
        let logdet_a: f64 = chol_a.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        let beta = chol_a.solve(&c);
        let quad = yvy - c.dot(&beta);
        let resid_n = (self.n_obs - MMRM_FIXED_EFFECTS) as f64;
        -0.5 * (resid_n * (2.0 * std::f64::consts::PI).ln() + logdet + logdet_a + quad)
    }

    /// Fixed effects and their covariance at `theta`.
    pub fn gls(&self, theta: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let (_, a, c, _) = self.gls_terms(&Self::covariance(theta))?;
        let chol = a.cholesky()?;
        Some((chol.solve(&c), chol.inverse()))
    }

    /// Diagonal starting point: per-visit residual variance of change on
    /// (intercept, treatment, baseline) among the subjects observed there.
    pub fn start(&self) -> Vec<f64> {
        let mut sd = [0.0; VISITS];
        for (t, s) in sd.iter_mut().enumerate() {
            let mut sxx = DMatrix::<f64>::zeros(3, 3);
            let mut sxy = DVector::<f64>::zeros(3);
            let mut syy = 0.0;
            let mut n = 0.0;
            for pat in self.patterns.iter().filter(|p| p.k > t) {
                for i in 0..3 {
                    for j in 0..3 {
                        sxx[(i, j)] += pat.sxx[i][j];
                    }
                    sxy[i] += pat.sxy[t][i];
                }
                syy += pat.syy[t][t];
                n += pat.count;
            }
            let var = sxx
                .clone()
                .cholesky()
                .map(|ch| (syy - sxy.dot(&ch.solve(&sxy))) / (n - 3.0).max(1.0))
                .unwrap_or(syy / n.max(1.0));
            *s = var.max(1e-8).sqrt();
        }
        vec![sd[0], 0.0, sd[1], 0.0, 0.0, sd[2]]
    }
}

fn cholesky_factor(theta: &[f64]) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(VISITS, VISITS);
    let mut k = 0;
    for i in 0..VISITS {
        for j in 0..=i {
            l[(i, j)] = theta[k];
            k += 1;
        }
    }
    l
}

#[derive(Debug, Clone)]
pub struct MmrmFit {
    pub estimates: EstimateTriple,
    pub beta: DVector<f64>,
    pub beta_cov: DMatrix<f64>,
    pub covariance: DMatrix<f64>,
    pub loglik: f64,
    pub theta: Vec<f64>,
    pub iterations: usize,
}

/// MMRM by REML on the observed data, reporting the final visit.
pub fn mmrm(data: &MmrmData) -> Result<MmrmFit, AnalysisError> {
    let start = data.start();
    let options = MaximizeOptions::default();
    let max = maximize(|t| data.reml_loglik(t), &start, None, &options)?;
    if !max.converged {
        return Err(AnalysisError::NonConvergence(
            max.message.unwrap_or_else(|| "unknown".into()),
        ));
    }
    let theta = max.argmax;
    let min_diag = [theta[0], theta[2], theta[5]]
        .iter()
        .map(|v| v.abs())
        .fold(f64::INFINITY, f64::min);
    if min_diag < CHOLESKY_FLOOR {
        return Err(AnalysisError::SingularCovariance(min_diag));
    }
    let (beta, beta_cov) = data
        .gls(&theta)
        .ok_or(AnalysisError::SingularCovariance(min_diag))?;
    let df = data.n_subjects.saturating_sub(MMRM_FIXED_EFFECTS) as f64;
    let estimates = ls_triple(&beta, &beta_cov, 3 * (VISITS - 1), data.mean_y0, df);
    Ok(MmrmFit {
        estimates,
        beta,
        beta_cov,
        covariance: MmrmData::covariance(&theta),
        loglik: max.value,
        theta,
        iterations: max.iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PooledEstimate {
    pub point: f64,
    pub within_var: f64,
    pub between_var: f64,
    pub total_var: f64,
    pub df: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl PooledEstimate {
    /// A single fit with its own t reference, treated as a pooled estimate.
    pub fn single(est: Estimate) -> Self {
        let half = t_quantile(est.df) * est.variance.max(0.0).sqrt();
        Self {
            point: est.point,
            within_var: est.variance,
            between_var: 0.0,
            total_var: est.variance,
            df: est.df,
            ci_low: est.point - half,
            ci_high: est.point + half,
        }
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.ci_low <= truth && truth <= self.ci_high
    }
}

/// 0.975 quantile of t with `df` degrees of freedom (normal for infinite df).
pub fn t_quantile(df: f64) -> f64 {
    if !df.is_finite() || df > 1e7 {
        Normal::standard().inverse_cdf(0.975)
    } else {
        StudentsT::new(0.0, 1.0, df.max(f64::MIN_POSITIVE))
            .expect("valid t parameters")
            .inverse_cdf(0.975)
    }
}

/// Barnard–Rubin degrees of freedom.
pub fn barnard_rubin_df(m: usize, within: f64, between: f64, complete_df: f64) -> f64 {
    let total = within + (1.0 + 1.0 / m as f64) * between;
    let nu_obs_of = |lambda: f64| (complete_df + 1.0) / (complete_df + 3.0) * complete_df * (1.0 - lambda);
    if total <= 0.0 || between <= 0.0 {
        return nu_obs_of(0.0);
    }
    let lambda = (1.0 + 1.0 / m as f64) * between / total;
    let nu_old = (m as f64 - 1.0) / (lambda * lambda);
    let nu_obs = nu_obs_of(lambda);
    nu_old * nu_obs / (nu_old + nu_obs)
}

/// Rubin's rules over per-copy `(point, variance)` pairs.
pub fn rubin_pool(estimates: &[(f64, f64)], complete_df: f64) -> Result<PooledEstimate, AnalysisError> {
    let m = estimates.len();
    if m < 2 {
        return Err(AnalysisError::TooFewCopies(m));
    }
    let mf = m as f64;
    let point = estimates.iter().map(|e| e.0).sum::<f64>() / mf;
    let within_var = estimates.iter().map(|e| e.1).sum::<f64>() / mf;
    let between_var = estimates.iter().map(|e| (e.0 - point).powi(2)).sum::<f64>() / (mf - 1.0);
    let total_var = within_var + (1.0 + 1.0 / mf) * between_var;
    let df = barnard_rubin_df(m, within_var, between_var, complete_df);
    let half = t_quantile(df) * total_var.sqrt();
    Ok(PooledEstimate {
        point,
        within_var,
        between_var,
        total_var,
        df,
        ci_low: point - half,
        ci_high: point + half,
    })
}

pub fn ci_halfwidth(p: &PooledEstimate) -> f64 {
    (p.ci_high - p.ci_low) / 2.0
}
