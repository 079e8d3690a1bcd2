//! Simulated two-arm trials with treatment discontinuation and study
//! withdrawal.
//!
//! Each subject carries potential on-treatment outcomes at baseline and
//! three post-baseline visits, plus potential off-treatment outcomes at the
//! post-baseline visits. Discontinuation picks exact counts per visit by
//! ranking a logistic propensity score; withdrawal is an MCAR coin flip at
//! the time of discontinuation. Outcomes are held in litres; the analytic
//! truth is reported in mL.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::statcore::{MvnSampler, RngStream, StatError, SymMatrix};

/// Number of post-baseline visits.
pub const VISITS: usize = 3;

/// Share of the final discontinuation rate that occurs at each visit (5:3:2).
pub const DISC_SPLIT: [f64; VISITS] = [0.5, 0.3, 0.2];

pub const LITRES_TO_ML: f64 = 1000.0;

// stream domains
const DOMAIN_OUTCOMES: u64 = 1;
const DOMAIN_SELECTION: u64 = 2;
const DOMAIN_WITHDRAWAL: u64 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrialError {
    #[error("cannot select {requested} discontinuations at visit {visit} from {available} subjects on treatment")]
    InfeasibleCounts {
        visit: usize,
        requested: usize,
        available: usize,
    },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Stat(#[from] StatError),
    #[error("unknown scenario id {0}")]
    UnknownScenario(u32),
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    Control,
    Active,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Active];

    pub fn index(self) -> usize {
        match self {
            Arm::Control => 0,
            Arm::Active => 1,
        }
    }

    pub fn is_active(self) -> bool {
        self == Arm::Active
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::Control => "Control",
            Arm::Active => "Active",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mechanism {
    /// Ranks the previous on-treatment value.
    Dar,
    /// Ranks the next potential on-treatment value.
    Dnar1,
    /// As DNAR1, but the best-ranked subjects leave at the first visit.
    Dnar2,
}

impl Mechanism {
    pub const ALL: [Mechanism; 3] = [Mechanism::Dar, Mechanism::Dnar1, Mechanism::Dnar2];

    pub fn is_dnar(self) -> bool {
        self != Mechanism::Dar
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mechanism::Dar => "DAR",
            Mechanism::Dnar1 => "DNAR1",
            Mechanism::Dnar2 => "DNAR2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WithdrawalBalance {
    Balanced,
    MoreEarly,
    MoreLate,
}

impl WithdrawalBalance {
    pub const ALL: [WithdrawalBalance; 3] = [
        WithdrawalBalance::Balanced,
        WithdrawalBalance::MoreEarly,
        WithdrawalBalance::MoreLate,
    ];
}

impl fmt::Display for WithdrawalBalance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WithdrawalBalance::Balanced => "Balanced",
            WithdrawalBalance::MoreEarly => "More Early",
            WithdrawalBalance::MoreLate => "More Late",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Trajectory {
    ReturnToBaseline,
    SameAsActive,
}

impl Trajectory {
    pub const ALL: [Trajectory; 2] = [Trajectory::ReturnToBaseline, Trajectory::SameAsActive];

    pub fn short(self) -> &'static str {
        match self {
            Trajectory::ReturnToBaseline => "RTB",
            Trajectory::SameAsActive => "SAA",
        }
    }
}

impl fmt::Display for Trajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Trajectory::ReturnToBaseline => "Return to Baseline",
            Trajectory::SameAsActive => "Same as Active",
        })
    }
}

/// Parameters of the data-generating model, in litres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DgmParams {
    pub mu_control: [f64; 4],
    pub sigma: [[f64; 4]; 4],
    pub delta: [f64; 4],
    pub theta_on: f64,
    pub theta_off: f64,
    pub n_per_arm: usize,
}

impl Default for DgmParams {
    fn default() -> Self {
        Self {
            mu_control: [2.14, 2.47, 2.52, 2.54],
            sigma: [
                [0.45, 0.46, 0.46, 0.47],
                [0.46, 0.66, 0.62, 0.63],
                [0.46, 0.62, 0.65, 0.63],
                [0.47, 0.63, 0.63, 0.68],
            ],
            delta: [0.0, 0.1, 0.1, 0.1],
            theta_on: 0.3,
            theta_off: 0.3,
            n_per_arm: 375,
        }
    }
}

impl DgmParams {
    pub fn sigma_matrix(&self) -> Result<SymMatrix, StatError> {
        SymMatrix::new(DMatrix::from_fn(4, 4, |i, j| self.sigma[i][j]))
    }

    pub fn validate(&self) -> Result<(), TrialError> {
        if self.delta[0] != 0.0 {
            return Err(TrialError::InvalidParams("delta[0] must be 0".into()));
        }
        if !(self.theta_on >= 0.0 && self.theta_off >= 0.0) {
            return Err(TrialError::InvalidParams("theta_on and theta_off must be >= 0".into()));
        }
        if self.n_per_arm == 0 {
            return Err(TrialError::InvalidParams("n_per_arm must be positive".into()));
        }
        crate::statcore::cholesky(&self.sigma_matrix()?)?;
        Ok(())
    }

    /// Marginal SD of the generated on-treatment outcome at `visit`.
    pub fn marginal_sd(&self, visit: usize) -> f64 {
        (self.sigma[visit][visit] + self.theta_on * self.theta_on).sqrt()
    }

    /// Mean on-treatment outcome of `arm` at `visit`.
    pub fn on_mean(&self, arm: Arm, visit: usize) -> f64 {
        self.mu_control[visit] + if arm.is_active() { self.delta[visit] } else { 0.0 }
    }

    /// Mean off-treatment outcome of `arm` at post-baseline `visit`.
    pub fn off_mean(&self, arm: Arm, visit: usize, trajectory: Trajectory) -> f64 {
        match trajectory {
            Trajectory::ReturnToBaseline => self.on_mean(arm, 0),
            Trajectory::SameAsActive => self.mu_control[visit] + self.delta[visit],
        }
    }
}

/// One cell of the simulation factorial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub mechanism: Mechanism,
    pub disc_rate_control: f64,
    pub disc_rate_active: f64,
    pub withdrawal_balance: WithdrawalBalance,
    pub trajectory: Trajectory,
    #[serde(default)]
    pub dgm: DgmParams,
}

/// Discontinuation-rate pairs (control, active) of the factorial.
pub const RATE_PAIRS: [(f64, f64); 4] = [(0.1, 0.1), (0.1, 0.2), (0.2, 0.2), (0.5, 0.5)];

/// Number of cells in the factorial.
pub const GRID_SIZE: u32 = 72;

impl Scenario {
    pub fn disc_rate(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Control => self.disc_rate_control,
            Arm::Active => self.disc_rate_active,
        }
    }

    pub fn validate(&self) -> Result<(), TrialError> {
        for r in [self.disc_rate_control, self.disc_rate_active] {
            if !(0.0..=1.0).contains(&r) {
                return Err(TrialError::InvalidParams(format!("rate {r} outside [0, 1]")));
            }
        }
        self.dgm.validate()
    }

    /// Grid cell by 1-based id. Ids run trajectory-major, then mechanism,
    /// rate pair and withdrawal balance, so ids 1..=36 are the
    /// return-to-baseline cells and 37..=72 the same-as-active cells.
    pub fn from_id(id: u32) -> Result<Self, TrialError> {
        if id == 0 || id > GRID_SIZE {
            return Err(TrialError::UnknownScenario(id));
        }
        let k = (id - 1) as usize;
        let balance = WithdrawalBalance::ALL[k % 3];
        let (rc, ra) = RATE_PAIRS[(k / 3) % 4];
        let mechanism = Mechanism::ALL[(k / 12) % 3];
        let trajectory = Trajectory::ALL[k / 36];
        Ok(Self {
            mechanism,
            disc_rate_control: rc,
            disc_rate_active: ra,
            withdrawal_balance: balance,
            trajectory,
            dgm: DgmParams::default(),
        })
    }

    /// Inverse of [`Scenario::from_id`] for grid cells.
    pub fn grid_id(&self) -> Option<u32> {
        let b = WithdrawalBalance::ALL.iter().position(|&x| x == self.withdrawal_balance)?;
        let r = RATE_PAIRS
            .iter()
            .position(|&(c, a)| c == self.disc_rate_control && a == self.disc_rate_active)?;
        let m = Mechanism::ALL.iter().position(|&x| x == self.mechanism)?;
        let t = Trajectory::ALL.iter().position(|&x| x == self.trajectory)?;
        Some((t * 36 + m * 12 + r * 3 + b + 1) as u32)
    }

    pub fn grid() -> Vec<(u32, Scenario)> {
        (1..=GRID_SIZE)
            .map(|id| (id, Scenario::from_id(id).expect("id in range")))
            .collect()
    }

    pub fn label(&self) -> String {
        format!(
            "{} {} {:.0}%C:{:.0}%A {}",
            self.trajectory.short(),
            self.mechanism,
            self.disc_rate_control * 100.0,
            self.disc_rate_active * 100.0,
            self.withdrawal_balance
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub id: usize,
    pub arm: Arm,
    /// Potential on-treatment outcomes at visits 0..=3.
    pub y_on: [f64; 4],
    /// Potential off-treatment outcomes at visits 1..=3.
    pub y_off: [f64; VISITS],
    /// First off-treatment visit, if any.
    pub disc_time: Option<usize>,
    pub withdrawn: bool,
    pub observed: [Option<f64>; 4],
}

impl SubjectRecord {
    pub fn is_off_treatment(&self, visit: usize) -> bool {
        self.disc_time.is_some_and(|d| d <= visit)
    }

    /// Outcomes under the treatment-policy strategy, before any withdrawal.
    pub fn policy_outcomes(&self) -> [f64; 4] {
        let mut y = self.y_on;
        for v in 1..=VISITS {
            if self.is_off_treatment(v) {
                y[v] = self.y_off[v - 1];
            }
        }
        y
    }

    /// Recompute `observed` from the potential outcomes and flags.
    pub fn refresh_observed(&mut self) {
        let full = self.policy_outcomes();
        for (v, value) in full.iter().enumerate() {
            let missing = self.withdrawn && self.disc_time.is_some_and(|d| v >= d);
            self.observed[v] = if missing { None } else { Some(*value) };
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialDataset {
    pub scenario_id: u32,
    pub scenario: Scenario,
    pub subjects: Vec<SubjectRecord>,
    pub replicate_id: u64,
}

impl TrialDataset {
    pub fn arm(&self, arm: Arm) -> impl Iterator<Item = &SubjectRecord> {
        self.subjects.iter().filter(move |s| s.arm == arm)
    }

    pub fn missing_count(&self) -> usize {
        self.subjects
            .iter()
            .map(|s| s.observed.iter().filter(|o| o.is_none()).count())
            .sum()
    }
}

/// Draw one subject's potential on- and off-treatment outcomes.
///
/// `sampler` must be the MVN for the control-arm mean and covariance.
pub fn generate_potential_outcomes(
    arm: Arm,
    dgm: &DgmParams,
    trajectory: Trajectory,
    sampler: &MvnSampler,
    rng: &mut RngStream,
) -> ([f64; 4], [f64; VISITS]) {
    let base = sampler.sample(rng);
    let u = dgm.theta_on * rng.normal();
    let v = dgm.theta_off * rng.normal();
    let active = if arm.is_active() { 1.0 } else { 0.0 };
    let control = 1.0 - active;

    let mut y_on = [0.0; 4];
    for t in 0..4 {
        y_on[t] = base[t] + active * dgm.delta[t] + u;
    }
    let mut y_off = [0.0; VISITS];
    for k in 0..VISITS {
        let t = k + 1;
        y_off[k] = match trajectory {
            Trajectory::ReturnToBaseline => {
                y_on[t] - dgm.mu_control[t] - active * dgm.delta[t] + dgm.mu_control[0] + v
            }
            Trajectory::SameAsActive => y_on[t] + control * dgm.delta[t] + v,
        };
    }
    (y_on, y_off)
}

/// Exact discontinuation counts per visit for an arm of `n_arm` subjects.
///
/// Cumulative targets `rate·n·(0.5, 0.8, 1.0)` are rounded half-up and
/// differenced, so every cumulative count is the rounded cumulative target.
pub fn disc_counts(n_arm: usize, rate: f64) -> [usize; VISITS] {
    // cumulative 5:3:2 shares in tenths keep the targets exact where possible
    const CUM_TENTHS: [f64; VISITS] = [5.0, 8.0, 10.0];
    let mut out = [0; VISITS];
    let mut prev = 0usize;
    for (k, tenths) in CUM_TENTHS.iter().enumerate() {
        let target = rate * n_arm as f64 * tenths / 10.0;
        let rounded = ((target + 0.5 + 1e-9).floor().max(0.0) as usize).max(prev);
        out[k] = rounded - prev;
        prev = rounded;
    }
    out
}

fn logit(u: f64) -> f64 {
    (u / (1.0 - u)).ln()
}

/// Assign `disc_time` within one arm by ranking propensity scores
/// `κ = ω·y − logit(u)`, `ω = 0.5/σ_j`.
///
/// At visit `j` the pool is the subjects still on treatment. DAR ranks the
/// on-treatment value at `j−1`, DNAR1/DNAR2 the potential on-treatment
/// value at `j`. The lowest-κ subjects leave, except the highest-κ at the
/// first visit under DNAR2. Ties go to the lower subject id.
pub fn select_discontinuations(
    subjects: &mut [SubjectRecord],
    mechanism: Mechanism,
    counts: [usize; VISITS],
    dgm: &DgmParams,
    rng: &mut RngStream,
) -> Result<(), TrialError> {
    for s in subjects.iter_mut() {
        s.disc_time = None;
    }
    for visit in 1..=VISITS {
        let ranked_visit = match mechanism {
            Mechanism::Dar => visit - 1,
            Mechanism::Dnar1 | Mechanism::Dnar2 => visit,
        };
        let omega = 0.5 / dgm.marginal_sd(ranked_visit);
        let mut pool: Vec<(f64, usize, usize)> = subjects
            .iter()
            .enumerate()
            .filter(|(_, s)| s.disc_time.is_none())
            .map(|(i, s)| (omega * s.y_on[ranked_visit] - logit(rng.uniform()), s.id, i))
            .collect();
        let wanted = counts[visit - 1];
        if wanted > pool.len() {
            return Err(TrialError::InfeasibleCounts {
                visit,
                requested: wanted,
                available: pool.len(),
            });
        }
        let best_first = mechanism == Mechanism::Dnar2 && visit == 1;
        pool.sort_by(|a, b| {
            let by_score = if best_first {
                b.0.total_cmp(&a.0)
            } else {
                a.0.total_cmp(&b.0)
            };
            by_score.then(a.1.cmp(&b.1))
        });
        for &(_, _, idx) in pool.iter().take(wanted) {
            subjects[idx].disc_time = Some(visit);
        }
    }
    Ok(())
}

/// Probability that a subject who discontinued at `disc_time` withdraws.
pub fn withdrawal_prob(balance: WithdrawalBalance, disc_time: usize) -> f64 {
    match (balance, disc_time) {
        (WithdrawalBalance::Balanced, _) => 0.5,
        (WithdrawalBalance::MoreEarly, 1) => 0.8,
        (WithdrawalBalance::MoreEarly, _) => 0.2,
        (WithdrawalBalance::MoreLate, 1) => 0.2,
        (WithdrawalBalance::MoreLate, _) => 0.8,
    }
}

/// MCAR withdrawal at the time of discontinuation; withdrawn subjects lose
/// every outcome from their discontinuation visit onwards.
pub fn apply_withdrawal(subjects: &mut [SubjectRecord], balance: WithdrawalBalance, rng: &mut RngStream) {
    for s in subjects.iter_mut() {
        s.withdrawn = match s.disc_time {
            Some(d) => rng.uniform() < withdrawal_prob(balance, d),
            None => false,
        };
        s.refresh_observed();
    }
}

/// Analytic treatment-policy change from baseline, in mL.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueEstimand {
    pub mean_change_control: f64,
    pub mean_change_active: f64,
    pub effect: f64,
}

/// Cumulative discontinuation fraction by `visit` under the 5:3:2 split.
pub fn cumulative_rate(rate: f64, visit: usize) -> f64 {
    rate * DISC_SPLIT[..visit].iter().sum::<f64>()
}

pub fn true_estimand(scenario: &Scenario, visit: usize) -> TrueEstimand {
    assert!((1..=VISITS).contains(&visit), "visit must be 1..=3");
    let dgm = &scenario.dgm;
    let change = |arm: Arm| {
        let w_off = cumulative_rate(scenario.disc_rate(arm), visit);
        let mean = (1.0 - w_off) * dgm.on_mean(arm, visit)
            + w_off * dgm.off_mean(arm, visit, scenario.trajectory);
        (mean - dgm.on_mean(arm, 0)) * LITRES_TO_ML
    };
    let c = change(Arm::Control);
    let a = change(Arm::Active);
    TrueEstimand {
        mean_change_control: c,
        mean_change_active: a,
        effect: a - c,
    }
}

/// Generate one replicate. Subject ids run 0..2n with the control arm first.
pub fn generate_trial(
    scenario_id: u32,
    scenario: &Scenario,
    replicate_id: u64,
    seed: u64,
) -> Result<TrialDataset, TrialError> {
    scenario.validate()?;
    let dgm = &scenario.dgm;
    let mean = DVector::from_row_slice(&dgm.mu_control);
    let sampler = MvnSampler::new(mean, &dgm.sigma_matrix()?)?;
    let key = [scenario_id as u64, replicate_id];

    let mut subjects = Vec::with_capacity(2 * dgm.n_per_arm);
    for arm in Arm::BOTH {
        let mut rng = RngStream::for_coordinates(seed, &[key[0], key[1], DOMAIN_OUTCOMES, arm.index() as u64]);
        for _ in 0..dgm.n_per_arm {
            let (y_on, y_off) = generate_potential_outcomes(arm, dgm, scenario.trajectory, &sampler, &mut rng);
            subjects.push(SubjectRecord {
                id: subjects.len(),
                arm,
                y_on,
                y_off,
                disc_time: None,
                withdrawn: false,
                observed: [None; 4],
            });
        }
    }

    for arm in Arm::BOTH {
        let range = arm.index() * dgm.n_per_arm..(arm.index() + 1) * dgm.n_per_arm;
        let slice = &mut subjects[range];
        let counts = disc_counts(dgm.n_per_arm, scenario.disc_rate(arm));
        let mut sel = RngStream::for_coordinates(seed, &[key[0], key[1], DOMAIN_SELECTION, arm.index() as u64]);
        select_discontinuations(slice, scenario.mechanism, counts, dgm, &mut sel)?;
        let mut wd = RngStream::for_coordinates(seed, &[key[0], key[1], DOMAIN_WITHDRAWAL, arm.index() as u64]);
        apply_withdrawal(slice, scenario.withdrawal_balance, &mut wd);
    }

    Ok(TrialDataset {
        scenario_id,
        scenario: scenario.clone(),
        subjects,
        replicate_id,
    })
}

pub(crate) fn fmt_value(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub const DATASET_HEADER: [&str; 10] = [
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
];

/// Write datasets as CSV, one row per subject; missing outcomes are empty
/// cells and completers have `disc_time = 0`.
pub fn write_datasets_csv<W: Write>(datasets: &[TrialDataset], writer: W) -> Result<(), TrialError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(DATASET_HEADER).map_err(|e| TrialError::Csv(e.to_string()))?;
    for ds in datasets {
        for s in &ds.subjects {
            let mut rec = vec![s.id.to_string(), s.arm.to_string()];
            rec.extend(s.observed.iter().map(|v| fmt_value(*v)));
            rec.push(s.disc_time.unwrap_or(0).to_string());
            rec.push(u8::from(s.withdrawn).to_string());
            rec.push(ds.replicate_id.to_string());
            rec.push(ds.scenario_id.to_string());
            w.write_record(&rec).map_err(|e| TrialError::Csv(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| TrialError::Csv(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn default_sigma_factorizes() {
        let dgm = DgmParams::default();
        let s = dgm.sigma_matrix().unwrap();
        let l = crate::statcore::cholesky(&s).unwrap();
        let back = &l * l.transpose();
        assert!((back - s.as_matrix()).amax() / s.as_matrix().amax() < 1e-10);
        dgm.validate().unwrap();
    }

    #[test]
    fn counts_examples() {
        assert_eq!(disc_counts(375, 0.5), [94, 56, 38]);
        assert_eq!(disc_counts(375, 0.0), [0, 0, 0]);
        assert_eq!(disc_counts(10, 0.2), [1, 1, 0]);
        assert_eq!(disc_counts(375, 0.1), [19, 11, 8]);
        assert_eq!(disc_counts(375, 0.2), [38, 22, 15]);
        assert_eq!(disc_counts(100, 1.0), [50, 30, 20]);
    }

    #[test]
    fn withdrawal_examples() {
        assert_eq!(withdrawal_prob(WithdrawalBalance::Balanced, 2), 0.5);
        assert_eq!(withdrawal_prob(WithdrawalBalance::MoreEarly, 1), 0.8);
        assert_eq!(withdrawal_prob(WithdrawalBalance::MoreLate, 1), 0.2);
        assert_eq!(withdrawal_prob(WithdrawalBalance::MoreLate, 3), 0.8);
        for b in WithdrawalBalance::ALL {
            let avg: f64 = (1..=3).map(|d| DISC_SPLIT[d - 1] * withdrawal_prob(b, d)).sum();
            assert_abs_diff_eq!(avg, 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn truth_examples() {
        let mut s = Scenario::from_id(1).unwrap();
        s.trajectory = Trajectory::ReturnToBaseline;
        s.disc_rate_control = 0.5;
        s.disc_rate_active = 0.5;
        let t = true_estimand(&s, 3);
        assert_abs_diff_eq!(t.mean_change_control, 200.0, epsilon = 1e-9);
        assert_abs_diff_eq!(t.mean_change_active, 250.0, epsilon = 1e-9);
        assert_abs_diff_eq!(t.effect, 50.0, epsilon = 1e-9);

        for traj in Trajectory::ALL {
            s.trajectory = traj;
            s.disc_rate_control = 0.0;
            s.disc_rate_active = 0.0;
            assert_abs_diff_eq!(true_estimand(&s, 3).effect, 100.0, epsilon = 1e-9);
        }

        s.trajectory = Trajectory::SameAsActive;
        s.disc_rate_control = 0.1;
        s.disc_rate_active = 0.2;
        let t = true_estimand(&s, 3);
        assert_abs_diff_eq!(t.mean_change_control, 410.0, epsilon = 1e-9);
        assert_abs_diff_eq!(t.mean_change_active, 500.0, epsilon = 1e-9);
        assert_abs_diff_eq!(t.effect, 90.0, epsilon = 1e-9);
    }

    #[test]
    fn grid_ids_round_trip() {
        let grid = Scenario::grid();
        assert_eq!(grid.len(), 72);
        for (id, s) in &grid {
            assert_eq!(s.grid_id(), Some(*id));
        }
        let s = Scenario::from_id(18).unwrap();
        assert_eq!(s.trajectory, Trajectory::ReturnToBaseline);
        assert_eq!(s.mechanism, Mechanism::Dnar1);
        assert_eq!((s.disc_rate_control, s.disc_rate_active), (0.1, 0.2));
        assert_eq!(s.withdrawal_balance, WithdrawalBalance::MoreLate);
        let s = Scenario::from_id(36 + 35).unwrap();
        assert_eq!(s.trajectory, Trajectory::SameAsActive);
        assert_eq!(s.mechanism, Mechanism::Dnar2);
        assert_eq!(s.disc_rate_control, 0.5);
        assert_eq!(s.withdrawal_balance, WithdrawalBalance::MoreEarly);
        assert!(Scenario::from_id(0).is_err());
        assert!(Scenario::from_id(73).is_err());
    }

    #[test]
    fn saa_active_without_heterogeneity_copies_on_values() {
        let dgm = DgmParams {
            theta_off: 0.0,
            ..Default::default()
        };
        let sampler = MvnSampler::new(DVector::from_row_slice(&dgm.mu_control), &dgm.sigma_matrix().unwrap()).unwrap();
        let mut rng = RngStream::new(1, 1);
        for _ in 0..100 {
            let (on, off) = generate_potential_outcomes(Arm::Active, &dgm, Trajectory::SameAsActive, &sampler, &mut rng);
            for k in 0..3 {
                assert_eq!(off[k], on[k + 1]);
            }
        }
    }

    fn arm_subjects(n: usize, rng: &mut RngStream, dgm: &DgmParams) -> Vec<SubjectRecord> {
        let sampler = MvnSampler::new(DVector::from_row_slice(&dgm.mu_control), &dgm.sigma_matrix().unwrap()).unwrap();
        (0..n)
            .map(|id| {
                let (y_on, y_off) =
                    generate_potential_outcomes(Arm::Control, dgm, Trajectory::ReturnToBaseline, &sampler, rng);
                SubjectRecord {
                    id,
                    arm: Arm::Control,
                    y_on,
                    y_off,
                    disc_time: None,
                    withdrawn: false,
                    observed: [None; 4],
                }
            })
            .collect()
    }

    #[test]
    fn empty_selection() {
        let dgm = DgmParams::default();
        let mut rng = RngStream::new(2, 2);
        let mut subs = arm_subjects(50, &mut rng, &dgm);
        select_discontinuations(&mut subs, Mechanism::Dar, [0, 0, 0], &dgm, &mut rng).unwrap();
        assert!(subs.iter().all(|s| s.disc_time.is_none()));
        apply_withdrawal(&mut subs, WithdrawalBalance::MoreEarly, &mut rng);
        assert!(subs.iter().all(|s| !s.withdrawn && s.observed.iter().all(Option::is_some)));
    }

    #[test]
    fn infeasible_counts() {
        let dgm = DgmParams::default();
        let mut rng = RngStream::new(2, 3);
        let mut subs = arm_subjects(10, &mut rng, &dgm);
        let err = select_discontinuations(&mut subs, Mechanism::Dnar1, [6, 5, 0], &dgm, &mut rng).unwrap_err();
        assert_eq!(
            err,
            TrialError::InfeasibleCounts {
                visit: 2,
                requested: 5,
                available: 4
            }
        );
    }

    #[test]
    fn dnar_selection_direction() {
        let dgm = DgmParams::default();
        let mut rng = RngStream::new(3, 3);
        let n = 10_000;
        let mut subs = arm_subjects(n, &mut rng, &dgm);
        let arm_mean = subs.iter().map(|s| s.y_on[1]).sum::<f64>() / n as f64;
        let c = n / 4;

        select_discontinuations(&mut subs, Mechanism::Dnar1, [c, 0, 0], &dgm, &mut rng).unwrap();
        let sel: Vec<f64> = subs.iter().filter(|s| s.disc_time == Some(1)).map(|s| s.y_on[1]).collect();
        assert_eq!(sel.len(), c);
        let m = sel.iter().sum::<f64>() / c as f64;
        assert!(arm_mean - m > 0.1, "DNAR1 margin {}", arm_mean - m);

        select_discontinuations(&mut subs, Mechanism::Dnar2, [c, 0, 0], &dgm, &mut rng).unwrap();
        let m = subs.iter().filter(|s| s.disc_time == Some(1)).map(|s| s.y_on[1]).sum::<f64>() / c as f64;
        assert!(m > arm_mean, "DNAR2 should pick high responders");
    }

    #[test]
    fn withdrawn_subject_loses_later_outcomes() {
        let mut s = SubjectRecord {
            id: 0,
            arm: Arm::Active,
            y_on: [2.0, 2.1, 2.2, 2.3],
            y_off: [1.9, 1.8, 1.7],
            disc_time: Some(2),
            withdrawn: true,
            observed: [None; 4],
        };
        s.refresh_observed();
        assert_eq!(s.observed, [Some(2.0), Some(2.1), None, None]);
        s.withdrawn = false;
        s.refresh_observed();
        assert_eq!(s.observed, [Some(2.0), Some(2.1), Some(1.8), Some(1.7)]);
    }

    #[test]
    fn more_late_withdrawal_fraction_at_first_visit() {
        let mut rng = RngStream::new(4, 4);
        let n = 10_000;
        let mut subs: Vec<SubjectRecord> = (0..n)
            .map(|id| SubjectRecord {
                id,
                arm: Arm::Control,
                y_on: [0.0; 4],
                y_off: [0.0; 3],
                disc_time: Some(1),
                withdrawn: false,
                observed: [None; 4],
            })
            .collect();
        apply_withdrawal(&mut subs, WithdrawalBalance::MoreLate, &mut rng);
        let frac = subs.iter().filter(|s| s.withdrawn).count() as f64 / n as f64;
        assert!((frac - 0.2).abs() < 0.012, "fraction {frac}");
    }

    #[test]
    fn generated_trial_respects_invariants() {
        let scenario = Scenario::from_id(35).unwrap();
        let ds = generate_trial(35, &scenario, 0, 11).unwrap();
        assert_eq!(ds.subjects.len(), 750);
        for arm in Arm::BOTH {
            let counts = disc_counts(375, scenario.disc_rate(arm));
            for v in 1..=3 {
                let got = ds.arm(arm).filter(|s| s.disc_time == Some(v)).count();
                assert_eq!(got, counts[v - 1]);
            }
        }
        for s in &ds.subjects {
            assert!(s.observed[0].is_some());
            let full = s.policy_outcomes();
            for v in 0..4 {
                match s.observed[v] {
                    Some(x) => assert_eq!(x, full[v]),
                    None => assert!(s.withdrawn && s.disc_time.unwrap() <= v),
                }
            }
            // monotone
            for v in 1..4 {
                if s.observed[v - 1].is_none() {
                    assert!(s.observed[v].is_none());
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let scenario = Scenario::from_id(20).unwrap();
        let a = generate_trial(20, &scenario, 3, 99).unwrap();
        let b = generate_trial(20, &scenario, 3, 99).unwrap();
        assert_eq!(a.subjects, b.subjects);
        let c = generate_trial(20, &scenario, 4, 99).unwrap();
        assert_ne!(a.subjects, c.subjects);
    }

    #[test]
    fn csv_export_schema() {
        let scenario = Scenario::from_id(11).unwrap();
        let ds = generate_trial(11, &scenario, 2, 5).unwrap();
        let mut buf = Vec::new();
        write_datasets_csv(std::slice::from_ref(&ds), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "id,arm,y0,y1,y2,y3,disc_time,withdrawn,replicate,scenario_id");
        assert_eq!(text.lines().count(), 751);
        let withdrawn = ds.subjects.iter().find(|s| s.withdrawn && s.disc_time == Some(1)).unwrap();
        let row = text.lines().nth(withdrawn.id + 1).unwrap();
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(&cells[3..8], &["", "", "", "1", "1"]);
    }
}
