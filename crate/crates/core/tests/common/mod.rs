//! Checks shared by the oracle, algebra and acceptance test targets.
//! Each returns a short summary on success and a diagnostic on failure.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use offtrt_core::analyze::*;
use offtrt_core::harness::*;
use offtrt_core::mi::*;
use offtrt_core::modelspec::*;
use offtrt_core::statcore::ols_fit;
use offtrt_core::trialgen::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

pub type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Plain normal-equations least squares, independent of the library solver.
pub fn normal_equations(x: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let xtx = x.transpose() * x;
    let inv = xtx.try_inverse().expect("invertible cross-product");
    let b = &inv * x.transpose() * y;
    (b, inv)
}

fn subject(id: usize, arm: Arm, y: [f64; 4], disc_time: Option<usize>, withdrawn: bool) -> SubjectRecord {
    let mut s = SubjectRecord {
        id,
        arm,
        y_on: y,
        y_off: [y[1], y[2], y[3]],
        disc_time,
        withdrawn,
        observed: [None; 4],
    };
    s.refresh_observed();
    s
}

pub fn dataset(subjects: Vec<SubjectRecord>) -> TrialDataset {
    let mut scenario = Scenario::from_id(1).unwrap();
    scenario.dgm.n_per_arm = subjects.len() / 2;
    TrialDataset {
        scenario_id: 1,
        scenario,
        subjects,
        replicate_id: 0,
    }
}

// ---------------------------------------------------------------- oracles

const TINY_Y0: [f64; 8] = [1.62, 1.95, 2.08, 2.21, 2.37, 2.50, 2.71, 2.18];
const TINY_Y1: [f64; 7] = [1.90, 2.31, 2.29, 2.60, 2.66, 2.95, 3.02];

/// Eight control subjects with one missing Y1 under CICS: the imputed
/// value's distribution against an independently sampled
/// normal-inverse-chi-square predictive.
pub fn bayes_predictive_oracle(copies: usize) -> Check {
    let mut subjects = Vec::new();
    for i in 0..8 {
        let y0 = TINY_Y0[i];
        let y1 = TINY_Y1.get(i).copied().unwrap_or(f64::NAN);
        let (disc, wd) = if i == 7 { (Some(1), true) } else { (None, false) };
        let j = [0.03, -0.04, 0.06, -0.01, 0.02, -0.05, 0.04, 0.0][i];
        subjects.push(subject(i, Arm::Control, [y0, y1, y1 + 0.05 + j, y1 + 0.07 - j * j], disc, wd));
    }
    for i in 0..8 {
        let y0 = TINY_Y0[i] + 0.1;
        let j = [0.02, -0.03, 0.05, 0.01, -0.04, 0.03, -0.02, 0.06][i];
        subjects.push(subject(8 + i, Arm::Active, [y0, y0 + 0.3 + j, y0 + 0.35 - j, y0 + 0.4 + j * j], None, false));
    }
    let ds = dataset(subjects);
    let cfg = ImputationConfig {
        m: copies,
        seed: 77,
        ..Default::default()
    };
    let out = impute(&ds, &builtin_spec(ModelName::Cics), &cfg).map_err(|e| e.to_string())?;
    ensure(out.all_ok(), || format!("{:?}", out.first_failure()))?;
    let draws: Vec<f64> = out.copies.iter().map(|c| c.outcomes[7][1]).collect();
    let (mean, var) = moments(&draws);

    // independent posterior: normal equations + ChaCha20 + rand_distr
    let n = TINY_Y1.len();
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { TINY_Y0[i] });
    let y = DVector::from_row_slice(&TINY_Y1);
    let (b, inv) = normal_equations(&x, &y);
    let resid = &y - &x * &b;
    let nu = (n - 2) as f64;
    let s2 = resid.dot(&resid) / nu;
    let chol = inv.clone().cholesky().unwrap().l();
    let x0 = DVector::from_row_slice(&[1.0, TINY_Y0[7]]);
    let chi = ChiSquared::new(nu).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let oracle: Vec<f64> = (0..1_000_000)
        .map(|_| {
            let sigma2 = s2 * nu / chi.sample(&mut rng);
            let z = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let beta = &b + &chol * z * sigma2.sqrt();
            x0.dot(&beta) + sigma2.sqrt() * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    let (o_mean, o_var) = moments(&oracle);

    // closed form of the same predictive (Student t), as a sanity anchor
    let h = (x0.transpose() * &inv * &x0)[(0, 0)];
    let exact_var = s2 * (1.0 + h) * nu / (nu - 2.0);
    ensure(rel_diff(o_var, exact_var) < 0.02, || {
        format!("oracle variance {o_var:.5} vs closed form {exact_var:.5}")
    })?;

    let (dm, dv) = (rel_diff(mean, o_mean), rel_diff(var, o_var));
    ensure(dm < 0.03 && dv < 0.03, || {
        format!("imputed mean {mean:.4} var {var:.5} vs oracle {o_mean:.4} {o_var:.5}")
    })?;
    Ok(format!("mean rel diff {:.2}%, variance rel diff {:.2}% over {copies} copies", 100.0 * dm, 100.0 * dv))
}

pub fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn complete_trial(id: u32, n: usize, replicate: u64) -> TrialDataset {
    let mut s = Scenario::from_id(id).unwrap();
    s.dgm.n_per_arm = n;
    let mut ds = generate_trial(id, &s, replicate, 4242).unwrap();
    for s in &mut ds.subjects {
        s.withdrawn = false;
        s.refresh_observed();
    }
    ds
}

/// With every outcome observed, the MMRM fixed effects equal per-visit OLS.
pub fn mmrm_complete_equals_ols() -> Check {
    let ds = complete_trial(34, 60, 3);
    let fit = mmrm(&MmrmData::from_dataset(&ds).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let n = ds.subjects.len();
    let x = DMatrix::from_fn(n, 3, |i, j| {
        let s = &ds.subjects[i];
        [1.0, if s.arm.is_active() { 1.0 } else { 0.0 }, s.observed[0].unwrap()][j]
    });
    let mut worst: f64 = 0.0;
    for t in 0..VISITS {
        let y = DVector::from_fn(n, |i, _| {
            let o = ds.subjects[i].observed;
            o[t + 1].unwrap() - o[0].unwrap()
        });
        let (b, _) = normal_equations(&x, &y);
        for j in 0..3 {
            worst = worst.max((fit.beta[3 * t + j] - b[j]).abs());
        }
    }
    let anc = ancova_full(&ds, VISITS).map_err(|e| e.to_string())?;
    let effect_gap = (anc.effect.point - fit.estimates.effect.point).abs() / LITRES_TO_ML;
    ensure(worst < 1e-6 && effect_gap < 1e-6, || {
        format!("max coefficient gap {worst:e}, effect gap {effect_gap:e}")
    })?;
    Ok(format!("max coefficient gap {worst:.1e}"))
}

/// A 12-subject monotone toy set: the REML optimum beats a random search.
pub fn mmrm_beats_random_search(points: usize) -> Check {
    let rows: Vec<(Arm, f64, [Option<f64>; VISITS])> = vec![
        (Arm::Control, 2.10, [Some(2.31), Some(2.40), Some(2.52)]),
        (Arm::Control, 1.85, [Some(2.02), Some(2.15), Some(2.09)]),
        (Arm::Control, 2.42, [Some(2.70), Some(2.66), Some(2.81)]),
        (Arm::Control, 1.64, [Some(1.90), Some(1.83), None]),
        (Arm::Control, 2.30, [Some(2.41), None, None]),
        (Arm::Control, 2.05, [Some(2.38), Some(2.44), Some(2.35)]),
        (Arm::Active, 2.20, [Some(2.61), Some(2.70), Some(2.77)]),
        (Arm::Active, 1.92, [Some(2.26), Some(2.31), Some(2.45)]),
        (Arm::Active, 2.51, [Some(2.93), Some(3.01), Some(2.98)]),
        (Arm::Active, 1.75, [Some(2.20), Some(2.11), None]),
        (Arm::Active, 2.36, [Some(2.69), None, None]),
        (Arm::Active, 2.01, [Some(2.47), Some(2.58), Some(2.64)]),
    ];
    let data = MmrmData::new(&rows).map_err(|e| e.to_string())?;
    let fit = mmrm(&data).map_err(|e| e.to_string())?;
    let mut rng = ChaCha20Rng::seed_from_u64(31);
    let scale = fit.theta.iter().fold(0.0_f64, |m, v| m.max(v.abs())) * 2.0;
    let mut best = f64::NEG_INFINITY;
    for _ in 0..points {
        let theta: Vec<f64> = (0..6)
            .map(|k| {
                let diag = matches!(k, 0 | 2 | 5);
                if diag {
                    rng.random_range(0.01..scale)
                } else {
                    rng.random_range(-scale..scale)
                }
            })
            .collect();
        let ll = data.reml_loglik(&theta);
        if ll.is_finite() {
            best = best.max(ll);
        }
    }
    ensure(fit.loglik >= best, || format!("optimum {} < search {}", fit.loglik, best))?;
    Ok(format!("optimum {:.4} vs best of {points} random points {:.4}", fit.loglik, best))
}

pub fn rubin_hand_examples() -> Check {
    let p = rubin_pool(&[(0.0, 1.0), (2.0, 1.0)], 100.0).map_err(|e| e.to_string())?;
    ensure(p.point == 1.0 && p.within_var == 1.0 && p.between_var == 2.0 && p.total_var == 4.0, || {
        format!("m=2 example gave {p:?}")
    })?;
    let same = rubin_pool(&[(3.5, 0.25); 5], 50.0).map_err(|e| e.to_string())?;
    ensure(same.point == 3.5 && same.between_var == 0.0 && same.total_var == 0.25, || {
        format!("identical copies gave {same:?}")
    })?;
    let dfs: Vec<f64> = [0.1, 0.5, 1.0, 2.0].iter().map(|&b| barnard_rubin_df(10, 1.0, b, 60.0)).collect();
    ensure(dfs.windows(2).all(|w| w[1] < w[0]), || format!("df not decreasing in B: {dfs:?}"))?;
    let hw = ci_halfwidth(&PooledEstimate::single(Estimate {
        point: 100.0,
        variance: 25.0,
        df: f64::INFINITY,
    }));
    ensure((hw - 9.79982).abs() < 1e-5, || format!("halfwidth {hw}"))?;
    ensure(rubin_pool(&[(1.0, 1.0)], 10.0).is_err(), || "m=1 pooled".into())?;
    Ok("Qbar=1 W=1 B=2 T=4; B=0 case; df decreasing in B; halfwidth 9.80".into())
}

/// Replicate-average treatment-policy change against the analytic truth.
/// Arm size 400 makes every discontinuation count exact.
pub fn dgm_mixture_exact(ids: &[u32], reps: u64) -> Check {
    let mut lines = Vec::new();
    for &id in ids {
        let mut s = Scenario::from_id(id).unwrap();
        s.dgm.n_per_arm = 400;
        let truth = true_estimand(&s, VISITS);
        let mut per_rep = [Vec::new(), Vec::new(), Vec::new()];
        for r in 0..reps {
            let ds = generate_trial(id, &s, r, 1234).map_err(|e| e.to_string())?;
            let mut change = [0.0; 2];
            for arm in Arm::BOTH {
                let v: Vec<f64> = ds
                    .arm(arm)
                    .map(|s| {
                        let y = s.policy_outcomes();
                        (y[VISITS] - y[0]) * LITRES_TO_ML
                    })
                    .collect();
                change[arm.index()] = v.iter().sum::<f64>() / v.len() as f64;
            }
            per_rep[0].push(change[0]);
            per_rep[1].push(change[1]);
            per_rep[2].push(change[1] - change[0]);
        }
        let targets = [truth.mean_change_control, truth.mean_change_active, truth.effect];
        for (k, values) in per_rep.iter().enumerate() {
            let (mean, var) = moments(values);
            let se = (var / reps as f64).sqrt();
            let z = (mean - targets[k]) / se;
            ensure(z.abs() < 3.0, || {
                format!("scenario {id} component {k}: mean {mean:.2} truth {:.2} se {se:.2}", targets[k])
            })?;
        }
        let (m, _) = moments(&per_rep[2]);
        lines.push(format!("{id}: {m:.1}/{:.1}", truth.effect));
    }
    Ok(format!("effect mean/truth {}", lines.join(", ")))
}

/// Six subjects: coefficients and LS-means against hand normal equations.
pub fn ancova_hand_dataset() -> Check {
    let arms = [Arm::Control, Arm::Control, Arm::Control, Arm::Active, Arm::Active, Arm::Active];
    let y0 = [2.0, 2.4, 1.8, 2.2, 2.6, 1.9];
    let y3 = [2.3, 2.5, 2.0, 2.7, 3.0, 2.5];
    let fit = ancova(&arms, &y0, &y3).map_err(|e| e.to_string())?;
    let x = DMatrix::from_fn(6, 3, |i, j| [1.0, if arms[i].is_active() { 1.0 } else { 0.0 }, y0[i]][j]);
    let y = DVector::from_fn(6, |i, _| y3[i] - y0[i]);
    let (b, inv) = normal_equations(&x, &y);
    let r = &y - &x * &b;
    let s2 = r.dot(&r) / 3.0;
    let ybar0 = y0.iter().sum::<f64>() / 6.0;
    let ml = LITRES_TO_ML;
    let control = (b[0] + b[2] * ybar0) * ml;
    let active = (b[0] + b[1] + b[2] * ybar0) * ml;
    let effect_var = s2 * inv[(1, 1)] * ml * ml;
    let gaps = [
        (fit.effect.point - b[1] * ml).abs(),
        (fit.mean_change_control.point - control).abs(),
        (fit.mean_change_active.point - active).abs(),
        (fit.effect.variance - effect_var).abs() / ml,
    ];
    let worst = gaps.iter().fold(0.0_f64, |a, &b| a.max(b)) / ml;
    ensure(worst < 1e-8 && fit.effect.df == 3.0, || format!("gaps {gaps:?}, df {}", fit.effect.df))?;
    Ok(format!("max gap {worst:.1e}"))
}

/// Nominal 95% coverage of the ANCOVA interval on normal data.
pub fn ancova_nominal_coverage(sims: usize) -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let n = 20;
    let arms: Vec<Arm> = (0..2 * n).map(|i| if i < n { Arm::Control } else { Arm::Active }).collect();
    let truth = 0.2 * LITRES_TO_ML;
    let mut hits = 0;
    for _ in 0..sims {
        let mut y0 = Vec::with_capacity(2 * n);
        let mut y3 = Vec::with_capacity(2 * n);
        for arm in &arms {
            let base = 2.0 + 0.5 * rng.sample::<f64, _>(StandardNormal);
            let z = if arm.is_active() { 1.0 } else { 0.0 };
            let e: f64 = 0.3 * rng.sample::<f64, _>(StandardNormal);
            y0.push(base);
            y3.push(base + 0.1 + 0.2 * z - 0.1 * base + e);
        }
        let fit = ancova(&arms, &y0, &y3).map_err(|e| e.to_string())?;
        if PooledEstimate::single(fit.effect).covers(truth) {
            hits += 1;
        }
    }
    let cov = hits as f64 / sims as f64;
    ensure((cov - 0.95).abs() <= 0.007, || format!("coverage {cov:.4}"))?;
    Ok(format!("coverage {cov:.4} over {sims} sims"))
}

// ---------------------------------------------------------------- algebra

fn rows_with_patterns(n: usize, seed: u64) -> Vec<(DerivedVars, [Option<f64>; 4])> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let disc = [None, Some(3), Some(2), Some(1)][i % 4];
            let mut y = [0.0; 4];
            y[0] = 2.0 + 0.4 * rng.sample::<f64, _>(StandardNormal);
            for t in 1..4 {
                let shift = if disc.is_some_and(|d| d <= t) { -0.2 } else { 0.1 };
                y[t] = 0.3 + 0.8 * y[t - 1] + shift + 0.2 * rng.sample::<f64, _>(StandardNormal);
            }
            (DerivedVars::from_disc_time(disc), y.map(Some))
        })
        .collect()
}

/// PICS and PICS-R with fixed centring: identical fitted values, and the
/// pattern intercepts related by the reparameterisation.
pub fn pics_equals_pics_r() -> Check {
    let rows = rows_with_patterns(80, 5);
    let (mu0, mu1, mu2) = (2.0, 2.2, 2.3);
    let (d11, d21, d22) = (-0.25, -0.15, -0.35);
    let residuals: Vec<[f64; VISITS]> = rows
        .iter()
        .map(|(v, y)| {
            let y = y.map(|a| a.unwrap());
            let r1 = y[1] - mu1 - if v.d(1) { d11 } else { 0.0 };
            let r2 = y[2]
                - mu2
                - match v.pattern(2).as_str() {
                    "OX" => d21,
                    "XX" => d22,
                    _ => 0.0,
                };
            [y[0] - mu0, r1, r2]
        })
        .collect();
    let src: Vec<OutcomeRow> = rows
        .iter()
        .zip(&residuals)
        .map(|((vars, y), r)| OutcomeRow { vars: *vars, y, r: Some(r) })
        .collect();

    let fit = |text: &str, visit: usize| -> Result<(Vec<String>, DVector<f64>, DVector<f64>), String> {
        let design = build_design(&parse_formula(text).unwrap(), &src).map_err(|e| e.to_string())?;
        let y = DVector::from_fn(src.len(), |i, _| src[i].y[visit].unwrap());
        let f = ols_fit(&design.matrix, &y).map_err(|e| e.to_string())?;
        let fitted = &design.matrix * &f.coefficients;
        Ok((design.labels, f.coefficients, fitted))
    };
    let coef = |labels: &[String], b: &DVector<f64>, name: &str| b[labels.iter().position(|l| l == name).unwrap()];

    let (l2, a2, f2) = fit("Y2 = P2 Y0 Y1", 2)?;
    let (m2, d2, g2) = fit("Y2 = P2 R0 R1", 2)?;
    let (l3, a3, f3) = fit("Y3 = P3 Y0 Y1 Y2", 3)?;
    let (m3, d3, g3) = fit("Y3 = P3 R0 R1 R2", 3)?;
    let fitted_gap = (&f2 - &g2).amax().max((&f3 - &g3).amax());

    let b21 = coef(&m2, &d2, "R1");
    let (b31, b32) = (coef(&m3, &d3, "R1"), coef(&m3, &d3, "R2"));
    let mapping = [
        coef(&l2, &a2, "P2:XX") - (coef(&m2, &d2, "P2:XX") - b21 * d11),
        coef(&l2, &a2, "P2:OX") - coef(&m2, &d2, "P2:OX"),
        coef(&l3, &a3, "P3:OOX") - coef(&m3, &d3, "P3:OOX"),
        coef(&l3, &a3, "P3:OXX") - (coef(&m3, &d3, "P3:OXX") - b32 * d21),
        coef(&l3, &a3, "P3:XXX") - (coef(&m3, &d3, "P3:XXX") - b31 * d11 - b32 * d22),
        coef(&l3, &a3, "Y1") - b31,
    ];
    let map_gap = mapping.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    ensure(fitted_gap < 1e-8 && map_gap < 1e-8, || {
        format!("fitted gap {fitted_gap:e}, mapping gaps {mapping:?}")
    })?;
    Ok(format!("fitted gap {fitted_gap:.1e}, mapping gap {map_gap:.1e}"))
}

fn oics_params(a11: f64, a21: f64, a31: f64) -> Vec<StepParams> {
    let spec = builtin_spec(ModelName::Oics);
    vec![
        StepParams::from_labels(spec.formula(1), &[("Intercept", 0.4), ("D1:1", a11), ("Y0", 0.9)]).unwrap(),
        StepParams::from_labels(spec.formula(2), &[("Intercept", 0.2), ("D2:1", a21), ("Y0", 0.3), ("Y1", 0.6)])
            .unwrap(),
        StepParams::from_labels(
            spec.formula(3),
            &[("Intercept", 0.1), ("D3:1", a31), ("Y0", 0.2), ("Y1", 0.35), ("Y2", 0.45)],
        )
        .unwrap(),
    ]
}

/// OICS pattern means depend on the pattern; OICS-R's do not.
pub fn oics_differs_from_oics_r() -> Check {
    let mu0 = 2.14;
    let (a11, a21, a31) = (-0.3, -0.2, -0.25);
    let (b21, b31, b32) = (0.6, 0.35, 0.45);
    let oics = predict_pattern_means(&builtin_spec(ModelName::Oics), &oics_params(a11, a21, a31), mu0)
        .map_err(|e| e.to_string())?;
    let gap = oics["XXX"][2] - oics["OXX"][2];
    let expected = b31 * a11 + b32 * b21 * a11;
    ensure((gap - expected).abs() < 1e-12 && gap.abs() > 1e-3, || {
        format!("OICS XXX-OXX {gap} vs {expected}")
    })?;
    ensure((oics["OXX"][2] - oics["OOX"][2]).abs() > 1e-3, || "OICS OXX equals OOX".into())?;

    let flat = predict_pattern_means(&builtin_spec(ModelName::Oics), &oics_params(0.0, 0.0, 0.0), mu0)
        .map_err(|e| e.to_string())?;
    ensure(flat.values().all(|m| (0..3).all(|j| (m[j] - flat["OOO"][j]).abs() < 1e-12)), || {
        "zero shifts still separate patterns".into()
    })?;

    let spec_r = builtin_spec(ModelName::OicsR);
    let (mu, delta) = ([2.4, 2.5, 2.55], [-0.3, -0.35, -0.4]);
    let params: Vec<StepParams> = (1..=VISITS)
        .map(|j| {
            let d = format!("D{j}:1");
            let mut v: Vec<(&str, f64)> = vec![("Intercept", mu[j - 1]), (d.as_str(), delta[j - 1])];
            let slopes = [("R0", 0.8), ("R1", 0.5), ("R2", 0.4)];
            v.extend_from_slice(&slopes[..j]);
            StepParams::from_labels(spec_r.formula(j), &v).unwrap()
        })
        .collect();
    let r = predict_pattern_means(&spec_r, &params, mu0).map_err(|e| e.to_string())?;
    let off = mu[2] + delta[2];
    for p in ["OOX", "OXX", "XXX"] {
        ensure((r[p][2] - off).abs() < 1e-12, || format!("OICS-R {p}: {} vs {off}", r[p][2]))?;
    }
    ensure((r["OOO"][2] - mu[2]).abs() < 1e-12, || "OICS-R on-treatment mean".into())?;
    Ok(format!("OICS XXX-OXX = {gap:.4}; OICS-R off patterns all {off:.2}"))
}

/// Appendix values of the closed-form bias and variance inflation.
pub fn theory_values() -> Check {
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    ensure(theory_bias(300.0, 50.0, 2.5, 2.5) == 0.0, || "SAA-active bias not 0".into())?;
    let b = theory_bias(300.0, 50.0, 400.0, 0.0);
    ensure((b - 42.857142857).abs() < 1e-6, || format!("bias {b}"))?;
    ensure(close(theory_bias(300.0, 50.0, 0.0, 400.0), -b), || "antisymmetry".into())?;
    let v = theory_var_inflation(0.90, 0.05, 0.05).map_err(|e| e.to_string())?;
    ensure(close(v, 0.10), || format!("group-mean inflation {v}"))?;
    let expected = [((0.1, 0.1), 0.10), ((0.1, 0.2), 0.15), ((0.2, 0.2), 0.20), ((0.5, 0.5), 0.50)];
    for ((c, a), want) in expected {
        let got = theory_effect_inflation(c, a, 0.5).map_err(|e| e.to_string())?;
        ensure(close(got, want), || format!("inflation at {c}/{a}: {got}"))?;
    }
    ensure(theory_var_inflation(0.9, 0.1, 0.0).map_err(|e| e.to_string())? == 0.0, || "n3=0".into())?;
    ensure(theory_var_inflation(0.9, 0.0, 0.1).is_err(), || "n2=0 accepted".into())?;
    Ok("bias 0 and 42.857; inflations 10/15/20/50%".into())
}

/// With nothing missing, every model's pooled ANCOVA equals the full-data fit.
pub fn zero_missing_all_models_agree() -> Check {
    let ds = complete_trial(71, 50, 1);
    let full = ancova_full(&ds, VISITS).map_err(|e| e.to_string())?;
    let complete_df = (ds.subjects.len() - 3) as f64;
    for name in ModelName::ALL {
        let cfg = ImputationConfig {
            m: 3,
            seed: 8,
            ..Default::default()
        };
        let out = impute(&ds, &builtin_spec(name), &cfg).map_err(|e| e.to_string())?;
        ensure(out.all_ok(), || format!("{name}: {:?}", out.first_failure()))?;
        let per_copy: Vec<(f64, f64)> = out
            .copies
            .iter()
            .map(|c| {
                let t = ancova(&out.arms, &c.column(0), &c.column(VISITS)).unwrap();
                (t.effect.point, t.effect.variance)
            })
            .collect();
        let pooled = rubin_pool(&per_copy, complete_df).map_err(|e| e.to_string())?;
        ensure(
            (pooled.point - full.effect.point).abs() < 1e-9
                && pooled.between_var < 1e-12
                && rel_diff(pooled.within_var, full.effect.variance) < 1e-12,
            || format!("{name}: {pooled:?} vs {:?}", full.effect),
        )?;
    }
    Ok(format!("all 8 models give effect {:.3} mL", full.effect.point))
}
