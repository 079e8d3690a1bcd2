use super::StatError;

#[derive(Debug, Clone)]
pub struct MaximizeOptions {
    pub max_iterations: usize,
    /// Convergence when `‖∇f‖ < gradient_tolerance · (1 + |f|)`.
    pub gradient_tolerance: f64,
    /// Relative step for central finite differences.
    pub fd_step: f64,
}

impl Default for MaximizeOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            fd_step: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Maximum {
    pub argmax: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub message: Option<String>,
}

type Bounds<'a> = Option<&'a [(f64, f64)]>;

fn project(x: &mut [f64], bounds: Bounds) {
    if let Some(b) = bounds {
        for (xi, &(lo, hi)) in x.iter_mut().zip(b) {
            *xi = xi.clamp(lo, hi);
        }
    }
}

/// Central differences of `f`, one-sided against an active bound.
fn fd_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], step: f64, bounds: Bounds) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = step * x[i].abs().max(1.0);
            let (lo, hi) = bounds.map_or((f64::NEG_INFINITY, f64::INFINITY), |b| b[i]);
            let up = (x[i] + h).min(hi);
            let down = (x[i] - h).max(lo);
            probe[i] = up;
            let fu = f(&probe);
            probe[i] = down;
            let fd = f(&probe);
            probe[i] = x[i];
            if up > down {
                (fu - fd) / (up - down)
            } else {
                0.0
            }
        })
        .collect()
}

/// Gradient with components that push against an active bound removed.
fn projected(grad: &[f64], x: &[f64], bounds: Bounds) -> Vec<f64> {
    match bounds {
        None => grad.to_vec(),
        Some(b) => grad
            .iter()
            .zip(x)
            .zip(b)
            .map(|((&g, &xi), &(lo, hi))| {
                // ascent direction is +g
                if (xi <= lo && g < 0.0) || (xi >= hi && g > 0.0) {
                    0.0
                } else {
                    g
                }
            })
            .collect(),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Maximise a smooth objective by BFGS with backtracking (Armijo) line
/// search and finite-difference gradients, projecting onto optional box
/// bounds.
///
/// Non-finite objective values met during the line search are treated as
/// failed steps; if no step can be found the result is returned with
/// `converged = false` and a diagnostic message.
pub fn maximize<F: Fn(&[f64]) -> f64>(
    objective: F,
    start: &[f64],
    bounds: Option<&[(f64, f64)]>,
    options: &MaximizeOptions,
) -> Result<Maximum, StatError> {
    let n = start.len();
    if let Some(b) = bounds {
        if b.len() != n {
            return Err(StatError::DimensionMismatch(format!(
                "{} bounds for {n} parameters",
                b.len()
            )));
        }
    }
    let mut x = start.to_vec();
    project(&mut x, bounds);
    let mut fx = objective(&x);
    if !fx.is_finite() {
        return Err(StatError::NonFiniteObjective);
    }
    let mut grad = fd_gradient(&objective, &x, options.fd_step, bounds);
    // inverse Hessian approximation of -f, row-major
    let mut h = identity(n);
    let mut fresh = true;
    let message: Option<String>;
    let mut iterations = 0;

    loop {
        let pg = projected(&grad, &x, bounds);
        let gnorm = norm(&pg);
        if gnorm < options.gradient_tolerance * (1.0 + fx.abs()) {
            return Ok(Maximum {
                argmax: x,
                value: fx,
                converged: true,
                iterations,
                gradient_norm: gnorm,
                message: None,
            });
        }
        if iterations >= options.max_iterations {
            message = Some(format!("max iterations ({}) reached", options.max_iterations));
            break;
        }
        iterations += 1;

        // ascent direction d = H·g
        let mut d: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &pg)).collect();
        if dot(&d, &pg) <= 0.0 {
            h = identity(n);
            fresh = true;
            d = pg.clone();
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            project(&mut trial, bounds);
            let step: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let ft = objective(&trial);
            if ft.is_finite() && ft >= fx + 1e-4 * dot(&grad, &step) && norm(&step) > 0.0 {
                accepted = Some((trial, ft, step));
                break;
            }
            t *= 0.5;
        }

        let Some((x_new, f_new, s)) = accepted else {
            if !fresh {
                h = identity(n);
                fresh = true;
                continue;
            }
            message = Some("line search failed to improve the objective".into());
            break;
        };

        let g_new = fd_gradient(&objective, &x_new, options.fd_step, bounds);
        // curvature pair for the minimisation of -f
        let y: Vec<f64> = grad.iter().zip(&g_new).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if fresh {
                let scale = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v *= scale);
            }
            bfgs_update(&mut h, &s, &y, sy);
            fresh = false;
        } else {
            h = identity(n);
            fresh = true;
        }

        let stalled = (fx - f_new).abs() <= f64::EPSILON * fx.abs().max(1.0)
            && norm(&s) <= f64::EPSILON.sqrt() * norm(&x).max(1.0);
        x = x_new;
        fx = f_new;
        grad = g_new;
        if stalled && fresh {
            message = Some("no further progress".into());
            break;
        }
    }

    let gradient_norm = norm(&projected(&grad, &x, bounds));
    Ok(Maximum {
        argmax: x,
        value: fx,
        converged: false,
        iterations,
        gradient_norm,
        message,
    })
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}
