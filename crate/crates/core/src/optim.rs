//! Small derivative-free and quasi-Newton minimizers used by the rating fits.

/// Outcome of a minimization run.
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    /// Stop once the largest vertex distance from the best vertex drops below this.
    pub diameter_tol: f64,
    pub max_iterations: usize,
    /// Edge length of the initial simplex along each axis.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            diameter_tol: 1e-4,
            max_iterations: 500,
            initial_step: 0.5,
        }
    }
}

/// Nelder-Mead simplex search with the standard reflection, expansion,
/// contraction and shrink coefficients (1, 2, 0.5, 0.5).
pub fn nelder_mead<F>(mut f: F, start: &[f64], opts: NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(start.to_vec());
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += opts.initial_step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| sanitize(f(v))).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        if diameter(&simplex) < opts.diameter_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let reflected = along(1.0);
        let f_r = sanitize(f(&reflected));
        if f_r < values[0] {
            let expanded = along(2.0);
            let f_e = sanitize(f(&expanded));
            if f_e < f_r {
                simplex[n] = expanded;
                values[n] = f_e;
            } else {
                simplex[n] = reflected;
                values[n] = f_r;
            }
            continue;
        }
        if f_r < values[n - 1] {
            simplex[n] = reflected;
            values[n] = f_r;
            continue;
        }
        let (contracted, f_c) = if f_r < values[n] {
            let p = along(0.5);
            let fp = sanitize(f(&p));
            (p, fp)
        } else {
            let p = along(-0.5);
            let fp = sanitize(f(&p));
            (p, fp)
        };
        if f_c < values[n].min(f_r) {
            simplex[n] = contracted;
            values[n] = f_c;
            continue;
        }
        // shrink towards the best vertex
        let best = simplex[0].clone();
        for i in 1..=n {
            for k in 0..n {
                simplex[i][k] = best[k] + 0.5 * (simplex[i][k] - best[k]);
            }
            values[i] = sanitize(f(&simplex[i]));
        }
    }

    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    Minimum {
        x: simplex[best].clone(),
        value: values[best],
        iterations,
        converged,
    }
}

fn diameter(simplex: &[Vec<f64>]) -> f64 {
    let best = &simplex[0];
    simplex[1..]
        .iter()
        .map(|v| {
            v.iter()
                .zip(best)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    /// Converged when the max-norm of the gradient falls below this.
    pub grad_tol: f64,
    pub max_iterations: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            grad_tol: 1e-6,
            max_iterations: 200,
        }
    }
}

/// BFGS with an Armijo backtracking line search.
///
/// `f` returns the objective value and writes the gradient into its second
/// argument.
pub fn bfgs<F>(mut f: F, start: &[f64], opts: BfgsOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = start.len();
    let mut x = start.to_vec();
    let mut g = vec![0.0; n];
    let mut value = f(&x, &mut g);
    if n == 0 {
        return Minimum {
            x,
            value,
            iterations: 0,
            converged: true,
        };
    }
    // inverse Hessian approximation, row-major
    let mut hinv = identity(n);
    let mut first_step = true;

    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let mut flat_steps = 0;

    for iter in 0..opts.max_iterations {
        if max_abs(&g) < opts.grad_tol {
            return Minimum {
                x,
                value,
                iterations: iter,
                converged: true,
            };
        }
        for i in 0..n {
            dir[i] = -(0..n).map(|j| hinv[i * n + j] * g[j]).sum::<f64>();
        }
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        if !(slope < 0.0) {
            // not a descent direction: reset to steepest descent
            hinv = identity(n);
            for i in 0..n {
                dir[i] = -g[i];
            }
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }
        let mut step = if first_step {
            (1.0 / max_abs(&dir)).min(1.0)
        } else {
            1.0
        };

        let mut accepted = false;
        let mut new_value = value;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            new_value = f(&x_new, &mut g_new);
            if new_value.is_finite() && new_value <= value + 1e-4 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no further progress possible at working precision
            let converged = max_abs(&g) < opts.grad_tol.sqrt();
            return Minimum {
                x,
                value,
                iterations: iter,
                converged,
            };
        }

        // accepted steps that leave the value unchanged mean the objective
        // is flat at working precision
        if new_value < value {
            flat_steps = 0;
        } else {
            flat_steps += 1;
            if flat_steps >= 5 {
                return Minimum {
                    x: x_new.clone(),
                    value: new_value,
                    iterations: iter + 1,
                    converged: max_abs(&g_new) < opts.grad_tol.sqrt(),
                };
            }
        }

        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if first_step {
                // rescale the initial inverse Hessian before the first update
                let yy: f64 = y.iter().map(|v| v * v).sum();
                let scale = sy / yy;
                for v in hinv.iter_mut() {
                    *v *= scale;
                }
                first_step = false;
            }
            bfgs_update(&mut hinv, &s, &y, sy);
        }
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        value = new_value;
    }
    let converged = max_abs(&g) < opts.grad_tol;
    Minimum {
        x,
        value,
        iterations: opts.max_iterations,
        converged,
    }
}

fn bfgs_update(hinv: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| hinv[i * n + j] * y[j]).sum())
        .collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            hinv[i * n + j] +=
                (1.0 + yhy * rho) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Golden-section search for the minimum of a unimodal function on `[lo, hi]`.
/// Returns the abscissa once the bracket is narrower than `tol`.
pub fn golden_section<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64
where
    F: FnMut(f64) -> f64,
{
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Solve a small dense linear system `a x = b` by Gaussian elimination with
/// partial pivoting. Returns `None` when the matrix is numerically singular.
pub fn solve_linear(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot =
            (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if a[pivot * n + col].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..n {
            let factor = a[row * n + col] / a[col * n + col];
            if factor != 0.0 {
                for k in col..n {
                    a[row * n + k] -= factor * a[col * n + k];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row * n + k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row * n + row];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// Numerically stable logistic function.
pub fn logistic(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
