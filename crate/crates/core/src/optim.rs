//! Derivative-free optimizers: golden-section search on an interval and
//! Nelder–Mead on R^n.

const INV_PHI: f64 = 0.618_033_988_749_894_9; // (sqrt(5) - 1) / 2

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMin {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Golden-section minimization on `[lo, hi]` until the bracket is narrower
/// than `xtol`. The endpoints are also considered, so a boundary minimum is
/// returned exactly.
pub fn golden_section_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, xtol: f64) -> ScalarMin {
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut iterations = 0;
    while b - a > xtol && iterations < 500 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        iterations += 1;
    }
    let mid = 0.5 * (a + b);
    [(lo, f(lo)), (hi, f(hi)), (mid, f(mid)), (c, fc), (d, fd)]
        .into_iter()
        .filter(|(_, v)| !v.is_nan())
        .fold(
            ScalarMin {
                x: mid,
                value: f64::INFINITY,
                iterations,
            },
            |best, (x, v)| {
                if v < best.value {
                    ScalarMin {
                        x,
                        value: v,
                        iterations,
                    }
                } else {
                    best
                }
            },
        )
}

/// Global minimum over `[lo, hi]`: a uniform scan of `grid_points` points,
/// then golden-section refinement on the bracket around the best grid point.
/// Unimodality is not assumed.
pub fn grid_golden_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, grid_points: usize, xtol: f64) -> ScalarMin {
    assert!(grid_points >= 3, "grid needs at least three points");
    let step = (hi - lo) / (grid_points - 1) as f64;
    let node = |i: usize| if i == grid_points - 1 { hi } else { lo + i as f64 * step };
    let (best_i, best_v) = (0..grid_points)
        .map(|i| (i, f(node(i))))
        .filter(|(_, v)| !v.is_nan())
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let left = node(best_i.saturating_sub(1));
    let right = node((best_i + 1).min(grid_points - 1));
    let refined = golden_section_min(&f, left, right, xtol);
    if refined.value <= best_v {
        refined
    } else {
        ScalarMin {
            x: node(best_i),
            value: best_v,
            iterations: refined.iterations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub initial_step: f64,
    /// Convergence: spread of simplex values at most this...
    pub ftol: f64,
    /// ...and simplex diameter (max-norm) at most this.
    pub xtol: f64,
    pub max_evals: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            initial_step: 0.5,
            ftol: 1e-15,
            xtol: 1e-10,
            max_evals: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Nelder–Mead simplex minimization with standard coefficients
/// (reflection 1, expansion 2, contraction 1/2, shrink 1/2).
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], opts: &NelderMeadOptions) -> NelderMeadResult {
    let n = x0.len();
    assert!(n > 0, "empty starting point");
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut evals = 0usize;
    let mut simplex: Vec<(f64, Vec<f64>)> = Vec::with_capacity(n + 1);
    simplex.push((eval(x0), x0.to_vec()));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += opts.initial_step;
        simplex.push((eval(&x), x));
    }
    evals += n + 1;

    let mut converged = false;
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.0.total_cmp(&b.0));
        let spread = simplex[n].0 - simplex[0].0;
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(_, x)| x.iter().zip(&simplex[0].1).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread.abs() <= opts.ftol * (1.0 + simplex[0].0.abs()) && diameter <= opts.xtol {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for (_, x) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].1)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(1.0);
        let fr = eval(&xr);
        evals += 1;
        if fr < simplex[0].0 {
            let xe = along(2.0);
            let fe = eval(&xe);
            evals += 1;
            simplex[n] = if fe < fr { (fe, xe) } else { (fr, xr) };
            continue;
        }
        if fr < simplex[n - 1].0 {
            simplex[n] = (fr, xr);
            continue;
        }
        // outside contraction when the reflection improved on the worst point
        let xc = along(if fr < simplex[n].0 { 0.5 } else { -0.5 });
        let fc = eval(&xc);
        evals += 1;
        if fc < simplex[n].0.min(fr) {
            simplex[n] = (fc, xc);
            continue;
        }
        let best = simplex[0].1.clone();
        for (v, x) in simplex.iter_mut().skip(1) {
            for (xi, bi) in x.iter_mut().zip(&best) {
                *xi = bi + 0.5 * (*xi - bi);
            }
            *v = eval(x);
        }
        evals += n;
    }
    simplex.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (value, x) = simplex.swap_remove(0);
    NelderMeadResult {
        x,
        value,
        evals,
        converged,
    }
}
