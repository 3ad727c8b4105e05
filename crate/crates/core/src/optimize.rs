//! Nelder–Mead simplex minimizer.

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
    /// Stop when every vertex lies within this distance of the best one.
    pub x_tol: f64,
    /// Initial edge length along each axis.
    pub step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_iter: 400, f_tol: 1e-12, x_tol: 1e-10, step: 0.1 }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0`. Non-finite values are treated as +∞.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], opts: NelderMeadOptions) -> NelderMeadResult {
    let d = x0.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..d {
        let mut x = x0.to_vec();
        x[i] += opts.step;
        let fx = eval(&x);
        simplex.push((x, fx));
    }

    let towards = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(a, b)| a + t * (b - a)).collect() };

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0];
        let worst = &simplex[d];
        let spread = (worst.1 - best.1).abs();
        let size = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&best.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= opts.f_tol * (1.0 + best.1.abs()) && size <= opts.x_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; d];
        for (x, _) in &simplex[..d] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / d as f64;
            }
        }
        let worst_x = simplex[d].0.clone();
        let f_worst = simplex[d].1;
        let f_second = simplex[d - 1].1;
        let f_best = simplex[0].1;

        let reflected = towards(&centroid, &worst_x, -1.0);
        let fr = eval(&reflected);
        if fr < f_best {
            let expanded = towards(&centroid, &worst_x, -2.0);
            let fe = eval(&expanded);
            simplex[d] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
            continue;
        }
        if fr < f_second {
            simplex[d] = (reflected, fr);
            continue;
        }
        let (contracted, fc) = if fr < f_worst {
            let c = towards(&centroid, &reflected, 0.5);
            let fc = eval(&c);
            (c, fc)
        } else {
            let c = towards(&centroid, &worst_x, 0.5);
            let fc = eval(&c);
            (c, fc)
        };
        if fc < fr.min(f_worst) {
            simplex[d] = (contracted, fc);
            continue;
        }
        let best_x = simplex[0].0.clone();
        for v in simplex.iter_mut().skip(1) {
            let x = towards(&best_x, &v.0, 0.5);
            let fx = eval(&x);
            *v = (x, fx);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    NelderMeadResult { x, fx, iterations, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nelder_mead(f, &[-1.2, 1.0], NelderMeadOptions { max_iter: 5000, ..Default::default() });
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn one_dimensional_quadratic() {
        let r = nelder_mead(|x| (x[0] - 3.0).powi(2), &[0.0], NelderMeadOptions::default());
        assert!((r.x[0] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn nan_is_avoided() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 0.5).powi(2) };
        let r = nelder_mead(f, &[0.05], NelderMeadOptions::default());
        assert!((r.x[0] - 0.5).abs() < 1e-8);
    }
}
