//! Small deterministic derivative-free minimizers.

/// Result of a scalar or simplex minimization.
#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Golden-section search for the minimum of `f` on `[a, b]`.
///
/// Assumes `f` is unimodal on the bracket. Stops once the bracket width
/// drops below `tol` or after `max_iter` shrink steps.
pub fn golden_section(
    f: impl Fn(f64) -> f64,
    mut a: f64,
    mut b: f64,
    tol: f64,
    max_iter: usize,
) -> MinimizeResult {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;

    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut iterations = 0;

    while iterations < max_iter && (b - a) > tol {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
        iterations += 1;
    }

    let (x, fx) = if f1 < f2 { (x1, f1) } else { (x2, f2) };
    MinimizeResult {
        x: vec![x],
        fx,
        iterations,
        converged: (b - a) <= tol,
    }
}

/// Scan `n` equally spaced points on `[a, b]` and return a bracket
/// `(lo, hi)` around the best point, or `None` when the minimum sits on
/// the scan boundary (no interior bracket exists).
pub fn coarse_bracket(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> Option<(f64, f64)> {
    assert!(n >= 3);
    let xs: Vec<f64> = (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect();
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let best = fs
        .iter()
        .enumerate()
        .min_by(|(_, u), (_, v)| u.total_cmp(v))
        .map(|(i, _)| i)
        .unwrap();
    if best == 0 || best == n - 1 {
        return None;
    }
    Some((xs[best - 1], xs[best + 1]))
}

/// Nelder-Mead simplex descent with box constraints handled by clamping
/// every candidate vertex into `[lower, upper]`.
///
/// Deterministic: fixed reflection/expansion/contraction coefficients and
/// no randomized restarts. Stops when both the simplex extent and the
/// spread of function values fall below `tol` (per coordinate, absolute),
/// or after `max_iter` iterations.
pub fn nelder_mead(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    step: &[f64],
    lower: &[f64],
    upper: &[f64],
    tol: f64,
    max_iter: usize,
) -> MinimizeResult {
    let n = x0.len();
    assert!(n >= 1);
    assert_eq!(step.len(), n);
    assert_eq!(lower.len(), n);
    assert_eq!(upper.len(), n);

    let clamp = |x: &mut Vec<f64>| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };

    // Initial simplex: x0 plus one step along each axis. If the step lands
    // outside the box, go the other way so the vertices stay distinct.
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let mut v0 = x0.to_vec();
    clamp(&mut v0);
    simplex.push((v0.clone(), f(&v0)));
    for i in 0..n {
        let mut v = v0.clone();
        let up = v[i] + step[i];
        v[i] = if up <= upper[i] { up } else { v[i] - step[i] };
        clamp(&mut v);
        let fv = f(&v);
        simplex.push((v, fv));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));

        let extent = (0..n)
            .map(|i| {
                let lo = simplex.iter().map(|(v, _)| v[i]).fold(f64::INFINITY, f64::min);
                let hi = simplex
                    .iter()
                    .map(|(v, _)| v[i])
                    .fold(f64::NEG_INFINITY, f64::max);
                hi - lo
            })
            .fold(0.0f64, f64::max);
        let f_spread = simplex[n].1 - simplex[0].1;
        if extent <= tol && (f_spread.abs() <= tol.max(1e-14 * simplex[0].1.abs())) {
            converged = true;
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; n];
        for (v, _) in simplex.iter().take(n) {
            for i in 0..n {
                centroid[i] += v[i] / n as f64;
            }
        }

        let worst = simplex[n].clone();
        let mut reflected: Vec<f64> = (0..n)
            .map(|i| centroid[i] + (centroid[i] - worst.0[i]))
            .collect();
        clamp(&mut reflected);
        let f_reflected = f(&reflected);

        if f_reflected < simplex[0].1 {
            let mut expanded: Vec<f64> = (0..n)
                .map(|i| centroid[i] + 2.0 * (centroid[i] - worst.0[i]))
                .collect();
            clamp(&mut expanded);
            let f_expanded = f(&expanded);
            simplex[n] = if f_expanded < f_reflected {
                (expanded, f_expanded)
            } else {
                (reflected, f_reflected)
            };
        } else if f_reflected < simplex[n - 1].1 {
            simplex[n] = (reflected, f_reflected);
        } else {
            let mut contracted: Vec<f64> = (0..n)
                .map(|i| centroid[i] + 0.5 * (worst.0[i] - centroid[i]))
                .collect();
            clamp(&mut contracted);
            let f_contracted = f(&contracted);
            if f_contracted < worst.1 {
                simplex[n] = (contracted, f_contracted);
            } else {
                // Shrink toward the best vertex.
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    for (x, &b) in entry.0.iter_mut().zip(&best) {
                        *x = b + 0.5 * (*x - b);
                    }
                    clamp(&mut entry.0);
                    entry.1 = f(&entry.0);
                }
            }
        }
        iterations += 1;
    }

    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    MinimizeResult {
        x: simplex[0].0.clone(),
        fx: simplex[0].1,
        iterations,
        converged,
    }
}
