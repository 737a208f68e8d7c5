use nalgebra::{DMatrix, DVector};

/// Lawson-Hanson active-set NNLS in normal-equation form.
///
/// Minimizes `||E a - f||^2` subject to `a >= 0`, given `gram = E^T E` and
/// `rhs = E^T f`.
pub fn nnls(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let n = rhs.len();
    let scale = rhs.amax().max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];

    for _ in 0..3 * n.max(1) {
        let w = rhs - gram * &x;
        let next = (0..n).filter(|&j| !passive[j]).max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(j) = next.filter(|&j| w[j] > tol) else { break };
        passive[j] = true;

        for _ in 0..3 * n {
            let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let s = solve_subset(gram, rhs, &idx);
            if s.iter().all(|&v| v > 0.0) {
                for (k, &i) in idx.iter().enumerate() {
                    x[i] = s[k];
                }
                break;
            }
            // step back to the boundary of the feasible region
            let mut alpha = f64::INFINITY;
            for (k, &i) in idx.iter().enumerate() {
                if s[k] <= 0.0 {
                    let denom = x[i] - s[k];
                    if denom > 0.0 {
                        alpha = alpha.min(x[i] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (k, &i) in idx.iter().enumerate() {
                x[i] += alpha * (s[k] - x[i]);
                if x[i] <= f64::EPSILON * scale || s[k] <= 0.0 && alpha == 0.0 {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    x
}

fn solve_subset(gram: &DMatrix<f64>, rhs: &DVector<f64>, idx: &[usize]) -> Vec<f64> {
    let m = idx.len();
    let sub = DMatrix::from_fn(m, m, |r, c| gram[(idx[r], idx[c])]);
    let b = DVector::from_fn(m, |r, _| rhs[idx[r]]);
    let sol = match sub.clone().cholesky() {
        Some(ch) => ch.solve(&b),
        None => sub.lu().solve(&b).unwrap_or_else(|| DVector::zeros(m)),
    };
    sol.iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gram_form(e: &DMatrix<f64>, f: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        (e.transpose() * e, e.transpose() * f)
    }

    #[test]
    fn unconstrained_optimum_is_kept() {
        let e = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let truth = DVector::from_vec(vec![2.0, 3.0]);
        let f = &e * &truth;
        let (g, b) = gram_form(&e, &f);
        let x = nnls(&g, &b);
        assert!((x - truth).norm() < 1e-12);
    }

    #[test]
    fn negative_component_is_clamped() {
        // the unconstrained solution is (1, -1); best with a >= 0 is (0.5, 0)
        let e = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.0]);
        let f = DVector::from_vec(vec![0.0, -1.0]);
        let (g, b) = gram_form(&e, &f);
        let x = nnls(&g, &b);
        assert!(x.iter().all(|&v| v >= 0.0));
        // brute force over a fine grid of the feasible quadrant
        let cost = |a: f64, c: f64| (&e * DVector::from_vec(vec![a, c]) - &f).norm_squared();
        let mut best = f64::INFINITY;
        for i in 0..=200 {
            for j in 0..=200 {
                best = best.min(cost(i as f64 * 0.005, j as f64 * 0.005));
            }
        }
        assert!(cost(x[0], x[1]) <= best + 1e-12);
    }

    #[test]
    fn all_negative_gradient_gives_zero() {
        let e = DMatrix::identity(3, 3);
        let f = DVector::from_vec(vec![-1.0, -2.0, -3.0]);
        let (g, b) = gram_form(&e, &f);
        assert_eq!(nnls(&g, &b), DVector::zeros(3));
    }
}
