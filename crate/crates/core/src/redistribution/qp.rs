//! Dual active-set solver for strictly convex inequality-constrained QPs
//! (Goldfarb–Idnani).
//!
//! Solves `min 1/2 x'Gx + a'x` subject to `c_j'x >= b_j`. The iteration starts
//! from the unconstrained minimizer and adds one violated constraint at a
//! time, dropping constraints whose multipliers would turn negative. It needs
//! no feasible starting point, and a violated constraint that cannot be added
//! certifies infeasibility.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Indices of active constraints with their multipliers.
    pub active: Vec<(usize, f64)>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QpOutcome {
    Optimal(QpSolution),
    Infeasible { iterations: usize, violated: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QpError {
    #[error("Hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("active-set iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("active constraint normals became linearly dependent")]
    Degenerate,
}

/// Constraint `j` is column `j` of `c` with right-hand side `b[j]`.
pub fn solve_dual_active_set(
    g: &DMatrix<f64>,
    a: &DVector<f64>,
    c: &DMatrix<f64>,
    b: &DVector<f64>,
    feasibility_tol: f64,
    max_iter: usize,
) -> Result<QpOutcome, QpError> {
    let n = g.nrows();
    debug_assert_eq!(c.nrows(), n);
    let chol = g.clone().cholesky().ok_or(QpError::NotPositiveDefinite)?;
    let g_inv = chol.inverse();

    let mut x = -(&g_inv * a);
    let mut active: Vec<usize> = Vec::new();
    let mut mult: Vec<f64> = Vec::new();
    let mut iterations = 0;

    let slack = |x: &DVector<f64>, j: usize| c.column(j).dot(x) - b[j];

    loop {
        // Most violated inactive constraint, normalized by its normal length.
        let mut worst: Option<(usize, f64)> = None;
        for j in 0..c.ncols() {
            if active.contains(&j) {
                continue;
            }
            let norm = c.column(j).norm().max(1.0);
            let s = slack(&x, j) / norm;
            if s < -feasibility_tol && worst.is_none_or(|(_, w)| s < w) {
                worst = Some((j, s));
            }
        }
        let Some((p, _)) = worst else {
            return Ok(QpOutcome::Optimal(QpSolution {
                x,
                active: active.into_iter().zip(mult).collect(),
                iterations,
            }));
        };
        let np: DVector<f64> = c.column(p).into_owned();
        let mut mult_p = 0.0;

        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(QpError::IterationLimit(max_iter));
            }
            let ginv_np = &g_inv * &np;
            let (z, r) = if active.is_empty() {
                (ginv_np.clone(), DVector::zeros(0))
            } else {
                let nmat = DMatrix::from_columns(&active.iter().map(|&j| c.column(j)).collect::<Vec<_>>());
                let ginv_n = &g_inv * &nmat;
                let m = nmat.transpose() * &ginv_n;
                let r = m
                    .lu()
                    .solve(&(nmat.transpose() * &ginv_np))
                    .ok_or(QpError::Degenerate)?;
                (&ginv_np - &ginv_n * &r, r)
            };

            // Largest dual step keeping active multipliers non-negative.
            let mut partial: Option<(usize, f64)> = None;
            for (idx, &rj) in r.iter().enumerate() {
                if rj > 0.0 {
                    let t = mult[idx] / rj;
                    if partial.is_none_or(|(_, best)| t < best) {
                        partial = Some((idx, t));
                    }
                }
            }

            let curvature = z.dot(&np);
            if curvature <= 1e-14 * np.dot(&ginv_np) {
                // np lies in the span of the active normals: pure dual step.
                let Some((drop, t1)) = partial else {
                    return Ok(QpOutcome::Infeasible {
                        iterations,
                        violated: p,
                    });
                };
                for (u, rj) in mult.iter_mut().zip(r.iter()) {
                    *u -= t1 * rj;
                }
                mult_p += t1;
                active.remove(drop);
                mult.remove(drop);
                continue;
            }

            let full = -slack(&x, p) / curvature;
            let (t, dropped) = match partial {
                Some((idx, t1)) if t1 < full => (t1, Some(idx)),
                _ => (full, None),
            };
            x += &z * t;
            for (u, rj) in mult.iter_mut().zip(r.iter()) {
                *u -= t * rj;
            }
            mult_p += t;
            match dropped {
                None => {
                    active.push(p);
                    mult.push(mult_p);
                    break;
                }
                Some(idx) => {
                    active.remove(idx);
                    mult.remove(idx);
                }
            }
        }
    }
}
