use crate::error::{Error, Result};
use crate::mat::Matrix;

/// Thin singular value decomposition a = u * diag(sigma) * vt with
/// q = min(rows, cols) retained components.
///
/// Factors are deterministic: singular values are sorted in non-increasing
/// order and each left singular vector is flipped so that its
/// largest-magnitude entry is positive (ties broken by lowest row index),
/// with the matching row of vt flipped alongside. Two calls on the same
/// matrix therefore return bit-identical factors.
#[derive(Debug, Clone, PartialEq)]
pub struct ThinSvd {
    /// rows x q, orthonormal columns.
    pub u: Matrix,
    /// q singular values, non-increasing, non-negative.
    pub sigma: Vec<f64>,
    /// q x cols, orthonormal rows.
    pub vt: Matrix,
}

/// Computes the thin SVD of a non-empty matrix.
///
/// The backend is one-sided Jacobi: plane rotations orthogonalize the columns
/// until the implicit Gram matrix is diagonal. Every subproblem of the solver
/// funnels through this factorization, and the coefficient matrices routinely
/// lose rank (a view observing fewer samples than k yields a rank-deficient
/// h-step coefficient), so the backend must factor such input exactly rather
/// than merely well-conditioned input. Jacobi does, with no randomness and a
/// fixed cyclic pair order, which keeps repeated calls bit-identical.
///
/// Fails with a numerical-failure error on non-finite input or if the sweep
/// limit is exhausted; no fallback is attempted.
pub fn thin_svd(a: &Matrix) -> Result<ThinSvd> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::Validation("thin_svd requires a non-empty matrix".into()));
    }
    if a.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("SVD input contains non-finite values".into()));
    }
    let mut f = if a.rows() >= a.cols() {
        jacobi_tall(a)?
    } else {
        // a = u s vt  <=>  a^T = vt^T s u^T
        let t = jacobi_tall(&a.transpose())?;
        ThinSvd { u: t.vt.transpose(), sigma: t.sigma, vt: t.u.transpose() }
    };

    // Sign convention: largest-magnitude entry of each u column positive.
    for j in 0..f.sigma.len() {
        let mut pivot = 0usize;
        let mut best = -1.0f64;
        for r in 0..f.u.rows() {
            let mag = f.u.get(r, j).abs();
            if mag > best {
                best = mag;
                pivot = r;
            }
        }
        if f.u.get(pivot, j) < 0.0 {
            for r in 0..f.u.rows() {
                f.u.set(r, j, -f.u.get(r, j));
            }
            for c in 0..f.vt.cols() {
                f.vt.set(j, c, -f.vt.get(j, c));
            }
        }
    }
    Ok(f)
}

const MAX_SWEEPS: usize = 64;

/// Relative off-diagonal tolerance for declaring two columns orthogonal.
/// Scales with the dot-product length because accumulated rounding does.
fn orth_tol(m: usize) -> f64 {
    (m as f64).max(8.0) * f64::EPSILON
}

/// One-sided Jacobi for rows >= cols. Works on the transpose so each column
/// of `a` is a contiguous row, and accumulates vt through the same rotations.
fn jacobi_tall(a: &Matrix) -> Result<ThinSvd> {
    let (m, n) = (a.rows(), a.cols());
    debug_assert!(m >= n);
    let mut bt = a.transpose(); // row i holds column i of a
    let mut vt = Matrix::identity(n);
    let tol = orth_tol(m);

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let (app, aqq, apq) = gram3(&bt, p, q);
                if apq == 0.0 || apq.abs() <= tol * (app * aqq).sqrt() {
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                if !theta.is_finite() {
                    // the optimal angle underflows to zero: nothing to rotate
                    continue;
                }
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut bt, p, q, c, s);
                rotate_rows(&mut vt, p, q, c, s);
                rotated = true;
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical("Jacobi SVD did not converge".into()));
    }

    let norms: Vec<f64> = (0..n)
        .map(|i| bt.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));

    let mut sigma = vec![0.0f64; n];
    let mut u = Matrix::zeros(m, n);
    let vt_sorted = Matrix::from_fn(n, n, |r, c| vt.get(order[r], c));
    let mut unset: Vec<usize> = Vec::new();
    for (pos, &src) in order.iter().enumerate() {
        sigma[pos] = norms[src];
        if norms[src] == 0.0 {
            unset.push(pos);
            continue;
        }
        for r in 0..m {
            u.set(r, pos, bt.get(src, r) / norms[src]);
        }
    }
    for &j in &unset {
        complete_column(&mut u, j, &order, &norms, &unset);
    }
    if sigma.iter().any(|s| !s.is_finite()) || u.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("SVD produced non-finite values".into()));
    }
    Ok(ThinSvd { u, sigma, vt: vt_sorted })
}

/// (||col p||^2, ||col q||^2, <col p, col q>) in one pass over the two rows
/// of the transposed working matrix.
fn gram3(bt: &Matrix, p: usize, q: usize) -> (f64, f64, f64) {
    let (mut app, mut aqq, mut apq) = (0.0, 0.0, 0.0);
    for (&x, &y) in bt.row(p).iter().zip(bt.row(q)) {
        app += x * x;
        aqq += y * y;
        apq += x * y;
    }
    (app, aqq, apq)
}

/// (row p, row q) <- (c row p - s row q, s row p + c row q)
fn rotate_rows(mat: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let (rp, rq) = mat.two_rows_mut(p, q);
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let (xv, yv) = (*x, *y);
        *x = c * xv - s * yv;
        *y = s * xv + c * yv;
    }
}

/// Fills u column `j` (a zero singular direction) with a deterministic unit
/// vector orthogonal to every already-set column: the canonical axis with the
/// largest residual outside their span (ties broken by lowest index), made
/// orthogonal by two elimination passes.
fn complete_column(u: &mut Matrix, j: usize, order: &[usize], norms: &[f64], unset: &[usize]) {
    let m = u.rows();
    let set: Vec<usize> = (0..order.len())
        .filter(|&col| {
            col != j && (norms[order[col]] > 0.0 || (unset.contains(&col) && col < j))
        })
        .collect();

    let mut best_axis = 0usize;
    let mut best_resid = -1.0f64;
    for axis in 0..m {
        let in_span: f64 = set.iter().map(|&col| u.get(axis, col) * u.get(axis, col)).sum();
        let resid = 1.0 - in_span;
        if resid > best_resid {
            best_resid = resid;
            best_axis = axis;
        }
    }

    let mut v = vec![0.0f64; m];
    v[best_axis] = 1.0;
    for _ in 0..2 {
        for &col in &set {
            let coef: f64 = (0..m).map(|r| v[r] * u.get(r, col)).sum();
            for (r, slot) in v.iter_mut().enumerate() {
                *slot -= coef * u.get(r, col);
            }
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for (r, x) in v.iter().enumerate() {
        u.set(r, j, x / norm);
    }
}

/// Orthogonal Procrustes step: returns the column-orthonormal q maximizing
/// tr(q^T g) over all q with q^T q = I, namely q = u * vt from the thin SVD
/// of g. The achieved maximum equals the sum of the singular values of g.
///
/// Requires rows >= cols; the row-orthonormal consensus constraint only ever
/// produces coefficient matrices with that orientation.
pub fn solve_trace_max(g: &Matrix) -> Result<Matrix> {
    if g.rows() < g.cols() {
        return Err(Error::Validation(format!(
            "solve_trace_max expects rows >= cols, got {}x{}",
            g.rows(),
            g.cols()
        )));
    }
    let f = thin_svd(g)?;
    Ok(f.u.mul(&f.vt))
}
