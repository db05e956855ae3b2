//! Small numerical kernels shared by the spectral and potential-theoretic
//! code: sparse Laplacians, conjugate gradients and a Lanczos iteration.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::cluster::WeightedSubgraph;
use crate::error::{Error, Result};

/// Weighted graph Laplacian `(Lf)(x) = sum_y c_xy (f(x) - f(y))` in
/// compressed row form, with optional per-edge multipliers.
#[derive(Debug, Clone)]
pub struct Laplacian {
    start: Vec<usize>,
    col: Vec<u32>,
    val: Vec<f64>,
    diag: Vec<f64>,
}

impl Laplacian {
    pub fn new(g: &WeightedSubgraph, edge_scale: Option<&[f64]>) -> Self {
        let n = g.len();
        let mut start = Vec::with_capacity(n + 1);
        let mut col = Vec::new();
        let mut val = Vec::new();
        let mut diag = vec![0.0; n];
        start.push(0);
        for (i, slot) in diag.iter_mut().enumerate() {
            for &(j, e) in g.neighbors(i) {
                let w = g.conductance(e as usize) * edge_scale.map(|s| s[e as usize]).unwrap_or(1.0);
                if w > 0.0 {
                    col.push(j);
                    val.push(w);
                    *slot += w;
                }
            }
            start.push(col.len());
        }
        Laplacian { start, col, val, diag }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }
    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }
    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.len() {
            let mut s = self.diag[i] * x[i];
            for k in self.start[i]..self.start[i + 1] {
                s -= self.val[k] * x[self.col[k] as usize];
            }
            y[i] = s;
        }
    }

    /// Quadratic form `sum_edges c_e (f(x) - f(y))^2`.
    pub fn energy(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; self.len()];
        self.apply(x, &mut y);
        dot(x, &y)
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            for k in self.start[i]..self.start[i + 1] {
                m[(i, self.col[k] as usize)] -= self.val[k];
            }
        }
        m
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Removes the mean so the vector is orthogonal to constants.
pub fn center(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let m = x.iter().sum::<f64>() / x.len() as f64;
    for v in x.iter_mut() {
        *v -= m;
    }
}

/// Solves `(L + diag(shift)) x = b` by Jacobi-preconditioned conjugate
/// gradients. With no shift `b` must sum to zero and the solution is
/// returned with zero mean.
pub fn solve_cg(l: &Laplacian, shift: Option<&[f64]>, b: &[f64], rel_tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = l.len();
    let diag: Vec<f64> = (0..n)
        .map(|i| l.diag[i] + shift.map(|s| s[i]).unwrap_or(0.0))
        .map(|d| if d > 0.0 { d } else { 1.0 })
        .collect();
    let apply = |x: &[f64], y: &mut [f64]| {
        l.apply(x, y);
        if let Some(s) = shift {
            for i in 0..n {
                y[i] += s[i] * x[i];
            }
        }
    };
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(a, d)| a / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        if dot(&r, &r).sqrt() <= rel_tol * bnorm {
            if shift.is_none() {
                center(&mut x);
            }
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = dot(&r, &r).sqrt() / bnorm;
    if res <= rel_tol.sqrt() {
        if shift.is_none() {
            center(&mut x);
        }
        Ok(x)
    } else {
        Err(Error::Numerical(format!("conjugate gradients stalled at relative residual {res:e}")))
    }
}

/// Eigen-decomposition of a dense symmetric matrix with eigenvalues sorted
/// in increasing order.
pub fn sym_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let e = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let vals = order.iter().map(|&i| e.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vecs.set_column(k, &e.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Largest eigenvalue of `L^+ V` for a connected Laplacian `L` and a
/// symmetric positive semidefinite `V` annihilating constants, by Lanczos in
/// the energy inner product. Returns the eigenvalue and a maximiser.
pub fn top_generalized_eig(
    l: &Laplacian,
    apply_v: impl Fn(&[f64], &mut [f64]),
    start: &[f64],
    rel_tol: f64,
    max_steps: usize,
) -> Result<(f64, Vec<f64>)> {
    let n = l.len();
    let steps = max_steps.min(n.saturating_sub(1)).max(1);
    let mut q = start.to_vec();
    center(&mut q);
    let norm = l.energy(&q).sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Numerical("Lanczos start vector has no energy".into()));
    }
    q.iter_mut().for_each(|v| *v /= norm);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut lq: Vec<Vec<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut vq = vec![0.0; n];
    let mut prev = f64::NAN;
    let mut best = (0.0, basis[0].clone());
    for j in 0..steps {
        let qj = basis[j].clone();
        let mut lqj = vec![0.0; n];
        l.apply(&qj, &mut lqj);
        lq.push(lqj);
        apply_v(&qj, &mut vq);
        let mut z = solve_cg(l, None, &vq, 1e-13, 20 * n + 100)?;
        alphas.push(dot(&qj, &vq));
        for _ in 0..2 {
            for (qi, lqi) in basis.iter().zip(&lq) {
                let c = dot(lqi, &z);
                axpy(-c, qi, &mut z);
            }
        }
        let k = alphas.len();
        let mut t = DMatrix::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alphas[i];
            if i + 1 < k {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let (vals, vecs) = sym_eigen(t);
        let theta = vals[k - 1];
        let beta = l.energy(&z).max(0.0).sqrt();
        let resid = beta * vecs[(k - 1, k - 1)].abs();
        let mut f = vec![0.0; n];
        for (i, qi) in basis.iter().enumerate() {
            axpy(vecs[(i, k - 1)], qi, &mut f);
        }
        best = (theta, f);
        let converged = resid <= rel_tol * theta.abs().max(f64::MIN_POSITIVE)
            || (prev.is_finite() && (theta - prev).abs() <= rel_tol * theta.abs() && resid <= rel_tol.sqrt() * theta.abs());
        if converged || beta <= 1e-14 * theta.abs().max(1e-300) {
            return Ok(best);
        }
        prev = theta;
        betas.push(beta);
        z.iter_mut().for_each(|v| *v /= beta);
        basis.push(z);
    }
    Ok(best)
}
