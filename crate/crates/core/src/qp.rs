//! Dense strictly convex QP solver (Goldfarb-Idnani dual active set).
//!
//! Solves `min 1/2 x^T H x + g^T x` subject to `A x >= lower` and
//! `box_lower <= x <= box_upper`. Infinite bounds are ignored.

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
    #[error("non-finite problem data")]
    NonFinite,
    #[error("Hessian is not positive definite")]
    NotPositiveDefinite,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    /// General rows, `m x n`.
    pub a: DMatrix<f64>,
    pub lower: DVector<f64>,
    pub box_lower: DVector<f64>,
    pub box_upper: DVector<f64>,
}

impl QpProblem {
    /// Unconstrained problem of dimension `n`.
    pub fn new(h: DMatrix<f64>, g: DVector<f64>) -> Self {
        let n = g.len();
        Self {
            h,
            g,
            a: DMatrix::zeros(0, n),
            lower: DVector::zeros(0),
            box_lower: DVector::from_element(n, f64::NEG_INFINITY),
            box_upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.g.dot(x)
    }

    /// Largest constraint violation of `x` (0 when feasible).
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let mut v: f64 = 0.0;
        let ax = &self.a * x;
        for i in 0..ax.len() {
            v = v.max(self.lower[i] - ax[i]);
        }
        for i in 0..x.len() {
            v = v.max(self.box_lower[i] - x[i]).max(x[i] - self.box_upper[i]);
        }
        v
    }

    fn validate(&self) -> Result<(), QpError> {
        let n = self.dim();
        if self.h.nrows() != n || self.h.ncols() != n {
            return Err(QpError::Dimension("H must be n x n"));
        }
        if self.a.ncols() != n || self.a.nrows() != self.lower.len() {
            return Err(QpError::Dimension("A must be m x n with m lower bounds"));
        }
        if self.box_lower.len() != n || self.box_upper.len() != n {
            return Err(QpError::Dimension("box bounds must have length n"));
        }
        let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
        if !finite(&self.h) || !self.g.iter().all(|v| v.is_finite()) || !finite(&self.a) {
            return Err(QpError::NonFinite);
        }
        if self.lower.iter().chain(self.box_lower.iter()).any(|v| v.is_nan() || *v == f64::INFINITY)
            || self.box_upper.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY)
        {
            return Err(QpError::NonFinite);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub status: QpStatus,
    /// Multipliers of the general rows (>= 0).
    pub lambda: DVector<f64>,
    /// Multipliers of `x >= box_lower` and `x <= box_upper`.
    pub lambda_lower: DVector<f64>,
    pub lambda_upper: DVector<f64>,
    pub iterations: usize,
    pub objective: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QpOptions {
    /// Violation (normalized by the row norm) below which a constraint is satisfied.
    pub feasibility_tol: f64,
    pub max_iterations: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-10,
            max_iterations: 10_000,
        }
    }
}

/// KKT residuals of a candidate primal-dual pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

pub fn kkt_residuals(p: &QpProblem, s: &QpSolution) -> KktResiduals {
    let x = &s.x;
    let mut grad = &p.h * x + &p.g - p.a.transpose() * &s.lambda;
    grad -= &s.lambda_lower;
    grad += &s.lambda_upper;
    let ax = &p.a * x;
    let mut comp: f64 = 0.0;
    for i in 0..ax.len() {
        if p.lower[i].is_finite() {
            comp = comp.max((s.lambda[i] * (ax[i] - p.lower[i])).abs());
        } else {
            comp = comp.max(s.lambda[i].abs());
        }
    }
    for i in 0..x.len() {
        comp = comp.max(if p.box_lower[i].is_finite() {
            (s.lambda_lower[i] * (x[i] - p.box_lower[i])).abs()
        } else {
            s.lambda_lower[i].abs()
        });
        comp = comp.max(if p.box_upper[i].is_finite() {
            (s.lambda_upper[i] * (p.box_upper[i] - x[i])).abs()
        } else {
            s.lambda_upper[i].abs()
        });
    }
    let dual = s
        .lambda
        .iter()
        .chain(s.lambda_lower.iter())
        .chain(s.lambda_upper.iter())
        .fold(0.0f64, |m, &l| m.max(-l));
    KktResiduals {
        stationarity: grad.amax(),
        primal: p.max_violation(x),
        dual,
        complementarity: comp,
    }
}

enum Source {
    Row(usize),
    Lower(usize),
    Upper(usize),
}

struct Constraint {
    normal: DVector<f64>,
    bound: f64,
    norm: f64,
    source: Source,
}

/// Back-substitution with the leading `q x q` block of upper-triangular `r`.
fn solve_upper(r: &DMatrix<f64>, q: usize, d: &DVector<f64>) -> Vec<f64> {
    let mut out = vec![0.0; q];
    for i in (0..q).rev() {
        let mut s = d[i];
        for k in i + 1..q {
            s -= r[(i, k)] * out[k];
        }
        out[i] = s / r[(i, i)];
    }
    out
}

/// Rotate columns `c0`, `c1` of `m`: `(c0, c1) <- (c*c0 + s*c1, -s*c0 + c*c1)`.
fn rotate_columns(m: &mut DMatrix<f64>, c0: usize, c1: usize, c: f64, s: f64) {
    for k in 0..m.nrows() {
        let a = m[(k, c0)];
        let b = m[(k, c1)];
        m[(k, c0)] = c * a + s * b;
        m[(k, c1)] = -s * a + c * b;
    }
}

struct ActiveSet {
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    members: Vec<usize>,
    u: Vec<f64>,
}

impl ActiveSet {
    /// Append a constraint whose transformed normal is `d = J^T n`.
    fn add(&mut self, mut d: DVector<f64>, index: usize, multiplier: f64) {
        let n = d.len();
        let q = self.members.len();
        for jj in (q + 1..n).rev() {
            let (a, b) = (d[jj - 1], d[jj]);
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            d[jj - 1] = h;
            d[jj] = 0.0;
            rotate_columns(&mut self.j, jj - 1, jj, c, s);
        }
        for i in 0..=q {
            self.r[(i, q)] = d[i];
        }
        self.members.push(index);
        self.u.push(multiplier);
    }

    /// Remove the active constraint at position `pos`.
    fn drop(&mut self, pos: usize) {
        let q = self.members.len();
        for col in pos..q - 1 {
            for row in 0..q {
                self.r[(row, col)] = self.r[(row, col + 1)];
            }
        }
        for row in 0..q {
            self.r[(row, q - 1)] = 0.0;
        }
        for jj in pos..q - 1 {
            let (a, b) = (self.r[(jj, jj)], self.r[(jj + 1, jj)]);
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            for col in jj..q - 1 {
                let x = self.r[(jj, col)];
                let y = self.r[(jj + 1, col)];
                self.r[(jj, col)] = c * x + s * y;
                self.r[(jj + 1, col)] = -s * x + c * y;
            }
            self.r[(jj + 1, jj)] = 0.0;
            rotate_columns(&mut self.j, jj, jj + 1, c, s);
        }
        self.members.remove(pos);
        self.u.remove(pos);
    }
}

pub fn solve_qp(p: &QpProblem, options: &QpOptions) -> Result<QpSolution, QpError> {
    p.validate()?;
    let n = p.dim();
    let chol = Cholesky::new(p.h.clone()).ok_or(QpError::NotPositiveDefinite)?;
    let l = chol.l();
    if (0..n).any(|i| !(l[(i, i)] > 0.0)) {
        return Err(QpError::NotPositiveDefinite);
    }
    let l_inv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or(QpError::NotPositiveDefinite)?;

    let mut cons = Vec::new();
    for i in 0..p.lower.len() {
        if p.lower[i] == f64::NEG_INFINITY {
            continue;
        }
        let normal = p.a.row(i).transpose();
        let norm = normal.norm();
        if norm == 0.0 {
            if p.lower[i] > 0.0 {
                return Ok(infeasible(p, chol.solve(&-&p.g), 0));
            }
            continue;
        }
        cons.push(Constraint {
            normal,
            bound: p.lower[i],
            norm,
            source: Source::Row(i),
        });
    }
    for k in 0..n {
        if p.box_lower[k] > p.box_upper[k] {
            return Ok(infeasible(p, chol.solve(&-&p.g), 0));
        }
        if p.box_lower[k].is_finite() {
            let mut e = DVector::zeros(n);
            e[k] = 1.0;
            cons.push(Constraint {
                normal: e,
                bound: p.box_lower[k],
                norm: 1.0,
                source: Source::Lower(k),
            });
        }
        if p.box_upper[k].is_finite() {
            let mut e = DVector::zeros(n);
            e[k] = -1.0;
            cons.push(Constraint {
                normal: e,
                bound: -p.box_upper[k],
                norm: 1.0,
                source: Source::Upper(k),
            });
        }
    }

    let mut x = chol.solve(&-&p.g);
    let mut set = ActiveSet {
        j: l_inv.transpose(),
        r: DMatrix::zeros(n, n),
        members: Vec::new(),
        u: Vec::new(),
    };
    let mut is_active = vec![false; cons.len()];
    let mut iterations = 0;
    let status = 'outer: loop {
        let mut chosen = None;
        let mut worst = -options.feasibility_tol;
        for (c, con) in cons.iter().enumerate() {
            if is_active[c] {
                continue;
            }
            let slack = (con.normal.dot(&x) - con.bound) / con.norm;
            if slack < worst {
                worst = slack;
                chosen = Some(c);
            }
        }
        let Some(pc) = chosen else {
            break QpStatus::Optimal;
        };
        let np = &cons[pc].normal;
        let mut u_plus = 0.0;
        loop {
            iterations += 1;
            if iterations > options.max_iterations {
                break 'outer QpStatus::IterationLimit;
            }
            let q = set.members.len();
            let d = set.j.tr_mul(np);
            let d2_norm = d.rows(q, n - q).norm();
            let z = if q < n {
                set.j.columns(q, n - q) * d.rows(q, n - q)
            } else {
                DVector::zeros(n)
            };
            let r = solve_upper(&set.r, q, &d);
            let mut t1 = f64::INFINITY;
            let mut drop_pos = None;
            for k in 0..q {
                if r[k] > 0.0 {
                    let tk = set.u[k] / r[k];
                    if tk < t1 {
                        t1 = tk;
                        drop_pos = Some(k);
                    }
                }
            }
            let full_step = d2_norm > 1e-12 * d.norm().max(1e-300);
            let t2 = if full_step {
                let slack = np.dot(&x) - cons[pc].bound;
                (-slack / (d2_norm * d2_norm)).max(0.0)
            } else {
                f64::INFINITY
            };
            let t = t1.min(t2);
            if !t.is_finite() {
                break 'outer QpStatus::Infeasible;
            }
            for k in 0..q {
                set.u[k] -= t * r[k];
            }
            u_plus += t;
            if full_step {
                x += t * &z;
            }
            if t2 <= t1 {
                let d = set.j.tr_mul(np);
                set.add(d, pc, u_plus);
                is_active[pc] = true;
                continue 'outer;
            }
            let pos = drop_pos.expect("partial step has a blocking constraint");
            is_active[set.members[pos]] = false;
            set.u[pos] = 0.0;
            set.drop(pos);
        }
    };

    let mut lambda = DVector::zeros(p.lower.len());
    let mut lambda_lower = DVector::zeros(n);
    let mut lambda_upper = DVector::zeros(n);
    if status == QpStatus::Optimal {
        for (&c, &u) in set.members.iter().zip(&set.u) {
            match cons[c].source {
                Source::Row(i) => lambda[i] = u,
                Source::Lower(k) => lambda_lower[k] = u,
                Source::Upper(k) => lambda_upper[k] = u,
            }
        }
    }
    Ok(QpSolution {
        objective: p.objective(&x),
        x,
        status,
        lambda,
        lambda_lower,
        lambda_upper,
        iterations,
    })
}

fn infeasible(p: &QpProblem, x: DVector<f64>, iterations: usize) -> QpSolution {
    let n = p.dim();
    QpSolution {
        objective: p.objective(&x),
        x,
        status: QpStatus::Infeasible,
        lambda: DVector::zeros(p.lower.len()),
        lambda_lower: DVector::zeros(n),
        lambda_upper: DVector::zeros(n),
        iterations,
    }
}
