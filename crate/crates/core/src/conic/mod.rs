//! Convex programs over real scalars and Hermitian matrices, and their
//! solution.
//!
//! A [`ConicProgram`] maximizes an affine objective subject to memberships
//! of affine expressions in the zero cone, the nonnegative orthant,
//! (rotated) second-order cones, the exponential cone and the Hermitian PSD
//! cone. Hermitian matrix variables are lowered to real symmetric variables
//! of twice the dimension (see [`embed`]).
//!
//! Two backends sit behind [`solve`]:
//!
//! * programs whose only cones are PSD blocks plus linear rows go to the
//!   in-house primal-dual path-following solver in [`sdp`], which exploits
//!   low-rank constraint matrices;
//! * everything else goes to Clarabel.

mod clarabel_backend;
pub mod embed;
pub mod sdp;

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde_json::json;

use crate::error::{Error, Result};
use crate::C64;

/// Default solver tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScalarVar(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MatrixVar(pub(crate) usize);

/// Coefficient of a Hermitian matrix variable `H` inside an affine
/// expression. The contribution is `Re tr(C H)`.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixCoef {
    /// Sparse `C` given by `(row, col, value)` triplets; repeated entries add.
    Entries(Vec<(usize, usize, C64)>),
    /// `C = sum_r d_r v_r v_r^H`.
    LowRank(Vec<(f64, DVector<C64>)>),
}

impl MatrixCoef {
    /// Coefficient picking out `Re H[i, i]`.
    pub fn diag_entry(i: usize) -> Self {
        MatrixCoef::Entries(vec![(i, i, C64::new(1.0, 0.0))])
    }

    /// Coefficient producing `tr(H)`.
    pub fn trace(dim: usize) -> Self {
        MatrixCoef::Entries((0..dim).map(|i| (i, i, C64::new(1.0, 0.0))).collect())
    }

    /// Coefficient `scale * v v^H`, i.e. the quadratic form `scale * v^H H v`.
    pub fn outer(v: DVector<C64>, scale: f64) -> Self {
        MatrixCoef::LowRank(vec![(scale, v)])
    }

    /// Dense Hermitian part `(C + C^H)/2` of the coefficient.
    pub fn hermitian_dense(&self, dim: usize) -> DMatrix<C64> {
        let mut c = DMatrix::<C64>::zeros(dim, dim);
        match self {
            MatrixCoef::Entries(t) => {
                for &(i, j, v) in t {
                    c[(i, j)] += v * 0.5;
                    c[(j, i)] += v.conj() * 0.5;
                }
            }
            MatrixCoef::LowRank(terms) => {
                for (d, v) in terms {
                    c += v * v.adjoint() * C64::new(*d, 0.0);
                }
            }
        }
        c
    }

    fn max_index(&self) -> usize {
        match self {
            MatrixCoef::Entries(t) => t.iter().map(|&(i, j, _)| i.max(j) + 1).max().unwrap_or(0),
            MatrixCoef::LowRank(terms) => terms.iter().map(|(_, v)| v.len()).max().unwrap_or(0),
        }
    }

    fn eval(&self, h: &DMatrix<C64>) -> f64 {
        match self {
            MatrixCoef::Entries(t) => t.iter().map(|&(i, j, v)| (v * h[(j, i)]).re).sum(),
            MatrixCoef::LowRank(terms) => terms
                .iter()
                .map(|(d, v)| d * (v.adjoint() * h * v)[(0, 0)].re)
                .sum(),
        }
    }

    fn norm_estimate(&self) -> f64 {
        match self {
            MatrixCoef::Entries(t) => t.iter().map(|(_, _, v)| v.norm_sqr()).sum::<f64>().sqrt(),
            MatrixCoef::LowRank(terms) => terms.iter().map(|(d, v)| d.abs() * v.norm_squared()).sum(),
        }
    }
}

/// `constant + sum coef * scalar + sum Re tr(C H)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineExpr {
    pub constant: f64,
    pub terms: Vec<(ScalarVar, f64)>,
    pub matrix_terms: Vec<(MatrixVar, MatrixCoef)>,
}

impl AffineExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            ..Self::default()
        }
    }

    pub fn var(v: ScalarVar) -> Self {
        Self::zero().plus(v, 1.0)
    }

    pub fn plus(mut self, v: ScalarVar, coef: f64) -> Self {
        if coef != 0.0 {
            self.terms.push((v, coef));
        }
        self
    }

    pub fn plus_const(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn plus_matrix(mut self, m: MatrixVar, coef: MatrixCoef) -> Self {
        self.matrix_terms.push((m, coef));
        self
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.constant *= s;
        for t in &mut self.terms {
            t.1 *= s;
        }
        for (_, c) in &mut self.matrix_terms {
            match c {
                MatrixCoef::Entries(t) => t.iter_mut().for_each(|e| e.2 *= s),
                MatrixCoef::LowRank(terms) => terms.iter_mut().for_each(|e| e.0 *= s),
            }
        }
        self
    }

    /// Value at a point given by scalar values and Hermitian matrix values.
    pub fn eval(&self, scalars: &[f64], matrices: &[DMatrix<C64>]) -> f64 {
        self.constant
            + self.terms.iter().map(|(v, c)| c * scalars[v.0]).sum::<f64>()
            + self
                .matrix_terms
                .iter()
                .map(|(m, c)| c.eval(&matrices[m.0]))
                .sum::<f64>()
    }

    fn coef_norm(&self) -> f64 {
        let s: f64 = self.terms.iter().map(|(_, c)| c * c).sum();
        let m: f64 = self.matrix_terms.iter().map(|(_, c)| c.norm_estimate().powi(2)).sum();
        (s + m).sqrt()
    }
}

/// Cone membership of affine expressions.
#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// `expr = 0`.
    Eq(AffineExpr),
    /// `expr >= 0`.
    Ge(AffineExpr),
    /// `||x|| <= t`.
    Soc { t: AffineExpr, x: Vec<AffineExpr> },
    /// `2 u v >= ||x||^2`, `u, v >= 0`.
    RotatedSoc {
        u: AffineExpr,
        v: AffineExpr,
        x: Vec<AffineExpr>,
    },
    /// `y exp(x / y) <= z`, `y > 0` (closure).
    Exp {
        x: AffineExpr,
        y: AffineExpr,
        z: AffineExpr,
    },
    /// The Hermitian matrix variable is positive semidefinite.
    Psd(MatrixVar),
}

impl Constraint {
    fn exprs(&self) -> Vec<&AffineExpr> {
        match self {
            Constraint::Eq(e) | Constraint::Ge(e) => vec![e],
            Constraint::Soc { t, x } => std::iter::once(t).chain(x.iter()).collect(),
            Constraint::RotatedSoc { u, v, x } => [u, v].into_iter().chain(x.iter()).collect(),
            Constraint::Exp { x, y, z } => vec![x, y, z],
            Constraint::Psd(_) => vec![],
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Constraint::Eq(_) => "eq",
            Constraint::Ge(_) => "ge",
            Constraint::Soc { .. } => "soc",
            Constraint::RotatedSoc { .. } => "rsoc",
            Constraint::Exp { .. } => "exp",
            Constraint::Psd(_) => "psd",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ScalarDecl {
    pub name: String,
    pub nonneg: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct MatrixDecl {
    pub name: String,
    pub dim: usize,
}

/// A convex program in maximization form.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConicProgram {
    pub(crate) scalars: Vec<ScalarDecl>,
    pub(crate) matrices: Vec<MatrixDecl>,
    pub(crate) objective: AffineExpr,
    pub(crate) constraints: Vec<Constraint>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_scalar(&mut self, name: impl Into<String>) -> ScalarVar {
        self.scalars.push(ScalarDecl {
            name: name.into(),
            nonneg: false,
        });
        ScalarVar(self.scalars.len() - 1)
    }

    /// Scalar variable restricted to `>= 0`.
    pub fn add_nonneg(&mut self, name: impl Into<String>) -> ScalarVar {
        self.scalars.push(ScalarDecl {
            name: name.into(),
            nonneg: true,
        });
        ScalarVar(self.scalars.len() - 1)
    }

    pub fn add_vector(&mut self, name: &str, len: usize) -> Vec<ScalarVar> {
        (0..len).map(|i| self.add_scalar(format!("{name}[{i}]"))).collect()
    }

    /// Hermitian `dim x dim` variable. Semidefiniteness is a separate
    /// [`Constraint::Psd`].
    pub fn add_hermitian(&mut self, name: impl Into<String>, dim: usize) -> MatrixVar {
        self.matrices.push(MatrixDecl {
            name: name.into(),
            dim,
        });
        MatrixVar(self.matrices.len() - 1)
    }

    pub fn maximize(&mut self, objective: AffineExpr) {
        self.objective = objective;
    }

    pub fn add(&mut self, c: Constraint) {
        self.constraints.push(c);
    }

    pub fn n_scalars(&self) -> usize {
        self.scalars.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn matrix_dim(&self, m: MatrixVar) -> usize {
        self.matrices[m.0].dim
    }

    /// Real degrees of freedom: scalars plus `dim^2` per Hermitian matrix.
    pub fn n_real_variables(&self) -> usize {
        self.scalars.len() + self.matrices.iter().map(|m| m.dim * m.dim).sum::<usize>()
    }

    /// Checks that every reference points at a declared variable of the right size.
    pub fn validate(&self) -> Result<()> {
        let check_expr = |e: &AffineExpr| -> Result<()> {
            if !e.constant.is_finite() {
                return Err(Error::InvalidArgument("non-finite constant".into()));
            }
            for (v, c) in &e.terms {
                if v.0 >= self.scalars.len() {
                    return Err(Error::InvalidArgument(format!("undeclared scalar #{}", v.0)));
                }
                if !c.is_finite() {
                    return Err(Error::InvalidArgument("non-finite coefficient".into()));
                }
            }
            for (m, c) in &e.matrix_terms {
                let decl = self
                    .matrices
                    .get(m.0)
                    .ok_or_else(|| Error::InvalidArgument(format!("undeclared matrix #{}", m.0)))?;
                if c.max_index() > decl.dim {
                    return Err(Error::InvalidArgument(format!(
                        "coefficient for matrix {} exceeds its dimension {}",
                        decl.name, decl.dim
                    )));
                }
            }
            Ok(())
        };
        check_expr(&self.objective)?;
        for c in &self.constraints {
            for e in c.exprs() {
                check_expr(e)?;
            }
            match c {
                Constraint::Psd(m) if m.0 >= self.matrices.len() => {
                    return Err(Error::InvalidArgument(format!("undeclared matrix #{}", m.0)))
                }
                Constraint::Soc { x, .. } | Constraint::RotatedSoc { x, .. } if x.is_empty() => {
                    return Err(Error::InvalidArgument("empty cone argument".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// True when the in-house SDP backend can take the program: only
    /// equality/inequality rows besides PSD constraints, at least one PSD
    /// block, and every matrix variable constrained PSD.
    pub fn is_linear_sdp(&self) -> bool {
        let mut psd = vec![false; self.matrices.len()];
        for c in &self.constraints {
            match c {
                Constraint::Eq(_) | Constraint::Ge(_) => {}
                Constraint::Psd(m) => psd[m.0] = true,
                _ => return false,
            }
        }
        !psd.is_empty() && psd.iter().all(|&p| p)
    }

    /// Maximum constraint violation of a candidate point. Linear rows are
    /// measured relative to `max(1, |constant|)`.
    pub fn max_violation(&self, scalars: &[f64], matrices: &[DMatrix<C64>]) -> f64 {
        let ev = |e: &AffineExpr| e.eval(scalars, matrices);
        let mut worst = 0.0_f64;
        for (decl, v) in self.scalars.iter().zip(scalars) {
            if decl.nonneg {
                worst = worst.max(-v);
            }
        }
        for c in &self.constraints {
            let viol = match c {
                Constraint::Eq(e) => ev(e).abs() / e.constant.abs().max(1.0),
                Constraint::Ge(e) => (-ev(e)).max(0.0) / e.constant.abs().max(1.0),
                Constraint::Soc { t, x } => {
                    let n = x.iter().map(|e| ev(e).powi(2)).sum::<f64>().sqrt();
                    (n - ev(t)).max(0.0)
                }
                Constraint::RotatedSoc { u, v, x } => {
                    let (uu, vv) = (ev(u), ev(v));
                    let n2 = x.iter().map(|e| ev(e).powi(2)).sum::<f64>();
                    // Distance-like measure: compare in the SOC form.
                    let lhs = (n2 + ((uu - vv) / 2f64.sqrt()).powi(2)).sqrt();
                    (lhs - (uu + vv) / 2f64.sqrt()).max(0.0).max(-uu).max(-vv)
                }
                Constraint::Exp { x, y, z } => {
                    let (xx, yy, zz) = (ev(x), ev(y), ev(z));
                    if yy > 0.0 {
                        (yy * (xx / yy).exp() - zz).max(0.0)
                    } else {
                        // Closure: y = 0 requires x <= 0, z >= 0.
                        (-yy).max(xx.max(0.0)).max(-zz)
                    }
                }
                Constraint::Psd(m) => {
                    let h = &matrices[m.0];
                    let eig = SymmetricEigen::new(h.clone()).eigenvalues;
                    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
                    (-min).max(0.0)
                }
            };
            worst = worst.max(viol);
        }
        worst
    }

    /// Writes the program as JSON for offline inspection.
    pub fn dump(&self, path: &Path) -> Result<()> {
        let expr_json = |e: &AffineExpr| {
            json!({
                "constant": e.constant,
                "terms": e.terms.iter().map(|(v, c)| json!([self.scalars[v.0].name, c])).collect::<Vec<_>>(),
                "matrix_terms": e.matrix_terms.iter().map(|(m, c)| {
                    let dim = self.matrices[m.0].dim;
                    let h = c.hermitian_dense(dim);
                    let nz: Vec<_> = h.iter().enumerate().filter(|(_, v)| v.norm() > 0.0)
                        .map(|(idx, v)| json!([idx % dim, idx / dim, v.re, v.im])).collect();
                    json!({"matrix": self.matrices[m.0].name, "entries": nz})
                }).collect::<Vec<_>>(),
            })
        };
        let doc = json!({
            "scalars": self.scalars.iter().map(|s| json!({"name": s.name, "nonneg": s.nonneg})).collect::<Vec<_>>(),
            "matrices": self.matrices.iter().map(|m| json!({"name": m.name, "dim": m.dim})).collect::<Vec<_>>(),
            "maximize": expr_json(&self.objective),
            "constraints": self.constraints.iter().map(|c| {
                let args: Vec<_> = c.exprs().into_iter().map(expr_json).collect();
                match c {
                    Constraint::Psd(m) => json!({"kind": "psd", "matrix": self.matrices[m.0].name}),
                    _ => json!({"kind": c.kind(), "args": args}),
                }
            }).collect::<Vec<_>>(),
        });
        let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    /// In-house SDP solver for linear SDPs, Clarabel otherwise.
    #[default]
    Auto,
    Clarabel,
    Sdp,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub backend: Backend,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            backend: Backend::Auto,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub objective_value: f64,
    pub scalars: Vec<f64>,
    pub matrices: Vec<DMatrix<C64>>,
    /// Maximum violation of the original constraints at the returned point.
    pub residual: f64,
    pub iterations: usize,
    pub backend: Backend,
}

impl ConicSolution {
    pub fn value(&self, v: ScalarVar) -> f64 {
        self.scalars[v.0]
    }

    pub fn matrix(&self, m: MatrixVar) -> &DMatrix<C64> {
        &self.matrices[m.0]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Raw backend output before auditing.
pub(crate) struct RawSolution {
    pub status: SolveStatus,
    pub scalars: Vec<f64>,
    pub matrices: Vec<DMatrix<C64>>,
    pub iterations: usize,
}

/// Solves with default options apart from the tolerance.
pub fn solve(prog: &ConicProgram, tol: f64) -> Result<ConicSolution> {
    solve_with(
        prog,
        &SolveOptions {
            tol,
            ..SolveOptions::default()
        },
    )
}

pub fn solve_with(prog: &ConicProgram, opts: &SolveOptions) -> Result<ConicSolution> {
    prog.validate()?;
    let backend = match opts.backend {
        Backend::Auto if prog.is_linear_sdp() => Backend::Sdp,
        Backend::Auto => Backend::Clarabel,
        b => b,
    };
    let raw = match backend {
        Backend::Sdp => sdp::solve_program(prog, opts)?,
        _ => clarabel_backend::solve_program(prog, opts)?,
    };
    let objective_value = prog.objective.eval(&raw.scalars, &raw.matrices);
    let residual = if raw.scalars.is_empty() && raw.matrices.is_empty() {
        0.0
    } else {
        prog.max_violation(&raw.scalars, &raw.matrices)
    };
    let mut status = raw.status;
    // An "optimal" point the audit rejects is not reported as optimal.
    if status == SolveStatus::Optimal && residual > opts.tol.sqrt().max(1e-6) {
        log::debug!("optimal status rejected by audit: residual {residual:e}");
        status = SolveStatus::NumericalFailure;
    }
    Ok(ConicSolution {
        status,
        objective_value,
        scalars: raw.scalars,
        matrices: raw.matrices,
        residual,
        iterations: raw.iterations,
        backend,
    })
}

#[derive(Debug, Clone)]
pub enum Feasibility {
    Feasible(ConicSolution),
    Infeasible,
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }
}

/// Decides feasibility through an elastic phase-one program: every linear
/// row gets nonnegative slack in normalized units and the total slack is
/// minimized. The program is feasible iff the minimum is (numerically) zero.
pub fn check_feasibility(prog: &ConicProgram, tol: f64) -> Result<Feasibility> {
    check_feasibility_with(
        prog,
        &SolveOptions {
            tol,
            ..SolveOptions::default()
        },
    )
}

pub fn check_feasibility_with(prog: &ConicProgram, opts: &SolveOptions) -> Result<Feasibility> {
    prog.validate()?;
    let mut elastic = ConicProgram {
        scalars: prog.scalars.clone(),
        matrices: prog.matrices.clone(),
        objective: AffineExpr::zero(),
        constraints: Vec::with_capacity(prog.constraints.len()),
    };
    let mut penalty = AffineExpr::zero();
    for c in &prog.constraints {
        match c {
            Constraint::Eq(e) => {
                let s = e.coef_norm().max(f64::MIN_POSITIVE);
                let u = elastic.add_nonneg("elastic+");
                let v = elastic.add_nonneg("elastic-");
                elastic.add(Constraint::Eq(e.clone().plus(u, s).plus(v, -s)));
                penalty = penalty.plus(u, -1.0).plus(v, -1.0);
            }
            Constraint::Ge(e) => {
                let s = e.coef_norm().max(f64::MIN_POSITIVE);
                let u = elastic.add_nonneg("elastic");
                elastic.add(Constraint::Ge(e.clone().plus(u, s)));
                penalty = penalty.plus(u, -1.0);
            }
            other => elastic.add(other.clone()),
        }
    }
    elastic.maximize(penalty);
    let sol = solve_with(&elastic, opts)?;
    match sol.status {
        SolveStatus::Infeasible => Ok(Feasibility::Infeasible),
        SolveStatus::Optimal => {
            let threshold = 10.0 * opts.tol;
            if -sol.objective_value > threshold {
                return Ok(Feasibility::Infeasible);
            }
            let n = prog.scalars.len();
            let scalars = sol.scalars[..n].to_vec();
            let residual = prog.max_violation(&scalars, &sol.matrices);
            Ok(Feasibility::Feasible(ConicSolution {
                status: SolveStatus::Optimal,
                objective_value: 0.0,
                scalars,
                matrices: sol.matrices,
                residual,
                iterations: sol.iterations,
                backend: sol.backend,
            }))
        }
        s => Err(Error::Solver(format!("phase-one program ended with status {s:?}"))),
    }
}

#[cfg(test)]
mod tests;
