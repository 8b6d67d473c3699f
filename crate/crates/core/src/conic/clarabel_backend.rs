//! Lowering of [`ConicProgram`] to Clarabel's standard form
//! `min q^T x  s.t.  A x + s = b,  s in K`.
//!
//! Scalars occupy the first columns; each Hermitian variable of size `n`
//! contributes the upper-triangle svec (off-diagonals scaled by sqrt 2) of
//! its real `2n x 2n` embedding.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;

use super::{embed, AffineExpr, Constraint, ConicProgram, RawSolution, SolveOptions, SolveStatus};
use crate::error::{Error, Result};

struct Layout {
    n_scalars: usize,
    offsets: Vec<usize>,
    dims: Vec<usize>,
    n_cols: usize,
}

impl Layout {
    fn new(prog: &ConicProgram) -> Self {
        let n_scalars = prog.scalars.len();
        let mut offsets = Vec::new();
        let mut dims = Vec::new();
        let mut col = n_scalars;
        for m in &prog.matrices {
            let d = 2 * m.dim;
            offsets.push(col);
            dims.push(d);
            col += d * (d + 1) / 2;
        }
        Self {
            n_scalars,
            offsets,
            dims,
            n_cols: col,
        }
    }

    fn svec_index(i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        j * (j + 1) / 2 + i
    }

    /// Sparse column coefficients of an affine expression.
    fn row(&self, prog: &ConicProgram, e: &AffineExpr) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = e.terms.iter().map(|(v, c)| (v.0, *c)).collect();
        for (m, coef) in &e.matrix_terms {
            let half = embed::half_embedding_dense(coef, prog.matrices[m.0].dim);
            let off = self.offsets[m.0];
            let d = self.dims[m.0];
            for j in 0..d {
                for i in 0..=j {
                    let v = if i == j {
                        half[(i, i)]
                    } else {
                        std::f64::consts::SQRT_2 * half[(i, j)]
                    };
                    if v != 0.0 {
                        out.push((off + Self::svec_index(i, j), v));
                    }
                }
            }
        }
        out
    }

    fn unpack(&self, x: &[f64]) -> (Vec<f64>, Vec<DMatrix<f64>>) {
        let scalars = x[..self.n_scalars].to_vec();
        let mats = self
            .offsets
            .iter()
            .zip(&self.dims)
            .map(|(&off, &d)| {
                DMatrix::from_fn(d, d, |i, j| {
                    let v = x[off + Self::svec_index(i, j)];
                    if i == j {
                        v
                    } else {
                        v / std::f64::consts::SQRT_2
                    }
                })
            })
            .collect();
        (scalars, mats)
    }
}

#[derive(Default)]
struct Builder {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

impl Builder {
    /// Appends `s = expr` for the given sparse row and constant.
    fn push(&mut self, coefs: &[(usize, f64)], constant: f64) {
        let r = self.b.len();
        for &(c, v) in coefs {
            self.rows.push(r);
            self.cols.push(c);
            self.vals.push(-v);
        }
        self.b.push(constant);
    }

    fn cone(&mut self, c: SupportedConeT<f64>) {
        // Merge runs of linear cones.
        match (self.cones.last_mut(), &c) {
            (Some(SupportedConeT::ZeroConeT(n)), SupportedConeT::ZeroConeT(k))
            | (Some(SupportedConeT::NonnegativeConeT(n)), SupportedConeT::NonnegativeConeT(k)) => *n += k,
            _ => self.cones.push(c),
        }
    }
}

fn combine(a: &[(usize, f64)], sa: f64, b: &[(usize, f64)], sb: f64) -> Vec<(usize, f64)> {
    a.iter()
        .map(|&(c, v)| (c, sa * v))
        .chain(b.iter().map(|&(c, v)| (c, sb * v)))
        .collect()
}

pub(crate) fn solve_program(prog: &ConicProgram, opts: &SolveOptions) -> Result<RawSolution> {
    let layout = Layout::new(prog);
    let mut bld = Builder::default();

    for (i, s) in prog.scalars.iter().enumerate() {
        if s.nonneg {
            bld.push(&[(i, 1.0)], 0.0);
            bld.cone(SupportedConeT::NonnegativeConeT(1));
        }
    }
    for c in &prog.constraints {
        match c {
            Constraint::Eq(e) => {
                bld.push(&layout.row(prog, e), e.constant);
                bld.cone(SupportedConeT::ZeroConeT(1));
            }
            Constraint::Ge(e) => {
                bld.push(&layout.row(prog, e), e.constant);
                bld.cone(SupportedConeT::NonnegativeConeT(1));
            }
            Constraint::Soc { t, x } => {
                bld.push(&layout.row(prog, t), t.constant);
                for e in x {
                    bld.push(&layout.row(prog, e), e.constant);
                }
                bld.cone(SupportedConeT::SecondOrderConeT(1 + x.len()));
            }
            Constraint::RotatedSoc { u, v, x } => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                let (ru, rv) = (layout.row(prog, u), layout.row(prog, v));
                bld.push(&combine(&ru, h, &rv, h), h * (u.constant + v.constant));
                bld.push(&combine(&ru, h, &rv, -h), h * (u.constant - v.constant));
                for e in x {
                    bld.push(&layout.row(prog, e), e.constant);
                }
                bld.cone(SupportedConeT::SecondOrderConeT(2 + x.len()));
            }
            Constraint::Exp { x, y, z } => {
                for e in [x, y, z] {
                    bld.push(&layout.row(prog, e), e.constant);
                }
                bld.cone(SupportedConeT::ExponentialConeT());
            }
            Constraint::Psd(m) => {
                let off = layout.offsets[m.0];
                let d = layout.dims[m.0];
                for k in 0..d * (d + 1) / 2 {
                    bld.push(&[(off + k, 1.0)], 0.0);
                }
                bld.cone(SupportedConeT::PSDTriangleConeT(d));
            }
        }
    }

    let n = layout.n_cols;
    let mut q = vec![0.0; n];
    for (c, v) in layout.row(prog, &prog.objective) {
        q[c] -= v;
    }
    let m = bld.b.len();
    let a = CscMatrix::new_from_triplets(m, n, bld.rows, bld.cols, bld.vals);
    let p = CscMatrix::zeros((n, n));
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(opts.max_iter as u32)
        .tol_gap_abs(opts.tol)
        .tol_gap_rel(opts.tol)
        .tol_feas(opts.tol)
        .build()
        .map_err(|e| Error::Solver(format!("settings: {e:?}")))?;
    let mut solver = DefaultSolver::new(&p, &q, &a, &bld.b, &bld.cones, settings)
        .map_err(|e| Error::Solver(format!("setup: {e:?}")))?;
    solver.solve();
    let sol = &solver.solution;
    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::NumericalFailure,
    };
    let (scalars, mats) = layout.unpack(&sol.x);
    Ok(RawSolution {
        status,
        scalars,
        matrices: mats.iter().map(embed::recover_hermitian).collect(),
        iterations: sol.iterations as usize,
    })
}
