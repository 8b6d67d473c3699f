//! Primal-dual path-following solver for block semidefinite programs with
//! low-rank constraint matrices.
//!
//! Standard form:
//!
//! ```text
//! min  sum_b <C_b, X_b> + c_lp . x       s.t.  A(X, x) = b,  X_b >= 0,  x >= 0
//! max  b . y                              s.t.  A*(y) + Z = C,  Z >= 0
//! ```
//!
//! Each constraint matrix is stored as signed rank-one factors
//! `A_i^b = sum_r s_r w_r w_r^T`, so the Schur complement
//! `M_ij = <A_i, X A_j Z^-1>` collapses to `S^T ((W^T X W) o (W^T Z^-1 W)) S`.
//! Search directions are HKM with a Mehrotra predictor-corrector.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{embed, Constraint, ConicProgram, MatrixCoef, RawSolution, SolveOptions, SolveStatus};
use crate::error::{Error, Result};

/// One PSD block with the factors of every constraint that touches it.
#[derive(Debug, Clone)]
pub struct BlockData {
    pub dim: usize,
    /// `dim x R` factor vectors.
    pub w: DMatrix<f64>,
    pub sign: Vec<f64>,
    /// Constraint row owning each factor.
    pub owner: Vec<usize>,
    pub c: DMatrix<f64>,
}

impl BlockData {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            w: DMatrix::zeros(dim, 0),
            sign: Vec::new(),
            owner: Vec::new(),
            c: DMatrix::zeros(dim, dim),
        }
    }

    fn push_factors(&mut self, row: usize, factors: &[(f64, DVector<f64>)]) {
        if factors.is_empty() {
            return;
        }
        let old = self.w.ncols();
        let w = std::mem::replace(&mut self.w, DMatrix::zeros(0, 0));
        let mut w = w.resize_horizontally(old + factors.len(), 0.0);
        for (k, (s, v)) in factors.iter().enumerate() {
            w.set_column(old + k, v);
            self.sign.push(*s);
            self.owner.push(row);
        }
        self.w = w;
    }

    /// `(<A_i, G>)_i` for a (not necessarily symmetric) block matrix `G`,
    /// given `G W` precomputed.
    fn apply_with(&self, gw: &DMatrix<f64>, out: &mut DVector<f64>) {
        for r in 0..self.w.ncols() {
            out[self.owner[r]] += self.sign[r] * self.w.column(r).dot(&gw.column(r));
        }
    }

    fn apply(&self, g: &DMatrix<f64>, out: &mut DVector<f64>) {
        let gw = g * &self.w;
        self.apply_with(&gw, out);
    }

    /// `sum_i y_i A_i`.
    fn adjoint(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut scaled = self.w.clone();
        for r in 0..scaled.ncols() {
            let f = self.sign[r] * y[self.owner[r]];
            scaled.column_mut(r).scale_mut(f);
        }
        &scaled * self.w.transpose()
    }
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub blocks: Vec<BlockData>,
    /// `m x n_lp`.
    pub a_lp: DMatrix<f64>,
    pub c_lp: DVector<f64>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct SdpResult {
    pub status: SolveStatus,
    pub x: Vec<DMatrix<f64>>,
    pub x_lp: DVector<f64>,
    pub y: DVector<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
}

struct Point {
    x: Vec<DMatrix<f64>>,
    z: Vec<DMatrix<f64>>,
    xl: DVector<f64>,
    zl: DVector<f64>,
    y: DVector<f64>,
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn sym(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

/// Largest `alpha` with `x + alpha dx` PSD (infinite if never violated).
fn max_step_psd(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> Option<f64> {
    let chol = Cholesky::new(x.clone())?;
    let l = chol.l();
    let t = l.solve_lower_triangular(dx)?;
    let s = l.solve_lower_triangular(&t.transpose())?;
    let ev = sym(s).symmetric_eigenvalues();
    let min = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    Some(if min < 0.0 { -1.0 / min } else { f64::INFINITY })
}

fn max_step_lp(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

impl SdpProblem {
    pub fn n_rows(&self) -> usize {
        self.b.len()
    }

    fn apply_a(&self, x: &[DMatrix<f64>], xl: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.a_lp * xl;
        for (blk, xb) in self.blocks.iter().zip(x) {
            blk.apply(xb, &mut out);
        }
        out
    }

    fn row_block_norms(&self) -> Vec<Vec<f64>> {
        // ||A_i^b||_F per block and row, from the factor Gram matrix.
        let m = self.n_rows();
        self.blocks
            .iter()
            .map(|blk| {
                let g = blk.w.transpose() * &blk.w;
                let mut sq = vec![0.0; m];
                let r = blk.w.ncols();
                for p in 0..r {
                    for q in 0..r {
                        if blk.owner[p] == blk.owner[q] {
                            sq[blk.owner[p]] += blk.sign[p] * blk.sign[q] * g[(p, q)].powi(2);
                        }
                    }
                }
                sq.into_iter().map(|v| v.max(0.0).sqrt()).collect()
            })
            .collect()
    }

    pub fn solve(&self, tol: f64, max_iter: usize) -> SdpResult {
        let m = self.n_rows();
        let n_lp = self.a_lp.ncols();
        let nu = self.blocks.iter().map(|b| b.dim).sum::<usize>() + n_lp;
        let norms = self.row_block_norms();
        let b_norm = self.b.norm();
        let c_norm = (self.blocks.iter().map(|b| b.c.norm_squared()).sum::<f64>()
            + self.c_lp.norm_squared())
        .sqrt();

        let mut pt = {
            let mut x = Vec::new();
            let mut z = Vec::new();
            for (bi, blk) in self.blocks.iter().enumerate() {
                let n = blk.dim as f64;
                let mut xi: f64 = 10f64.max(n.sqrt());
                let mut eta: f64 = 10f64.max(n.sqrt()).max(blk.c.norm());
                for i in 0..m {
                    xi = xi.max(n * (1.0 + self.b[i].abs()) / (1.0 + norms[bi][i]));
                    eta = eta.max(norms[bi][i]);
                }
                x.push(DMatrix::identity(blk.dim, blk.dim) * xi);
                z.push(DMatrix::identity(blk.dim, blk.dim) * eta);
            }
            let mut xi_l: f64 = 10f64.max((n_lp as f64).sqrt());
            for i in 0..m {
                let a = self.a_lp.row(i).norm();
                xi_l = xi_l.max((1.0 + self.b[i].abs()) / (1.0 + a));
            }
            let eta_l = 10f64.max((n_lp as f64).sqrt()).max(self.c_lp.norm());
            Point {
                x,
                z,
                xl: DVector::from_element(n_lp, xi_l),
                zl: DVector::from_element(n_lp, eta_l),
                y: DVector::zeros(m),
            }
        };

        let mut status = SolveStatus::NumericalFailure;
        let mut iterations = 0;
        let mut pobj = 0.0;
        let mut dobj = 0.0;
        let mut stalls = 0;
        let mut best_measures = (f64::INFINITY, f64::INFINITY, f64::INFINITY);

        for it in 0..max_iter {
            iterations = it;
            let ax = self.apply_a(&pt.x, &pt.xl);
            let rp = &self.b - &ax;
            let rd: Vec<DMatrix<f64>> = self
                .blocks
                .iter()
                .zip(&pt.z)
                .map(|(blk, zb)| &blk.c - zb - blk.adjoint(&pt.y))
                .collect();
            let rdl = &self.c_lp - &pt.zl - self.a_lp.transpose() * &pt.y;

            pobj = self.blocks.iter().zip(&pt.x).map(|(blk, xb)| inner(&blk.c, xb)).sum::<f64>()
                + self.c_lp.dot(&pt.xl);
            dobj = self.b.dot(&pt.y);
            let mu = (pt.x.iter().zip(&pt.z).map(|(a, b)| inner(a, b)).sum::<f64>()
                + pt.xl.dot(&pt.zl))
                / nu as f64;
            let pinf = rp.norm() / (1.0 + b_norm);
            let dinf = (rd.iter().map(|r| r.norm_squared()).sum::<f64>() + rdl.norm_squared()).sqrt()
                / (1.0 + c_norm);
            let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            best_measures = (pinf, dinf, gap);
            log::trace!("sdp it {it}: pobj {pobj:e} dobj {dobj:e} pinf {pinf:e} dinf {dinf:e} gap {gap:e} mu {mu:e}");

            if pinf < tol && dinf < tol && gap < tol {
                status = SolveStatus::Optimal;
                break;
            }
            if dinf < tol.sqrt() && dobj > 1e8 * (1.0 + c_norm) {
                status = SolveStatus::Infeasible;
                break;
            }
            if pinf < tol.sqrt() && pobj < -1e8 * (1.0 + b_norm) {
                status = SolveStatus::Unbounded;
                break;
            }

            // Schur complement.
            let mut zinv = Vec::with_capacity(self.blocks.len());
            for zb in &pt.z {
                match Cholesky::new(zb.clone()) {
                    Some(c) => zinv.push(c.inverse()),
                    None => {
                        status = SolveStatus::NumericalFailure;
                        break;
                    }
                }
            }
            let mut mmat = DMatrix::<f64>::zeros(m, m);
            let mut xw = Vec::with_capacity(self.blocks.len());
            let mut ziw = Vec::with_capacity(self.blocks.len());
            let mut a_zinv = DVector::<f64>::zeros(m);
            for (bi, blk) in self.blocks.iter().enumerate() {
                let xwb = &pt.x[bi] * &blk.w;
                let ziwb = &zinv[bi] * &blk.w;
                let g1 = blk.w.transpose() * &xwb;
                let g2 = blk.w.transpose() * &ziwb;
                let r = blk.w.ncols();
                for p in 0..r {
                    let (op, sp) = (blk.owner[p], blk.sign[p]);
                    a_zinv[op] += sp * g2[(p, p)];
                    for q in 0..r {
                        mmat[(op, blk.owner[q])] += sp * blk.sign[q] * g1[(p, q)] * g2[(p, q)];
                    }
                }
                xw.push(xwb);
                ziw.push(ziwb);
            }
            let ratio = pt.xl.component_div(&pt.zl);
            let mut scaled_a = self.a_lp.clone();
            for (j, mut col) in scaled_a.column_iter_mut().enumerate() {
                col *= ratio[j];
            }
            mmat += &scaled_a * self.a_lp.transpose();
            a_zinv += &self.a_lp * pt.zl.map(|v| 1.0 / v);
            let mmat = sym(mmat);
            let chol = match factor_schur(mmat) {
                Some(c) => c,
                None => {
                    status = SolveStatus::NumericalFailure;
                    break;
                }
            };

            // b + A(X Rd Z^-1) + A_lp(x rd / z)
            let mut h0 = self.b.clone();
            for (bi, blk) in self.blocks.iter().enumerate() {
                let rdz = &rd[bi] * &ziw[bi];
                for r in 0..blk.w.ncols() {
                    h0[blk.owner[r]] += blk.sign[r] * xw[bi].column(r).dot(&rdz.column(r));
                }
            }
            h0 += &self.a_lp * pt.xl.component_mul(&rdl).component_div(&pt.zl);

            let direction = |rhs: &DVector<f64>,
                             sigma_mu: f64,
                             corr: Option<(&[DMatrix<f64>], &[DMatrix<f64>], &DVector<f64>, &DVector<f64>)>|
             -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, DVector<f64>, DVector<f64>, DVector<f64>) {
                let dy = chol.solve(rhs);
                let mut dxs = Vec::new();
                let mut dzs = Vec::new();
                for (bi, blk) in self.blocks.iter().enumerate() {
                    let dz = &rd[bi] - blk.adjoint(&dy);
                    let mut dx = &zinv[bi] * sigma_mu - &pt.x[bi] - &pt.x[bi] * &dz * &zinv[bi];
                    if let Some((dxa, dza, _, _)) = corr {
                        dx -= &dxa[bi] * &dza[bi] * &zinv[bi];
                    }
                    dxs.push(sym(dx));
                    dzs.push(sym(dz));
                }
                let dzl = &rdl - self.a_lp.transpose() * &dy;
                let mut dxl = pt.zl.map(|v| sigma_mu / v) - &pt.xl
                    - pt.xl.component_mul(&dzl).component_div(&pt.zl);
                if let Some((_, _, dxla, dzla)) = corr {
                    dxl -= dxla.component_mul(dzla).component_div(&pt.zl);
                }
                (dxs, dzs, dxl, dzl, dy)
            };

            let steps = |dx: &[DMatrix<f64>], dz: &[DMatrix<f64>], dxl: &DVector<f64>, dzl: &DVector<f64>| -> Option<(f64, f64)> {
                let mut ap = max_step_lp(&pt.xl, dxl);
                let mut ad = max_step_lp(&pt.zl, dzl);
                for bi in 0..self.blocks.len() {
                    ap = ap.min(max_step_psd(&pt.x[bi], &dx[bi])?);
                    ad = ad.min(max_step_psd(&pt.z[bi], &dz[bi])?);
                }
                Some((ap, ad))
            };

            // Predictor.
            let (dxa, dza, dxla, dzla, _) = direction(&h0, 0.0, None);
            let Some((ap_max, ad_max)) = steps(&dxa, &dza, &dxla, &dzla) else {
                status = SolveStatus::NumericalFailure;
                break;
            };
            let ap = ap_max.min(1.0);
            let ad = ad_max.min(1.0);
            let mu_aff = (pt
                .x
                .iter()
                .zip(&dxa)
                .zip(pt.z.iter().zip(&dza))
                .map(|((x, dx), (z, dz))| inner(&(x + dx * ap), &(z + dz * ad)))
                .sum::<f64>()
                + (&pt.xl + &dxla * ap).dot(&(&pt.zl + &dzla * ad)))
                / nu as f64;
            let sigma = (mu_aff / mu).max(0.0).powi(3).min(1.0);

            // Corrector.
            let mut rhs = &h0 - &a_zinv * (sigma * mu);
            for (bi, blk) in self.blocks.iter().enumerate() {
                let dxw = &dxa[bi] * &blk.w;
                let dzziw = &dza[bi] * &ziw[bi];
                for r in 0..blk.w.ncols() {
                    rhs[blk.owner[r]] += blk.sign[r] * dxw.column(r).dot(&dzziw.column(r));
                }
            }
            rhs += &self.a_lp * dxla.component_mul(&dzla).component_div(&pt.zl);
            let (dx, dz, dxl, dzl, dy) = direction(&rhs, sigma * mu, Some((&dxa, &dza, &dxla, &dzla)));
            let Some((ap_max, ad_max)) = steps(&dx, &dz, &dxl, &dzl) else {
                status = SolveStatus::NumericalFailure;
                break;
            };
            let gamma = 0.95;
            let ap = (gamma * ap_max).min(1.0);
            let ad = (gamma * ad_max).min(1.0);
            if ap < 1e-10 && ad < 1e-10 {
                stalls += 1;
                if stalls > 3 {
                    break;
                }
            }
            for bi in 0..self.blocks.len() {
                pt.x[bi] += &dx[bi] * ap;
                pt.z[bi] += &dz[bi] * ad;
            }
            pt.xl += &dxl * ap;
            pt.zl += &dzl * ad;
            pt.y += &dy * ad;
        }
        if status == SolveStatus::NumericalFailure {
            let (pinf, dinf, gap) = best_measures;
            // Reduced-accuracy acceptance; the caller audits the point anyway.
            if pinf < tol.sqrt() && dinf < tol.sqrt() && gap < tol.sqrt() {
                status = SolveStatus::Optimal;
            }
        }
        self.result(status, pt, pobj, dobj, iterations)
    }

    fn result(&self, status: SolveStatus, pt: Point, pobj: f64, dobj: f64, it: usize) -> SdpResult {
        SdpResult {
            status,
            x: pt.x,
            x_lp: pt.xl,
            y: pt.y,
            primal_objective: pobj,
            dual_objective: dobj,
            iterations: it,
        }
    }
}

fn factor_schur(m: DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let scale = m.diagonal().amax().max(1e-300);
    let mut reg = 1e-14 * scale;
    for _ in 0..8 {
        let mut mm = m.clone();
        for i in 0..mm.nrows() {
            mm[(i, i)] += reg;
        }
        if let Some(c) = Cholesky::new(mm) {
            return Some(c);
        }
        reg *= 100.0;
    }
    None
}

/// Lowers a linear SDP [`ConicProgram`] to standard form, solves it and maps
/// the solution back.
pub(crate) fn solve_program(prog: &ConicProgram, opts: &SolveOptions) -> Result<RawSolution> {
    if !prog.is_linear_sdp() {
        return Err(Error::InvalidArgument(
            "the SDP backend only takes PSD matrix variables with linear rows".into(),
        ));
    }
    // LP columns: nonneg scalars take one column, free scalars a +/- pair.
    let mut col_of: Vec<(usize, Option<usize>)> = Vec::with_capacity(prog.scalars.len());
    let mut n_lp = 0;
    for s in &prog.scalars {
        if s.nonneg {
            col_of.push((n_lp, None));
            n_lp += 1;
        } else {
            col_of.push((n_lp, Some(n_lp + 1)));
            n_lp += 2;
        }
    }
    let rows: Vec<(&super::AffineExpr, bool)> = prog
        .constraints
        .iter()
        .filter_map(|c| match c {
            Constraint::Eq(e) => Some((e, false)),
            Constraint::Ge(e) => Some((e, true)),
            _ => None,
        })
        .collect();
    let n_slack = rows.iter().filter(|r| r.1).count();
    let m = rows.len();
    let total_lp = n_lp + n_slack;

    let mut blocks: Vec<BlockData> = prog.matrices.iter().map(|d| BlockData::new(2 * d.dim)).collect();
    let mut a_lp = DMatrix::<f64>::zeros(m, total_lp);
    let mut b = DVector::<f64>::zeros(m);
    let mut slack = n_lp;
    let mut row_factors: Vec<Vec<Vec<(f64, DVector<f64>)>>> = Vec::with_capacity(m);
    for (i, (e, is_ge)) in rows.iter().enumerate() {
        b[i] = -e.constant;
        for (v, c) in &e.terms {
            let (p, q) = col_of[v.0];
            a_lp[(i, p)] += c;
            if let Some(q) = q {
                a_lp[(i, q)] -= c;
            }
        }
        if *is_ge {
            a_lp[(i, slack)] = -1.0;
            slack += 1;
        }
        let mut per_block: Vec<Vec<(f64, DVector<f64>)>> = vec![Vec::new(); blocks.len()];
        for (mv, coef) in &e.matrix_terms {
            let dim = prog.matrices[mv.0].dim;
            per_block[mv.0].extend(embed::half_embedding_factors(coef, dim));
        }
        row_factors.push(per_block);
    }
    // Row normalization.
    for i in 0..m {
        let mut sq = a_lp.row(i).norm_squared();
        for fac in &row_factors[i] {
            for (s1, w1) in fac {
                for (s2, w2) in fac {
                    sq += s1 * s2 * w1.dot(w2).powi(2);
                }
            }
        }
        let norm = sq.max(0.0).sqrt();
        if norm > 0.0 {
            a_lp.row_mut(i).scale_mut(1.0 / norm);
            b[i] /= norm;
            let f = 1.0 / norm.sqrt();
            for fac in &mut row_factors[i] {
                for (_, w) in fac.iter_mut() {
                    w.scale_mut(f);
                }
            }
        }
    }
    for (i, per_block) in row_factors.iter().enumerate() {
        for (bi, fac) in per_block.iter().enumerate() {
            blocks[bi].push_factors(i, fac);
        }
    }

    // Objective: minimize the negated, normalized objective.
    let mut c_lp = DVector::<f64>::zeros(total_lp);
    for (v, c) in &prog.objective.terms {
        let (p, q) = col_of[v.0];
        c_lp[p] -= c;
        if let Some(q) = q {
            c_lp[q] += c;
        }
    }
    for (mv, coef) in &prog.objective.matrix_terms {
        let dim = prog.matrices[mv.0].dim;
        blocks[mv.0].c -= embed::half_embedding_dense(coef as &MatrixCoef, dim);
    }
    let c_norm = (blocks.iter().map(|b| b.c.norm_squared()).sum::<f64>() + c_lp.norm_squared()).sqrt();
    if c_norm > 0.0 {
        c_lp /= c_norm;
        for blk in &mut blocks {
            blk.c /= c_norm;
        }
    }

    let problem = SdpProblem {
        blocks,
        a_lp,
        c_lp,
        b,
    };
    let res = problem.solve(opts.tol, opts.max_iter);

    let scalars = col_of
        .iter()
        .map(|&(p, q)| res.x_lp[p] - q.map_or(0.0, |q| res.x_lp[q]))
        .collect();
    let matrices = res.x.iter().map(embed::recover_hermitian).collect();
    Ok(RawSolution {
        status: res.status,
        scalars,
        matrices,
        iterations: res.iterations,
    })
}
