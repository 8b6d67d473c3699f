//! Single-pattern (static) beamforming: the semidefinite-relaxation upper
//! bound, its eigen-rank profile and Gaussian-randomization recovery.
//!
//! With one reflection pattern held for the whole block the best transmit
//! strategy spends the budget at constant power `P = E/T`, and the
//! max-min problem reduces to finding the largest `e` for which some
//! unit-modulus `theta` delivers `P |q_bar_k^H theta_bar|^2 >= r_k(e)` to every
//! receiver, where `r_k` inverts the harvester curve. Lifting
//! `Theta = theta_bar theta_bar^H` and dropping the rank constraint turns each
//! trial `e` into an SDP feasibility problem.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, SystemConfig};
use crate::conic::{
    check_feasibility, AffineExpr, Constraint, ConicProgram, Feasibility, MatrixCoef, DEFAULT_TOL,
};
use crate::dynamic_sca::project_phases;
use crate::eh::EhParams;
use crate::error::{Error, Result};
use crate::C64;

/// Relative width of the final bisection bracket.
pub const BISECTION_REL_TOL: f64 = 1e-6;
/// Default number of Gaussian-randomization candidates.
pub const DEFAULT_GR_SAMPLES: usize = 1000;
/// Negative eigenvalues down to this value are treated as solver noise.
pub const EIGEN_CLAMP: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdrResult {
    /// Relaxed optimum, J.
    pub e_upper: f64,
    /// Transmit power used throughout, W.
    pub power: f64,
    #[serde(skip)]
    pub theta_lift: DMatrix<C64>,
    /// Descending, clamped nonnegative.
    pub eigenvalues: Vec<f64>,
    pub rank_estimate: usize,
    pub bisection_iterations: usize,
}

pub(crate) fn check_eh(eh: &[EhParams], k: usize) -> Result<()> {
    if eh.len() != k {
        return Err(Error::InvalidArgument(format!(
            "expected {k} harvester parameter sets, got {}",
            eh.len()
        )));
    }
    Ok(())
}

/// Per-receiver energy of a static pattern held for the whole block at
/// power `p`.
pub fn static_energies(
    ch: &ChannelRealization,
    eh: &[EhParams],
    cfg: &SystemConfig,
    theta: &[C64],
    p: f64,
) -> Result<Vec<f64>> {
    check_eh(eh, ch.n_ers)?;
    (0..ch.n_ers)
        .map(|k| {
            let rf = ch.received_rf_power(k, theta, p)?;
            Ok(cfg.horizon * eh[k].dc_power(rf)?)
        })
        .collect()
}

/// `min_k E_k / alpha_k` over receivers with positive weight.
pub fn fairness_objective(energies: &[f64], weights: &[f64]) -> f64 {
    energies
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(e, w)| e / w)
        .fold(f64::INFINITY, f64::min)
}

/// Builds the feasibility SDP for trial value `e`.
pub fn sdr_feasibility_program(
    ch: &ChannelRealization,
    eh: &[EhParams],
    cfg: &SystemConfig,
    p: f64,
    e: f64,
) -> Result<ConicProgram> {
    let n1 = ch.n_elements + 1;
    let mut prog = ConicProgram::new();
    let th = prog.add_hermitian("Theta", n1);
    prog.add(Constraint::Psd(th));
    for i in 0..n1 {
        prog.add(Constraint::Eq(
            AffineExpr::constant(-1.0).plus_matrix(th, MatrixCoef::diag_entry(i)),
        ));
    }
    for k in 0..ch.n_ers {
        let alpha = cfg.fairness_weights[k];
        if alpha == 0.0 {
            continue;
        }
        let need = eh[k].required_rf_power(alpha * e / cfg.horizon)?;
        // tr(Q_k Theta) = v^H Theta v with v = conj(q_bar_k).
        let v = DVector::from_iterator(n1, ch.q_bar.row(k).iter().map(|c| c.conj()));
        prog.add(Constraint::Ge(
            AffineExpr::constant(-need).plus_matrix(th, MatrixCoef::outer(v, p)),
        ));
    }
    Ok(prog)
}

/// Upper end of the bisection bracket: no unit-diagonal PSD `Theta` gives
/// receiver `k` more than its matched gain, and no receiver can exceed
/// saturation.
pub fn bisection_upper_end(
    ch: &ChannelRealization,
    eh: &[EhParams],
    cfg: &SystemConfig,
    p: f64,
) -> f64 {
    (0..ch.n_ers)
        .filter(|&k| cfg.fairness_weights[k] > 0.0)
        .map(|k| {
            let w = cfg.fairness_weights[k];
            let matched = cfg.horizon * eh[k].dc_power_unchecked(p * ch.matched_gain(k)) / w;
            matched.min(cfg.horizon * eh[k].m / w)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Relaxed static optimum by bisection over `e`.
pub fn solve_sdr_upper_bound(
    ch: &ChannelRealization,
    eh: &[EhParams],
    cfg: &SystemConfig,
) -> Result<SdrResult> {
    cfg.validate()?;
    check_eh(eh, ch.n_ers)?;
    let p = cfg.full_budget_power();
    let e_max = bisection_upper_end(ch, eh, cfg, p);
    let check = |e: f64| -> Result<Option<DMatrix<C64>>> {
        let prog = sdr_feasibility_program(ch, eh, cfg, p, e)?;
        match check_feasibility(&prog, DEFAULT_TOL) {
            Ok(Feasibility::Feasible(w)) => Ok(Some(w.matrices[0].clone())),
            Ok(Feasibility::Infeasible) => Ok(None),
            Err(err) => Err(Error::BisectionFailure {
                trial_e: e,
                reason: err.to_string(),
            }),
        }
    };

    let (mut lo, mut hi) = (0.0, e_max);
    let mut witness = None;
    let mut iterations = 0;
    if let Some(w) = check(hi)? {
        lo = hi;
        witness = Some(w);
    }
    while hi - lo > BISECTION_REL_TOL * e_max {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        match check(mid)? {
            Some(w) => {
                lo = mid;
                witness = Some(w);
            }
            None => hi = mid,
        }
    }
    let theta_lift = match witness {
        Some(w) => w,
        None => check(0.0)?.ok_or_else(|| Error::BisectionFailure {
            trial_e: 0.0,
            reason: "zero target reported infeasible".into(),
        })?,
    };
    let eigenvalues = clean_spectrum(&theta_lift)?;
    let rank_estimate = rank_from_spectrum(&eigenvalues, cfg.rank_threshold);
    Ok(SdrResult {
        e_upper: lo,
        power: p,
        theta_lift,
        eigenvalues,
        rank_estimate,
        bisection_iterations: iterations,
    })
}

/// Descending eigenvalues with small negative noise clamped to zero.
pub fn clean_spectrum(theta: &DMatrix<C64>) -> Result<Vec<f64>> {
    let mut ev: Vec<f64> = SymmetricEigen::new(theta.clone()).eigenvalues.iter().cloned().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    for v in &mut ev {
        if *v < -EIGEN_CLAMP {
            return Err(Error::Numerical(format!(
                "lifted matrix has eigenvalue {v:e} below -{EIGEN_CLAMP:e}"
            )));
        }
        *v = v.max(0.0);
    }
    Ok(ev)
}

/// Number of eigenvalues above `threshold` times the largest one.
pub fn rank_from_spectrum(descending: &[f64], threshold: f64) -> usize {
    let max = descending.first().copied().unwrap_or(0.0);
    if max <= 0.0 {
        return 0;
    }
    descending.iter().filter(|&&v| v > threshold * max).count()
}

/// Rank under `threshold` together with the spectrum it was read from.
pub fn rank_profile(result: &SdrResult, threshold: f64) -> Result<(usize, Vec<f64>)> {
    let spectrum = clean_spectrum(&result.theta_lift)?;
    Ok((rank_from_spectrum(&spectrum, threshold), spectrum))
}

/// Outcome of Gaussian randomization.
#[derive(Debug, Clone)]
pub struct GrResult {
    pub theta: Vec<C64>,
    pub e: f64,
    pub power: f64,
}

/// Draws `n_samples` candidates `U Sigma^(1/2) r` from the lifted matrix and
/// keeps the best unit-modulus projection. The stream is nested: the first
/// `n` candidates for a seed are the same whatever `n_samples` is.
pub fn gaussian_randomization(
    result: &SdrResult,
    ch: &ChannelRealization,
    eh: &[EhParams],
    cfg: &SystemConfig,
    n_samples: usize,
    seed: u64,
) -> Result<GrResult> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    check_eh(eh, ch.n_ers)?;
    let n1 = ch.n_elements + 1;
    let eig = SymmetricEigen::new(result.theta_lift.clone());
    let scale: DVector<f64> = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let mut factor = eig.eigenvectors.clone();
    for (j, mut col) in factor.column_iter_mut().enumerate() {
        col *= C64::new(scale[j], 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<GrResult> = None;
    for _ in 0..n_samples {
        let r = DVector::from_fn(n1, |_, _| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        });
        let cand = &factor * r;
        let theta = recover_phases(cand.as_slice());
        let energies = static_energies(ch, eh, cfg, &theta, result.power)?;
        let e = fairness_objective(&energies, &cfg.fairness_weights);
        if best.as_ref().is_none_or(|b| e > b.e) {
            best = Some(GrResult {
                theta,
                e,
                power: result.power,
            });
        }
    }
    Ok(best.expect("at least one sample"))
}

/// Rotates `theta_bar` so its last entry is real nonnegative, projects to
/// unit modulus and drops the last entry.
pub fn recover_phases(theta_bar: &[C64]) -> Vec<C64> {
    let n = theta_bar.len() - 1;
    let last = theta_bar[n];
    let rot = if last.norm() > 0.0 {
        last.conj() / last.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    let rotated: Vec<C64> = theta_bar[..n].iter().map(|v| v * rot).collect();
    project_phases(&rotated)
}
