//! Dynamic beamforming: `J` reflection patterns time-shared within one
//! block, optimized jointly with slot durations and transmit powers by
//! successive convex approximation.
//!
//! Each subproblem replaces the three non-convex pieces of the max-min
//! problem by global bounds that are tight at the current iterate:
//!
//! * `tau / (1 + z) >= f_lb(sqrt(tau), z)`, linear in `(s, z)` with `s^2 <= tau`;
//! * `P |q_bar^H theta_bar|^2 >= g_lb(theta_bar, 1/P)`, linear in `(theta_bar, 1/P)`;
//! * `-(P - tau)^2 <= eta_ub(P, tau)`, which turns `P tau <= E` into a convex
//!   quadratic constraint.
//!
//! The slack `z` of the harvester sigmoid enters through `ln z`, encoded with
//! the exponential cone. Unit modulus is relaxed to `|theta_n| <= 1` during
//! the iterations and restored by projection at the end, after which the
//! durations and powers are re-optimized with the phases frozen.
//!
//! Internally powers and durations are normalized by `P_max` and `T`, the
//! slack is written as `z = z_r (1 + delta)` around the tight value at the
//! iterate, and the objective is scaled by the current `e`; received powers
//! sit orders of magnitude below the sigmoid center, so these deviations are
//! tiny compared with the raw quantities.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, SystemConfig, UNIT_MODULUS_TOL};
use crate::conic::{solve, AffineExpr, Constraint, ConicProgram, ScalarVar, DEFAULT_TOL};
use crate::eh::EhParams;
use crate::error::{Error, Result};
use crate::static_sdr::{check_eh, fairness_objective, recover_phases};
use crate::tdma::matched_phase;
use crate::C64;

/// Iteration cap of one SCA run.
pub const MAX_SCA_ITERATIONS: usize = 100;
/// Slots shorter than this fraction of the block are dropped from reports.
pub const PRUNE_FRACTION: f64 = 1e-9;
/// Smallest normalized power the subproblem may choose (keeps `1/P` finite).
const POWER_FLOOR: f64 = 1e-6;

/// Time-sharing schedule of reflection patterns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// One `N`-vector per slot.
    #[serde(with = "complex_rows")]
    pub phases: Vec<Vec<C64>>,
    /// Seconds.
    pub durations: Vec<f64>,
    /// Watts.
    pub powers: Vec<f64>,
}

mod complex_rows {
    use super::C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(rows: &[Vec<C64>], s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<Vec<[f64; 2]>> = rows
            .iter()
            .map(|r| r.iter().map(|c| [c.re, c.im]).collect())
            .collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<C64>>, D::Error> {
        let v: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        Ok(v.into_iter()
            .map(|r| r.into_iter().map(|[re, im]| C64::new(re, im)).collect())
            .collect())
    }
}

impl Schedule {
    pub fn n_slots(&self) -> usize {
        self.durations.len()
    }

    /// Slots with duration below `PRUNE_FRACTION * horizon` removed.
    pub fn pruned(&self, horizon: f64) -> Schedule {
        let keep: Vec<usize> = (0..self.n_slots())
            .filter(|&j| self.durations[j] >= PRUNE_FRACTION * horizon)
            .collect();
        Schedule {
            phases: keep.iter().map(|&j| self.phases[j].clone()).collect(),
            durations: keep.iter().map(|&j| self.durations[j]).collect(),
            powers: keep.iter().map(|&j| self.powers[j]).collect(),
        }
    }

    /// Per-receiver harvested energy under the exact harvester model. Phases
    /// need not be unit modulus.
    pub fn energies(&self, ch: &ChannelRealization, eh: &[EhParams]) -> Vec<f64> {
        (0..ch.n_ers)
            .map(|k| {
                (0..self.n_slots())
                    .map(|j| {
                        let rf = self.powers[j] * ch.channel_gain(k, &self.phases[j]);
                        self.durations[j] * eh[k].dc_power_unchecked(rf.max(0.0))
                    })
                    .sum()
            })
            .collect()
    }
}

/// One SCA iterate. Phases may be sub-unit modulus.
#[derive(Debug, Clone)]
pub struct ScaIterate {
    pub schedule: Schedule,
    /// `z[(k, j)] = exp(-a_k (P_j |q_bar_k^H theta_bar_j|^2 - b_k))`.
    pub slack: DMatrix<f64>,
    pub e: f64,
    pub iteration: usize,
    /// Set when the last subproblem failed or did not improve.
    pub stalled: bool,
}

/// Outcome of a dynamic (or TDMA) optimization, audited with the exact model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Solution {
    pub e: f64,
    pub per_er_energy: Vec<f64>,
    pub schedule: Schedule,
    pub iterations: usize,
    pub converged: bool,
    /// Audited objective of every accepted SCA iterate (starting point
    /// included) of the stage that produced the returned point. In the phase
    /// stage the iterates may carry sub-unit-modulus phases; the final
    /// projection and resource polish are not part of it.
    pub history: Vec<f64>,
}

/// Which variables the subproblem optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    /// Phases, durations, powers.
    Full,
    /// Durations and powers only.
    FixedPhases,
}

/// Starting point of an SCA run.
#[derive(Debug, Clone)]
pub enum InitStrategy {
    /// Matched phases of the `J` hardest receivers, equal durations.
    TdmaWarm,
    /// Uniform random phases from a seeded stream.
    Random { seed: u64 },
    /// Phases from the leading eigenvectors of a lifted SDR solution,
    /// durations proportional to the eigenvalues.
    Lifted(DMatrix<C64>),
}

/// First-order lower bound of `tau / (1 + z)` in `(sqrt(tau), z)` about
/// `(sqrt(tau_r), z_r)`.
pub fn surrogate_f_lb(z: f64, tau: f64, z_r: f64, tau_r: f64) -> Result<f64> {
    if !(z > 0.0 && z_r > 0.0 && tau >= 0.0 && tau_r >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "f_lb needs z, z_r > 0 and tau, tau_r >= 0 (got z={z}, tau={tau}, z_r={z_r}, tau_r={tau_r})"
        )));
    }
    let s_r = tau_r.sqrt();
    let d = 1.0 + z_r;
    Ok(tau_r / d + 2.0 * s_r / d * (tau.sqrt() - s_r) - tau_r / (d * d) * (z - z_r))
}

/// First-order lower bound of `p theta_bar^H Q theta_bar` in
/// `(theta_bar, 1/p)` about `(theta_bar_r, p_r)`.
pub fn surrogate_g_lb(
    theta_bar: &[C64],
    p: f64,
    theta_bar_r: &[C64],
    p_r: f64,
    q_lift: &DMatrix<C64>,
) -> Result<f64> {
    if !(p > 0.0 && p_r > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "g_lb needs positive powers (got p={p}, p_r={p_r})"
        )));
    }
    let n = theta_bar.len();
    if theta_bar_r.len() != n || q_lift.shape() != (n, n) {
        return Err(Error::InvalidArgument("g_lb dimension mismatch".into()));
    }
    let form = |x: &[C64], y: &[C64]| -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += x[i].conj() * q_lift[(i, j)] * y[j];
            }
        }
        acc
    };
    let c_r = form(theta_bar_r, theta_bar_r).re;
    let cross = form(theta_bar, theta_bar_r).re;
    Ok(2.0 * p_r * cross - p_r * c_r - p_r * p_r * c_r * (1.0 / p - 1.0 / p_r))
}

/// First-order upper bound of `-(p - tau)^2` about `(p_r, tau_r)`.
pub fn surrogate_eta_ub(p: f64, tau: f64, p_r: f64, tau_r: f64) -> f64 {
    let d = p_r - tau_r;
    -d * d - 2.0 * d * ((p - p_r) - (tau - tau_r))
}

/// Entrywise `theta / |theta|`, with zeros mapped to 1.
pub fn project_phases(theta: &[C64]) -> Vec<C64> {
    theta
        .iter()
        .map(|t| {
            let m = t.norm();
            if m > 0.0 {
                t / m
            } else {
                C64::new(1.0, 0.0)
            }
        })
        .collect()
}

/// Tight slack values for a schedule.
fn tight_slack(ch: &ChannelRealization, eh: &[EhParams], s: &Schedule) -> DMatrix<f64> {
    DMatrix::from_fn(ch.n_ers, s.n_slots(), |k, j| {
        let rf = s.powers[j] * ch.channel_gain(k, &s.phases[j]);
        (-eh[k].a * (rf - eh[k].b)).exp()
    })
}

fn make_iterate(ch: &ChannelRealization, eh: &[EhParams], cfg: &SystemConfig, s: Schedule, iteration: usize) -> ScaIterate {
    let slack = tight_slack(ch, eh, &s);
    let e = fairness_objective(&s.energies(ch, eh), &cfg.fairness_weights);
    ScaIterate {
        schedule: s,
        slack,
        e,
        iteration,
        stalled: false,
    }
}

/// Ranks receivers by how hard they are to serve: weight over the energy
/// their own matched beam would give them at full-budget power.
fn hardest_receivers(ch: &ChannelRealization, eh: &[EhParams], cfg: &SystemConfig) -> Vec<usize> {
    let p = cfg.full_budget_power();
    let mut order: Vec<(usize, f64)> = (0..ch.n_ers)
        .map(|k| {
            let own = cfg.horizon * eh[k].dc_power_unchecked(p * ch.matched_gain(k));
            (k, cfg.fairness_weights[k] / own.max(f64::MIN_POSITIVE))
        })
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    order.into_iter().map(|(k, _)| k).collect()
}

/// Builds the starting iterate of a `J`-slot run.
pub fn initialize(
    ch: &ChannelRealization,
    eh: &[EhParams],
    cfg: &SystemConfig,
    n_slots: usize,
    strategy: &InitStrategy,
) -> Result<ScaIterate> {
    if n_slots == 0 {
        return Err(Error::InvalidArgument("J must be at least 1".into()));
    }
    check_eh(eh, ch.n_ers)?;
    let n = ch.n_elements;
    let p = cfg.full_budget_power();
    let (phases, durations) = match strategy {
        InitStrategy::TdmaWarm => {
            let order = hardest_receivers(ch, eh, cfg);
            let mut chosen: Vec<usize> = (0..n_slots).map(|j| order[j % order.len()]).collect();
            chosen.sort();
            (
                chosen.iter().map(|&k| matched_phase(ch, k)).collect(),
                vec![cfg.horizon / n_slots as f64; n_slots],
            )
        }
        InitStrategy::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let phases = (0..n_slots)
                .map(|_| {
                    (0..n)
                        .map(|_| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * rng.gen::<f64>()))
                        .collect()
                })
                .collect();
            (phases, vec![cfg.horizon / n_slots as f64; n_slots])
        }
        InitStrategy::Lifted(theta) => {
            if theta.shape() != (n + 1, n + 1) {
                return Err(Error::InvalidArgument("lifted matrix has the wrong size".into()));
            }
            let eig = nalgebra::SymmetricEigen::new(theta.clone());
            let mut idx: Vec<usize> = (0..n + 1).collect();
            idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            let picks: Vec<usize> = (0..n_slots).map(|j| idx[j % (n + 1)]).collect();
            let phases: Vec<Vec<C64>> = picks
                .iter()
                .map(|&i| {
                    let v: Vec<C64> = eig.eigenvectors.column(i).iter().cloned().collect();
                    recover_phases(&v)
                })
                .collect();
            let weights: Vec<f64> = picks.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
            let total: f64 = weights.iter().sum();
            let durations = if total > 0.0 {
                weights.iter().map(|w| cfg.horizon * w / total).collect()
            } else {
                vec![cfg.horizon / n_slots as f64; n_slots]
            };
            (phases, durations)
        }
    };
    let schedule = Schedule {
        phases,
        durations,
        powers: vec![p; n_slots],
    };
    Ok(make_iterate(ch, eh, cfg, schedule, 0))
}

/// Variable handles of one subproblem.
struct SubVars {
    theta: Vec<Vec<(ScalarVar, ScalarVar)>>,
    p: Vec<ScalarVar>,
    tau: Vec<ScalarVar>,
    e: ScalarVar,
}

/// Size of the convex subproblem a mode generates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubproblemStats {
    pub variables: usize,
    pub phase_variables: usize,
    pub constraints: usize,
}

fn build_subproblem(
    ch: &ChannelRealization,
    eh: &[EhParams],
    cfg: &SystemConfig,
    it: &ScaIterate,
    mode: SolveMode,
) -> (ConicProgram, SubVars) {
    let s = &it.schedule;
    let jn = s.n_slots();
    let n = ch.n_elements;
    let pm = cfg.max_power;
    let t = cfg.horizon;
    let budget = cfg.total_energy / (pm * t);
    let e_ref = if it.e > 0.0 { it.e } else { 1.0 };

    let p_r: Vec<f64> = s.powers.iter().map(|p| (p / pm).max(POWER_FLOOR)).collect();
    let tau_r: Vec<f64> = s.durations.iter().map(|d| d / t).collect();

    let mut prog = ConicProgram::new();
    let e = prog.add_scalar("e");
    let p: Vec<ScalarVar> = (0..jn).map(|j| prog.add_scalar(format!("p[{j}]"))).collect();
    let tau: Vec<ScalarVar> = (0..jn).map(|j| prog.add_nonneg(format!("tau[{j}]"))).collect();
    let sq: Vec<ScalarVar> = (0..jn).map(|j| prog.add_scalar(format!("s[{j}]"))).collect();
    let w: Vec<ScalarVar> = (0..jn).map(|j| prog.add_nonneg(format!("w[{j}]"))).collect();

    let mut theta = Vec::new();
    let mut inv_p = Vec::new();
    if mode == SolveMode::Full {
        for j in 0..jn {
            let row: Vec<(ScalarVar, ScalarVar)> = (0..n)
                .map(|i| {
                    (
                        prog.add_scalar(format!("re_theta[{j},{i}]")),
                        prog.add_scalar(format!("im_theta[{j},{i}]")),
                    )
                })
                .collect();
            for &(x, y) in &row {
                prog.add(Constraint::Soc {
                    t: AffineExpr::constant(1.0),
                    x: vec![AffineExpr::var(x), AffineExpr::var(y)],
                });
            }
            theta.push(row);
            let v = prog.add_nonneg(format!("inv_p[{j}]"));
            prog.add(Constraint::RotatedSoc {
                u: AffineExpr::var(v),
                v: AffineExpr::var(p[j]),
                x: vec![AffineExpr::constant(std::f64::consts::SQRT_2)],
            });
            inv_p.push(v);
        }
    }

    let mut energy = AffineExpr::constant(budget);
    let mut time = AffineExpr::constant(1.0);
    for j in 0..jn {
        prog.add(Constraint::Ge(AffineExpr::var(p[j]).plus_const(-POWER_FLOOR)));
        prog.add(Constraint::Ge(AffineExpr::constant(1.0).plus(p[j], -1.0)));
        prog.add(Constraint::RotatedSoc {
            u: AffineExpr::var(tau[j]),
            v: AffineExpr::constant(0.5),
            x: vec![AffineExpr::var(sq[j])],
        });
        prog.add(Constraint::RotatedSoc {
            u: AffineExpr::var(w[j]),
            v: AffineExpr::constant(0.5),
            x: vec![AffineExpr::var(p[j]).plus(tau[j], 1.0)],
        });
        // (w + eta_ub) / 4 summed over slots stays within the budget.
        let d = p_r[j] - tau_r[j];
        energy = energy
            .plus(w[j], -0.25)
            .plus_const(0.25 * d * d)
            .plus(p[j], 0.5 * d)
            .plus_const(-0.5 * d * p_r[j])
            .plus(tau[j], -0.5 * d)
            .plus_const(0.5 * d * tau_r[j]);
        time = time.plus(tau[j], -1.0);
    }
    prog.add(Constraint::Ge(energy));
    prog.add(Constraint::Ge(time));

    for k in 0..ch.n_ers {
        let alpha = cfg.fairness_weights[k];
        if alpha == 0.0 {
            continue;
        }
        let prm = &eh[k];
        let mut row = AffineExpr::zero().plus(e, -alpha);
        for j in 0..jn {
            let amp = ch.amplitude(k, &s.phases[j]);
            let gain = amp.norm_sqr();
            let p_phys = p_r[j] * pm;
            let rf = p_phys * gain;
            let zr = (-prm.a * (rf - prm.b)).exp();
            let dz = 1.0 + zr;
            let dc = prm.dc_power_unchecked(rf);
            let s_r = tau_r[j].sqrt();
            let delta = prog.add_scalar(format!("delta[{k},{j}]"));
            // f_lb in normalized units, divided by e_ref.
            let c_s = prm.x * 2.0 * t * s_r / dz / e_ref;
            let c_tau = -prm.y * t / e_ref;
            let c_delta = -prm.x * t * tau_r[j] * zr / (dz * dz) / e_ref;
            row = row
                .plus_const(t * tau_r[j] * dc / e_ref)
                .plus(sq[j], c_s)
                .plus_const(-c_s * s_r)
                .plus(tau[j], c_tau)
                .plus_const(-c_tau * tau_r[j])
                .plus(delta, c_delta);

            // ln(1 + delta) >= a (P_r |.|^2 - lower bound on received power).
            let mut u = AffineExpr::zero();
            match mode {
                SolveMode::Full => {
                    let row_k = ch.q.row(k);
                    for i in 0..n {
                        let coef = row_k[i] * amp.conj();
                        let (x, y) = theta[j][i];
                        let th = s.phases[j][i];
                        let cx = -2.0 * p_phys * coef.re * prm.a;
                        let cy = 2.0 * p_phys * coef.im * prm.a;
                        u = u.plus(x, cx).plus_const(-cx * th.re).plus(y, cy).plus_const(-cy * th.im);
                    }
                    u = u.plus(inv_p[j], prm.a * rf * p_r[j]).plus_const(-prm.a * rf);
                }
                SolveMode::FixedPhases => {
                    let c = prm.a * pm * gain;
                    u = u.plus(p[j], -c).plus_const(c * p_r[j]);
                }
            }
            prog.add(Constraint::Exp {
                x: u,
                y: AffineExpr::constant(1.0),
                z: AffineExpr::var(delta).plus_const(1.0),
            });
        }
        prog.add(Constraint::Ge(row));
    }
    prog.maximize(AffineExpr::var(e));
    (
        prog,
        SubVars {
            theta,
            p,
            tau,
            e,
        },
    )
}

/// Counts of the subproblem for `J` slots under `mode`.
pub fn subproblem_stats(ch: &ChannelRealization, cfg: &SystemConfig, n_slots: usize, mode: SolveMode) -> SubproblemStats {
    let eh = vec![EhParams::default(); ch.n_ers];
    let sched = Schedule {
        phases: vec![vec![C64::new(1.0, 0.0); ch.n_elements]; n_slots],
        durations: vec![cfg.horizon / n_slots as f64; n_slots],
        powers: vec![cfg.full_budget_power(); n_slots],
    };
    let it = make_iterate(ch, &eh, cfg, sched, 0);
    let (prog, vars) = build_subproblem(ch, &eh, cfg, &it, mode);
    SubproblemStats {
        variables: prog.n_scalars(),
        phase_variables: vars.theta.iter().map(|r| 2 * r.len()).sum(),
        constraints: prog.n_constraints(),
    }
}

/// Clamps a schedule back into the feasible set: unit-bounded phases, box
/// powers, `sum tau <= T` and `sum P tau <= E`.
fn repair(cfg: &SystemConfig, mut s: Schedule) -> Schedule {
    for row in &mut s.phases {
        for t in row.iter_mut() {
            let m = t.norm();
            if m > 1.0 {
                *t /= m;
            }
        }
    }
    for p in &mut s.powers {
        *p = p.clamp(POWER_FLOOR * cfg.max_power, cfg.max_power);
    }
    for d in &mut s.durations {
        *d = d.max(0.0);
    }
    let total: f64 = s.durations.iter().sum();
    if total > cfg.horizon {
        let f = cfg.horizon / total;
        s.durations.iter_mut().for_each(|d| *d *= f);
    }
    let used: f64 = s.powers.iter().zip(&s.durations).map(|(p, d)| p * d).sum();
    if used > cfg.total_energy {
        let f = cfg.total_energy / used;
        s.durations.iter_mut().for_each(|d| *d *= f);
    }
    s
}

fn sca_step(
    ch: &ChannelRealization,
    eh: &[EhParams],
    cfg: &SystemConfig,
    it: &ScaIterate,
    mode: SolveMode,
) -> ScaIterate {
    let (prog, vars) = build_subproblem(ch, eh, cfg, it, mode);
    let stalled = || ScaIterate {
        stalled: true,
        ..it.clone()
    };
    let sol = match solve(&prog, DEFAULT_TOL) {
        Ok(s) if s.is_optimal() => s,
        Ok(s) => {
            log::debug!("SCA subproblem ended with {:?}", s.status);
            return stalled();
        }
        Err(err) => {
            log::debug!("SCA subproblem failed: {err}");
            return stalled();
        }
    };
    let _ = sol.value(vars.e);
    let s = &it.schedule;
    let phases = match mode {
        SolveMode::Full => vars
            .theta
            .iter()
            .map(|row| row.iter().map(|&(x, y)| C64::new(sol.value(x), sol.value(y))).collect())
            .collect(),
        SolveMode::FixedPhases => s.phases.clone(),
    };
    let next = Schedule {
        phases,
        durations: vars.tau.iter().map(|&v| sol.value(v) * cfg.horizon).collect(),
        powers: vars.p.iter().map(|&v| sol.value(v) * cfg.max_power).collect(),
    };
    let next = make_iterate(ch, eh, cfg, repair(cfg, next), it.iteration + 1);
    if next.e >= it.e {
        next
    } else {
        stalled()
    }
}

/// One subproblem solve in the full (phase + resource) mode. On solver
/// failure or a non-improving step the input comes back with `stalled` set.
pub fn solve_sca_subproblem(
    it: &ScaIterate,
    ch: &ChannelRealization,
    eh: &[EhParams],
    cfg: &SystemConfig,
) -> Result<ScaIterate> {
    check_eh(eh, ch.n_ers)?;
    Ok(sca_step(ch, eh, cfg, it, SolveMode::Full))
}

/// Repeats subproblem solves until the relative gain drops below
/// `cfg.sca_tol`, the cap is hit or a step stalls.
fn run_sca(
    ch: &ChannelRealization,
    eh: &[EhParams],
    cfg: &SystemConfig,
    start: ScaIterate,
    mode: SolveMode,
) -> (ScaIterate, Vec<f64>, bool) {
    let mut it = start;
    let mut history = vec![it.e];
    let mut converged = false;
    for _ in 0..MAX_SCA_ITERATIONS {
        let next = sca_step(ch, eh, cfg, &it, mode);
        if next.stalled {
            converged = true;
            it.stalled = true;
            break;
        }
        let gain = (next.e - it.e) / it.e.max(f64::MIN_POSITIVE);
        history.push(next.e);
        it = next;
        if gain < cfg.sca_tol {
            converged = true;
            break;
        }
    }
    (it, history, converged)
}

/// Exact-model check of a schedule.
#[derive(Debug, Clone)]
pub struct Audit {
    pub e: f64,
    pub per_er_energy: Vec<f64>,
    /// Largest relative violation among time, energy, power and modulus
    /// constraints.
    pub max_violation: f64,
}

pub fn audit(ch: &ChannelRealization, eh: &[EhParams], cfg: &SystemConfig, s: &Schedule) -> Result<Audit> {
    check_eh(eh, ch.n_ers)?;
    if s.phases.len() != s.n_slots() || s.powers.len() != s.n_slots() {
        return Err(Error::InvalidArgument("schedule vectors disagree in length".into()));
    }
    let mut viol = 0.0_f64;
    let total: f64 = s.durations.iter().sum();
    viol = viol.max((total - cfg.horizon) / cfg.horizon);
    let used: f64 = s.powers.iter().zip(&s.durations).map(|(p, d)| p * d).sum();
    viol = viol.max((used - cfg.total_energy) / cfg.total_energy);
    for j in 0..s.n_slots() {
        viol = viol.max(-s.durations[j] / cfg.horizon);
        viol = viol.max(-s.powers[j] / cfg.max_power);
        viol = viol.max((s.powers[j] - cfg.max_power) / cfg.max_power);
        if s.phases[j].len() != ch.n_elements {
            return Err(Error::InvalidArgument("phase vector has the wrong length".into()));
        }
        for t in &s.phases[j] {
            viol = viol.max((t.norm() - 1.0).abs() - UNIT_MODULUS_TOL);
        }
    }
    let per_er_energy = s.energies(ch, eh);
    let e = fairness_objective(&per_er_energy, &cfg.fairness_weights);
    Ok(Audit {
        e,
        per_er_energy,
        max_violation: viol.max(0.0),
    })
}

fn finish(
    ch: &ChannelRealization,
    eh: &[EhParams],
    cfg: &SystemConfig,
    schedule: Schedule,
    iterations: usize,
    converged: bool,
    history: Vec<f64>,
) -> Result<Solution> {
    let schedule = schedule.pruned(cfg.horizon);
    let a = audit(ch, eh, cfg, &schedule)?;
    Ok(Solution {
        e: a.e,
        per_er_energy: a.per_er_energy,
        schedule,
        iterations,
        converged,
        history,
    })
}

/// Durations and powers for fixed unit-modulus phases.
pub fn optimize_resources(
    ch: &ChannelRealization,
    eh: &[EhParams],
    cfg: &SystemConfig,
    start: &Schedule,
    mode: SolveMode,
) -> Result<Solution> {
    let _ = mode;
    check_eh(eh, ch.n_ers)?;
    let s = repair(cfg, start.clone());
    let it = make_iterate(ch, eh, cfg, s, 0);
    let (it, history, converged) = run_sca(ch, eh, cfg, it, SolveMode::FixedPhases);
    finish(ch, eh, cfg, it.schedule, it.iteration, converged, history)
}

/// Options of [`solve_dynamic_with`].
#[derive(Debug, Clone)]
pub struct DynamicOptions {
    /// Fresh starting points.
    pub starts: Vec<InitStrategy>,
    /// Known schedules (for instance a solution with fewer slots) embedded
    /// into `J` slots and used as further starting points.
    pub warm_starts: Vec<Schedule>,
}

impl Default for DynamicOptions {
    fn default() -> Self {
        Self {
            starts: vec![InitStrategy::TdmaWarm],
            warm_starts: Vec::new(),
        }
    }
}

/// The `J`-slot dynamic scheme from the default start. `J = 1` is the static
/// SCA baseline.
pub fn solve_dynamic(ch: &ChannelRealization, eh: &[EhParams], cfg: &SystemConfig, n_slots: usize) -> Result<Solution> {
    solve_dynamic_with(ch, eh, cfg, n_slots, &DynamicOptions::default())
}

/// Pads a schedule to `J` slots with zero-duration copies of its last pattern.
fn pad(s: &Schedule, n_slots: usize, n: usize) -> Schedule {
    let mut s = s.clone();
    while s.n_slots() < n_slots {
        let ph = s.phases.last().cloned().unwrap_or_else(|| vec![C64::new(1.0, 0.0); n]);
        let p = s.powers.last().copied().unwrap_or(0.0);
        s.phases.push(ph);
        s.durations.push(0.0);
        s.powers.push(p);
    }
    s
}

/// Gives every zero-length slot of a padded schedule a share of the longest
/// slot and the matched pattern of the worst-served receiver, so the slot
/// can grow during SCA.
fn seed_empty_slots(ch: &ChannelRealization, eh: &[EhParams], cfg: &SystemConfig, s: &Schedule) -> Schedule {
    let mut s = s.clone();
    let empty: Vec<usize> = (0..s.n_slots()).filter(|&j| s.durations[j] <= 0.0).collect();
    if empty.is_empty() {
        return s;
    }
    let en = s.energies(ch, eh);
    let mut ranked: Vec<(usize, f64)> = (0..ch.n_ers)
        .filter(|&k| cfg.fairness_weights[k] > 0.0)
        .map(|k| (k, en[k] / cfg.fairness_weights[k]))
        .collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    for (i, &j) in empty.iter().enumerate() {
        let longest = (0..s.n_slots())
            .max_by(|&a, &b| s.durations[a].total_cmp(&s.durations[b]))
            .unwrap();
        let share = 0.1 * s.durations[longest];
        s.durations[longest] -= share;
        s.durations[j] = share;
        s.powers[j] = s.powers[longest];
        let k = ranked[i % ranked.len()].0;
        s.phases[j] = matched_phase(ch, k);
    }
    s
}

/// Full pipeline from one starting schedule: resource tuning of the start,
/// SCA over phases and resources, projection, resource tuning again. Returns
/// the better of the tuned start and the final point.
fn run_from(ch: &ChannelRealization, eh: &[EhParams], cfg: &SystemConfig, start: Schedule) -> Result<Solution> {
    let tuned = optimize_resources(ch, eh, cfg, &start, SolveMode::FixedPhases)?;
    let tuned_full = pad(&tuned.schedule, start.n_slots(), ch.n_elements);
    let tuned_full = if tuned.schedule.n_slots() < start.n_slots() {
        seed_empty_slots(ch, eh, cfg, &tuned_full)
    } else {
        tuned_full
    };
    let it = make_iterate(ch, eh, cfg, repair(cfg, tuned_full), 0);
    let (it, history, converged) = run_sca(ch, eh, cfg, it, SolveMode::Full);
    let projected = Schedule {
        phases: it.schedule.phases.iter().map(|r| project_phases(r)).collect(),
        ..it.schedule.clone()
    };
    let polished = optimize_resources(ch, eh, cfg, &projected, SolveMode::FixedPhases)?;
    let iterations = tuned.iterations + it.iteration + polished.iterations;
    if polished.e >= tuned.e {
        Ok(Solution {
            iterations,
            converged,
            history,
            ..polished
        })
    } else {
        Ok(Solution {
            iterations,
            converged,
            ..tuned
        })
    }
}

/// Dynamic scheme from several starting points; the best audited
/// unit-modulus schedule wins. Warm starts with fewer slots also compete
/// unchanged (padded with empty slots), so the result never falls below any
/// of them.
pub fn solve_dynamic_with(
    ch: &ChannelRealization,
    eh: &[EhParams],
    cfg: &SystemConfig,
    n_slots: usize,
    opts: &DynamicOptions,
) -> Result<Solution> {
    cfg.validate()?;
    check_eh(eh, ch.n_ers)?;
    if n_slots == 0 {
        return Err(Error::InvalidArgument("J must be at least 1".into()));
    }
    let mut best: Option<Solution> = None;
    let mut consider = |sol: Solution| {
        if best.as_ref().is_none_or(|b| sol.e > b.e) {
            best = Some(sol);
        }
    };
    for strategy in &opts.starts {
        let init = initialize(ch, eh, cfg, n_slots, strategy)?;
        consider(run_from(ch, eh, cfg, init.schedule)?);
    }
    for warm in &opts.warm_starts {
        if warm.n_slots() > n_slots || warm.n_slots() == 0 {
            continue;
        }
        let a = audit(ch, eh, cfg, warm)?;
        if a.max_violation <= 1e-6 {
            let padded = pad(warm, n_slots, ch.n_elements);
            consider(finish(ch, eh, cfg, padded, 0, true, vec![a.e])?);
        }
        let seeded = seed_empty_slots(ch, eh, cfg, &pad(warm, n_slots, ch.n_elements));
        consider(run_from(ch, eh, cfg, seeded)?);
    }
    best.ok_or_else(|| Error::InvalidArgument("no starting point given".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::extend;

    fn setup(n: usize, k: usize, seed: u64) -> (ChannelRealization, Vec<EhParams>, SystemConfig) {
        let cfg = SystemConfig::reference(n, k);
        let ch = ChannelRealization::sample(&cfg, seed).unwrap();
        (ch, vec![EhParams::default(); k], cfg)
    }

    #[test]
    fn f_lb_examples_and_bound() {
        assert!((surrogate_f_lb(1.0, 1.0, 1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((surrogate_f_lb(1.0, 4.0, 1.0, 1.0).unwrap() - 1.5).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let z = 10.0 * (1.0 - rng.gen::<f64>());
            let tau = 10.0 * (1.0 - rng.gen::<f64>());
            let zr = 10.0 * (1.0 - rng.gen::<f64>());
            let tr = 10.0 * (1.0 - rng.gen::<f64>());
            let truth = tau / (1.0 + z);
            assert!(surrogate_f_lb(z, tau, zr, tr).unwrap() <= truth + 1e-9);
            assert!((surrogate_f_lb(zr, tr, zr, tr).unwrap() - tr / (1.0 + zr)).abs() < 1e-9);
        }
        assert!(surrogate_f_lb(0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn eta_ub_examples_and_bound() {
        assert_eq!(surrogate_eta_ub(2.0, 1.0, 2.0, 1.0), -1.0);
        assert_eq!(surrogate_eta_ub(3.0, 1.0, 2.0, 1.0), -3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let v: [f64; 4] = [rng.gen::<f64>() * 10.0, rng.gen::<f64>() * 10.0, rng.gen::<f64>() * 10.0, rng.gen::<f64>() * 10.0];
            assert!(surrogate_eta_ub(v[0], v[1], v[2], v[3]) >= -(v[0] - v[1]).powi(2) - 1e-9);
        }
    }

    #[test]
    fn g_lb_examples_and_bound() {
        let (ch, _, _) = setup(5, 1, 3);
        let q = &ch.q_lift[0];
        let zero = DMatrix::<C64>::zeros(6, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rand_theta = |rng: &mut ChaCha8Rng| -> Vec<C64> {
            let th: Vec<C64> = (0..5).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
            extend(&th)
        };
        let tr = rand_theta(&mut rng);
        let exact = |tb: &[C64], p: f64| -> f64 {
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..6 {
                for j in 0..6 {
                    acc += tb[i].conj() * q[(i, j)] * tb[j];
                }
            }
            p * acc.re
        };
        let at = surrogate_g_lb(&tr, 2.0, &tr, 2.0, q).unwrap();
        assert!((at - exact(&tr, 2.0)).abs() <= 1e-9 * exact(&tr, 2.0));
        assert_eq!(surrogate_g_lb(&tr, 1.0, &tr, 3.0, &zero).unwrap(), 0.0);
        let scale = exact(&tr, 1.0);
        for _ in 0..10_000 {
            let tb = rand_theta(&mut rng);
            let p = 0.01 + 10.0 * rng.gen::<f64>();
            let pr = 0.01 + 10.0 * rng.gen::<f64>();
            let bound = surrogate_g_lb(&tb, p, &tr, pr, q).unwrap();
            assert!(bound <= exact(&tb, p) + 1e-9 * scale);
        }
        assert!(surrogate_g_lb(&tr, 0.0, &tr, 1.0, q).is_err());
    }

    #[test]
    fn project_phases_examples() {
        let u = vec![C64::from_polar(1.0, 0.3), C64::from_polar(1.0, -2.0)];
        for (a, b) in project_phases(&u).iter().zip(&u) {
            assert!((a - b).norm() < 1e-12);
        }
        let p = project_phases(&[C64::from_polar(0.5, std::f64::consts::FRAC_PI_3), C64::new(0.0, 0.0)]);
        assert!((p[0] - C64::from_polar(1.0, std::f64::consts::FRAC_PI_3)).norm() < 1e-12);
        assert_eq!(p[1], C64::new(1.0, 0.0));
    }

    #[test]
    fn init_tight_slack_and_tdma_point() {
        let (ch, eh, cfg) = setup(6, 3, 4);
        let it = initialize(&ch, &eh, &cfg, 3, &InitStrategy::TdmaWarm).unwrap();
        assert_eq!(it.schedule, crate::tdma::tdma_schedule(&ch, &cfg));
        for k in 0..3 {
            for j in 0..3 {
                let rf = it.schedule.powers[j] * ch.channel_gain(k, &it.schedule.phases[j]);
                let phi = eh[k].dc_from_slack(it.slack[(k, j)]);
                assert!((phi - eh[k].dc_power(rf).unwrap()).abs() < 1e-15);
            }
        }
        let a = initialize(&ch, &eh, &cfg, 2, &InitStrategy::Random { seed: 5 }).unwrap();
        let b = initialize(&ch, &eh, &cfg, 2, &InitStrategy::Random { seed: 5 }).unwrap();
        assert_eq!(a.schedule, b.schedule);
    }

    #[test]
    fn input_iterate_is_feasible_for_subproblem() {
        let (ch, eh, cfg) = setup(6, 3, 5);
        let it = initialize(&ch, &eh, &cfg, 2, &InitStrategy::TdmaWarm).unwrap();
        let (prog, vars) = build_subproblem(&ch, &eh, &cfg, &it, SolveMode::Full);
        // Evaluate constraints at the expansion point.
        let mut x = vec![0.0; prog.n_scalars()];
        x[vars.e.0] = 1.0;
        let pm = cfg.max_power;
        for j in 0..2 {
            x[vars.p[j].0] = it.schedule.powers[j] / pm;
            x[vars.tau[j].0] = it.schedule.durations[j] / cfg.horizon;
            for (i, &(a, b)) in vars.theta[j].iter().enumerate() {
                x[a.0] = it.schedule.phases[j][i].re;
                x[b.0] = it.schedule.phases[j][i].im;
            }
        }
        // s = sqrt(tau), w = (p + tau)^2, inv_p = 1/p, delta = 0 by name.
        for (idx, decl) in prog.scalars.iter().enumerate() {
            let slot = |name: &str| -> Option<usize> {
                decl.name.strip_prefix(name).map(|r| r.trim_start_matches('[').trim_end_matches(']').parse().unwrap())
            };
            if let Some(j) = slot("s") {
                x[idx] = (it.schedule.durations[j] / cfg.horizon).sqrt();
            } else if let Some(j) = slot("w") {
                x[idx] = (it.schedule.powers[j] / pm + it.schedule.durations[j] / cfg.horizon).powi(2);
            } else if let Some(j) = slot("inv_p") {
                x[idx] = pm / it.schedule.powers[j];
            }
        }
        assert!(prog.max_violation(&x, &[]) < 1e-9, "{}", prog.max_violation(&x, &[]));
    }

    #[test]
    fn sca_steps_never_descend() {
        let (ch, eh, cfg) = setup(8, 3, 6);
        let mut it = initialize(&ch, &eh, &cfg, 2, &InitStrategy::TdmaWarm).unwrap();
        for _ in 0..4 {
            let next = solve_sca_subproblem(&it, &ch, &eh, &cfg).unwrap();
            assert!(next.e >= it.e);
            it = next;
        }
    }

    #[test]
    fn single_receiver_single_slot_matches_closed_form() {
        let (ch, eh, cfg) = setup(8, 1, 7);
        let sol = solve_dynamic(&ch, &eh, &cfg, 1).unwrap();
        let closed = cfg.horizon * eh[0].dc_power(cfg.total_energy / cfg.horizon * ch.matched_gain(0)).unwrap();
        assert!((sol.e - closed).abs() <= 1e-3 * closed, "{} vs {closed}", sol.e);
    }

    #[test]
    fn dynamic_is_feasible_and_monotone() {
        let (ch, eh, cfg) = setup(8, 4, 8);
        let sol = solve_dynamic(&ch, &eh, &cfg, 3).unwrap();
        let a = audit(&ch, &eh, &cfg, &sol.schedule).unwrap();
        assert!(a.max_violation <= 1e-6);
        assert_eq!(a.e, sol.e);
        for k in 0..4 {
            assert!(sol.per_er_energy[k] >= cfg.fairness_weights[k] * sol.e * (1.0 - 1e-6));
        }
        for w in sol.history.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn warm_start_embedding_is_monotone_in_j() {
        let (ch, eh, cfg) = setup(8, 4, 9);
        let one = solve_dynamic(&ch, &eh, &cfg, 1).unwrap();
        let two = solve_dynamic_with(
            &ch,
            &eh,
            &cfg,
            2,
            &DynamicOptions {
                starts: vec![],
                warm_starts: vec![one.schedule.clone()],
            },
        )
        .unwrap();
        assert!(two.e >= one.e);
    }

    #[test]
    fn dynamic_with_k_slots_dominates_tdma() {
        let (ch, eh, cfg) = setup(8, 3, 10);
        let t = crate::tdma::solve_tdma(&ch, &eh, &cfg).unwrap();
        let d = solve_dynamic(&ch, &eh, &cfg, 3).unwrap();
        assert!(d.e >= t.e);
    }

    #[test]
    fn zero_weight_receiver_is_ignored() {
        let (ch, eh, mut cfg) = setup(6, 2, 11);
        cfg.fairness_weights = vec![1.0, 0.0];
        let sol = solve_dynamic(&ch, &eh, &cfg, 1).unwrap();
        let closed = cfg.horizon * eh[0].dc_power(cfg.total_energy / cfg.horizon * ch.matched_gain(0)).unwrap();
        assert!((sol.e - closed).abs() <= 1e-3 * closed);
    }

    #[test]
    fn pruning_drops_empty_slots() {
        let s = Schedule {
            phases: vec![vec![C64::new(1.0, 0.0)]; 3],
            durations: vec![0.5, 0.0, 1e-12],
            powers: vec![1.0; 3],
        };
        assert_eq!(s.pruned(1.0).n_slots(), 1);
    }
}
