//! TDMA baseline: one slot per receiver with that receiver's matched
//! reflection pattern; only slot durations and powers are optimized.

use crate::channel::{ChannelRealization, SystemConfig};
use crate::dynamic_sca::{self, project_phases, Schedule, Solution, SolveMode};
use crate::eh::EhParams;
use crate::error::Result;
use crate::static_sdr::check_eh;
use crate::C64;

/// Phases aligning every reflected path of receiver `k` with its direct path.
pub fn matched_phase(ch: &ChannelRealization, k: usize) -> Vec<C64> {
    let hd = ch.h_d[k];
    let reference = if hd.norm() > 0.0 {
        hd / hd.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    let raw: Vec<C64> = ch.q.row(k).iter().map(|q| reference * q.conj()).collect();
    project_phases(&raw)
}

/// Equal-split starting schedule: slot `k` serves receiver `k`.
pub fn tdma_schedule(ch: &ChannelRealization, cfg: &SystemConfig) -> Schedule {
    let k = ch.n_ers;
    Schedule {
        phases: (0..k).map(|i| matched_phase(ch, i)).collect(),
        durations: vec![cfg.horizon / k as f64; k],
        powers: vec![cfg.full_budget_power(); k],
    }
}

/// Time and power allocation for the matched patterns, by SCA over
/// `(tau, P, z, e)`. Receivers harvest in every slot, not only their own.
pub fn solve_tdma(ch: &ChannelRealization, eh: &[EhParams], cfg: &SystemConfig) -> Result<Solution> {
    cfg.validate()?;
    check_eh(eh, ch.n_ers)?;
    let start = tdma_schedule(ch, cfg);
    dynamic_sca::optimize_resources(ch, eh, cfg, &start, SolveMode::FixedPhases)
}
