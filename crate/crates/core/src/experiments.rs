//! Monte-Carlo orchestration: configuration files, paired evaluation of all
//! schemes on shared channel realizations, and CSV/JSON output.
//!
//! Every work unit is one (grid point, realization) pair. Its channel is
//! drawn once from the realization seed and handed to every requested scheme,
//! so the comparison is paired. Units run in parallel and records are sorted
//! before emission, which makes the output independent of scheduling.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{db_to_linear, dbm_to_watts, ChannelRealization, SystemConfig};
use crate::dynamic_sca::{self, DynamicOptions, InitStrategy, Schedule, Solution};
use crate::eh::EhParams;
use crate::error::{Error, Result};
use crate::static_sdr::{self, fairness_objective, SdrResult};
use crate::tdma;

pub const CSV_HEADER: &str = "scheme,k,j,seed,e_joules,total_energy_joules,rank,iterations,wall_ms,status";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    UpperBound,
    StaticGr,
    StaticSca,
    Dynamic,
    Tdma,
    NoIrs,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::UpperBound,
        Scheme::StaticGr,
        Scheme::StaticSca,
        Scheme::Dynamic,
        Scheme::Tdma,
        Scheme::NoIrs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::UpperBound => "upper-bound",
            Scheme::StaticGr => "static-gr",
            Scheme::StaticSca => "static-sca",
            Scheme::Dynamic => "dynamic",
            Scheme::Tdma => "tdma",
            Scheme::NoIrs => "no-irs",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown scheme '{s}'")))
    }
}

/// Grid swept by a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Sweep {
    None,
    K(Vec<usize>),
    J(Vec<usize>),
}

/// How many slots the dynamic scheme gets outside a `J` sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotRule {
    /// Rank estimate of the relaxed solution.
    Rank,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: SystemConfig,
    pub eh: EhParams,
    pub schemes: Vec<Scheme>,
    pub sweep: Sweep,
    pub n_realizations: usize,
    pub master_seed: u64,
    pub dynamic_slots: SlotRule,
    pub gr_samples: usize,
    /// When false `wall_ms` is written as 0 so repeated runs give identical
    /// files.
    pub record_timing: bool,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.n_realizations == 0 {
            return bad("n_realizations must be at least 1");
        }
        if self.schemes.is_empty() {
            return bad("no schemes selected");
        }
        match &self.sweep {
            Sweep::K(g) | Sweep::J(g) if g.is_empty() => return bad("sweep grid is empty"),
            Sweep::K(g) | Sweep::J(g) if g.contains(&0) => return bad("grid values must be positive"),
            _ => {}
        }
        if let SlotRule::Fixed(0) = self.dynamic_slots {
            return bad("dynamic_slots must be positive");
        }
        if self.gr_samples == 0 {
            return bad("gr_samples must be positive");
        }
        match &self.sweep {
            Sweep::K(g) => {
                for &k in g {
                    self.config.with_ers(k).validate()?;
                }
            }
            _ => self.config.validate()?,
        }
        Ok(())
    }

    /// Seed of realization `r`; the same for every grid point.
    pub fn realization_seed(&self, r: usize) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(r as u64);
        rng.gen()
    }

    pub fn expected_records(&self) -> usize {
        let g = match &self.sweep {
            Sweep::None => 1,
            Sweep::K(v) | Sweep::J(v) => v.len(),
        };
        self.schemes.len() * g * self.n_realizations
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scheme: Scheme,
    pub k: usize,
    /// Slot count; in a `J` sweep the grid value for every scheme.
    pub j: usize,
    pub seed: u64,
    pub e_joules: f64,
    pub total_energy_joules: f64,
    pub rank: Option<usize>,
    pub iterations: usize,
    pub wall_ms: f64,
    pub status: String,
}

impl RunRecord {
    fn key(&self) -> (usize, usize, u64, Scheme) {
        (self.k, self.j, self.seed, self.scheme)
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Channel bookkeeping of one work unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationGroup {
    pub k: usize,
    pub seed: u64,
    pub channel_hash: u64,
    /// Receiver positions are drawn afresh for every realization.
    pub positions_redrawn: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioRun {
    pub records: Vec<RunRecord>,
    pub groups: Vec<RealizationGroup>,
}

/// Results of one scheme on one realization, before record assembly.
struct Outcome {
    e: f64,
    total: f64,
    rank: Option<usize>,
    iterations: usize,
    wall_ms: f64,
    status: String,
}

impl Outcome {
    fn failed(err: &Error, wall_ms: f64) -> Self {
        Outcome {
            e: 0.0,
            total: 0.0,
            rank: None,
            iterations: 0,
            wall_ms,
            status: format!("failed: {err}"),
        }
    }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> (Result<T>, f64) {
    let t0 = Instant::now();
    let r = f();
    (r, t0.elapsed().as_secs_f64() * 1e3)
}

/// Per-realization evaluator that shares intermediate results (the relaxed
/// solution, the static SCA schedule) between schemes.
struct Unit<'a> {
    sc: &'a Scenario,
    cfg: SystemConfig,
    ch: ChannelRealization,
    eh: Vec<EhParams>,
    seed: u64,
    sdr: Option<std::result::Result<SdrResult, String>>,
    sdr_ms: f64,
    static_sca: Option<std::result::Result<Solution, String>>,
    static_ms: f64,
}

impl<'a> Unit<'a> {
    fn sdr(&mut self) -> Result<&SdrResult> {
        if self.sdr.is_none() {
            let (r, ms) = timed(|| static_sdr::solve_sdr_upper_bound(&self.ch, &self.eh, &self.cfg));
            self.sdr = Some(r.map_err(|e| e.to_string()));
            self.sdr_ms = ms;
        }
        match self.sdr.as_ref().unwrap() {
            Ok(s) => Ok(s),
            Err(m) => Err(Error::Solver(m.clone())),
        }
    }

    fn static_sca(&mut self) -> Result<&Solution> {
        if self.static_sca.is_none() {
            let (r, ms) = timed(|| dynamic_sca::solve_dynamic(&self.ch, &self.eh, &self.cfg, 1));
            self.static_sca = Some(r.map_err(|e| e.to_string()));
            self.static_ms = ms;
        }
        match self.static_sca.as_ref().unwrap() {
            Ok(s) => Ok(s),
            Err(m) => Err(Error::Solver(m.clone())),
        }
    }

    fn total(&self, energies: &[f64]) -> f64 {
        energies.iter().sum()
    }

    fn run(&mut self, scheme: Scheme) -> Outcome {
        let res = match scheme {
            Scheme::UpperBound => self.sdr().map(|s| (s.e_upper, None, Some(s.rank_estimate), s.bisection_iterations)),
            Scheme::StaticGr => self.static_gr(),
            Scheme::StaticSca => self
                .static_sca()
                .map(|s| (s.e, Some(s.per_er_energy.clone()), None, s.iterations)),
            Scheme::Dynamic => return self.dynamic(None, &mut Vec::new()),
            Scheme::Tdma => tdma::solve_tdma(&self.ch, &self.eh, &self.cfg)
                .map(|s| (s.e, Some(s.per_er_energy), None, s.iterations)),
            Scheme::NoIrs => {
                let p = self.cfg.full_budget_power();
                let en: Vec<f64> = (0..self.ch.n_ers)
                    .map(|k| {
                        let rf = p * self.ch.h_d[k].norm_sqr();
                        self.cfg.horizon * self.eh[k].dc_power_unchecked(rf)
                    })
                    .collect();
                Ok((fairness_objective(&en, &self.cfg.fairness_weights), Some(en), None, 0))
            }
        };
        self.finish(scheme, res, 0.0)
    }

    fn finish(
        &self,
        scheme: Scheme,
        res: Result<(f64, Option<Vec<f64>>, Option<usize>, usize)>,
        extra_ms: f64,
    ) -> Outcome {
        let shared = match scheme {
            Scheme::UpperBound | Scheme::StaticGr => self.sdr_ms,
            Scheme::StaticSca => self.static_ms,
            _ => 0.0,
        };
        match res {
            Ok((e, energies, rank, iterations)) => Outcome {
                e,
                total: energies.map_or(f64::NAN, |v| self.total(&v)),
                rank,
                iterations,
                wall_ms: shared + extra_ms,
                status: "ok".into(),
            },
            Err(err) => Outcome::failed(&err, shared + extra_ms),
        }
    }

    fn static_gr(&mut self) -> Result<(f64, Option<Vec<f64>>, Option<usize>, usize)> {
        let n = self.sc.gr_samples;
        let seed = self.seed;
        let sdr = self.sdr()?.clone();
        let gr = static_sdr::gaussian_randomization(&sdr, &self.ch, &self.eh, &self.cfg, n, seed)?;
        let en = static_sdr::static_energies(&self.ch, &self.eh, &self.cfg, &gr.theta, gr.power)?;
        Ok((gr.e, Some(en), Some(sdr.rank_estimate), n))
    }

    /// Dynamic scheme with `j` slots (or the rank rule). Previous schedules
    /// of a nested sweep are passed in `nested` and the new one is appended.
    fn dynamic(&mut self, j: Option<usize>, nested: &mut Vec<Schedule>) -> Outcome {
        let t0 = Instant::now();
        let res = (|| -> Result<Solution> {
            let lifted = self.sdr().ok().map(|s| (s.theta_lift.clone(), s.rank_estimate));
            let j = match (j, self.sc.dynamic_slots) {
                (Some(j), _) | (None, SlotRule::Fixed(j)) => j,
                (None, SlotRule::Rank) => lifted
                    .as_ref()
                    .map(|l| l.1.max(1))
                    .ok_or_else(|| Error::Solver("relaxed problem failed; no rank available".into()))?,
            };
            let mut opts = DynamicOptions::default();
            if let Some((theta, _)) = lifted {
                opts.starts.push(InitStrategy::Lifted(theta));
            }
            if let Ok(s) = self.static_sca() {
                opts.warm_starts.push(s.schedule.clone());
            }
            if j >= self.ch.n_ers {
                if let Ok(t) = tdma::solve_tdma(&self.ch, &self.eh, &self.cfg) {
                    opts.warm_starts.push(t.schedule);
                }
            }
            opts.warm_starts.extend(nested.iter().cloned());
            dynamic_sca::solve_dynamic_with(&self.ch, &self.eh, &self.cfg, j, &opts)
        })();
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        let rank = self.sdr.as_ref().and_then(|r| r.as_ref().ok()).map(|s| s.rank_estimate);
        match res {
            Ok(sol) => {
                nested.push(sol.schedule.clone());
                Outcome {
                    e: sol.e,
                    total: self.total(&sol.per_er_energy),
                    rank,
                    iterations: sol.iterations,
                    wall_ms: ms,
                    status: "ok".into(),
                }
            }
            Err(err) => Outcome::failed(&err, ms),
        }
    }
}

fn work_unit(sc: &Scenario, k: usize, r: usize) -> Result<(Vec<RunRecord>, RealizationGroup)> {
    let cfg = if k == sc.config.n_ers {
        sc.config.clone()
    } else {
        sc.config.with_ers(k)
    };
    let seed = sc.realization_seed(r);
    let ch = ChannelRealization::sample(&cfg, seed)?;
    let hash = ch.fingerprint();
    let mut unit = Unit {
        sc,
        eh: vec![sc.eh; k],
        cfg,
        ch,
        seed,
        sdr: None,
        sdr_ms: 0.0,
        static_sca: None,
        static_ms: 0.0,
    };
    let mut records = Vec::new();
    let mut push = |scheme: Scheme, j: usize, o: Outcome| {
        records.push(RunRecord {
            scheme,
            k,
            j,
            seed,
            e_joules: o.e.max(0.0),
            total_energy_joules: o.total,
            rank: o.rank,
            iterations: o.iterations,
            wall_ms: if sc.record_timing { o.wall_ms } else { 0.0 },
            status: o.status,
        });
    };
    let natural_j = |s: Scheme, dyn_j: usize| match s {
        Scheme::Dynamic => dyn_j,
        Scheme::Tdma => k,
        Scheme::NoIrs => 0,
        _ => 1,
    };
    match &sc.sweep {
        Sweep::J(grid) => {
            let mut sorted = grid.clone();
            sorted.sort_unstable();
            let mut nested = Vec::new();
            let mut fixed: BTreeMap<Scheme, Outcome> = BTreeMap::new();
            for &s in &sc.schemes {
                if s != Scheme::Dynamic {
                    let o = unit.run(s);
                    fixed.insert(s, o);
                }
            }
            for &j in &sorted {
                if sc.schemes.contains(&Scheme::Dynamic) {
                    let o = unit.dynamic(Some(j), &mut nested);
                    push(Scheme::Dynamic, j, o);
                }
                for (&s, o) in &fixed {
                    push(
                        s,
                        j,
                        Outcome {
                            status: o.status.clone(),
                            ..*o
                        },
                    );
                }
            }
        }
        _ => {
            for &s in &sc.schemes {
                let o = unit.run(s);
                let dyn_j = match sc.dynamic_slots {
                    SlotRule::Fixed(j) => j,
                    SlotRule::Rank => o.rank.unwrap_or(0).max(1),
                };
                push(s, natural_j(s, dyn_j), o);
            }
        }
    }
    if unit.ch.fingerprint() != hash {
        return Err(Error::Numerical("channel realization changed during evaluation".into()));
    }
    Ok((
        records,
        RealizationGroup {
            k,
            seed,
            channel_hash: hash,
            positions_redrawn: true,
        },
    ))
}

/// Runs every scheme on every (grid point, realization) pair. Solver
/// failures end up in the record status; only invalid scenarios abort.
pub fn run_scenario_detailed(sc: &Scenario) -> Result<ScenarioRun> {
    sc.validate()?;
    let ks: Vec<usize> = match &sc.sweep {
        Sweep::K(g) => g.clone(),
        _ => vec![sc.config.n_ers],
    };
    let units: Vec<(usize, usize)> = ks
        .iter()
        .flat_map(|&k| (0..sc.n_realizations).map(move |r| (k, r)))
        .collect();
    let results: Vec<Result<(Vec<RunRecord>, RealizationGroup)>> =
        units.par_iter().map(|&(k, r)| work_unit(sc, k, r)).collect();
    let mut records = Vec::new();
    let mut groups = Vec::new();
    for r in results {
        let (mut recs, g) = r?;
        records.append(&mut recs);
        groups.push(g);
    }
    records.sort_by_key(RunRecord::key);
    groups.sort_by_key(|g| (g.k, g.seed));
    Ok(ScenarioRun { records, groups })
}

pub fn run_scenario(sc: &Scenario) -> Result<Vec<RunRecord>> {
    Ok(run_scenario_detailed(sc)?.records)
}

fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

/// Writes records as CSV with 17 significant digits.
pub fn emit_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_csv(records, std::io::BufWriter::new(f))
}

pub fn write_csv<W: std::io::Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER.split(',')).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.scheme.name().to_string(),
            r.k.to_string(),
            r.j.to_string(),
            r.seed.to_string(),
            fmt_f64(r.e_joules),
            fmt_f64(r.total_energy_joules),
            r.rank.map(|v| v.to_string()).unwrap_or_default(),
            r.iterations.to_string(),
            fmt_f64(r.wall_ms),
            r.status.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

/// Reads a file written by [`emit_csv`].
pub fn parse_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let mut rd = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(String::from).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Parse(format!("unexpected header {}", header.join(","))));
    }
    let num = |s: &str, what: &str| -> Result<f64> {
        s.parse().map_err(|_| Error::Parse(format!("bad {what} '{s}'")))
    };
    let int = |s: &str, what: &str| -> Result<u64> {
        s.parse().map_err(|_| Error::Parse(format!("bad {what} '{s}'")))
    };
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row.map_err(csv_err)?;
        if row.len() != 10 {
            return Err(Error::Parse(format!("expected 10 fields, got {}", row.len())));
        }
        out.push(RunRecord {
            scheme: row[0].parse()?,
            k: int(&row[1], "k")? as usize,
            j: int(&row[2], "j")? as usize,
            seed: int(&row[3], "seed")?,
            e_joules: num(&row[4], "e_joules")?,
            total_energy_joules: num(&row[5], "total_energy_joules")?,
            rank: if row[6].is_empty() {
                None
            } else {
                Some(int(&row[6], "rank")? as usize)
            },
            iterations: int(&row[7], "iterations")? as usize,
            wall_ms: num(&row[8], "wall_ms")?,
            status: row[9].to_string(),
        });
    }
    Ok(out)
}

/// JSON mirror of a run, with the scenario and channel bookkeeping.
pub fn emit_json(sc: &Scenario, run: &ScenarioRun, path: &Path) -> Result<()> {
    #[derive(Serialize)]
    struct Doc<'a> {
        scenario: &'a Scenario,
        groups: &'a [RealizationGroup],
        records: &'a [RunRecord],
    }
    let doc = Doc {
        scenario: sc,
        groups: &run.groups,
        records: &run.records,
    };
    let f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), &doc)
        .map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

/// Normalized eigenvalue spectrum of the relaxed solution on one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub k: usize,
    pub seed: u64,
    pub rank: usize,
    /// Descending, divided by the largest.
    pub eigenvalues: Vec<f64>,
}

/// Relaxed solutions over the scenario's `K` grid (or its single `K`) and
/// their spectra. Failed realizations are skipped and reported by count.
pub fn rank_analysis(sc: &Scenario) -> Result<(Vec<Spectrum>, usize)> {
    sc.validate()?;
    let ks: Vec<usize> = match &sc.sweep {
        Sweep::K(g) => g.clone(),
        _ => vec![sc.config.n_ers],
    };
    let units: Vec<(usize, usize)> = ks
        .iter()
        .flat_map(|&k| (0..sc.n_realizations).map(move |r| (k, r)))
        .collect();
    let results: Vec<Result<Spectrum>> = units
        .par_iter()
        .map(|&(k, r)| {
            let cfg = sc.config.with_ers(k);
            let seed = sc.realization_seed(r);
            let ch = ChannelRealization::sample(&cfg, seed)?;
            let res = static_sdr::solve_sdr_upper_bound(&ch, &vec![sc.eh; k], &cfg)?;
            let top = res.eigenvalues.first().copied().unwrap_or(0.0);
            let eigenvalues = if top > 0.0 {
                res.eigenvalues.iter().map(|v| v / top).collect()
            } else {
                res.eigenvalues.clone()
            };
            Ok(Spectrum {
                k,
                seed,
                rank: res.rank_estimate,
                eigenvalues,
            })
        })
        .collect();
    let mut out = Vec::new();
    let mut failed = 0;
    for r in results {
        match r {
            Ok(s) => out.push(s),
            Err(e) => {
                log::warn!("relaxation failed: {e}");
                failed += 1;
            }
        }
    }
    out.sort_by_key(|s| (s.k, s.seed));
    Ok((out, failed))
}

/// Flat configuration file. Decibel keys carry the unit in their name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub n_elements: usize,
    pub n_ers: usize,
    pub et_position: [f64; 3],
    pub irs_position: [f64; 3],
    pub er_circle_center: [f64; 3],
    pub er_circle_radius: f64,
    pub pathloss_ref_db: f64,
    pub ref_distance: f64,
    pub exp_et_irs: f64,
    pub exp_irs_er: f64,
    pub exp_et_er: f64,
    pub rician_factor_db: f64,
    pub et_gain_dbi: f64,
    pub er_gain_dbi: f64,
    pub total_energy: f64,
    pub max_power_dbm: f64,
    pub horizon: f64,
    /// Uniform when absent.
    pub fairness_weights: Option<Vec<f64>>,
    pub sca_tol: f64,
    pub rank_threshold: f64,
    pub eh_a: f64,
    pub eh_b: f64,
    pub eh_m: f64,
    pub schemes: Vec<Scheme>,
    /// "none", "k" or "j".
    pub sweep: String,
    pub grid: Vec<usize>,
    pub n_realizations: usize,
    pub master_seed: u64,
    /// "rank" or a positive integer.
    pub dynamic_slots: toml::Value,
    pub gr_samples: usize,
    pub record_timing: bool,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self::desk()
    }
}

impl ConfigFile {
    /// Desk-scale defaults: N = 32, K swept over {2, 4, 8, 12, 16}, 20
    /// realizations.
    pub fn desk() -> Self {
        let r = SystemConfig::reference(32, 8);
        let eh = EhParams::default();
        Self {
            n_elements: r.n_elements,
            n_ers: r.n_ers,
            et_position: r.et_position,
            irs_position: r.irs_position,
            er_circle_center: r.er_circle_center,
            er_circle_radius: r.er_circle_radius,
            pathloss_ref_db: -30.0,
            ref_distance: r.ref_distance,
            exp_et_irs: r.exp_et_irs,
            exp_irs_er: r.exp_irs_er,
            exp_et_er: r.exp_et_er,
            rician_factor_db: 3.0,
            et_gain_dbi: 10.0,
            er_gain_dbi: 3.0,
            total_energy: r.total_energy,
            max_power_dbm: 46.0,
            horizon: r.horizon,
            fairness_weights: None,
            sca_tol: r.sca_tol,
            rank_threshold: r.rank_threshold,
            eh_a: eh.a,
            eh_b: eh.b,
            eh_m: eh.m,
            schemes: Scheme::ALL.to_vec(),
            sweep: "k".into(),
            grid: vec![2, 4, 8, 12, 16],
            n_realizations: 20,
            master_seed: 1,
            dynamic_slots: toml::Value::String("rank".into()),
            gr_samples: static_sdr::DEFAULT_GR_SAMPLES,
            record_timing: false,
        }
    }

    /// Full-scale setting: N = 100, K up to 60, 100 realizations.
    pub fn full() -> Self {
        Self {
            n_elements: 100,
            n_ers: 60,
            grid: vec![10, 20, 30, 40, 50, 60],
            n_realizations: 100,
            ..Self::desk()
        }
    }

    pub fn named(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Self::desk()),
            "full" => Some(Self::full()),
            _ => None,
        }
    }

    /// Parses TOML text, applying `key=value` overrides (values in TOML
    /// syntax; bare words are taken as strings) on top of `base`.
    pub fn from_toml(text: &str, base: &ConfigFile, overrides: &[String]) -> Result<Self> {
        let mut table = toml::Table::try_from(base).map_err(|e| Error::Parse(e.to_string()))?;
        let file: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        for (k, v) in file {
            table.insert(k, v);
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("override '{o}' is not key=value")))?;
            let k = k.trim();
            let v = v.trim();
            let value = format!("x = {v}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("x"))
                .unwrap_or_else(|| toml::Value::String(v.to_string()));
            table.insert(k.to_string(), value);
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text, &Self::desk(), overrides)
    }

    pub fn system_config(&self) -> SystemConfig {
        let k = self.n_ers;
        SystemConfig {
            n_elements: self.n_elements,
            n_ers: k,
            et_position: self.et_position,
            irs_position: self.irs_position,
            er_circle_center: self.er_circle_center,
            er_circle_radius: self.er_circle_radius,
            pathloss_ref: db_to_linear(self.pathloss_ref_db),
            ref_distance: self.ref_distance,
            exp_et_irs: self.exp_et_irs,
            exp_irs_er: self.exp_irs_er,
            exp_et_er: self.exp_et_er,
            rician_factor: db_to_linear(self.rician_factor_db),
            et_gain: db_to_linear(self.et_gain_dbi),
            er_gain: db_to_linear(self.er_gain_dbi),
            total_energy: self.total_energy,
            max_power: dbm_to_watts(self.max_power_dbm),
            horizon: self.horizon,
            fairness_weights: self
                .fairness_weights
                .clone()
                .unwrap_or_else(|| vec![1.0 / k.max(1) as f64; k]),
            sca_tol: self.sca_tol,
            rank_threshold: self.rank_threshold,
        }
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let sweep = match self.sweep.as_str() {
            "none" => Sweep::None,
            "k" => Sweep::K(self.grid.clone()),
            "j" => Sweep::J(self.grid.clone()),
            other => return Err(Error::InvalidConfig(format!("unknown sweep '{other}'"))),
        };
        let dynamic_slots = match &self.dynamic_slots {
            toml::Value::String(s) if s == "rank" => SlotRule::Rank,
            toml::Value::Integer(j) if *j > 0 => SlotRule::Fixed(*j as usize),
            other => return Err(Error::InvalidConfig(format!("dynamic_slots must be \"rank\" or a positive integer, got {other}"))),
        };
        let sc = Scenario {
            config: self.system_config(),
            eh: EhParams::derive_constants(self.eh_a, self.eh_b, self.eh_m)?,
            schemes: self.schemes.clone(),
            sweep,
            n_realizations: self.n_realizations,
            master_seed: self.master_seed,
            dynamic_slots,
            gr_samples: self.gr_samples,
            record_timing: self.record_timing,
        };
        sc.validate()?;
        Ok(sc)
    }
}
