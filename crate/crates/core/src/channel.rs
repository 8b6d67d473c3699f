//! System geometry, fading channels and the cascaded/lifted channel
//! quantities every optimizer works with.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Tolerance on `|theta_n| = 1` accepted by the power evaluators.
pub const UNIT_MODULUS_TOL: f64 = 1e-9;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Physical and algorithmic parameters of one IRS-assisted WET deployment.
/// All quantities are linear (no dB) and in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n_elements: usize,
    pub n_ers: usize,
    pub et_position: [f64; 3],
    pub irs_position: [f64; 3],
    pub er_circle_center: [f64; 3],
    pub er_circle_radius: f64,
    /// Linear path gain at the reference distance.
    pub pathloss_ref: f64,
    pub ref_distance: f64,
    pub exp_et_irs: f64,
    pub exp_irs_er: f64,
    pub exp_et_er: f64,
    /// Linear Rician K-factor of the IRS links.
    pub rician_factor: f64,
    pub et_gain: f64,
    pub er_gain: f64,
    /// Energy budget over one block, J.
    pub total_energy: f64,
    /// Peak transmit power, W.
    pub max_power: f64,
    /// Block length, s.
    pub horizon: f64,
    pub fairness_weights: Vec<f64>,
    /// Relative objective improvement below which SCA stops.
    pub sca_tol: f64,
    /// Eigenvalues above this fraction of the largest one count towards the rank.
    pub rank_threshold: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::reference(100, 10)
    }
}

impl SystemConfig {
    /// The reference deployment with `n` IRS elements and `k` receivers and
    /// uniform fairness weights.
    pub fn reference(n: usize, k: usize) -> Self {
        Self {
            n_elements: n,
            n_ers: k,
            et_position: [0.0, 0.0, 0.0],
            irs_position: [30.0, 0.0, 5.0],
            er_circle_center: [30.0, 0.0, 0.0],
            er_circle_radius: 5.0,
            pathloss_ref: db_to_linear(-30.0),
            ref_distance: 1.0,
            exp_et_irs: 2.2,
            exp_irs_er: 2.2,
            exp_et_er: 3.6,
            rician_factor: db_to_linear(3.0),
            et_gain: db_to_linear(10.0),
            er_gain: db_to_linear(3.0),
            total_energy: 10.0,
            max_power: dbm_to_watts(46.0),
            horizon: 1.0,
            fairness_weights: vec![1.0 / k.max(1) as f64; k],
            sca_tol: 1e-3,
            rank_threshold: 0.02,
        }
    }

    /// Same deployment with a different receiver count and uniform weights.
    pub fn with_ers(&self, k: usize) -> Self {
        Self {
            n_ers: k,
            fairness_weights: vec![1.0 / k as f64; k],
            ..self.clone()
        }
    }

    /// Transmit power that spends the whole budget over the block, capped at
    /// the peak power.
    pub fn full_budget_power(&self) -> f64 {
        (self.total_energy / self.horizon).min(self.max_power)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_elements == 0 {
            return bad("n_elements must be positive".into());
        }
        if self.n_ers == 0 {
            return bad("n_ers must be positive".into());
        }
        let positive = [
            ("er_circle_radius", self.er_circle_radius),
            ("pathloss_ref", self.pathloss_ref),
            ("ref_distance", self.ref_distance),
            ("exp_et_irs", self.exp_et_irs),
            ("exp_irs_er", self.exp_irs_er),
            ("exp_et_er", self.exp_et_er),
            ("rician_factor", self.rician_factor),
            ("et_gain", self.et_gain),
            ("er_gain", self.er_gain),
            ("total_energy", self.total_energy),
            ("max_power", self.max_power),
            ("horizon", self.horizon),
            ("sca_tol", self.sca_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.fairness_weights.len() != self.n_ers {
            return bad(format!(
                "expected {} fairness weights, got {}",
                self.n_ers,
                self.fairness_weights.len()
            ));
        }
        if self.fairness_weights.iter().any(|w| !(*w >= 0.0)) {
            return bad("fairness weights must be nonnegative".into());
        }
        let sum: f64 = self.fairness_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return bad(format!("fairness weights must sum to 1, got {sum}"));
        }
        if !(self.rank_threshold > 0.0 && self.rank_threshold < 1.0) {
            return bad(format!(
                "rank_threshold must lie in (0, 1), got {}",
                self.rank_threshold
            ));
        }
        if dist(&self.et_position, &self.irs_position) <= 0.0 {
            return bad("ET and IRS must not coincide".into());
        }
        Ok(())
    }

    /// Large-scale path gain `c0 (d/d0)^-alpha`.
    pub fn path_loss(&self, d: f64, exponent: f64) -> f64 {
        self.pathloss_ref * (d / self.ref_distance).powf(-exponent)
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// All channels of one coherence block.
///
/// `q` holds the cascaded rows `q_k^H = h_{r,k}^H diag(g)` and `h_d` the
/// direct scalars `h_{d,k}^H`, so that the amplitude seen by receiver `k`
/// under reflection vector `theta` is `q.row(k) * theta + h_d[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub n_elements: usize,
    pub n_ers: usize,
    pub er_positions: Vec<[f64; 3]>,
    /// Direct ET -> ER channels.
    pub h_d: Vec<C64>,
    /// ET -> IRS channel, one entry per element.
    pub g: Vec<C64>,
    /// IRS -> ER channels, `K x N`.
    pub h_r: DMatrix<C64>,
    /// Cascaded channels, `K x N`.
    pub q: DMatrix<C64>,
    /// `q` with the direct channel appended, `K x (N+1)`.
    pub q_bar: DMatrix<C64>,
    /// `Q_k = q_bar_k^H q_bar_k`, each `(N+1) x (N+1)`.
    pub q_lift: Vec<DMatrix<C64>>,
    /// Mean power gains (path loss times antenna gains) of the direct links.
    pub direct_gain: Vec<f64>,
}

fn complex_normal<R: Rng>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Line-of-sight response of element `n` for a wave whose direction makes
/// `cos_angle` with the array axis (x axis, half-wavelength spacing).
fn los_phase(n: usize, cos_angle: f64) -> C64 {
    C64::from_polar(1.0, -PI * n as f64 * cos_angle)
}

impl ChannelRealization {
    /// Draws receiver positions and small-scale fading for one block.
    /// Identical `(config, seed)` pairs produce identical realizations.
    pub fn sample(config: &SystemConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let n = config.n_elements;
        let k = config.n_ers;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let er_positions: Vec<[f64; 3]> = (0..k)
            .map(|_| {
                let r = config.er_circle_radius * rng.gen::<f64>().sqrt();
                let phi = 2.0 * PI * rng.gen::<f64>();
                let c = config.er_circle_center;
                [c[0] + r * phi.cos(), c[1] + r * phi.sin(), c[2]]
            })
            .collect();

        let kappa = config.rician_factor;
        let w_los = (kappa / (1.0 + kappa)).sqrt();
        let w_nlos = (1.0 / (1.0 + kappa)).sqrt();

        let d_ti = dist(&config.et_position, &config.irs_position);
        let amp_ti = (config.path_loss(d_ti, config.exp_et_irs) * config.et_gain).sqrt();
        let cos_ti = (config.et_position[0] - config.irs_position[0]) / d_ti;
        let g: Vec<C64> = (0..n)
            .map(|i| amp_ti * (w_los * los_phase(i, cos_ti) + w_nlos * complex_normal(&mut rng)))
            .collect();

        let mut h_r = DMatrix::<C64>::zeros(k, n);
        for (kk, pos) in er_positions.iter().enumerate() {
            let d = dist(&config.irs_position, pos).max(1e-9);
            let amp = (config.path_loss(d, config.exp_irs_er) * config.er_gain).sqrt();
            let cos_a = (pos[0] - config.irs_position[0]) / d;
            for i in 0..n {
                h_r[(kk, i)] =
                    amp * (w_los * los_phase(i, cos_a) + w_nlos * complex_normal(&mut rng));
            }
        }

        let mut direct_gain = Vec::with_capacity(k);
        let h_d: Vec<C64> = er_positions
            .iter()
            .map(|pos| {
                let d = dist(&config.et_position, pos).max(1e-9);
                let gain = config.path_loss(d, config.exp_et_er) * config.et_gain * config.er_gain;
                direct_gain.push(gain);
                gain.sqrt() * complex_normal(&mut rng)
            })
            .collect();

        Ok(Self::from_channels(h_d, g, h_r, er_positions, direct_gain))
    }

    /// Assembles the derived quantities from raw channels.
    pub fn from_channels(
        h_d: Vec<C64>,
        g: Vec<C64>,
        h_r: DMatrix<C64>,
        er_positions: Vec<[f64; 3]>,
        direct_gain: Vec<f64>,
    ) -> Self {
        let k = h_d.len();
        let n = g.len();
        assert_eq!(h_r.shape(), (k, n), "h_r must be K x N");
        let q = DMatrix::from_fn(k, n, |r, c| h_r[(r, c)] * g[c]);
        let q_bar = DMatrix::from_fn(k, n + 1, |r, c| if c < n { q[(r, c)] } else { h_d[r] });
        let q_lift = (0..k)
            .map(|r| {
                let row = q_bar.row(r);
                DMatrix::from_fn(n + 1, n + 1, |i, j| row[i].conj() * row[j])
            })
            .collect();
        Self {
            n_elements: n,
            n_ers: k,
            er_positions,
            h_d,
            g,
            h_r,
            q,
            q_bar,
            q_lift,
            direct_gain,
        }
    }

    /// Complex amplitude `q_k^H theta + h_{d,k}^H` for an arbitrary
    /// (not necessarily unit-modulus) reflection vector.
    pub fn amplitude(&self, k: usize, theta: &[C64]) -> C64 {
        let row = self.q.row(k);
        row.iter().zip(theta).map(|(q, t)| q * t).sum::<C64>() + self.h_d[k]
    }

    /// `|q_k^H theta + h_{d,k}^H|^2`, the received power per watt transmitted.
    pub fn channel_gain(&self, k: usize, theta: &[C64]) -> f64 {
        self.amplitude(k, theta).norm_sqr()
    }

    /// RF power received by ER `k` for unit-modulus `theta` and transmit power `p_t`.
    pub fn received_rf_power(&self, k: usize, theta: &[C64], p_t: f64) -> Result<f64> {
        self.check_theta(k, theta)?;
        if !(p_t >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "transmit power must be nonnegative, got {p_t}"
            )));
        }
        Ok(p_t * self.channel_gain(k, theta))
    }

    /// Same quantity through the lifted form `p_t * theta_bar^H Q_k theta_bar`.
    pub fn received_rf_power_lifted(&self, k: usize, theta: &[C64], p_t: f64) -> Result<f64> {
        self.check_theta(k, theta)?;
        let tb = extend(theta);
        let ql = &self.q_lift[k];
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..tb.len() {
            for j in 0..tb.len() {
                acc += tb[i].conj() * ql[(i, j)] * tb[j];
            }
        }
        Ok(p_t * acc.re)
    }

    /// `(|h_{d,k}| + sum_n |q_{k,n}|)^2`, the largest gain any unit-modulus
    /// reflection vector can deliver to ER `k`.
    pub fn matched_gain(&self, k: usize) -> f64 {
        let s: f64 = self.q.row(k).iter().map(|c| c.norm()).sum::<f64>() + self.h_d[k].norm();
        s * s
    }

    /// Stable 64-bit fingerprint of the channel coefficients.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: f64| {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for c in self.q_bar.iter() {
            eat(c.re);
            eat(c.im);
        }
        h
    }

    fn check_theta(&self, k: usize, theta: &[C64]) -> Result<()> {
        if k >= self.n_ers {
            return Err(Error::InvalidArgument(format!(
                "ER index {k} out of range (K = {})",
                self.n_ers
            )));
        }
        if theta.len() != self.n_elements {
            return Err(Error::InvalidArgument(format!(
                "expected {} phases, got {}",
                self.n_elements,
                theta.len()
            )));
        }
        if let Some(bad) = theta.iter().find(|t| (t.norm() - 1.0).abs() > UNIT_MODULUS_TOL) {
            return Err(Error::InvalidArgument(format!(
                "phase entry {bad} is not unit modulus"
            )));
        }
        Ok(())
    }
}

/// `theta_bar = [theta; 1]`.
pub fn extend(theta: &[C64]) -> Vec<C64> {
    let mut v = theta.to_vec();
    v.push(C64::new(1.0, 0.0));
    v
}

/// Thin wrapper kept for call sites that read better as a free function.
pub fn sample_channels(config: &SystemConfig, seed: u64) -> Result<ChannelRealization> {
    ChannelRealization::sample(config, seed)
}
