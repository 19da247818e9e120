//! Scenario description, geometry, EH trace generation and energy ledgers.
//!
//! Timing convention: the horizon holds `N = N_c * N_e` transmission blocks of
//! length `T_c` seconds. Block indices `n` and EH-interval indices `j` are
//! 1-based throughout, matching the usual prefix-sum formulation of energy
//! causality. The EH rate of relay `k` is constant within an EH interval.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

fn default_pairs() -> usize {
    1
}
fn default_relays() -> usize {
    5
}
fn default_blocks_per_interval() -> usize {
    5
}
fn default_intervals() -> usize {
    5
}
fn default_block_secs() -> f64 {
    0.01
}
fn default_field() -> f64 {
    100.0
}
fn default_ref_distance() -> f64 {
    10.0
}
fn default_pl_ref_db() -> f64 {
    60.0
}
fn default_bandwidth() -> f64 {
    1e6
}
fn default_noise_psd() -> f64 {
    1e-16
}
fn default_gamma_th() -> f64 {
    1.0
}
fn default_u_th() -> f64 {
    0.99
}
fn default_p_max() -> f64 {
    2.0
}
fn default_eh_mean() -> f64 {
    0.02
}
fn default_eh_alpha() -> f64 {
    0.5
}
fn default_seed() -> u64 {
    1
}

/// Static description of one network instance. All values in SI units.
///
/// Serialized field names follow the conventional symbols (`M`, `K`, `N_c`,
/// ...); absent fields take the standard defaults (2.4 GHz free-space loss
/// reference, 1 MHz band, 10 ms blocks, 5 blocks per EH interval, 5 EH
/// intervals, 0.99 success target, 2 W relay peak power, 20 mW average EH
/// rate with spread 0.5).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Number of source-destination pairs.
    #[serde(rename = "M", default = "default_pairs")]
    pub pairs: usize,
    /// Number of EH relays.
    #[serde(rename = "K", default = "default_relays")]
    pub relays: usize,
    /// Transmission blocks per EH interval.
    #[serde(rename = "N_c", default = "default_blocks_per_interval")]
    pub blocks_per_interval: usize,
    /// Number of EH intervals in the horizon.
    #[serde(rename = "N_e", default = "default_intervals")]
    pub intervals: usize,
    /// Block length in seconds.
    #[serde(rename = "T_c", default = "default_block_secs")]
    pub block_secs: f64,
    /// Field width (meters); sources sit at x = 0, destinations at x = L_x.
    #[serde(rename = "L_x", default = "default_field")]
    pub field_x: f64,
    /// Field height (meters).
    #[serde(rename = "L_y", default = "default_field")]
    pub field_y: f64,
    /// Path-loss reference distance (meters).
    #[serde(default = "default_ref_distance")]
    pub d0: f64,
    /// Path loss at the reference distance, in dB.
    #[serde(default = "default_pl_ref_db")]
    pub pl_ref_db: f64,
    /// Channel bandwidth (Hz).
    #[serde(default = "default_bandwidth")]
    pub bandwidth_hz: f64,
    /// Noise power spectral density (W/Hz).
    #[serde(default = "default_noise_psd")]
    pub noise_psd: f64,
    /// SNR threshold (linear).
    #[serde(default = "default_gamma_th")]
    pub gamma_th: f64,
    /// Required per-block success probability, in (0, 1).
    #[serde(default = "default_u_th")]
    pub u_th: f64,
    /// Per-band relay peak transmit power (W).
    #[serde(default = "default_p_max")]
    pub p_max: f64,
    /// Average EH rate (W).
    #[serde(default = "default_eh_mean")]
    pub eh_mean: f64,
    /// EH rate spread, in (0, 1): rates are uniform in
    /// `[eh_mean*(1-alpha), eh_mean*(1+alpha)]`.
    #[serde(default = "default_eh_alpha")]
    pub eh_alpha: f64,
    /// Explicit relay coordinates; when absent, positions are drawn uniformly
    /// inside the rectangle from a stream derived from `seed`.
    #[serde(default)]
    pub relay_positions: Option<Vec<[f64; 2]>>,
    /// RNG seed for placements and EH traces.
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        serde_json::from_str("{}").expect("default scenario")
    }
}

impl Scenario {
    /// Total number of transmission blocks `N = N_c * N_e`.
    pub fn total_blocks(&self) -> usize {
        self.blocks_per_interval * self.intervals
    }

    /// Noise power over the band, `N0 * B`, in watts.
    pub fn noise_power(&self) -> f64 {
        self.noise_psd * self.bandwidth_hz
    }

    /// Coordinates of the `m`-th source (0-based index).
    pub fn source_pos(&self, m: usize) -> [f64; 2] {
        [0.0, (m + 1) as f64 * self.field_y / (self.pairs + 1) as f64]
    }

    /// Coordinates of the `m`-th destination (0-based index).
    pub fn dest_pos(&self, m: usize) -> [f64; 2] {
        [
            self.field_x,
            (m + 1) as f64 * self.field_y / (self.pairs + 1) as f64,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: &str| Err(Error::InvalidScenario(msg.to_string()));
        if self.pairs < 1 || self.relays < 1 {
            return err("M and K must be at least 1");
        }
        if self.blocks_per_interval < 1 || self.intervals < 1 {
            return err("N_c and N_e must be at least 1");
        }
        if !(self.u_th > 0.0 && self.u_th < 1.0) {
            return err("u_th must lie in (0, 1)");
        }
        if !(self.eh_alpha > 0.0 && self.eh_alpha < 1.0) && self.eh_alpha != 0.0 {
            return err("eh_alpha must lie in [0, 1)");
        }
        for (name, v) in [
            ("T_c", self.block_secs),
            ("L_x", self.field_x),
            ("L_y", self.field_y),
            ("d0", self.d0),
            ("bandwidth_hz", self.bandwidth_hz),
            ("noise_psd", self.noise_psd),
            ("gamma_th", self.gamma_th),
            ("p_max", self.p_max),
            ("eh_mean", self.eh_mean),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidScenario(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        if let Some(pos) = &self.relay_positions {
            if pos.len() != self.relays {
                return err("relay_positions length must equal K");
            }
        }
        Ok(())
    }

    /// Relay coordinates: explicit ones if given, otherwise uniform i.i.d.
    /// inside the rectangle from a dedicated position stream.
    pub fn resolve_relay_positions(&self) -> Vec<[f64; 2]> {
        if let Some(pos) = &self.relay_positions {
            return pos.clone();
        }
        // Position stream kept independent of the EH-trace stream.
        let mut rng = self.position_rng();
        (0..self.relays)
            .map(|_| {
                [
                    rng.gen_range(0.0..self.field_x),
                    rng.gen_range(0.0..self.field_y),
                ]
            })
            .collect()
    }

    /// RNG stream for relay placement.
    pub fn position_rng(&self) -> ChaCha12Rng {
        rand::SeedableRng::seed_from_u64(self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0x706f_73)
    }

    /// RNG stream for EH traces and fading draws.
    pub fn trace_rng(&self) -> ChaCha12Rng {
        rand::SeedableRng::seed_from_u64(self.seed)
    }
}

/// Linear path gains between every source/relay/destination of a scenario.
#[derive(Debug, Clone)]
pub struct Gains {
    /// `sr[m][k]`: source `m` to relay `k`.
    pub sr: Vec<Vec<f64>>,
    /// `rd[m][k]`: relay `k` to destination `m`.
    pub rd: Vec<Vec<f64>>,
    /// `sd[m]`: direct source-destination gain of pair `m`.
    pub sd: Vec<f64>,
}

/// Free-space style path gain: `10^(-pl_ref_db/10) * (d0/d)^2`.
///
/// Deterministic and symmetric in its endpoints; errors on zero distance.
pub fn path_gain(src: [f64; 2], dst: [f64; 2], scn: &Scenario) -> Result<f64> {
    let d = ((src[0] - dst[0]).powi(2) + (src[1] - dst[1]).powi(2)).sqrt();
    if d == 0.0 {
        return Err(Error::DegenerateGeometry);
    }
    Ok(10f64.powf(-scn.pl_ref_db / 10.0) * (scn.d0 / d).powi(2))
}

/// Compute all link gains for a scenario and a set of relay positions.
pub fn compute_gains(scn: &Scenario, relay_positions: &[[f64; 2]]) -> Result<Gains> {
    let mut sr = vec![vec![0.0; scn.relays]; scn.pairs];
    let mut rd = vec![vec![0.0; scn.relays]; scn.pairs];
    let mut sd = vec![0.0; scn.pairs];
    for m in 0..scn.pairs {
        let s = scn.source_pos(m);
        let d = scn.dest_pos(m);
        sd[m] = path_gain(s, d, scn)?;
        for (k, r) in relay_positions.iter().enumerate() {
            sr[m][k] = path_gain(s, *r, scn)?;
            rd[m][k] = path_gain(*r, d, scn)?;
        }
    }
    Ok(Gains { sr, rd, sd })
}

/// Per-relay harvest rates over the EH intervals plus initial battery levels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EhTrace {
    /// `psi[k][j]`: harvest rate of relay `k` in EH interval `j` (W),
    /// 0-based storage for 1-based interval indices.
    pub psi: Vec<Vec<f64>>,
    /// Initial battery energy per relay (J).
    pub e_init: Vec<f64>,
}

impl EhTrace {
    /// Block-level harvest rate `P(k,n) = Psi(k, ceil(n/N_c))`, `n` 1-based.
    pub fn rate_at_block(&self, k: usize, n: usize, scn: &Scenario) -> f64 {
        self.psi[k][(n - 1) / scn.blocks_per_interval]
    }

    /// EH interval containing block `n` (both 1-based).
    pub fn interval_of_block(n: usize, scn: &Scenario) -> usize {
        (n - 1) / scn.blocks_per_interval + 1
    }

    pub fn intervals(&self) -> usize {
        self.psi.first().map_or(0, Vec::len)
    }
}

/// Draw a trace: i.i.d. uniform interval rates in
/// `[eh_mean(1-alpha), eh_mean(1+alpha)]` and the standard initial energy
/// `M * p_max * T_c / 2` (enough for peak power on every band once).
pub fn gen_eh_trace<R: Rng>(scn: &Scenario, rng: &mut R) -> EhTrace {
    let lo = scn.eh_mean * (1.0 - scn.eh_alpha);
    let hi = scn.eh_mean * (1.0 + scn.eh_alpha);
    let psi = (0..scn.relays)
        .map(|_| {
            (0..scn.intervals)
                .map(|_| {
                    if scn.eh_alpha == 0.0 {
                        scn.eh_mean
                    } else {
                        rng.gen_range(lo..hi)
                    }
                })
                .collect()
        })
        .collect();
    let e_init = vec![scn.pairs as f64 * scn.p_max * scn.block_secs / 2.0; scn.relays];
    EhTrace { psi, e_init }
}

/// Cumulative average EH rate of relay `k` over the first `j` intervals.
pub fn cumulative_avg_rate(trace: &EhTrace, k: usize, j: usize) -> Result<f64> {
    if j < 1 || j > trace.intervals() {
        return Err(Error::IndexOutOfRange(format!(
            "EH interval {j} outside 1..={}",
            trace.intervals()
        )));
    }
    Ok(trace.psi[k][..j].iter().sum::<f64>() / j as f64)
}

/// Current stored energy of every relay (J).
#[derive(Debug, Clone)]
pub struct EnergyLedger {
    pub available: Vec<f64>,
}

/// One relay transmission within a block: relay `relay` assists pair `pair`
/// at power `power` for the second half of the block.
#[derive(Debug, Clone, Copy)]
pub struct Selection {
    pub pair: usize,
    pub relay: usize,
    pub power: f64,
}

// Debit slack: absolute rounding allowance so that exactly-balanced policies
// (zeta == 1 boundary) do not trip the causality check.
const DEBIT_EPS_REL: f64 = 1e-9;

impl EnergyLedger {
    pub fn from_trace(trace: &EhTrace) -> Self {
        EnergyLedger {
            available: trace.e_init.clone(),
        }
    }

    /// Credit every relay half a block of harvest for block `n`.
    pub fn credit_half_block(&mut self, trace: &EhTrace, scn: &Scenario, n: usize) {
        for k in 0..self.available.len() {
            self.available[k] += trace.rate_at_block(k, n, scn) * scn.block_secs / 2.0;
        }
    }

    /// True when relay `k` can fund a half-block transmission at `power`
    /// (same rounding slack as [`EnergyLedger::debit`]).
    pub fn covers(&self, k: usize, power: f64, scn: &Scenario) -> bool {
        let slack = DEBIT_EPS_REL * scn.p_max * scn.block_secs;
        self.available[k] + slack >= power * scn.block_secs / 2.0
    }

    /// Debit the half-block transmit energy of one selection.
    pub fn debit(&mut self, sel: &Selection, scn: &Scenario, block: usize) -> Result<()> {
        let need = sel.power * scn.block_secs / 2.0;
        let slack = DEBIT_EPS_REL * scn.p_max * scn.block_secs;
        if self.available[sel.relay] + slack < need {
            return Err(Error::EnergyCausality {
                relay: sel.relay,
                block,
                deficit: need - self.available[sel.relay],
            });
        }
        self.available[sel.relay] = (self.available[sel.relay] - need).max(0.0);
        Ok(())
    }
}

/// Advance a ledger through one full block: half-block harvest, the relay
/// transmissions (debits), then the second half-block harvest.
///
/// A debit exceeding availability signals a scheduler bug upstream and
/// surfaces as an energy-causality error.
pub fn ledger_step(
    ledger: &mut EnergyLedger,
    trace: &EhTrace,
    scn: &Scenario,
    block: usize,
    selections: &[Selection],
) -> Result<()> {
    ledger.credit_half_block(trace, scn, block);
    for sel in selections {
        ledger.debit(sel, scn, block)?;
    }
    ledger.credit_half_block(trace, scn, block);
    Ok(())
}
