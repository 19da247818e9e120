//! Relay pre-selection, the minimum relay-power assignment, the sufficient
//! feasibility statistic (zeta), and the per-interval share-splitting LP that
//! decouples the multi-pair case into per-pair conditions.

use crate::lp::{LpProblem, Sense};
use crate::model::{cumulative_avg_rate, EhTrace, Gains, Scenario};
use crate::utility;
use crate::{Error, Result};
use serde::Serialize;

/// Pre-selection outcome at a fixed source power eta: per-pair candidate
/// relay sets and the minimum relay power meeting the QoS for each candidate.
#[derive(Debug, Clone, Serialize)]
pub struct CandidateSets {
    /// Sorted relay indices usable by each pair at this eta.
    pub s_eta: Vec<Vec<usize>>,
    /// `p_hat[m][k]`: minimum relay power (W) for candidates, exactly 0
    /// outside the candidate set.
    pub p_hat: Vec<Vec<f64>>,
}

impl CandidateSets {
    pub fn pairs(&self) -> usize {
        self.s_eta.len()
    }

    pub fn relays(&self) -> usize {
        self.p_hat.first().map_or(0, Vec::len)
    }

    pub fn is_candidate(&self, m: usize, k: usize) -> bool {
        self.p_hat[m][k] > 0.0
    }

    /// True when some pair has no usable relay at all (the probe is then
    /// infeasible regardless of energy).
    pub fn has_empty_set(&self) -> bool {
        self.s_eta.iter().any(Vec::is_empty)
    }
}

/// Candidate relays per pair at source power `eta`: a relay qualifies when it
/// meets the success target at peak power, and its minimum power is found by
/// inverting the utility in the relay-power argument.
pub fn preselect(eta: f64, scn: &Scenario, gains: &Gains) -> Result<CandidateSets> {
    if !(eta > 0.0) {
        return Err(Error::InvalidScenario(format!(
            "pre-selection needs eta > 0, got {eta}"
        )));
    }
    let mut s_eta = Vec::with_capacity(scn.pairs);
    let mut p_hat = vec![vec![0.0; scn.relays]; scn.pairs];
    for m in 0..scn.pairs {
        let mut set = Vec::new();
        for k in 0..scn.relays {
            let (g_sr, g_rd) = (gains.sr[m][k], gains.rd[m][k]);
            if utility::af_success(eta, scn.p_max, g_sr, g_rd, scn) >= scn.u_th {
                p_hat[m][k] = utility::inverse_relay_power(eta, g_sr, g_rd, scn.u_th, scn)?;
                set.push(k);
            }
        }
        s_eta.push(set);
    }
    Ok(CandidateSets { s_eta, p_hat })
}

/// Feasibility statistic for the single-pair case over the first `l` EH
/// intervals:
///
/// `zeta = sum_k 2*avg_rate(k,l)/p_hat(k)
///       + sum_k (2*e_init[k]/T_c - p_hat(k)) / (p_hat(k)*l*N_c)`
///
/// The first sum is the steady-state harvest margin, the second the startup
/// battery margin. An empty candidate set yields `-inf` so callers can treat
/// it as an ordinary failed probe.
pub fn zeta(cand: &CandidateSets, trace: &EhTrace, l: usize, scn: &Scenario) -> Result<f64> {
    if cand.pairs() != 1 {
        return Err(Error::InvalidScenario(
            "zeta is defined for the single-pair case".into(),
        ));
    }
    if cand.s_eta[0].is_empty() {
        return Ok(f64::NEG_INFINITY);
    }
    let horizon = (l * scn.blocks_per_interval) as f64;
    let mut z = 0.0;
    for &k in &cand.s_eta[0] {
        let p = cand.p_hat[0][k];
        z += 2.0 * cumulative_avg_rate(trace, k, l)? / p;
        z += (2.0 * trace.e_init[k] / scn.block_secs - p) / (p * horizon);
    }
    Ok(z)
}

/// Sufficient single-pair feasibility test: `min_l zeta(l) >= 1` over the
/// whole horizon.
pub fn sufficiency_check(cand: &CandidateSets, trace: &EhTrace, scn: &Scenario) -> Result<bool> {
    for l in 1..=trace.intervals() {
        if zeta(cand, trace, l, scn)? < 1.0 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Cumulative average harvest rate of the child relay a pair owns under a
/// harvest share `theta_tilde`: the parent average scaled by the share.
pub fn child_rate(theta_tilde: f64, trace: &EhTrace, k: usize, j: usize) -> Result<f64> {
    debug_assert!((0.0..=1.0).contains(&theta_tilde));
    Ok(theta_tilde * cumulative_avg_rate(trace, k, j)?)
}

/// Share-splitting LP for one EH interval `j`.
///
/// Variables are initial-energy shares `phi(m,k)` and harvest shares
/// `theta_tilde(m,k)`, all boxed in `[0,1]`. Row order in the LP (and its
/// text dump): one margin row per pair, then one `sum_m phi(m,k) = 1`
/// equality per relay, then the matching `theta_tilde` equalities.
#[derive(Debug, Clone)]
pub struct Fp6Instance {
    pub lp: LpProblem,
    pub pairs: usize,
    pub relays: usize,
    /// Set when some pair has an empty candidate set; the instance is then
    /// infeasible without solving anything.
    pub trivially_infeasible: bool,
}

/// Witness shares extracted from a feasible interval LP.
#[derive(Debug, Clone)]
pub struct IntervalWitness {
    /// `phi[m][k]`: initial-energy share of pair m in relay k.
    pub phi: Vec<Vec<f64>>,
    /// `theta[m][k]`: harvest share of pair m in relay k for this interval.
    pub theta: Vec<Vec<f64>>,
}

impl Fp6Instance {
    pub fn phi_var(&self, m: usize, k: usize) -> usize {
        m * self.relays + k
    }

    pub fn theta_var(&self, m: usize, k: usize) -> usize {
        self.pairs * self.relays + m * self.relays + k
    }

    pub fn to_text(&self) -> String {
        self.lp.to_text()
    }

    /// Solve the instance; `Some(witness)` with the share matrices when
    /// feasible.
    pub fn feasible(&self) -> Result<Option<IntervalWitness>> {
        if self.trivially_infeasible {
            return Ok(None);
        }
        let Some(x) = self.lp.feasible()? else {
            return Ok(None);
        };
        let mut phi = vec![vec![0.0; self.relays]; self.pairs];
        let mut theta = vec![vec![0.0; self.relays]; self.pairs];
        for m in 0..self.pairs {
            for k in 0..self.relays {
                // The solver enforces the box only up to its feasibility
                // tolerance; clamp so downstream share arithmetic stays exact.
                phi[m][k] = x[self.phi_var(m, k)].clamp(0.0, 1.0);
                theta[m][k] = x[self.theta_var(m, k)].clamp(0.0, 1.0);
            }
        }
        Ok(Some(IntervalWitness { phi, theta }))
    }
}

/// Assemble the interval-`j` share LP.
///
/// Per-pair margin row (the single-pair statistic applied to the child relays
/// `(theta*avg_rate, phi*e_init)`, with the per-candidate startup deficit
/// moved to the right-hand side):
///
/// `sum_{k in S(m)} [2*avg_rate(k,j)/p_hat(m,k)]*theta(m,k)
///   + [2*e_init[k]/(T_c*j*N_c*p_hat(m,k))]*phi(m,k)  >=  1 + |S(m)|/(j*N_c)`
///
/// Shares of non-candidate relays still appear in the equalities (they absorb
/// unused fractions) but carry zero coefficients in the margin rows.
pub fn build_fp6(
    cand: &CandidateSets,
    trace: &EhTrace,
    j: usize,
    scn: &Scenario,
) -> Result<Fp6Instance> {
    let (pairs, relays) = (cand.pairs(), cand.relays());
    let horizon = (j * scn.blocks_per_interval) as f64;
    let n_vars = 2 * pairs * relays;
    let mut lp = LpProblem::new(n_vars);
    for v in 0..n_vars {
        lp.set_bounds(v, 0.0, 1.0);
    }
    let inst_var = |phi: bool, m: usize, k: usize| {
        if phi {
            m * relays + k
        } else {
            pairs * relays + m * relays + k
        }
    };
    for m in 0..pairs {
        let mut coeffs = vec![0.0; n_vars];
        for &k in &cand.s_eta[m] {
            let p = cand.p_hat[m][k];
            coeffs[inst_var(false, m, k)] = 2.0 * cumulative_avg_rate(trace, k, j)? / p;
            coeffs[inst_var(true, m, k)] =
                2.0 * trace.e_init[k] / (scn.block_secs * horizon * p);
        }
        let rhs = 1.0 + cand.s_eta[m].len() as f64 / horizon;
        lp.add_row(coeffs, Sense::Ge, rhs);
    }
    for phi in [true, false] {
        for k in 0..relays {
            let mut coeffs = vec![0.0; n_vars];
            for m in 0..pairs {
                coeffs[inst_var(phi, m, k)] = 1.0;
            }
            lp.add_row(coeffs, Sense::Eq, 1.0);
        }
    }
    Ok(Fp6Instance {
        lp,
        pairs,
        relays,
        trivially_infeasible: cand.has_empty_set(),
    })
}

/// Multi-pair feasibility probe: the interval LP must be feasible for every
/// EH interval. Returns the per-interval witnesses when it is.
pub fn interval_witnesses(
    cand: &CandidateSets,
    trace: &EhTrace,
    scn: &Scenario,
) -> Result<Option<Vec<IntervalWitness>>> {
    let mut witnesses: Vec<IntervalWitness> = Vec::with_capacity(trace.intervals());
    for j in 1..=trace.intervals() {
        let inst = build_fp6(cand, trace, j, scn)?;
        // Prefer carrying the previous interval's shares forward when they
        // still satisfy this interval's rows: constant shares keep the
        // derived per-interval child rates nonnegative, which the scheduler
        // needs when it replays the split.
        if let Some(prev) = witnesses.last() {
            if !inst.trivially_infeasible {
                let mut x = vec![0.0; 2 * inst.pairs * inst.relays];
                for m in 0..inst.pairs {
                    for k in 0..inst.relays {
                        x[inst.phi_var(m, k)] = prev.phi[m][k];
                        x[inst.theta_var(m, k)] = prev.theta[m][k];
                    }
                }
                if inst.lp.satisfied_by(&x) {
                    witnesses.push(prev.clone());
                    continue;
                }
            }
        }
        match inst.feasible()? {
            Some(w) => witnesses.push(w),
            None => return Ok(None),
        }
    }
    Ok(Some(witnesses))
}

/// Horizon-consistent share witnesses: one battery split `phi` for the whole
/// run plus per-interval harvest shares, solved as a single LP containing all
/// interval margin rows, the share equalities, and coupling rows
/// `S_j*theta_j - S_{j-1}*theta_{j-1} >= 0` that keep every derived
/// per-interval child rate nonnegative. Such a witness is directly
/// realizable by the constructive scheduler, unlike independently solved
/// per-interval witnesses whose shares may drift between intervals.
pub fn consistent_witnesses(
    cand: &CandidateSets,
    trace: &EhTrace,
    scn: &Scenario,
) -> Result<Option<Vec<IntervalWitness>>> {
    let (pairs, relays) = (cand.pairs(), cand.relays());
    if cand.has_empty_set() {
        return Ok(None);
    }
    let intervals = trace.intervals();
    let phi_var = |m: usize, k: usize| m * relays + k;
    let theta_var =
        |m: usize, k: usize, j: usize| pairs * relays + ((j - 1) * pairs + m) * relays + k;
    let n_vars = pairs * relays * (1 + intervals);
    let mut lp = LpProblem::new(n_vars);
    for v in 0..n_vars {
        lp.set_bounds(v, 0.0, 1.0);
    }
    for j in 1..=intervals {
        let horizon = (j * scn.blocks_per_interval) as f64;
        for m in 0..pairs {
            let mut coeffs = vec![0.0; n_vars];
            for &k in &cand.s_eta[m] {
                let p = cand.p_hat[m][k];
                coeffs[theta_var(m, k, j)] = 2.0 * cumulative_avg_rate(trace, k, j)? / p;
                coeffs[phi_var(m, k)] =
                    2.0 * trace.e_init[k] / (scn.block_secs * horizon * p);
            }
            let rhs = 1.0 + cand.s_eta[m].len() as f64 / horizon;
            lp.add_row(coeffs, Sense::Ge, rhs);
        }
    }
    for k in 0..relays {
        let mut coeffs = vec![0.0; n_vars];
        for m in 0..pairs {
            coeffs[phi_var(m, k)] = 1.0;
        }
        lp.add_row(coeffs, Sense::Eq, 1.0);
        for j in 1..=intervals {
            let mut coeffs = vec![0.0; n_vars];
            for m in 0..pairs {
                coeffs[theta_var(m, k, j)] = 1.0;
            }
            lp.add_row(coeffs, Sense::Eq, 1.0);
        }
    }
    for j in 2..=intervals {
        for k in 0..relays {
            let s_cur: f64 = trace.psi[k][..j].iter().sum();
            let s_prev: f64 = trace.psi[k][..j - 1].iter().sum();
            for m in 0..pairs {
                let mut coeffs = vec![0.0; n_vars];
                coeffs[theta_var(m, k, j)] = s_cur;
                coeffs[theta_var(m, k, j - 1)] = -s_prev;
                lp.add_row(coeffs, Sense::Ge, 0.0);
            }
        }
    }
    let Some(x) = lp.feasible()? else {
        return Ok(None);
    };
    let witnesses = (1..=intervals)
        .map(|j| {
            let mut phi = vec![vec![0.0; relays]; pairs];
            let mut theta = vec![vec![0.0; relays]; pairs];
            for m in 0..pairs {
                for k in 0..relays {
                    phi[m][k] = x[phi_var(m, k)].clamp(0.0, 1.0);
                    theta[m][k] = x[theta_var(m, k, j)].clamp(0.0, 1.0);
                }
            }
            IntervalWitness { phi, theta }
        })
        .collect();
    Ok(Some(witnesses))
}

/// Boolean form of [`interval_witnesses`].
pub fn check_all_intervals(cand: &CandidateSets, trace: &EhTrace, scn: &Scenario) -> Result<bool> {
    Ok(interval_witnesses(cand, trace, scn)?.is_some())
}
