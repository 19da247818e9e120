//! QoS utility: per-block successful transmission probability over Rayleigh
//! fading, for direct links and for a two-hop amplify-and-forward relay, plus
//! the scalar inversions used by the power solvers.
//!
//! The AF closed form uses the harmonic-mean SNR upper bound
//! `g1*g2/(g1+g2)`; with exponential per-hop SNRs of means `G1`, `G2` the
//! success probability is
//!
//! ```text
//! s = z * K1(z) * exp(-gamma*(1/G1 + 1/G2)),   z = 2*gamma/sqrt(G1*G2)
//! ```
//!
//! where `K1` is the modified Bessel function of the second kind, order 1.
//! The exact AF end-to-end SNR `g1*g2/(g1+g2+1)` is kept as a Monte Carlo
//! oracle; the closed form weakly overestimates it by construction. No
//! direct-path combining at the destination.

use rand::Rng;

use crate::model::Scenario;
use crate::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Modified Bessel function of the second kind, order 1.
///
/// Ascending series below x = 2, trapezoidal evaluation of the integral
/// representation `K1(x) = int_0^inf exp(-x cosh t) cosh t dt` above (the
/// integrand is even and analytic, so the trapezoid rule converges
/// exponentially). Relative error is below 1e-12 across the positive axis.
pub fn bessel_k1(x: f64) -> f64 {
    assert!(x > 0.0, "bessel_k1 requires x > 0");
    if x < 2.0 {
        // K1(x) = 1/x + ln(x/2) I1(x)
        //         - (x/4) sum_k [psi(k+1)+psi(k+2)] (x^2/4)^k / (k!(k+1)!)
        let half = x / 2.0;
        let q = half * half;
        let mut term = half;
        let mut i1 = term;
        let mut k = 0usize;
        loop {
            k += 1;
            term *= q / (k * (k + 1)) as f64;
            i1 += term;
            if term < 1e-18 * i1 {
                break;
            }
        }
        let mut psi_a = -EULER_GAMMA; // psi(1)
        let mut psi_b = 1.0 - EULER_GAMMA; // psi(2)
        let mut t = 1.0;
        let mut s = psi_a + psi_b;
        let mut k = 0usize;
        loop {
            k += 1;
            psi_a += 1.0 / k as f64;
            psi_b += 1.0 / (k + 1) as f64;
            t *= q / (k * (k + 1)) as f64;
            let d = (psi_a + psi_b) * t;
            s += d;
            if d.abs() < 1e-18 * s.abs() {
                break;
            }
        }
        1.0 / x + half.ln() * i1 - (x / 4.0) * s
    } else {
        // Step chosen so the quadrature error stays below ~1e-12 even for
        // large arguments where few nodes land before the underflow cutoff.
        let h = if x <= 150.0 { 0.05 } else { 0.02 };
        let mut s = 0.5 * (-x).exp();
        let mut k = 1usize;
        loop {
            let c = (k as f64 * h).cosh();
            let e = x * c;
            if e > 745.0 {
                break;
            }
            s += (-e).exp() * c;
            k += 1;
        }
        s * h
    }
}

/// Average received SNRs (linear) of the three links of one pair/relay
/// combination: `(transmit power * path gain) / (noise_psd * bandwidth)`.
#[derive(Debug, Clone, Copy)]
pub struct LinkStats {
    pub mean_snr_sr: f64,
    pub mean_snr_rd: f64,
    pub mean_snr_sd: f64,
}

impl LinkStats {
    pub fn new(p_src: f64, p_relay: f64, g_sr: f64, g_rd: f64, scn: &Scenario) -> Self {
        let n = scn.noise_power();
        LinkStats {
            mean_snr_sr: p_src * g_sr / n,
            mean_snr_rd: p_relay * g_rd / n,
            mean_snr_sd: 0.0,
        }
    }
}

/// Success probability of a direct Rayleigh link:
/// `exp(-gamma_th * N0 B / (p_src * gain))`. Zero gain yields zero.
pub fn direct_success(p_src: f64, gain: f64, scn: &Scenario) -> f64 {
    if gain <= 0.0 || p_src <= 0.0 {
        return 0.0;
    }
    (-scn.gamma_th * scn.noise_power() / (p_src * gain)).exp()
}

/// Source power meeting `direct_success == target` (closed-form inversion).
pub fn direct_power_required(target: f64, gain: f64, scn: &Scenario) -> f64 {
    scn.gamma_th * scn.noise_power() / (gain * (1.0 / target).ln())
}

/// Closed-form AF success probability from precomputed link statistics.
pub fn af_success_closed(stats: &LinkStats, scn: &Scenario) -> f64 {
    let (g1, g2) = (stats.mean_snr_sr, stats.mean_snr_rd);
    if g1 <= 0.0 || g2 <= 0.0 {
        return 0.0;
    }
    let z = 2.0 * scn.gamma_th / (g1 * g2).sqrt();
    let s = z * bessel_k1(z) * (-scn.gamma_th * (1.0 / g1 + 1.0 / g2)).exp();
    s.clamp(0.0, 1.0)
}

/// Closed-form AF success probability at the given powers and gains.
pub fn af_success(p_src: f64, p_relay: f64, g_sr: f64, g_rd: f64, scn: &Scenario) -> f64 {
    af_success_closed(&LinkStats::new(p_src, p_relay, g_sr, g_rd, scn), scn)
}

/// Monte Carlo estimate of the exact AF success probability: empirical
/// frequency of `g1*g2/(g1+g2+1) >= gamma_th` with exponential per-hop SNRs.
pub fn af_success_mc<R: Rng>(
    p_src: f64,
    p_relay: f64,
    g_sr: f64,
    g_rd: f64,
    scn: &Scenario,
    n_draws: usize,
    rng: &mut R,
) -> f64 {
    let stats = LinkStats::new(p_src, p_relay, g_sr, g_rd, scn);
    if stats.mean_snr_sr <= 0.0 || stats.mean_snr_rd <= 0.0 {
        return 0.0;
    }
    let mut hits = 0usize;
    for _ in 0..n_draws {
        let u1: f64 = rng.gen::<f64>();
        let u2: f64 = rng.gen::<f64>();
        let g1 = -stats.mean_snr_sr * (1.0 - u1).ln();
        let g2 = -stats.mean_snr_rd * (1.0 - u2).ln();
        if g1 * g2 / (g1 + g2 + 1.0) >= scn.gamma_th {
            hits += 1;
        }
    }
    hits as f64 / n_draws as f64
}

/// Bisection tolerance for relay-power inversion (absolute, watts).
pub const RELAY_POWER_TOL: f64 = 1e-9;

/// Smallest relay power reaching utility `target` at the given source power,
/// by monotone bisection on `[0, p_max]`.
///
/// Errors when the target is unreachable even at peak power (the relay is
/// outside the candidate set).
pub fn inverse_relay_power(
    p_src: f64,
    g_sr: f64,
    g_rd: f64,
    target: f64,
    scn: &Scenario,
) -> Result<f64> {
    if af_success(p_src, scn.p_max, g_sr, g_rd, scn) < target {
        return Err(Error::NotInCandidateSet);
    }
    let (mut lo, mut hi) = (0.0f64, scn.p_max);
    while hi - lo > RELAY_POWER_TOL {
        let mid = 0.5 * (lo + hi);
        if af_success(p_src, mid, g_sr, g_rd, scn) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Source power solving `U(p_src, p_relay) == target`, or `None` when even an
/// unbounded source power cannot reach the target (the relay-destination hop
/// caps the utility at `exp(-gamma/G2)`).
pub fn solve_source_power(
    p_relay: f64,
    g_sr: f64,
    g_rd: f64,
    target: f64,
    scn: &Scenario,
) -> Option<f64> {
    if p_relay <= 0.0 || g_rd <= 0.0 || g_sr <= 0.0 {
        return None;
    }
    let g2 = p_relay * g_rd / scn.noise_power();
    let cap = (-scn.gamma_th / g2).exp();
    if cap <= target {
        return None;
    }
    let mut hi = 1.0f64;
    let mut guard = 0;
    while af_success(hi, p_relay, g_sr, g_rd, scn) < target {
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return None;
        }
    }
    let mut lo = 0.0f64;
    while hi - lo > 1e-12 * hi.max(1e-6) {
        let mid = 0.5 * (lo + hi);
        if af_success(mid, p_relay, g_sr, g_rd, scn) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Bisection lower bound contribution of one (pair, relay) combination:
/// the source power at which the relay meets the QoS at peak power, or 0
/// when its relay-destination channel is too poor to ever reach it.
pub fn inverse_source_power_lower(g_sr: f64, g_rd: f64, scn: &Scenario) -> f64 {
    solve_source_power(scn.p_max, g_sr, g_rd, scn.u_th, scn).unwrap_or(0.0)
}

/// Bisection upper bound contribution of one (pair, relay, interval)
/// combination, in reciprocal form: `eta~` solving
/// `U(1/eta~, psi_kj) == u_th`, or 0 when unreachable.
pub fn inverse_source_power_upper(g_sr: f64, g_rd: f64, psi_kj: f64, scn: &Scenario) -> f64 {
    solve_source_power(psi_kj, g_sr, g_rd, scn.u_th, scn).map_or(0.0, |eta| 1.0 / eta)
}
