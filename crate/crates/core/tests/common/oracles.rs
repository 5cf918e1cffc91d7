//! Independent reference computations for the congestion controllers.
//! Nothing here calls into the controller's own formulas.

use satsplit::congestion::{Algorithm, CcTuning, CongestionState};
use satsplit::time::SimTime;

pub const MSS: u64 = 1200;
pub const TOL: f64 = 1e-9;

pub fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

fn check(what: &str, got: f64, want: f64) -> Result<(), String> {
    let e = rel_err(got, want);
    if e <= TOL {
        Ok(())
    } else {
        Err(format!("{what}: got {got}, want {want} (rel err {e:e})"))
    }
}

/// `iw · 2^k · mss`, the window at the start of round `k` of unbounded
/// slow start.
pub fn doubling_table(iw: u64, rounds: u32) -> Vec<u64> {
    (0..rounds).map(|k| iw * MSS * (1u64 << k)).collect()
}

/// Drives a fresh controller through `rounds` loss-free rounds, acking one
/// segment at a time, and compares against the closed-form table.
pub fn slow_start_doubling(cca: Algorithm, iw: u32, rounds: u32) -> Result<(), String> {
    let mut cc = CongestionState::new(CcTuning::new(cca, iw), MSS as u32);
    let table = doubling_table(u64::from(iw), rounds);
    let mut now = SimTime::ZERO;
    for (k, &want) in table.iter().enumerate() {
        check(&format!("{cca} iw={iw} round {k}"), cc.cwnd() as f64, want as f64)?;
        let segments = cc.cwnd() / MSS;
        for _ in 0..segments {
            cc.on_packet_acked(MSS, now);
        }
        now += SimTime::from_millis(580);
    }
    Ok(())
}

/// Root of `C·K³ = w_max·(1−β)` by bisection.
pub fn cubic_k_bisect(w_max: f64) -> f64 {
    let target = w_max * (1.0 - 0.7);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while 0.4 * hi.powi(3) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if 0.4 * mid.powi(3) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// After a loss at `w_max` segments the window returns to exactly `w_max`
/// at `t = K`.
pub fn cubic_returns_to_w_max(w_max_segments: u64) -> Result<(), String> {
    let mut cc = CongestionState::new(CcTuning::new(Algorithm::Cubic, w_max_segments as u32), MSS as u32);
    let t0 = SimTime::from_secs(3);
    cc.on_congestion_event(t0, 0);
    let k = cubic_k_bisect(w_max_segments as f64);
    check("cubic K", cc.cubic_k_secs(), k)?;
    check("cubic w_max", cc.cubic_w_max(), w_max_segments as f64)?;
    cc.on_packet_acked(MSS, t0 + SimTime::from_secs_f64(k));
    check("cubic W(K)", cc.cwnd() as f64, (w_max_segments * MSS) as f64)
}

/// One congestion event from `cwnd` bytes scales the window and threshold
/// by 0.5 (NewReno) or 0.7 (Cubic), floored at two segments.
pub fn reduction_factor(cca: Algorithm, cwnd: u64) -> Result<(), String> {
    let iw = (cwnd / MSS) as u32;
    let mut cc = CongestionState::new(CcTuning::new(cca, iw), MSS as u32);
    let start = cc.cwnd();
    let (num, den) = match cca {
        Algorithm::NewReno => (1, 2),
        Algorithm::Cubic => (7, 10),
    };
    let want = (start * num / den).max(2 * MSS);
    let (c, s) = cc.on_congestion_event(SimTime::from_secs(1), 10);
    check(&format!("{cca} cwnd after loss from {start}"), c as f64, want as f64)?;
    check(&format!("{cca} ssthresh after loss from {start}"), s as f64, want as f64)
}

/// In avoidance NewReno grows by exactly one segment per window of acked
/// bytes, checked against a brute-force byte counter.
pub fn newreno_avoidance(segments: u64, acks: u64) -> Result<(), String> {
    let mut cc = CongestionState::new(CcTuning::new(Algorithm::NewReno, (2 * segments) as u32), MSS as u32);
    cc.on_congestion_event(SimTime::ZERO, 0);
    let (mut cwnd, mut counter) = (segments * MSS, 0u64);
    for _ in 0..acks {
        counter += MSS;
        if counter >= cwnd {
            counter -= cwnd;
            cwnd += MSS;
        }
        cc.on_packet_acked(MSS, SimTime::from_secs(1));
    }
    check("newreno avoidance", cc.cwnd() as f64, cwnd as f64)
}

/// A timeout records the multiplicative threshold and restarts from two
/// segments.
pub fn timeout_reset(cca: Algorithm, segments: u64) -> Result<(), String> {
    let mut cc = CongestionState::new(CcTuning::new(cca, segments as u32), MSS as u32);
    let beta = match cca {
        Algorithm::NewReno => 0.5,
        Algorithm::Cubic => 0.7,
    };
    let cwnd = cc.on_timeout(SimTime::from_secs(1), 0);
    check("timeout cwnd", cwnd as f64, (2 * MSS) as f64)?;
    check(
        "timeout ssthresh",
        cc.ssthresh() as f64,
        ((segments * MSS) as f64 * beta).max((2 * MSS) as f64),
    )
}

/// Every oracle at the reference points used in acceptance.
pub fn all() -> Result<(), String> {
    for cca in [Algorithm::NewReno, Algorithm::Cubic] {
        for iw in [1, 10, 100] {
            slow_start_doubling(cca, iw, 12)?;
        }
        for cwnd in [3 * MSS, 100 * MSS, 200 * MSS, 1000 * MSS] {
            reduction_factor(cca, cwnd)?;
        }
        timeout_reset(cca, 200)?;
    }
    for w in [10, 100, 1000] {
        cubic_returns_to_w_max(w)?;
    }
    newreno_avoidance(100, 100)?;
    newreno_avoidance(37, 1000)?;
    Ok(())
}
