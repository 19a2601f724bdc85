//! Access-link data rates.
//!
//! Cellular attachments (BS) use a Shannon rate over the uplink SINR. WLAN
//! attachments (AP, and vehicle-to-vehicle links) use the contention model:
//! a per-slot transmit probability derived from the backoff window, then a
//! saturation rate over `h` contending stations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("noise power must be positive, got {0}")]
    NonPositiveNoise(f64),
    #[error("channel bandwidth must be positive, got {0}")]
    NonPositiveBandwidth(f64),
    #[error("negative power or gain in channel description")]
    NegativePowerOrGain,
    #[error("collision probability {0} outside [0, 0.5)")]
    CollisionProbOutOfDomain(f64),
    #[error("minimum contention window must be >= 1, got {0}")]
    ContentionWindow(u32),
    #[error("contender count must be >= 1")]
    NoContenders,
    #[error("payload must be positive, got {0}")]
    NonPositivePayload(f64),
    #[error("busy times must be non-negative")]
    NegativeBusyTime,
    #[error("saturated channel: transmit probability 1 with {0} contenders")]
    Saturated(u32),
    #[error("literal rate formula is not positive (argument of log2 is {0})")]
    LiteralRateDomain(f64),
}

/// One interfering uplink transmitter seen by the base station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interferer {
    pub tx_power: f64,
    pub gain: f64,
}

/// Cellular uplink between the vehicle and a base-station node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsChannel {
    /// Channel bandwidth in Hz.
    pub bandwidth_hz: f64,
    /// Vehicle transmit power in W.
    pub tx_power: f64,
    pub gain: f64,
    /// Background noise power in W.
    pub noise_power: f64,
    #[serde(default)]
    pub interferers: Vec<Interferer>,
}

impl BsChannel {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.noise_power > 0.0) {
            return Err(ChannelError::NonPositiveNoise(self.noise_power));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(ChannelError::NonPositiveBandwidth(self.bandwidth_hz));
        }
        let negative = self.tx_power < 0.0
            || self.gain < 0.0
            || self
                .interferers
                .iter()
                .any(|u| u.tx_power < 0.0 || u.gain < 0.0);
        if negative {
            return Err(ChannelError::NegativePowerOrGain);
        }
        Ok(())
    }

    fn interference(&self) -> f64 {
        self.interferers.iter().map(|u| u.tx_power * u.gain).sum()
    }
}

/// WLAN contention parameters for an AP or vehicle-to-vehicle attachment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApChannel {
    /// Minimum contention window, in slots.
    pub w_min: u32,
    /// Maximum backoff stage.
    pub max_backoff: u32,
    pub collision_prob: f64,
    /// Mean channel busy time for a successful transmission, s.
    pub busy_success: f64,
    /// Mean channel busy time on collision, s. Carried but not used by the
    /// rate formula.
    pub busy_collision: f64,
    /// Mean payload per packet, bits.
    pub payload: f64,
    /// Stations contending at the same time.
    pub contenders: u32,
}

impl ApChannel {
    pub fn validate(&self) -> Result<(), ChannelError> {
        check_collision_prob(self.collision_prob)?;
        if self.w_min < 1 {
            return Err(ChannelError::ContentionWindow(self.w_min));
        }
        if self.contenders < 1 {
            return Err(ChannelError::NoContenders);
        }
        if !(self.payload > 0.0) {
            return Err(ChannelError::NonPositivePayload(self.payload));
        }
        if !(self.busy_success >= 0.0) || !(self.busy_collision >= 0.0) {
            return Err(ChannelError::NegativeBusyTime);
        }
        Ok(())
    }
}

fn check_collision_prob(p_c: f64) -> Result<(), ChannelError> {
    if !(0.0..0.5).contains(&p_c) {
        return Err(ChannelError::CollisionProbOutOfDomain(p_c));
    }
    Ok(())
}

/// Shannon uplink rate `w * log2(1 + q_v g_v / (noise + sum_u q_u g_u))` in bits/s.
pub fn bs_uplink_rate(ch: &BsChannel) -> Result<f64, ChannelError> {
    ch.validate()?;
    let sinr = ch.tx_power * ch.gain / (ch.noise_power + ch.interference());
    Ok(ch.bandwidth_hz * (1.0 + sinr).log2())
}

/// The rate formula with `1 +` placed in the numerator of the log argument,
/// i.e. `w * log2((1 + q_v g_v) / (noise + interference))`. Kept for oracle
/// comparison; it goes negative at low signal power.
pub fn bs_uplink_rate_literal(ch: &BsChannel) -> Result<f64, ChannelError> {
    ch.validate()?;
    let arg = (1.0 + ch.tx_power * ch.gain) / (ch.noise_power + ch.interference());
    if !(arg > 0.0) {
        return Err(ChannelError::LiteralRateDomain(arg));
    }
    Ok(ch.bandwidth_hz * arg.log2())
}

/// Per-slot transmit probability of a backlogged station under binary
/// exponential backoff.
pub fn ap_transmit_prob(w_min: u32, max_backoff: u32, p_c: f64) -> Result<f64, ChannelError> {
    check_collision_prob(p_c)?;
    if w_min < 1 {
        return Err(ChannelError::ContentionWindow(w_min));
    }
    let w = f64::from(w_min);
    let a = 1.0 - 2.0 * p_c;
    let tail = 1.0 - (2.0 * p_c).powi(max_backoff as i32);
    Ok(2.0 * a / (a * (w + 1.0) + p_c * w * tail))
}

/// Saturation data rate of a WLAN attachment shared by `h` contenders, bits/s.
pub fn ap_rate(ch: &ApChannel) -> Result<f64, ChannelError> {
    ch.validate()?;
    let p_t = ap_transmit_prob(ch.w_min, ch.max_backoff, ch.collision_prob)?;
    ap_rate_with(p_t, ch)
}

/// Rate formula evaluated at a given transmit probability.
pub fn ap_rate_with(p_t: f64, ch: &ApChannel) -> Result<f64, ChannelError> {
    let h = ch.contenders;
    if p_t >= 1.0 && h > 1 {
        return Err(ChannelError::Saturated(h));
    }
    let hf = f64::from(h);
    let idle = 1.0 - p_t;
    let bracket = idle.powi(1 - h as i32) - (idle - hf * p_t);
    let denom = idle * (1.0 + ch.busy_success) + bracket * p_t;
    Ok(hf * p_t * ch.payload / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bs(signal: f64, interferers: &[f64]) -> BsChannel {
        BsChannel {
            bandwidth_hz: 1.0,
            tx_power: signal,
            gain: 1.0,
            noise_power: 1.0,
            interferers: interferers
                .iter()
                .map(|&g| Interferer { tx_power: 1.0, gain: g })
                .collect(),
        }
    }

    fn ap(h: u32, payload: f64, tau_s: f64) -> ApChannel {
        ApChannel {
            w_min: 31,
            max_backoff: 5,
            collision_prob: 0.1,
            busy_success: tau_s,
            busy_collision: 0.0,
            payload,
            contenders: h,
        }
    }

    #[test]
    fn unit_snr_gives_one_bit() {
        assert!((bs_uplink_rate(&bs(1.0, &[])).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn one_unit_interferer() {
        let r = bs_uplink_rate(&bs(1.0, &[1.0])).unwrap();
        assert!((r - 1.5f64.log2()).abs() < 1e-15);
        assert!((r - 0.58496).abs() < 1e-5);
    }

    #[test]
    fn zero_signal_zero_rate() {
        assert_eq!(bs_uplink_rate(&bs(0.0, &[3.0])).unwrap(), 0.0);
    }

    #[test]
    fn noise_must_be_positive() {
        let mut ch = bs(1.0, &[]);
        ch.noise_power = 0.0;
        assert_eq!(bs_uplink_rate(&ch), Err(ChannelError::NonPositiveNoise(0.0)));
    }

    #[test]
    fn literal_form_differs_and_can_fail() {
        let mut ch = bs(1.0, &[]);
        // (1 + 1) / 1 = 2 in both readings when noise is 1 and there is no interference.
        assert_eq!(bs_uplink_rate_literal(&ch).unwrap(), 1.0);
        ch.noise_power = 4.0;
        assert!(bs_uplink_rate_literal(&ch).unwrap() < 0.0);
        assert!(bs_uplink_rate(&ch).unwrap() > 0.0);
    }

    #[test]
    fn transmit_prob_examples() {
        assert_eq!(ap_transmit_prob(31, 5, 0.0).unwrap(), 0.0625);
        assert_eq!(ap_transmit_prob(1, 0, 0.0).unwrap(), 1.0);
        let p = ap_transmit_prob(3, 1, 0.25).unwrap();
        assert!((p - 1.0 / 2.375).abs() < 1e-15);
    }

    #[test]
    fn transmit_prob_domain() {
        assert!(matches!(
            ap_transmit_prob(31, 5, 0.5),
            Err(ChannelError::CollisionProbOutOfDomain(_))
        ));
        assert!(ap_transmit_prob(0, 5, 0.1).is_err());
    }

    #[test]
    fn single_contender_rate() {
        let mut ch = ap(1, 1.0, 1.0);
        let r = ap_rate_with(0.5, &ch).unwrap();
        assert!((r - 1.0 / 3.0).abs() < 1e-15);
        ch.payload = 2.0;
        assert!((ap_rate_with(0.5, &ch).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn vanishing_transmit_prob() {
        let ch = ap(1, 1.0, 1.0);
        assert!(ap_rate_with(1e-9, &ch).unwrap() < 1e-8);
    }

    #[test]
    fn saturated_channel() {
        let ch = ap(3, 1.0, 0.0);
        assert_eq!(ap_rate_with(1.0, &ch), Err(ChannelError::Saturated(3)));
        // A lone station at p_t = 1 is fine.
        assert!(ap_rate_with(1.0, &ap(1, 1.0, 0.0)).unwrap() > 0.0);
    }

    #[test]
    fn busy_collision_is_unused() {
        let mut ch = ap(4, 1e6, 0.01);
        let before = ap_rate(&ch).unwrap();
        ch.busy_collision = 7.0;
        assert_eq!(ap_rate(&ch).unwrap(), before);
    }

    proptest! {
        #[test]
        fn closed_form_at_zero_collisions(w in 1u32..1024, m in 0u32..10) {
            let p = ap_transmit_prob(w, m, 0.0).unwrap();
            prop_assert!((p - 2.0 / (f64::from(w) + 1.0)).abs() <= 1e-12);
        }

        #[test]
        fn transmit_prob_in_unit_interval(w in 1u32..1024, m in 0u32..10, pc in 0.0f64..0.4999) {
            let p = ap_transmit_prob(w, m, pc).unwrap();
            prop_assert!(p > 0.0 && p <= 1.0);
        }

        #[test]
        fn bs_rate_monotone(sig in 0.0f64..10.0, i1 in 0.0f64..5.0, extra in 0.0f64..5.0) {
            let base = bs_uplink_rate(&bs(sig, &[i1])).unwrap();
            prop_assert!(bs_uplink_rate(&bs(sig, &[i1 + extra])).unwrap() <= base);
            prop_assert!(bs_uplink_rate(&bs(sig + extra, &[i1])).unwrap() >= base);
            prop_assert!(base >= 0.0);
        }

        #[test]
        fn ap_rate_positive_and_linear(
            h in 1u32..30,
            w in 1u32..256,
            m in 0u32..8,
            pc in 0.0f64..0.45,
            tau in 0.0f64..2.0,
            payload in 1.0f64..1e9,
        ) {
            let ch = ApChannel {
                w_min: w, max_backoff: m, collision_prob: pc, busy_success: tau,
                busy_collision: 0.0, payload, contenders: h,
            };
            match ap_rate(&ch) {
                Ok(r) => {
                    prop_assert!(r > 0.0 && r.is_finite());
                    let doubled = ap_rate(&ApChannel { payload: 2.0 * payload, ..ch.clone() }).unwrap();
                    prop_assert!((doubled - 2.0 * r).abs() <= 1e-12 * doubled);
                }
                Err(ChannelError::Saturated(_)) => prop_assert!(h > 1),
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
        }
    }
}
