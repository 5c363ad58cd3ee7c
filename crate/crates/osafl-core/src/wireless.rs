//! Wireless and device cost model: log-distance link gains with log-normal
//! shadowing, Shannon-style uplink rate, and the four computation/upload
//! time and energy formulas that feed the per-client resource optimizer.
//!
//! One "local step-unit" processes `n` mini-batches of `n̄` samples of
//! `s_u` bits at `c_u` CPU cycles per bit; an upload ships the full model
//! of `N` parameters at `FPP + 1` bits each over a dedicated band.

use core::fmt;

use rand_core::RngCore;

use crate::math;
use crate::rng;

/// Errors from the cost formulas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WirelessError {
    /// Computation formulas need a positive CPU frequency.
    NonPositiveFrequency,
    /// Upload formulas need a positive rate, hence positive power.
    ZeroRate,
    BadCaps(&'static str),
}

impl fmt::Display for WirelessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WirelessError::NonPositiveFrequency => write!(f, "non-positive CPU frequency"),
            WirelessError::ZeroRate => write!(f, "zero rate"),
            WirelessError::BadCaps(why) => write!(f, "bad device caps: {why}"),
        }
    }
}

impl core::error::Error for WirelessError {}

/// Static per-device compute/communication capabilities and budgets.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceCaps {
    /// CPU cycles needed per bit of training data.
    pub cycles_per_bit: f64,
    /// Size of one training sample in bits.
    pub sample_bits: f64,
    /// Effective switched capacitance of the chip.
    pub capacitance: f64,
    /// Maximum CPU frequency in Hz.
    pub max_freq_hz: f64,
    /// Maximum transmit power in W.
    pub max_power_w: f64,
    /// Per-round energy budget in J.
    pub energy_budget_j: f64,
    /// Per-round deadline in s.
    pub deadline_s: f64,
    /// Mini-batches per local step-unit.
    pub batches: u32,
    /// Samples per mini-batch.
    pub batch_size: u32,
    /// Trainable parameters in the model.
    pub model_params: usize,
    /// Bits per parameter on the air interface (one extra bit is added
    /// per parameter for the payload).
    pub fpp_bits: u32,
}

impl DeviceCaps {
    pub fn validate(&self) -> Result<(), WirelessError> {
        let positives = [
            self.cycles_per_bit,
            self.sample_bits,
            self.capacitance,
            self.max_freq_hz,
            self.max_power_w,
            self.energy_budget_j,
            self.deadline_s,
        ];
        if positives.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(WirelessError::BadCaps("all budgets and rates must be positive"));
        }
        if self.batches == 0 || self.batch_size == 0 || self.model_params == 0 {
            return Err(WirelessError::BadCaps("batch shape and model size must be positive"));
        }
        if ![16, 32, 64].contains(&self.fpp_bits) {
            return Err(WirelessError::BadCaps("precision must be 16, 32, or 64 bits"));
        }
        Ok(())
    }

    /// Upload payload in bits: every parameter plus one sign/control bit.
    pub fn payload_bits(&self) -> f64 {
        self.model_params as f64 * (self.fpp_bits as f64 + 1.0)
    }

    /// CPU cycles of one local step-unit: `n · n̄ · c_u · s_u`.
    pub fn cycles_per_unit(&self) -> f64 {
        self.batches as f64 * self.batch_size as f64 * self.cycles_per_bit * self.sample_bits
    }
}

/// Sampled channel realization plus the static band parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkState {
    /// Large-scale path gain (linear).
    pub path_gain: f64,
    /// Log-normal shadowing gain (linear).
    pub shadowing: f64,
    /// Dedicated bandwidth in Hz.
    pub bandwidth_hz: f64,
    /// Noise power spectral density in W/Hz.
    pub noise_psd: f64,
}

impl LinkState {
    /// Combined channel gain applied to the transmit power.
    pub fn gain(&self) -> f64 {
        self.path_gain * self.shadowing
    }
}

/// Log-distance path-loss model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    /// Reference distance of the model in meters.
    pub ref_distance_m: f64,
    /// Path loss at the reference distance in dB.
    pub ref_loss_db: f64,
    /// Path-loss exponent.
    pub path_exponent: f64,
    /// Shadowing standard deviation in dB; 0 disables shadowing.
    pub shadow_sigma_db: f64,
    pub bandwidth_hz: f64,
    pub noise_psd: f64,
}

/// Free-space path loss at distance `d` meters for carrier `freq_hz`:
/// `20·log10(4π·d·f/c)`.
pub fn free_space_loss_db(distance_m: f64, freq_hz: f64) -> f64 {
    20.0 * math::log10(4.0 * (math::TAU / 2.0) * distance_m * freq_hz / 299_792_458.0)
}

impl Default for LinkConfig {
    /// 2.4 GHz band: free-space loss at 1 m as the reference, exponent 3,
    /// 8 dB shadowing, three 180 kHz resource blocks, thermal noise at
    /// −174 dBm/Hz.
    fn default() -> Self {
        Self {
            ref_distance_m: 1.0,
            ref_loss_db: free_space_loss_db(1.0, 2.4e9),
            path_exponent: 3.0,
            shadow_sigma_db: 8.0,
            bandwidth_hz: 3.0 * 180e3,
            noise_psd: math::powf(10.0, -20.4),
        }
    }
}

/// Achievable uplink rate in bits/s at transmit power `p` W:
/// `ω·log2(1 + Ξ·Γ·p/(ω·ξ²))`.
pub fn uplink_rate(link: &LinkState, p: f64) -> f64 {
    debug_assert!(p >= 0.0);
    let snr = link.gain() * p / (link.bandwidth_hz * link.noise_psd);
    link.bandwidth_hz * math::log2(1.0 + snr)
}

/// Local computation time for `kappa` step-units at CPU frequency
/// `freq_hz`: `n·n̄·c·s·κ / f̄`.
pub fn comp_time(caps: &DeviceCaps, kappa: u32, freq_hz: f64) -> Result<f64, WirelessError> {
    if freq_hz <= 0.0 {
        return Err(WirelessError::NonPositiveFrequency);
    }
    Ok(caps.cycles_per_unit() * kappa as f64 / freq_hz)
}

/// Local computation energy for `kappa` step-units:
/// `0.5·ν·n·n̄·c·s·f̄²·κ`.
pub fn comp_energy(caps: &DeviceCaps, kappa: u32, freq_hz: f64) -> Result<f64, WirelessError> {
    if freq_hz <= 0.0 {
        return Err(WirelessError::NonPositiveFrequency);
    }
    Ok(0.5 * caps.capacitance * caps.cycles_per_unit() * freq_hz * freq_hz * kappa as f64)
}

/// Model upload time: payload over the achievable rate.
pub fn up_time(caps: &DeviceCaps, link: &LinkState, p: f64) -> Result<f64, WirelessError> {
    if p <= 0.0 {
        return Err(WirelessError::ZeroRate);
    }
    let rate = uplink_rate(link, p);
    if rate <= 0.0 {
        return Err(WirelessError::ZeroRate);
    }
    Ok(caps.payload_bits() / rate)
}

/// Model upload energy: upload time times transmit power.
pub fn up_energy(caps: &DeviceCaps, link: &LinkState, p: f64) -> Result<f64, WirelessError> {
    Ok(up_time(caps, link, p)? * p)
}

/// Draw a channel realization at `distance_m` from the base station:
/// log-distance path loss plus one log-normal shadowing draw.
pub fn sample_link(distance_m: f64, rng: &mut impl RngCore, cfg: &LinkConfig) -> LinkState {
    debug_assert!(distance_m > 0.0);
    let loss_db = cfg.ref_loss_db
        + 10.0 * cfg.path_exponent * math::log10(distance_m / cfg.ref_distance_m);
    let shadow_db = cfg.shadow_sigma_db * rng::standard_normal(rng);
    LinkState {
        path_gain: math::powf(10.0, -loss_db / 10.0),
        shadowing: math::powf(10.0, shadow_db / 10.0),
        bandwidth_hz: cfg.bandwidth_hz,
        noise_psd: cfg.noise_psd,
    }
}
