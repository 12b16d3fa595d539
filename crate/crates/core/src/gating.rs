//! Bridge voltage synthesis from modulator bits and synchronous pulse
//! generation for the secondary-side rectifier.

use crate::error::{invalid, Error, Result};

/// A uniformly sampled waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub sample_rate: f64,
    pub samples: Vec<f64>,
}

impl Waveform {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 / self.sample_rate
    }
}

/// Bits of a pulse density modulator laid out on the `c1` switching clock.
#[derive(Debug, Clone)]
pub struct GateSchedule {
    /// One bit per half switching cycle.
    pub bits: Vec<bool>,
    pub switching_frequency: f64,
    pub dc_voltage: f64,
    /// Samples per half switching cycle.
    pub oversample: usize,
}

impl GateSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.bits.is_empty() {
            return Err(invalid("bits", "gate schedule has no bits"));
        }
        if self.oversample < 8 {
            return Err(invalid(
                "oversample",
                format!(
                    "need at least 8 samples per half cycle, got {}",
                    self.oversample
                ),
            ));
        }
        if !(self.switching_frequency > 0.0 && self.switching_frequency.is_finite()) {
            return Err(invalid(
                "switching_frequency",
                "must be positive and finite",
            ));
        }
        Ok(())
    }
}

/// Polarity of the `c1` clock during half cycle `n`: the leading leg
/// conducts on even half cycles, the lagging leg on odd ones.
#[inline]
pub fn clock_polarity(half_cycle: u64) -> f64 {
    if half_cycle % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Modulated wave `a - b` of the full bridge.
///
/// A set bit passes the half-cycle pulse with the clock polarity, a cleared
/// bit shorts the bridge for that half cycle. The clock keeps running while
/// pulses are skipped.
pub fn synthesize_bridge_wave(schedule: &GateSchedule) -> Result<Waveform> {
    schedule.validate()?;
    let mut samples = Vec::with_capacity(schedule.bits.len() * schedule.oversample);
    for (n, bit) in schedule.bits.iter().enumerate() {
        let level = if *bit {
            schedule.dc_voltage * clock_polarity(n as u64)
        } else {
            0.0
        };
        samples.extend(std::iter::repeat(level).take(schedule.oversample));
    }
    Ok(Waveform {
        sample_rate: 2.0 * schedule.switching_frequency * schedule.oversample as f64,
        samples,
    })
}

/// Per-half-cycle amplitude `|a - b|` of a bit sequence, in volts.
pub fn amplitude_sequence(bits: &[bool], dc_voltage: f64) -> Vec<f64> {
    bits.iter()
        .map(|b| if *b { dc_voltage } else { 0.0 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncPulseConfig {
    /// Hold-off after each transition, as a fraction of the switching period.
    pub blanking_fraction: f64,
    /// Pulse level before the first detected edge, `+1` or `-1`.
    pub initial_polarity: i8,
    pub switching_frequency: f64,
}

impl SyncPulseConfig {
    pub const DEFAULT_BLANKING: f64 = 0.25;

    pub fn new(switching_frequency: f64) -> Self {
        Self {
            blanking_fraction: Self::DEFAULT_BLANKING,
            initial_polarity: 1,
            switching_frequency,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.blanking_fraction) {
            return Err(invalid(
                "blanking_fraction",
                format!("must lie in [0, 0.5), got {}", self.blanking_fraction),
            ));
        }
        if self.initial_polarity != 1 && self.initial_polarity != -1 {
            return Err(invalid("initial_polarity", "must be +1 or -1"));
        }
        if !(self.switching_frequency > 0.0 && self.switching_frequency.is_finite()) {
            return Err(invalid(
                "switching_frequency",
                "must be positive and finite",
            ));
        }
        Ok(())
    }

    pub fn blanking_time(&self) -> f64 {
        self.blanking_fraction / self.switching_frequency
    }
}

/// Streaming zero-crossing comparator with a blanking window.
///
/// Each pushed current sample may move the pulse to the sign of the current.
/// Crossing instants are located by linear interpolation; a crossing that
/// falls within the blanking time after the previous transition is ignored.
#[derive(Debug, Clone)]
pub struct SyncPulseGenerator {
    dt: f64,
    blanking: f64,
    polarity: i8,
    /// Last nonzero sample and its index.
    last_nonzero: Option<(usize, f64)>,
    index: usize,
    last_transition: Option<f64>,
    transitions: Vec<f64>,
    locked: bool,
}

impl SyncPulseGenerator {
    pub fn new(cfg: &SyncPulseConfig, sample_rate: f64) -> Result<Self> {
        cfg.validate()?;
        if !(sample_rate >= 16.0 * cfg.switching_frequency) {
            return Err(invalid(
                "sample_rate",
                format!(
                    "need at least 16 samples per switching period ({} Hz for f_s = {} Hz), got {sample_rate}",
                    16.0 * cfg.switching_frequency,
                    cfg.switching_frequency
                ),
            ));
        }
        Ok(Self {
            dt: 1.0 / sample_rate,
            blanking: cfg.blanking_time(),
            polarity: cfg.initial_polarity,
            last_nonzero: None,
            index: 0,
            last_transition: None,
            transitions: Vec::new(),
            locked: false,
        })
    }

    pub fn polarity(&self) -> i8 {
        self.polarity
    }

    /// True once at least one crossing has been accepted.
    pub fn locked(&self) -> bool {
        self.locked
    }

    /// Accepted transition instants in seconds since the first sample.
    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    /// Feeds one current sample and returns the pulse level valid from this
    /// sample on. Returns `true` in the second slot when the level changed.
    pub fn push(&mut self, current: f64) -> (i8, bool) {
        let n = self.index;
        self.index += 1;
        if current == 0.0 || !current.is_finite() {
            return (self.polarity, false);
        }
        let sign: i8 = if current > 0.0 { 1 } else { -1 };
        let prev = self.last_nonzero.replace((n, current));
        let Some((m, prev_val)) = prev else {
            return (self.polarity, false);
        };
        if (prev_val > 0.0) == (current > 0.0) {
            return (self.polarity, false);
        }
        let frac = prev_val / (prev_val - current);
        let t_cross = (m as f64 + frac * (n - m) as f64) * self.dt;
        if let Some(t_last) = self.last_transition {
            if t_cross - t_last < self.blanking {
                return (self.polarity, false);
            }
        }
        self.locked = true;
        if sign == self.polarity {
            return (self.polarity, false);
        }
        self.polarity = sign;
        self.last_transition = Some(t_cross);
        self.transitions.push(t_cross);
        (self.polarity, true)
    }
}

/// Result of [`sync_pulses_from_current`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyncPulses {
    /// Pulse level `c2` per input sample.
    pub pulses: Vec<i8>,
    /// Transition instants in seconds.
    pub transitions: Vec<f64>,
    /// Set when the current never left zero, so `c2` never moved.
    pub degenerate: bool,
}

/// Offline version of the synchronous pulse generator.
pub fn sync_pulses_from_current(
    current: &[f64],
    sample_rate: f64,
    cfg: &SyncPulseConfig,
) -> Result<SyncPulses> {
    let mut gen = SyncPulseGenerator::new(cfg, sample_rate)?;
    let pulses: Vec<i8> = current.iter().map(|x| gen.push(*x).0).collect();
    let degenerate = current.iter().all(|x| *x == 0.0);
    Ok(SyncPulses {
        pulses,
        transitions: gen.transitions.clone(),
        degenerate,
    })
}

/// Mean of `|wave|` over whole half cycles divided by `dc_voltage`.
pub fn density_of_wave(wave: &Waveform, oversample: usize, dc_voltage: f64) -> Result<f64> {
    let half_cycles = wave.len() / oversample;
    if half_cycles == 0 {
        return Err(Error::TooShort {
            needed: oversample,
            got: wave.len(),
        });
    }
    let used = &wave.samples[..half_cycles * oversample];
    Ok(used.iter().map(|x| x.abs()).sum::<f64>() / (used.len() as f64 * dc_voltage))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn schedule(bits: Vec<bool>, oversample: usize) -> GateSchedule {
        GateSchedule {
            bits,
            switching_frequency: 300e3,
            dc_voltage: 1.0,
            oversample,
        }
    }

    #[test]
    fn two_pulses_alternate_polarity() {
        let wave = synthesize_bridge_wave(&schedule(vec![true, true], 8)).unwrap();
        let mut want = vec![1.0; 8];
        want.extend(vec![-1.0; 8]);
        assert_eq!(wave.samples, want);
    }

    #[test]
    fn skipped_pulses_keep_the_clock_running() {
        let wave = synthesize_bridge_wave(&schedule(vec![true, false, false, true], 8)).unwrap();
        assert!(wave.samples[8..24].iter().all(|x| *x == 0.0));
        // half cycle 3 is odd, so it is negative even after the skips
        assert!(wave.samples[24..].iter().all(|x| *x == -1.0));
    }

    #[test]
    fn all_zero_bits_give_silence() {
        let wave = synthesize_bridge_wave(&schedule(vec![false; 20], 8)).unwrap();
        assert!(wave.samples.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn rejects_small_oversample_and_empty_bits() {
        assert!(synthesize_bridge_wave(&schedule(vec![true], 4)).is_err());
        assert!(synthesize_bridge_wave(&schedule(vec![], 8)).is_err());
    }

    #[test]
    fn full_density_fundamental_is_four_over_pi() {
        let periods = 64;
        let wave = synthesize_bridge_wave(&schedule(vec![true; 2 * periods], 16)).unwrap();
        let f = 300e3;
        let (mut re, mut im) = (0.0, 0.0);
        for (i, x) in wave.samples.iter().enumerate() {
            let ph = 2.0 * PI * f * wave.time(i);
            re += x * ph.cos();
            im += x * ph.sin();
        }
        let mag = 2.0 * (re * re + im * im).sqrt() / wave.len() as f64;
        assert!((mag - 4.0 / PI).abs() < 0.01 * 4.0 / PI, "{mag}");
    }

    #[test]
    fn density_matches_bits() {
        let bits: Vec<bool> = (0..200).map(|i| i % 7 != 3).collect();
        let wave = synthesize_bridge_wave(&schedule(bits.clone(), 8)).unwrap();
        let d = bits.iter().filter(|b| **b).count() as f64 / bits.len() as f64;
        assert_eq!(density_of_wave(&wave, 8, 1.0).unwrap(), d);
    }

    fn sine(n: usize, fs_sample: f64, f: f64) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * PI * f * i as f64 / fs_sample + 0.3).sin())
            .collect()
    }

    #[test]
    fn sinusoid_gives_aligned_square_wave() {
        let f = 300e3;
        let rate = 64.0 * f;
        let x = sine(64 * 20, rate, f);
        let out = sync_pulses_from_current(&x, rate, &SyncPulseConfig::new(f)).unwrap();
        assert!(!out.degenerate);
        // after the first sample the pulse follows the sign, apart from the
        // one-sample detection latency at each crossing
        let mismatches = x
            .iter()
            .zip(&out.pulses)
            .filter(|(x, p)| (**x > 0.0) != (**p > 0))
            .count();
        assert!(mismatches <= 40, "{mismatches}");
        assert_eq!(out.transitions.len(), 40);
        for w in out.transitions.windows(2) {
            assert!((w[1] - w[0] - 0.5 / f).abs() < 1e-3 / f);
        }
    }

    #[test]
    fn glitch_inside_blanking_window_is_ignored() {
        let f = 300e3;
        let rate = 256.0 * f;
        let mut x = sine(256 * 10, rate, f);
        let cfg = SyncPulseConfig::new(f);
        let clean = sync_pulses_from_current(&x, rate, &cfg).unwrap();
        // narrow negative glitch 10% of a period after the third transition
        let t0 = clean.transitions[2];
        let idx = ((t0 + 0.1 / f) * rate) as usize;
        let level = x[idx].signum();
        for v in &mut x[idx..idx + 3] {
            *v = -level * 0.5;
        }
        let glitched = sync_pulses_from_current(&x, rate, &cfg).unwrap();
        assert_eq!(glitched.transitions, clean.transitions);
        assert_eq!(glitched.pulses, clean.pulses);
    }

    #[test]
    fn glitch_without_blanking_toggles() {
        let f = 300e3;
        let rate = 256.0 * f;
        let mut x = sine(256 * 10, rate, f);
        let cfg = SyncPulseConfig {
            blanking_fraction: 0.0,
            ..SyncPulseConfig::new(f)
        };
        let clean = sync_pulses_from_current(&x, rate, &cfg).unwrap();
        let idx = ((clean.transitions[2] + 0.1 / f) * rate) as usize;
        let level = x[idx].signum();
        for v in &mut x[idx..idx + 3] {
            *v = -level * 0.5;
        }
        let glitched = sync_pulses_from_current(&x, rate, &cfg).unwrap();
        assert_eq!(glitched.transitions.len(), clean.transitions.len() + 2);
    }

    #[test]
    fn zero_current_is_degenerate() {
        let cfg = SyncPulseConfig {
            initial_polarity: -1,
            ..SyncPulseConfig::new(300e3)
        };
        let out = sync_pulses_from_current(&[0.0; 100], 64.0 * 300e3, &cfg).unwrap();
        assert!(out.degenerate);
        assert!(out.pulses.iter().all(|p| *p == -1));
        assert!(out.transitions.is_empty());
    }

    #[test]
    fn rejects_low_sample_rate_and_long_blanking() {
        let cfg = SyncPulseConfig::new(300e3);
        assert!(sync_pulses_from_current(&[1.0], 8.0 * 300e3, &cfg).is_err());
        let bad = SyncPulseConfig {
            blanking_fraction: 0.5,
            ..cfg
        };
        assert!(sync_pulses_from_current(&[1.0], 64.0 * 300e3, &bad).is_err());
    }
}
