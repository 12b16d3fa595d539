//! Envelope, ripple and spectral measurements on simulated or modulated
//! signals.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{invalid, Error, Result};

/// Per switching cycle peak of `|trace|`.
pub fn envelope(trace: &[f64], fs_signal: f64, fs_switch: f64) -> Result<Vec<f64>> {
    let per_cycle = fs_signal / fs_switch;
    if !(per_cycle >= 64.0) {
        return Err(invalid(
            "fs_signal",
            format!("need at least 64 samples per switching cycle, got {per_cycle:.2}"),
        ));
    }
    let cycles = (trace.len() as f64 / per_cycle).floor() as usize;
    if cycles == 0 {
        return Err(Error::TooShort {
            needed: per_cycle.ceil() as usize,
            got: trace.len(),
        });
    }
    Ok((0..cycles)
        .map(|c| {
            let a = (c as f64 * per_cycle).round() as usize;
            let b = (((c + 1) as f64 * per_cycle).round() as usize).min(trace.len());
            trace[a..b].iter().fold(0.0_f64, |m, x| m.max(x.abs()))
        })
        .collect())
}

/// Steady-state envelope modulation depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RippleReport {
    pub ripple_percent: f64,
    pub env_max: f64,
    pub env_min: f64,
    pub env_mean: f64,
    /// Envelope cycle indices `[start, end)` the metrics cover.
    pub window: (usize, usize),
}

impl RippleReport {
    /// Window bounds in seconds for switching frequency `fs_switch`.
    pub fn window_seconds(&self, fs_switch: f64) -> (f64, f64) {
        (
            self.window.0 as f64 / fs_switch,
            self.window.1 as f64 / fs_switch,
        )
    }
}

pub const MIN_RIPPLE_CYCLES: usize = 500;

/// `100 (max - min) / (max + min)` over the envelope after `discard` cycles.
pub fn ripple(env: &[f64], discard: usize) -> Result<RippleReport> {
    let available = env.len().saturating_sub(discard);
    if available < MIN_RIPPLE_CYCLES {
        return Err(Error::TooShort {
            needed: discard + MIN_RIPPLE_CYCLES,
            got: env.len(),
        });
    }
    let window = &env[discard..];
    let (min, max, sum) = window
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY, 0.0), |(lo, hi, s), x| {
            (lo.min(*x), hi.max(*x), s + x)
        });
    if max + min == 0.0 {
        return Err(Error::Degenerate("envelope is identically zero".into()));
    }
    Ok(RippleReport {
        ripple_percent: 100.0 * (max - min) / (max + min),
        env_max: max,
        env_min: min,
        env_mean: sum / window.len() as f64,
        window: (discard, env.len()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Rectangular,
    /// Five-term flat-top, for line amplitude accuracy.
    FlatTop,
}

impl WindowKind {
    pub fn name(&self) -> &'static str {
        match self {
            WindowKind::Rectangular => "rectangular",
            WindowKind::FlatTop => "flat-top",
        }
    }

    /// Periodic window of length `n`.
    pub fn coefficients(&self, n: usize) -> Vec<f64> {
        match self {
            WindowKind::Rectangular => vec![1.0; n],
            WindowKind::FlatTop => {
                const A: [f64; 5] = [
                    0.215_578_95,
                    0.416_631_58,
                    0.277_263_158,
                    0.083_578_947,
                    0.006_947_368,
                ];
                (0..n)
                    .map(|i| {
                        let x = 2.0 * PI * i as f64 / n as f64;
                        A[0] - A[1] * x.cos() + A[2] * (2.0 * x).cos() - A[3] * (3.0 * x).cos()
                            + A[4] * (4.0 * x).cos()
                    })
                    .collect()
            }
        }
    }
}

/// Single-sided amplitude spectrum.
///
/// `magnitude[k]` is the peak amplitude of a sinusoid centered on bin `k`
/// (DC and Nyquist bins hold the plain component value).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freq: Vec<f64>,
    pub magnitude: Vec<f64>,
    /// Equivalent noise bandwidth of the window, Hz.
    pub resolution_bw: f64,
    pub window: WindowKind,
    /// Bin spacing, Hz.
    pub bin_width: f64,
    /// Number of samples transformed.
    pub len: usize,
    /// `sum(w) / N`, converts amplitude back to DFT power.
    coherent_gain: f64,
    /// Mean square of the windowed signal.
    windowed_mean_square: f64,
}

impl Spectrum {
    pub fn windowed_mean_square(&self) -> f64 {
        self.windowed_mean_square
    }

    /// Mean square of the windowed signal reconstructed from the magnitudes
    /// (Parseval); equals [`Spectrum::windowed_mean_square`] up to rounding.
    pub fn parseval_mean_square(&self) -> f64 {
        let last = self.magnitude.len() - 1;
        let has_nyquist = self.len % 2 == 0;
        let sum: f64 = self
            .magnitude
            .iter()
            .enumerate()
            .map(|(k, m)| {
                if k == 0 || (k == last && has_nyquist) {
                    m * m
                } else {
                    m * m / 2.0
                }
            })
            .sum();
        sum * self.coherent_gain * self.coherent_gain
    }

    pub fn nearest_bin(&self, freq: f64) -> Result<usize> {
        let max = *self.freq.last().unwrap_or(&0.0);
        if !(freq >= 0.0 && freq <= max) {
            return Err(Error::OutOfRange { freq, max });
        }
        Ok(((freq / self.bin_width).round() as usize).min(self.freq.len() - 1))
    }

    /// Largest magnitude within one bin of `freq`.
    pub fn line_magnitude(&self, freq: f64) -> Result<f64> {
        let k = self.nearest_bin(freq)?;
        let lo = k.saturating_sub(1);
        let hi = (k + 1).min(self.magnitude.len() - 1);
        Ok(self.magnitude[lo..=hi].iter().cloned().fold(0.0, f64::max))
    }

    /// Mean-square power in `[lo, hi]` Hz, from the bins whose centers fall
    /// inside the band.
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        self.freq
            .iter()
            .zip(&self.magnitude)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, m)| m * m / 2.0)
            .sum()
    }

    fn same_grid(&self, other: &Spectrum) -> bool {
        self.len == other.len
            && self.freq.len() == other.freq.len()
            && (self.bin_width - other.bin_width).abs() <= 1e-12 * self.bin_width.abs().max(1e-300)
    }
}

/// Windowed DFT amplitude spectrum of a uniformly sampled signal.
pub fn spectrum(signal: &[f64], sample_rate: f64, window: WindowKind) -> Result<Spectrum> {
    let n = signal.len();
    if n < 2 {
        return Err(Error::TooShort { needed: 2, got: n });
    }
    if !(sample_rate > 0.0 && sample_rate.is_finite()) {
        return Err(invalid("sample_rate", "must be positive and finite"));
    }
    let w = window.coefficients(n);
    let s1: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|x| x * x).sum();
    let mut buf: Vec<Complex<f64>> = signal
        .iter()
        .zip(&w)
        .map(|(x, w)| Complex::new(x * w, 0.0))
        .collect();
    let windowed_mean_square = buf.iter().map(|c| c.re * c.re).sum::<f64>() / n as f64;
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let bins = n / 2 + 1;
    let bin_width = sample_rate / n as f64;
    let magnitude = (0..bins)
        .map(|k| {
            let scale = if k == 0 || (n % 2 == 0 && k == n / 2) {
                1.0
            } else {
                2.0
            };
            scale * buf[k].norm() / s1
        })
        .collect();
    Ok(Spectrum {
        freq: (0..bins).map(|k| k as f64 * bin_width).collect(),
        magnitude,
        resolution_bw: sample_rate * s2 / (s1 * s1),
        window,
        bin_width,
        len: n,
        coherent_gain: s1 / n as f64,
        windowed_mean_square,
    })
}

/// Spectrum of the last `window_cycles` switching cycles of `signal`.
pub fn spectrum_cycles(
    signal: &[f64],
    sample_rate: f64,
    fs_switch: f64,
    window_cycles: usize,
    window: WindowKind,
) -> Result<Spectrum> {
    let needed = (window_cycles as f64 * sample_rate / fs_switch).round() as usize;
    if signal.len() < needed || needed == 0 {
        return Err(Error::TooShort {
            needed: needed.max(1),
            got: signal.len(),
        });
    }
    spectrum(&signal[signal.len() - needed..], sample_rate, window)
}

/// Sample rate of a time axis, rejecting non-uniform grids.
pub fn uniform_sample_rate(time: &[f64]) -> Result<f64> {
    if time.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: time.len(),
        });
    }
    let dt = (time[time.len() - 1] - time[0]) / (time.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(invalid("time", "time axis must be increasing"));
    }
    for (i, t) in time.iter().enumerate() {
        let deviation = (t - (time[0] + i as f64 * dt)).abs();
        if deviation > 1e-6 * dt {
            return Err(Error::NonUniformSampling {
                index: i,
                deviation,
            });
        }
    }
    Ok(1.0 / dt)
}

/// [`spectrum`] of a signal given with its own time axis.
pub fn spectrum_of_trace(time: &[f64], signal: &[f64], window: WindowKind) -> Result<Spectrum> {
    if time.len() != signal.len() {
        return Err(invalid("signal", "time and signal lengths differ"));
    }
    spectrum(signal, uniform_sample_rate(time)?, window)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SidebandReport {
    pub lower_mag: f64,
    pub upper_mag: f64,
    /// `lower_mag / upper_mag`.
    pub asymmetry_ratio: f64,
}

/// Magnitudes of the `fs_switch - delta` and `fs_switch + delta` sidebands.
pub fn sideband_symmetry(spec: &Spectrum, fs_switch: f64, delta: f64) -> Result<SidebandReport> {
    let lower_mag = spec.line_magnitude(fs_switch - delta)?;
    let upper_mag = spec.line_magnitude(fs_switch + delta)?;
    Ok(SidebandReport {
        lower_mag,
        upper_mag,
        asymmetry_ratio: lower_mag / upper_mag,
    })
}

/// `10 log10(P_ref / P_test)` for the band power in `band` Hz.
pub fn notch_depth(spec_ref: &Spectrum, spec_test: &Spectrum, band: (f64, f64)) -> Result<f64> {
    if !spec_ref.same_grid(spec_test) {
        return Err(Error::GridMismatch);
    }
    let p_ref = spec_ref.band_power(band.0, band.1);
    let p_test = spec_test.band_power(band.0, band.1);
    if p_ref == 0.0 && p_test == 0.0 {
        return Ok(0.0);
    }
    Ok(10.0 * (p_ref / p_test).log10())
}

/// Amplitude of the component of `signal` at `freq` Hz, by correlation
/// against a quadrature pair after removing the mean. Works best over an
/// integer number of periods of `freq`.
pub fn tone_amplitude(signal: &[f64], sample_rate: f64, freq: f64) -> f64 {
    let n = signal.len() as f64;
    let mean = signal.iter().sum::<f64>() / n;
    let (mut re, mut im) = (0.0, 0.0);
    for (i, x) in signal.iter().enumerate() {
        let ph = 2.0 * PI * freq * i as f64 / sample_rate;
        re += (x - mean) * ph.cos();
        im += (x - mean) * ph.sin();
    }
    2.0 * (re * re + im * im).sqrt() / n
}

/// Pearson correlation coefficient of two equally long series.
pub fn normalized_correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}
