//! Noise transfer functions and the 1-bit error-feedback delta-sigma pulse
//! density modulator.
//!
//! The modulator runs once per half switching cycle. Its output bit decides
//! whether the bridge passes or skips that half-cycle pulse, and the
//! quantization error is shaped by the NTF so that
//!
//! ```text
//! Y(z) = D(z) + NTF(z) E(z)
//! ```
//!
//! holds sample by sample. With the quantizer `y = 1 iff v >= 1` and
//! `e = y - v`, a stable configuration keeps `e` inside `[-1, 0]`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{invalid, Result};

/// Tolerance used for the structural NTF checks (conjugate pairing,
/// DC rejection, realizability).
const STRUCTURE_TOL: f64 = 1e-9;

/// Slack allowed on the `[-1, 0]` error bound before a sample is reported
/// as a stability violation.
pub const ERROR_BOUND_EPS: f64 = 1e-9;

/// Default pole radius of the notch NTF.
pub const DEFAULT_POLE_RADIUS: f64 = 0.9;

/// A rational discrete-time noise transfer function in zero/pole/gain form.
///
/// `NTF(z) = gain * prod(z - zeros[i]) / prod(z - poles[i])`
#[derive(Debug, Clone, PartialEq)]
pub struct NtfSpec {
    zeros: Vec<Complex64>,
    poles: Vec<Complex64>,
    gain: f64,
}

impl NtfSpec {
    /// Builds an NTF after checking that it is usable inside a 1-bit
    /// error-feedback loop: real coefficients, poles strictly inside the unit
    /// circle, `NTF(inf) = 1` and `NTF(1) = 0`.
    pub fn new(zeros: Vec<Complex64>, poles: Vec<Complex64>, gain: f64) -> Result<Self> {
        if zeros.is_empty() {
            return Err(invalid(
                "zeros",
                "an NTF needs at least one zero (at z = 1)",
            ));
        }
        if zeros.len() != poles.len() {
            return Err(invalid(
                "poles",
                format!(
                    "realizable NTF needs as many poles as zeros ({} zeros, {} poles)",
                    zeros.len(),
                    poles.len()
                ),
            ));
        }
        if (gain - 1.0).abs() > STRUCTURE_TOL {
            return Err(invalid(
                "gain",
                format!("NTF(inf) must be 1, gain is {gain}"),
            ));
        }
        if zeros
            .iter()
            .chain(&poles)
            .any(|c| !c.re.is_finite() || !c.im.is_finite())
        {
            return Err(invalid("zeros/poles", "non-finite root"));
        }
        if !conjugate_closed(&zeros) {
            return Err(invalid(
                "zeros",
                "complex zeros must come in conjugate pairs",
            ));
        }
        if !conjugate_closed(&poles) {
            return Err(invalid(
                "poles",
                "complex poles must come in conjugate pairs",
            ));
        }
        if let Some(p) = poles.iter().find(|p| p.norm() >= 1.0) {
            return Err(invalid(
                "poles",
                format!("pole {p} lies on or outside the unit circle"),
            ));
        }
        let spec = Self { zeros, poles, gain };
        let dc = spec.eval_z(Complex64::new(1.0, 0.0)).norm();
        if dc > STRUCTURE_TOL {
            return Err(invalid(
                "zeros",
                format!("NTF(1) must be 0, got |NTF(1)| = {dc:.3e}"),
            ));
        }
        Ok(spec)
    }

    pub fn zeros(&self) -> &[Complex64] {
        &self.zeros
    }

    pub fn poles(&self) -> &[Complex64] {
        &self.poles
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn order(&self) -> usize {
        self.zeros.len().max(self.poles.len())
    }

    /// Evaluates `NTF(z)` at an arbitrary point of the z-plane.
    pub fn eval_z(&self, z: Complex64) -> Complex64 {
        let num: Complex64 = self.zeros.iter().map(|q| z - q).product();
        let den: Complex64 = self.poles.iter().map(|p| z - p).product();
        num / den * self.gain
    }

    /// Limit of `NTF(z)` as `|z| -> inf`.
    pub fn eval_at_infinity(&self) -> f64 {
        if self.zeros.len() == self.poles.len() {
            self.gain
        } else if self.zeros.len() < self.poles.len() {
            0.0
        } else {
            f64::INFINITY
        }
    }

    /// Frequency response at the normalized angle `theta`, i.e. `NTF(e^{j theta})`.
    ///
    /// The modulator samples twice per switching period, so a frequency `w`
    /// maps to `theta = pi * w / w_s`.
    pub fn eval(&self, theta: f64) -> Complex64 {
        self.eval_z(Complex64::from_polar(1.0, theta))
    }

    /// Response at `ratio = w / w_s`.
    pub fn eval_ratio(&self, ratio: f64) -> Complex64 {
        self.eval(PI * ratio)
    }

    /// Numerator coefficients in powers of `z^-1`, leading coefficient first.
    pub fn numerator(&self) -> Vec<f64> {
        expand_real(&self.zeros)
            .into_iter()
            .map(|c| c * self.gain)
            .collect()
    }

    /// Denominator coefficients in powers of `z^-1`, leading coefficient first.
    pub fn denominator(&self) -> Vec<f64> {
        expand_real(&self.poles)
    }

    /// First `len` samples of the impulse response, computed by cascading
    /// complex first-order sections `(1 - q z^-1) / (1 - p z^-1)`.
    pub fn impulse_response(&self, len: usize) -> Vec<f64> {
        let mut signal: Vec<Complex64> = (0..len)
            .map(|n| Complex64::new(if n == 0 { self.gain } else { 0.0 }, 0.0))
            .collect();
        for (q, p) in self.zeros.iter().zip(&self.poles) {
            let mut prev_in = Complex64::new(0.0, 0.0);
            let mut prev_out = Complex64::new(0.0, 0.0);
            for s in signal.iter_mut() {
                let x = *s;
                let y = x - q * prev_in + p * prev_out;
                prev_in = x;
                prev_out = y;
                *s = y;
            }
        }
        signal.into_iter().map(|c| c.re).collect()
    }
}

fn conjugate_closed(roots: &[Complex64]) -> bool {
    let mut used = vec![false; roots.len()];
    for (i, r) in roots.iter().enumerate() {
        if r.im.abs() <= STRUCTURE_TOL {
            continue;
        }
        if used[i] {
            continue;
        }
        let partner = roots.iter().enumerate().position(|(j, s)| {
            j != i && !used[j] && (s - r.conj()).norm() <= STRUCTURE_TOL * (1.0 + r.norm())
        });
        match partner {
            Some(j) => {
                used[i] = true;
                used[j] = true;
            }
            None => return false,
        }
    }
    true
}

/// Expands `prod(1 - r z^-1)` into real coefficients.
fn expand_real(roots: &[Complex64]) -> Vec<f64> {
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (i, c) in coeffs.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        coeffs = next;
    }
    coeffs.into_iter().map(|c| c.re).collect()
}

/// The conventional first-order difference block `NTF(z) = 1 - z^-1`.
pub fn ntf_first_order() -> NtfSpec {
    NtfSpec {
        zeros: vec![Complex64::new(1.0, 0.0)],
        poles: vec![Complex64::new(0.0, 0.0)],
        gain: 1.0,
    }
}

/// Third-order notch NTF: a DC zero plus a conjugate zero pair on the unit
/// circle at `theta = pi * omega_ratio`, each zero shadowed by a pole at
/// radius `pole_radius` along the same direction.
pub fn ntf_notch(omega_ratio: f64, pole_radius: f64) -> Result<NtfSpec> {
    if !(omega_ratio > 0.0 && omega_ratio < 1.0) {
        return Err(invalid(
            "omega_ratio",
            format!("must lie strictly inside (0, 1), got {omega_ratio}"),
        ));
    }
    if !(pole_radius > 0.0 && pole_radius < 1.0) {
        return Err(invalid(
            "pole_radius",
            format!("must lie strictly inside (0, 1), got {pole_radius}"),
        ));
    }
    let notch = Complex64::from_polar(1.0, PI * omega_ratio);
    let one = Complex64::new(1.0, 0.0);
    NtfSpec::new(
        vec![one, notch, notch.conj()],
        vec![
            one * pole_radius,
            notch * pole_radius,
            notch.conj() * pole_radius,
        ],
        1.0,
    )
}

/// Runtime state of the error-feedback modulator.
///
/// The loop filter `NTF(z) - 1` is strictly causal and realized as a direct
/// form difference equation over stored past errors and past filter outputs.
#[derive(Debug, Clone)]
pub struct Modulator {
    ntf: NtfSpec,
    /// `b[k] - a[k]` for k >= 1.
    feedforward: Vec<f64>,
    /// `a[k]` for k >= 1.
    feedback: Vec<f64>,
    past_errors: Vec<f64>,
    past_outputs: Vec<f64>,
    last_error: f64,
    sample_index: u64,
    threshold: f64,
}

impl Modulator {
    pub fn new(ntf: NtfSpec) -> Self {
        let b = ntf.numerator();
        let a = ntf.denominator();
        let feedforward: Vec<f64> = b.iter().zip(&a).skip(1).map(|(b, a)| b - a).collect();
        let feedback: Vec<f64> = a[1..].to_vec();
        let order = feedback.len();
        Self {
            ntf,
            feedforward,
            feedback,
            past_errors: vec![0.0; order],
            past_outputs: vec![0.0; order],
            last_error: 0.0,
            sample_index: 0,
            threshold: 1.0,
        }
    }

    /// Overrides the quantizer threshold. Only meant for exercising the
    /// stability reporting; any value other than 1 breaks the error bound.
    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn ntf(&self) -> &NtfSpec {
        &self.ntf
    }

    pub fn last_error(&self) -> f64 {
        self.last_error
    }

    /// Number of half switching cycles processed so far.
    pub fn sample_index(&self) -> u64 {
        self.sample_index
    }

    /// Loop filter memory: past errors, most recent first.
    pub fn past_errors(&self) -> &[f64] {
        &self.past_errors
    }

    pub fn reset(&mut self) {
        self.past_errors.iter_mut().for_each(|x| *x = 0.0);
        self.past_outputs.iter_mut().for_each(|x| *x = 0.0);
        self.last_error = 0.0;
        self.sample_index = 0;
    }

    /// Quantizes one half-cycle at pulse density `d`.
    pub fn step(&mut self, d: f64) -> bool {
        let filtered: f64 = self
            .feedforward
            .iter()
            .zip(&self.past_errors)
            .map(|(c, e)| c * e)
            .sum::<f64>()
            - self
                .feedback
                .iter()
                .zip(&self.past_outputs)
                .map(|(a, f)| a * f)
                .sum::<f64>();
        let v = d + filtered;
        let y = v >= self.threshold;
        let e = if y { 1.0 } else { 0.0 } - v;

        if !self.past_errors.is_empty() {
            self.past_errors.rotate_right(1);
            self.past_errors[0] = e;
            self.past_outputs.rotate_right(1);
            self.past_outputs[0] = filtered;
        }
        self.last_error = e;
        self.sample_index += 1;
        y
    }
}

/// Bit and error traces of a modulator run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModulatorRun {
    pub bits: Vec<bool>,
    pub errors: Vec<f64>,
}

impl ModulatorRun {
    pub fn density(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        self.bits.iter().filter(|b| **b).count() as f64 / self.bits.len() as f64
    }

    pub fn bits_f64(&self) -> Vec<f64> {
        self.bits
            .iter()
            .map(|b| if *b { 1.0 } else { 0.0 })
            .collect()
    }
}

fn check_density(d: f64) -> Result<()> {
    if (0.0..=1.0).contains(&d) {
        Ok(())
    } else {
        Err(invalid(
            "d",
            format!("pulse density must lie in [0, 1], got {d}"),
        ))
    }
}

/// Streams the modulator over `d_sequence` from a zero initial state.
pub fn modulator_run(ntf: &NtfSpec, d_sequence: &[f64]) -> Result<ModulatorRun> {
    d_sequence.iter().try_for_each(|d| check_density(*d))?;
    let mut m = Modulator::new(ntf.clone());
    let mut run = ModulatorRun {
        bits: Vec::with_capacity(d_sequence.len()),
        errors: Vec::with_capacity(d_sequence.len()),
    };
    for &d in d_sequence {
        run.bits.push(m.step(d));
        run.errors.push(m.last_error());
    }
    Ok(run)
}

/// Runs a constant density for `len` half cycles.
pub fn modulator_run_constant(ntf: &NtfSpec, d: f64, len: usize) -> Result<ModulatorRun> {
    check_density(d)?;
    let mut m = Modulator::new(ntf.clone());
    let mut run = ModulatorRun::default();
    run.bits.reserve(len);
    run.errors.reserve(len);
    for _ in 0..len {
        run.bits.push(m.step(d));
        run.errors.push(m.last_error());
    }
    Ok(run)
}

/// One sample whose quantization error left `[-1, 0]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub d: f64,
    pub sample_index: u64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub d_grid: Vec<f64>,
    pub max_error: f64,
    pub min_error: f64,
    /// Recorded violations, at most [`StabilityReport::MAX_RECORDED_PER_D`] per grid point.
    pub violations: Vec<Violation>,
    /// Total number of out-of-bound samples, including unrecorded ones.
    pub violation_count: u64,
}

impl StabilityReport {
    pub const MAX_RECORDED_PER_D: usize = 64;

    pub fn is_stable(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Empirical stability check: runs the modulator at every density of the
/// grid for `horizon` half cycles and collects error-bound violations.
pub fn stability_scan(ntf: &NtfSpec, d_grid: &[f64], horizon: usize) -> Result<StabilityReport> {
    stability_scan_with_threshold(ntf, d_grid, horizon, 1.0)
}

/// [`stability_scan`] with an explicit quantizer threshold (see
/// [`Modulator::with_threshold`]).
pub fn stability_scan_with_threshold(
    ntf: &NtfSpec,
    d_grid: &[f64],
    horizon: usize,
    threshold: f64,
) -> Result<StabilityReport> {
    d_grid.iter().try_for_each(|d| check_density(*d))?;

    struct PointResult {
        min: f64,
        max: f64,
        violations: Vec<Violation>,
        count: u64,
    }

    let per_point: Vec<PointResult> = d_grid
        .par_iter()
        .map(|&d| {
            let mut m = Modulator::new(ntf.clone()).with_threshold(threshold);
            let mut res = PointResult {
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
                violations: Vec::new(),
                count: 0,
            };
            for _ in 0..horizon {
                m.step(d);
                let e = m.last_error();
                res.min = res.min.min(e);
                res.max = res.max.max(e);
                if !(e >= -1.0 - ERROR_BOUND_EPS && e <= ERROR_BOUND_EPS) {
                    res.count += 1;
                    if res.violations.len() < StabilityReport::MAX_RECORDED_PER_D {
                        res.violations.push(Violation {
                            d,
                            sample_index: m.sample_index() - 1,
                            error: e,
                        });
                    }
                }
            }
            res
        })
        .collect();

    let mut report = StabilityReport {
        d_grid: d_grid.to_vec(),
        max_error: f64::NEG_INFINITY,
        min_error: f64::INFINITY,
        violations: Vec::new(),
        violation_count: 0,
    };
    for p in per_point {
        report.min_error = report.min_error.min(p.min);
        report.max_error = report.max_error.max(p.max);
        report.violations.extend(p.violations);
        report.violation_count += p.count;
    }
    Ok(report)
}

/// `start, start + step, ...` with `stop` always included as the last point.
pub fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0, "grid step must be positive");
    let n = ((stop - start) / step + 1e-9).floor().max(0.0) as usize;
    // snap to 12 significant digits so 0.203 + 38 * 0.02 prints as 0.963
    let snap = |x: f64| {
        if x == 0.0 {
            return x;
        }
        let scale = 10f64.powi(11 - x.abs().log10().floor() as i32);
        (x * scale).round() / scale
    };
    let mut g: Vec<f64> = (0..=n).map(|i| snap(start + step * i as f64)).collect();
    if let Some(last) = g.last_mut() {
        if (stop - *last).abs() <= 1e-9 * step {
            *last = stop;
        } else if *last < stop {
            g.push(stop);
        }
    }
    g
}
