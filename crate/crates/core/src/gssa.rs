//! First-harmonic dynamic phasor (generalized state-space averaging) model
//! of the SS link and the small-signal transfer functions from bridge
//! voltage amplitude to resonant current amplitude.
//!
//! Each state `x` is represented by its complex fundamental `X` with
//! `x(t) = Re(X e^{j w_s t})`, whose dynamics are `dX/dt = <dx/dt>_1 - j w_s X`.
//! The real state vector is
//! `[Re I1, Im I1, Re I2, Im I2, Re Vc1, Im Vc1, Re Vc2, Im Vc2]`.
//!
//! The primary bridge is a voltage source of amplitude `(4 Vg / pi) d1` and
//! sets the phase reference. The synchronous rectifier is a constant-voltage
//! sink of amplitude `(4 Vo / pi) d2` in phase with `I2`, so it only reacts
//! to the component of a current perturbation orthogonal to `I2`.

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use num_complex::Complex64;

use crate::analysis::tone_amplitude;
use crate::error::{invalid, Error, Result};
use crate::plant::{
    fundamental_amplitude, simulate_with, CircuitParams, FullDensity, PlantState, ScaledSource,
    SimConfig,
};

pub type Matrix8 = SMatrix<f64, 8, 8>;
pub type Vector8 = SVector<f64, 8>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Primary,
    Secondary,
}

impl Side {
    pub fn name(&self) -> &'static str {
        match self {
            Side::Primary => "primary",
            Side::Secondary => "secondary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurrentOutput {
    I1,
    I2,
}

impl CurrentOutput {
    pub fn name(&self) -> &'static str {
        match self {
            CurrentOutput::I1 => "i1",
            CurrentOutput::I2 => "i2",
        }
    }
}

#[derive(Debug, Clone)]
pub struct GssaModel {
    pub state_matrix: Matrix8,
    /// Column for a perturbation of the primary fundamental amplitude (V).
    pub input_primary: Vector8,
    /// Column for a perturbation of the secondary fundamental amplitude (V).
    pub input_secondary: Vector8,
    /// Row extracting the `|I1|` perturbation.
    pub output_i1: Vector8,
    /// Row extracting the `|I2|` perturbation.
    pub output_i2: Vector8,
    pub operating_point: Vector8,
    pub omega_s: f64,
}

impl GssaModel {
    pub fn input_map(&self, side: Side) -> &Vector8 {
        match side {
            Side::Primary => &self.input_primary,
            Side::Secondary => &self.input_secondary,
        }
    }

    pub fn output_map(&self, out: CurrentOutput) -> &Vector8 {
        match out {
            CurrentOutput::I1 => &self.output_i1,
            CurrentOutput::I2 => &self.output_i2,
        }
    }

    /// Operating-point current phasors `(I1, I2)`, peak amplitude.
    pub fn current_phasors(&self) -> (Complex64, Complex64) {
        let x = &self.operating_point;
        (Complex64::new(x[0], x[1]), Complex64::new(x[2], x[3]))
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.state_matrix
            .complex_eigenvalues()
            .iter()
            .map(|c| Complex64::new(c.re, c.im))
            .collect()
    }

    pub fn is_stable(&self) -> bool {
        self.eigenvalues().iter().all(|l| l.re < 0.0)
    }

    /// `c (s I - A)^-1 b` at `s = j delta_omega`.
    pub fn transfer(&self, side: Side, out: CurrentOutput, delta_omega: f64) -> Result<Complex64> {
        let s = Complex64::new(0.0, delta_omega);
        let m = DMatrix::<Complex64>::from_fn(8, 8, |r, c| {
            let diag = if r == c { s } else { Complex64::new(0.0, 0.0) };
            diag - self.state_matrix[(r, c)]
        });
        let b =
            DVector::<Complex64>::from_fn(8, |r, _| Complex64::new(self.input_map(side)[r], 0.0));
        let x = m
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Singular(format!("resolvent at j{delta_omega:.4e}")))?;
        let c = self.output_map(out);
        Ok((0..8).map(|i| x[i] * c[i]).sum())
    }
}

/// Real 2x2 block of multiplication by a complex scalar.
fn complex_block(c: Complex64) -> [[f64; 2]; 2] {
    [[c.re, -c.im], [c.im, c.re]]
}

struct Phasor {
    l_inv: [[f64; 2]; 2],
    r: [f64; 2],
    c: [f64; 2],
    w: f64,
    wm: f64,
    a1: f64,
    a2: f64,
}

impl Phasor {
    fn new(p: &CircuitParams, d1: f64, d2: f64) -> Self {
        let m = p.mutual();
        let det = p.l1 * p.l2 - m * m;
        Self {
            l_inv: [[p.l2 / det, -m / det], [-m / det, p.l1 / det]],
            r: [p.r1, p.r2],
            c: [p.c1, p.c2],
            w: p.omega_s(),
            wm: p.omega_s() * m,
            a1: CircuitParams::fundamental_amplitude(p.vg, d1),
            a2: CircuitParams::fundamental_amplitude(p.vo, d2),
        }
    }

    fn split(x: &Vector8) -> ([Complex64; 2], [Complex64; 2]) {
        (
            [Complex64::new(x[0], x[1]), Complex64::new(x[2], x[3])],
            [Complex64::new(x[4], x[5]), Complex64::new(x[6], x[7])],
        )
    }

    fn residual(&self, x: &Vector8) -> Vector8 {
        let (i, v) = Self::split(x);
        let j = Complex64::i();
        let u2 = i[1] / i[1].norm() * self.a2;
        let drive = [
            Complex64::new(self.a1, 0.0) - self.r[0] * i[0] - v[0],
            -u2 - self.r[1] * i[1] - v[1],
        ];
        let mut out = Vector8::zeros();
        for a in 0..2 {
            let di = self.l_inv[a][0] * drive[0] + self.l_inv[a][1] * drive[1] - j * self.w * i[a];
            let dv = i[a] / self.c[a] - j * self.w * v[a];
            out[2 * a] = di.re;
            out[2 * a + 1] = di.im;
            out[4 + 2 * a] = dv.re;
            out[4 + 2 * a + 1] = dv.im;
        }
        out
    }

    fn jacobian(&self, x: &Vector8) -> Matrix8 {
        let (i, _) = Self::split(x);
        let mag = i[1].norm();
        let u = i[1] / mag;
        // d(I2/|I2|)/dI2 = (1 - u u^T) / |I2|
        let perp = [
            [(1.0 - u.re * u.re) / mag, -u.re * u.im / mag],
            [-u.re * u.im / mag, (1.0 - u.im * u.im) / mag],
        ];
        let rot = complex_block(Complex64::new(0.0, -self.w));
        let mut a = Matrix8::zeros();
        let mut put = |r0: usize, c0: usize, blk: [[f64; 2]; 2]| {
            for (dr, row) in blk.iter().enumerate() {
                for (dc, v) in row.iter().enumerate() {
                    a[(r0 + dr, c0 + dc)] += v;
                }
            }
        };
        for row in 0..2 {
            for col in 0..2 {
                let g = self.l_inv[row][col];
                put(
                    2 * row,
                    2 * col,
                    complex_block(Complex64::new(-g * self.r[col], 0.0)),
                );
                put(2 * row, 4 + 2 * col, complex_block(Complex64::new(-g, 0.0)));
            }
            put(2 * row, 2 * row, rot);
            let g = -self.l_inv[row][1] * self.a2;
            put(
                2 * row,
                2,
                [
                    [g * perp[0][0], g * perp[0][1]],
                    [g * perp[1][0], g * perp[1][1]],
                ],
            );
            put(
                4 + 2 * row,
                2 * row,
                complex_block(Complex64::new(1.0 / self.c[row], 0.0)),
            );
            put(4 + 2 * row, 4 + 2 * row, rot);
        }
        a
    }

    /// Lossless resonant estimate used to seed Newton.
    fn initial_guess(&self) -> Vector8 {
        let wm = self.wm;
        let j = Complex64::i();
        let i1 = Complex64::new(self.a2 / wm, 0.0);
        let i2 = Complex64::new(0.0, -self.a1 / wm);
        let v1 = i1 / (j * self.w * self.c[0]);
        let v2 = i2 / (j * self.w * self.c[1]);
        Vector8::from_column_slice(&[i1.re, i1.im, i2.re, i2.im, v1.re, v1.im, v2.re, v2.im])
    }
}

/// Linearizes the dynamic phasor model at the steady state reached with
/// primary density `d1` and secondary density `d2`.
pub fn build_gssa(params: &CircuitParams, d1: f64, d2: f64) -> Result<GssaModel> {
    params.validate()?;
    for (name, d) in [("d1", d1), ("d2", d2)] {
        if !(0.0..=1.0).contains(&d) {
            return Err(invalid(
                name,
                format!("pulse density must lie in [0, 1], got {d}"),
            ));
        }
    }
    if d1 == 0.0 {
        return Err(invalid(
            "d1",
            "no primary drive, the operating point is zero",
        ));
    }
    let ph = Phasor::new(params, d1, d2);

    // Damped Newton on the averaged dynamics.
    let mut x = ph.initial_guess();
    let scale = x.norm().max(1.0);
    let mut res = ph.residual(&x);
    let mut converged = false;
    for _ in 0..100 {
        let jac = ph.jacobian(&x);
        let step = jac
            .lu()
            .solve(&(-res))
            .ok_or_else(|| Error::Singular("phasor Jacobian at the operating point".into()))?;
        let mut t = 1.0;
        loop {
            let cand = x + step * t;
            let cand_res = ph.residual(&cand);
            if cand_res.iter().all(|v| v.is_finite()) && cand_res.norm() < res.norm() {
                x = cand;
                res = cand_res;
                break;
            }
            t *= 0.5;
            if t < 1e-6 {
                break;
            }
        }
        if step.norm() * t <= 1e-12 * scale {
            converged = true;
            break;
        }
        if t < 1e-6 {
            break;
        }
    }
    let i2_mag = (x[2] * x[2] + x[3] * x[3]).sqrt();
    if !converged || !(i2_mag > 1e-9) {
        return Err(Error::Degenerate(format!(
            "no conducting operating point found (|I2| = {i2_mag:.3e}, residual {:.3e})",
            res.norm()
        )));
    }

    let state_matrix = ph.jacobian(&x);
    let mut input_primary = Vector8::zeros();
    let mut input_secondary = Vector8::zeros();
    let u = Complex64::new(x[2], x[3]) / i2_mag;
    for a in 0..2 {
        input_primary[2 * a] = ph.l_inv[a][0];
        let g = -ph.l_inv[a][1];
        input_secondary[2 * a] = g * u.re;
        input_secondary[2 * a + 1] = g * u.im;
    }
    let i1_mag = (x[0] * x[0] + x[1] * x[1]).sqrt();
    let mut output_i1 = Vector8::zeros();
    output_i1[0] = x[0] / i1_mag;
    output_i1[1] = x[1] / i1_mag;
    let mut output_i2 = Vector8::zeros();
    output_i2[2] = x[2] / i2_mag;
    output_i2[3] = x[3] / i2_mag;

    Ok(GssaModel {
        state_matrix,
        input_primary,
        input_secondary,
        output_i1,
        output_i2,
        operating_point: x,
        omega_s: params.omega_s(),
    })
}

/// Small-signal amplitude-to-amplitude frequency response.
#[derive(Debug, Clone, PartialEq)]
pub struct BodeData {
    /// Envelope perturbation frequency, rad/s.
    pub freq: Vec<f64>,
    pub magnitude_db: Vec<f64>,
    pub phase_deg: Vec<f64>,
    pub input_side: Side,
    pub output_current: CurrentOutput,
}

pub fn gssa_bode(
    model: &GssaModel,
    side: Side,
    out: CurrentOutput,
    freq_grid: &[f64],
) -> Result<BodeData> {
    if freq_grid.is_empty() {
        return Err(invalid("freq_grid", "empty frequency grid"));
    }
    if freq_grid[0] <= 0.0 || freq_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid(
            "freq_grid",
            "must be positive and strictly increasing",
        ));
    }
    let mut bode = BodeData {
        freq: freq_grid.to_vec(),
        magnitude_db: Vec::with_capacity(freq_grid.len()),
        phase_deg: Vec::with_capacity(freq_grid.len()),
        input_side: side,
        output_current: out,
    };
    for &w in freq_grid {
        let h = model.transfer(side, out, w)?;
        bode.magnitude_db.push(20.0 * h.norm().log10());
        bode.phase_deg.push(h.arg().to_degrees());
    }
    Ok(bode)
}

/// `n` points evenly spaced over `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Grid covering `[0.2, 3] * (k/2) w_s`, the band in which the envelope
/// resonance is searched.
pub fn peak_search_grid(params: &CircuitParams, n: usize) -> Vec<f64> {
    let center = 0.5 * params.k * params.omega_s();
    linear_grid(0.2 * center, 3.0 * center, n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// rad/s
    pub omega0: f64,
    pub peak_gain_db: f64,
}

pub const MIN_PEAK_POINTS: usize = 100;

/// Grid maximum refined by a parabola through its two neighbours.
pub fn find_peak(bode: &BodeData) -> Result<Peak> {
    let n = bode.freq.len();
    if n < MIN_PEAK_POINTS {
        return Err(invalid(
            "bode",
            format!("need at least {MIN_PEAK_POINTS} points, got {n}"),
        ));
    }
    let (imax, _) =
        bode.magnitude_db
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| {
                if *v > bv {
                    (i, *v)
                } else {
                    (bi, bv)
                }
            });
    if imax == 0 || imax == n - 1 {
        return Err(Error::NoInteriorPeak);
    }
    let (x0, x1, x2) = (bode.freq[imax - 1], bode.freq[imax], bode.freq[imax + 1]);
    let (y0, y1, y2) = (
        bode.magnitude_db[imax - 1],
        bode.magnitude_db[imax],
        bode.magnitude_db[imax + 1],
    );
    // Lagrange parabola through the three points
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let curv = (d12 - d01) / (x2 - x0);
    if curv >= 0.0 {
        return Ok(Peak {
            omega0: x1,
            peak_gain_db: y1,
        });
    }
    let xv = 0.5 * (x0 + x1) - d01 / (2.0 * curv);
    let xv = xv.clamp(x0, x2);
    let yv = y0 + d01 * (xv - x0) + curv * (xv - x0) * (xv - x1);
    Ok(Peak {
        omega0: xv,
        peak_gain_db: yv,
    })
}

/// Amplitude gain measured on the time-domain plant at full density on both
/// sides: the DC voltage of bridge `side` is scaled by
/// `1 + depth cos(delta_omega t)`, the `out` current is demodulated into its
/// fundamental amplitude per switching period, and the tone of that series
/// at `delta_omega` is divided by the bridge amplitude perturbation.
pub fn am_probe_gain(
    params: &CircuitParams,
    side: Side,
    out: CurrentOutput,
    delta_omega: f64,
    depth: f64,
    sim: &SimConfig,
) -> Result<f64> {
    if !(delta_omega > 0.0) || !(depth > 0.0 && depth < 1.0) {
        return Err(invalid(
            "am probe",
            "need delta_omega > 0 and 0 < depth < 1",
        ));
    }
    let cycles_per_mod = params.omega_s() / delta_omega;
    let mods = (500.0 / cycles_per_mod).ceil().max(4.0);
    let window = (mods * cycles_per_mod).round() as usize;
    let run = SimConfig {
        duration_periods: sim.transient_discard_periods + window,
        ..*sim
    };
    let mut probe = ScaledSource(|t: f64| 1.0 + depth * (delta_omega * t).cos());
    let trace = match side {
        Side::Primary => simulate_with(
            params,
            &mut probe,
            &mut FullDensity,
            &run,
            PlantState::default(),
        )?,
        Side::Secondary => simulate_with(
            params,
            &mut FullDensity,
            &mut probe,
            &run,
            PlantState::default(),
        )?,
    };
    let current = match out {
        CurrentOutput::I1 => &trace.i1,
        CurrentOutput::I2 => &trace.i2,
    };
    let tail: Vec<f64> = (sim.transient_discard_periods..run.duration_periods)
        .map(|c| fundamental_amplitude(&trace, current, c, c + 1))
        .collect();
    let tone = tone_amplitude(&tail, params.fs, delta_omega / (2.0 * std::f64::consts::PI));
    let dc = match side {
        Side::Primary => params.vg,
        Side::Secondary => params.vo,
    };
    Ok(tone / (CircuitParams::fundamental_amplitude(dc, 1.0) * depth))
}
