//! Named experiment pipelines that write CSV tables to an output directory.
//!
//! Every CSV starts with a header row whose column names carry their unit
//! suffix (`_s`, `_hz`, `_a`, `_v`, `_db`, `_deg`, `_pct`). `manifest.csv`
//! lists each written file with its schema version and columns.

use std::f64::consts::PI;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::analysis::{
    envelope, normalized_correlation, notch_depth, ripple, spectrum, spectrum_cycles, RippleReport,
    WindowKind,
};
use crate::config::{DensityProfile, ExperimentConfig, NtfChoice};
use crate::dsm::{
    grid, modulator_run, modulator_run_constant, Modulator, NtfSpec, ERROR_BOUND_EPS,
};
use crate::error::{invalid, Result};
use crate::gating::{amplitude_sequence, clock_polarity, synthesize_bridge_wave, GateSchedule};
use crate::gssa::{
    build_gssa, find_peak, gssa_bode, linear_grid, peak_search_grid, CurrentOutput, Side,
};
use crate::plant::{
    simulate_with, steady_state_phasor, CircuitParams, FullDensity, ModulatedSource, PlantState,
    SimConfig,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Notch positions of the deviation study, as fractions of `w_s`.
pub const DEVIATION_RATIOS: [f64; 3] = [0.065, 0.076, 0.085];

/// Operating point at which spectra are compared.
pub const SPECTRUM_DENSITY: f64 = 0.963;

const SPECTRUM_LEN: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    DynamicResponse,
    NtfCompare,
    RippleSweep,
    DeviationStudy,
    SinusoidTracking,
    GssaBode,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::DynamicResponse,
        Experiment::NtfCompare,
        Experiment::RippleSweep,
        Experiment::DeviationStudy,
        Experiment::SinusoidTracking,
        Experiment::GssaBode,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::DynamicResponse => "dynamic-response",
            Experiment::NtfCompare => "ntf-compare",
            Experiment::RippleSweep => "ripple-sweep",
            Experiment::DeviationStudy => "deviation-study",
            Experiment::SinusoidTracking => "sinusoid-tracking",
            Experiment::GssaBode => "gssa-bode",
        }
    }
}

impl FromStr for Experiment {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
                invalid(
                    "experiment",
                    format!("unknown experiment `{s}` (one of {})", names.join(", ")),
                )
            })
    }
}

/// Files written and invariant violations flagged by one run.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub violations: Vec<String>,
    /// Human-readable headline numbers.
    pub summary: Vec<String>,
}

impl Outcome {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn run_experiment(name: &str, cfg: &ExperimentConfig, out_dir: &Path) -> Result<Outcome> {
    let exp: Experiment = name.parse()?;
    std::fs::create_dir_all(out_dir)?;
    let mut out = Output::new(out_dir);
    match exp {
        Experiment::DynamicResponse => dynamic_response(cfg, &mut out)?,
        Experiment::NtfCompare => ntf_compare(cfg, &mut out)?,
        Experiment::RippleSweep => ripple_sweep(cfg, &mut out)?,
        Experiment::DeviationStudy => deviation_study(cfg, &mut out)?,
        Experiment::SinusoidTracking => sinusoid_tracking(cfg, &mut out)?,
        Experiment::GssaBode => gssa_bode_experiment(cfg, &mut out)?,
    }
    out.write_manifest(exp)?;
    Ok(out.outcome)
}

/// Ripple of both currents when `side` is modulated at constant density `d`
/// and the other bridge runs at full density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RipplePoint {
    pub d: f64,
    pub side: Side,
    pub i1: RippleReport,
    pub i2: RippleReport,
    /// Modulator samples whose error left `[-1, 0]`.
    pub error_violations: usize,
}

impl RipplePoint {
    /// Ripple of the current on the modulated side.
    pub fn controlled(&self) -> f64 {
        match self.side {
            Side::Primary => self.i1.ripple_percent,
            Side::Secondary => self.i2.ripple_percent,
        }
    }
}

pub fn ripple_point(
    params: &CircuitParams,
    ntf: &NtfSpec,
    side: Side,
    d: f64,
    sim: &SimConfig,
) -> Result<RipplePoint> {
    if !(0.0..=1.0).contains(&d) {
        return Err(invalid(
            "d",
            format!("pulse density must lie in [0, 1], got {d}"),
        ));
    }
    let mut source = ModulatedSource::new(Modulator::new(ntf.clone()), move |_| d);
    let trace = match side {
        Side::Primary => simulate_with(
            params,
            &mut source,
            &mut FullDensity,
            sim,
            PlantState::default(),
        )?,
        Side::Secondary => simulate_with(
            params,
            &mut FullDensity,
            &mut source,
            sim,
            PlantState::default(),
        )?,
    };
    let report = |x: &[f64]| -> Result<RippleReport> {
        ripple(
            &envelope(x, trace.sample_rate, params.fs)?,
            sim.transient_discard_periods,
        )
    };
    Ok(RipplePoint {
        d,
        side,
        i1: report(&trace.i1)?,
        i2: report(&trace.i2)?,
        error_violations: count_error_violations(&source.errors),
    })
}

/// Ripple points for every `(ntf, d)` pair, in input order.
pub fn ripple_grid(
    params: &CircuitParams,
    ntfs: &[NtfSpec],
    side: Side,
    ds: &[f64],
    sim: &SimConfig,
) -> Result<Vec<Vec<RipplePoint>>> {
    let jobs: Vec<(usize, f64)> = (0..ntfs.len())
        .flat_map(|k| ds.iter().map(move |d| (k, *d)))
        .collect();
    let flat: Vec<RipplePoint> = jobs
        .par_iter()
        .map(|(k, d)| ripple_point(params, &ntfs[*k], side, *d, sim))
        .collect::<Result<_>>()?;
    Ok(flat.chunks(ds.len()).map(|c| c.to_vec()).collect())
}

/// Envelope tracking of a sinusoidal secondary density profile.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingRun {
    /// Switching cycle index of each row.
    pub cycle: Vec<usize>,
    pub d2: Vec<f64>,
    pub env_i1: Vec<f64>,
    pub env_i2: Vec<f64>,
    /// Steady-state envelope at the instantaneous `d2`.
    pub predicted_i1: Vec<f64>,
    pub predicted_i2: Vec<f64>,
    pub error_violations: usize,
}

impl TrackingRun {
    pub fn correlation_i1(&self) -> f64 {
        normalized_correlation(&self.env_i1, &self.d2)
    }

    pub fn correlation_i2(&self) -> f64 {
        normalized_correlation(&self.env_i2, &self.d2)
    }

    /// RMS of envelope minus predicted envelope, A.
    pub fn excursion_i1(&self) -> f64 {
        rms_difference(&self.env_i1, &self.predicted_i1)
    }

    pub fn excursion_i2(&self) -> f64 {
        rms_difference(&self.env_i2, &self.predicted_i2)
    }
}

fn rms_difference(a: &[f64], b: &[f64]) -> f64 {
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (s / a.len() as f64).sqrt()
}

/// Drives the secondary with `profile` for `modulation_periods` periods of
/// its frequency after the transient, primary at full density.
pub fn tracking_run(
    params: &CircuitParams,
    ntf: &NtfSpec,
    profile: DensityProfile,
    modulation_periods: usize,
    sim: &SimConfig,
) -> Result<TrackingRun> {
    let DensityProfile::Sinusoid { frequency, .. } = profile else {
        return Err(invalid("d_profile", "tracking needs a sinusoid profile"));
    };
    let window = (modulation_periods as f64 * params.fs / frequency).round() as usize;
    let run = SimConfig {
        duration_periods: sim.transient_discard_periods + window,
        ..*sim
    };
    let mut source =
        ModulatedSource::new(Modulator::new(ntf.clone()), move |t| profile.value_at(t));
    let trace = simulate_with(
        params,
        &mut FullDensity,
        &mut source,
        &run,
        PlantState::default(),
    )?;
    let e1 = envelope(&trace.i1, trace.sample_rate, params.fs)?;
    let e2 = envelope(&trace.i2, trace.sample_rate, params.fs)?;
    let a1 = CircuitParams::fundamental_amplitude(params.vg, 1.0);
    let start = sim.transient_discard_periods;
    let mut out = TrackingRun {
        cycle: Vec::new(),
        d2: Vec::new(),
        env_i1: Vec::new(),
        env_i2: Vec::new(),
        predicted_i1: Vec::new(),
        predicted_i2: Vec::new(),
        error_violations: count_error_violations(&source.errors),
    };
    for c in start..e1.len() {
        let d = profile.value_at((c as f64 + 0.5) / params.fs);
        let (p1, p2) = steady_state_phasor(
            params,
            a1,
            CircuitParams::fundamental_amplitude(params.vo, d),
        )?;
        out.cycle.push(c);
        out.d2.push(d);
        out.env_i1.push(e1[c]);
        out.env_i2.push(e2[c]);
        out.predicted_i1.push(p1.norm());
        out.predicted_i2.push(p2.norm());
    }
    Ok(out)
}

fn count_error_violations(errors: &[f64]) -> usize {
    errors
        .iter()
        .filter(|e| !(**e >= -1.0 - ERROR_BOUND_EPS && **e <= ERROR_BOUND_EPS))
        .count()
}

fn nominal_density(profile: &DensityProfile) -> f64 {
    profile.value_at(0.0)
}

fn ntf_name(choice: &NtfChoice) -> String {
    match choice {
        NtfChoice::FirstOrder => "first".into(),
        NtfChoice::Notch { ratio, .. } => format!("notch@{ratio}"),
    }
}

/// Decimal for ordinary magnitudes, scientific otherwise.
fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e9).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

struct Output {
    dir: PathBuf,
    tables: Vec<(String, Vec<String>)>,
    outcome: Outcome,
}

impl Output {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            tables: Vec::new(),
            outcome: Outcome::default(),
        }
    }

    fn table(&mut self, name: &str, header: &[&str]) -> Result<csv::Writer<File>> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        self.tables.push((
            name.to_string(),
            header.iter().map(|h| h.to_string()).collect(),
        ));
        self.outcome.files.push(path);
        Ok(w)
    }

    fn violation(&mut self, msg: String) {
        self.outcome.violations.push(msg);
    }

    fn summary(&mut self, msg: String) {
        self.outcome.summary.push(msg);
    }

    fn write_manifest(&mut self, exp: Experiment) -> Result<()> {
        let path = self.dir.join("manifest.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["experiment", "file", "schema_version", "columns"])?;
        for (file, cols) in &self.tables {
            w.write_record([
                exp.name(),
                file.as_str(),
                &SCHEMA_VERSION.to_string(),
                &cols.join(" "),
            ])?;
        }
        w.flush()?;
        self.outcome.files.push(path);
        Ok(())
    }
}

fn dynamic_response(cfg: &ExperimentConfig, out: &mut Output) -> Result<()> {
    if let DensityProfile::Sweep { .. } = cfg.d_profile {
        return Err(invalid(
            "d_profile",
            "dynamic-response needs a constant, sinusoid or ramp profile",
        ));
    }
    let ntf = cfg.ntf.build()?;
    let rate = 2.0 * cfg.circuit.fs;
    let n = cfg.sim.half_cycles();
    let d: Vec<f64> = (0..n)
        .map(|k| cfg.d_profile.value_at(k as f64 / rate))
        .collect();
    let run = modulator_run(&ntf, &d)?;

    let mut w = out.table(
        "dynamic_response.csv",
        &["half_cycle", "time_s", "d", "y", "e"],
    )?;
    for k in 0..n {
        w.write_record([
            k.to_string(),
            num(k as f64 / rate),
            num(d[k]),
            u8::from(run.bits[k]).to_string(),
            num(run.errors[k]),
        ])?;
    }
    w.flush()?;

    let bad = count_error_violations(&run.errors);
    if bad > 0 {
        out.violation(format!(
            "{bad} modulator errors outside [-1, 0] under {}",
            ntf_name(&cfg.ntf)
        ));
    }
    let lo = run.errors.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = run.errors.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    out.summary(format!(
        "{} samples under {}: density {:.5}, error range [{lo:.4}, {hi:.4}]",
        n,
        ntf_name(&cfg.ntf),
        run.density()
    ));
    Ok(())
}

fn ntf_compare(cfg: &ExperimentConfig, out: &mut Output) -> Result<()> {
    let choices = [NtfChoice::FirstOrder, cfg.notch_design()];
    let ntfs: Vec<NtfSpec> = choices.iter().map(|c| c.build()).collect::<Result<_>>()?;
    let p = &cfg.circuit;
    let d = nominal_density(&cfg.d_profile);

    let mut w = out.table(
        "ntf_bode.csv",
        &[
            "freq_ratio",
            "theta_rad",
            "first_mag_db",
            "first_phase_deg",
            "notch_mag_db",
            "notch_phase_deg",
        ],
    )?;
    for i in 1..=1000 {
        let ratio = i as f64 / 1000.0;
        let mut row = vec![num(ratio), num(PI * ratio)];
        for ntf in &ntfs {
            let h = ntf.eval_ratio(ratio);
            row.push(num(20.0 * h.norm().max(f64::MIN_POSITIVE).log10()));
            row.push(num(h.arg().to_degrees()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = out.table("ntf_pole_zero.csv", &["ntf", "kind", "re", "im"])?;
    for (choice, ntf) in choices.iter().zip(&ntfs) {
        for (kind, roots) in [("zero", ntf.zeros()), ("pole", ntf.poles())] {
            for r in roots {
                w.write_record([ntf_name(choice), kind.into(), num(r.re), num(r.im)])?;
            }
        }
    }
    w.flush()?;

    let runs: Vec<_> = ntfs
        .iter()
        .map(|ntf| modulator_run_constant(ntf, d, SPECTRUM_LEN))
        .collect::<Result<_>>()?;
    for (choice, run) in choices.iter().zip(&runs) {
        let bad = count_error_violations(&run.errors);
        if bad > 0 {
            out.violation(format!(
                "{bad} modulator errors outside [-1, 0] under {}",
                ntf_name(choice)
            ));
        }
    }

    let mut w = out.table(
        "ntf_waveform.csv",
        &[
            "half_cycle",
            "time_s",
            "first_bit",
            "notch_bit",
            "first_wave_v",
            "notch_wave_v",
        ],
    )?;
    for k in 0..512 {
        let pol = clock_polarity(k as u64);
        let lvl = |run: &crate::dsm::ModulatorRun| if run.bits[k] { pol * p.vg } else { 0.0 };
        w.write_record([
            k.to_string(),
            num(k as f64 / (2.0 * p.fs)),
            u8::from(runs[0].bits[k]).to_string(),
            u8::from(runs[1].bits[k]).to_string(),
            num(lvl(&runs[0])),
            num(lvl(&runs[1])),
        ])?;
    }
    w.flush()?;

    // amplitude sequence |a - b|, one sample per half cycle
    let amp_specs: Vec<_> = runs
        .iter()
        .map(|r| {
            spectrum(
                &amplitude_sequence(&r.bits, p.vg),
                2.0 * p.fs,
                WindowKind::Rectangular,
            )
        })
        .collect::<Result<_>>()?;
    let mut w = out.table(
        "ntf_spectrum.csv",
        &["freq_hz", "freq_ratio", "first_mag_v", "notch_mag_v"],
    )?;
    for (k, f) in amp_specs[0].freq.iter().enumerate() {
        w.write_record([
            num(*f),
            num(f / p.fs),
            num(amp_specs[0].magnitude[k]),
            num(amp_specs[1].magnitude[k]),
        ])?;
    }
    w.flush()?;

    // bridge wave a - b around the switching frequency
    let oversample = 8;
    let cycles = 4096;
    let wave_specs: Vec<_> = runs
        .iter()
        .map(|r| {
            let wave = synthesize_bridge_wave(&GateSchedule {
                bits: r.bits[..2 * cycles].to_vec(),
                switching_frequency: p.fs,
                dc_voltage: p.vg,
                oversample,
            })?;
            spectrum_cycles(
                &wave.samples,
                wave.sample_rate,
                p.fs,
                cycles,
                WindowKind::FlatTop,
            )
        })
        .collect::<Result<_>>()?;
    let mut w = out.table(
        "ntf_wave_spectrum.csv",
        &["freq_hz", "freq_ratio", "first_mag_v", "notch_mag_v"],
    )?;
    for (k, f) in wave_specs[0].freq.iter().enumerate() {
        if *f > 2.0 * p.fs {
            break;
        }
        w.write_record([
            num(*f),
            num(f / p.fs),
            num(wave_specs[0].magnitude[k]),
            num(wave_specs[1].magnitude[k]),
        ])?;
    }
    w.flush()?;

    let depth = notch_depth(&amp_specs[0], &amp_specs[1], (0.06 * p.fs, 0.09 * p.fs))?;
    let f0 = wave_specs[0].line_magnitude(p.fs)?;
    let f1 = wave_specs[1].line_magnitude(p.fs)?;
    out.summary(format!(
        "d = {d}: band [0.06, 0.09] w_s power {depth:.1} dB lower under {}; fundamental {f0:.3} V vs {f1:.3} V",
        ntf_name(&choices[1])
    ));
    Ok(())
}

fn sweep_points(profile: &DensityProfile, default: (f64, f64, f64)) -> Vec<f64> {
    match *profile {
        DensityProfile::Sweep { start, stop, step } => grid(start, stop, step),
        _ => grid(default.0, default.1, default.2),
    }
}

fn ripple_sweep(cfg: &ExperimentConfig, out: &mut Output) -> Result<()> {
    let choices = [NtfChoice::FirstOrder, cfg.notch_design()];
    let ntfs: Vec<NtfSpec> = choices.iter().map(|c| c.build()).collect::<Result<_>>()?;
    let ds = sweep_points(&cfg.d_profile, (0.203, 1.0, 0.02));
    let rows = ripple_grid(&cfg.circuit, &ntfs, cfg.side, &ds, &cfg.sim)?;

    let mut w = out.table(
        "ripple_sweep.csv",
        &[
            "ntf",
            "notch_ratio",
            "side",
            "d",
            "ripple_i1_pct",
            "ripple_i2_pct",
            "env_mean_i1_a",
            "env_mean_i2_a",
        ],
    )?;
    for (choice, points) in choices.iter().zip(&rows) {
        for pt in points {
            w.write_record([
                choice.label().to_string(),
                num(choice.notch_ratio()),
                cfg.side.name().to_string(),
                num(pt.d),
                num(pt.i1.ripple_percent),
                num(pt.i2.ripple_percent),
                num(pt.i1.env_mean),
                num(pt.i2.env_mean),
            ])?;
        }
        let worst = points.iter().fold((0.0, f64::NAN), |acc, pt| {
            if pt.controlled() > acc.0 {
                (pt.controlled(), pt.d)
            } else {
                acc
            }
        });
        out.summary(format!(
            "{}: max {} current ripple {:.1}% at d = {}",
            ntf_name(choice),
            cfg.side.name(),
            worst.0,
            worst.1
        ));
        let bad: usize = points.iter().map(|p| p.error_violations).sum();
        if bad > 0 {
            out.violation(format!(
                "{bad} modulator errors outside [-1, 0] under {}",
                ntf_name(choice)
            ));
        }
    }
    w.flush()?;
    Ok(())
}

fn deviation_study(cfg: &ExperimentConfig, out: &mut Output) -> Result<()> {
    let mut ds = sweep_points(&cfg.d_profile, (0.9, 1.0, 0.01));
    if !ds.iter().any(|d| (d - SPECTRUM_DENSITY).abs() < 1e-9) {
        ds.push(SPECTRUM_DENSITY);
        ds.sort_by(f64::total_cmp);
    }
    let ntfs: Vec<NtfSpec> = DEVIATION_RATIOS
        .iter()
        .map(|r| crate::dsm::ntf_notch(*r, crate::dsm::DEFAULT_POLE_RADIUS))
        .collect::<Result<_>>()?;
    let rows = ripple_grid(&cfg.circuit, &ntfs, Side::Secondary, &ds, &cfg.sim)?;

    let mut w = out.table(
        "deviation_study.csv",
        &["notch_ratio", "d2", "ripple_i1_pct", "ripple_i2_pct"],
    )?;
    for (ratio, points) in DEVIATION_RATIOS.iter().zip(&rows) {
        for pt in points {
            w.write_record([
                num(*ratio),
                num(pt.d),
                num(pt.i1.ripple_percent),
                num(pt.i2.ripple_percent),
            ])?;
        }
    }
    w.flush()?;

    let mut w = out.table(
        "deviation_summary.csv",
        &[
            "notch_ratio",
            "ripple_i2_at_0963_pct",
            "max_ripple_i2_pct",
            "max_at_d2",
        ],
    )?;
    for (ratio, points) in DEVIATION_RATIOS.iter().zip(&rows) {
        let at = points
            .iter()
            .find(|p| (p.d - SPECTRUM_DENSITY).abs() < 1e-9)
            .map(|p| p.controlled())
            .unwrap_or(f64::NAN);
        let worst = points.iter().fold((0.0, f64::NAN), |acc, pt| {
            if pt.controlled() > acc.0 {
                (pt.controlled(), pt.d)
            } else {
                acc
            }
        });
        w.write_record([num(*ratio), num(at), num(worst.0), num(worst.1)])?;
        out.summary(format!(
            "notch at {ratio} w_s: ripple {at:.1}% at d2 = {SPECTRUM_DENSITY}, max {:.1}% at d2 = {}",
            worst.0, worst.1
        ));
        let bad: usize = points.iter().map(|p| p.error_violations).sum();
        if bad > 0 {
            out.violation(format!(
                "{bad} modulator errors outside [-1, 0] with notch at {ratio}"
            ));
        }
    }
    w.flush()?;
    Ok(())
}

/// Circuit and profile of the sinusoid tracking experiment.
pub fn tracking_setup(cfg: &ExperimentConfig) -> (CircuitParams, DensityProfile) {
    let params = CircuitParams {
        vg: 15.0,
        vo: 15.0,
        ..cfg.circuit
    };
    let profile = match cfg.d_profile {
        p @ DensityProfile::Sinusoid { .. } => p,
        _ => DensityProfile::Sinusoid {
            offset: 0.5,
            amplitude: 0.5,
            frequency: 500.0,
        },
    };
    (params, profile)
}

fn sinusoid_tracking(cfg: &ExperimentConfig, out: &mut Output) -> Result<()> {
    let (params, profile) = tracking_setup(cfg);
    let choices = [NtfChoice::FirstOrder, cfg.notch_design()];
    let runs: Vec<TrackingRun> = choices
        .par_iter()
        .map(|c| tracking_run(&params, &c.build()?, profile, 4, &cfg.sim))
        .collect::<Result<_>>()?;

    let mut w = out.table(
        "sinusoid_tracking.csv",
        &[
            "ntf",
            "cycle",
            "time_s",
            "d2",
            "env_i1_a",
            "env_i2_a",
            "predicted_i1_a",
            "predicted_i2_a",
        ],
    )?;
    for (choice, run) in choices.iter().zip(&runs) {
        for k in 0..run.cycle.len() {
            w.write_record([
                choice.label().to_string(),
                run.cycle[k].to_string(),
                num(run.cycle[k] as f64 / params.fs),
                num(run.d2[k]),
                num(run.env_i1[k]),
                num(run.env_i2[k]),
                num(run.predicted_i1[k]),
                num(run.predicted_i2[k]),
            ])?;
        }
    }
    w.flush()?;

    let mut w = out.table(
        "sinusoid_tracking_summary.csv",
        &[
            "ntf",
            "corr_i1",
            "corr_i2",
            "rms_excursion_i1_a",
            "rms_excursion_i2_a",
        ],
    )?;
    for (choice, run) in choices.iter().zip(&runs) {
        w.write_record([
            ntf_name(choice),
            num(run.correlation_i1()),
            num(run.correlation_i2()),
            num(run.excursion_i1()),
            num(run.excursion_i2()),
        ])?;
        out.summary(format!(
            "{}: envelope/d2 correlation i1 {:.3} i2 {:.3}, rms excursion i1 {:.3} A i2 {:.3} A",
            ntf_name(choice),
            run.correlation_i1(),
            run.correlation_i2(),
            run.excursion_i1(),
            run.excursion_i2()
        ));
        if run.error_violations > 0 {
            out.violation(format!(
                "{} modulator errors outside [-1, 0] under {}",
                run.error_violations,
                ntf_name(choice)
            ));
        }
    }
    w.flush()?;
    Ok(())
}

fn gssa_bode_experiment(cfg: &ExperimentConfig, out: &mut Output) -> Result<()> {
    let p = &cfg.circuit;
    let d = nominal_density(&cfg.d_profile);
    let (d1, d2) = match cfg.side {
        Side::Primary => (d, 1.0),
        Side::Secondary => (1.0, d),
    };
    let model = build_gssa(p, d1, d2)?;
    if !model.is_stable() {
        out.violation(format!("GSSA model at d1 = {d1}, d2 = {d2} is unstable"));
    }
    let ws = p.omega_s();
    let freqs = linear_grid(0.002 * ws, 0.3 * ws, 600);
    let pairs = [
        (Side::Primary, CurrentOutput::I1),
        (Side::Primary, CurrentOutput::I2),
        (Side::Secondary, CurrentOutput::I1),
        (Side::Secondary, CurrentOutput::I2),
    ];

    let mut w = out.table(
        "gssa_bode.csv",
        &[
            "input_side",
            "output",
            "freq_rad_s",
            "freq_ratio",
            "mag_db",
            "phase_deg",
        ],
    )?;
    for (side, cur) in pairs {
        let bode = gssa_bode(&model, side, cur, &freqs)?;
        for k in 0..freqs.len() {
            w.write_record([
                side.name(),
                cur.name(),
                &num(bode.freq[k]),
                &num(bode.freq[k] / ws),
                &num(bode.magnitude_db[k]),
                &num(bode.phase_deg[k]),
            ])?;
        }
    }
    w.flush()?;

    let mut w = out.table(
        "gssa_peaks.csv",
        &[
            "input_side",
            "output",
            "omega0_rad_s",
            "omega0_ratio",
            "peak_gain_db",
        ],
    )?;
    let search = peak_search_grid(p, 400);
    for (side, cur) in pairs {
        let bode = gssa_bode(&model, side, cur, &search)?;
        match find_peak(&bode) {
            Ok(pk) => {
                w.write_record([
                    side.name(),
                    cur.name(),
                    &num(pk.omega0),
                    &num(pk.omega0 / ws),
                    &num(pk.peak_gain_db),
                ])?;
                out.summary(format!(
                    "{} -> {}: peak {:.2} dB at {:.4} w_s",
                    side.name(),
                    cur.name(),
                    pk.peak_gain_db,
                    pk.omega0 / ws
                ));
            }
            Err(crate::Error::NoInteriorPeak) => {
                w.write_record([side.name(), cur.name(), "", "", ""])?;
                out.summary(format!(
                    "{} -> {}: no interior peak",
                    side.name(),
                    cur.name()
                ));
            }
            Err(e) => return Err(e),
        }
    }
    w.flush()?;

    // amplitude-sequence spectra at the reference density next to the
    // controlled-side magnitude response
    let choices = [NtfChoice::FirstOrder, cfg.notch_design()];
    let specs: Vec<_> = choices
        .iter()
        .map(|c| {
            let run = modulator_run_constant(&c.build()?, SPECTRUM_DENSITY, SPECTRUM_LEN)?;
            let dc = match cfg.side {
                Side::Primary => p.vg,
                Side::Secondary => p.vo,
            };
            spectrum(
                &amplitude_sequence(&run.bits, dc),
                2.0 * p.fs,
                WindowKind::Rectangular,
            )
        })
        .collect::<Result<_>>()?;
    let own = match cfg.side {
        Side::Primary => CurrentOutput::I1,
        Side::Secondary => CurrentOutput::I2,
    };
    let mut w = out.table(
        "gssa_overlay_spectrum.csv",
        &[
            "freq_hz",
            "freq_ratio",
            "first_mag_v",
            "notch_mag_v",
            "gssa_mag_db",
        ],
    )?;
    for (k, f) in specs[0].freq.iter().enumerate() {
        if *f > 0.3 * p.fs {
            break;
        }
        let gain = if k == 0 {
            model.transfer(cfg.side, own, 1e-9 * ws)?
        } else {
            model.transfer(cfg.side, own, 2.0 * PI * f)?
        };
        w.write_record([
            num(*f),
            num(f / p.fs),
            num(specs[0].magnitude[k]),
            num(specs[1].magnitude[k]),
            num(20.0 * gain.norm().log10()),
        ])?;
    }
    w.flush()?;
    Ok(())
}
