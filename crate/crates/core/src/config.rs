//! Experiment configuration: a flat `key = value` text format with SI
//! prefixes, defaulting to the 220 W prototype.
//!
//! ```text
//! # coils
//! L1 = 31.7uH
//! k  = 0.152
//! ntf = notch
//! notch_ratio = 0.076
//! side = secondary
//! d_profile = sweep 0.9 1.0 0.01
//! ```

use std::f64::consts::PI;
use std::path::Path;

use crate::dsm::{ntf_first_order, ntf_notch, NtfSpec, DEFAULT_POLE_RADIUS};
use crate::error::{Error, Result};
use crate::gssa::Side;
use crate::plant::{CircuitParams, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NtfChoice {
    FirstOrder,
    Notch { ratio: f64, pole_radius: f64 },
}

impl NtfChoice {
    pub fn build(&self) -> Result<NtfSpec> {
        match *self {
            NtfChoice::FirstOrder => Ok(ntf_first_order()),
            NtfChoice::Notch { ratio, pole_radius } => ntf_notch(ratio, pole_radius),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            NtfChoice::FirstOrder => "first",
            NtfChoice::Notch { .. } => "notch",
        }
    }

    /// Notch ratio, or 0 for the first-order NTF.
    pub fn notch_ratio(&self) -> f64 {
        match self {
            NtfChoice::FirstOrder => 0.0,
            NtfChoice::Notch { ratio, .. } => *ratio,
        }
    }
}

/// Pulse density as a function of time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityProfile {
    Constant(f64),
    /// Operating points for sweep experiments; evaluates to `start` in time.
    Sweep {
        start: f64,
        stop: f64,
        step: f64,
    },
    /// `offset + amplitude * sin(2 pi frequency t)`
    Sinusoid {
        offset: f64,
        amplitude: f64,
        frequency: f64,
    },
    /// Linear from `start` to `stop` over `duration` seconds, then held.
    Ramp {
        start: f64,
        stop: f64,
        duration: f64,
    },
}

impl DensityProfile {
    pub fn value_at(&self, t: f64) -> f64 {
        match *self {
            DensityProfile::Constant(d) => d,
            DensityProfile::Sweep { start, .. } => start,
            DensityProfile::Sinusoid {
                offset,
                amplitude,
                frequency,
            } => offset + amplitude * (2.0 * PI * frequency * t).sin(),
            DensityProfile::Ramp {
                start,
                stop,
                duration,
            } => {
                let x = (t / duration).clamp(0.0, 1.0);
                start + (stop - start) * x
            }
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let in_unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(format!("{name} = {v} must lie in [0, 1]"))
            }
        };
        match *self {
            DensityProfile::Constant(d) => in_unit("density", d),
            DensityProfile::Sweep { start, stop, step } => {
                in_unit("sweep start", start)?;
                in_unit("sweep stop", stop)?;
                if !(step > 0.0) || stop < start {
                    return Err("sweep needs start <= stop and a positive step".into());
                }
                Ok(())
            }
            DensityProfile::Sinusoid {
                offset,
                amplitude,
                frequency,
            } => {
                in_unit("sinusoid minimum", offset - amplitude.abs())?;
                in_unit("sinusoid maximum", offset + amplitude.abs())?;
                if !(frequency > 0.0) {
                    return Err("sinusoid frequency must be positive".into());
                }
                Ok(())
            }
            DensityProfile::Ramp {
                start,
                stop,
                duration,
            } => {
                in_unit("ramp start", start)?;
                in_unit("ramp stop", stop)?;
                if !(duration > 0.0) {
                    return Err("ramp duration must be positive".into());
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub circuit: CircuitParams,
    pub ntf: NtfChoice,
    pub side: Side,
    pub d_profile: DensityProfile,
    pub sim: SimConfig,
    /// Reserved; every pipeline is deterministic.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            circuit: CircuitParams::default(),
            ntf: NtfChoice::FirstOrder,
            side: Side::Primary,
            d_profile: DensityProfile::Constant(0.963),
            sim: SimConfig::default(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// The notch NTF used where an experiment compares against the
    /// first-order one: the configured notch, or a notch at `k/2`.
    pub fn notch_design(&self) -> NtfChoice {
        match self.ntf {
            NtfChoice::Notch { .. } => self.ntf,
            NtfChoice::FirstOrder => NtfChoice::Notch {
                ratio: 0.5 * self.circuit.k,
                pole_radius: DEFAULT_POLE_RADIUS,
            },
        }
    }

    /// Applies command-line overrides. A notch ratio alone selects the
    /// notch NTF.
    pub fn apply_overrides(
        &mut self,
        ntf: Option<&str>,
        notch_ratio: Option<f64>,
        side: Option<Side>,
    ) -> Result<()> {
        let cli = |reason: String| Error::Config {
            file: "<command line>".into(),
            line: 0,
            reason,
        };
        let pole_radius = match self.ntf {
            NtfChoice::Notch { pole_radius, .. } => pole_radius,
            NtfChoice::FirstOrder => DEFAULT_POLE_RADIUS,
        };
        match (ntf, notch_ratio) {
            (Some("first"), Some(_)) => {
                return Err(cli("--notch-ratio only applies to --ntf notch".into()))
            }
            (Some("first"), None) => self.ntf = NtfChoice::FirstOrder,
            (Some("notch") | None, Some(ratio)) => {
                self.ntf = NtfChoice::Notch { ratio, pole_radius }
            }
            (Some("notch"), None) => {
                if let NtfChoice::FirstOrder = self.ntf {
                    return Err(cli("--ntf notch needs a notch ratio".into()));
                }
            }
            (Some(other), _) => return Err(cli(format!("unknown NTF `{other}` (first|notch)"))),
            (None, None) => {}
        }
        if let Some(side) = side {
            self.side = side;
        }
        self.ntf.build().map_err(|e| cli(e.to_string()))?;
        Ok(())
    }
}

/// Parses a number with an optional SI prefix and unit, e.g. `31.7uH`,
/// `8.87n`, `105mOhm`, `300kHz`, `1e-3`.
pub fn parse_si(text: &str) -> Option<f64> {
    let t = text.trim();
    if let Ok(v) = t.parse::<f64>() {
        return Some(v);
    }
    const UNITS: [&str; 9] = ["Ohm", "ohm", "Hz", "Ω", "H", "F", "V", "A", "s"];
    let mut body = t;
    for u in UNITS {
        if let Some(stripped) = t.strip_suffix(u) {
            body = stripped.trim_end();
            break;
        }
    }
    if let Ok(v) = body.parse::<f64>() {
        return Some(v);
    }
    let last = body.chars().last()?;
    let scale = match last {
        'p' => 1e-12,
        'n' => 1e-9,
        'u' | 'µ' | 'μ' => 1e-6,
        'm' => 1e-3,
        'k' => 1e3,
        'M' => 1e6,
        'G' => 1e9,
        _ => return None,
    };
    let num = &body[..body.len() - last.len_utf8()];
    num.trim().parse::<f64>().ok().map(|v| v * scale)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, &path.display().to_string())
}

pub fn parse_config(text: &str, file: &str) -> Result<ExperimentConfig> {
    let err = |line: usize, reason: String| Error::Config {
        file: file.to_string(),
        line,
        reason,
    };
    let mut cfg = ExperimentConfig::default();
    let mut ntf_kind: Option<(usize, String)> = None;
    let mut notch_ratio: Option<(usize, f64)> = None;
    let mut pole_radius: Option<(usize, f64)> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(line_no, format!("expected `key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let number = || {
            parse_si(value).ok_or_else(|| {
                err(
                    line_no,
                    format!("`{key}`: cannot parse `{value}` as a number"),
                )
            })
        };
        let integer = || {
            value.parse::<usize>().map_err(|_| {
                err(
                    line_no,
                    format!("`{key}`: expected a non-negative integer, got `{value}`"),
                )
            })
        };
        let c = &mut cfg.circuit;
        match key {
            "L1" => c.l1 = number()?,
            "L2" => c.l2 = number()?,
            "C1" => c.c1 = number()?,
            "C2" => c.c2 = number()?,
            "R1" => c.r1 = number()?,
            "R2" => c.r2 = number()?,
            "k" => c.k = number()?,
            "Vg" => c.vg = number()?,
            "Vo" => c.vo = number()?,
            "fs" => c.fs = number()?,
            "ntf" => ntf_kind = Some((line_no, value.to_string())),
            "notch_ratio" => notch_ratio = Some((line_no, number()?)),
            "pole_radius" => pole_radius = Some((line_no, number()?)),
            "side" => {
                cfg.side = match value {
                    "primary" => Side::Primary,
                    "secondary" => Side::Secondary,
                    _ => {
                        return Err(err(
                            line_no,
                            format!("`side` must be primary or secondary, got `{value}`"),
                        ))
                    }
                }
            }
            "d_profile" => cfg.d_profile = parse_profile(value).map_err(|r| err(line_no, r))?,
            "steps_per_period" => cfg.sim.steps_per_period = integer()?,
            "duration_periods" => cfg.sim.duration_periods = integer()?,
            "transient_discard_periods" => cfg.sim.transient_discard_periods = integer()?,
            "blanking_fraction" => cfg.sim.blanking_fraction = number()?,
            "seed" => {
                cfg.seed = value.parse().map_err(|_| {
                    err(
                        line_no,
                        format!("`seed`: expected an integer, got `{value}`"),
                    )
                })?
            }
            _ => return Err(err(line_no, format!("unknown key `{key}`"))),
        }
    }

    cfg.ntf = match ntf_kind.as_ref().map(|(l, v)| (*l, v.as_str())) {
        None | Some((_, "first")) => {
            if let Some((line, _)) = notch_ratio {
                return Err(err(line, "`notch_ratio` requires `ntf = notch`".into()));
            }
            if let Some((line, _)) = pole_radius {
                return Err(err(line, "`pole_radius` requires `ntf = notch`".into()));
            }
            NtfChoice::FirstOrder
        }
        Some((line, "notch")) => {
            let (_, ratio) = notch_ratio
                .ok_or_else(|| err(line, "`ntf = notch` requires `notch_ratio`".into()))?;
            NtfChoice::Notch {
                ratio,
                pole_radius: pole_radius.map(|(_, r)| r).unwrap_or(DEFAULT_POLE_RADIUS),
            }
        }
        Some((line, other)) => {
            return Err(err(
                line,
                format!("`ntf` must be first or notch, got `{other}`"),
            ))
        }
    };

    cfg.circuit.validate().map_err(|e| err(0, e.to_string()))?;
    cfg.sim.validate().map_err(|e| err(0, e.to_string()))?;
    if !(0.0..0.5).contains(&cfg.sim.blanking_fraction) {
        return Err(err(0, "`blanking_fraction` must lie in [0, 0.5)".into()));
    }
    cfg.ntf.build().map_err(|e| err(0, e.to_string()))?;
    cfg.d_profile.validate().map_err(|r| err(0, r))?;
    Ok(cfg)
}

fn parse_profile(value: &str) -> std::result::Result<DensityProfile, String> {
    let mut parts = value.split_whitespace();
    let kind = parts.next().ok_or("empty `d_profile`")?;
    let nums: Vec<f64> = parts
        .map(|p| parse_si(p).ok_or_else(|| format!("cannot parse `{p}` in `d_profile`")))
        .collect::<std::result::Result<_, _>>()?;
    let want = |n: usize| {
        if nums.len() == n {
            Ok(())
        } else {
            Err(format!(
                "`d_profile = {kind}` takes {n} numbers, got {}",
                nums.len()
            ))
        }
    };
    let profile = match kind {
        "constant" => {
            want(1)?;
            DensityProfile::Constant(nums[0])
        }
        "sweep" => {
            want(3)?;
            DensityProfile::Sweep {
                start: nums[0],
                stop: nums[1],
                step: nums[2],
            }
        }
        "sinusoid" => {
            want(3)?;
            DensityProfile::Sinusoid {
                offset: nums[0],
                amplitude: nums[1],
                frequency: nums[2],
            }
        }
        "ramp" => {
            want(3)?;
            DensityProfile::Ramp {
                start: nums[0],
                stop: nums[1],
                duration: nums[2],
            }
        }
        _ => {
            return Err(format!(
                "unknown `d_profile` kind `{kind}` (constant|sweep|sinusoid|ramp)"
            ))
        }
    };
    profile.validate()?;
    Ok(profile)
}
