//! Closed-form inverse of the alignment map.
//!
//! Given reference alignment angles `(σ*, δ*)`, an externally commanded extra
//! short-time `s_add` and the voltage gain `G`, find commutation parameters
//! `(d, s, β)` for which the forward model reproduces the references. The phase
//! shift is fixed by `β = σ* + δ*`; the remaining pair must satisfy the
//! inversion condition
//!
//! ```text
//! G cos(δ* + s) + G cos δ* + cos(d − σ*) − cos σ* = 0
//! ```
//!
//! which is under-determined. The smallest short-time is selected:
//!
//! * buck (`cos σ* ≥ G cos δ*`): `s = s_add`, `d = acos(cos σ* − G cos(δ* + s) − G cos δ*) + σ*`
//! * boost: `s_min = acos(2 cos σ*/G − cos δ*) − δ*`, `s = s_min + s_add`, `d` from the
//!   same expression.
//!
//! The result is accepted only if the in-phase coefficient `A` is non-negative,
//! otherwise `atan2` would land in the wrong half plane.

use std::f64::consts::PI;

use thiserror::Error;

use crate::model::{harmonic_coefficients, SwitchingParams};

/// `acos` arguments this far outside `[−1, 1]` are clamped instead of rejected.
pub const ACOS_TOLERANCE: f64 = 1e-9;
/// Slack allowed on `d ∈ [0, π]` and `s ∈ [0, π]` before clamping.
pub const RANGE_TOLERANCE: f64 = 1e-9;
/// Smallest admissible in-phase coefficient (factor-4 normalization).
pub const IN_PHASE_TOLERANCE: f64 = 1e-12;
/// `|G − 1|` below which the linearized map is undefined.
pub const UNITY_GAIN_BAND: f64 = 1e-6;
pub const DEFAULT_SIGMA_MIN: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InversionError {
    #[error("references not achievable at G = {gain}: {reason}")]
    Infeasible { gain: f64, reason: InfeasibleReason },
    #[error("linearized map is not defined at G = 1 (got G = {0})")]
    UndefinedAtUnity(f64),
    #[error("invalid reference: {0}")]
    InvalidReference(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfeasibleReason {
    /// `acos` argument for the on-time left `[−1, 1]`.
    DutyDomain,
    /// `acos` argument for the minimal short-time left `[−1, 1]`.
    ShortDomain,
    /// Computed on-time outside `[0, π]`.
    DutyRange,
    /// Computed minimal short-time outside `[0, π]`.
    ShortRange,
    /// `A < 0`: the tank current would cross zero in the wrong half period.
    NegativeInPhase,
}

impl std::fmt::Display for InfeasibleReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let text = match self {
            Self::DutyDomain => "on-time acos argument outside [-1, 1]",
            Self::ShortDomain => "short-time acos argument outside [-1, 1]",
            Self::DutyRange => "on-time outside [0, pi]",
            Self::ShortRange => "short-time outside [0, pi]",
            Self::NegativeInPhase => "negative in-phase coefficient A",
        };
        f.write_str(text)
    }
}

/// Setpoints for the alignment loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlReferences {
    pub sigma: f64,
    pub delta: f64,
    pub s_add: f64,
    /// Lower bound on σ used by the fully-driven maps (`G* = cos σ_min`).
    pub sigma_min: f64,
}

impl ControlReferences {
    pub fn new(sigma: f64, delta: f64) -> Self {
        Self {
            sigma,
            delta,
            s_add: 0.0,
            sigma_min: DEFAULT_SIGMA_MIN,
        }
    }

    pub fn with_s_add(self, s_add: f64) -> Self {
        Self { s_add, ..self }
    }

    pub fn with_sigma_min(self, sigma_min: f64) -> Self {
        Self { sigma_min, ..self }
    }

    pub fn g_star(&self) -> f64 {
        self.sigma_min.cos()
    }

    pub fn validate(&self) -> Result<(), InversionError> {
        let half = PI / 2.0;
        let check = |name: &str, v: f64, lo: f64, hi: f64| {
            if v.is_finite() && v >= lo && v <= hi {
                Ok(())
            } else {
                Err(InversionError::InvalidReference(format!(
                    "{name} = {v} outside [{lo}, {hi}]"
                )))
            }
        };
        check("sigma", self.sigma, -half, half)?;
        check("delta", self.delta, -half, half)?;
        check("s_add", self.s_add, 0.0, PI)?;
        if !(self.sigma_min.is_finite() && self.sigma_min >= 0.0 && self.sigma_min < half) {
            return Err(InversionError::InvalidReference(format!(
                "sigma_min = {} outside [0, pi/2)",
                self.sigma_min
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Buck,
    Boost,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionResult {
    pub d: f64,
    pub s: f64,
    pub beta: f64,
    pub mode: Mode,
    /// Short-time needed without `s_add`; zero in buck mode.
    pub s_min: f64,
    pub feasible: bool,
    pub infeasibility: Option<InfeasibleReason>,
}

impl InversionResult {
    pub fn params(&self, omega: f64) -> SwitchingParams {
        SwitchingParams::new(self.d, self.s, self.beta, omega)
    }

    /// True when the tank current collapses at this point (σ undefined).
    pub fn is_collapsed(&self, gain: f64) -> bool {
        self.feasible && harmonic_coefficients(&self.params(1.0), gain).is_degenerate()
    }
}

pub(crate) fn clamped_acos(x: f64) -> Option<f64> {
    if x.is_nan() || !(-1.0 - ACOS_TOLERANCE..=1.0 + ACOS_TOLERANCE).contains(&x) {
        None
    } else {
        Some(x.clamp(-1.0, 1.0).acos())
    }
}

fn within_range(v: f64) -> bool {
    (-RANGE_TOLERANCE..=PI + RANGE_TOLERANCE).contains(&v)
}

/// Buck mode when `cos σ* ≥ G cos δ*`.
pub fn select_mode(sigma: f64, delta: f64, gain: f64) -> Mode {
    if sigma.cos() >= gain * delta.cos() {
        Mode::Buck
    } else {
        Mode::Boost
    }
}

/// Residual of the inversion condition for a candidate `(d, s)`.
pub fn inversion_residual(d: f64, s: f64, sigma: f64, delta: f64, gain: f64) -> f64 {
    gain * (delta + s).cos() + gain * delta.cos() + (d - sigma).cos() - sigma.cos()
}

/// Total version of the inverse map: always returns a result, with
/// `feasible = false` (and the reason) when the references cannot be met.
pub fn invert(refs: &ControlReferences, gain: f64) -> InversionResult {
    let ControlReferences {
        sigma,
        delta,
        s_add,
        ..
    } = *refs;
    let beta = sigma + delta;
    let mode = select_mode(sigma, delta, gain);
    let mut out = InversionResult {
        d: f64::NAN,
        s: f64::NAN,
        beta,
        mode,
        s_min: 0.0,
        feasible: false,
        infeasibility: None,
    };
    let fail = |mut out: InversionResult, reason| {
        out.infeasibility = Some(reason);
        out
    };

    let (cos_sigma, cos_delta) = (sigma.cos(), delta.cos());
    let s_min = match mode {
        Mode::Buck => 0.0,
        Mode::Boost => match clamped_acos(2.0 * cos_sigma / gain - cos_delta) {
            Some(a) => a - delta,
            None => return fail(out, InfeasibleReason::ShortDomain),
        },
    };
    if !within_range(s_min) {
        out.s_min = s_min;
        return fail(out, InfeasibleReason::ShortRange);
    }
    let s_min = s_min.clamp(0.0, PI);
    // The total short-time saturates at a fully shorted secondary.
    let s = (s_min + s_add).min(PI);
    out.s_min = s_min;
    out.s = s;

    let d = if mode == Mode::Boost && s_add == 0.0 {
        // Here the argument is exactly −cos σ*, where acos is ill-conditioned.
        PI + sigma - sigma.abs()
    } else {
        let x = cos_sigma - gain * (delta + s).cos() - gain * cos_delta;
        match clamped_acos(x) {
            Some(a) => a + sigma,
            None => return fail(out, InfeasibleReason::DutyDomain),
        }
    };
    if !within_range(d) {
        out.d = d;
        return fail(out, InfeasibleReason::DutyRange);
    }
    out.d = d.clamp(0.0, PI);

    let a = harmonic_coefficients(&out.params(1.0), gain).a;
    if a < -IN_PHASE_TOLERANCE {
        return fail(out, InfeasibleReason::NegativeInPhase);
    }
    out.feasible = true;
    out
}

/// Inverse map with validation; infeasible references are an error.
pub fn invert_alignment(
    refs: &ControlReferences,
    gain: f64,
) -> Result<InversionResult, InversionError> {
    refs.validate()?;
    check_gain(gain)?;
    let r = invert(refs, gain);
    match r.infeasibility {
        None => Ok(r),
        Some(reason) => Err(InversionError::Infeasible { gain, reason }),
    }
}

fn check_gain(gain: f64) -> Result<(), InversionError> {
    if gain.is_finite() && gain >= 0.0 {
        Ok(())
    } else {
        Err(InversionError::InvalidReference(format!(
            "gain must be >= 0, got {gain}"
        )))
    }
}

/// Merge `(d, s)` into the single duty variable: `q = d` in buck, `q = s + π` in boost.
pub fn q_combine(d: f64, s: f64, mode: Mode) -> f64 {
    match mode {
        Mode::Buck => d,
        Mode::Boost => s + PI,
    }
}

/// Inverse of [`q_combine`]: `q ≤ π` gives `(q, s_add)`, otherwise `(π, q − π)`.
pub fn q_split(q: f64, s_add: f64) -> (f64, f64) {
    if q <= PI {
        (q, s_add)
    } else {
        (PI, q - PI)
    }
}

/// Per-reference constants of the `q` map; only the buck branch depends on `s_add`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct QMap {
    sigma: f64,
    delta: f64,
    gain: f64,
    cos_sigma: f64,
    cos_delta: f64,
    pub(crate) mode: Mode,
    /// `acos(cos δ* − (2/G) cos σ*)`, boost only.
    boost_acos: f64,
}

impl QMap {
    pub(crate) fn new(sigma: f64, delta: f64, gain: f64) -> Result<Self, InversionError> {
        let (cos_sigma, cos_delta) = (sigma.cos(), delta.cos());
        let mode = select_mode(sigma, delta, gain);
        let boost_acos = match mode {
            Mode::Buck => f64::NAN,
            Mode::Boost => clamped_acos(cos_delta - 2.0 / gain * cos_sigma).ok_or(
                InversionError::Infeasible {
                    gain,
                    reason: InfeasibleReason::ShortDomain,
                },
            )?,
        };
        Ok(Self {
            sigma,
            delta,
            gain,
            cos_sigma,
            cos_delta,
            mode,
            boost_acos,
        })
    }

    /// `q` for the given `s_add`, clamped to `[0, 2π]`.
    pub(crate) fn q(&self, s_add: f64) -> Result<f64, InversionError> {
        let infeasible = |reason| InversionError::Infeasible {
            gain: self.gain,
            reason,
        };
        match self.mode {
            Mode::Buck => {
                let x = self.cos_sigma
                    - self.gain * self.cos_delta
                    - self.gain * (self.delta + s_add).cos();
                let q =
                    clamped_acos(x).ok_or(infeasible(InfeasibleReason::DutyDomain))? + self.sigma;
                if !within_range(q) {
                    return Err(infeasible(InfeasibleReason::DutyRange));
                }
                Ok(q.clamp(0.0, PI))
            }
            Mode::Boost => {
                let q = 2.0 * PI - self.boost_acos - self.delta + s_add;
                if q < PI - RANGE_TOLERANCE {
                    return Err(infeasible(InfeasibleReason::ShortRange));
                }
                Ok(q.clamp(PI, 2.0 * PI))
            }
        }
    }
}

/// Square form of the inverse map: the combined duty variable `q` and the mode.
pub fn q_from_references(
    refs: &ControlReferences,
    gain: f64,
) -> Result<(f64, Mode), InversionError> {
    refs.validate()?;
    check_gain(gain)?;
    let map = QMap::new(refs.sigma, refs.delta, gain)?;
    let q = map.q(refs.s_add)?;
    let (d, s) = q_split(q, refs.s_add);
    let beta = refs.sigma + refs.delta;
    let a = harmonic_coefficients(&SwitchingParams::new(d, s.min(PI), beta, 1.0), gain).a;
    if a < -IN_PHASE_TOLERANCE {
        return Err(InversionError::Infeasible {
            gain,
            reason: InfeasibleReason::NegativeInPhase,
        });
    }
    Ok((q, map.mode))
}

/// Fully driven primary (`d = π`) with `δ = 0`: returns `(β, s)` stitched from
/// the buck law `β = acos G` and the boost law `β = σ_min`,
/// `s = acos(2 cos σ_min / G − 1)`.
pub fn fully_driven_maps(gain: f64, g_star: f64) -> (f64, f64) {
    let beta = gain.min(g_star).clamp(-1.0, 1.0).acos();
    let s = (2.0 * g_star / gain.max(g_star) - 1.0)
        .clamp(-1.0, 1.0)
        .acos();
    (beta, s)
}

/// Aligned waveforms (`β = 0`, `δ = 0`): `d = acos(1 − 2G)` up to `G = 1`,
/// then `d = π`, `s = acos(2/G − 1)`.
pub fn beta_zero_maps(gain: f64) -> (f64, f64) {
    if gain <= 1.0 {
        ((1.0 - 2.0 * gain).clamp(-1.0, 1.0).acos(), 0.0)
    } else {
        (PI, (2.0 / gain - 1.0).clamp(-1.0, 1.0).acos())
    }
}

/// First-order decoupling around `σ* = δ* = 0` (with `s_add = 0`). Outputs are
/// clamped to the physical ranges of `d` and `s`.
pub fn linearized_inverse(
    refs: &ControlReferences,
    gain: f64,
) -> Result<(f64, f64, f64), InversionError> {
    check_gain(gain)?;
    if (gain - 1.0).abs() < UNITY_GAIN_BAND {
        return Err(InversionError::UndefinedAtUnity(gain));
    }
    let beta = refs.sigma + refs.delta;
    let (d, s) = if gain < 1.0 {
        ((1.0 - 2.0 * gain).clamp(-1.0, 1.0).acos() + refs.sigma, 0.0)
    } else {
        (
            PI,
            PI - (1.0 - 2.0 / gain).clamp(-1.0, 1.0).acos() - refs.delta,
        )
    };
    Ok((d.clamp(0.0, PI), s.clamp(0.0, PI), beta))
}
