//! First-harmonic steady-state model of the dual-bridge series resonant converter.
//!
//! Both bridge voltages are replaced by their fundamental components. With the
//! input bridge on-time `d`, the output bridge short-time `s`, the inter-bridge
//! phase shift `beta` and the voltage gain `G = n·V_out/V_in`, the tank current
//! phasor is proportional to the harmonic coefficients
//!
//! ```text
//! A = 4 sin d + 4G sin(β + s) + 4G sin β
//! B = 4 − 4G cos(β + s) − 4G cos β − 4 cos d
//! ```
//!
//! and the alignment angles follow as `σ = atan2(B, A)`, `δ = β − σ`. The
//! series tank contributes only through its reactance `Z(ω) = ωL − 1/(ωC)`,
//! which must be positive (inductive, above resonance).

use std::f64::consts::PI;

use thiserror::Error;

/// `A² + B²` below this value is treated as a collapsed tank current.
pub const DEGENERACY_THRESHOLD: f64 = 1e-24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(
        "harmonic coefficients vanish (tank current collapse); alignment angles are undefined"
    )]
    DegenerateCoefficients,
    #[error("switching frequency {omega} rad/s is not above resonance (Z = {impedance} ohm)")]
    BelowResonance { omega: f64, impedance: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Physical tank parameters: series inductance, series capacitance, transformer
/// turns ratio and the maximum angular switching frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TankConfig {
    pub inductance: f64,
    pub capacitance: f64,
    pub turns_ratio: f64,
    pub omega_max: f64,
}

impl TankConfig {
    pub fn new(
        inductance: f64,
        capacitance: f64,
        turns_ratio: f64,
        omega_max: f64,
    ) -> Result<Self, ModelError> {
        let tank = Self {
            inductance,
            capacitance,
            turns_ratio,
            omega_max,
        };
        tank.validate()?;
        Ok(tank)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ModelError::InvalidParameter(format!(
                    "{name} must be finite and > 0, got {v}"
                )))
            }
        };
        positive("inductance", self.inductance)?;
        positive("capacitance", self.capacitance)?;
        positive("turns ratio", self.turns_ratio)?;
        positive("omega_max", self.omega_max)?;
        let omega_0 = self.resonant_omega();
        if self.omega_max <= omega_0 {
            return Err(ModelError::InvalidParameter(format!(
                "omega_max {} rad/s must exceed the resonant frequency {omega_0} rad/s",
                self.omega_max
            )));
        }
        Ok(())
    }

    /// `1/√(LC)`.
    pub fn resonant_omega(&self) -> f64 {
        1.0 / (self.inductance * self.capacitance).sqrt()
    }

    pub fn impedance(&self, omega: f64) -> f64 {
        tank_impedance(omega, self)
    }

    /// Largest reactance reachable, at `omega_max`.
    pub fn max_impedance(&self) -> f64 {
        self.impedance(self.omega_max)
    }

    /// Same tank with the series inductance multiplied by `scale`.
    pub fn with_inductance_scale(&self, scale: f64) -> Self {
        Self {
            inductance: self.inductance * scale,
            ..*self
        }
    }
}

/// PWM commutation tuple driving both bridges. Angles in radians, `omega` in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchingParams {
    pub d: f64,
    pub s: f64,
    pub beta: f64,
    pub omega: f64,
}

impl SwitchingParams {
    pub fn new(d: f64, s: f64, beta: f64, omega: f64) -> Self {
        Self { d, s, beta, omega }
    }

    /// Checks `0 ≤ d ≤ π`, `0 ≤ s ≤ π`, `−π ≤ β ≤ π` and `ω > 0`.
    pub fn validate(&self) -> Result<(), ModelError> {
        let in_range = |name: &str, v: f64, lo: f64, hi: f64| {
            if v.is_finite() && v >= lo && v <= hi {
                Ok(())
            } else {
                Err(ModelError::InvalidParameter(format!(
                    "{name} = {v} outside [{lo}, {hi}]"
                )))
            }
        };
        in_range("d", self.d, 0.0, PI)?;
        in_range("s", self.s, 0.0, PI)?;
        in_range("beta", self.beta, -PI, PI)?;
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "omega = {} must be > 0",
                self.omega
            )));
        }
        Ok(())
    }
}

/// Measurable waveform alignment: `sigma` from the input-bridge rising edge to
/// the tank-current zero crossing, `delta` from that crossing to the
/// output-bridge rising edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentAngles {
    pub sigma: f64,
    pub delta: f64,
}

/// Exogenous state seen by the controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub gain: f64,
    pub v_in: f64,
}

impl OperatingPoint {
    pub fn new(gain: f64, v_in: f64) -> Result<Self, ModelError> {
        if !(gain.is_finite() && gain >= 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "gain must be >= 0, got {gain}"
            )));
        }
        if !(v_in.is_finite() && v_in > 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "input voltage must be > 0, got {v_in}"
            )));
        }
        Ok(Self { gain, v_in })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicCoefficients {
    pub a: f64,
    pub b: f64,
}

impl HarmonicCoefficients {
    /// `√(A² + B²)`, or exactly zero at a collapse point.
    pub fn magnitude(&self) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            self.a.hypot(self.b)
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.a * self.a + self.b * self.b < DEGENERACY_THRESHOLD
    }
}

pub fn harmonic_coefficients(p: &SwitchingParams, gain: f64) -> HarmonicCoefficients {
    let (sd, cd) = p.d.sin_cos();
    let (sb, cb) = p.beta.sin_cos();
    let (sbs, cbs) = (p.beta + p.s).sin_cos();
    HarmonicCoefficients {
        a: 4.0 * sd + 4.0 * gain * sbs + 4.0 * gain * sb,
        b: 4.0 - 4.0 * gain * cbs - 4.0 * gain * cb - 4.0 * cd,
    }
}

pub fn alignment_angles(
    c: &HarmonicCoefficients,
    beta: f64,
) -> Result<AlignmentAngles, ModelError> {
    if c.is_degenerate() {
        return Err(ModelError::DegenerateCoefficients);
    }
    let sigma = c.b.atan2(c.a);
    Ok(AlignmentAngles {
        sigma,
        delta: beta - sigma,
    })
}

/// Series tank reactance `ωL − 1/(ωC)`.
pub fn tank_impedance(omega: f64, tank: &TankConfig) -> f64 {
    omega * tank.inductance - 1.0 / (omega * tank.capacitance)
}

fn inductive_impedance(omega: f64, tank: &TankConfig) -> Result<f64, ModelError> {
    let z = tank_impedance(omega, tank);
    if z > 0.0 && z.is_finite() {
        Ok(z)
    } else {
        Err(ModelError::BelowResonance {
            omega,
            impedance: z,
        })
    }
}

/// Output transconductance `W = I_out/V_in` in A/V.
pub fn transconductance(
    p: &SwitchingParams,
    gain: f64,
    tank: &TankConfig,
) -> Result<f64, ModelError> {
    Ok(evaluate(p, gain, tank)?.transconductance)
}

/// Tank current amplitude `I_t = V_in·√(A²+B²)/(2πZ)`.
pub fn tank_current_amplitude(
    p: &SwitchingParams,
    op: &OperatingPoint,
    tank: &TankConfig,
) -> Result<f64, ModelError> {
    let z = inductive_impedance(p.omega, tank)?;
    let c = harmonic_coefficients(p, op.gain);
    Ok(op.v_in * c.magnitude() / (2.0 * PI * z))
}

/// Residual of `cos β − G − cos(β − d) − G cos s`; zero exactly when the
/// output bridge is aligned with the tank current (`δ = 0`, given `A > 0`).
pub fn sync_rect_residual(p: &SwitchingParams, gain: f64) -> f64 {
    p.beta.cos() - gain - (p.beta - p.d).cos() - gain * p.s.cos()
}

/// Everything the forward model yields for one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub coefficients: HarmonicCoefficients,
    /// `None` at a collapse point.
    pub angles: Option<AlignmentAngles>,
    pub impedance: f64,
    pub transconductance: f64,
}

impl SteadyState {
    pub fn tank_current(&self, v_in: f64) -> f64 {
        v_in * self.coefficients.magnitude() / (2.0 * PI * self.impedance)
    }

    /// `I_t / I_out = (π/n) / (cos(s+δ) + cos δ)`, computed from the pieces.
    pub fn current_ratio(&self, v_in: f64) -> f64 {
        self.tank_current(v_in) / (self.transconductance * v_in)
    }
}

pub fn evaluate(
    p: &SwitchingParams,
    gain: f64,
    tank: &TankConfig,
) -> Result<SteadyState, ModelError> {
    let impedance = inductive_impedance(p.omega, tank)?;
    let coefficients = harmonic_coefficients(p, gain);
    let (angles, w) = match alignment_angles(&coefficients, p.beta) {
        Ok(angles) => {
            let rectified = (p.s + angles.delta).cos() + angles.delta.cos();
            let w = tank.turns_ratio / (2.0 * PI * PI) * coefficients.magnitude() / impedance
                * rectified;
            (Some(angles), w)
        }
        Err(_) => (None, 0.0),
    };
    Ok(SteadyState {
        coefficients,
        angles,
        impedance,
        transconductance: w,
    })
}
