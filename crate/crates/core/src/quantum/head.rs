use std::f64::consts::FRAC_PI_2;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::state::{Gate, Statevector};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

/// Probabilities are clamped to this band before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-7;

const DEGENERATE_EPS: f64 = 1e-12;

static DEGENERATE_EMBEDDINGS: AtomicU64 = AtomicU64::new(0);

/// Number of amplitude pairs that were too close to the origin to embed.
pub fn degenerate_embedding_count() -> u64 {
    DEGENERATE_EMBEDDINGS.load(Ordering::Relaxed)
}

/// Angle `φ = atan2(b, a)` such that `RY(2φ)|0⟩ = (cos φ, sin φ)` is the
/// normalised pair `(a, b)`. Pairs at the origin map to `φ = 0`.
pub fn amplitude_to_angle(a: f64, b: f64) -> f64 {
    if a.abs() < DEGENERATE_EPS && b.abs() < DEGENERATE_EPS {
        DEGENERATE_EMBEDDINGS.fetch_add(1, Ordering::Relaxed);
        return 0.0;
    }
    b.atan2(a)
}

/// How classical features enter the qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMode {
    /// One input used directly as the RY angle after a Hadamard.
    Angle,
    /// Two inputs embedded as amplitudes, followed by a trainable RY(w).
    Amplitude,
}

impl EmbeddingMode {
    pub fn arity(self) -> usize {
        match self {
            EmbeddingMode::Angle => 1,
            EmbeddingMode::Amplitude => 2,
        }
    }
}

/// Circuit angles for one evaluation of the head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeadAngles {
    /// `|0⟩ → H → RY(θ)`.
    Angle { theta: f64 },
    /// `|0⟩ → RY(2φ) → RY(w)`.
    Amplitude { phi: f64, w: f64 },
}

/// Circuit angle that a parameter-shift derivative is taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftTarget {
    Theta,
    Phi,
    W,
}

impl FromStr for ShiftTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theta" | "θ" => Ok(ShiftTarget::Theta),
            "phi" | "φ" => Ok(ShiftTarget::Phi),
            "w" => Ok(ShiftTarget::W),
            other => Err(Error::Usage(format!("unknown circuit angle `{other}`"))),
        }
    }
}

/// Scalar read out of the circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    PauliZ,
    ProbOne,
}

/// Single-qubit variational classifier head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantumHead {
    pub mode: EmbeddingMode,
    /// 0 means exact probabilities; otherwise shot frequencies.
    pub shots: u64,
}

impl Default for QuantumHead {
    fn default() -> Self {
        QuantumHead {
            mode: EmbeddingMode::Amplitude,
            shots: 0,
        }
    }
}

impl HeadAngles {
    pub fn state(&self) -> Statevector {
        let gates = match *self {
            HeadAngles::Angle { theta } => [Gate::Hadamard, Gate::Ry(theta)],
            HeadAngles::Amplitude { phi, w } => [Gate::Ry(2.0 * phi), Gate::Ry(w)],
        };
        Statevector::zero().run(&gates).expect("|0⟩ is normalised")
    }

    /// Shifts the gate angle that `target` feeds by `delta`, returning the
    /// chain factor d(gate angle)/d(target).
    fn shifted(&self, target: ShiftTarget, delta: f64) -> Result<(HeadAngles, f64)> {
        match (*self, target) {
            (HeadAngles::Angle { theta }, ShiftTarget::Theta) => Ok((HeadAngles::Angle { theta: theta + delta }, 1.0)),
            // The embedding gate is RY(2φ): shifting the gate angle by δ moves φ by δ/2.
            (HeadAngles::Amplitude { phi, w }, ShiftTarget::Phi) => Ok((
                HeadAngles::Amplitude {
                    phi: phi + delta / 2.0,
                    w,
                },
                2.0,
            )),
            (HeadAngles::Amplitude { phi, w }, ShiftTarget::W) => Ok((HeadAngles::Amplitude { phi, w: w + delta }, 1.0)),
            (angles, target) => Err(Error::Usage(format!("angle {target:?} does not exist in circuit {angles:?}"))),
        }
    }
}

fn mix_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl QuantumHead {
    pub fn new(mode: EmbeddingMode, shots: u64) -> Self {
        QuantumHead { mode, shots }
    }

    pub fn arity(&self) -> usize {
        self.mode.arity()
    }

    /// Circuit angles for a row of classical inputs and the trainable angle.
    pub fn angles(&self, inputs: &[f64], w: f64) -> Result<HeadAngles> {
        if inputs.len() != self.arity() {
            return Err(Error::Usage(format!(
                "{:?} head takes {} inputs, got {}",
                self.mode,
                self.arity(),
                inputs.len()
            )));
        }
        Ok(match self.mode {
            EmbeddingMode::Angle => HeadAngles::Angle { theta: inputs[0] },
            EmbeddingMode::Amplitude => HeadAngles::Amplitude {
                phi: amplitude_to_angle(inputs[0], inputs[1]),
                w,
            },
        })
    }

    /// P(|1⟩), exact or estimated from `shots` samples drawn with `shot_seed`.
    pub fn measure(&self, angles: &HeadAngles, shot_seed: u64) -> Result<f64> {
        let state = angles.state();
        if self.shots == 0 {
            Ok(state.prob1())
        } else {
            Ok(state.sample_shots(self.shots, shot_seed)?.freq1())
        }
    }

    fn observe(&self, angles: &HeadAngles, observable: Observable, shot_seed: u64) -> Result<f64> {
        let p1 = self.measure(angles, shot_seed)?;
        Ok(match observable {
            Observable::ProbOne => p1,
            Observable::PauliZ => 1.0 - 2.0 * p1,
        })
    }

    /// `(ln P0, ln P1)` with both probabilities clamped to `[PROB_FLOOR, 1 − PROB_FLOOR]`.
    pub fn log_probs(&self, inputs: &[f64], w: f64, shot_seed: u64) -> Result<(f64, f64)> {
        let p1 = self.measure(&self.angles(inputs, w)?, shot_seed)?;
        Ok((clamp_prob(1.0 - p1).ln(), clamp_prob(p1).ln()))
    }

    /// Parameter-shift derivative `[E(α + π/2) − E(α − π/2)] / 2` of the
    /// observable with respect to the gate angle α fed by `target`, scaled by
    /// dα/d(target). Both evaluations reuse `shot_seed`.
    pub fn param_shift_grad(
        &self,
        target: ShiftTarget,
        angles: &HeadAngles,
        observable: Observable,
        shot_seed: u64,
    ) -> Result<f64> {
        let (plus, chain) = angles.shifted(target, FRAC_PI_2)?;
        let (minus, _) = angles.shifted(target, -FRAC_PI_2)?;
        let e_plus = self.observe(&plus, observable, shot_seed)?;
        let e_minus = self.observe(&minus, observable, shot_seed)?;
        Ok(chain * (e_plus - e_minus) / 2.0)
    }

    /// Gradient of P1 with respect to the raw head inputs and the trainable
    /// angle. Inputs go through the atan2 chain rule in amplitude mode.
    pub fn prob1_gradients(&self, inputs: &[f64], w: f64, shot_seed: u64) -> Result<(Vec<f64>, f64)> {
        let angles = self.angles(inputs, w)?;
        match angles {
            HeadAngles::Angle { .. } => {
                let d = self.param_shift_grad(ShiftTarget::Theta, &angles, Observable::ProbOne, shot_seed)?;
                Ok((vec![d], 0.0))
            }
            HeadAngles::Amplitude { .. } => {
                let (a, b) = (inputs[0], inputs[1]);
                let dw = self.param_shift_grad(ShiftTarget::W, &angles, Observable::ProbOne, shot_seed)?;
                let r2 = a * a + b * b;
                if a.abs() < DEGENERATE_EPS && b.abs() < DEGENERATE_EPS {
                    return Ok((vec![0.0, 0.0], dw));
                }
                let dphi = self.param_shift_grad(ShiftTarget::Phi, &angles, Observable::ProbOne, shot_seed)?;
                Ok((vec![-dphi * b / r2, dphi * a / r2], dw))
            }
        }
    }

    /// Records the head for an `N x arity` batch, producing `N x 2` log-probabilities.
    ///
    /// `w` is the trainable angle (amplitude mode only). The local Jacobian is
    /// computed with the parameter-shift rule; row `i` uses a shot seed derived
    /// from `(shot_seed, i)`.
    pub fn record(&self, tape: &mut Tape, input: Var, w: Option<Var>, shot_seed: u64) -> Result<Var> {
        let arity = self.arity();
        let shape = tape.shape(input).to_vec();
        if shape.last() != Some(&arity) {
            return Err(Error::Usage(format!("head input shape {shape:?} does not end in {arity}")));
        }
        let w_value = match (self.mode, w) {
            (EmbeddingMode::Amplitude, Some(v)) => tape.value(v)[0],
            (EmbeddingMode::Amplitude, None) => {
                return Err(Error::Usage("amplitude head needs its trainable angle".into()))
            }
            (EmbeddingMode::Angle, _) => 0.0,
        };
        let x = tape.value(input).to_vec();
        let rows = x.len() / arity;
        let mut value = Vec::with_capacity(rows * 2);
        let mut row_jac = Vec::with_capacity(rows * 2 * arity);
        let mut w_jac = Vec::with_capacity(rows * 2);
        for (r, row) in x.chunks(arity).enumerate() {
            let seed = mix_seed(shot_seed, r as u64);
            let p1 = self.measure(&self.angles(row, w_value)?, seed)?;
            let (dx, dw) = self.prob1_gradients(row, w_value, seed)?;
            let (p0c, p1c) = (clamp_prob(1.0 - p1), clamp_prob(p1));
            value.push(p0c.ln());
            value.push(p1c.ln());
            // d ln P0 = −dP1 / P0, d ln P1 = dP1 / P1; zero where the clamp is active.
            let s0 = if p0c == 1.0 - p1 { -1.0 / p0c } else { 0.0 };
            let s1 = if p1c == p1 { 1.0 / p1c } else { 0.0 };
            row_jac.extend(dx.iter().map(|d| s0 * d));
            row_jac.extend(dx.iter().map(|d| s1 * d));
            w_jac.push(s0 * dw);
            w_jac.push(s1 * dw);
        }
        let shared = match (self.mode, w) {
            (EmbeddingMode::Amplitude, Some(v)) => Some((v, w_jac)),
            _ => None,
        };
        tape.row_map(input, 2, value, row_jac, shared)
    }
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}
