use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};

const NORM_TOLERANCE: f64 = 1e-9;

/// Single-qubit gates used by the heads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    Hadamard,
    /// Rotation about the y-axis by the given angle in radians.
    Ry(f64),
}

impl Gate {
    /// Real 2x2 matrix, row-major.
    pub fn matrix(self) -> [[f64; 2]; 2] {
        match self {
            Gate::Hadamard => [[FRAC_1_SQRT_2, FRAC_1_SQRT_2], [FRAC_1_SQRT_2, -FRAC_1_SQRT_2]],
            Gate::Ry(theta) => {
                let (s, c) = (theta / 2.0).sin_cos();
                [[c, -s], [s, c]]
            }
        }
    }
}

/// Amplitudes of one qubit in the computational basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Statevector {
    pub amp0: Complex64,
    pub amp1: Complex64,
}

impl Default for Statevector {
    fn default() -> Self {
        Self::zero()
    }
}

impl Statevector {
    /// |0⟩.
    pub fn zero() -> Self {
        Statevector {
            amp0: Complex64::new(1.0, 0.0),
            amp1: Complex64::new(0.0, 0.0),
        }
    }

    pub fn new(amp0: Complex64, amp1: Complex64) -> Result<Self> {
        let s = Statevector { amp0, amp1 };
        s.check_normalized()?;
        Ok(s)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp0.norm_sqr() + self.amp1.norm_sqr()
    }

    fn check_normalized(&self) -> Result<()> {
        let err = (self.norm_sqr() - 1.0).abs();
        if err > NORM_TOLERANCE || !err.is_finite() {
            return Err(Error::State(format!("state norm deviates from 1 by {err:e}")));
        }
        Ok(())
    }

    pub fn evolve(&self, gate: Gate) -> Result<Statevector> {
        self.check_normalized()?;
        let m = gate.matrix();
        Ok(Statevector {
            amp0: self.amp0 * m[0][0] + self.amp1 * m[0][1],
            amp1: self.amp0 * m[1][0] + self.amp1 * m[1][1],
        })
    }

    /// Applies gates left to right, starting from `self`.
    pub fn run(&self, gates: &[Gate]) -> Result<Statevector> {
        gates.iter().try_fold(*self, |s, &g| s.evolve(g))
    }

    pub fn prob1(&self) -> f64 {
        self.amp1.norm_sqr()
    }

    /// ⟨Z⟩ = |amp0|² − |amp1|².
    pub fn expectation_z(&self) -> f64 {
        self.amp0.norm_sqr() - self.amp1.norm_sqr()
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &Statevector) -> f64 {
        (self.amp0.conj() * other.amp0 + self.amp1.conj() * other.amp1).norm_sqr()
    }

    /// Measures the state `shots` times in the computational basis.
    pub fn sample_shots(&self, shots: u64, seed: u64) -> Result<ShotResult> {
        if shots == 0 {
            return Err(Error::Parameter("shot count must be at least 1".into()));
        }
        let p1 = self.prob1().clamp(0.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let counts1 = Binomial::new(shots, p1)
            .map_err(|e| Error::Parameter(format!("binomial sampler: {e}")))?
            .sample(&mut rng);
        Ok(ShotResult {
            counts0: shots - counts1,
            counts1,
            shots,
        })
    }
}

/// Outcome counts of repeated computational-basis measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShotResult {
    pub counts0: u64,
    pub counts1: u64,
    pub shots: u64,
}

impl ShotResult {
    pub fn freq1(&self) -> f64 {
        self.counts1 as f64 / self.shots as f64
    }

    pub fn freq0(&self) -> f64 {
        self.counts0 as f64 / self.shots as f64
    }
}
