//! Exact single-qubit statevector simulation, shot sampling and the
//! parameter-shift head that sits on top of the CNN trunk.

mod head;
mod state;

pub use head::{
    amplitude_to_angle, clamp_prob, degenerate_embedding_count, EmbeddingMode, HeadAngles, Observable, QuantumHead,
    ShiftTarget, PROB_FLOOR,
};
pub use state::{Gate, ShotResult, Statevector};
