//! Solver for captivity-escape games between a low-fidelity planning model
//! and a high-fidelity tracking model.
//!
//! The planner starts inside a ball of radius beta around the tracker in
//! relative coordinates and tries to leave it; the tracker tries to keep it
//! captive forever. The region from which the tracker wins is a tracking
//! error bound (TEB): a positively invariant set whose worst-case tracking
//! error equals beta, so beta doubles as a safety margin for motion
//! planning. The library constructs that region geometrically:
//!
//! 1. classify the boundary of the ball through the min-max condition on
//!    the boundary Hamiltonian ([`geometry`]),
//! 2. integrate semipermeable surfaces retrograde from the equality
//!    anchors and close them into a barrier ([`barrier`]),
//! 3. adapt the planner performance to a prescribed margin (or the margin
//!    to a given performance) by root-solving the junction condition
//!    ([`adaptation`]),
//! 4. clamp the tracker with the game-optimal input on the boundary and
//!    leave it free inside ([`controller`]),
//! 5. certify invariance empirically with adversarial closed-loop runs
//!    ([`sim`]).
//!
//! The built-in model pair is the classic constant-speed pursuit problem
//! with a turn-rate-limited tracker ([`chauffeur`]); other model pairs plug
//! in through the [`system::RelativeSystem`] trait.

pub mod adaptation;
pub mod barrier;
pub mod chauffeur;
pub mod controller;
mod error;
pub mod geometry;
pub mod io;
pub mod num;
pub mod polyline;
pub mod sim;
pub mod system;

pub use adaptation::{
    check_validity, compute_limits, junction_residual, solve_alpha_for_theta,
    solve_theta_for_alpha, sweep, Limits, ManifoldSpec, SolveConfig, SolveOutcome, SolveReport,
    ValidityReport,
};
pub use barrier::{
    assemble_barrier, build_teb, integrate_surface, integrate_surface_stopping, teb_membership,
    BarrierPiece, BoundaryComponent, ClosedBarrier, IntegratorConfig, Membership, SurfaceSample,
    SurfaceTrajectory, TrackingErrorBound,
};
pub use chauffeur::ChauffeurSystem;
pub use controller::{safety_control, ControlDecision, Mode, SafetyController};
pub use error::{Error, Result};
pub use geometry::{
    compute_bnup, minmax_hamiltonian, nup_membership, BnupConfig, BnupPoint, BoundaryClass,
    CaptivitySet,
};
pub use sim::{
    monte_carlo_invariance, sample_interior, simulate, McConfig, McSummary, PlannerPolicy,
    SimConfig, SimResult, SimSample,
};
pub use system::{
    eval_dynamics, eval_jacobian, Interval, ModelSpec, Projection, RelativeSystem,
};
