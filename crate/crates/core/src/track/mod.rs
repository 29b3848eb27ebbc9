//! Detection filtering, trajectory linking, velocimetry and spread statistics.

mod correlate;
mod envelope;
mod filter;
mod link;
mod velocity;

pub use correlate::{correlate_parameters, pearson, CaseData, Correlation};
pub use envelope::{envelope_stats, snip_baseline, EnvelopeBin, EnvelopeStats};
pub use filter::{filter_detections, FilterOutcome, FilterPolicy, RectMm, RejectReason, Rejection};
pub use link::{link_trajectories, GateParams, Trajectory};
pub use velocity::{
    bin_index, bin_velocity_profile, compute_velocities, mean_and_sem, ProfileBin, VelocityProfile, VelocitySample,
};
