//! Numerical checks that a strategy is person-by-person optimal.
//!
//! Pointwise quantities ([`hamiltonian`], [`hamiltonian_grad_u`],
//! [`conditional_gradient`]) are exact; everything involving the pay-off is a
//! Monte Carlo estimate. Paired comparisons always reuse the noise of the
//! reference run and the reference strategy's team filters, so an unchanged
//! strategy reproduces its cost bit for bit.

mod adjoint;
mod closure;
mod cost;
mod gateaux;
mod hamiltonian;
mod statistics;
mod verify;

pub use adjoint::{adjoint_consistency_check, reconstruct_beta, AdjointCheck};
pub use closure::{closure_gap_report, ClosureGapEntry, ClosureGapReport, ROUNDING_FLOOR};
pub use cost::{estimate_cost, estimate_cost_with, path_costs, CostAccumulator, CostEstimate};
pub use gateaux::{convexity_witness, gateaux_fd, ConvexityWitness, GateauxEstimate, MIN_STEP};
pub use hamiltonian::{hamiltonian, hamiltonian_grad_u, running_cost, HamiltonianInput};
pub use statistics::{default_probes, filter_statistics, FilterStatistics, ProbeStatistics, INNOVATION_TOLERANCE};
pub use verify::{
    conditional_gradient, standard_battery, verify_person_by_person, verify_person_by_person_with, GradientProfile,
    Perturbation, PerturbationEntry, VerificationReport, BATTERY_VERSION, GRADIENT_TOLERANCE, MIN_PATHS,
    SIGMA_MULTIPLIER,
};
