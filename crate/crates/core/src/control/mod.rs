//! Control stack: synchronisation, current control, outer loops and the
//! grid-services supervisor.

pub mod loops;
pub mod pi;
pub mod pll;
pub mod supervisor;

pub use crate::frames::{abc_to_dq, dq_to_abc, Abc, Dq};
pub use loops::{
    buck_current_loop_step, check_reference, current_loop_step, dq_power, outer_loop_step, pq_to_idq_refs,
    CurrentRefs, OuterLoopContext, OuterLoopMode, OuterMeasurements, OuterOutput, ReferenceFloors,
};
pub use pi::{PiGains, PiState};
pub use pll::{pll_step, PllGains, PllState};
pub use supervisor::{supervisor_step, DelayLine, SupervisorConfig, SupervisorState, Telemetry};
