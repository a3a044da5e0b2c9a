//! Bootstrap standard errors and input checks.

mod bootstrap;
mod preconditions;

pub use bootstrap::{
    bootstrap, bootstrap_with_context, resample_indices, BootstrapConfig, BootstrapReplicate,
    BootstrapResult, DrawScheme, ResampleScope,
};
pub use preconditions::{check_preconditions, ArmPresence, PreconditionInput, PreconditionReport};
