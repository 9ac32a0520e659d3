//! Shared/private information learning between modality pairs.

mod directive;
mod loss;
mod optimal_map;

pub use directive::{parse_alignment_spec, AlignmentDirective, AlignmentSpec, DirectiveKind};
pub use loss::{
    directive_loss, private_loss, private_loss_grad, shared_loss, shared_loss_grad, DirectiveLoss,
    DEFAULT_PRIVATE_CAP,
};
pub use optimal_map::{optimal_map, optimal_map_with_tol, OptimalMapResult};
