//! Max-k-Cut solving toolkit.
//!
//! The pipeline has three stages:
//!
//! 1. **Relax** — replace the one-hot assignment constraint by the product of
//!    probability simplices ([`relax::AssignmentMatrix`]) and work with the
//!    quadratic objective `f(X) = Tr(X W X^T)`.
//! 2. **Optimize** — minimize the relaxed objective either with entropic
//!    mirror descent ([`md`]) or by training a small message-passing network
//!    on the instance ([`gnn`]), optionally warm-started from a pre-trained
//!    model.
//! 3. **Sample** — decode a discrete cut by drawing each node's label from
//!    the categorical distribution given by its relaxed column ([`sample`]);
//!    the expected objective of the draw equals the relaxed objective.
//!
//! [`graph`] holds the instance representation and file-format ingestion,
//! [`oracle`] an exhaustive-enumeration reference for small instances.

pub mod gnn;
pub mod graph;
pub mod md;
pub mod oracle;
pub mod relax;
pub mod sample;
pub mod seeding;
