//! Synthetic scenes with closed-form answers, and deliberately naive
//! reference implementations used to cross-check the main library.
//!
//! Nothing here shares code with the algorithms it checks beyond the
//! domain types.

mod reference;
mod scenes;

pub use reference::{
    brute_force_first_hits, brute_force_knn, brute_force_sinkhorn, exact_min_sphere, reference_render,
    rotate_about, OracleError, MAX_SINKHORN_SIZE,
};
pub use scenes::{make_occlusion_scene, make_rigid_scene, OracleScene, RigidEdit, RigidScene, CLONE_JITTER};
