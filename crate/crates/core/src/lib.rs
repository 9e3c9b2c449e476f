//! Hierarchical trajectory optimization for planar quasi-static manipulation.
//!
//! The planner runs three stages: a kinematic NLP for the object pose, a
//! contact MILP that assigns robot contacts and forces with relaxed moment
//! balance, and a quasi-static NLP that restores the exact physics. Contact
//! schedules rejected by the last stage are removed from the MILP with
//! no-good cuts.

pub mod copt;
pub mod kopt;
pub mod milp;
pub mod nlp;
pub mod pipeline;
pub mod qopt;
pub mod num;
pub mod relax;
pub mod scenarios;
pub mod scene;

pub use num::Real;

pub type Vec2 = scene::Vec2<f64>;
pub type Mat2 = scene::Mat2<f64>;
pub type Pose = scene::Pose2<f64>;
pub type Surface = scene::Surface<f64>;
pub type ObjectModel = scene::ObjectModel<f64>;
pub type RobotSpec = scene::RobotSpec<f64>;
pub type EnvModel = scene::EnvModel<f64>;
pub type Scenario = scene::Scenario<f64>;
