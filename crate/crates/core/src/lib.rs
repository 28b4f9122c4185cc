pub mod config;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod hp_planner;
pub mod kinematics;
pub mod lp_planner;
pub mod pd_uncertainty;
pub mod radar;
pub mod scenario;
pub mod sim;
pub mod bspline;
pub mod roadmap;
pub mod trajopt;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/radar-model.md")]
    mod radar_model {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/pd-uncertainty.md")]
    mod pd_uncertainty {}
    #[doc = include_str!("../../../book/src/roadmaps.md")]
    mod roadmaps {}
    #[doc = include_str!("../../../book/src/trajectories.md")]
    mod trajectories {}
    #[doc = include_str!("../../../book/src/scouts.md")]
    mod scouts {}
    #[doc = include_str!("../../../book/src/high-priority.md")]
    mod high_priority {}
}
