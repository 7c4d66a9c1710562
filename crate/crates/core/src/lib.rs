//! Numerical laboratory for adoption dynamics on networks.
//!
//! The crate covers one stochastic process from three angles. A finite
//! weighted network carries a Markov adoption process (`stochastic`); its
//! survival probabilities obey closed linear ODE systems that are solved
//! exactly (`master`); and as the population grows the curves approach
//! classical compartmental limits (`compartmental`). The `lab` module wires
//! these together into convergence-rate studies, bound verification, and
//! comparisons between heterogeneous populations and their homogenized
//! stand-ins.

pub mod compartmental;
pub mod epsnorm;
pub mod error;
pub mod fit;
pub mod io;
pub mod lab;
pub mod master;
pub mod network;
pub mod odeint;
pub mod params;
pub mod stochastic;
pub mod trajectory;

pub use error::{Error, Result};
pub use fit::{FitModel, FitResult};
pub use network::{
    from_weight_matrix, make_circle, make_complete, make_kgroup, NetworkInstance, Structure,
};
pub use odeint::IntegratorConfig;
pub use params::{BassParams, GroupSizes, HeteroSpec};
pub use trajectory::{sup_abs_diff, sup_signed_diff, uniform_grid, Trajectory};
