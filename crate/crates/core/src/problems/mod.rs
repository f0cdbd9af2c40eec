//! Benchmark problems: box-constrained linear-quadratic regulators (with
//! optional polyhedral obstacles), a kinematic car parking task, and
//! seeded random instances.

mod car;
mod config;
mod lqr;
mod random;

pub use car::*;
pub use config::*;
pub use lqr::*;
pub use random::*;
