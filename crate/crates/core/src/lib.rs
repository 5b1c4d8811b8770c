//! Robust L-moment estimation: the method of trimmed moments (MTM) and the
//! method of winsorized moments (MWM), together with several independent
//! routes to the asymptotic variance–covariance matrix of the sample moments.
//!
//! The crate is `no_std` and only needs `alloc`; IO, simulation and the CLI
//! live in the `robust-lmoments` companion crate.
//!
//! ```
//! use robust_lmoments_core::{asymcov, DistributionModel, HTransform, MomentSpec};
//!
//! let model = DistributionModel::uniform(0.0, 1.0).unwrap();
//! let spec = MomentSpec::mtm(HTransform::Identity, 0.25, 0.25).unwrap();
//! let v = asymcov::sigma_mtm_equal_props(&model, &spec, &spec).unwrap();
//! assert!((v - 1.0 / 6.0).abs() < 1e-12);
//! ```

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod asymcov;
pub mod error;
pub mod estimate;
pub mod linalg;
pub mod models;
pub mod moments;
pub mod quad;
pub mod special;

pub use asymcov::{cov_matrix, CovMatrix, CovMethod};
pub use error::{Error, Result};
pub use estimate::{delta_cov, fit, FamilyTemplate, FitResult};
pub use models::{CompositeH, DistributionModel, Family, HTransform};
pub use moments::{Mode, MomentSpec, Sample};
