//! Extrinsic conformal tractor calculus on a single Riemannian chart.
//!
//! The crate builds, for a metric chart `(M, g)` and an admissible one-parameter
//! deformation `gamma(r)`, the ambient Lorentzian cone metric on
//! `R_{>0} x (-delta, delta) x M`, immerses the chart into it as a codimension-two
//! spacelike submanifold, and realizes the rank `n+2` tractor bundle in the frame
//! `{T Psi . d_i, xi, ell}`. Every closed-form identity (connection, Ricci
//! restriction, Weingarten operators, mean curvature, parallel-section system)
//! is paired with an independent numeric oracle so the construction can be
//! verified rather than trusted.

pub mod ambient;
pub mod catalog;
pub mod chart;
mod curv;
pub mod error;
pub mod expr;
pub mod fd;
pub mod grid;
pub mod immersion;
pub mod tractor;

pub use chart::{CurvaturePack, FieldCalculus, MetricChart, ScalarField};
pub use error::Error;
pub use expr::Expr;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod concurrency {
    //! Everything is immutable after construction, so values can be shared
    //! across point-scan workers without coordination.

    fn assert_shareable<T: Send + Sync>() {}

    #[test]
    fn core_types_are_send_and_sync() {
        assert_shareable::<crate::expr::Expr>();
        assert_shareable::<crate::chart::MetricChart>();
        assert_shareable::<crate::chart::ScalarField>();
        assert_shareable::<crate::ambient::AdmissibleFamily>();
        assert_shareable::<crate::tractor::TractorSection>();
        assert_shareable::<crate::tractor::CurvePath>();
    }
}
