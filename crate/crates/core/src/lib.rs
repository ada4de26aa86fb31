//! Lyapunov-exponent fields, bifurcation measures and equidistribution
//! experiments for holomorphic families of representations of finitely
//! generated groups into PSL(2,C).

pub mod error;
pub mod moebius;
pub mod words;
pub mod family;
pub mod rng;
pub mod lyapunov;
pub mod potential;
pub mod zeros;
pub mod experiments;
pub mod io;

pub use error::{Error, Result};
pub use experiments::{ComparisonReport, DecayRow, DecayTable, EpsilonRule, PixelMask, Settings};
pub use family::{FamilySpec, Jet1, PolyC, Window};
pub use lyapunov::{ChiEstimate, ChiFieldParams, FieldMeta, GrowthVariant, ParamGrid, ScalarField};
pub use moebius::{MapType, MoebiusMap, RiemannPoint};
pub use potential::{MassField, MassSummary};
pub use words::{Letter, WalkSampler, Word, WordMeasure};
pub use zeros::{PointCloud, ZeroBox, ZeroPoint};

pub use num_complex::Complex64;
