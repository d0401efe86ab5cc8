//! Index bundles of Fredholm morphisms between vector bundles over finite
//! meshes.
//!
//! Bundles are fields of orthogonal projectors inside a trivial ambient
//! bundle. A Fredholm morphism is a field of matrices intertwining two such
//! fields. Its index class `[E(L,V)] - [V]` is built from a trivial
//! transversal subbundle `V` and reduced to rank, `w1` and `c1`.

pub mod axioms;
pub mod bundle;
pub mod bvp;
pub mod config;
pub mod error;
pub mod families;
pub mod frame;
pub mod index;
pub mod invariants;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod morphism;
pub mod parametrix;
pub mod report;

pub use bundle::{FrameSet, ProjectionField};
pub use config::ToleranceConfig;
pub use error::{Error, Result};
pub use index::{TransversalData, VirtualBundle};
pub use invariants::InvariantRecord;
pub use linalg::Scalar;
pub use mesh::{BaseMesh, MeshKind, MeshMap};
pub use morphism::MorphismField;
