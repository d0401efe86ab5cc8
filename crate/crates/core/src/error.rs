use thiserror::Error;

/// Errors raised by mesh, bundle, morphism and index computations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("base mismatch: {0}")]
    BaseMismatch(String),

    #[error("scalar mismatch: expected {expected}, found {found}")]
    ScalarMismatch { expected: String, found: String },

    #[error("bundle validation failed: {0}")]
    InvalidBundle(String),

    #[error("degenerate span at vertex {vertex}: smallest singular value {sigma_min:e}")]
    DegenerateSpan { vertex: usize, sigma_min: f64 },

    #[error("not a subbundle: nesting residual {residual:e} at vertex {vertex}")]
    NotASubbundle { vertex: usize, residual: f64 },

    #[error("rank slack violated: need rank >= {required}, bundle has rank {available}")]
    RankSlack { required: usize, available: usize },

    #[error("frame extension failed after {attempts} attempts (seed {seed}): {reason}")]
    ExtensionFailure { attempts: usize, seed: u64, reason: String },

    #[error("kernel dimension not constant, offending vertices {vertices:?}")]
    NotABundle { vertices: Vec<usize> },

    #[error("invalid morphism: {0}")]
    InvalidMorphism(String),

    #[error("image escapes target subfield at vertex {vertex}: residual {residual:e}")]
    ImageEscape { vertex: usize, residual: f64 },

    #[error("middle bundle mismatch in composition: {0}")]
    MiddleMismatch(String),

    #[error("ambient exhausted: target ambient dimension {ambient} cannot host a transversal frame (at vertex {vertex}); enlarge the ambient space")]
    AmbientExhausted { ambient: usize, vertex: usize },

    #[error("transversality degraded at vertex {vertex}: kernel fibre dimension {found}, expected {expected}")]
    TransversalityDegraded { vertex: usize, expected: i64, found: i64 },

    #[error("well-definedness violated: {0}")]
    WellDefinedness(String),

    #[error("E1 search failed: {draws} draws of codimension {codim} did not avoid all kernels; reseed or raise the codimension")]
    E1SearchFailure { codim: usize, draws: usize },

    #[error("frame transport undefined across edge ({a}, {b}): gap {gap:.6}")]
    TransportUndefined { a: usize, b: usize, gap: f64 },

    #[error("edge ({a},{b}) too coarse for the morphism: jump {jump:e} >= spectral gap {gap:e}")]
    CoarseEdge { a: usize, b: usize, jump: f64, gap: f64 },

    #[error("mesh too coarse: curvature total {total:.9} is not within 1e-6 of an integer")]
    MeshTooCoarse { total: f64 },

    #[error("undecidable base: {0}")]
    UndecidableBase(String),

    #[error("invalid boundary value problem: {0}")]
    InvalidSpec(String),

    #[error("discretization error: {0}")]
    Discretization(String),

    #[error("parametrix enlargement budget of {budget} exhausted: {reason}")]
    EnlargementBudget { budget: usize, reason: String },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
