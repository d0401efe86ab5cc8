//! Finite-rank perturbations making an index-zero family invertible.
//!
//! With `V` transversal and both `V` and `E(L,V)` framed, `a_x` sends the
//! i-th frame vector of `E(L,V)_x` to the i-th frame vector of `V_x`, and
//! `K_x = a_x P_x - Q_x L_x` where `P` projects onto `E(L,V)` and `Q` onto
//! `V`. Then `L + K = (I - Q) L + a P` is fibrewise invertible. The straight
//! line `L + tK` is a homotopy from `L` to an isomorphism.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::ToleranceConfig;
use crate::error::{Error, Result};
use crate::frame::global_frame;
use crate::index::{index_class_detailed, kernel_bundle, IndexComputation, TransversalData};
use crate::invariants::{is_stably_trivial, InvariantRecord};
use crate::linalg::{self, CMat};
use crate::morphism::MorphismField;

/// Enlargements of `V` tried before giving up.
pub const ENLARGEMENT_BUDGET: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParametrixStatus {
    Built,
    Obstructed,
}

impl ParametrixStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ParametrixStatus::Built => "built",
            ParametrixStatus::Obstructed => "obstructed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParametrixResult {
    pub status: ParametrixStatus,
    /// The perturbation; present when built.
    pub k: Option<MorphismField>,
    /// Smallest restricted singular value of `L + K`; present when built.
    pub min_sv: Option<f64>,
    pub dim_v: usize,
    /// Vectors adjoined to `V` until `E(L,V)` could be framed.
    pub enlargements: usize,
    /// Index class invariants; nonzero when obstructed.
    pub obstruction: Option<InvariantRecord>,
    pub certificate: Vec<String>,
}

/// Per-vertex restricted smallest singular values of an index-zero family.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertibilityReport {
    pub per_vertex: Vec<f64>,
    pub min_sv: f64,
    pub worst_vertex: usize,
    pub sigma_floor: f64,
}

impl InvertibilityReport {
    pub fn passed(&self) -> bool {
        self.min_sv >= self.sigma_floor
    }
}

/// Smallest singular value of `B_F^* M_x B_E` at every vertex.
pub fn verify_invertible(m: &MorphismField, sigma_floor: f64) -> InvertibilityReport {
    let per_vertex: Vec<f64> = (0..m.len())
        .into_par_iter()
        .map(|x| {
            let r = m.restricted_matrix(x);
            if r.nrows() != r.ncols() {
                return 0.0;
            }
            if r.nrows() == 0 {
                return f64::INFINITY;
            }
            linalg::min_singular_value(&r)
        })
        .collect();
    let (worst_vertex, min_sv) =
        per_vertex
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    InvertibilityReport {
        per_vertex,
        min_sv,
        worst_vertex,
        sigma_floor,
    }
}

/// Builds `K` when the index class is stably trivial, otherwise reports
/// the obstructing invariants.
pub fn build_parametrix(l: &MorphismField, cfg: &ToleranceConfig) -> Result<ParametrixResult> {
    parametrix_from_computation(l, index_class_detailed(l, cfg)?, cfg)
}

/// As [`build_parametrix`], reusing a class already computed for `l`.
pub fn parametrix_from_computation(
    l: &MorphismField,
    comp: IndexComputation,
    cfg: &ToleranceConfig,
) -> Result<ParametrixResult> {
    let decision = is_stably_trivial(&comp.class)?;
    if !decision.trivial {
        return Ok(ParametrixResult {
            status: ParametrixStatus::Obstructed,
            k: None,
            min_sv: None,
            dim_v: comp.transversal.dim,
            enlargements: 0,
            obstruction: Some(comp.class.reduced.clone()),
            certificate: decision.certificate,
        });
    }
    // A class computed after stabilization has no transversal inside the
    // target of `l` itself, so the search starts from an empty frame.
    let n = l.target.ambient_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED);
    let mut last = String::new();
    let mut current = (comp.stabilized == 0).then_some((comp.transversal, comp.class.plus));
    let base = match &current {
        Some((v, _)) => v.frame.clone(),
        None => linalg::zeros(n, 0),
    };
    for enlargements in 0..=ENLARGEMENT_BUDGET {
        if enlargements > 0 || current.is_none() {
            // Each attempt starts over from the original frame, adding more
            // vectors as attempts accumulate.
            let extra = 1 + enlargements.saturating_sub(1) / 3;
            let nv = match enlarge(l, &base, extra, &mut rng, cfg) {
                Ok(nv) => nv,
                Err(err) => {
                    last = err.to_string();
                    continue;
                }
            };
            match kernel_bundle(l, &nv.field, cfg) {
                Ok(ne) => current = Some((nv, ne)),
                Err(err) => {
                    current = None;
                    last = err.to_string();
                    continue;
                }
            }
        }
        let Some((v, e)) = &current else { continue };
        let frame = match global_frame(e, cfg) {
            Ok(f) => f,
            Err(err) => {
                last = err.to_string();
                continue;
            }
        };
        let k = perturbation(l, v, &e.proj, &frame.sections)?;
        let sum = l.add(&k)?;
        let report = verify_invertible(&sum, cfg.sigma_floor);
        if !report.passed() {
            return Err(Error::Internal(format!(
                "parametrix built but L + K has min_sv {:e} at vertex {} (raise the margin or refine the mesh)",
                report.min_sv, report.worst_vertex
            )));
        }
        let bound = 2 * v.dim;
        if let Some(x) = (0..k.len()).find(|&x| linalg::numerical_rank(&k.mats[x], cfg) > bound) {
            return Err(Error::Internal(format!(
                "perturbation rank exceeds {bound} at vertex {x}"
            )));
        }
        return Ok(ParametrixResult {
            status: ParametrixStatus::Built,
            k: Some(k),
            min_sv: Some(report.min_sv),
            dim_v: v.dim,
            enlargements,
            obstruction: None,
            certificate: Vec::new(),
        });
    }
    Err(Error::EnlargementBudget {
        budget: ENLARGEMENT_BUDGET,
        reason: last,
    })
}

/// Adjoins `extra` random ambient vectors to the frame and projects it.
fn enlarge(
    l: &MorphismField,
    frame: &CMat,
    extra: usize,
    rng: &mut ChaCha8Rng,
    cfg: &ToleranceConfig,
) -> Result<TransversalData> {
    let n = l.target.ambient_dim;
    let k = frame.ncols();
    if k + extra > n {
        return Err(Error::AmbientExhausted { ambient: n, vertex: 0 });
    }
    let w = linalg::random_matrix(rng, n, extra, l.target.scalar);
    let mut frame = frame.clone().resize_horizontally(k + extra, linalg::ZERO);
    frame.columns_mut(k, extra).copy_from(&w);
    TransversalData::from_frame(l, frame, cfg)
}

fn perturbation(l: &MorphismField, v: &TransversalData, pe: &[CMat], se: &[CMat]) -> Result<MorphismField> {
    let scalar = l.domain.scalar;
    let mats: Vec<CMat> = (0..l.len())
        .into_par_iter()
        .map(|x| {
            let s = &se[x];
            let pinv = if s.is_empty() {
                linalg::zeros(s.ncols(), s.nrows())
            } else {
                s.clone()
                    .pseudo_inverse(1e-12)
                    .unwrap_or_else(|_| linalg::zeros(s.ncols(), s.nrows()))
            };
            let a = &v.sections[x] * pinv;
            scalar.fix(a * &pe[x] - &v.field.proj[x] * &l.mats[x])
        })
        .collect();
    Ok(MorphismField {
        domain: l.domain.clone(),
        target: l.target.clone(),
        mats,
    })
}
