//! Global frames of projection fields.
//!
//! [`extend_frame`] extends independent sections given on a vertex subset to
//! the whole base, assuming rank slack. [`global_frame`] trivializes a bundle
//! at full rank when that is possible: on a circle it transports a frame
//! around the loop and spreads the holonomy correction along the loop, on
//! trees and intervals it transports along a spanning tree, on products it
//! frames slice 0 and transports along the time direction.

use std::collections::{BTreeMap, VecDeque};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bundle::{FrameSet, ProjectionField};
use crate::config::ToleranceConfig;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, Scalar};
use crate::mesh::{bfs_distances, BaseMesh, MeshKind};

/// Attempts made by the randomized extension before giving up.
pub const EXTENSION_ATTEMPTS: usize = 16;

fn frame_rng(cfg: &ToleranceConfig, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn constant_rank(e: &ProjectionField) -> Result<usize> {
    e.rank()
        .ok_or_else(|| Error::InvalidBundle("rank differs between components".into()))
}

/// Extends `partial` (vertex → `N x k` sections) to `k` global sections with
/// the default rank slack of one.
pub fn extend_frame(
    e: &ProjectionField,
    partial: &BTreeMap<usize, CMat>,
    k: usize,
    cfg: &ToleranceConfig,
) -> Result<FrameSet> {
    extend_frame_with_slack(e, partial, k, 1, cfg)
}

/// As [`extend_frame`] but requiring `rank(E) >= k + slack`.
///
/// Attempt 0 copies the nearest prescribed section and projects it into each
/// fibre. Later attempts blend toward a random constant section over a collar
/// whose width shrinks with the attempt number. Prescribed sections are copied
/// unchanged.
pub fn extend_frame_with_slack(
    e: &ProjectionField,
    partial: &BTreeMap<usize, CMat>,
    k: usize,
    slack: usize,
    cfg: &ToleranceConfig,
) -> Result<FrameSet> {
    let rank = constant_rank(e)?;
    if rank < k + slack {
        return Err(Error::RankSlack {
            required: k + slack,
            available: rank,
        });
    }
    let n = e.ambient_dim;
    for (&v, s) in partial {
        if v >= e.len() {
            return Err(Error::Shape(format!("partial frame names vertex {v} outside the mesh")));
        }
        if s.shape() != (n, k) {
            return Err(Error::Shape(format!(
                "partial frame at vertex {v} has shape {:?}",
                s.shape()
            )));
        }
    }
    for (&v, s) in partial {
        let off = linalg::op_norm(&(&e.proj[v] * s - s));
        if off > 10.0 * cfg.idem_tol * linalg::op_norm(s).max(1.0) {
            return Err(Error::InvalidBundle(format!(
                "partial section leaves the fibre at vertex {v}"
            )));
        }
        let sv = linalg::singular_values(s);
        if k > 0 && sv[k - 1] <= cfg.rank_cutoff(n, sv[0]).max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidBundle(format!(
                "partial sections dependent at vertex {v}"
            )));
        }
    }
    if k == 0 {
        return Ok(FrameSet::new(0, vec![linalg::zeros(n, 0); e.len()]));
    }
    if slack == 0 && partial.is_empty() && k == rank {
        return global_frame(e, cfg);
    }

    let sources: Vec<usize> = partial.keys().copied().collect();
    let (dist, origin) = bfs_distances(&e.base, &sources);
    let reach = dist.iter().filter(|&&d| d != usize::MAX).max().copied().unwrap_or(0);
    let scale = if partial.is_empty() {
        1.0
    } else {
        partial.values().map(linalg::op_norm).sum::<f64>() / partial.len() as f64
    };
    let mut rng = frame_rng(cfg, 1);
    let mut last = String::new();
    for attempt in 0..EXTENSION_ATTEMPTS {
        let c = linalg::orthonormalize(&linalg::random_matrix(&mut rng, n, k, e.scalar), 1e-6)
            .unwrap_or_else(|| linalg::random_matrix(&mut rng, n, k, e.scalar))
            .scale(scale);
        let collar = if attempt == 0 {
            f64::INFINITY
        } else {
            (reach as f64 / (1u64 << ((attempt - 1) % 4)) as f64).max(1.0)
        };
        let sections: Vec<CMat> = (0..e.len())
            .map(|y| {
                if let Some(s) = partial.get(&y) {
                    return s.clone();
                }
                let target = if dist[y] == usize::MAX {
                    c.clone()
                } else {
                    let t = (dist[y] as f64 / collar).min(1.0);
                    partial[&origin[y]].scale(1.0 - t) + c.scale(t)
                };
                e.scalar.fix(&e.proj[y] * target)
            })
            .collect();
        let frame = FrameSet::new(k, sections);
        match frame.validate(e, cfg) {
            Ok(()) => return Ok(frame),
            Err(err) => last = err.to_string(),
        }
    }
    Err(Error::ExtensionFailure {
        attempts: EXTENSION_ATTEMPTS,
        seed: cfg.seed,
        reason: last,
    })
}

/// Orthonormal frame of `e` at every vertex (`k = rank(E)`), or
/// extension-failure when none was found.
pub fn global_frame(e: &ProjectionField, cfg: &ToleranceConfig) -> Result<FrameSet> {
    let rank = constant_rank(e)?;
    let n = e.ambient_dim;
    if rank == 0 {
        return Ok(FrameSet::new(0, vec![linalg::zeros(n, 0); e.len()]));
    }
    let last = match structured_frame(e, &e.base, cfg) {
        Ok(sections) => {
            let frame = FrameSet::new(rank, sections);
            match frame.validate(e, cfg) {
                Ok(()) => return Ok(frame),
                Err(err) => err.to_string(),
            }
        }
        Err(err) => err.to_string(),
    };
    // Projected random constants succeed for nearly constant bundles.
    let mut rng = frame_rng(cfg, 2);
    for _ in 0..EXTENSION_ATTEMPTS {
        let c = linalg::random_matrix(&mut rng, n, rank, e.scalar);
        let sections: Vec<CMat> = e.proj.iter().map(|p| e.scalar.fix(p * &c)).collect();
        let frame = FrameSet::new(rank, sections);
        if frame.validate(e, cfg).is_ok() {
            return Ok(frame);
        }
    }
    Err(Error::ExtensionFailure {
        attempts: EXTENSION_ATTEMPTS + 1,
        seed: cfg.seed,
        reason: last,
    })
}

fn structured_frame(e: &ProjectionField, mesh: &BaseMesh, cfg: &ToleranceConfig) -> Result<Vec<CMat>> {
    match mesh.kind {
        MeshKind::Circle if is_hamiltonian_loop(mesh) => loop_frame(e, &mesh.loops[0], cfg),
        MeshKind::Product => match &mesh.slices {
            Some(s) => product_frame(e, &s.factor, s.count, cfg),
            None => tree_frame(e, mesh, cfg),
        },
        _ => tree_frame(e, mesh, cfg),
    }
}

fn is_hamiltonian_loop(mesh: &BaseMesh) -> bool {
    let Some(lp) = mesh.loops.first() else {
        return false;
    };
    let mut seen = vec![false; mesh.vertices];
    lp.len() == mesh.vertices && lp.iter().all(|&v| !std::mem::replace(&mut seen[v], true))
}

/// Aligns an orthonormal frame to the fibre of `p` by the polar factor.
fn transport_step(p: &ProjectionField, from: &CMat, to: usize, cfg: &ToleranceConfig, prev: usize) -> Result<CMat> {
    let gap = p.edge_gap(prev, to);
    if gap >= cfg.max_edge_gap() {
        return Err(Error::TransportUndefined { a: prev, b: to, gap });
    }
    let b = p.basis_at(to);
    let overlap = b.adjoint() * from;
    let (u, _, v) = linalg::thin_svd(&overlap);
    Ok(p.scalar.fix(b * (u * v.adjoint())))
}

fn loop_frame(e: &ProjectionField, lp: &[usize], cfg: &ToleranceConfig) -> Result<Vec<CMat>> {
    let m = lp.len();
    let start = e.basis_at(lp[0]);
    let mut frames = vec![start.clone()];
    for j in 1..=m {
        let next = frames[j - 1].clone();
        frames.push(transport_step(e, &next, lp[j % m], cfg, lp[j - 1])?);
    }
    let holonomy = e.scalar.fix(start.adjoint() * &frames[m]);
    let path = UnitaryPath::new(&holonomy, e.scalar)?;
    let mut out = vec![linalg::zeros(0, 0); e.len()];
    for j in 0..m {
        let g = path.at(j as f64 / m as f64);
        out[lp[j]] = e.scalar.fix(&frames[j] * g.adjoint());
    }
    Ok(out)
}

fn tree_frame(e: &ProjectionField, mesh: &BaseMesh, cfg: &ToleranceConfig) -> Result<Vec<CMat>> {
    let adj = mesh.adjacency();
    let mut out: Vec<Option<CMat>> = vec![None; mesh.vertices];
    for root in 0..mesh.vertices {
        if out[root].is_some() {
            continue;
        }
        out[root] = Some(e.basis_at(root));
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if out[w].is_none() {
                    let f = transport_step(e, out[v].as_ref().expect("visited"), w, cfg, v)?;
                    out[w] = Some(f);
                    queue.push_back(w);
                }
            }
        }
    }
    Ok(out.into_iter().map(|f| f.expect("all vertices visited")).collect())
}

fn product_frame(e: &ProjectionField, factor: &BaseMesh, count: usize, cfg: &ToleranceConfig) -> Result<Vec<CMat>> {
    let nx = factor.vertices;
    let slice0 = ProjectionField {
        base: std::sync::Arc::new(factor.clone()),
        ambient_dim: e.ambient_dim,
        scalar: e.scalar,
        proj: e.proj[..nx].to_vec(),
    };
    let mut out = structured_frame(&slice0, factor, cfg)?;
    for t in 1..count {
        for v in 0..nx {
            let prev = (t - 1) * nx + v;
            let f = transport_step(e, &out[prev], t * nx + v, cfg, prev)?;
            out.push(f);
        }
    }
    Ok(out)
}

/// Continuous path `γ(t)` of unitaries with `γ(0) = I` and `γ(1) = H`,
/// built from a Givens factorization `H = G_1^* ... G_k^* D`.
/// Real scalars require `det H = +1` and keep the path in `SO(r)`.
struct UnitaryPath {
    r: usize,
    /// `(row j, row i, θ, φ, ψ)` for `G = [cos θ e^{iφ}, sin θ e^{iψ}; -sin θ e^{-iψ}, cos θ e^{-iφ}]`.
    rotations: Vec<(usize, usize, f64, f64, f64)>,
    last_phase: f64,
}

impl UnitaryPath {
    fn new(h: &CMat, scalar: Scalar) -> Result<Self> {
        let r = h.nrows();
        let mut a = h.clone();
        let mut rotations = Vec::new();
        for j in 0..r {
            for i in j + 1..r {
                let (x, y) = (a[(j, j)], a[(i, j)]);
                let rho = (x.norm_sqr() + y.norm_sqr()).sqrt();
                if rho == 0.0 {
                    continue;
                }
                let (alpha, beta) = (x.conj() / rho, y.conj() / rho);
                let g = givens(alpha, beta);
                apply_rows(&mut a, j, i, &g);
                let (theta, phi, psi) = match scalar {
                    Scalar::Real => (beta.re.atan2(alpha.re), 0.0, 0.0),
                    Scalar::Complex => (beta.norm().atan2(alpha.norm()), alpha.arg(), beta.arg()),
                };
                rotations.push((j, i, theta, phi, psi));
            }
        }
        // `a` is now diagonal with ones except possibly the last entry.
        let d = if r == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            a[(r - 1, r - 1)]
        };
        let last_phase = match scalar {
            Scalar::Real if d.re < 0.0 => {
                return Err(Error::ExtensionFailure {
                    attempts: 0,
                    seed: 0,
                    reason: "frame holonomy reverses orientation".into(),
                })
            }
            Scalar::Real => 0.0,
            Scalar::Complex => d.arg(),
        };
        Ok(Self {
            r,
            rotations,
            last_phase,
        })
    }

    fn at(&self, t: f64) -> CMat {
        let mut m = linalg::identity(self.r);
        if self.r > 0 {
            m[(self.r - 1, self.r - 1)] = Complex64::from_polar(1.0, self.last_phase * t);
        }
        // γ(t) = G_1(t)^* ... G_k(t)^* D(t): apply from the innermost factor.
        for &(j, i, theta, phi, psi) in self.rotations.iter().rev() {
            let alpha = Complex64::from_polar((theta * t).cos(), phi * t);
            let beta = Complex64::from_polar((theta * t).sin(), psi * t);
            let g = givens(alpha, beta).adjoint();
            apply_rows(&mut m, j, i, &g);
        }
        m
    }
}

fn givens(alpha: Complex64, beta: Complex64) -> CMat {
    CMat::from_row_slice(2, 2, &[alpha, beta, -beta.conj(), alpha.conj()])
}

fn apply_rows(a: &mut CMat, j: usize, i: usize, g: &CMat) {
    for c in 0..a.ncols() {
        let (x, y) = (a[(j, c)], a[(i, c)]);
        a[(j, c)] = g[(0, 0)] * x + g[(0, 1)] * y;
        a[(i, c)] = g[(1, 0)] * x + g[(1, 1)] * y;
    }
}
