//! Numerical tolerances shared by every operation.

use crate::error::{Error, Result};

/// Default seed used when neither the caller nor `INDEXBUNDLE_SEED` supplies one.
pub const DEFAULT_SEED: u64 = 20_240_917;

/// Tolerances and randomness controls.
///
/// Singular values below `rank_scale * max_dim * f64::EPSILON * sigma_max`
/// count as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ToleranceConfig {
    pub rank_scale: f64,
    /// Idempotency and Hermiticity residual bound for stored projectors.
    pub idem_tol: f64,
    /// Edge gaps must satisfy `||P_x - P_y|| <= 1 - edge_delta`.
    pub edge_delta: f64,
    /// Relative margin for `im L_x + V_x = F_x`.
    pub trans_margin: f64,
    /// Relative smallest singular value a projected frame must keep.
    pub frame_floor: f64,
    /// Smallest singular value accepted as "invertible".
    pub sigma_floor: f64,
    /// Random draws allowed for searches (transversal mixing, frames, E1).
    pub search_budget: usize,
    pub seed: u64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            rank_scale: 32.0,
            idem_tol: 1e-8,
            edge_delta: 0.5,
            trans_margin: 1e-6,
            frame_floor: 1e-3,
            sigma_floor: 1e-6,
            search_budget: 64,
            seed: DEFAULT_SEED,
        }
    }
}

impl ToleranceConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    /// Default configuration with the seed taken from `INDEXBUNDLE_SEED` when set.
    pub fn from_env() -> Result<Self> {
        let mut cfg = Self::default();
        if let Ok(raw) = std::env::var("INDEXBUNDLE_SEED") {
            cfg.seed = raw.trim().parse().map_err(|_| Error::Parse {
                path: "env:INDEXBUNDLE_SEED".into(),
                message: format!("not an unsigned integer: {raw:?}"),
            })?;
        }
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        let positive = [
            ("rank_scale", self.rank_scale),
            ("idem_tol", self.idem_tol),
            ("trans_margin", self.trans_margin),
            ("frame_floor", self.frame_floor),
            ("sigma_floor", self.sigma_floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Shape(format!("tolerance {name} must be positive, got {v}")));
            }
        }
        if !(self.edge_delta > 0.0 && self.edge_delta < 1.0) {
            return Err(Error::Shape(format!(
                "edge_delta must lie in (0,1), got {}",
                self.edge_delta
            )));
        }
        if self.search_budget == 0 {
            return Err(Error::Shape("search_budget must be at least 1".into()));
        }
        Ok(())
    }

    /// Largest admissible operator-norm gap between projectors on an edge.
    pub fn max_edge_gap(&self) -> f64 {
        1.0 - self.edge_delta
    }

    /// Absolute cutoff below which a singular value is numerically zero.
    pub fn rank_cutoff(&self, max_dim: usize, sigma_max: f64) -> f64 {
        self.rank_scale * (max_dim.max(1) as f64) * f64::EPSILON * sigma_max
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = ToleranceConfig::default();
        cfg.check().unwrap();
        assert_eq!(cfg.rank_scale, 32.0);
        assert_eq!(cfg.idem_tol, 1e-8);
        assert_eq!(cfg.edge_delta, 0.5);
    }

    #[test]
    fn rejects_bad_edge_delta() {
        let cfg = ToleranceConfig {
            edge_delta: 1.0,
            ..Default::default()
        };
        assert!(cfg.check().is_err());
        let cfg = ToleranceConfig {
            idem_tol: 0.0,
            ..Default::default()
        };
        assert!(cfg.check().is_err());
    }
}
