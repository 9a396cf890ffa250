//! Noise-level discretisation and the scalings of the consistency parameterisation.
//!
//! Noise levels run from `eps` (clean) to `k_max` (pure noise). A noised
//! action at level `k` is `a + k·z` with `z ~ N(0, I)`, so `k` is a standard
//! deviation.

use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 0.002;
pub const DEFAULT_K_MAX: f64 = 80.0;
pub const DEFAULT_STEPS: usize = 40;
pub const DEFAULT_RHO: f64 = 7.0;
pub const DEFAULT_SIGMA_DATA: f64 = 0.5;

/// Karras-style boundaries `k_1 < … < k_M`:
/// `k_i = (eps^(1/ρ) + (i−1)/(M−1)·(k_max^(1/ρ) − eps^(1/ρ)))^ρ`,
/// with both endpoints pinned exactly.
pub fn boundaries(m: usize, eps: f64, k_max: f64, rho: f64) -> Result<Vec<f64>> {
    if m < 2 {
        return Err(Error::config(format!("need at least 2 boundaries, got {m}")));
    }
    if !(eps > 0.0 && eps < k_max && k_max.is_finite()) {
        return Err(Error::config(format!(
            "invalid noise range: need 0 < eps < k_max, got eps={eps}, k_max={k_max}"
        )));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::config(format!("rho must be positive, got {rho}")));
    }
    let lo = eps.powf(1.0 / rho);
    let hi = k_max.powf(1.0 / rho);
    let mut ks: Vec<f64> = (0..m)
        .map(|i| (lo + i as f64 / (m - 1) as f64 * (hi - lo)).powf(rho))
        .collect();
    ks[0] = eps;
    ks[m - 1] = k_max;
    Ok(ks)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    pub eps: f64,
    pub k_max: f64,
    pub rho: f64,
    pub sigma_data: f64,
    ks: Vec<f64>,
}

impl Default for DiffusionSchedule {
    fn default() -> Self {
        Self::new(
            DEFAULT_STEPS,
            DEFAULT_EPS,
            DEFAULT_K_MAX,
            DEFAULT_RHO,
            DEFAULT_SIGMA_DATA,
        )
        .expect("default schedule is valid")
    }
}

impl DiffusionSchedule {
    pub fn new(m: usize, eps: f64, k_max: f64, rho: f64, sigma_data: f64) -> Result<Self> {
        if !(sigma_data > 0.0 && sigma_data.is_finite()) {
            return Err(Error::config(format!("sigma_data must be positive, got {sigma_data}")));
        }
        Ok(Self {
            eps,
            k_max,
            rho,
            sigma_data,
            ks: boundaries(m, eps, k_max, rho)?,
        })
    }

    /// Number of boundaries `M`.
    pub fn len(&self) -> usize {
        self.ks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ks.is_empty()
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.ks
    }

    /// Boundary by zero-based index (`k(0) == eps`).
    pub fn k(&self, idx: usize) -> f64 {
        self.ks[idx]
    }

    /// `(c_skip, c_out)` at level `k`:
    /// `c_skip = σ²/((k−eps)² + σ²)`, `c_out = σ(k−eps)/√(σ² + k²)`.
    pub fn scalings(&self, k: f64) -> Result<(f64, f64)> {
        if !(k >= self.eps && k <= self.k_max) {
            return Err(Error::usage(format!(
                "noise level {k} outside [{}, {}]",
                self.eps, self.k_max
            )));
        }
        Ok(self.scalings_unchecked(k))
    }

    pub(crate) fn scalings_unchecked(&self, k: f64) -> (f64, f64) {
        let s2 = self.sigma_data * self.sigma_data;
        let d = k - self.eps;
        let c_skip = s2 / (d * d + s2);
        let c_out = self.sigma_data * d / (s2 + k * k).sqrt();
        (c_skip, c_out)
    }

    /// Scalar time feature fed to the networks: `k / k_max`.
    pub fn time_feature(&self, k: f64) -> f64 {
        k / self.k_max
    }
}

/// Forward noising: `a + k·z`.
pub fn perturb(a: &[f64], k: f64, z: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), z.len());
    a.iter().zip(z).map(|(a, z)| a + k * z).collect()
}

/// One explicit Euler step of the probability-flow ODE `da/dk = −k·score(a, k)`
/// from `k_from` down to `k_to`.
pub fn euler_step<F>(a: &[f64], k_from: f64, k_to: f64, score: F) -> Result<Vec<f64>>
where
    F: FnOnce(&[f64], f64) -> Vec<f64>,
{
    if !(k_to < k_from) {
        return Err(Error::usage(format!(
            "euler step must decrease the noise level ({k_from} -> {k_to})"
        )));
    }
    let s = score(a, k_from);
    let dk = k_to - k_from;
    Ok(a.iter().zip(&s).map(|(a, s)| a + dk * (-k_from * s)).collect())
}
