use super::{aligned, EvalError};
use crate::plan_ir::{encode_plan, fingerprint, PlanTree};
use crate::scorer::{embed_batch, ScorerParams};
use crate::tensor::DenseMatrix;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt::Write;

/// Singular values below this count as collapsed dimensions.
pub const COLLAPSE_THRESHOLD: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Number of embeddings.
    pub population: usize,
    pub dim: usize,
    /// Descending, clamped at zero.
    pub sigma: Vec<f64>,
    pub log10_sigma: Vec<f64>,
    pub collapse_count: usize,
    pub threshold: f64,
    pub trace: f64,
    /// Sum of the raw eigenvalues before clamping.
    pub eigen_sum: f64,
}

/// Spectrum of `C = (1/M) Σ (z_i − z̄)(z_i − z̄)ᵀ` over the rows of `z`.
/// `C` is symmetric positive semidefinite, so its singular values are its
/// eigenvalues.
pub fn spectrum_from_embeddings(z: &DenseMatrix) -> Result<SpectrumReport, EvalError> {
    let (m, d) = (z.rows, z.cols);
    if m < 2 {
        return Err(EvalError::TooFewPlans(m));
    }
    let zm = DMatrix::from_row_slice(m, d, &z.data);
    let mean = zm.row_mean();
    let centered = DMatrix::from_fn(m, d, |i, j| zm[(i, j)] - mean[j]);
    let cov = (centered.transpose() * &centered) / m as f64;
    let trace = cov.trace();
    let eig = SymmetricEigen::new(cov).eigenvalues;
    let eigen_sum = eig.iter().sum();
    let mut sigma: Vec<f64> = eig.iter().map(|&x| x.max(0.0)).collect();
    sigma.sort_by(|a, b| b.total_cmp(a));
    let log10_sigma = sigma.iter().map(|s| s.max(f64::MIN_POSITIVE).log10()).collect();
    Ok(SpectrumReport {
        population: m,
        dim: d,
        collapse_count: sigma.iter().filter(|&&s| s < COLLAPSE_THRESHOLD).count(),
        threshold: COLLAPSE_THRESHOLD,
        sigma,
        log10_sigma,
        trace,
        eigen_sum,
    })
}

/// Embeds the distinct plans (by fingerprint) and analyses their spectrum.
pub fn embedding_spectrum(params: &ScorerParams, plans: &[&PlanTree]) -> Result<SpectrumReport, EvalError> {
    let mut seen = HashSet::new();
    let unique: Vec<_> =
        plans.iter().filter(|p| seen.insert(fingerprint(p))).map(|p| encode_plan(p, &params.scaler)).collect();
    if unique.len() < 2 {
        return Err(EvalError::TooFewPlans(unique.len()));
    }
    let mut rows = Vec::with_capacity(unique.len() * params.architecture().embedding_dim());
    let mut dim = 0;
    for chunk in unique.chunks(512) {
        let z = embed_batch(params, &chunk.iter().collect::<Vec<_>>())?;
        dim = z.cols;
        rows.extend(z.data);
    }
    spectrum_from_embeddings(&DenseMatrix::from_vec(unique.len(), dim, rows))
}

impl SpectrumReport {
    /// `k,sigma,log10_sigma` with 1-based `k`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,sigma,log10_sigma\n");
        for (k, (sg, lg)) in self.sigma.iter().zip(&self.log10_sigma).enumerate() {
            let _ = writeln!(s, "{},{:e},{}", k + 1, sg, lg);
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "plans {}  dim {}  collapsed {} (sigma < {:e})\n\n",
            self.population, self.dim, self.collapse_count, self.threshold
        );
        let body: Vec<[String; 3]> = self
            .sigma
            .iter()
            .zip(&self.log10_sigma)
            .enumerate()
            .map(|(k, (sg, lg))| [(k + 1).to_string(), format!("{sg:.3e}"), format!("{lg:.3}")])
            .collect();
        s.push_str(&aligned(&["k", "sigma", "log10_sigma"], &body));
        s
    }
}
