//! Order parameter and height statistics, batch-means errors, tails and
//! finite-size scaling fits.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::model::{FieldConfig, PinningSpec};
use crate::sampler::Trace;

pub const DEFAULT_BATCHES: usize = 16;
pub const MIN_BATCHES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObservableSnapshot {
    /// Number of pinned sites.
    pub nu: usize,
    pub mean_height: f64,
    pub center_height: f64,
    pub max_height: f64,
    /// `X / |dW|` with `W` = clamped and pinned sites plus the exterior.
    pub boundary_moment: Option<f64>,
}

/// Sites counted as pinned: `phi <= a` for a square well, the atom mask for
/// delta pinning, none otherwise.
pub fn pinned_count(cfg: &FieldConfig, pin: &PinningSpec) -> usize {
    match *pin {
        PinningSpec::SquareWell { a, .. } => cfg.heights.iter().filter(|&&h| h <= a).count(),
        PinningSpec::Delta { .. } => cfg.pinned.iter().filter(|&&p| p).count(),
        PinningSpec::None => 0,
    }
}

pub fn snapshot(lat: &Lattice, cfg: &FieldConfig, pin: &PinningSpec) -> ObservableSnapshot {
    let n = cfg.len() as f64;
    ObservableSnapshot {
        nu: pinned_count(cfg, pin),
        mean_height: cfg.heights.iter().sum::<f64>() / n,
        center_height: cfg.heights[lat.center()],
        max_height: cfg.heights.iter().copied().fold(0.0, f64::max),
        boundary_moment: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    /// `None` when fewer than [`MIN_BATCHES`] batches are available.
    pub se: Option<f64>,
    pub batches: usize,
    /// Integrated autocorrelation time (iid samples give 0.5).
    pub tau_int: Option<f64>,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            se: Some(0.0),
            batches: 0,
            tau_int: None,
        }
    }

    /// Standard error, treating a low-data flag as infinite uncertainty.
    pub fn se_or_inf(&self) -> f64 {
        self.se.unwrap_or(f64::INFINITY)
    }

    pub fn is_low_data(&self) -> bool {
        self.se.is_none()
    }
}

/// Mean with batch-means standard error over `batches` contiguous blocks.
/// Leading samples that do not fill a batch are dropped from the error
/// estimate but not from the mean.
pub fn batch_means(series: &[f64], batches: usize) -> Result<Estimate> {
    if series.is_empty() {
        return Err(Error::Parameter("cannot estimate from an empty series".into()));
    }
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let b = batches.min(n);
    if b < MIN_BATCHES {
        return Ok(Estimate {
            value: mean,
            se: None,
            batches: b,
            tau_int: None,
        });
    }
    let len = n / b;
    let tail = &series[n - len * b..];
    let block_means: Vec<f64> = tail
        .chunks_exact(len)
        .map(|c| c.iter().sum::<f64>() / len as f64)
        .collect();
    let bm = block_means.iter().sum::<f64>() / b as f64;
    let var_blocks = block_means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (b - 1) as f64;
    let var_samples = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1).max(1) as f64;
    let tau = (var_samples > 0.0).then(|| 0.5 * len as f64 * var_blocks / var_samples);
    Ok(Estimate {
        value: mean,
        se: Some((var_blocks / b as f64).sqrt()),
        batches: b,
        tau_int: tau,
    })
}

/// `rho_N = E[nu_N] / |Lambda_N|`.
pub fn estimate_rho(trace: &Trace, lat: &Lattice) -> Result<Estimate> {
    let n = lat.n_sites() as f64;
    let series: Vec<f64> = trace.snapshots.iter().map(|s| s.nu as f64 / n).collect();
    batch_means(&series, DEFAULT_BATCHES)
}

/// Batch-means estimate of any per-snapshot quantity.
pub fn estimate_with<F: Fn(&ObservableSnapshot) -> f64>(trace: &Trace, f: F) -> Result<Estimate> {
    let series: Vec<f64> = trace.snapshots.iter().map(f).collect();
    batch_means(&series, DEFAULT_BATCHES)
}

/// Empirical `P(nu_N > M)`.
pub fn tail_probability(trace: &Trace, m: i64) -> Result<Estimate> {
    estimate_with(trace, |s| ((s.nu as i64) > m) as u8 as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ScalingModel {
    /// `alpha`
    Constant,
    /// `c / N`
    InverseN,
    /// `alpha + beta log N`
    Log,
    /// `alpha + beta sqrt(log N)`
    SqrtLog,
    /// `alpha + beta N`
    Linear,
}

impl ScalingModel {
    fn basis(&self, n: f64) -> Vec<f64> {
        match self {
            Self::Constant => vec![1.0],
            Self::InverseN => vec![1.0 / n],
            Self::Log => vec![1.0, n.ln()],
            Self::SqrtLog => vec![1.0, n.ln().sqrt()],
            Self::Linear => vec![1.0, n],
        }
    }

    pub fn predict(&self, coefficients: &[f64], n: f64) -> f64 {
        self.basis(n).iter().zip(coefficients).map(|(b, c)| b * c).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingFit {
    pub model: ScalingModel,
    pub coefficients: Vec<f64>,
    pub coefficient_se: Vec<f64>,
    /// Raw residuals `value - prediction`.
    pub residuals: Vec<f64>,
    /// Euclidean norm of the raw residuals.
    pub residual_norm: f64,
    /// `sum (residual / se)^2`.
    pub chi2: f64,
}

/// Weighted least squares with weights `1 / se^2`. If every `se` is zero the
/// fit is unweighted; a mix of zero and positive errors is rejected.
pub fn fit_scaling(points: &[(f64, f64, f64)], model: ScalingModel) -> Result<ScalingFit> {
    let k = model.basis(1.0).len();
    if points.len() < 3 || points.len() < k {
        return Err(Error::Fit(format!("need at least 3 points, got {}", points.len())));
    }
    let all_zero = points.iter().all(|p| p.2 == 0.0);
    if !all_zero && points.iter().any(|p| !(p.2 > 0.0 && p.2.is_finite())) {
        return Err(Error::Fit("standard errors must be all positive or all zero".into()));
    }
    let weight = |se: f64| if all_zero { 1.0 } else { 1.0 / (se * se) };
    let m = points.len();
    let x = DMatrix::from_fn(m, k, |i, j| model.basis(points[i].0)[j]);
    let w = DVector::from_iterator(m, points.iter().map(|p| weight(p.2)));
    let y = DVector::from_iterator(m, points.iter().map(|p| p.1));
    let xtw = x.transpose() * DMatrix::from_diagonal(&w);
    let normal = &xtw * &x;
    let diag: f64 = normal.diagonal().iter().product();
    if !(normal.determinant().abs() > 1e-12 * diag.abs()) {
        return Err(Error::Fit("singular design matrix".into()));
    }
    let inv = normal
        .try_inverse()
        .ok_or_else(|| Error::Fit("singular design matrix".into()))?;
    let coef = &inv * (&xtw * &y);
    let resid = &y - &x * &coef;
    let chi2 = resid.iter().zip(w.iter()).map(|(r, w)| r * r * w).sum::<f64>();
    // unweighted fits scale the covariance by the residual variance
    let scale = if all_zero && m > k { chi2 / (m - k) as f64 } else { 1.0 };
    Ok(ScalingFit {
        model,
        coefficients: coef.iter().copied().collect(),
        coefficient_se: (0..k).map(|i| (inv[(i, i)] * scale).sqrt()).collect(),
        residual_norm: resid.norm(),
        residuals: resid.iter().copied().collect(),
        chi2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FieldConfig;

    fn trace_of(nus: &[usize]) -> Trace {
        Trace {
            snapshots: nus
                .iter()
                .map(|&nu| ObservableSnapshot {
                    nu,
                    mean_height: 0.0,
                    center_height: 0.0,
                    max_height: 0.0,
                    boundary_moment: None,
                })
                .collect(),
            proposed: 0,
            accepted: 0,
            final_config: FieldConfig::zeros(1),
        }
    }

    #[test]
    fn pinned_counts() {
        let cfg = FieldConfig::from_heights(vec![0.0, 0.05, 2.0]).unwrap();
        assert_eq!(pinned_count(&cfg, &PinningSpec::SquareWell { a: 0.1, b: 1.0 }), 2);
        assert_eq!(pinned_count(&cfg, &PinningSpec::None), 0);
        let all = FieldConfig::with_pinned(vec![0.0; 4], vec![true; 4]).unwrap();
        assert_eq!(pinned_count(&all, &PinningSpec::Delta { epsilon: 0.1 }), 4);
        let three = FieldConfig::with_pinned(vec![0.0, 0.0, 0.0, 1.0], vec![true, true, true, false]).unwrap();
        assert_eq!(pinned_count(&three, &PinningSpec::Delta { epsilon: 0.1 }), 3);
    }

    #[test]
    fn constant_trace_has_zero_error() {
        let lat = Lattice::new(1, 4).unwrap();
        let est = estimate_rho(&trace_of(&[4; 64]), &lat).unwrap();
        assert_eq!(est.value, 1.0);
        assert_eq!(est.se, Some(0.0));
    }

    #[test]
    fn short_trace_flags_low_data() {
        let lat = Lattice::new(1, 4).unwrap();
        let est = estimate_rho(&trace_of(&[1, 2, 3]), &lat).unwrap();
        assert!(est.is_low_data());
        assert!((est.value - 0.5).abs() < 1e-15);
        assert!(estimate_rho(&trace_of(&[]), &lat).is_err());
    }

    #[test]
    fn tail_edges() {
        let t = trace_of(&[0, 1, 2, 3, 4, 4, 1, 0, 2, 3, 1, 2, 0, 4, 4, 3]);
        assert_eq!(tail_probability(&t, 4).unwrap().value, 0.0);
        assert_eq!(tail_probability(&t, -1).unwrap().value, 1.0);
        let mut prev = 1.0;
        for m in -1..=5 {
            let p = tail_probability(&t, m).unwrap().value;
            assert!(p <= prev);
            prev = p;
        }
    }

    #[test]
    fn exact_synthetic_fits() {
        let inv: Vec<_> = [4.0, 8.0, 16.0, 32.0].iter().map(|&n| (n, 2.0 / n, 0.0)).collect();
        let fit = fit_scaling(&inv, ScalingModel::InverseN).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12);
        assert!(fit.residual_norm < 1e-12);

        let log: Vec<_> = [4.0, 8.0, 16.0]
            .iter()
            .map(|&n: &f64| (n, 1.0 + 0.5 * n.ln(), 0.1))
            .collect();
        let fit = fit_scaling(&log, ScalingModel::Log).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-10);
        assert!((fit.coefficients[1] - 0.5).abs() < 1e-10);
        assert!(fit.chi2 < 1e-18);
    }

    #[test]
    fn fit_errors() {
        assert!(fit_scaling(&[(1.0, 1.0, 0.1), (2.0, 1.0, 0.1)], ScalingModel::Constant).is_err());
        // identical abscissae make the two-parameter design singular
        let same = [(8.0, 1.0, 0.1), (8.0, 1.1, 0.1), (8.0, 0.9, 0.1)];
        assert!(matches!(fit_scaling(&same, ScalingModel::Log), Err(Error::Fit(_))));
        let mixed = [(8.0, 1.0, 0.0), (16.0, 1.1, 0.1), (32.0, 0.9, 0.1)];
        assert!(fit_scaling(&mixed, ScalingModel::Log).is_err());
    }

    #[test]
    fn batch_means_of_iid_noise() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..64_000).map(|_| rng.random::<f64>()).collect();
        let est = batch_means(&xs, 16).unwrap();
        let want = (1.0 / 12.0f64 / 64_000.0).sqrt();
        assert!((est.se.unwrap() / want - 1.0).abs() < 0.6);
        let tau = est.tau_int.unwrap();
        assert!(tau > 0.2 && tau < 1.0, "{tau}");
    }
}
