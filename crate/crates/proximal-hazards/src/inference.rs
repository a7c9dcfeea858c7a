//! Joint inference for two-stage fits: stacked estimating-equation sandwich
//! covariance and the nonparametric (case) bootstrap.
//!
//! The stacked parameter vector is `theta = (c_1, ..., c_nW, beta)` with one
//! coefficient block per first stage followed by the second-stage
//! coefficients. With per-subject estimating functions `U_i(theta)` stacked
//! the same way, the covariance of `theta_hat` is approximated by the
//! sandwich `(1/n) D^{-1} V D^{-T}` where `D = (1/n) sum_i dU_i/dtheta^T`
//! and `V = (1/n) sum_i U_i U_i^T`.
//!
//! `D` is block lower triangular: first-stage functions do not depend on the
//! second-stage coefficients, so the upper-right block is identically zero.
//! The lower-left block (the sensitivity of the second stage to first-stage
//! coefficients) is assembled analytically by the chain rule through each
//! fitted predictor, which is linear in its coefficients for every NCO kind;
//! a central-difference check validates it in the tests.

use rayon::prelude::*;

use crate::data::ProximalDataset;
use crate::error::{Error, Result};
use crate::hazards::mean_score_coefficient_derivative;
use crate::linalg::{lu_factor, sample_covariance, Mat};
use crate::scalar::{from_f64, from_usize, Scalar};
use crate::sim::substream_rng;
use crate::two_stage::{p2sls_fit, second_stage_design, TwoStageFit};
use crate::data::Status;

use rand::Rng;

/// Stacked estimating-equation system of a two-stage fit.
#[derive(Debug, Clone)]
pub struct StackedSystem<T> {
    /// Concatenated coefficients, first stages then the second stage.
    pub theta: Vec<T>,
    pub parameter_names: Vec<String>,
    /// Per-subject stacked estimating-function values (n x dim).
    pub u_rows: Mat<T>,
    /// Block lower-triangular derivative matrix `(1/n) sum_i dU_i/dtheta^T`.
    pub d_matrix: Mat<T>,
    /// Empirical second moment `(1/n) sum_i U_i U_i^T`.
    pub v_matrix: Mat<T>,
    /// Start offset of each first-stage coefficient block.
    pub first_stage_offsets: Vec<usize>,
    /// Start offset of the second-stage coefficient block.
    pub beta_offset: usize,
}

impl<T: Scalar> StackedSystem<T> {
    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}

/// Assemble the stacked system for a fitted two-stage model.
pub fn stacked_system<T: Scalar>(
    fit: &TwoStageFit<T>,
    dataset: &ProximalDataset<T>,
) -> Result<StackedSystem<T>> {
    let n = dataset.n();
    let p = fit.second_stage.p();
    let q_blocks: Vec<usize> = fit.first_stages.iter().map(|fs| fs.q()).collect();
    let q_total: usize = q_blocks.iter().sum();
    let dim = q_total + p;

    if fit.second_stage.score_residuals.rows() != n {
        return Err(Error::Dimension(
            "fit and dataset have different subject counts".into(),
        ));
    }

    let mut first_stage_offsets = Vec::with_capacity(q_blocks.len());
    let mut offset = 0usize;
    for q in &q_blocks {
        first_stage_offsets.push(offset);
        offset += q;
    }
    let beta_offset = offset;

    // stacked per-subject estimating functions
    let mut u_rows = Mat::zeros(n, dim);
    for (fs, &off) in fit.first_stages.iter().zip(&first_stage_offsets) {
        for i in 0..n {
            let src = fs.estimating_functions.row(i);
            let dst = u_rows.row_mut(i);
            dst[off..off + src.len()].copy_from_slice(src);
        }
    }
    for i in 0..n {
        let src = fit.second_stage.score_residuals.row(i);
        let dst = u_rows.row_mut(i);
        dst[beta_offset..beta_offset + p].copy_from_slice(src);
    }

    let mut v_matrix = u_rows.gram();
    v_matrix.scale(T::one() / from_usize::<T>(n));

    // D: block diagonal first stages, -M/n for the second stage, chain-rule
    // blocks below the diagonal, zero above it.
    let mut d_matrix = Mat::zeros(dim, dim);
    for (fs, &off) in fit.first_stages.iter().zip(&first_stage_offsets) {
        for a in 0..fs.q() {
            for b in 0..fs.q() {
                d_matrix.set(off + a, off + b, fs.jacobian.get(a, b));
            }
        }
    }
    let inv_n = T::one() / from_usize::<T>(n);
    for a in 0..p {
        for b in 0..p {
            d_matrix.set(
                beta_offset + a,
                beta_offset + b,
                -fit.second_stage.lhs_matrix.get(a, b) * inv_n,
            );
        }
    }

    let design = second_stage_design(dataset, &fit.first_stages)?;
    let p_a = dataset.p_a();
    let mu_columns: Vec<usize> = (0..fit.first_stages.len()).map(|j| p_a + j).collect();
    let gradients: Vec<&Mat<T>> = fit.first_stages.iter().map(|fs| &fs.regressors).collect();
    let blocks = mean_score_coefficient_derivative(
        dataset.outcomes(),
        &design,
        Status::Event,
        &fit.second_stage.beta,
        &mu_columns,
        &gradients,
    )?;
    for (block, &off) in blocks.iter().zip(&first_stage_offsets) {
        for a in 0..p {
            for b in 0..block.cols() {
                d_matrix.set(beta_offset + a, off + b, block.get(a, b));
            }
        }
    }

    Ok(StackedSystem {
        theta: fit.stacked_theta(),
        parameter_names: fit.parameter_names.clone(),
        u_rows,
        d_matrix,
        v_matrix,
        first_stage_offsets,
        beta_offset,
    })
}

/// Stacked sandwich covariance `(1/n) D^{-1} V D^{-T}` over all first- and
/// second-stage parameters.
pub fn sandwich_covariance<T: Scalar>(
    fit: &TwoStageFit<T>,
    dataset: &ProximalDataset<T>,
) -> Result<Mat<T>> {
    let system = stacked_system(fit, dataset)?;
    sandwich_from_system(&system)
}

/// Sandwich covariance from an assembled stacked system.
pub fn sandwich_from_system<T: Scalar>(system: &StackedSystem<T>) -> Result<Mat<T>> {
    let n = system.u_rows.rows();
    let d_inv = lu_factor(&system.d_matrix)
        .map_err(|_| Error::Identification {
            message: "derivative matrix D is singular; the stacked parameters are not \
                      jointly identified"
                .into(),
        })?
        .inverse();
    let mut cov = d_inv.matmul(&system.v_matrix).matmul(&d_inv.transpose());
    cov.scale(T::one() / from_usize::<T>(n));
    Ok(cov)
}

/// Result of a case-bootstrap run.
#[derive(Debug, Clone)]
pub struct BootstrapResult<T> {
    /// Sample covariance of the stacked parameter estimates across successful
    /// replicates.
    pub covariance: Mat<T>,
    /// One row of stacked estimates per successful replicate, in replicate
    /// order.
    pub estimates: Mat<T>,
    pub parameter_names: Vec<String>,
    /// Indices of replicates whose refit failed; excluded from the estimates.
    pub failed_replicates: Vec<usize>,
}

/// Nonparametric bootstrap for the two-stage fit: subjects are resampled
/// with replacement (whole cases, respecting censoring and the two-stage
/// dependence) and the full pipeline is rerun per replicate.
///
/// Replicates draw from independent, deterministic substreams of `seed`, so
/// results are reproducible regardless of thread scheduling. More than 20%
/// failed replicates is an error.
pub fn bootstrap_covariance<T: Scalar>(
    dataset: &ProximalDataset<T>,
    reps: usize,
    seed: u64,
) -> Result<BootstrapResult<T>> {
    if reps < 2 {
        return Err(Error::Config("bootstrap requires reps >= 2".into()));
    }
    let n = dataset.n();

    let outcomes: Vec<Result<(Vec<T>, Vec<String>)>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream_rng(seed, rep as u64, BOOTSTRAP_BLOCK);
            let indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let resampled = dataset.subset(&indices);
            p2sls_fit(&resampled)
                .map(|fit| (fit.stacked_theta(), fit.parameter_names))
        })
        .collect();

    let mut rows: Vec<Vec<T>> = Vec::with_capacity(reps);
    let mut parameter_names: Vec<String> = Vec::new();
    let mut failed_replicates = Vec::new();
    for (rep, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok((theta, names)) => {
                if parameter_names.is_empty() {
                    parameter_names = names;
                }
                rows.push(theta);
            }
            Err(_) => failed_replicates.push(rep),
        }
    }

    let failed = failed_replicates.len();
    if failed * 5 > reps {
        return Err(Error::UnstableResampling {
            failed,
            total: reps,
        });
    }
    if rows.len() < 2 {
        return Err(Error::UnstableResampling {
            failed,
            total: reps,
        });
    }

    let estimates = Mat::from_rows(&rows);
    let covariance = sample_covariance(&estimates);
    Ok(BootstrapResult {
        covariance,
        estimates,
        parameter_names,
        failed_replicates,
    })
}

/// Substream tag separating bootstrap draws from simulation draws.
pub(crate) const BOOTSTRAP_BLOCK: u64 = 15;

/// Two-sided Wald confidence interval `estimate +/- z_{(1+level)/2} sqrt(var)`.
///
/// `variance` may carry rounding noise from a covariance diagonal; values
/// negative within rounding are treated as zero. Panics if `level` is not in
/// (0, 1).
pub fn wald_ci<T: Scalar>(estimate: T, variance: T, level: T) -> (T, T) {
    assert!(
        level > T::zero() && level < T::one(),
        "confidence level must be in (0, 1)"
    );
    let half = standard_normal_quantile(
        (T::one() + level).to_f64().expect("level fits in f64") / 2.0,
    );
    let sd = variance.max(T::zero()).sqrt();
    let delta = from_f64::<T>(half) * sd;
    (estimate - delta, estimate + delta)
}

/// Standard normal quantile via statrs.
pub fn standard_normal_quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(p)
}
