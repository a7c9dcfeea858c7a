//! Two-stage proximal estimation and its comparators.
//!
//! `p2sls_fit` runs one first-stage regression per declared NCO, builds the
//! second-stage design `[A | mu_1 | ... | mu_nW | X]` from the fitted linear
//! predictors, and fits an additive-hazards regression of the primary
//! outcome on it. The exposure coefficients are the first `p_A` entries of
//! the second stage, by construction.
//!
//! The comparators mirror the usual study designs: `naive_fit` adjusts for
//! `[A | X]` only, `fully_adjusted_fit` for `[A | X | W | Z]` with the
//! real-valued NCO columns (survival and competing-risk NCOs have no real
//! column and are excluded from that comparator).

use crate::data::{ProximalDataset, Status};
use crate::error::{Error, Result};
use crate::first_stage::{fit_first_stage, FirstStageFit};
use crate::hazards::{estimating_system, fit_additive_hazards, AhFit, Design};
use crate::linalg::{dot, lu_factor, symmetric_eigenvalues, Mat};
use crate::scalar::{from_f64, from_usize, Scalar};
use crate::step::StepFunction;

/// Default Wald-statistic threshold below which a proxy is flagged weak, by
/// analogy to first-stage F rules of thumb in instrumental-variable practice.
pub const DEFAULT_WEAK_THRESHOLD: f64 = 10.0;

/// Relevance diagnostics for one NCO.
#[derive(Debug, Clone)]
pub struct NcoRelevance<T> {
    pub name: String,
    /// Wald statistic for joint nullity of the NCE coefficients in the first
    /// stage, using the first stage's own robust covariance.
    pub wald: T,
    pub weak: bool,
}

/// Proxy-relevance report for a two-stage fit.
#[derive(Debug, Clone)]
pub struct RelevanceReport<T> {
    pub per_nco: Vec<NcoRelevance<T>>,
    /// Condition number of the second-stage system matrix; absent for an
    /// empty design.
    pub condition_number: Option<T>,
    pub threshold: T,
}

impl<T: Scalar> RelevanceReport<T> {
    pub fn weak_proxies(&self) -> Vec<&str> {
        self.per_nco
            .iter()
            .filter(|r| r.weak)
            .map(|r| r.name.as_str())
            .collect()
    }
}

/// Full two-stage fit.
#[derive(Debug, Clone)]
pub struct TwoStageFit<T> {
    /// Exposure coefficients (hazard differences per unit time).
    pub beta_a: Vec<T>,
    /// Coefficients on the fitted predictors and on X, in design order.
    pub beta_nuisance: Vec<T>,
    pub baseline: StepFunction<T>,
    pub first_stages: Vec<FirstStageFit<T>>,
    /// The second-stage additive-hazards fit (design `[A | mu's | X]`).
    pub second_stage: AhFit<T>,
    /// Stacked sandwich covariance over all first- and second-stage
    /// parameters; filled by `inference::sandwich_covariance`.
    pub covariance: Option<Mat<T>>,
    /// Names of the stacked parameter vector, first-stage blocks then the
    /// second stage.
    pub parameter_names: Vec<String>,
    /// Index of the first second-stage parameter within the stacked vector.
    pub beta_offset: usize,
    pub diagnostics: RelevanceReport<T>,
}

impl<T: Scalar> TwoStageFit<T> {
    /// Stacked coefficient vector matching `parameter_names`.
    pub fn stacked_theta(&self) -> Vec<T> {
        let mut theta = Vec::new();
        for fs in &self.first_stages {
            theta.extend_from_slice(&fs.coefficients);
        }
        theta.extend_from_slice(&self.second_stage.beta);
        theta
    }

    /// Index of exposure coefficient `j` within the stacked vector.
    pub fn beta_a_index(&self, j: usize) -> usize {
        self.beta_offset + j
    }
}

/// Second-stage design `[A | mu_1 ... mu_nW | X]` built from fitted first
/// stages, in NCO declaration order.
pub fn second_stage_design<T: Scalar>(
    dataset: &ProximalDataset<T>,
    first_stages: &[FirstStageFit<T>],
) -> Result<Design<T>> {
    let n = dataset.n();
    let mut named: Vec<(String, Vec<T>)> = Vec::new();
    for (j, name) in dataset.exposure().names().iter().enumerate() {
        named.push((name.clone(), dataset.exposure().matrix().column(j)));
    }
    for fs in first_stages {
        named.push((format!("mu:{}", fs.nco_name), fs.linear_predictor.clone()));
    }
    for (j, name) in dataset.covariates().names().iter().enumerate() {
        named.push((name.clone(), dataset.covariates().matrix().column(j)));
    }
    Design::from_named_columns(n, &named)
}

/// Proximal two-stage fit of the exposure effect.
pub fn p2sls_fit<T: Scalar>(dataset: &ProximalDataset<T>) -> Result<TwoStageFit<T>> {
    p2sls_fit_with_threshold(dataset, from_f64(DEFAULT_WEAK_THRESHOLD))
}

/// [`p2sls_fit`] with a custom weak-proxy Wald threshold.
pub fn p2sls_fit_with_threshold<T: Scalar>(
    dataset: &ProximalDataset<T>,
    weak_threshold: T,
) -> Result<TwoStageFit<T>> {
    let violations = dataset.validate();
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    if dataset.ncos().is_empty() {
        return Err(Error::Config(
            "two-stage fit requires at least one NCO".into(),
        ));
    }

    let mut first_stages = Vec::with_capacity(dataset.ncos().len());
    for nco in dataset.ncos() {
        let fs = fit_first_stage(dataset, nco).map_err(|e| e.in_first_stage(nco.name()))?;
        first_stages.push(fs);
    }

    let design = second_stage_design(dataset, &first_stages)?;
    let (m, _) = estimating_system(dataset.outcomes(), &design, Status::Event)?;
    let diagnostics = relevance_from_parts(&first_stages, Some(&m), weak_threshold);

    let second_stage = match fit_additive_hazards(dataset.outcomes(), &design, Status::Event) {
        Ok(fit) => fit,
        Err(Error::SingularDesign { columns }) => {
            let weak = diagnostics.weak_proxies();
            let hint = if weak.is_empty() {
                String::new()
            } else {
                format!(
                    "; weak/irrelevant proxies: {} (NCE coefficients indistinguishable from zero)",
                    weak.join(", ")
                )
            };
            return Err(Error::Identification {
                message: format!(
                    "second-stage design is singular (dependent columns: {}){hint}",
                    columns.join(", ")
                ),
            });
        }
        Err(e) => return Err(e),
    };

    let p_a = dataset.p_a();
    let beta_a = second_stage.beta[..p_a].to_vec();
    let beta_nuisance = second_stage.beta[p_a..].to_vec();

    let mut parameter_names = Vec::new();
    for fs in &first_stages {
        for cname in &fs.coefficient_names {
            parameter_names.push(format!("{}:{}", fs.nco_name, cname));
        }
    }
    let beta_offset = parameter_names.len();
    for cname in &second_stage.column_names {
        parameter_names.push(format!("outcome:{cname}"));
    }

    Ok(TwoStageFit {
        beta_a,
        beta_nuisance,
        baseline: second_stage.baseline.clone(),
        first_stages,
        second_stage,
        covariance: None,
        parameter_names,
        beta_offset,
        diagnostics,
    })
}

/// Additive-hazards comparator adjusting for `[A | X]` only.
pub fn naive_fit<T: Scalar>(dataset: &ProximalDataset<T>) -> Result<AhFit<T>> {
    let n = dataset.n();
    let mut named: Vec<(String, Vec<T>)> = Vec::new();
    for (j, name) in dataset.exposure().names().iter().enumerate() {
        named.push((name.clone(), dataset.exposure().matrix().column(j)));
    }
    for (j, name) in dataset.covariates().names().iter().enumerate() {
        named.push((name.clone(), dataset.covariates().matrix().column(j)));
    }
    let design = Design::from_named_columns(n, &named)?;
    fit_additive_hazards(dataset.outcomes(), &design, Status::Event)
}

/// Additive-hazards comparator adjusting for `[A | X | W | Z]`, with the
/// real-valued (linear and loglinear) NCO columns. Survival and
/// competing-risk NCOs carry no real column and are excluded.
pub fn fully_adjusted_fit<T: Scalar>(dataset: &ProximalDataset<T>) -> Result<AhFit<T>> {
    let n = dataset.n();
    let mut named: Vec<(String, Vec<T>)> = Vec::new();
    for (j, name) in dataset.exposure().names().iter().enumerate() {
        named.push((name.clone(), dataset.exposure().matrix().column(j)));
    }
    for (j, name) in dataset.covariates().names().iter().enumerate() {
        named.push((name.clone(), dataset.covariates().matrix().column(j)));
    }
    for nco in dataset.ncos() {
        if let Some(values) = nco.values() {
            named.push((nco.name().to_string(), values.to_vec()));
        }
    }
    for (j, name) in dataset.nce().names().iter().enumerate() {
        named.push((name.clone(), dataset.nce().matrix().column(j)));
    }
    let design = Design::from_named_columns(n, &named)?;
    fit_additive_hazards(dataset.outcomes(), &design, Status::Event)
}

/// Relevance diagnostics of a completed fit.
pub fn relevance_diagnostics<T: Scalar>(fit: &TwoStageFit<T>) -> &RelevanceReport<T> {
    &fit.diagnostics
}

/// Build the relevance report from fitted first stages and (optionally) the
/// second-stage system matrix. Usable even when the second-stage fit itself
/// fails, as in exact-collinearity checks.
pub fn relevance_from_parts<T: Scalar>(
    first_stages: &[FirstStageFit<T>],
    second_stage_m: Option<&Mat<T>>,
    threshold: T,
) -> RelevanceReport<T> {
    let per_nco = first_stages
        .iter()
        .map(|fs| {
            let wald = z_wald_statistic(fs).unwrap_or(T::zero());
            NcoRelevance {
                name: fs.nco_name.clone(),
                wald,
                weak: !(wald > threshold),
            }
        })
        .collect();

    let condition_number = second_stage_m.and_then(|m| {
        if m.cols() == 0 {
            return None;
        }
        let eig = symmetric_eigenvalues(m);
        let max = *eig.last()?;
        let min = *eig.first()?;
        Some(if min <= T::zero() {
            T::infinity()
        } else {
            max / min
        })
    });

    RelevanceReport {
        per_nco,
        condition_number,
        threshold,
    }
}

/// Wald statistic for joint nullity of the NCE coefficients of one first
/// stage, `c_Z^T Cov(c_Z)^{-1} c_Z`, with the robust covariance
/// `(1/n) J^{-1} V J^{-T}`.
fn z_wald_statistic<T: Scalar>(fs: &FirstStageFit<T>) -> Option<T> {
    let z_range = fs.z_range.clone();
    let p_z = z_range.len();
    if p_z == 0 {
        return None;
    }
    let n = fs.estimating_functions.rows();

    let mut v = fs.estimating_functions.gram();
    v.scale(T::one() / from_usize::<T>(n));
    let j_inv = lu_factor(&fs.jacobian).ok()?.inverse();
    // (1/n) J^{-1} V J^{-T}
    let mut cov = j_inv.matmul(&v).matmul(&j_inv.transpose());
    cov.scale(T::one() / from_usize::<T>(n));

    let mut cov_zz = Mat::zeros(p_z, p_z);
    for (i, gi) in z_range.clone().enumerate() {
        for (j, gj) in z_range.clone().enumerate() {
            cov_zz.set(i, j, cov.get(gi, gj));
        }
    }
    let c_z: Vec<T> = fs.z_coefficients().to_vec();
    let solved = lu_factor(&cov_zz).ok()?.solve(&c_z);
    Some(dot(&c_z, &solved))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnBlock, Nco, ProximalDataset, SurvivalOutcome as So};
    use crate::first_stage::fit_linear_nco;

    fn toy_dataset() -> ProximalDataset<f64> {
        // deterministic, moderately varied data; enough rows for all blocks
        let n = 24;
        let a: Vec<f64> = (0..n).map(|i| ((i * 5 + 1) % 7 > 3) as u8 as f64).collect();
        let x: Vec<f64> = (0..n).map(|i| ((i * 3) % 11) as f64 / 11.0).collect();
        let z: Vec<f64> = (0..n).map(|i| ((i * 7 + 2) % 13) as f64 / 13.0).collect();
        let w: Vec<f64> = z
            .iter()
            .zip(&x)
            .enumerate()
            .map(|(i, (&zi, &xi))| {
                let noise = ((i * 17 + 5) % 19) as f64 / 19.0 - 0.5;
                0.5 + 0.8 * zi + 0.3 * xi + 0.2 * noise
            })
            .collect();
        let outcomes: Vec<So<f64>> = (0..n)
            .map(|i| {
                let t = 0.5 + ((i * 11 + 3) % 17) as f64 / 4.0;
                if (i * 13 + 5) % 5 == 0 {
                    So::censored(t)
                } else {
                    So::event(t)
                }
            })
            .collect();
        ProximalDataset::new(
            outcomes,
            ColumnBlock::from_columns(n, &[("a", a)]).unwrap(),
            ColumnBlock::from_columns(n, &[("x", x)]).unwrap(),
            ColumnBlock::from_columns(n, &[("z", z)]).unwrap(),
            vec![Nco::linear("w", w)],
        )
        .unwrap()
    }

    #[test]
    fn composition_identity_single_linear_nco() {
        let data = toy_dataset();
        let fit = p2sls_fit(&data).unwrap();

        // manual composition: first stage, then additive hazards on [A | mu | X]
        let fs = fit_linear_nco("w", data.ncos()[0].values().unwrap(), &data).unwrap();
        let design = second_stage_design(&data, std::slice::from_ref(&fs)).unwrap();
        let manual =
            fit_additive_hazards(data.outcomes(), &design, Status::Event).unwrap();

        assert_eq!(fit.second_stage.beta.len(), manual.beta.len());
        for (a, b) in fit.second_stage.beta.iter().zip(&manual.beta) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert_eq!(fit.beta_a.len(), 1);
        assert_eq!(fit.beta_a[0], fit.second_stage.beta[0]);
        assert_eq!(fit.beta_offset, 4); // intercept, a, z, x
        assert_eq!(
            fit.parameter_names[fit.beta_offset],
            "outcome:a".to_string()
        );
    }

    #[test]
    fn duplicate_ncos_make_the_second_stage_singular() {
        let base = toy_dataset();
        let w = base.ncos()[0].values().unwrap().to_vec();
        let data = ProximalDataset::new(
            base.outcomes().to_vec(),
            base.exposure().clone(),
            base.covariates().clone(),
            base.nce().clone(),
            vec![Nco::linear("w1", w.clone()), Nco::linear("w2", w)],
        )
        .unwrap();
        let err = p2sls_fit(&data).unwrap_err();
        match err {
            Error::Identification { message } => {
                assert!(message.contains("singular"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn comparators_use_expected_design_widths() {
        let data = toy_dataset();
        let naive = naive_fit(&data).unwrap();
        assert_eq!(naive.column_names, vec!["a", "x"]);
        let fully = fully_adjusted_fit(&data).unwrap();
        assert_eq!(fully.column_names, vec!["a", "x", "w", "z"]);
    }

    #[test]
    fn empty_x_reduces_naive_to_single_covariate_fit() {
        let base = toy_dataset();
        let data = ProximalDataset::new(
            base.outcomes().to_vec(),
            base.exposure().clone(),
            ColumnBlock::empty(base.n()),
            base.nce().clone(),
            vec![],
        )
        .unwrap();
        let fit = naive_fit(&data).unwrap();
        assert_eq!(fit.beta.len(), 1);
    }

    #[test]
    fn relevance_report_flags_missing_z_information() {
        let data = toy_dataset();
        let fit = p2sls_fit(&data).unwrap();
        // W depends strongly on Z here, so the proxy should not be weak
        assert!(!fit.diagnostics.per_nco[0].weak);
        assert!(fit.diagnostics.condition_number.is_some());
    }
}
