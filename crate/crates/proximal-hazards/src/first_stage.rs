//! First-stage NCO regressions.
//!
//! Each negative control outcome is regressed on the observed variables, and
//! the fitted linear predictor serves as a proxy for the conditional mean of
//! the unmeasured confounder in the second stage:
//!
//! - linear NCOs: ordinary least squares of `W` on `(1, A, Z, X)`;
//! - loglinear NCOs: quasi log-link score equations, solved by damped Newton
//!   (only the mean model is assumed, no distributional likelihood);
//! - survival NCOs: additive-hazards regression of the NCO time on
//!   `(A, Z, X)`; the baseline absorbs constants, so the predictor carries no
//!   intercept;
//! - competing-risk NCOs: cause-specific additive-hazards regression of the
//!   competing event, treating primary events and censorings as censoring.

use std::ops::Range;

use crate::data::{Nco, NcoKind, ProximalDataset, Status, SurvivalOutcome};
use crate::error::{Error, Result};
use crate::hazards::{fit_additive_hazards, Design};
use crate::linalg::{dot, norm2, solve_spd, Mat};
use crate::scalar::{from_f64, from_usize, Scalar};

/// Maximum Newton iterations for the log-link fit.
pub const LOGLINK_MAX_ITER: usize = 100;
/// Maximum step halvings per Newton iteration.
pub const LOGLINK_MAX_HALVINGS: usize = 20;

/// A fitted first-stage regression for one NCO.
#[derive(Debug, Clone)]
pub struct FirstStageFit<T> {
    pub nco_name: String,
    pub kind: NcoKind,
    /// Coefficients over (intercept where applicable, A, Z, X).
    pub coefficients: Vec<T>,
    pub coefficient_names: Vec<String>,
    /// Fitted linear predictor per subject. Includes the intercept for
    /// linear/loglinear kinds and has none for survival kinds; loglinear
    /// offsets are used during fitting but excluded here.
    pub linear_predictor: Vec<T>,
    /// Per-subject estimating-function values (n x q); columns sum to ~0.
    pub estimating_functions: Mat<T>,
    /// Derivative of the mean estimating function w.r.t. the coefficients
    /// (q x q).
    pub jacobian: Mat<T>,
    /// First-stage regressors (n x q); also the gradient of the linear
    /// predictor in the coefficients, since every predictor here is linear
    /// in them.
    pub regressors: Mat<T>,
    /// Indices of the NCE coefficients within `coefficients`.
    pub z_range: Range<usize>,
}

impl<T: Scalar> FirstStageFit<T> {
    pub fn q(&self) -> usize {
        self.coefficients.len()
    }

    /// NCE coefficient block, the relevance signal of this NCO.
    pub fn z_coefficients(&self) -> &[T] {
        &self.coefficients[self.z_range.clone()]
    }
}

/// Regression design `(1?, A, Z, X)` with the NCE coefficient range.
fn nco_design<T: Scalar>(
    dataset: &ProximalDataset<T>,
    intercept: bool,
) -> Result<(Design<T>, Range<usize>)> {
    let n = dataset.n();
    let mut named: Vec<(String, Vec<T>)> = Vec::new();
    if intercept {
        named.push(("intercept".to_string(), vec![T::one(); n]));
    }
    for (j, name) in dataset.exposure().names().iter().enumerate() {
        named.push((name.clone(), dataset.exposure().matrix().column(j)));
    }
    let z_start = named.len();
    for (j, name) in dataset.nce().names().iter().enumerate() {
        named.push((name.clone(), dataset.nce().matrix().column(j)));
    }
    let z_end = named.len();
    for (j, name) in dataset.covariates().names().iter().enumerate() {
        named.push((name.clone(), dataset.covariates().matrix().column(j)));
    }
    Ok((Design::from_named_columns(n, &named)?, z_start..z_end))
}

/// Ordinary least squares first stage for a real-valued NCO.
pub fn fit_linear_nco<T: Scalar>(
    name: &str,
    w: &[T],
    dataset: &ProximalDataset<T>,
) -> Result<FirstStageFit<T>> {
    let n = dataset.n();
    if w.len() != n {
        return Err(Error::Dimension(format!(
            "NCO column has {} rows but the dataset has {n}",
            w.len()
        )));
    }
    let (design, z_range) = nco_design(dataset, true)?;
    let x = design.matrix();
    let q = x.cols();

    let gram = x.gram();
    let mut xtw = vec![T::zero(); q];
    for i in 0..n {
        let row = x.row(i);
        for j in 0..q {
            xtw[j] += row[j] * w[i];
        }
    }
    let coefficients = solve_spd(
        &gram,
        &xtw,
        from_f64(crate::hazards::PIVOT_REL_TOL),
        design.names(),
    )?;

    let linear_predictor: Vec<T> = (0..n).map(|i| dot(x.row(i), &coefficients)).collect();
    let mut estimating_functions = Mat::zeros(n, q);
    for i in 0..n {
        let resid = w[i] - linear_predictor[i];
        let row = x.row(i);
        let out = estimating_functions.row_mut(i);
        for j in 0..q {
            out[j] = row[j] * resid;
        }
    }
    let mut jacobian = gram;
    jacobian.scale(-T::one() / from_usize::<T>(n));

    Ok(FirstStageFit {
        nco_name: name.to_string(),
        kind: NcoKind::Linear,
        coefficients,
        coefficient_names: design.names().to_vec(),
        linear_predictor,
        estimating_functions,
        jacobian,
        regressors: design.matrix().clone(),
        z_range,
    })
}

/// Log-link quasi score first stage for a nonnegative NCO; solves
/// `sum_i x_i (w_i - exp(offset_i + x_i^T c)) = 0` by damped Newton.
pub fn fit_loglinear_nco<T: Scalar>(
    name: &str,
    w: &[T],
    offset: Option<&[T]>,
    dataset: &ProximalDataset<T>,
) -> Result<FirstStageFit<T>> {
    let n = dataset.n();
    if w.len() != n {
        return Err(Error::Dimension(format!(
            "NCO column has {} rows but the dataset has {n}",
            w.len()
        )));
    }
    if let Some(offset) = offset {
        if offset.len() != n {
            return Err(Error::Dimension("offset length mismatch".into()));
        }
    }
    if w.iter().all(|v| *v == T::zero()) {
        return Err(Error::Numerical(format!(
            "loglinear NCO '{name}' is identically zero; its mean is unidentifiable"
        )));
    }
    let (design, z_range) = nco_design(dataset, true)?;
    let x = design.matrix();
    let q = x.cols();
    let offset_at = |i: usize| offset.map_or(T::zero(), |o| o[i]);

    // start from the intercept-only solution exp(c0 + offset)
    let w_sum: T = w.iter().copied().sum();
    let exp_off_sum: T = (0..n).map(|i| offset_at(i).exp()).sum();
    let mut coef = vec![T::zero(); q];
    coef[0] = (w_sum / exp_off_sum).ln();

    let score = |c: &[T]| -> (Vec<T>, Vec<T>) {
        let mut s = vec![T::zero(); q];
        let mut mean = vec![T::zero(); n];
        for i in 0..n {
            let row = x.row(i);
            let m = (offset_at(i) + dot(row, c)).exp();
            mean[i] = m;
            let resid = w[i] - m;
            for j in 0..q {
                s[j] += row[j] * resid;
            }
        }
        (s, mean)
    };

    let tol = from_f64::<T>(1e-10) * (T::one() + from_usize::<T>(n));
    let (mut current_score, mut current_mean) = score(&coef);
    let mut current_norm = norm2(&current_score);

    let mut iterations = 0usize;
    while current_norm > tol {
        if iterations >= LOGLINK_MAX_ITER {
            return Err(Error::NonConvergence {
                iterations,
                score_norm: current_norm.to_f64().unwrap_or(f64::NAN),
            });
        }
        iterations += 1;

        let info = x.weighted_gram(&current_mean);
        let step = solve_spd(
            &info,
            &current_score,
            from_f64(crate::hazards::PIVOT_REL_TOL),
            design.names(),
        )?;

        let mut accepted = false;
        let mut factor = T::one();
        for _ in 0..=LOGLINK_MAX_HALVINGS {
            let candidate: Vec<T> = coef
                .iter()
                .zip(&step)
                .map(|(&c, &d)| c + factor * d)
                .collect();
            let (s, mean) = score(&candidate);
            let norm = norm2(&s);
            if norm.is_finite() && norm < current_norm {
                coef = candidate;
                current_score = s;
                current_mean = mean;
                current_norm = norm;
                accepted = true;
                break;
            }
            factor = factor / (T::one() + T::one());
        }
        if !accepted {
            return Err(Error::NonConvergence {
                iterations,
                score_norm: current_norm.to_f64().unwrap_or(f64::NAN),
            });
        }
    }

    // linear predictor excludes the offset
    let linear_predictor: Vec<T> = (0..n).map(|i| dot(x.row(i), &coef)).collect();
    let mut estimating_functions = Mat::zeros(n, q);
    for i in 0..n {
        let resid = w[i] - current_mean[i];
        let row = x.row(i);
        let out = estimating_functions.row_mut(i);
        for j in 0..q {
            out[j] = row[j] * resid;
        }
    }
    let mut jacobian = x.weighted_gram(&current_mean);
    jacobian.scale(-T::one() / from_usize::<T>(n));

    Ok(FirstStageFit {
        nco_name: name.to_string(),
        kind: NcoKind::Loglinear,
        coefficients: coef,
        coefficient_names: design.names().to_vec(),
        linear_predictor,
        estimating_functions,
        jacobian,
        regressors: design.matrix().clone(),
        z_range,
    })
}

/// Additive-hazards first stage for a time-to-event NCO with its own
/// censoring. The baseline absorbs constants, so the fitted predictor has no
/// intercept and the second stage supplies its own baseline.
pub fn fit_survival_nco<T: Scalar>(
    name: &str,
    w_outcomes: &[SurvivalOutcome<T>],
    dataset: &ProximalDataset<T>,
) -> Result<FirstStageFit<T>> {
    survival_first_stage(name, NcoKind::Survival, w_outcomes, Status::Event, dataset)
}

/// Cause-specific additive-hazards first stage for a competing-risk NCO:
/// the competing event counts as the event, primary events and censorings as
/// censoring.
pub fn fit_competing_nco<T: Scalar>(dataset: &ProximalDataset<T>) -> Result<FirstStageFit<T>> {
    let nco = dataset
        .ncos()
        .iter()
        .find(|c| c.kind() == NcoKind::CompetingRisk)
        .ok_or_else(|| Error::Config("no competing-risk NCO declared".into()))?;
    survival_first_stage(
        nco.name(),
        NcoKind::CompetingRisk,
        dataset.outcomes(),
        Status::CompetingEvent,
        dataset,
    )
}

fn survival_first_stage<T: Scalar>(
    name: &str,
    kind: NcoKind,
    outcomes: &[SurvivalOutcome<T>],
    event_label: Status,
    dataset: &ProximalDataset<T>,
) -> Result<FirstStageFit<T>> {
    if outcomes.len() != dataset.n() {
        return Err(Error::Dimension(format!(
            "NCO outcome has {} rows but the dataset has {}",
            outcomes.len(),
            dataset.n()
        )));
    }
    let (design, z_range) = nco_design(dataset, false)?;
    let fit = fit_additive_hazards(outcomes, &design, event_label)?;
    let n = dataset.n();

    let linear_predictor: Vec<T> = (0..n)
        .map(|i| dot(design.row(i), &fit.beta))
        .collect();
    let mut jacobian = fit.lhs_matrix.clone();
    jacobian.scale(-T::one() / from_usize::<T>(n));

    Ok(FirstStageFit {
        nco_name: name.to_string(),
        kind,
        coefficients: fit.beta,
        coefficient_names: design.names().to_vec(),
        linear_predictor,
        estimating_functions: fit.score_residuals,
        jacobian,
        regressors: design.matrix().clone(),
        z_range,
    })
}

/// Dispatch to the first-stage fit matching the NCO's declared kind.
pub fn fit_first_stage<T: Scalar>(
    dataset: &ProximalDataset<T>,
    nco: &Nco<T>,
) -> Result<FirstStageFit<T>> {
    match nco.kind() {
        NcoKind::Linear => fit_linear_nco(
            nco.name(),
            nco.values().expect("linear NCO carries values"),
            dataset,
        ),
        NcoKind::Loglinear => fit_loglinear_nco(
            nco.name(),
            nco.values().expect("loglinear NCO carries values"),
            nco.offset(),
            dataset,
        ),
        NcoKind::Survival => fit_survival_nco(
            nco.name(),
            nco.survival_outcomes().expect("survival NCO carries outcomes"),
            dataset,
        ),
        NcoKind::CompetingRisk => fit_competing_nco(dataset),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnBlock, Nco, ProximalDataset, SurvivalOutcome as So};

    /// Small dataset whose dummy primary outcome is irrelevant to first-stage
    /// fits (they regress the NCO, not the outcome).
    fn dataset_with(
        a: Vec<f64>,
        z: Vec<f64>,
        x: Option<Vec<f64>>,
        ncos: Vec<Nco<f64>>,
    ) -> ProximalDataset<f64> {
        let n = a.len();
        let outcomes = (0..n)
            .map(|i| So::event(1.0 + i as f64))
            .collect::<Vec<_>>();
        let covariates = match x {
            Some(x) => ColumnBlock::from_columns(n, &[("x", x)]).unwrap(),
            None => ColumnBlock::empty(n),
        };
        ProximalDataset::new(
            outcomes,
            ColumnBlock::from_columns(n, &[("a", a)]).unwrap(),
            covariates,
            ColumnBlock::from_columns(n, &[("z", z)]).unwrap(),
            ncos,
        )
        .unwrap()
    }

    #[test]
    fn linear_fit_recovers_exact_dependence_on_z() {
        // W identical to the Z column: coefficient 1 on z, 0 elsewhere
        let a = vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        let z = vec![0.5, 0.1, 0.9, 0.4, 0.7, 0.2];
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let w = z.clone();
        let data = dataset_with(a, z, Some(x), vec![Nco::linear("w", w.clone())]);
        let fit = fit_linear_nco("w", &w, &data).unwrap();
        // layout: intercept, a, z, x
        assert!((fit.coefficients[0]).abs() <= 1e-10);
        assert!((fit.coefficients[1]).abs() <= 1e-10);
        assert!((fit.coefficients[2] - 1.0).abs() <= 1e-10);
        assert!((fit.coefficients[3]).abs() <= 1e-10);
        for (mu, wi) in fit.linear_predictor.iter().zip(&w) {
            assert!((mu - wi).abs() <= 1e-10);
        }
        assert_eq!(fit.z_range, 2..3);
    }

    #[test]
    fn three_point_fit_matches_hand_solved_normal_equations() {
        // Design (1, a, z) at points (a, z, w) = (0,0,1), (1,0,2), (0,1,3).
        // The 3x3 normal equations solve to coefficients (1, 1, 2) exactly.
        let a = vec![0.0, 1.0, 0.0];
        let z = vec![0.0, 0.0, 1.0];
        let w = vec![1.0, 2.0, 3.0];
        let data = dataset_with(a, z, None, vec![Nco::linear("w", w.clone())]);
        let fit = fit_linear_nco("w", &w, &data).unwrap();
        let expect = [1.0, 1.0, 2.0];
        for (got, want) in fit.coefficients.iter().zip(expect) {
            assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
        }
        // perfect interpolation: estimating functions are identically zero
        for i in 0..3 {
            for j in 0..3 {
                assert!(fit.estimating_functions.get(i, j).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn loglinear_constant_response_gives_unit_intercept() {
        let n = 8;
        let w = vec![std::f64::consts::E; n];
        // constant design columns beyond the intercept would be singular, so
        // regress on intercept alone via an empty A/Z/X dataset
        let outcomes: Vec<So<f64>> = (0..n).map(|i| So::event(1.0 + i as f64)).collect();
        let data = ProximalDataset::new(
            outcomes,
            ColumnBlock::empty(n),
            ColumnBlock::empty(n),
            ColumnBlock::empty(n),
            vec![Nco::loglinear("w", w.clone())],
        )
        .unwrap();
        let fit = fit_loglinear_nco("w", &w, None, &data).unwrap();
        assert_eq!(fit.q(), 1);
        assert!((fit.coefficients[0] - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn loglinear_offset_shifts_intercept_exactly() {
        let n = 40;
        let z: Vec<f64> = (0..n).map(|i| (i as f64) / (n as f64)).collect();
        let a: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let w: Vec<f64> = z
            .iter()
            .zip(&a)
            .map(|(&zi, &ai)| (0.4 + 0.8 * zi - 0.1 * ai).exp())
            .collect();
        let data = dataset_with(a, z, None, vec![Nco::loglinear("w", w.clone())]);
        let plain = fit_loglinear_nco("w", &w, None, &data).unwrap();
        let offset = vec![2.0f64.ln(); n];
        let shifted = fit_loglinear_nco("w", &w, Some(&offset), &data).unwrap();
        assert!(
            (plain.coefficients[0] - shifted.coefficients[0] - 2.0f64.ln()).abs() <= 1e-8,
            "intercept must drop by log 2"
        );
        for j in 1..plain.q() {
            assert!((plain.coefficients[j] - shifted.coefficients[j]).abs() <= 1e-8);
        }
    }

    #[test]
    fn loglinear_all_zero_response_errors() {
        let a = vec![0.0, 1.0, 0.0, 1.0];
        let z = vec![0.1, 0.3, 0.6, 0.9];
        let w = vec![0.0; 4];
        let data = dataset_with(a, z, None, vec![Nco::loglinear("w", w.clone())]);
        let err = fit_loglinear_nco("w", &w, None, &data).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }

    #[test]
    fn survival_nco_predictor_has_no_intercept_and_errors_without_events() {
        let a = vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        let z = vec![0.5, 0.1, 0.9, 0.4, 0.7, 0.2];
        let w_outcomes: Vec<So<f64>> = vec![
            So::event(0.5),
            So::censored(1.0),
            So::event(1.5),
            So::event(2.0),
            So::censored(2.5),
            So::event(3.0),
        ];
        let data = dataset_with(
            a,
            z,
            None,
            vec![Nco::survival("w", w_outcomes.clone())],
        );
        let fit = fit_survival_nco("w", &w_outcomes, &data).unwrap();
        assert_eq!(fit.coefficient_names, vec!["a", "z"]);
        assert_eq!(fit.z_range, 1..2);

        let censored: Vec<So<f64>> =
            w_outcomes.iter().map(|o| So::censored(o.time)).collect();
        let err = fit_survival_nco("w", &censored, &data).unwrap_err();
        assert!(matches!(err, Error::ZeroEvents { .. }));
    }

    #[test]
    fn competing_fit_requires_declaration_and_events() {
        let a = vec![0.0, 1.0, 0.0, 1.0];
        let z = vec![0.1, 0.3, 0.6, 0.9];
        let data = dataset_with(a.clone(), z.clone(), None, vec![]);
        assert!(matches!(
            fit_competing_nco(&data).unwrap_err(),
            Error::Config(_)
        ));

        // declared, but no competing events
        let data = dataset_with(a, z, None, vec![Nco::competing_risk("cr")]);
        assert!(matches!(
            fit_competing_nco(&data).unwrap_err(),
            Error::ZeroEvents { .. }
        ));
    }
}
