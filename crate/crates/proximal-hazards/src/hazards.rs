//! Semiparametric additive-hazards regression (Lin–Ying estimator).
//!
//! The model is `lambda(t | S) = b0(t) + beta^T S` with time-fixed regressor
//! rows `S`. With at-risk indicator `R_i(t) = 1(T*_i >= t)` and risk-set mean
//! `Sbar(t)`, the estimator solves the closed-form system `M beta = v` with
//!
//! ```text
//! M = sum_i int R_i(t) (S_i - Sbar(t)) S_i^T dt
//! v = sum_i int (S_i - Sbar(t)) dN_i(t)
//! ```
//!
//! Both integrands are step functions changing only at distinct observed
//! times, so the integrals are evaluated exactly over the induced partition;
//! there is no quadrature error. Subjects tied at one time leave the risk set
//! together after contributing their event counts at that time. Statuses
//! other than the requested event label are treated as censoring at their
//! observed time, which is exactly the cause-specific fit for competing-risk
//! data.

use crate::error::{Error, Result};
use crate::linalg::{dot, solve_spd, Mat};
use crate::scalar::{from_f64, from_usize, Scalar};
use crate::step::StepFunction;

use crate::data::{Status, SurvivalOutcome};

/// Relative pivot tolerance of the rank-revealing solve.
pub const PIVOT_REL_TOL: f64 = 1e-10;

/// Time-fixed regression design: one row per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Design<T> {
    matrix: Mat<T>,
    names: Vec<String>,
}

impl<T: Scalar> Design<T> {
    pub fn new(matrix: Mat<T>, names: Vec<String>) -> Result<Self> {
        if matrix.cols() != names.len() {
            return Err(Error::Dimension(format!(
                "design with {} columns but {} names",
                matrix.cols(),
                names.len()
            )));
        }
        if !matrix.is_finite() {
            return Err(Error::Numerical("non-finite design entry".into()));
        }
        Ok(Design { matrix, names })
    }

    /// Baseline-only design (p = 0).
    pub fn empty(n: usize) -> Self {
        Design {
            matrix: Mat::zeros(n, 0),
            names: Vec::new(),
        }
    }

    pub fn from_named_columns(n: usize, named: &[(String, Vec<T>)]) -> Result<Self> {
        let names: Vec<String> = named.iter().map(|(s, _)| s.clone()).collect();
        let cols: Vec<Vec<T>> = named.iter().map(|(_, c)| c.clone()).collect();
        if cols.iter().any(|c| c.len() != n) {
            return Err(Error::Dimension("design column length mismatch".into()));
        }
        Design::new(Mat::from_columns(n, &cols), names)
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    pub fn p(&self) -> usize {
        self.matrix.cols()
    }

    pub fn matrix(&self) -> &Mat<T> {
        &self.matrix
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.matrix.row(i)
    }
}

/// Grouping of subjects by distinct observed time, ascending.
pub(crate) struct TimeGroups<T> {
    /// Distinct observed times, ascending.
    pub times: Vec<T>,
    /// Subject indices sorted by observed time.
    pub sorted: Vec<usize>,
    /// Half-open ranges into `sorted`, one per distinct time.
    pub bounds: Vec<(usize, usize)>,
    /// Group index of each subject.
    pub group_of: Vec<usize>,
}

impl<T: Scalar> TimeGroups<T> {
    fn build(outcomes: &[SurvivalOutcome<T>]) -> Result<Self> {
        if outcomes.iter().any(|o| !o.time.is_finite()) {
            return Err(Error::Numerical("non-finite outcome time".into()));
        }
        let mut sorted: Vec<usize> = (0..outcomes.len()).collect();
        sorted.sort_by(|&a, &b| {
            outcomes[a]
                .time
                .partial_cmp(&outcomes[b].time)
                .expect("finite times are comparable")
        });
        let mut times = Vec::new();
        let mut bounds = Vec::new();
        let mut group_of = vec![0usize; outcomes.len()];
        let mut start = 0;
        while start < sorted.len() {
            let t = outcomes[sorted[start]].time;
            let mut end = start;
            while end < sorted.len() && outcomes[sorted[end]].time == t {
                group_of[sorted[end]] = times.len();
                end += 1;
            }
            times.push(t);
            bounds.push((start, end));
            start = end;
        }
        Ok(TimeGroups {
            times,
            sorted,
            bounds,
            group_of,
        })
    }

    pub fn k(&self) -> usize {
        self.times.len()
    }

    pub fn members(&self, k: usize) -> &[usize] {
        let (s, e) = self.bounds[k];
        &self.sorted[s..e]
    }

    /// Interval length `(t_{k-1}, t_k]` with `t_0 = 0`.
    pub fn dt(&self, k: usize) -> T {
        if k == 0 {
            self.times[0]
        } else {
            self.times[k] - self.times[k - 1]
        }
    }
}

/// Exact centered system of the Lin–Ying estimating equation, plus the
/// per-group risk summaries needed for the baseline and score residuals.
pub(crate) struct CenteredSystem<T> {
    pub m: Mat<T>,
    pub v: Vec<T>,
    pub groups: TimeGroups<T>,
    /// Risk-set size at each distinct time.
    pub nrisk: Vec<usize>,
    /// Event count at each distinct time.
    pub devents: Vec<usize>,
    /// Risk-set mean design row at each distinct time (K x p).
    pub s_bar: Mat<T>,
    pub n_events: usize,
}

pub(crate) fn centered_system<T: Scalar>(
    outcomes: &[SurvivalOutcome<T>],
    design: &Design<T>,
    event_label: Status,
) -> Result<CenteredSystem<T>> {
    let n = outcomes.len();
    if design.n() != n {
        return Err(Error::Dimension(format!(
            "design has {} rows but the outcome has {n}",
            design.n()
        )));
    }
    let p = design.p();
    let groups = TimeGroups::build(outcomes)?;
    let k_total = groups.k();

    let mut m = Mat::zeros(p, p);
    let mut v = vec![T::zero(); p];
    let mut nrisk = vec![0usize; k_total];
    let mut devents = vec![0usize; k_total];
    let mut s_bar = Mat::zeros(k_total, p);
    let mut n_events = 0usize;

    // risk-set accumulators, built from the latest time downwards
    let mut risk_count = 0usize;
    let mut s_sum = vec![T::zero(); p];
    let mut ss_sum = Mat::zeros(p, p);

    for k in (0..k_total).rev() {
        for &i in groups.members(k) {
            risk_count += 1;
            let row = design.row(i);
            for (acc, &x) in s_sum.iter_mut().zip(row) {
                *acc += x;
            }
            ss_sum.add_outer(row, row, T::one());
        }
        nrisk[k] = risk_count;
        let inv_risk = T::one() / from_usize::<T>(risk_count);
        for j in 0..p {
            s_bar.set(k, j, s_sum[j] * inv_risk);
        }

        // integral contribution over (t_{k-1}, t_k]
        let dt = groups.dt(k);
        if dt > T::zero() && p > 0 {
            let sbar_k = s_bar.row(k).to_vec();
            // M += dt * (SS - nrisk * sbar sbar^T)
            for a in 0..p {
                for b in 0..p {
                    let centered = ss_sum.get(a, b)
                        - from_usize::<T>(risk_count) * sbar_k[a] * sbar_k[b];
                    m.add_to(a, b, dt * centered);
                }
            }
        }

        // event contributions at t_k
        for &i in groups.members(k) {
            if outcomes[i].status == event_label {
                devents[k] += 1;
                n_events += 1;
                let row = design.row(i);
                for j in 0..p {
                    v[j] += row[j] - s_bar.get(k, j);
                }
            }
        }
    }

    Ok(CenteredSystem {
        m,
        v,
        groups,
        nrisk,
        devents,
        s_bar,
        n_events,
    })
}

/// `(M, v)` of the estimating equation `M beta = v`, exposed for derivative
/// checks and diagnostics. The mean estimating function at coefficients
/// `beta` is `(v - M beta) / n`.
pub fn estimating_system<T: Scalar>(
    outcomes: &[SurvivalOutcome<T>],
    design: &Design<T>,
    event_label: Status,
) -> Result<(Mat<T>, Vec<T>)> {
    let cs = centered_system(outcomes, design, event_label)?;
    Ok((cs.m, cs.v))
}

/// Fitted additive-hazards regression.
#[derive(Debug, Clone)]
pub struct AhFit<T> {
    /// Coefficients (hazard differences per unit time), one per design column.
    pub beta: Vec<T>,
    /// Cumulative baseline hazard evaluated at the distinct observed times.
    /// Queries beyond the last knot return the last value, flagged.
    pub baseline: StepFunction<T>,
    /// Per-subject estimating-function values at the fitted coefficients
    /// (n x p); columns sum to zero up to solver precision.
    pub score_residuals: Mat<T>,
    /// The p x p system matrix `M`, retained for sandwich derivatives.
    pub lhs_matrix: Mat<T>,
    /// The right-hand side `v`.
    pub rhs: Vec<T>,
    pub n_events: usize,
    pub column_names: Vec<String>,
}

impl<T: Scalar> AhFit<T> {
    pub fn n(&self) -> usize {
        self.score_residuals.rows()
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }
}

/// Fit the Lin–Ying additive-hazards model. Statuses other than
/// `event_label` are treated as censoring at their observed time.
pub fn fit_additive_hazards<T: Scalar>(
    outcomes: &[SurvivalOutcome<T>],
    design: &Design<T>,
    event_label: Status,
) -> Result<AhFit<T>> {
    let cs = centered_system(outcomes, design, event_label)?;
    if cs.n_events == 0 {
        return Err(Error::ZeroEvents {
            label: event_label.label().to_string(),
        });
    }
    let p = design.p();

    let beta = if p == 0 {
        Vec::new()
    } else {
        let beta = solve_spd(&cs.m, &cs.v, from_f64(PIVOT_REL_TOL), design.names())?;
        // residual check: the solve must reproduce v
        let mut residual = cs.v.clone();
        for (r, mb) in residual.iter_mut().zip(cs.m.mul_vec(&beta)) {
            *r -= mb;
        }
        let rhs_norm = crate::linalg::norm2(&cs.v);
        let res_norm = crate::linalg::norm2(&residual);
        if res_norm > from_f64::<T>(1e-10) * (T::one() + rhs_norm) {
            return Err(Error::Numerical(format!(
                "linear solve residual {res_norm} exceeds tolerance (rhs norm {rhs_norm})"
            )));
        }
        beta
    };

    let baseline = baseline_from(&cs, &beta)?;
    let score_residuals = score_residuals_from(&cs, design, &beta, outcomes, event_label);

    Ok(AhFit {
        beta,
        baseline,
        score_residuals,
        lhs_matrix: cs.m,
        rhs: cs.v,
        n_events: cs.n_events,
        column_names: design.names().to_vec(),
    })
}

/// Cumulative baseline hazard `int_0^t { dNbar(u)/nrisk(u) - beta^T Sbar(u) du }`
/// evaluated at the distinct observed times.
fn baseline_from<T: Scalar>(cs: &CenteredSystem<T>, beta: &[T]) -> Result<StepFunction<T>> {
    let k_total = cs.groups.k();
    let mut values = Vec::with_capacity(k_total);
    let mut cum = T::zero();
    for k in 0..k_total {
        let jump = from_usize::<T>(cs.devents[k]) / from_usize::<T>(cs.nrisk[k]);
        let drift = dot(beta, cs.s_bar.row(k)) * cs.groups.dt(k);
        cum += jump - drift;
        values.push(cum);
    }
    StepFunction::new(cs.groups.times.clone(), values)
}

/// Per-subject estimating-function values at `beta`:
///
/// ```text
/// U_i = delta_i (S_i - Sbar(T*_i))
///       - sum_{t_k <= T*_i} (S_i - Sbar_k) { dk/nk + dt_k beta^T (S_i - Sbar_k) }
/// ```
///
/// computed in O((n + K) p) with running prefix sums over the time groups.
fn score_residuals_from<T: Scalar>(
    cs: &CenteredSystem<T>,
    design: &Design<T>,
    beta: &[T],
    outcomes: &[SurvivalOutcome<T>],
    event_label: Status,
) -> Mat<T> {
    let n = outcomes.len();
    let p = design.p();
    let mut scores = Mat::zeros(n, p);
    if p == 0 {
        return scores;
    }

    // prefix sums over groups, ascending: P1 = sum h_k, P3 = sum g_k b_k,
    // Q1 = sum h_k Sbar_k, Q2 = sum g_k Sbar_k, Q3 = sum g_k b_k Sbar_k,
    // with h_k = d_k/n_k, g_k = dt_k, b_k = beta^T Sbar_k. The prefix of
    // g alone is the group time itself.
    let mut p1 = T::zero();
    let mut p3 = T::zero();
    let mut q1 = vec![T::zero(); p];
    let mut q2 = vec![T::zero(); p];
    let mut q3 = vec![T::zero(); p];

    for k in 0..cs.groups.k() {
        let h = from_usize::<T>(cs.devents[k]) / from_usize::<T>(cs.nrisk[k]);
        let g = cs.groups.dt(k);
        let sbar = cs.s_bar.row(k);
        let b = dot(beta, sbar);
        p1 += h;
        p3 += g * b;
        for j in 0..p {
            q1[j] += h * sbar[j];
            q2[j] += g * sbar[j];
            q3[j] += g * b * sbar[j];
        }
        let t_k = cs.groups.times[k];
        for &i in cs.groups.members(k) {
            let row = design.row(i);
            let bs = dot(beta, row);
            let scale = p1 + bs * t_k - p3;
            let event = outcomes[i].status == event_label;
            let out = scores.row_mut(i);
            for j in 0..p {
                let mut u = -(row[j] * scale - (q1[j] + bs * q2[j] - q3[j]));
                if event {
                    u += row[j] - sbar[j];
                }
                out[j] = u;
            }
        }
    }
    scores
}

/// Robust (sandwich) covariance of a one-stage additive-hazards fit:
/// `M^{-1} (sum_i U_i U_i^T) M^{-T}`.
pub fn ah_sandwich_covariance<T: Scalar>(fit: &AhFit<T>) -> Result<Mat<T>> {
    let p = fit.p();
    if p == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let meat = fit.score_residuals.gram();
    let chol = match crate::linalg::spd_factor(&fit.lhs_matrix, from_f64(PIVOT_REL_TOL)) {
        crate::linalg::SpdFactor::Full(c) => c,
        crate::linalg::SpdFactor::RankDeficient { dependent, .. } => {
            return Err(Error::SingularDesign {
                columns: dependent
                    .iter()
                    .map(|&j| fit.column_names[j].clone())
                    .collect(),
            })
        }
    };
    // M^{-1} B M^{-1} with symmetric M
    let mut cov = Mat::zeros(p, p);
    for j in 0..p {
        let col = chol.solve(&meat.column(j));
        for i in 0..p {
            cov.set(i, j, col[i]);
        }
    }
    let mut out = Mat::zeros(p, p);
    for i in 0..p {
        let row: Vec<T> = (0..p).map(|j| cov.get(i, j)).collect();
        let solved = chol.solve(&row);
        for j in 0..p {
            out.set(i, j, solved[j]);
        }
    }
    Ok(out)
}

/// Diagnostic counts of negative fitted cumulative-hazard increments.
///
/// For subject `i` at risk over `(t_{k-1}, t_k]` the fitted increment is
/// `d_k/n_k - dt_k beta^T Sbar_k + dt_k beta^T S_i`; additive models do not
/// constrain it to be nonnegative, so negative values are reported rather
/// than clamped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeHazardReport {
    /// Total (subject, interval) pairs at risk.
    pub intervals_total: usize,
    /// Pairs with a negative fitted increment.
    pub intervals_negative: usize,
    /// Subjects with at least one negative increment.
    pub subjects_negative: usize,
}

pub fn negative_hazard_report<T: Scalar>(
    outcomes: &[SurvivalOutcome<T>],
    design: &Design<T>,
    fit: &AhFit<T>,
    event_label: Status,
) -> Result<NegativeHazardReport> {
    let cs = centered_system(outcomes, design, event_label)?;
    let mut increments = Vec::with_capacity(cs.groups.k());
    for k in 0..cs.groups.k() {
        let jump = from_usize::<T>(cs.devents[k]) / from_usize::<T>(cs.nrisk[k]);
        let drift = dot(&fit.beta, cs.s_bar.row(k)) * cs.groups.dt(k);
        increments.push((jump - drift, cs.groups.dt(k)));
    }
    let mut total = 0usize;
    let mut negative = 0usize;
    let mut subjects = 0usize;
    for (i, outcome) in outcomes.iter().enumerate() {
        let k_i = cs.groups.group_of[i];
        let shift = dot(&fit.beta, design.row(i));
        let mut any = false;
        for (k, &(base, dt)) in increments.iter().enumerate().take(k_i + 1) {
            let _ = k;
            total += 1;
            if base + dt * shift < T::zero() {
                negative += 1;
                any = true;
            }
        }
        if any {
            subjects += 1;
        }
        let _ = outcome;
    }
    Ok(NegativeHazardReport {
        intervals_total: total,
        intervals_negative: negative,
        subjects_negative: subjects,
    })
}

/// Analytic derivative of the mean estimating function `(v - M beta)/n` with
/// respect to coefficients that enter the design linearly.
///
/// `mu_columns[j]` is the design column filled by predictor `j` and
/// `gradients[j]` its per-subject coefficient gradient (n x q_j). Returns one
/// p x q_j block per predictor.
pub(crate) fn mean_score_coefficient_derivative<T: Scalar>(
    outcomes: &[SurvivalOutcome<T>],
    design: &Design<T>,
    event_label: Status,
    beta: &[T],
    mu_columns: &[usize],
    gradients: &[&Mat<T>],
) -> Result<Vec<Mat<T>>> {
    assert_eq!(mu_columns.len(), gradients.len());
    let n = outcomes.len();
    let p = design.p();
    let groups = TimeGroups::build(outcomes)?;
    let k_total = groups.k();
    let inv_n = T::one() / from_usize::<T>(n);

    let n_blocks = mu_columns.len();
    let q: Vec<usize> = gradients.iter().map(|g| g.cols()).collect();
    for (j, g) in gradients.iter().enumerate() {
        if g.rows() != n {
            return Err(Error::Dimension(format!(
                "gradient block {j} has {} rows but the outcome has {n}",
                g.rows()
            )));
        }
    }

    // per-block outputs: d(v - M beta)/dc_j, assembled as (dv_j - dMb_j)/n
    let mut out: Vec<Mat<T>> = q.iter().map(|&qj| Mat::zeros(p, qj)).collect();

    // risk accumulators
    let mut risk_count = 0usize;
    let mut s_sum = vec![T::zero(); p];
    let mut bs_sum = T::zero(); // sum of beta^T S_i over the risk set
    let mut g_sum: Vec<Vec<T>> = q.iter().map(|&qj| vec![T::zero(); qj]).collect();
    let mut gbs_sum: Vec<Vec<T>> = q.iter().map(|&qj| vec![T::zero(); qj]).collect();
    let mut sg_sum: Vec<Mat<T>> = q.iter().map(|&qj| Mat::zeros(p, qj)).collect();

    for k in (0..k_total).rev() {
        for &i in groups.members(k) {
            risk_count += 1;
            let row = design.row(i);
            let bs = dot(beta, row);
            bs_sum += bs;
            for (acc, &x) in s_sum.iter_mut().zip(row) {
                *acc += x;
            }
            for j in 0..n_blocks {
                let grad = gradients[j].row(i);
                for l in 0..q[j] {
                    g_sum[j][l] += grad[l];
                    gbs_sum[j][l] += grad[l] * bs;
                }
                sg_sum[j].add_outer(row, grad, T::one());
            }
        }
        let inv_risk = T::one() / from_usize::<T>(risk_count);
        let s_bar: Vec<T> = s_sum.iter().map(|&s| s * inv_risk).collect();
        let bs_bar = bs_sum * inv_risk;
        let dt = groups.dt(k);

        for j in 0..n_blocks {
            let mu_col = mu_columns[j];
            let beta_mu = beta[mu_col];
            let g_bar: Vec<T> = g_sum[j].iter().map(|&g| g * inv_risk).collect();

            // dv: events at t_k add (g_il - gbar_l) to the mu row
            for &i in groups.members(k) {
                if outcomes[i].status == event_label {
                    let grad = gradients[j].row(i);
                    for l in 0..q[j] {
                        out[j].add_to(mu_col, l, grad[l] - g_bar[l]);
                    }
                }
            }

            if dt > T::zero() {
                // d(M beta) over the interval, subtracted:
                //   mu row: sum_i (g_il - gbar_l) beta^T (S_i - Sbar)
                //         = gbs_sum_l - nrisk * gbar_l * bs_bar
                //   all rows: beta_mu * (sg_sum[:,l] - nrisk * Sbar gbar_l)
                let nrisk_t = from_usize::<T>(risk_count);
                for l in 0..q[j] {
                    let centered_gbs = gbs_sum[j][l] - nrisk_t * g_bar[l] * bs_bar;
                    out[j].add_to(mu_col, l, -dt * centered_gbs);
                    for a in 0..p {
                        let centered_sg =
                            sg_sum[j].get(a, l) - nrisk_t * s_bar[a] * g_bar[l];
                        out[j].add_to(a, l, -dt * beta_mu * centered_sg);
                    }
                }
            }
        }
    }

    for block in &mut out {
        block.scale(inv_n);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SurvivalOutcome as So;

    fn all_event_outcomes(times: &[f64]) -> Vec<So<f64>> {
        times.iter().map(|&t| So::event(t)).collect()
    }

    /// Independent Nelson–Aalen estimator used as the p = 0 oracle.
    fn nelson_aalen(outcomes: &[So<f64>]) -> (Vec<f64>, Vec<f64>) {
        let mut times: Vec<f64> = outcomes.iter().map(|o| o.time).collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        let mut knots = Vec::new();
        let mut values = Vec::new();
        let mut cum = 0.0;
        for &t in &times {
            let at_risk = outcomes.iter().filter(|o| o.time >= t).count();
            let events = outcomes
                .iter()
                .filter(|o| o.time == t && o.status == Status::Event)
                .count();
            cum += events as f64 / at_risk as f64;
            knots.push(t);
            values.push(cum);
        }
        (knots, values)
    }

    #[test]
    fn baseline_only_fit_equals_nelson_aalen_on_spec_example() {
        // times {1,2,3,4}, all events: 1/4, 1/4+1/3, +1/2, +1
        let outcomes = all_event_outcomes(&[1.0, 2.0, 3.0, 4.0]);
        let fit =
            fit_additive_hazards(&outcomes, &Design::empty(4), Status::Event).unwrap();
        let expect = [
            1.0 / 4.0,
            1.0 / 4.0 + 1.0 / 3.0,
            1.0 / 4.0 + 1.0 / 3.0 + 1.0 / 2.0,
            1.0 / 4.0 + 1.0 / 3.0 + 1.0 / 2.0 + 1.0,
        ];
        assert_eq!(fit.baseline.knots(), &[1.0, 2.0, 3.0, 4.0]);
        for (got, want) in fit.baseline.values().iter().zip(expect) {
            assert_eq!(*got, want);
        }
    }

    #[test]
    fn four_subject_single_covariate_matches_exact_arithmetic() {
        // Hand evaluation with exact rationals over the three inter-event
        // intervals gives M = 5/3, v = -7/6, so beta = -7/10; the baseline at
        // the knots is 3/5, 7/5, 13/5, 43/10.
        let outcomes = all_event_outcomes(&[1.0, 2.0, 3.0, 4.0]);
        let design = Design::from_named_columns(
            4,
            &[("s".to_string(), vec![0.0, 0.0, 1.0, 1.0])],
        )
        .unwrap();
        let fit = fit_additive_hazards(&outcomes, &design, Status::Event).unwrap();
        assert!((fit.beta[0] + 0.7).abs() <= 1e-12, "beta = {}", fit.beta[0]);
        let expect = [0.6, 1.4, 2.6, 4.3];
        for (got, want) in fit.baseline.values().iter().zip(expect) {
            assert!((got - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn score_residuals_sum_to_zero() {
        let outcomes = vec![
            So::event(1.0),
            So::censored(1.5),
            So::event(2.0),
            So::event(2.0),
            So::censored(3.0),
            So::event(4.0),
        ];
        let design = Design::from_named_columns(
            6,
            &[
                ("a".to_string(), vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0]),
                ("x".to_string(), vec![0.3, -0.2, 1.1, 0.4, 0.9, -0.5]),
            ],
        )
        .unwrap();
        let fit = fit_additive_hazards(&outcomes, &design, Status::Event).unwrap();
        for j in 0..2 {
            let total: f64 = (0..6).map(|i| fit.score_residuals.get(i, j)).sum();
            assert!(total.abs() <= 1e-8 * 6.0, "column {j} sums to {total}");
        }
        // solve residual
        let mv = fit.lhs_matrix.mul_vec(&fit.beta);
        for (a, b) in mv.iter().zip(&fit.rhs) {
            assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn nelson_aalen_oracle_agrees_with_ties_and_censoring() {
        let outcomes = vec![
            So::event(2.0),
            So::event(2.0),
            So::censored(2.0),
            So::event(3.5),
            So::censored(4.0),
            So::event(5.0),
            So::event(5.0),
        ];
        let fit = fit_additive_hazards(&outcomes, &Design::empty(7), Status::Event)
            .unwrap();
        let (knots, values) = nelson_aalen(&outcomes);
        assert_eq!(fit.baseline.knots(), knots.as_slice());
        for (got, want) in fit.baseline.values().iter().zip(&values) {
            assert_eq!(got, want, "exact agreement expected");
        }
        // monotone in the covariate-free case
        assert!(fit
            .baseline
            .values()
            .windows(2)
            .all(|w| w[0] <= w[1]));
    }

    #[test]
    fn zero_events_is_an_error() {
        let outcomes = vec![So::censored(1.0), So::censored(2.0)];
        let err = fit_additive_hazards(&outcomes, &Design::empty(2), Status::Event)
            .unwrap_err();
        assert!(matches!(err, Error::ZeroEvents { .. }));
    }

    #[test]
    fn constant_column_is_singular_by_centering() {
        let outcomes = all_event_outcomes(&[1.0, 2.0, 3.0, 4.0]);
        let design = Design::from_named_columns(
            4,
            &[("const".to_string(), vec![2.0, 2.0, 2.0, 2.0])],
        )
        .unwrap();
        let err = fit_additive_hazards(&outcomes, &design, Status::Event).unwrap_err();
        match err {
            Error::SingularDesign { columns } => assert_eq!(columns, vec!["const"]),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn centering_invariance() {
        let outcomes = vec![
            So::event(1.0),
            So::event(2.5),
            So::censored(3.0),
            So::event(4.0),
            So::event(4.0),
            So::censored(5.5),
        ];
        let base = vec![0.1, -0.4, 0.9, 1.3, -0.2, 0.5];
        let shifted: Vec<f64> = base.iter().map(|v| v + 7.25).collect();
        let other = vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let d1 = Design::from_named_columns(
            6,
            &[("c".to_string(), base), ("o".to_string(), other.clone())],
        )
        .unwrap();
        let d2 = Design::from_named_columns(
            6,
            &[("c".to_string(), shifted), ("o".to_string(), other)],
        )
        .unwrap();
        let f1 = fit_additive_hazards(&outcomes, &d1, Status::Event).unwrap();
        let f2 = fit_additive_hazards(&outcomes, &d2, Status::Event).unwrap();
        for (a, b) in f1.beta.iter().zip(&f2.beta) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn scale_equivariance() {
        let outcomes = vec![
            So::event(1.0),
            So::event(2.5),
            So::censored(3.0),
            So::event(4.0),
            So::event(4.5),
            So::censored(5.5),
        ];
        let c1 = vec![0.1, -0.4, 0.9, 1.3, -0.2, 0.5];
        let c2 = vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let a = -2.5;
        let scaled: Vec<f64> = c1.iter().map(|v| v * a).collect();
        let d1 = Design::from_named_columns(
            6,
            &[("c1".to_string(), c1), ("c2".to_string(), c2.clone())],
        )
        .unwrap();
        let d2 = Design::from_named_columns(
            6,
            &[("c1".to_string(), scaled), ("c2".to_string(), c2)],
        )
        .unwrap();
        let f1 = fit_additive_hazards(&outcomes, &d1, Status::Event).unwrap();
        let f2 = fit_additive_hazards(&outcomes, &d2, Status::Event).unwrap();
        assert!((f1.beta[0] / a - f2.beta[0]).abs() <= 1e-10);
        assert!((f1.beta[1] - f2.beta[1]).abs() <= 1e-10);
    }

    #[test]
    fn competing_labels_are_censoring_for_other_causes() {
        let outcomes = vec![
            So::new(1.0, Status::Event),
            So::new(2.0, Status::CompetingEvent),
            So::new(3.0, Status::Event),
            So::new(4.0, Status::Censored),
        ];
        // treating competing events as censoring must agree with an explicit
        // recode of those subjects as censored
        let recoded: Vec<So<f64>> = outcomes
            .iter()
            .map(|o| {
                if o.status == Status::CompetingEvent {
                    So::censored(o.time)
                } else {
                    *o
                }
            })
            .collect();
        let design = Design::from_named_columns(
            4,
            &[("s".to_string(), vec![0.0, 1.0, 1.0, 0.0])],
        )
        .unwrap();
        let f1 = fit_additive_hazards(&outcomes, &design, Status::Event).unwrap();
        let f2 = fit_additive_hazards(&recoded, &design, Status::Event).unwrap();
        assert_eq!(f1.beta[0], f2.beta[0]);
    }

    #[test]
    fn negative_hazard_report_counts_pairs() {
        let outcomes = all_event_outcomes(&[1.0, 2.0, 3.0, 4.0]);
        let design = Design::from_named_columns(
            4,
            &[("s".to_string(), vec![0.0, 0.0, 1.0, 1.0])],
        )
        .unwrap();
        let fit = fit_additive_hazards(&outcomes, &design, Status::Event).unwrap();
        let report =
            negative_hazard_report(&outcomes, &design, &fit, Status::Event).unwrap();
        // subjects 1..4 are at risk over 1, 2, 3, 4 intervals respectively
        assert_eq!(report.intervals_total, 1 + 2 + 3 + 4);
        assert!(report.intervals_negative <= report.intervals_total);
    }

    #[test]
    fn generic_fit_runs_at_f32() {
        let outcomes: Vec<So<f32>> = vec![
            So::event(1.0),
            So::event(2.0),
            So::event(3.0),
            So::event(4.0),
        ];
        let design = Design::from_named_columns(
            4,
            &[("s".to_string(), vec![0.0f32, 0.0, 1.0, 1.0])],
        )
        .unwrap();
        let fit = fit_additive_hazards(&outcomes, &design, Status::Event).unwrap();
        assert!((fit.beta[0] + 0.7).abs() < 1e-4);
    }
}
