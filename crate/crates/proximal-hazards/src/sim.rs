//! Data generator and Monte Carlo study harness.
//!
//! The generator draws, per subject: latent confounders `U, X ~ Uniform(0,1)`,
//! a binary exposure `A ~ Bernoulli(expit(-3 + 5U + X))`, an exponential
//! event time with hazard `0.2 + 0.2 A + beta_U U + 0.2 X` administratively
//! censored at `censor_time`, and bivariate Gaussian proxies
//!
//! ```text
//! W | U,X ~ N((0.5 c_U U + 0.2 X, 2 c_U U + X),    diag(0.1^2, 0.25^2))
//! Z | U,X ~ N((c_U U + 0.5 X,     0.5 c_U U + 2X), diag(0.5^2, 0.2^2))
//! ```
//!
//! Every variable block draws from its own deterministic substream of
//! `(seed, replicate)`, so replicate datasets are reproducible regardless of
//! execution order or parallelism. The latent confounder is returned in a
//! side channel that no estimation path reads; only `oracle_fit` uses it.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::data::{ColumnBlock, Nco, ProximalDataset, Status, SurvivalOutcome};
use crate::error::{Error, Result};
use crate::hazards::{ah_sandwich_covariance, fit_additive_hazards, AhFit, Design};
use crate::inference::{sandwich_covariance, wald_ci};
use crate::scalar::{from_f64, Scalar};
use crate::two_stage::{fully_adjusted_fit, naive_fit, p2sls_fit};

/// One cell of the simulation study.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Subjects per replicate.
    pub n: usize,
    /// Unmeasured-confounding hazard coefficient.
    pub beta_u: f64,
    /// Proxy-relevance scale.
    pub c_u: f64,
    /// Replicate count.
    pub reps: usize,
    pub seed: u64,
    /// Administrative censoring time.
    pub censor_time: f64,
    /// True exposure effect.
    pub beta_a_true: f64,
}

impl SimConfig {
    pub fn new(n: usize, beta_u: f64, c_u: f64, reps: usize, seed: u64) -> Self {
        SimConfig {
            n,
            beta_u,
            c_u,
            reps,
            seed,
            censor_time: 5.0,
            beta_a_true: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 50 {
            return Err(Error::Config("simulation requires n >= 50".into()));
        }
        if self.reps < 1 {
            return Err(Error::Config("simulation requires reps >= 1".into()));
        }
        if !(self.censor_time > 0.0) {
            return Err(Error::Config("censor_time must be positive".into()));
        }
        Ok(())
    }
}

/// The default study grid: `beta_U` from 0 to 2 in steps of 0.25 crossed
/// with `c_U` in {1, 0.2, 0}.
pub fn default_grid(n: usize, reps: usize, seed: u64) -> Vec<SimConfig> {
    let mut grid = Vec::new();
    for c_u in [1.0, 0.2, 0.0] {
        for step in 0..=8 {
            let beta_u = 0.25 * step as f64;
            grid.push(SimConfig::new(n, beta_u, c_u, reps, seed));
        }
    }
    grid
}

/// A simulated dataset plus the latent confounder, kept outside the dataset
/// so estimation paths cannot read it.
#[derive(Debug, Clone)]
pub struct SimulatedDataset<T> {
    pub dataset: ProximalDataset<T>,
    pub latent_u: Vec<T>,
}

/// Deterministic substream for `(seed, replicate, block)`.
pub(crate) fn substream_rng(seed: u64, replicate: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate * 16 + block);
    rng
}

fn uniform_block(seed: u64, replicate: u64, block: u64, n: usize) -> Vec<f64> {
    let mut rng = substream_rng(seed, replicate, block);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

fn normal_block(seed: u64, replicate: u64, block: u64, n: usize) -> Vec<f64> {
    let mut rng = substream_rng(seed, replicate, block);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn expit(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Draw one replicate dataset. Deterministic per `(config.seed, replicate)`.
pub fn simulate_dataset<T: Scalar>(
    config: &SimConfig,
    replicate: u64,
) -> Result<SimulatedDataset<T>> {
    config.validate()?;
    let n = config.n;
    let seed = config.seed;

    let u = uniform_block(seed, replicate, 0, n);
    let x = uniform_block(seed, replicate, 1, n);
    let ua = uniform_block(seed, replicate, 2, n);
    let ut = uniform_block(seed, replicate, 3, n);
    let nw1 = normal_block(seed, replicate, 4, n);
    let nw2 = normal_block(seed, replicate, 5, n);
    let nz1 = normal_block(seed, replicate, 6, n);
    let nz2 = normal_block(seed, replicate, 7, n);

    let mut a = Vec::with_capacity(n);
    let mut outcomes = Vec::with_capacity(n);
    let mut w1 = Vec::with_capacity(n);
    let mut w2 = Vec::with_capacity(n);
    let mut z1 = Vec::with_capacity(n);
    let mut z2 = Vec::with_capacity(n);

    for i in 0..n {
        let ai = if ua[i] < expit(-3.0 + 5.0 * u[i] + x[i]) {
            1.0
        } else {
            0.0
        };
        let rate = 0.2 + 0.2 * ai + config.beta_u * u[i] + 0.2 * x[i];
        if !(rate > 0.0) {
            return Err(Error::NonPositiveHazard { row: i, rate });
        }
        // inverse-CDF draw of an exponential with the per-subject rate
        let t = -(1.0 - ut[i]).ln() / rate;
        let outcome = if t <= config.censor_time {
            SurvivalOutcome::new(from_f64(t), Status::Event)
        } else {
            SurvivalOutcome::new(from_f64(config.censor_time), Status::Censored)
        };
        outcomes.push(outcome);
        a.push(from_f64::<T>(ai));
        w1.push(from_f64::<T>(0.5 * config.c_u * u[i] + 0.2 * x[i] + 0.1 * nw1[i]));
        w2.push(from_f64::<T>(2.0 * config.c_u * u[i] + x[i] + 0.25 * nw2[i]));
        z1.push(from_f64::<T>(config.c_u * u[i] + 0.5 * x[i] + 0.5 * nz1[i]));
        z2.push(from_f64::<T>(0.5 * config.c_u * u[i] + 2.0 * x[i] + 0.2 * nz2[i]));
    }

    let x_col: Vec<T> = x.iter().map(|&v| from_f64(v)).collect();
    let dataset = ProximalDataset::new(
        outcomes,
        ColumnBlock::from_columns(n, &[("a", a)])?,
        ColumnBlock::from_columns(n, &[("x", x_col)])?,
        ColumnBlock::from_columns(n, &[("z1", z1), ("z2", z2)])?,
        vec![Nco::linear("w1", w1), Nco::linear("w2", w2)],
    )?;
    Ok(SimulatedDataset {
        dataset,
        latent_u: u.iter().map(|&v| from_f64(v)).collect(),
    })
}

/// Minimal competing-risk fixture: the competing event acts as the NCO.
#[derive(Debug, Clone, PartialEq)]
pub struct CompetingSimConfig {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub censor_time: f64,
    pub beta_a_true: f64,
    /// Confounder coefficient in the primary-cause hazard.
    pub primary_u: f64,
    /// Baseline hazard of the competing cause.
    pub competing_base: f64,
    /// Confounder coefficient in the competing-cause hazard.
    pub competing_u: f64,
    /// Proxy-relevance scale of the NCEs.
    pub c_u: f64,
}

impl CompetingSimConfig {
    pub fn new(n: usize, reps: usize, seed: u64) -> Self {
        CompetingSimConfig {
            n,
            reps,
            seed,
            censor_time: 5.0,
            beta_a_true: 0.2,
            primary_u: 1.0,
            competing_base: 0.3,
            competing_u: 0.5,
            c_u: 1.0,
        }
    }
}

/// Draw one competing-risk replicate: primary hazard
/// `0.2 + 0.2 A + primary_u U`, competing hazard
/// `competing_base + competing_u U`, shared administrative censoring.
pub fn simulate_competing_dataset<T: Scalar>(
    config: &CompetingSimConfig,
    replicate: u64,
) -> Result<SimulatedDataset<T>> {
    let n = config.n;
    let seed = config.seed;

    let u = uniform_block(seed, replicate, 0, n);
    let x = uniform_block(seed, replicate, 1, n);
    let ua = uniform_block(seed, replicate, 2, n);
    let ut0 = uniform_block(seed, replicate, 3, n);
    let ut1 = uniform_block(seed, replicate, 4, n);
    let nz1 = normal_block(seed, replicate, 6, n);
    let nz2 = normal_block(seed, replicate, 7, n);

    let mut a = Vec::with_capacity(n);
    let mut outcomes = Vec::with_capacity(n);
    let mut z1 = Vec::with_capacity(n);
    let mut z2 = Vec::with_capacity(n);

    for i in 0..n {
        let ai = if ua[i] < expit(-3.0 + 5.0 * u[i] + x[i]) {
            1.0
        } else {
            0.0
        };
        let rate0 = 0.2 + config.beta_a_true * ai + config.primary_u * u[i];
        let rate1 = config.competing_base + config.competing_u * u[i];
        if !(rate0 > 0.0) {
            return Err(Error::NonPositiveHazard { row: i, rate: rate0 });
        }
        if !(rate1 > 0.0) {
            return Err(Error::NonPositiveHazard { row: i, rate: rate1 });
        }
        let t0 = -(1.0 - ut0[i]).ln() / rate0;
        let t1 = -(1.0 - ut1[i]).ln() / rate1;
        let c = config.censor_time;
        let (time, status) = if t0 <= t1 && t0 <= c {
            (t0, Status::Event)
        } else if t1 <= c {
            (t1, Status::CompetingEvent)
        } else {
            (c, Status::Censored)
        };
        outcomes.push(SurvivalOutcome::new(from_f64(time), status));
        a.push(from_f64::<T>(ai));
        z1.push(from_f64::<T>(config.c_u * u[i] + 0.5 * x[i] + 0.5 * nz1[i]));
        z2.push(from_f64::<T>(0.5 * config.c_u * u[i] + 2.0 * x[i] + 0.2 * nz2[i]));
    }

    let x_col: Vec<T> = x.iter().map(|&v| from_f64(v)).collect();
    let dataset = ProximalDataset::new(
        outcomes,
        ColumnBlock::from_columns(n, &[("a", a)])?,
        ColumnBlock::from_columns(n, &[("x", x_col)])?,
        ColumnBlock::from_columns(n, &[("z1", z1), ("z2", z2)])?,
        vec![Nco::competing_risk("competing")],
    )?;
    Ok(SimulatedDataset {
        dataset,
        latent_u: u.iter().map(|&v| from_f64(v)).collect(),
    })
}

/// Gold-standard benchmark: additive-hazards fit on `[A | U | X]` using the
/// latent confounder. Only possible inside the simulator.
pub fn oracle_fit<T: Scalar>(sim: &SimulatedDataset<T>) -> Result<AhFit<T>> {
    let dataset = &sim.dataset;
    let n = dataset.n();
    if sim.latent_u.len() != n {
        return Err(Error::Dimension("latent U length mismatch".into()));
    }
    let mut named: Vec<(String, Vec<T>)> = Vec::new();
    for (j, name) in dataset.exposure().names().iter().enumerate() {
        named.push((name.clone(), dataset.exposure().matrix().column(j)));
    }
    named.push(("u".to_string(), sim.latent_u.clone()));
    for (j, name) in dataset.covariates().names().iter().enumerate() {
        named.push((name.clone(), dataset.covariates().matrix().column(j)));
    }
    let design = Design::from_named_columns(n, &named)?;
    fit_additive_hazards(dataset.outcomes(), &design, Status::Event)
}

/// Study methods compared per cell.
pub const METHODS: [&str; 3] = ["p2sls", "naive", "fully_adjusted"];

/// Aggregated performance of one method in one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodMetrics {
    /// Mean of `beta_A_hat - beta_A_true` over successful replicates.
    pub bias: f64,
    /// Sample standard deviation of the estimates.
    pub empirical_sd: f64,
    /// Mean of the estimated standard errors.
    pub mean_se: f64,
    /// Fraction of 95% Wald intervals covering the truth.
    pub coverage: f64,
    /// Replicates whose fit failed.
    pub failures: usize,
}

/// Per-cell study metrics for the three methods.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyMetrics {
    pub p2sls: MethodMetrics,
    pub naive: MethodMetrics,
    pub fully_adjusted: MethodMetrics,
}

impl StudyMetrics {
    pub fn by_method(&self, method: &str) -> Option<&MethodMetrics> {
        match method {
            "p2sls" => Some(&self.p2sls),
            "naive" => Some(&self.naive),
            "fully_adjusted" => Some(&self.fully_adjusted),
            _ => None,
        }
    }
}

/// One completed grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub config: SimConfig,
    pub metrics: StudyMetrics,
}

struct ReplicateEstimates {
    p2sls: Option<(f64, f64)>,
    naive: Option<(f64, f64)>,
    fully_adjusted: Option<(f64, f64)>,
}

fn estimate_and_se_ah(fit: &AhFit<f64>) -> Option<(f64, f64)> {
    let cov = ah_sandwich_covariance(fit).ok()?;
    let var = cov.get(0, 0);
    Some((fit.beta[0], var.max(0.0).sqrt()))
}

fn run_replicate(config: &SimConfig, replicate: u64) -> ReplicateEstimates {
    let sim = match simulate_dataset::<f64>(config, replicate) {
        Ok(sim) => sim,
        Err(_) => {
            return ReplicateEstimates {
                p2sls: None,
                naive: None,
                fully_adjusted: None,
            }
        }
    };
    let data = &sim.dataset;

    let p2sls = p2sls_fit(data).ok().and_then(|fit| {
        let cov = sandwich_covariance(&fit, data).ok()?;
        let idx = fit.beta_a_index(0);
        let var = cov.get(idx, idx);
        Some((fit.beta_a[0], var.max(0.0).sqrt()))
    });
    let naive = naive_fit(data).ok().and_then(|f| estimate_and_se_ah(&f));
    let fully = fully_adjusted_fit(data)
        .ok()
        .and_then(|f| estimate_and_se_ah(&f));

    ReplicateEstimates {
        p2sls,
        naive,
        fully_adjusted: fully,
    }
}

fn aggregate(
    estimates: &[Option<(f64, f64)>],
    truth: f64,
    ci_level: f64,
) -> MethodMetrics {
    let ok: Vec<(f64, f64)> = estimates.iter().flatten().copied().collect();
    let failures = estimates.len() - ok.len();
    if ok.is_empty() {
        return MethodMetrics {
            bias: f64::NAN,
            empirical_sd: f64::NAN,
            mean_se: f64::NAN,
            coverage: f64::NAN,
            failures,
        };
    }
    let m = ok.len() as f64;
    let mean_est = ok.iter().map(|(e, _)| e).sum::<f64>() / m;
    let var = if ok.len() > 1 {
        ok.iter().map(|(e, _)| (e - mean_est).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    let mean_se = ok.iter().map(|(_, s)| s).sum::<f64>() / m;
    let covered = ok
        .iter()
        .filter(|(e, s)| {
            let (lo, hi) = wald_ci(*e, s * s, ci_level);
            lo <= truth && truth <= hi
        })
        .count();
    MethodMetrics {
        bias: mean_est - truth,
        empirical_sd: var.sqrt(),
        mean_se,
        coverage: covered as f64 / m,
        failures,
    }
}

/// Run one study cell: `reps` replicates of the three methods with sandwich
/// standard errors and 95% Wald intervals. Replicates run in parallel on
/// independent substreams; aggregation is order-independent.
pub fn run_cell(config: &SimConfig) -> Result<CellResult> {
    config.validate()?;
    let replicates: Vec<ReplicateEstimates> = (0..config.reps as u64)
        .into_par_iter()
        .map(|rep| run_replicate(config, rep))
        .collect();

    let truth = config.beta_a_true;
    let level = 0.95;
    let p2sls: Vec<Option<(f64, f64)>> = replicates.iter().map(|r| r.p2sls).collect();
    let naive: Vec<Option<(f64, f64)>> = replicates.iter().map(|r| r.naive).collect();
    let fully: Vec<Option<(f64, f64)>> =
        replicates.iter().map(|r| r.fully_adjusted).collect();

    Ok(CellResult {
        config: config.clone(),
        metrics: StudyMetrics {
            p2sls: aggregate(&p2sls, truth, level),
            naive: aggregate(&naive, truth, level),
            fully_adjusted: aggregate(&fully, truth, level),
        },
    })
}

/// Run every cell of a study grid.
pub fn run_study(grid: &[SimConfig]) -> Result<Vec<CellResult>> {
    if grid.is_empty() {
        return Err(Error::Config("study grid is empty".into()));
    }
    grid.iter().map(run_cell).collect()
}

/// Write study results as CSV: one row per (cell, method).
pub fn write_study_csv<W: Write>(results: &[CellResult], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let io_err = |e: csv::Error| Error::Numerical(format!("CSV write failed: {e}"));
    wtr.write_record([
        "n",
        "beta_u",
        "c_u",
        "reps",
        "seed",
        "censor_time",
        "beta_a_true",
        "method",
        "bias",
        "sd",
        "mean_se",
        "coverage",
        "failures",
    ])
    .map_err(io_err)?;
    for cell in results {
        for method in METHODS {
            let m = cell
                .metrics
                .by_method(method)
                .expect("method names are fixed");
            wtr.write_record([
                cell.config.n.to_string(),
                cell.config.beta_u.to_string(),
                cell.config.c_u.to_string(),
                cell.config.reps.to_string(),
                cell.config.seed.to_string(),
                cell.config.censor_time.to_string(),
                cell.config.beta_a_true.to_string(),
                method.to_string(),
                m.bias.to_string(),
                m.empirical_sd.to_string(),
                m.mean_se.to_string(),
                m.coverage.to_string(),
                m.failures.to_string(),
            ])
            .map_err(io_err)?;
        }
    }
    wtr.flush()
        .map_err(|e| Error::Numerical(format!("CSV flush failed: {e}")))?;
    Ok(())
}
