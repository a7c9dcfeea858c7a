//! Shared fixtures for the integration suites. Each test binary uses a
//! subset of these.
#![allow(dead_code)]

use proximal_hazards::data::{ColumnBlock, Nco, ProximalDataset, Status, SurvivalOutcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A seeded dataset with one binary exposure, one covariate, one NCE, and a
/// single linear NCO. Times land on a coarse grid so ties occur; at least one
/// event is guaranteed.
pub fn seeded_dataset(seed: u64, n: usize) -> ProximalDataset<f64> {
    let mut r = rng(seed);
    let mut a = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut outcomes = Vec::with_capacity(n);
    for i in 0..n {
        let u: f64 = r.random();
        let xi: f64 = r.random();
        let zi: f64 = u + 0.5 * r.random::<f64>();
        let ai = if r.random::<f64>() < 0.4 + 0.3 * u { 1.0 } else { 0.0 };
        let wi = 0.3 + 0.8 * u + 0.2 * xi + 0.3 * r.random::<f64>();
        // grid times with ties
        let t = ((r.random::<f64>() * 39.0).floor() + 1.0) / 8.0;
        let event = i == 0 || r.random::<f64>() < 0.75;
        outcomes.push(if event {
            SurvivalOutcome::event(t)
        } else {
            SurvivalOutcome::censored(t)
        });
        a.push(ai);
        x.push(xi);
        z.push(zi);
        w.push(wi);
    }
    ProximalDataset::new(
        outcomes,
        ColumnBlock::from_columns(n, &[("a", a)]).unwrap(),
        ColumnBlock::from_columns(n, &[("x", x)]).unwrap(),
        ColumnBlock::from_columns(n, &[("z", z)]).unwrap(),
        vec![Nco::linear("w", w)],
    )
    .unwrap()
}

/// Fixed dataset with one NCO of every regression kind (linear, loglinear,
/// survival), for exercising all derivative paths at once.
///
/// Identification of three stacked predictors needs as many NCE directions
/// as NCOs, so the confounder is two-dimensional and three NCEs load on it
/// differently.
pub fn mixed_nco_dataset(seed: u64, n: usize) -> ProximalDataset<f64> {
    let mut r = rng(seed);
    let mut a = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut z1 = Vec::with_capacity(n);
    let mut z2 = Vec::with_capacity(n);
    let mut z3 = Vec::with_capacity(n);
    let mut w1 = Vec::with_capacity(n);
    let mut w2 = Vec::with_capacity(n);
    let mut w3 = Vec::with_capacity(n);
    let mut outcomes = Vec::with_capacity(n);
    for i in 0..n {
        let u1: f64 = r.random();
        let u2: f64 = r.random();
        let xi: f64 = r.random();
        z1.push(u1 + 0.4 * r.random::<f64>());
        z2.push(u2 + 0.4 * r.random::<f64>());
        z3.push(0.6 * u1 - 0.6 * u2 + 0.4 * r.random::<f64>());
        let p_a = 1.0 / (1.0 + (-(-1.5 + 2.0 * u1 + u2 + 0.5 * xi)).exp());
        let ai = if r.random::<f64>() < p_a { 1.0 } else { 0.0 };

        w1.push(0.5 + 0.9 * u1 + 0.2 * xi + 0.2 * r.random::<f64>());

        let eta = 0.3 + 0.6 * u2 + 0.2 * xi;
        let w2i = Poisson::new(eta.exp()).unwrap().sample(&mut r);
        w2.push(w2i);

        let rate_w3 = 0.3 + 0.4 * u1 + 0.3 * u2 + 0.1 * xi;
        let t3 = -(1.0 - r.random::<f64>()).ln() / rate_w3;
        w3.push(if t3 <= 2.0 {
            SurvivalOutcome::event(t3)
        } else {
            SurvivalOutcome::censored(2.0)
        });

        let rate = 0.2 + 0.2 * ai + 0.3 * u1 + 0.2 * u2 + 0.2 * xi;
        let t = -(1.0 - r.random::<f64>()).ln() / rate;
        outcomes.push(if i == 0 || t <= 5.0 {
            SurvivalOutcome::event(t.min(5.0))
        } else {
            SurvivalOutcome::censored(5.0)
        });
        a.push(ai);
        x.push(xi);
    }
    ProximalDataset::new(
        outcomes,
        ColumnBlock::from_columns(n, &[("a", a)]).unwrap(),
        ColumnBlock::from_columns(n, &[("x", x)]).unwrap(),
        ColumnBlock::from_columns(n, &[("z1", z1), ("z2", z2), ("z3", z3)]).unwrap(),
        vec![
            Nco::linear("w1", w1),
            Nco::loglinear("w2", w2),
            Nco::survival("w3", w3),
        ],
    )
    .unwrap()
}

/// Mean second-stage estimating function `(v - M beta)/n`, rebuilt from
/// scratch with explicit first-stage coefficient vectors. Independent of the
/// analytic derivative path: predictors are recomputed as `regressors * c`.
pub fn mean_u2_at(
    dataset: &ProximalDataset<f64>,
    first_stage_regressors: &[&proximal_hazards::Mat64],
    coefficients: &[Vec<f64>],
    beta: &[f64],
) -> Vec<f64> {
    use proximal_hazards::hazards::Design;
    let n = dataset.n();
    let mut named: Vec<(String, Vec<f64>)> = Vec::new();
    for (j, name) in dataset.exposure().names().iter().enumerate() {
        named.push((name.clone(), dataset.exposure().matrix().column(j)));
    }
    for (j, (regs, coef)) in first_stage_regressors.iter().zip(coefficients).enumerate() {
        let mu: Vec<f64> = (0..n)
            .map(|i| {
                regs.row(i)
                    .iter()
                    .zip(coef)
                    .map(|(&g, &c)| g * c)
                    .sum::<f64>()
            })
            .collect();
        named.push((format!("mu{j}"), mu));
    }
    for (j, name) in dataset.covariates().names().iter().enumerate() {
        named.push((name.clone(), dataset.covariates().matrix().column(j)));
    }
    let design = Design::from_named_columns(n, &named).unwrap();
    let (m, v) =
        proximal_hazards::estimating_system(dataset.outcomes(), &design, Status::Event).unwrap();
    let mb = m.mul_vec(beta);
    v.iter()
        .zip(&mb)
        .map(|(&vi, &mbi)| (vi - mbi) / n as f64)
        .collect()
}
