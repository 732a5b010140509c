//! Series classifiers for the zero-one laws and seeded Monte Carlo measure
//! estimation over pairs and over fixed-matrix slices.
//!
//! Finite windows bias every fraction upward (failures beyond the window are
//! invisible), so reports always carry the window and thresholds downstream
//! are pilot-calibrated, never claimed to follow from the limit theorems.

use crate::error::{Error, Result};
use crate::geometry::AffinePair;
use crate::linalg::Mat;
use crate::oracle::{dirichlet_on_window, OracleParams};
use crate::rng::SplitMix64;
use crate::weights::{ApproxConfig, ApproxFunction, WeightSystem, WeightSystemConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convergence {
    Converges,
    Diverges,
    Inconclusive,
}

// ---------------------------------------------------------------------------
// Series terms
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    /// term(l) = 1 / (l · prod beta_j(l) · prod alpha_i(g(l)))
    DirichletSum,
    /// term(k) = (1/k) · prod beta_j(f(k)) · prod alpha_i(k)
    KhintchineGroshevSum,
}

#[derive(Clone, Debug)]
pub struct SeriesSpec {
    pub kind: SeriesKind,
    pub ws: WeightSystem,
    pub func: ApproxFunction,
}

impl SeriesSpec {
    pub fn dirichlet_sum(ws: WeightSystem, g: ApproxFunction) -> Self {
        SeriesSpec {
            kind: SeriesKind::DirichletSum,
            ws,
            func: g,
        }
    }

    pub fn khintchine_groshev_sum(ws: WeightSystem, f: ApproxFunction) -> Self {
        SeriesSpec {
            kind: SeriesKind::KhintchineGroshevSum,
            ws,
            func: f,
        }
    }

    /// ln term(l); computed in log space to survive wide blocks.
    pub fn term_log(&self, l: f64) -> Result<f64> {
        match self.kind {
            SeriesKind::DirichletSum => {
                let g_l = self.func.eval(l)?;
                let mut acc = -l.ln();
                acc -= self.ws.beta_product_log(l)?;
                acc -= self.ws.alpha_product_log(g_l)?;
                Ok(acc)
            }
            SeriesKind::KhintchineGroshevSum => {
                let f_l = self.func.eval(l)?;
                let mut acc = -l.ln();
                acc += self.ws.beta_product_log(f_l)?;
                acc += self.ws.alpha_product_log(l)?;
                Ok(acc)
            }
        }
    }

    /// (p, q) with term(l) ~ const · l^{-p} (ln l)^{-q}, available when the
    /// weights are pure powers and the function has a power-log tail.
    fn analytic_exponents(&self) -> Option<(f64, f64)> {
        let sa = self.ws.alpha_power_sum()?;
        let sb = self.ws.beta_power_sum()?;
        let (_c, a, b) = self.func.power_log_tail()?;
        match self.kind {
            SeriesKind::DirichletSum => Some((1.0 + sb - a * sa, b * sa)),
            SeriesKind::KhintchineGroshevSum => Some((1.0 - sa + a * sb, -b * sb)),
        }
    }

    /// Exact classification of sum l^{-p} (ln l)^{-q} when available.
    pub fn analytic_classification(&self) -> Option<Convergence> {
        let (p, q) = self.analytic_exponents()?;
        if p > 1.0 + 1e-9 {
            Some(Convergence::Converges)
        } else if p < 1.0 - 1e-9 {
            Some(Convergence::Diverges)
        } else if q > 1.0 + 1e-9 {
            Some(Convergence::Converges)
        } else if q < 1.0 - 1e-9 {
            Some(Convergence::Diverges)
        } else {
            // the borderline l^{-1} (ln l)^{-1}
            Some(Convergence::Diverges)
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeriesReport {
    pub verdict: Convergence,
    pub numeric_verdict: Convergence,
    pub analytic_verdict: Option<Convergence>,
    /// Condensed block sums (B^{r+1} - B^r) · term(B^r).
    pub block_sums: Vec<f64>,
    pub block_base: f64,
    pub theta_c: f64,
    pub theta_d: f64,
}

/// Numeric thresholds: ratio ceiling for convergence and block-sum floor for
/// divergence. Heuristic by nature; the analytic path overrides it whenever
/// the family has a closed power-log tail.
pub const THETA_C: f64 = 0.98;
pub const THETA_D: f64 = 1e-3;

/// Cauchy-condensation classifier: computes the condensed block sums and
/// derives {converges, diverges, inconclusive}; conflicting numeric signals
/// yield inconclusive.
pub fn classify_series(
    spec: &SeriesSpec,
    block_base: f64,
    block_count: usize,
) -> Result<SeriesReport> {
    if !(block_base > 1.0) || block_count < 4 {
        return Err(Error::Contract(
            "need block_base > 1 and at least 4 blocks".into(),
        ));
    }
    let mut block_sums = Vec::with_capacity(block_count);
    for r in 0..block_count {
        let start = block_base.powi(r as i32);
        let len = start * (block_base - 1.0);
        let s = len * spec.term_log(start)?.exp();
        block_sums.push(s);
    }
    let tail = block_count.min(10);
    let last = &block_sums[block_count - tail..];
    let ratios_ok = last
        .windows(2)
        .all(|w| w[1] <= THETA_C * w[0] || (w[0] == 0.0 && w[1] == 0.0));
    let floor_ok = last.iter().all(|s| *s >= THETA_D);
    let numeric = match (ratios_ok, floor_ok) {
        (true, false) => Convergence::Converges,
        (false, true) => Convergence::Diverges,
        _ => Convergence::Inconclusive,
    };
    let analytic = spec.analytic_classification();
    Ok(SeriesReport {
        verdict: analytic.unwrap_or(numeric),
        numeric_verdict: numeric,
        analytic_verdict: analytic,
        block_sums,
        block_base,
        theta_c: THETA_C,
        theta_d: THETA_D,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub g_side: SeriesReport,
    pub f_side: SeriesReport,
    /// False only when one side definitely converges and the other
    /// definitely diverges.
    pub consistent: bool,
}

/// Classifies the Dirichlet-sum side for g and the Khintchine-Groshev side
/// for the dual f and asserts the verdicts do not contradict each other.
pub fn check_series_equivalence(
    ws: &WeightSystem,
    f: &ApproxFunction,
    g: &ApproxFunction,
    block_base: f64,
    block_count: usize,
) -> Result<EquivalenceReport> {
    let g_side = classify_series(
        &SeriesSpec::dirichlet_sum(ws.clone(), g.clone()),
        block_base,
        block_count,
    )?;
    let f_side = classify_series(
        &SeriesSpec::khintchine_groshev_sum(ws.clone(), f.clone()),
        block_base,
        block_count,
    )?;
    let consistent = !matches!(
        (g_side.verdict, f_side.verdict),
        (Convergence::Converges, Convergence::Diverges)
            | (Convergence::Diverges, Convergence::Converges)
    );
    Ok(EquivalenceReport {
        g_side,
        f_side,
        consistent,
    })
}

// ---------------------------------------------------------------------------
// Monte Carlo measure estimation
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub samples: u64,
    pub t_min: f64,
    pub schedule: Vec<f64>,
    /// Fraction of non-errored samples whose window verdict is Dirichlet at
    /// each schedule point; nonincreasing in the window length.
    pub fractions: Vec<f64>,
    pub dirichlet_counts: Vec<u64>,
    pub budget_errors: u64,
    pub seed: u64,
}

fn validate_schedule(t_min: f64, schedule: &[f64]) -> Result<()> {
    if schedule.is_empty() {
        return Err(Error::Contract("schedule must be nonempty".into()));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) || schedule[0] <= t_min {
        return Err(Error::Contract(
            "schedule must increase beyond t_min".into(),
        ));
    }
    Ok(())
}

fn estimate_from_uncovered(
    uncovered: &[Option<f64>],
    t_min: f64,
    schedule: &[f64],
    seed: u64,
) -> MeasureEstimate {
    let budget_errors = uncovered.iter().filter(|u| u.is_none()).count() as u64;
    let valid = uncovered.len() as u64 - budget_errors;
    let mut counts = vec![0u64; schedule.len()];
    for u in uncovered.iter().flatten() {
        for (k, t) in schedule.iter().enumerate() {
            if *t <= *u {
                counts[k] += 1;
            }
        }
    }
    let fractions = counts
        .iter()
        .map(|c| {
            if valid == 0 {
                0.0
            } else {
                *c as f64 / valid as f64
            }
        })
        .collect();
    MeasureEstimate {
        samples: uncovered.len() as u64,
        t_min,
        schedule: schedule.to_vec(),
        fractions,
        dirichlet_counts: counts,
        budget_errors,
        seed,
    }
}

/// Samples pairs (Theta, eta) with entries uniform in [0,1) — the verdicts
/// depend on the pair only modulo integers — and reports, per schedule
/// window, the fraction of pairs covered through that window. Sample i uses
/// the derived seed seed^i; aggregation is order-independent.
#[allow(clippy::too_many_arguments)]
pub fn zero_one_experiment(
    ws: &WeightSystem,
    g: &ApproxFunction,
    samples: u64,
    t_min: f64,
    schedule: &[f64],
    seed: u64,
    n_max: u64,
) -> Result<MeasureEstimate> {
    validate_schedule(t_min, schedule)?;
    let t_max = *schedule.last().unwrap();
    let (n, m) = (ws.n(), ws.m());
    let params = OracleParams {
        n_max,
        keep_witnesses: false,
        ..Default::default()
    };
    let uncovered: Vec<Option<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = SplitMix64::derive(seed, i);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..m).map(|_| rng.next_f64()).collect())
                .collect();
            let eta: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
            let pair = AffinePair::new(Mat::from_rows(&rows).unwrap(), eta).unwrap();
            match dirichlet_on_window(&pair, ws, g, t_min, t_max, &params) {
                Ok(report) => Ok(Some(report.earliest_uncovered())),
                Err(Error::Budget(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(estimate_from_uncovered(&uncovered, t_min, schedule, seed))
}

/// Fixed-matrix slice experiment: eta uniform in [0,1)^n, Theta held fixed.
/// The component scale multiplies both threshold sides, as in the C-scaled
/// slice statement.
#[allow(clippy::too_many_arguments)]
pub fn fixed_matrix_experiment(
    theta: &Mat,
    ws: &WeightSystem,
    g: &ApproxFunction,
    eta_samples: u64,
    t_min: f64,
    schedule: &[f64],
    seed: u64,
    n_max: u64,
    component_scale: f64,
) -> Result<MeasureEstimate> {
    validate_schedule(t_min, schedule)?;
    if theta.rows() != ws.n() || theta.cols() != ws.m() {
        return Err(Error::Contract(
            "theta dimensions do not match the weight system".into(),
        ));
    }
    let t_max = *schedule.last().unwrap();
    let n = ws.n();
    let params = OracleParams {
        n_max,
        component_scale,
        keep_witnesses: false,
    };
    let uncovered: Vec<Option<f64>> = (0..eta_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = SplitMix64::derive(seed, i);
            let eta: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
            let pair = AffinePair::new(theta.clone(), eta).unwrap();
            match dirichlet_on_window(&pair, ws, g, t_min, t_max, &params) {
                Ok(report) => Ok(Some(report.earliest_uncovered())),
                Err(Error::Budget(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(estimate_from_uncovered(&uncovered, t_min, schedule, seed))
}

// ---------------------------------------------------------------------------
// Stock families
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StockFamily {
    pub name: String,
    pub g: ApproxConfig,
    pub expected: Convergence,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StockFamilyTable {
    pub version: u32,
    pub weights: WeightSystemConfig,
    pub families: Vec<StockFamily>,
}

/// The versioned table of stock g families with their analytic
/// classifications, shipped with the crate.
pub fn stock_families() -> StockFamilyTable {
    serde_json::from_str(include_str!("../resources/stock_families.json"))
        .expect("embedded stock family table must parse")
}
