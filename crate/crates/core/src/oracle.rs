//! Windowed solvability oracle for weighted inhomogeneous Dirichlet systems
//! and the witness enumerator for asymptotic approximability.
//!
//! Each candidate q covers an interval of T values: it becomes admissible at
//! |q|_beta and stays useful while alpha_i(g(T)) dominates the distances of
//! the affine forms. Solvability over a window is therefore characterized
//! exactly by the union of witness intervals; no sampling in T is involved.

use crate::error::{Error, Result};
use crate::geometry::AffinePair;
use crate::weights::{int_dist, ApproxFunction, WeightSystem};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Intervals closer than this (relative) are merged; gaps thinner than this
/// are discarded as floating-point hairlines.
pub const MERGE_EPS: f64 = 1e-9;

fn merge_slack(x: f64) -> f64 {
    MERGE_EPS * (1.0 + x.abs())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    DirichletOnWindow,
    FailsOnWindow,
}

/// A solvability interval [interval.0, interval.1] contributed by q.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WitnessInterval {
    pub q: Vec<i64>,
    pub interval: (f64, f64),
    pub exact_hit: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DirichletReport {
    pub window: (f64, f64),
    pub verdict: Verdict,
    pub gaps: Vec<(f64, f64)>,
    pub covered: Vec<(f64, f64)>,
    pub witnesses: Vec<WitnessInterval>,
    pub exact_hits: Vec<Vec<i64>>,
    pub candidates: u64,
}

impl DirichletReport {
    /// First uncovered point of the window, +∞ when fully covered. Because
    /// right endpoints do not depend on the window, the verdict for any
    /// smaller window [t_min, t] is exactly `t <= earliest_uncovered()`.
    pub fn earliest_uncovered(&self) -> f64 {
        self.gaps.first().map_or(f64::INFINITY, |g| g.0)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct OracleParams {
    pub n_max: u64,
    /// Multiplies every weight-function threshold on both sides of the
    /// system (the C-scaled variant of the solvability question).
    pub component_scale: f64,
    pub keep_witnesses: bool,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams {
            n_max: crate::geometry::N_MAX_DEFAULT,
            component_scale: 1.0,
            keep_witnesses: true,
        }
    }
}

/// sup{T >= 1 : g(T) >= v}; 0 when even g(1) < v, +∞ when g never drops
/// below v on its tabulated range (clipped later to the window).
fn sup_inverse(g: &ApproxFunction, v: f64) -> Result<f64> {
    let g1 = g.eval(1.0)?;
    if g1 < v {
        return Ok(0.0);
    }
    let t = g.inverse_decreasing(v)?;
    Ok(t.max(1.0))
}

/// The solvability interval of a single candidate q: left endpoint |q|_beta,
/// right endpoint sup{T : alpha_i(g(T)) >= ||Theta_i q - eta_i|| for all i}.
/// Returns None when the interval is empty; the right endpoint is +∞ when
/// every affine form lands exactly on an integer.
pub fn witness_interval(
    pair: &AffinePair,
    q: &[i64],
    ws: &WeightSystem,
    g: &ApproxFunction,
) -> Result<Option<WitnessInterval>> {
    witness_interval_scaled(pair, q, ws, g, 1.0)
}

pub fn witness_interval_scaled(
    pair: &AffinePair,
    q: &[i64],
    ws: &WeightSystem,
    g: &ApproxFunction,
    scale: f64,
) -> Result<Option<WitnessInterval>> {
    if q.iter().all(|x| *x == 0) {
        return Err(Error::Contract(
            "witness candidate q must be nonzero".into(),
        ));
    }
    if q.len() != ws.m() || pair.m() != ws.m() || pair.n() != ws.n() {
        return Err(Error::Contract(
            "dimension mismatch in witness interval".into(),
        ));
    }
    // left endpoint: |q|_beta with thresholds scaled
    let mut left = 0.0f64;
    for (qj, bj) in q.iter().zip(ws.beta()) {
        let a = (qj.abs() as f64) / scale;
        if a == 0.0 {
            continue;
        }
        left = left.max(bj.invert(a)?);
    }
    // distance of each affine form to the nearest integer
    let mut rho = 0.0f64;
    let mut exact = true;
    for i in 0..ws.n() {
        let r = int_dist(pair.form_value(i, q));
        if r == 0.0 {
            continue;
        }
        exact = false;
        rho = rho.max(ws.alpha()[i].invert(r / scale)?);
    }
    let right = if exact {
        f64::INFINITY
    } else {
        sup_inverse(g, rho)?
    };
    if right < left {
        return Ok(None);
    }
    Ok(Some(WitnessInterval {
        q: q.to_vec(),
        interval: (left, right),
        exact_hit: exact,
    }))
}

fn rec_candidates(
    bounds: &[i64],
    depth: usize,
    q: &mut Vec<i64>,
    f: &mut impl FnMut(&[i64]) -> Result<()>,
) -> Result<()> {
    if depth == q.len() {
        if q.iter().any(|x| *x != 0) {
            f(q)?;
        }
        return Ok(());
    }
    let b = bounds[depth - (q.len() - bounds.len())];
    for v in -b..=b {
        q[depth] = v;
        rec_candidates(bounds, depth + 1, q, f)?;
    }
    q[depth] = 0;
    Ok(())
}

fn for_each_candidate(bounds: &[i64], mut f: impl FnMut(&[i64]) -> Result<()>) -> Result<()> {
    let mut q = vec![0i64; bounds.len()];
    rec_candidates(bounds, 0, &mut q, &mut f)
}

/// All candidates with the first coordinate pinned to q0 and the remaining
/// coordinates ranging over `rest`.
fn for_each_in_slab(q0: i64, rest: &[i64], mut f: impl FnMut(&[i64]) -> Result<()>) -> Result<()> {
    let mut q = vec![0i64; rest.len() + 1];
    q[0] = q0;
    rec_candidates(rest, 1, &mut q, &mut f)
}

fn candidate_bounds(ws: &WeightSystem, t_max: f64, scale: f64, n_max: u64) -> Result<Vec<i64>> {
    let mut bounds = Vec::with_capacity(ws.m());
    let mut count: u128 = 1;
    for bj in ws.beta() {
        let b = (scale * bj.eval(t_max)? + 1e-9).floor() as i64;
        count = count.saturating_mul((2 * b + 1).max(1) as u128);
        bounds.push(b);
    }
    if count > n_max as u128 {
        return Err(Error::Budget(format!(
            "candidate box holds {count} vectors at t_max, cap is {n_max}"
        )));
    }
    Ok(bounds)
}

/// Exact interval-cover verdict on [t_min, t_max]: enumerates every nonzero
/// q with |q|_beta <= t_max, merges witness intervals and reports the gaps.
pub fn dirichlet_on_window(
    pair: &AffinePair,
    ws: &WeightSystem,
    g: &ApproxFunction,
    t_min: f64,
    t_max: f64,
    params: &OracleParams,
) -> Result<DirichletReport> {
    if !(t_min >= 1.0) || !(t_max > t_min) {
        return Err(Error::Contract(
            "window must satisfy 1 <= t_min < t_max".into(),
        ));
    }
    // continuity is what the interval construction needs; plateaus are
    // handled by the generalized sup-inverse. Step tabulations must be
    // regularized first.
    let continuous_table = matches!(g.table_nodes(), Some((_, crate::weights::Interp::Linear)));
    if !g.is_strictly_decreasing() && !continuous_table {
        return Err(Error::Contract(
            "oracle needs a continuous nonincreasing g; regularize first".into(),
        ));
    }
    refuse_coarse_tabulation(ws, g, t_max)?;
    // the system depends on eta only modulo one
    let pair = reduced_pair(pair);
    let scale = params.component_scale;
    let bounds = candidate_bounds(ws, t_max, scale, params.n_max)?;

    // data-parallel over the slabs of the first q coordinate, merged in
    // slab order so reports stay deterministic
    #[derive(Default)]
    struct Partial {
        raw: Vec<(f64, f64)>,
        witnesses: Vec<WitnessInterval>,
        exact_hits: Vec<Vec<i64>>,
        candidates: u64,
    }
    let rest = &bounds[1..];
    let partials: Vec<Result<Partial>> = (-bounds[0]..=bounds[0])
        .into_par_iter()
        .map(|q0| {
            let mut part = Partial::default();
            for_each_in_slab(q0, rest, |q| {
                part.candidates += 1;
                if let Some(w) = witness_interval_scaled(&pair, q, ws, g, scale)? {
                    let l = w.interval.0.max(t_min);
                    let r = w.interval.1.min(t_max);
                    if l <= r {
                        part.raw.push((l, r));
                        if w.exact_hit {
                            part.exact_hits.push(w.q.clone());
                        }
                        if params.keep_witnesses {
                            // reported intervals keep the raw left endpoint
                            // |q|_beta; infinite right endpoints are clipped
                            // to the window
                            part.witnesses.push(WitnessInterval {
                                q: w.q,
                                interval: (w.interval.0, r),
                                exact_hit: w.exact_hit,
                            });
                        }
                    }
                }
                Ok(())
            })?;
            Ok(part)
        })
        .collect();

    let mut raw: Vec<(f64, f64)> = Vec::new();
    let mut witnesses = Vec::new();
    let mut exact_hits = Vec::new();
    let mut candidates = 0u64;
    for part in partials {
        let part = part?;
        raw.extend(part.raw);
        witnesses.extend(part.witnesses);
        exact_hits.extend(part.exact_hits);
        candidates += part.candidates;
    }

    let covered = merge_intervals(&mut raw);
    let gaps = gaps_in_window(&covered, t_min, t_max);
    let verdict = if gaps.is_empty() {
        Verdict::DirichletOnWindow
    } else {
        Verdict::FailsOnWindow
    };
    Ok(DirichletReport {
        window: (t_min, t_max),
        verdict,
        gaps,
        covered,
        witnesses,
        exact_hits,
        candidates,
    })
}

/// Tabulated g must carry a node at every breakpoint of W; coarser
/// tabulations are refused rather than silently interpolated.
fn refuse_coarse_tabulation(ws: &WeightSystem, g: &ApproxFunction, t_max: f64) -> Result<()> {
    if let Some((nodes, _)) = g.table_nodes() {
        let w = crate::weights::breakpoint_set(ws.beta(), t_max)?;
        for point in &w {
            let ok = nodes
                .binary_search_by(|n| n.0.partial_cmp(point).unwrap())
                .map(|_| true)
                .unwrap_or_else(|idx| {
                    let close = |i: usize| {
                        i < nodes.len() && (nodes[i].0 - point).abs() <= 1e-9 * point.max(1.0)
                    };
                    close(idx) || (idx > 0 && close(idx - 1))
                });
            if !ok {
                return Err(Error::Contract(format!(
                    "tabulated g lacks a node at breakpoint {point}; supply all W nodes"
                )));
            }
        }
    }
    Ok(())
}

fn reduced_pair(pair: &AffinePair) -> AffinePair {
    let eta: Vec<f64> = pair.eta().iter().map(|e| e - e.floor()).collect();
    AffinePair::new(pair.theta().clone(), eta).unwrap()
}

/// Sorts by left endpoint and merges overlapping or nearly-touching
/// intervals (hairline float gaps are closed).
fn merge_intervals(raw: &mut [(f64, f64)]) -> Vec<(f64, f64)> {
    raw.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out: Vec<(f64, f64)> = Vec::new();
    for &(l, r) in raw.iter() {
        match out.last_mut() {
            Some(last) if l <= last.1 + merge_slack(last.1) => {
                last.1 = last.1.max(r);
            }
            _ => out.push((l, r)),
        }
    }
    out
}

fn gaps_in_window(covered: &[(f64, f64)], t_min: f64, t_max: f64) -> Vec<(f64, f64)> {
    let mut gaps = Vec::new();
    let mut reach = t_min;
    for &(l, r) in covered {
        if r < t_min {
            continue;
        }
        if l > t_max {
            break;
        }
        if l > reach + merge_slack(reach) {
            gaps.push((reach, l.min(t_max)));
        }
        reach = reach.max(r);
        if reach >= t_max {
            break;
        }
    }
    if reach < t_max - merge_slack(t_max) {
        gaps.push((reach, t_max));
    }
    gaps
}

/// Direct brute-force solvability at a single T: is there a nonzero q with
/// |q|_beta <= T and ||Theta_i q - eta_i|| <= alpha_i(g(T)) for all i?
/// Independent of the interval construction (no inversion of g).
pub fn solvable_at(
    pair: &AffinePair,
    ws: &WeightSystem,
    g: &ApproxFunction,
    t: f64,
    scale: f64,
    n_max: u64,
) -> Result<bool> {
    let pair = reduced_pair(pair);
    let bounds = candidate_bounds(ws, t, scale, n_max)?;
    let g_t = g.eval(t)?;
    let mut thresholds = Vec::with_capacity(ws.n());
    for a in ws.alpha() {
        thresholds.push(scale * a.eval(g_t)?);
    }
    let mut found = false;
    for_each_candidate(&bounds, |q| {
        if found {
            return Ok(());
        }
        // |q|_beta <= t is guaranteed by the bounds only coordinatewise;
        // check the quasinorm itself
        for (qj, bj) in q.iter().zip(ws.beta()) {
            let a = qj.abs() as f64 / scale;
            if a > 0.0 && bj.invert(a)? > t * (1.0 + 1e-12) {
                return Ok(());
            }
        }
        for (i, threshold) in thresholds.iter().enumerate() {
            if int_dist(pair.form_value(i, q)) > threshold + 1e-12 {
                return Ok(());
            }
        }
        found = true;
        Ok(())
    })?;
    Ok(found)
}

// ---------------------------------------------------------------------------
// Asymptotic approximability witnesses
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ApproxWitness {
    pub y: Vec<i64>,
    /// |y|_alpha
    pub scale: f64,
    /// ||Theta^T y||_beta
    pub dist: f64,
    /// f(|y|_alpha) - dist >= 0
    pub quality: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ApproxWitnessList {
    pub witnesses: Vec<ApproxWitness>,
    pub y_max: f64,
    pub candidates: u64,
}

impl ApproxWitnessList {
    /// Greedy separated subsequence: keeps a witness only when its scale
    /// exceeds the previous kept scale by the growth factor.
    pub fn separated(&self, growth: f64) -> Vec<&ApproxWitness> {
        let mut out: Vec<&ApproxWitness> = Vec::new();
        for w in &self.witnesses {
            match out.last() {
                Some(last) if w.scale < growth * last.scale => {}
                _ => out.push(w),
            }
        }
        out
    }

    pub fn max_scale(&self) -> Option<f64> {
        self.witnesses.last().map(|w| w.scale)
    }
}

/// All solutions of ||Theta^T y||_beta <= f(|y|_alpha) with |y_i| <=
/// alpha_i(y_max), sorted by |y|_alpha. The pair's theta is the n×m matrix;
/// witnesses live in Z^n.
pub fn approx_witnesses(
    pair: &AffinePair,
    ws: &WeightSystem,
    f: &ApproxFunction,
    y_max: f64,
    n_max: u64,
) -> Result<ApproxWitnessList> {
    let theta_t = pair.theta().transpose();
    let mut bounds = Vec::with_capacity(ws.n());
    let mut count: u128 = 1;
    for ai in ws.alpha() {
        let b = (ai.eval(y_max)? + 1e-9).floor() as i64;
        count = count.saturating_mul((2 * b + 1).max(1) as u128);
        bounds.push(b);
    }
    if count > n_max as u128 {
        return Err(Error::Budget(format!(
            "witness box holds {count} vectors, cap is {n_max}"
        )));
    }
    let mut witnesses = Vec::new();
    let mut candidates = 0u64;
    for_each_candidate(&bounds, |y| {
        candidates += 1;
        let mut scale = 0.0f64;
        for (yi, ai) in y.iter().zip(ws.alpha()) {
            let a = yi.abs() as f64;
            if a > 0.0 {
                scale = scale.max(ai.invert(a)?);
            }
        }
        if scale > y_max * (1.0 + 1e-12) {
            return Ok(());
        }
        let mut dist = 0.0f64;
        for j in 0..ws.m() {
            let row = theta_t.row(j);
            let v: f64 = row.iter().zip(y).map(|(a, b)| a * (*b as f64)).sum();
            let r = int_dist(v);
            if r > 0.0 {
                dist = dist.max(ws.beta()[j].invert(r)?);
            }
        }
        let f_val = f.eval(scale.max(1.0))?;
        if dist <= f_val + 1e-12 {
            witnesses.push(ApproxWitness {
                y: y.to_vec(),
                scale,
                dist,
                quality: f_val - dist,
            });
        }
        Ok(())
    })?;
    witnesses.sort_by(|a, b| {
        a.scale
            .partial_cmp(&b.scale)
            .unwrap()
            .then_with(|| a.y.cmp(&b.y))
    });
    Ok(ApproxWitnessList {
        witnesses,
        y_max,
        candidates,
    })
}

// ---------------------------------------------------------------------------
// Constant scan
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanRow {
    pub b: f64,
    pub dirichlet: Verdict,
    pub gap_count: usize,
    pub witness_count: usize,
    pub max_witness_scale: Option<f64>,
    pub has_deep_witness: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstantScanReport {
    pub rows: Vec<ScanRow>,
    /// Smallest b whose window verdict flips to Dirichlet.
    pub dirichlet_flip_b: Option<f64>,
    /// Smallest b with a witness past sqrt(y_max): the desk-scale signature
    /// of infinitely many solutions.
    pub approx_flip_b: Option<f64>,
    pub window: (f64, f64),
    pub y_max: f64,
}

/// Scans b over the grid: for each b the window verdict under b·g_{α,β} and
/// the witness tail of the (b·g_{α,β}, α, β)-approximability system.
pub fn dirichlet_constant_scan(
    pair: &AffinePair,
    ws: &WeightSystem,
    t_min: f64,
    t_max: f64,
    b_grid: &[f64],
    y_max: f64,
    n_max: u64,
) -> Result<ConstantScanReport> {
    if b_grid.is_empty() || b_grid.iter().any(|b| *b <= 0.0) {
        return Err(Error::Contract("b grid must be positive".into()));
    }
    let mut sorted = b_grid.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let g0 = ws.dirichlet_exponent();
    // the approximability side of the scan: witnesses q of Theta against
    // b·g_{alpha,beta}, i.e. the swapped-system enumeration
    let swapped = ws.swap();
    let tpair = pair.transposed();
    let mut rows = Vec::with_capacity(sorted.len());
    let mut dirichlet_flip = None;
    let mut approx_flip = None;
    let deep = y_max.sqrt();
    for &b in &sorted {
        let g_b = g0.scaled(b)?;
        let params = OracleParams {
            n_max,
            keep_witnesses: false,
            ..Default::default()
        };
        let report = dirichlet_on_window(pair, ws, &g_b, t_min, t_max, &params)?;
        let wl = approx_witnesses(&tpair, &swapped, &g_b, y_max, n_max)?;
        let has_deep = wl.witnesses.iter().any(|w| w.scale >= deep);
        if report.verdict == Verdict::DirichletOnWindow && dirichlet_flip.is_none() {
            dirichlet_flip = Some(b);
        }
        if has_deep && approx_flip.is_none() {
            approx_flip = Some(b);
        }
        rows.push(ScanRow {
            b,
            dirichlet: report.verdict,
            gap_count: report.gaps.len(),
            witness_count: wl.witnesses.len(),
            max_witness_scale: wl.max_scale(),
            has_deep_witness: has_deep,
        });
    }
    Ok(ConstantScanReport {
        rows,
        dirichlet_flip_b: dirichlet_flip,
        approx_flip_b: approx_flip,
        window: (t_min, t_max),
        y_max,
    })
}
