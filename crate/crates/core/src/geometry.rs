//! Lattices and grids attached to a system of affine forms, diagonal flow
//! scalings, parallelepipeds with their pseudo-compounds, exact lattice-point
//! enumeration, successive minima, and the two-sided transference checks.

use crate::error::{Error, Result};
use crate::linalg::{rank, Mat};
use crate::rng::SplitMix64;
use crate::weights::WeightSystem;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Points are considered inside a box up to this absolute slack per
/// coordinate; the defining inequalities are non-strict throughout.
pub const INSIDE_TOL: f64 = 1e-12;

/// Default cap on enumeration candidates.
pub const N_MAX_DEFAULT: u64 = 10_000_000;

// ---------------------------------------------------------------------------
// Affine pairs and grids
// ---------------------------------------------------------------------------

/// The object being approximated: an n×m matrix together with a shift.
#[derive(Clone, Debug)]
pub struct AffinePair {
    theta: Mat,
    eta: Vec<f64>,
}

impl AffinePair {
    pub fn new(theta: Mat, eta: Vec<f64>) -> Result<Self> {
        if eta.len() != theta.rows() {
            return Err(Error::Contract(format!(
                "shift length {} does not match row count {}",
                eta.len(),
                theta.rows()
            )));
        }
        Ok(AffinePair { theta, eta })
    }

    /// n = m = 1 convenience constructor.
    pub fn scalar(theta: f64, eta: f64) -> Self {
        AffinePair {
            theta: Mat::from_rows(&[vec![theta]]).unwrap(),
            eta: vec![eta],
        }
    }

    pub fn homogeneous(theta: Mat) -> Self {
        let eta = vec![0.0; theta.rows()];
        AffinePair { theta, eta }
    }

    pub fn theta(&self) -> &Mat {
        &self.theta
    }
    pub fn eta(&self) -> &[f64] {
        &self.eta
    }
    pub fn n(&self) -> usize {
        self.theta.rows()
    }
    pub fn m(&self) -> usize {
        self.theta.cols()
    }
    pub fn d(&self) -> usize {
        self.n() + self.m()
    }

    /// The homogeneous transposed pair (Θ^T, 0).
    pub fn transposed(&self) -> AffinePair {
        AffinePair::homogeneous(self.theta.transpose())
    }

    /// Row i of Θ applied to q, minus the shift.
    pub fn form_value(&self, i: usize, q: &[i64]) -> f64 {
        let row = self.theta.row(i);
        let mut acc = -self.eta[i];
        for (a, b) in row.iter().zip(q) {
            acc += a * (*b as f64);
        }
        acc
    }
}

/// A grid basis·Z^d + shift; true lattices have zero shift.
#[derive(Clone, Debug)]
pub struct GridBasis {
    pub basis: Mat,
    pub shift: Vec<f64>,
}

impl GridBasis {
    pub fn lattice(basis: Mat) -> Result<Self> {
        if basis.rows() != basis.cols() {
            return Err(Error::Contract("basis must be square".into()));
        }
        let shift = vec![0.0; basis.rows()];
        Ok(GridBasis { basis, shift })
    }

    pub fn grid(basis: Mat, shift: Vec<f64>) -> Result<Self> {
        if basis.rows() != basis.cols() || shift.len() != basis.rows() {
            return Err(Error::Contract("basis/shift dimensions mismatch".into()));
        }
        Ok(GridBasis { basis, shift })
    }

    pub fn d(&self) -> usize {
        self.basis.rows()
    }

    pub fn has_zero_shift(&self) -> bool {
        self.shift.iter().all(|s| *s == 0.0)
    }

    pub fn point(&self, z: &[i64]) -> Vec<f64> {
        let mut p = self.basis.mul_ivec(z);
        for (pi, si) in p.iter_mut().zip(&self.shift) {
            *pi += si;
        }
        p
    }

    pub fn det(&self) -> Result<f64> {
        self.basis.det()
    }

    /// Inverse-transpose basis; defined for lattices only.
    pub fn dual(&self) -> Result<GridBasis> {
        if !self.has_zero_shift() {
            return Err(Error::Contract(
                "dual of a shifted grid is not defined".into(),
            ));
        }
        let (_, inv) = self.basis.det_inverse().map_err(|e| match e {
            Error::Conditioning(msg) => Error::Conditioning(msg),
            other => other,
        })?;
        GridBasis::lattice(inv.transpose())
    }

    /// Left-multiply by a diagonal scaling.
    pub fn scaled(&self, scaling: &DiagonalScaling) -> GridBasis {
        GridBasis {
            basis: self.basis.scale_rows(&scaling.entries),
            shift: self
                .shift
                .iter()
                .zip(&scaling.entries)
                .map(|(s, e)| s * e)
                .collect(),
        }
    }
}

/// The unipotent grid of the pair: basis [[I, Θ], [0, I]], shift (-η, 0).
pub fn grid_from_pair(pair: &AffinePair) -> GridBasis {
    let (n, m, d) = (pair.n(), pair.m(), pair.d());
    let mut b = Mat::identity(d);
    for i in 0..n {
        for j in 0..m {
            b.set(i, n + j, pair.theta().get(i, j));
        }
    }
    let mut shift = vec![0.0; d];
    for (slot, e) in shift.iter_mut().zip(pair.eta()) {
        *slot = -e;
    }
    GridBasis { basis: b, shift }
}

/// The homogeneous lattice of the pair (shift dropped).
pub fn lattice_from_pair(pair: &AffinePair) -> GridBasis {
    let mut g = grid_from_pair(pair);
    g.shift = vec![0.0; g.d()];
    g
}

/// The transposed operator lattice: basis [[I, 0], [-Θ^T, I]], the dual of
/// the homogeneous lattice.
pub fn dual_grid_from_pair(pair: &AffinePair) -> GridBasis {
    let (n, m, d) = (pair.n(), pair.m(), pair.d());
    let mut b = Mat::identity(d);
    for j in 0..m {
        for i in 0..n {
            b.set(n + j, i, -pair.theta().get(i, j));
        }
    }
    let _ = m;
    GridBasis {
        basis: b,
        shift: vec![0.0; d],
    }
}

// ---------------------------------------------------------------------------
// Diagonal scalings
// ---------------------------------------------------------------------------

/// diag(1/alpha_1(U), ..., 1/alpha_n(U), 1/beta_1(T), ..., 1/beta_m(T)).
#[derive(Clone, Debug)]
pub struct DiagonalScaling {
    pub entries: Vec<f64>,
    pub u: f64,
    pub t: f64,
}

impl DiagonalScaling {
    pub fn from_system(ws: &WeightSystem, u: f64, t: f64) -> Result<Self> {
        let mut entries = Vec::with_capacity(ws.d());
        for a in ws.alpha() {
            entries.push((-a.log_eval(u)?).exp());
        }
        for b in ws.beta() {
            entries.push((-b.log_eval(t)?).exp());
        }
        Ok(DiagonalScaling { entries, u, t })
    }

    /// The weighted flow diag(T^{rho_i}, T^{-sigma_j}), i.e. the system
    /// scaling at (1/T, T) for power weights.
    pub fn weighted_flow(rho: &[f64], sigma: &[f64], t: f64) -> Self {
        let mut entries = Vec::with_capacity(rho.len() + sigma.len());
        for r in rho {
            entries.push(t.powf(*r));
        }
        for s in sigma {
            entries.push(t.powf(-*s));
        }
        DiagonalScaling {
            entries,
            u: 1.0 / t,
            t,
        }
    }

    /// Inverse scaling: entrywise reciprocal, generated by (1/U, 1/T).
    pub fn inverse(&self) -> DiagonalScaling {
        DiagonalScaling {
            entries: self.entries.iter().map(|e| 1.0 / e).collect(),
            u: 1.0 / self.u,
            t: 1.0 / self.t,
        }
    }
}

// ---------------------------------------------------------------------------
// Parallelepipeds
// ---------------------------------------------------------------------------

/// Axis-aligned origin-symmetric box |x_i| <= half_widths[i].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parallelepiped {
    pub half_widths: Vec<f64>,
}

impl Parallelepiped {
    pub fn new(half_widths: Vec<f64>) -> Result<Self> {
        if half_widths.is_empty() || half_widths.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::Contract("half-widths must be positive".into()));
        }
        Ok(Parallelepiped { half_widths })
    }

    pub fn unit_cube(d: usize) -> Self {
        Parallelepiped {
            half_widths: vec![1.0; d],
        }
    }

    /// The box |v_i| <= b^{rho_i/2}, |v_{n+j}| <= b^{sigma_j/2}.
    pub fn weighted_box(rho: &[f64], sigma: &[f64], b: f64) -> Result<Self> {
        if !(b > 0.0) {
            return Err(Error::Contract(
                "weighted box parameter must be positive".into(),
            ));
        }
        let mut hw = Vec::with_capacity(rho.len() + sigma.len());
        for r in rho {
            hw.push(b.powf(r / 2.0));
        }
        for s in sigma {
            hw.push(b.powf(s / 2.0));
        }
        Parallelepiped::new(hw)
    }

    pub fn d(&self) -> usize {
        self.half_widths.len()
    }

    /// L = product of half-widths.
    pub fn l_product(&self) -> f64 {
        self.half_widths.iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.half_widths.iter().map(|l| 2.0 * l).product()
    }

    /// Pseudo-compound: half-widths L/lambda_i.
    pub fn pseudo_compound(&self) -> Parallelepiped {
        let l = self.l_product();
        Parallelepiped {
            half_widths: self.half_widths.iter().map(|li| l / li).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Parallelepiped {
        Parallelepiped {
            half_widths: self.half_widths.iter().map(|li| li * s).collect(),
        }
    }

    /// Scale of v relative to the box: max |v_i|/lambda_i.
    pub fn gauge(&self, v: &[f64]) -> f64 {
        v.iter()
            .zip(&self.half_widths)
            .fold(0.0f64, |acc, (vi, li)| acc.max(vi.abs() / li))
    }
}

// ---------------------------------------------------------------------------
// Exact enumeration
// ---------------------------------------------------------------------------

/// A grid point together with its integer coefficient vector.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub coeffs: Vec<i64>,
    pub point: Vec<f64>,
}

impl GridPoint {
    pub fn is_origin_coeffs(&self) -> bool {
        self.coeffs.iter().all(|z| *z == 0)
    }
}

fn range_for(partial: f64, diag: f64, lo: f64, hi: f64) -> (i64, i64) {
    let (a, b) = ((lo - partial) / diag, (hi - partial) / diag);
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    (a.ceil() as i64, b.floor() as i64)
}

/// Exhaustive enumeration of grid points inside P + gamma. For triangular
/// bases the coordinate constraints are propagated level by level, which
/// keeps the candidate set tight even for very skew flow-scaled bases; a
/// bounding-box sweep through the inverse basis covers the general case.
/// The visitor returns true to stop early.
fn enumerate_box(
    g: &GridBasis,
    p: &Parallelepiped,
    gamma: &[f64],
    n_max: u64,
    visit: &mut impl FnMut(GridPoint) -> bool,
) -> Result<()> {
    let d = g.d();
    if p.d() != d || gamma.len() != d {
        return Err(Error::Contract(
            "dimension mismatch in box enumeration".into(),
        ));
    }
    let lo: Vec<f64> = (0..d)
        .map(|i| gamma[i] - p.half_widths[i] - INSIDE_TOL)
        .collect();
    let hi: Vec<f64> = (0..d)
        .map(|i| gamma[i] + p.half_widths[i] + INSIDE_TOL)
        .collect();

    let order: Option<Vec<usize>> = if g.basis.is_upper_triangular() {
        Some((0..d).rev().collect())
    } else if g.basis.is_lower_triangular() {
        Some((0..d).collect())
    } else {
        None
    };

    let mut budget = n_max;
    match order {
        Some(order) => {
            let mut z = vec![0i64; d];
            nested_descend(g, &lo, &hi, &order, 0, &mut z, &mut budget, visit)?;
        }
        None => {
            let (_, inv) = g.basis.det_inverse()?;
            let centered: Vec<f64> = (0..d).map(|i| gamma[i] - g.shift[i]).collect();
            let center = inv.mul_vec(&centered);
            let mut ranges = Vec::with_capacity(d);
            let mut count: u128 = 1;
            for (k, c) in center.iter().enumerate() {
                let r: f64 = (0..d)
                    .map(|j| inv.get(k, j).abs() * (p.half_widths[j] + INSIDE_TOL))
                    .sum();
                let zlo = (c - r - 1e-9).ceil() as i64;
                let zhi = (c + r + 1e-9).floor() as i64;
                count = count.saturating_mul((zhi - zlo + 1).max(0) as u128);
                ranges.push((zlo, zhi));
            }
            if count > n_max as u128 {
                return Err(Error::Budget(format!(
                    "bounding box holds {count} candidates, cap is {n_max}"
                )));
            }
            let mut z = vec![0i64; d];
            product_sweep(g, &lo, &hi, &ranges, 0, &mut z, visit);
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn nested_descend(
    g: &GridBasis,
    lo: &[f64],
    hi: &[f64],
    order: &[usize],
    depth: usize,
    z: &mut Vec<i64>,
    budget: &mut u64,
    visit: &mut impl FnMut(GridPoint) -> bool,
) -> Result<bool> {
    let d = g.d();
    if depth == d {
        let gp = GridPoint {
            coeffs: z.clone(),
            point: g.point(z),
        };
        return Ok(visit(gp));
    }
    let i = order[depth];
    // rows touching only already-fixed variables plus z_i
    let mut partial = g.shift[i];
    for (k, set) in order.iter().enumerate().take(depth) {
        let _ = k;
        partial += g.basis.get(i, *set) * z[*set] as f64;
    }
    let diag = g.basis.get(i, i);
    if diag == 0.0 {
        return Err(Error::Conditioning(
            "zero diagonal in triangular basis".into(),
        ));
    }
    let (z_lo, z_hi) = range_for(partial, diag, lo[i], hi[i]);
    for zi in z_lo..=z_hi {
        if *budget == 0 {
            return Err(Error::Budget("enumeration candidate cap reached".into()));
        }
        *budget -= 1;
        z[i] = zi;
        if nested_descend(g, lo, hi, order, depth + 1, z, budget, visit)? {
            return Ok(true);
        }
    }
    z[i] = 0;
    Ok(false)
}

fn product_sweep(
    g: &GridBasis,
    lo: &[f64],
    hi: &[f64],
    ranges: &[(i64, i64)],
    depth: usize,
    z: &mut Vec<i64>,
    visit: &mut impl FnMut(GridPoint) -> bool,
) -> bool {
    if depth == ranges.len() {
        let point = g.point(z);
        let inside = point
            .iter()
            .enumerate()
            .all(|(i, x)| *x >= lo[i] && *x <= hi[i]);
        if inside {
            return visit(GridPoint {
                coeffs: z.clone(),
                point,
            });
        }
        return false;
    }
    let (a, b) = ranges[depth];
    for zi in a..=b {
        z[depth] = zi;
        if product_sweep(g, lo, hi, ranges, depth + 1, z, visit) {
            return true;
        }
    }
    false
}

/// Exact list of grid points inside P + gamma.
pub fn points_in_box(
    g: &GridBasis,
    p: &Parallelepiped,
    gamma: &[f64],
    n_max: u64,
) -> Result<Vec<GridPoint>> {
    let mut out = Vec::new();
    enumerate_box(g, p, gamma, n_max, &mut |gp| {
        out.push(gp);
        false
    })?;
    Ok(out)
}

/// First grid point found inside P + gamma, optionally excluding the zero
/// coefficient vector.
pub fn any_point_in_box(
    g: &GridBasis,
    p: &Parallelepiped,
    gamma: &[f64],
    exclude_origin: bool,
    n_max: u64,
) -> Result<Option<GridPoint>> {
    let mut found = None;
    enumerate_box(g, p, gamma, n_max, &mut |gp| {
        if exclude_origin && gp.is_origin_coeffs() {
            return false;
        }
        found = Some(gp);
        true
    })?;
    Ok(found)
}

/// Coverage test used by the inhomogeneous transference check: looks for a
/// lattice point in P + gamma near the rounded preimage of gamma first, then
/// falls back to full enumeration.
pub fn box_covers_gamma(
    g: &GridBasis,
    p: &Parallelepiped,
    gamma: &[f64],
    n_max: u64,
) -> Result<bool> {
    let d = g.d();
    let (_, inv) = g.basis.det_inverse()?;
    let centered: Vec<f64> = (0..d).map(|i| gamma[i] - g.shift[i]).collect();
    let center = inv.mul_vec(&centered);
    let base: Vec<i64> = center.iter().map(|c| c.round() as i64).collect();
    let mut z = base.clone();
    let mut offsets = vec![0i64; d];
    if neighborhood_probe(g, p, gamma, &mut z, &mut offsets, 0) {
        return Ok(true);
    }
    Ok(any_point_in_box(g, p, gamma, false, n_max)?.is_some())
}

fn neighborhood_probe(
    g: &GridBasis,
    p: &Parallelepiped,
    gamma: &[f64],
    z: &mut Vec<i64>,
    offsets: &mut Vec<i64>,
    depth: usize,
) -> bool {
    if depth == z.len() {
        let point = g.point(z);
        let inside = point
            .iter()
            .enumerate()
            .all(|(i, x)| (x - gamma[i]).abs() <= p.half_widths[i] + INSIDE_TOL);
        return inside;
    }
    let center = z[depth];
    for off in [0i64, -1, 1] {
        offsets[depth] = off;
        z[depth] = center + off;
        if neighborhood_probe(g, p, gamma, z, offsets, depth + 1) {
            return true;
        }
    }
    z[depth] = center;
    false
}

// ---------------------------------------------------------------------------
// Successive minima
// ---------------------------------------------------------------------------

/// First k successive minima of P with respect to the lattice: mu_j is the
/// smallest s such that sP contains j linearly independent lattice points.
/// Expanding-shell enumeration; exact within the membership tolerance.
pub fn successive_minima(
    g: &GridBasis,
    p: &Parallelepiped,
    k: usize,
    n_max: u64,
) -> Result<Vec<f64>> {
    if !g.has_zero_shift() {
        return Err(Error::Contract(
            "successive minima need a true lattice".into(),
        ));
    }
    let d = g.d();
    if k == 0 || k > d {
        return Err(Error::Contract(format!("k must be in 1..={d}")));
    }
    let det = g.det()?.abs();
    let gamma = vec![0.0; d];
    // Minkowski: a box of volume 2^d det already holds a nonzero point
    let mut shell = (det / p.l_product()).powf(1.0 / d as f64);
    for _attempt in 0..120 {
        let points = points_in_box(g, &p.scale(shell), &gamma, n_max)?;
        let mut scaled: Vec<(f64, &GridPoint)> = points
            .iter()
            .filter(|gp| !gp.is_origin_coeffs())
            .map(|gp| (p.gauge(&gp.point), gp))
            .collect();
        scaled.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut selected: Vec<Vec<f64>> = Vec::new();
        let mut minima = Vec::new();
        for (gauge, gp) in &scaled {
            let mut trial = selected.clone();
            trial.push(gp.point.clone());
            if rank(&trial, 1e-9) > selected.len() {
                selected = trial;
                minima.push(*gauge);
                if minima.len() == k {
                    return Ok(minima);
                }
            }
        }
        shell *= 2.0;
    }
    Err(Error::Budget(
        "successive minima shell expansion exhausted".into(),
    ))
}

/// Systole: smallest sup-norm of a nonzero lattice point, i.e. mu_1 against
/// the unit cube.
pub fn systole(g: &GridBasis, n_max: u64) -> Result<f64> {
    Ok(successive_minima(g, &Parallelepiped::unit_cube(g.d()), 1, n_max)?[0])
}

// ---------------------------------------------------------------------------
// Transference selftests
// ---------------------------------------------------------------------------

/// c_d = d^{1/(2(d-1))}.
pub fn transference_c(d: usize) -> f64 {
    (d as f64).powf(1.0 / (2.0 * (d as f64 - 1.0)))
}

/// C_d = d * d!.
pub fn transference_big_c(d: usize) -> f64 {
    let fact: f64 = (1..=d).map(|i| i as f64).product();
    d as f64 * fact
}

/// Random unimodular lattice basis: unipotent upper-triangular with entries
/// uniform in [-1, 1], times a diagonal with log-uniform entries in
/// [1/4, 4], normalized to determinant 1.
pub fn random_lattice(d: usize, rng: &mut SplitMix64) -> GridBasis {
    let mut u = Mat::identity(d);
    for i in 0..d {
        for j in i + 1..d {
            u.set(i, j, rng.uniform(-1.0, 1.0));
        }
    }
    let diag: Vec<f64> = (0..d).map(|_| rng.log_uniform(0.25, 4.0)).collect();
    let det: f64 = diag.iter().product();
    let norm = det.powf(-1.0 / d as f64);
    let scaled: Vec<f64> = diag.iter().map(|x| x * norm).collect();
    let b = u.mul_mat(&Mat::diagonal(&scaled));
    GridBasis::lattice(b).unwrap()
}

fn random_box(d: usize, rng: &mut SplitMix64) -> Parallelepiped {
    Parallelepiped::new((0..d).map(|_| rng.log_uniform(0.5, 2.0)).collect()).unwrap()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransferenceReport {
    pub dim: usize,
    pub trials: u64,
    pub violations_part1: u64,
    pub violations_part2: u64,
    pub gamma_samples: u64,
    pub gamma_checks: u64,
    /// Histogram of mu_1(P_test, Lambda)/c_d over part-1 trials, bucket
    /// width 0.05 on [0, 1.5); the last bucket collects overflow.
    pub min_scale_histogram: Vec<u64>,
    pub seed: u64,
}

pub const HISTOGRAM_BUCKETS: usize = 30;

/// Part 1 (homogeneous): whenever P* meets the dual lattice nontrivially,
/// c_d P meets the lattice nontrivially. Each trial scales a random box so
/// the dual hypothesis is barely satisfied, then measures the primal scale.
pub fn verify_transference_part1(
    d: usize,
    trials: u64,
    seed: u64,
    n_max: u64,
) -> Result<TransferenceReport> {
    if !(2..=5).contains(&d) {
        return Err(Error::Contract(
            "transference selftest supports 2 <= d <= 5".into(),
        ));
    }
    let c_d = transference_c(d);
    let results: Vec<Result<f64>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = SplitMix64::derive(seed, trial);
            let lattice = random_lattice(d, &mut rng);
            let dual = lattice.dual()?;
            let p = random_box(d, &mut rng);
            let m_star = successive_minima(&dual, &p.pseudo_compound(), 1, n_max)?[0];
            // scale so mu_1(P_test*, dual) = 1/1.001 <= 1
            let s = (1.001 * m_star).powf(1.0 / (d as f64 - 1.0));
            let p_test = p.scale(s);
            let min_scale = successive_minima(&lattice, &p_test, 1, n_max)?[0];
            Ok(min_scale)
        })
        .collect();

    let mut histogram = vec![0u64; HISTOGRAM_BUCKETS];
    let mut violations = 0u64;
    for r in results {
        let min_scale = r?;
        let ratio = min_scale / c_d;
        let bucket = ((ratio / 0.05) as usize).min(HISTOGRAM_BUCKETS - 1);
        histogram[bucket] += 1;
        if min_scale > c_d * (1.0 + 1e-9) {
            violations += 1;
        }
    }
    Ok(TransferenceReport {
        dim: d,
        trials,
        violations_part1: violations,
        violations_part2: 0,
        gamma_samples: 0,
        gamma_checks: 0,
        min_scale_histogram: histogram,
        seed,
    })
}

/// Part 2 (inhomogeneous): when P* misses the dual lattice, (C/L)P + gamma
/// meets the lattice for every shift, and (C/L)P holds a nonzero point.
pub fn verify_transference_part2(
    d: usize,
    trials: u64,
    gamma_samples: u64,
    seed: u64,
    n_max: u64,
) -> Result<TransferenceReport> {
    if !(2..=5).contains(&d) {
        return Err(Error::Contract(
            "transference selftest supports 2 <= d <= 5".into(),
        ));
    }
    let big_c = transference_big_c(d);
    let results: Vec<Result<(u64, u64)>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = SplitMix64::derive(seed, trial.wrapping_add(1 << 32));
            let lattice = random_lattice(d, &mut rng);
            let dual = lattice.dual()?;
            let p = random_box(d, &mut rng);
            let m_star = successive_minima(&dual, &p.pseudo_compound(), 1, n_max)?[0];
            // scale so mu_1(P_test*, dual) = 1.05 > 1: hypothesis holds
            let s = (m_star / 1.05).powf(1.0 / (d as f64 - 1.0));
            let p_test = p.scale(s);
            let l = p_test.l_product();
            let factor = big_c / l;
            let mut violations = 0u64;
            // nonzero point in (C/L) P_test
            let mu1 = successive_minima(&lattice, &p_test, 1, n_max)?[0];
            if mu1 > factor * (1.0 + 1e-9) {
                violations += 1;
            }
            // coverage for random gammas
            let q = p_test.scale(factor);
            let mut checks = 0u64;
            for _ in 0..gamma_samples {
                let u: Vec<f64> = (0..d).map(|_| rng.next_f64()).collect();
                let gamma = lattice.basis.mul_vec(&u);
                checks += 1;
                if !box_covers_gamma(&lattice, &q, &gamma, n_max)? {
                    violations += 1;
                }
            }
            Ok((violations, checks))
        })
        .collect();

    let mut violations = 0u64;
    let mut checks = 0u64;
    for r in results {
        let (v, c) = r?;
        violations += v;
        checks += c;
    }
    Ok(TransferenceReport {
        dim: d,
        trials,
        violations_part1: 0,
        violations_part2: violations,
        gamma_samples,
        gamma_checks: checks,
        min_scale_histogram: vec![0; HISTOGRAM_BUCKETS],
        seed,
    })
}

/// Combined selftest driving both parts, as exposed by the CLI.
pub fn transference_selftest(
    d: usize,
    trials: u64,
    gamma_samples: u64,
    seed: u64,
    n_max: u64,
) -> Result<TransferenceReport> {
    let part1 = verify_transference_part1(d, trials, seed, n_max)?;
    let part2 = verify_transference_part2(d, trials, gamma_samples, seed, n_max)?;
    Ok(TransferenceReport {
        dim: d,
        trials,
        violations_part1: part1.violations_part1,
        violations_part2: part2.violations_part2,
        gamma_samples,
        gamma_checks: part2.gamma_checks,
        min_scale_histogram: part1.min_scale_histogram,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;

    fn rel_eq(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn pair_grids_match_displays() {
        // n = m = 1, theta: points (theta q + p, q)
        let pair = AffinePair::scalar(0.618034, 0.0);
        let g = grid_from_pair(&pair);
        let gp = g.point(&[3, 2]); // p = 3, q = 2
        assert!(rel_eq(gp[0], 0.618034 * 2.0 + 3.0, 1e-12));
        assert!(rel_eq(gp[1], 2.0, 1e-12));
        // zero pair gives the integer lattice
        let zero = AffinePair::scalar(0.0, 0.0);
        assert_eq!(grid_from_pair(&zero).basis, Mat::identity(2));
        // dual: u_{-theta}^T
        let dual = dual_grid_from_pair(&pair);
        assert!(rel_eq(dual.basis.get(1, 0), -0.618034, 1e-12));
    }

    #[test]
    fn dual_integrality() {
        let mut rng = SplitMix64::new(17);
        let theta = Mat::from_rows(&[vec![0.31, -0.7], vec![1.42, 0.09]]).unwrap();
        let pair = AffinePair::new(theta, vec![0.0, 0.0]).unwrap();
        let lat = lattice_from_pair(&pair);
        let dual = dual_grid_from_pair(&pair);
        // definitional dual agrees with inverse transpose
        let inv_t = lat.dual().unwrap();
        for _ in 0..10_000 {
            let z1: Vec<i64> = (0..4).map(|_| rng.uniform(-20.0, 20.0) as i64).collect();
            let z2: Vec<i64> = (0..4).map(|_| rng.uniform(-20.0, 20.0) as i64).collect();
            let x = lat.point(&z1);
            let y = dual.point(&z2);
            let prod = dot(&x, &y);
            assert!((prod - prod.round()).abs() < 1e-9, "not integral: {prod}");
            let y2 = inv_t.point(&z2);
            let prod2 = dot(&x, &y2);
            assert!((prod2 - prod2.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn dual_basis_examples() {
        let id = GridBasis::lattice(Mat::identity(3)).unwrap();
        assert_eq!(id.dual().unwrap().basis, Mat::identity(3));
        let diag = GridBasis::lattice(Mat::diagonal(&[2.0, 4.0, 0.5])).unwrap();
        let dual = diag.dual().unwrap();
        assert!(rel_eq(dual.basis.get(0, 0), 0.5, 1e-12));
        assert!(rel_eq(dual.basis.get(1, 1), 0.25, 1e-12));
        assert!(rel_eq(dual.basis.get(2, 2), 2.0, 1e-12));
        // near-singular basis is a conditioning error
        let bad = GridBasis::lattice(Mat::diagonal(&[1.0, 1e-14])).unwrap();
        assert!(bad.dual().is_err());
    }

    #[test]
    fn pseudo_compound_rules() {
        let b3 = Parallelepiped::unit_cube(3);
        assert_eq!(b3.pseudo_compound(), b3);
        // (k B_d)* = k^{d-1} B_d
        let kb = b3.scale(3.0);
        let star = kb.pseudo_compound();
        assert_eq!(star, b3.scale(9.0));
        // L = 1: pseudo-compound is an involution
        let p = Parallelepiped::new(vec![2.0, 0.25, 2.0]).unwrap();
        assert!(rel_eq(p.l_product(), 1.0, 1e-12));
        let back = p.pseudo_compound().pseudo_compound();
        for (a, b) in back.half_widths.iter().zip(&p.half_widths) {
            assert!(rel_eq(*a, *b, 1e-12));
        }
    }

    #[test]
    fn scaling_composition_is_identity() {
        let ws = WeightSystem::equal_power_weights(1, 1).unwrap();
        let a = DiagonalScaling::from_system(&ws, 0.2, 5.0).unwrap();
        let inv = a.inverse();
        for (x, y) in a.entries.iter().zip(&inv.entries) {
            assert!(rel_eq(x * y, 1.0, 1e-12));
        }
        assert!(rel_eq(inv.u, 5.0, 1e-12));
        // inverse is the scaling generated at (1/U, 1/T)
        let direct = DiagonalScaling::from_system(&ws, 1.0 / 0.2, 1.0 / 5.0).unwrap();
        for (x, y) in direct.entries.iter().zip(&inv.entries) {
            assert!(rel_eq(*x, *y, 1e-12));
        }
    }

    #[test]
    fn integer_lattice_in_unit_cube() {
        let g = GridBasis::lattice(Mat::identity(3)).unwrap();
        let pts = points_in_box(&g, &Parallelepiped::unit_cube(3), &[0.0; 3], 1 << 20).unwrap();
        assert_eq!(pts.len(), 27);
    }

    #[test]
    fn empty_box_is_empty() {
        let g = GridBasis::lattice(Mat::identity(2)).unwrap();
        let p = Parallelepiped::new(vec![0.01, 0.01]).unwrap();
        let pts = points_in_box(&g, &p, &[0.5, 0.5], 1 << 20).unwrap();
        assert!(pts.is_empty());
    }

    #[test]
    fn golden_flow_membership() {
        // theta = 0.618..., flow at T = 5: the image of (p, q) = (-1, 2) has
        // first coordinate 5 * ||2 theta|| ≈ 1.18 > 1, outside the cube
        let theta = 0.6180339887498949;
        let pair = AffinePair::scalar(theta, 0.0);
        let lat = lattice_from_pair(&pair);
        let t = 5.0;
        let flow = DiagonalScaling::weighted_flow(&[1.0], &[1.0], t);
        let scaled = lat.scaled(&flow);
        let pts =
            points_in_box(&scaled, &Parallelepiped::unit_cube(2), &[0.0, 0.0], 1 << 20).unwrap();
        assert!(
            !pts.iter().any(|gp| gp.coeffs == vec![-1, 2]),
            "(-1,2) should be outside"
        );
        // brute force over |p| <= 10, |q| <= 5 agrees with the enumeration
        let mut brute = Vec::new();
        for p in -10i64..=10 {
            for q in -5i64..=5 {
                let x = t * (theta * q as f64 + p as f64);
                let y = q as f64 / t;
                if x.abs() <= 1.0 + INSIDE_TOL && y.abs() <= 1.0 + INSIDE_TOL {
                    brute.push(vec![p, q]);
                }
            }
        }
        let mut got: Vec<Vec<i64>> = pts.iter().map(|gp| gp.coeffs.clone()).collect();
        got.sort();
        brute.sort();
        assert_eq!(got, brute);
    }

    #[test]
    fn enumeration_matches_brute_force() {
        let mut rng = SplitMix64::new(23);
        for case in 0..1000 {
            let d = 2 + (case % 2) as usize;
            // alternate triangular and dense bases
            let basis = if case % 3 == 0 {
                let mut m = Mat::zeros(d, d);
                for i in 0..d {
                    for j in 0..d {
                        m.set(i, j, rng.uniform(-1.5, 1.5));
                    }
                    m.set(i, i, rng.log_uniform(0.5, 2.0));
                }
                m
            } else {
                let mut m = Mat::identity(d);
                for i in 0..d {
                    for j in i + 1..d {
                        m.set(i, j, rng.uniform(-1.0, 1.0));
                    }
                }
                m
            };
            // skip ill-conditioned draws: the bounding-box fallback is only
            // meant for well-conditioned bases
            match basis.det_inverse() {
                Ok((_, inv)) => {
                    let worst = (0..d)
                        .flat_map(|i| (0..d).map(move |j| (i, j)))
                        .map(|(i, j)| inv.get(i, j).abs())
                        .fold(0.0f64, f64::max);
                    if worst > 10.0 {
                        continue;
                    }
                }
                Err(_) => continue,
            }
            let g =
                GridBasis::grid(basis, (0..d).map(|_| rng.uniform(-0.5, 0.5)).collect()).unwrap();
            let p =
                Parallelepiped::new((0..d).map(|_| rng.log_uniform(0.3, 2.0)).collect()).unwrap();
            let gamma: Vec<f64> = (0..d).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let mut expect = Vec::new();
            let mut z = vec![0i64; d];
            brute(&g, &p, &gamma, 0, &mut z, &mut expect);
            let mut got: Vec<Vec<i64>> = points_in_box(&g, &p, &gamma, 1 << 22)
                .unwrap()
                .into_iter()
                .map(|gp| gp.coeffs)
                .filter(|c| c.iter().all(|x| x.abs() <= 10))
                .collect();
            got.sort();
            expect.sort();
            assert_eq!(got, expect, "case {case}");
        }
    }

    fn brute(
        g: &GridBasis,
        p: &Parallelepiped,
        gamma: &[f64],
        depth: usize,
        z: &mut Vec<i64>,
        out: &mut Vec<Vec<i64>>,
    ) {
        if depth == g.d() {
            let pt = g.point(z);
            if pt
                .iter()
                .enumerate()
                .all(|(i, x)| (x - gamma[i]).abs() <= p.half_widths[i] + INSIDE_TOL)
            {
                out.push(z.clone());
            }
            return;
        }
        for v in -10i64..=10 {
            z[depth] = v;
            brute(g, p, gamma, depth + 1, z, out);
        }
    }

    #[test]
    fn minima_examples() {
        let zd = GridBasis::lattice(Mat::identity(3)).unwrap();
        let mins = successive_minima(&zd, &Parallelepiped::unit_cube(3), 3, 1 << 22).unwrap();
        for m in mins {
            assert!(rel_eq(m, 1.0, 1e-9));
        }
        // diagonal(2, 1/2) against the unit square: mu = (1/2, 2)
        let g = GridBasis::lattice(Mat::diagonal(&[2.0, 0.5])).unwrap();
        let mins = successive_minima(&g, &Parallelepiped::unit_cube(2), 2, 1 << 22).unwrap();
        assert!(rel_eq(mins[0], 0.5, 1e-9));
        assert!(rel_eq(mins[1], 2.0, 1e-9));
    }

    #[test]
    fn minkowski_second_theorem_bound() {
        let mut rng = SplitMix64::new(61);
        for _ in 0..100 {
            let d = 3;
            let g = random_lattice(d, &mut rng);
            let p = random_box(d, &mut rng);
            let mins = successive_minima(&g, &p, d, 1 << 22).unwrap();
            let prod: f64 = mins.iter().product();
            let det = g.det().unwrap().abs();
            assert!(
                prod * p.volume() <= 2f64.powi(d as i32) * det * (1.0 + 1e-6),
                "second theorem violated: {prod} * {} > 2^d {det}",
                p.volume()
            );
        }
    }

    #[test]
    fn scaling_duality_up_to_unimodular() {
        // dual of a(U,T) u_{-theta}^T equals a(1/U,1/T) u_theta up to a
        // unimodular factor: check mutual integrality and equal determinants
        let ws = WeightSystem::equal_power_weights(1, 1).unwrap();
        let pair = AffinePair::scalar(0.7320508, 0.0);
        let a = DiagonalScaling::from_system(&ws, 0.37, 3.1).unwrap();
        let left = dual_grid_from_pair(&pair).scaled(&a).dual().unwrap();
        let right = lattice_from_pair(&pair).scaled(&a.inverse());
        let dl = left.det().unwrap().abs();
        let dr = right.det().unwrap().abs();
        assert!(rel_eq(dl, dr, 1e-9));
        // mutual dual-integrality: points of `left` dual pair integrally with right's dual
        let right_dual = right.dual().unwrap();
        let mut rng = SplitMix64::new(3);
        for _ in 0..500 {
            let z1: Vec<i64> = (0..2).map(|_| rng.uniform(-9.0, 9.0) as i64).collect();
            let z2: Vec<i64> = (0..2).map(|_| rng.uniform(-9.0, 9.0) as i64).collect();
            let prod = dot(&left.point(&z1), &right_dual.point(&z2));
            assert!((prod - prod.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn transference_constants() {
        assert!(rel_eq(transference_c(2), 2f64.sqrt(), 1e-12));
        assert!(rel_eq(transference_c(3), 3f64.powf(0.25), 1e-12));
        assert!(rel_eq(transference_c(4), 4f64.powf(1.0 / 6.0), 1e-12));
        assert_eq!(transference_big_c(2), 4.0);
        assert_eq!(transference_big_c(3), 18.0);
        assert_eq!(transference_big_c(5), 600.0);
    }

    #[test]
    fn transference_smoke() {
        let r1 = verify_transference_part1(2, 50, 9, N_MAX_DEFAULT).unwrap();
        assert_eq!(r1.violations_part1, 0);
        let r2 = verify_transference_part2(2, 25, 10, 9, N_MAX_DEFAULT).unwrap();
        assert_eq!(r2.violations_part2, 0);
        assert_eq!(r2.gamma_checks, 250);
    }

    #[test]
    fn budget_error_is_loud() {
        let g = GridBasis::lattice(Mat::identity(2)).unwrap();
        let p = Parallelepiped::new(vec![1000.0, 1000.0]).unwrap();
        match points_in_box(&g, &p, &[0.0, 0.0], 100) {
            Err(Error::Budget(_)) => {}
            other => panic!("expected budget error, got {other:?}"),
        }
    }
}
