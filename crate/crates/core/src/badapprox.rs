//! Badly approximable matrices through the diagonal flow: systole traces,
//! the explicit weighted transference constants, the epsilon(delta) search,
//! and the resonance-set containment experiment behind the
//! Dirichlet-improvability nullset.

use crate::error::{Error, Result};
use crate::geometry::{systole, AffinePair, DiagonalScaling};
use crate::linalg::Mat;
use crate::oracle::{approx_witnesses, solvable_at};
use crate::rng::SplitMix64;
use crate::weights::{
    certify_quasimultiplicative, int_dist, ApproxFunction, QuasiMultCertificate, WeightSystem,
};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub fn golden_theta() -> f64 {
    (5f64.sqrt() - 1.0) / 2.0
}

// ---------------------------------------------------------------------------
// Systole traces along the critical flow
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystoleTrace {
    pub times: Vec<f64>,
    pub systole: Vec<f64>,
    pub running_min: Vec<f64>,
}

/// Log-spaced grid from t_min to t_max with the given multiplicative step;
/// always includes both endpoints.
pub fn log_grid(t_min: f64, t_max: f64, factor: f64) -> Result<Vec<f64>> {
    if !(t_min >= 1.0) || !(t_max > t_min) || !(factor > 1.0) {
        return Err(Error::Contract(
            "log grid needs 1 <= t_min < t_max, factor > 1".into(),
        ));
    }
    let mut grid = Vec::new();
    let mut t = t_min;
    while t < t_max {
        grid.push(t);
        t *= factor;
    }
    grid.push(t_max);
    Ok(grid)
}

/// Minimal sup-norm over nonzero points of a(g(T), T) Lambda_Theta for each
/// grid time, with the running minimum. Bounded-below traces are the
/// computable face of bad approximability; the verdict is a trend, never a
/// categorical claim.
pub fn systole_trace(
    theta: &Mat,
    ws: &WeightSystem,
    t_grid: &[f64],
    n_max: u64,
) -> Result<SystoleTrace> {
    if theta.rows() != ws.n() || theta.cols() != ws.m() {
        return Err(Error::Contract(
            "theta dimensions do not match the weight system".into(),
        ));
    }
    let g = ws.dirichlet_exponent();
    let pair = AffinePair::homogeneous(theta.clone());
    let lattice = crate::geometry::lattice_from_pair(&pair);
    let values: Vec<Result<f64>> = t_grid
        .par_iter()
        .map(|&t| {
            let u = g.eval(t)?;
            let scaling = DiagonalScaling::from_system(ws, u, t)?;
            systole(&lattice.scaled(&scaling), n_max)
        })
        .collect();
    let mut sys = Vec::with_capacity(values.len());
    for v in values {
        sys.push(v?);
    }
    let mut running = Vec::with_capacity(sys.len());
    let mut acc = f64::INFINITY;
    for s in &sys {
        acc = acc.min(*s);
        running.push(acc);
    }
    Ok(SystoleTrace {
        times: t_grid.to_vec(),
        systole: sys,
        running_min: running,
    })
}

// ---------------------------------------------------------------------------
// Liouville designed scales (exact rational arithmetic)
// ---------------------------------------------------------------------------

fn factorial(k: u32) -> u64 {
    (1..=k as u64).product::<u64>().max(1)
}

fn pow10(e: u64) -> BigInt {
    BigInt::from(10u32).pow(e as u32)
}

/// Truncated Liouville number: sum of 10^{-k!} for k = 1..=terms.
pub fn liouville_theta(terms: u32) -> BigRational {
    let denom = pow10(factorial(terms));
    let mut num = BigInt::zero();
    for k in 1..=terms {
        num += pow10(factorial(terms) - factorial(k));
    }
    BigRational::new(num, denom)
}

/// f64 image of the truncated Liouville number (fine for small term counts).
pub fn liouville_theta_f64(terms: u32) -> f64 {
    liouville_theta(terms).to_f64().unwrap()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DesignedDip {
    pub k: u32,
    /// q = 10^{q_exponent}
    pub q_exponent: u64,
    /// T = 10^{t_exponent}
    pub t_exponent: u64,
    /// Exact max(T ||theta q||, q/T) evaluated at the designed scale; an
    /// upper bound for the flow systole at that time.
    pub systole_upper: f64,
}

/// Systole upper bounds at the designed scales q = 10^{k!}, T = 10^{(k+1)!/2}
/// for the truncated Liouville number. Floating point underflows here; the
/// values are computed with exact rationals and only reported as f64.
pub fn liouville_designed_dips(terms: u32, k_values: &[u32]) -> Result<Vec<DesignedDip>> {
    if !(2..=6).contains(&terms) {
        return Err(Error::Contract("liouville terms must be in 2..=6".into()));
    }
    let theta = liouville_theta(terms);
    let mut out = Vec::new();
    for &k in k_values {
        if k + 1 > terms {
            return Err(Error::Contract(format!(
                "designed scale k = {k} needs at least {} terms",
                k + 1
            )));
        }
        let q_exp = factorial(k);
        let t_exp = factorial(k + 1) / 2;
        let q = pow10(q_exp);
        let t = BigRational::from_integer(pow10(t_exp));
        // ||theta q||: fractional part of an exact rational
        let prod = &theta * BigRational::from_integer(q.clone());
        let frac = &prod - prod.floor();
        let dist = frac.clone().min(BigRational::one() - &frac);
        let v1 = &t * &dist;
        let v2 = BigRational::new(q, BigInt::one()) / &t;
        let value = v1.max(v2);
        out.push(DesignedDip {
            k,
            q_exponent: q_exp,
            t_exponent: t_exp,
            systole_upper: value.to_f64().unwrap_or(f64::INFINITY),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Weighted constants
// ---------------------------------------------------------------------------

/// Weight exponents with unit sums on both sides.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightedProfile {
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl WeightedProfile {
    pub fn new(rho: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if rho.is_empty() || sigma.is_empty() {
            return Err(Error::Contract(
                "profile needs entries on both sides".into(),
            ));
        }
        if rho.iter().chain(&sigma).any(|x| *x <= 0.0) {
            return Err(Error::Contract("profile entries must be positive".into()));
        }
        let sr: f64 = rho.iter().sum();
        let ss: f64 = sigma.iter().sum();
        if (sr - 1.0).abs() > 1e-9 || (ss - 1.0).abs() > 1e-9 {
            return Err(Error::Contract(
                "profile entries must sum to 1 on each side".into(),
            ));
        }
        Ok(WeightedProfile { rho, sigma })
    }

    pub fn d(&self) -> usize {
        self.rho.len() + self.sigma.len()
    }

    pub fn r_minus(&self) -> f64 {
        self.rho
            .iter()
            .chain(&self.sigma)
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn r_plus(&self) -> f64 {
        self.rho
            .iter()
            .chain(&self.sigma)
            .cloned()
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BadConstants {
    /// K(b): every pair with a badly approximable matrix is K(b) f1-Dirichlet.
    pub big_k: f64,
    /// kappa(b): below this constant almost no pair is Dirichlet.
    pub kappa: f64,
    /// Constant inherited by the transposed matrix.
    pub transposed_b: f64,
    /// Upper bound on admissible epsilon in the improvability statement.
    pub epsilon_max: f64,
}

/// The explicit constants of the weighted bad-approximability transference.
pub fn bad_constants_weighted(profile: &WeightedProfile, b: f64) -> Result<BadConstants> {
    if !(b > 0.0) {
        return Err(Error::Contract("constant b must be positive".into()));
    }
    let d = profile.d() as f64;
    let r_minus = profile.r_minus();
    let r_plus = profile.r_plus();
    let fact: f64 = (1..=profile.d()).map(|i| i as f64).product();
    let big_k = d.powi(3) * fact * fact / b.powf(2.0 / r_plus - 1.0);
    let kappa = 2f64.powf(-2.0 / r_minus)
        * d.powf(-2.0 / r_minus - r_plus / (2.0 - r_plus))
        * b.powf(-r_plus / (2.0 - r_plus));
    let transposed_b = b.powf(2.0 / r_plus - 1.0) / d;
    let epsilon_max = (2.0 * d).powf(-1.0 / r_minus);
    Ok(BadConstants {
        big_k,
        kappa,
        transposed_b,
        epsilon_max,
    })
}

// ---------------------------------------------------------------------------
// epsilon(delta)
// ---------------------------------------------------------------------------

/// A weight system with quasimultiplicativity certificates for every
/// component (alpha certificates first, then beta).
#[derive(Clone, Debug)]
pub struct CertifiedSystem {
    pub ws: WeightSystem,
    pub certs: Vec<QuasiMultCertificate>,
}

impl CertifiedSystem {
    pub fn certify(ws: &WeightSystem, base: f64, k_lo: i64, k_hi: i64) -> Result<Self> {
        let mut certs = Vec::with_capacity(ws.d());
        for a in ws.alpha() {
            certs.push(certify_quasimultiplicative(a, base, k_lo, k_hi)?);
        }
        for b in ws.beta() {
            certs.push(certify_quasimultiplicative(b, base, k_lo, k_hi)?);
        }
        Ok(CertifiedSystem {
            ws: ws.clone(),
            certs,
        })
    }

    /// Intersection of the certified T-ranges.
    pub fn common_range(&self) -> (f64, f64) {
        let mut lo = 1.0f64;
        let mut hi = f64::INFINITY;
        for c in &self.certs {
            let (a, b) = c.certified_range();
            lo = lo.max(a);
            hi = hi.min(b);
        }
        (lo, hi)
    }
}

/// Largest epsilon from a geometric grid such that
/// alpha_i(T) alpha_i(eps/T) <= delta and beta_j(eps T) beta_j(1/T) <= delta
/// hold on a log grid of T spanning the certified range. Power weights give
/// eps = delta^{1/r_minus} exactly; quasimultiplicativity guarantees a
/// positive answer in general.
pub fn epsilon_of_delta(cs: &CertifiedSystem, delta: f64, grid_points: usize) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Contract("delta must lie in (0, 1)".into()));
    }
    let (lo, hi) = cs.common_range();
    if !(hi > 4.0 * lo) {
        return Err(Error::Range(
            "certificate range too small for the epsilon search".into(),
        ));
    }
    let grid_points = grid_points.max(8);
    let ratio = (hi / lo).powf(1.0 / grid_points as f64);
    let mut grid = Vec::with_capacity(grid_points + 1);
    let mut t = lo;
    for _ in 0..=grid_points {
        grid.push(t);
        t *= ratio;
    }
    let ln_delta = delta.ln() + 1e-12;
    'eps: for j in 0..400 {
        let eps = 2f64.powf(-(j as f64) / 2.0);
        for &t in &grid {
            for a in cs.ws.alpha() {
                if a.log_eval(t)? + a.log_eval(eps / t)? > ln_delta {
                    continue 'eps;
                }
            }
            for b in cs.ws.beta() {
                if b.log_eval(eps * t)? + b.log_eval(1.0 / t)? > ln_delta {
                    continue 'eps;
                }
            }
        }
        return Ok(eps);
    }
    Err(Error::Range("no epsilon found down to 2^-200".into()))
}

// ---------------------------------------------------------------------------
// Resonance sets and the improvability experiment
// ---------------------------------------------------------------------------

/// Omega_nu: shifts eta with ||eta · y|| <= (m+n) delta.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResonanceSet {
    pub y: Vec<i64>,
    pub delta: f64,
    pub threshold: f64,
}

impl ResonanceSet {
    pub fn new(y: Vec<i64>, delta: f64, d: usize) -> Result<Self> {
        let threshold = d as f64 * delta;
        if !(threshold < 0.5) {
            return Err(Error::Contract(
                "resonance threshold (m+n) delta must stay below 1/2".into(),
            ));
        }
        Ok(ResonanceSet {
            y,
            delta,
            threshold,
        })
    }

    pub fn contains(&self, eta: &[f64]) -> bool {
        let v: f64 = eta.iter().zip(&self.y).map(|(e, y)| e * *y as f64).sum();
        int_dist(v) <= self.threshold + 1e-12
    }
}

pub fn resonance_membership(eta: &[f64], sets: &[ResonanceSet]) -> Vec<bool> {
    sets.iter().map(|s| s.contains(eta)).collect()
}

/// The transference identity eta·y = sum_j q_j (Theta^T y)_j -
/// sum_i (Theta_i q - eta_i) y_i; returns the relative residual.
pub fn transference_identity_residual(theta: &Mat, eta: &[f64], q: &[i64], y: &[i64]) -> f64 {
    let n = theta.rows();
    let m = theta.cols();
    let lhs: f64 = eta.iter().zip(y).map(|(e, yi)| e * *yi as f64).sum();
    let theta_t = theta.transpose();
    let mut rhs = 0.0;
    for (j, qj) in q.iter().enumerate().take(m) {
        let ty: f64 = theta_t
            .row(j)
            .iter()
            .zip(y)
            .map(|(a, yi)| a * *yi as f64)
            .sum();
        rhs += *qj as f64 * ty;
    }
    for i in 0..n {
        let form: f64 = theta
            .row(i)
            .iter()
            .zip(q)
            .map(|(a, qj)| a * *qj as f64)
            .sum::<f64>()
            - eta[i];
        rhs -= form * y[i] as f64;
    }
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ImprovabilityReport {
    pub eta_samples: u64,
    pub witnesses_used: usize,
    pub scales_in_window: usize,
    pub checks: u64,
    pub counterexamples: u64,
    pub intersection_fraction: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub inconclusive: bool,
    pub seed: u64,
}

/// Containment experiment for the improvability nullset: for every sampled
/// shift and every separated witness scale T_nu inside the window, solvability
/// of the dilated system at T_nu must place the shift in the resonance set
/// Omega_nu. Counterexamples falsify the transference step and must be zero.
#[allow(clippy::too_many_arguments)]
pub fn improvability_experiment(
    theta: &Mat,
    cs: &CertifiedSystem,
    f: &ApproxFunction,
    delta: f64,
    eta_samples: u64,
    t_min: f64,
    t_max: f64,
    y_max: f64,
    seed: u64,
    n_max: u64,
) -> Result<ImprovabilityReport> {
    let ws = &cs.ws;
    let d = ws.d();
    if !(delta > 0.0 && delta < 1.0 / (2.0 * d as f64)) {
        return Err(Error::Contract(format!(
            "delta must lie in (0, 1/{})",
            2 * d
        )));
    }
    let eps = epsilon_of_delta(cs, delta, 200)?;
    let g = f.duality_transform()?;
    let g_tilde = g.dilated(eps)?;
    let hom = AffinePair::homogeneous(theta.clone());
    let witnesses = approx_witnesses(&hom, ws, f, y_max, n_max)?;
    let separated: Vec<_> = witnesses.separated(10.0).into_iter().cloned().collect();
    if separated.is_empty() {
        return Ok(ImprovabilityReport {
            eta_samples,
            witnesses_used: 0,
            scales_in_window: 0,
            checks: 0,
            counterexamples: 0,
            intersection_fraction: 0.0,
            epsilon: eps,
            delta,
            inconclusive: true,
            seed,
        });
    }
    // T_nu = eps / f(Y_nu); keep the scales falling inside the window
    let mut scales: Vec<(f64, ResonanceSet)> = Vec::new();
    for w in &separated {
        let t_nu = eps / f.eval(w.scale.max(1.0))?;
        if t_nu >= t_min && t_nu <= t_max {
            scales.push((t_nu, ResonanceSet::new(w.y.clone(), delta, d)?));
        }
    }
    if scales.is_empty() {
        return Ok(ImprovabilityReport {
            eta_samples,
            witnesses_used: separated.len(),
            scales_in_window: 0,
            checks: 0,
            counterexamples: 0,
            intersection_fraction: 0.0,
            epsilon: eps,
            delta,
            inconclusive: true,
            seed,
        });
    }

    let n = ws.n();
    let results: Vec<Result<(u64, u64, bool)>> = (0..eta_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = SplitMix64::derive(seed, i);
            let eta: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
            let pair = AffinePair::new(theta.clone(), eta.clone())?;
            let mut checks = 0u64;
            let mut bad = 0u64;
            let mut in_all = true;
            for (t_nu, omega) in &scales {
                let member = omega.contains(&eta);
                in_all &= member;
                if solvable_at(&pair, ws, &g_tilde, *t_nu, 1.0, n_max)? {
                    checks += 1;
                    if !member {
                        bad += 1;
                    }
                }
            }
            Ok((checks, bad, in_all))
        })
        .collect();

    let mut checks = 0u64;
    let mut counterexamples = 0u64;
    let mut in_all_count = 0u64;
    for r in results {
        let (c, b, ia) = r?;
        checks += c;
        counterexamples += b;
        if ia {
            in_all_count += 1;
        }
    }
    Ok(ImprovabilityReport {
        eta_samples,
        witnesses_used: separated.len(),
        scales_in_window: scales.len(),
        checks,
        counterexamples,
        intersection_fraction: in_all_count as f64 / eta_samples.max(1) as f64,
        epsilon: eps,
        delta,
        inconclusive: false,
        seed,
    })
}
