//! Weight functions, weighted quasinorms, quasimultiplicativity certificates
//! and the regularization machinery used by the solvability oracle.
//!
//! A weight function is a strictly increasing continuous bijection of the
//! positive reals with h(1) = 1. Family formulas are given on [1, ∞); below 1
//! every function is extended by the reflection rule h(T) = 1/h(1/T), and
//! h(0) = 0 is an exact special case handled by the norms.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Relative evaluation tolerance used by property checks.
pub const TAU_EVAL: f64 = 1e-9;
/// Inversion tolerance on the argument (relative above 1, absolute below).
pub const TAU_INV: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Weight functions
// ---------------------------------------------------------------------------

/// Piecewise-linear curve in log-log coordinates: gamma(t) = ln h(e^t).
///
/// Breakpoints sit at powers of `base`; segment k of [base^k, base^{k+1}]
/// carries `slopes[k mod slopes.len()]`. On [0, 1] the slope is `anchor`,
/// so gamma(1) = anchor and gamma(0) = 0 (h(1) = 1).
#[derive(Clone, Debug, PartialEq)]
pub struct LogLogCurve {
    pub base: f64,
    pub slopes: Vec<f64>,
    pub anchor: f64,
}

impl LogLogCurve {
    fn validate(&self) -> Result<()> {
        if !(self.base > 1.0) {
            return Err(Error::Config("plog base must be > 1".into()));
        }
        if self.anchor <= 0.0 {
            return Err(Error::Config("plog anchor must be positive".into()));
        }
        if self.slopes.is_empty() || self.slopes.iter().any(|s| *s <= 0.0) {
            return Err(Error::Config("plog slopes must be positive".into()));
        }
        Ok(())
    }

    /// gamma(t) for t >= 0.
    pub fn gamma(&self, t: f64) -> f64 {
        if t <= 1.0 {
            return self.anchor * t;
        }
        let mut val = self.anchor;
        let mut left = 1.0;
        let mut k = 0usize;
        loop {
            let right = self.base.powi(k as i32 + 1);
            let slope = self.slopes[k % self.slopes.len()];
            if t <= right {
                return val + slope * (t - left);
            }
            val += slope * (right - left);
            left = right;
            k += 1;
        }
    }

    /// Inverse of gamma on [0, ∞).
    pub fn gamma_inv(&self, u: f64) -> f64 {
        if u <= self.anchor {
            return u / self.anchor;
        }
        let mut val = self.anchor;
        let mut left = 1.0;
        let mut k = 0usize;
        loop {
            let right = self.base.powi(k as i32 + 1);
            let slope = self.slopes[k % self.slopes.len()];
            let val_right = val + slope * (right - left);
            if u <= val_right {
                return left + (u - val) / slope;
            }
            val = val_right;
            left = right;
            k += 1;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Family {
    /// h(T) = T^rho.
    Power { rho: f64 },
    /// h(T) = scale * T^{a0} (ln T)^{a1} (ln ln T)^{a2} ... for T >= onset,
    /// and h(T) = T^{patch_slope} on [1, onset]. The patch is the tangent
    /// power at the onset; `scale` restores h(1) = 1.
    PowerLog {
        exponents: Vec<f64>,
        onset: f64,
        patch_slope: f64,
        scale: f64,
    },
    /// h(T) = exp(gamma(ln T)).
    PiecewiseLinearLog(LogLogCurve),
    /// Piecewise-linear interpolation of (t, v) nodes, t >= 1. Evaluation
    /// outside the node range is an extrapolation error.
    Table { nodes: Vec<(f64, f64)> },
}

/// A weight function: strictly increasing, continuous, h(1) = 1, h(T) → ∞.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightFunction {
    family: Family,
}

/// Raw iterated-log product T^{a0} (ln T)^{a1} (lnln T)^{a2}..., in log form.
fn powerlog_raw_log(exponents: &[f64], t: f64) -> f64 {
    let mut acc = exponents[0] * t.ln();
    let mut x = t.ln();
    for &a in &exponents[1..] {
        acc += a * x.ln();
        x = x.ln();
    }
    acc
}

/// Logarithmic derivative T h'(T)/h(T) of the raw iterated-log product.
fn powerlog_log_slope(exponents: &[f64], t: f64) -> f64 {
    let mut acc = exponents[0];
    let mut denom = 1.0;
    let mut x = t.ln();
    for &a in &exponents[1..] {
        denom *= x;
        acc += a / denom;
        x = x.ln();
    }
    acc
}

impl WeightFunction {
    pub fn power(rho: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::Config("power exponent must be positive".into()));
        }
        Ok(WeightFunction {
            family: Family::Power { rho },
        })
    }

    /// `exponents[0]` is the power of T (must be positive); later entries are
    /// exponents of the iterated logarithms. Below the onset the function is
    /// patched by the tangent power at the onset, and the whole function is
    /// rescaled so that h(1) = 1.
    pub fn power_log(exponents: Vec<f64>, onset: f64) -> Result<Self> {
        if exponents.is_empty() || exponents[0] <= 0.0 {
            return Err(Error::Config(
                "powerlog needs a positive leading exponent".into(),
            ));
        }
        if !(onset > 1.0) {
            return Err(Error::Config("powerlog onset must exceed 1".into()));
        }
        // all iterated logs must be defined and positive at the onset
        let mut x = onset;
        for _ in 1..exponents.len() {
            x = x.ln();
            if !(x > 0.0) {
                return Err(Error::Config(
                    "powerlog onset too small for the requested log depth".into(),
                ));
            }
        }
        let patch_slope = powerlog_log_slope(&exponents, onset);
        if patch_slope <= 0.0 {
            return Err(Error::Config("powerlog not increasing at the onset".into()));
        }
        // spot-check monotonicity on a geometric grid beyond the onset
        let hi = (onset * onset).max(1e12);
        let steps = 256;
        let ratio = (hi / onset).powf(1.0 / steps as f64);
        let mut t = onset;
        for _ in 0..=steps {
            if powerlog_log_slope(&exponents, t) <= 0.0 {
                return Err(Error::Config(format!(
                    "powerlog not increasing near T = {t}"
                )));
            }
            t *= ratio;
        }
        // scale makes the patch exactly T^{patch_slope}
        let scale = (patch_slope * onset.ln() - powerlog_raw_log(&exponents, onset)).exp();
        Ok(WeightFunction {
            family: Family::PowerLog {
                exponents,
                onset,
                patch_slope,
                scale,
            },
        })
    }

    pub fn piecewise_linear_log(base: f64, slopes: Vec<f64>, anchor: f64) -> Result<Self> {
        let curve = LogLogCurve {
            base,
            slopes,
            anchor,
        };
        curve.validate()?;
        Ok(WeightFunction {
            family: Family::PiecewiseLinearLog(curve),
        })
    }

    /// Nodes must start at (1, 1) and be strictly increasing in both
    /// coordinates.
    pub fn table(nodes: Vec<(f64, f64)>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Config("table needs at least two nodes".into()));
        }
        if (nodes[0].0 - 1.0).abs() > 1e-9 || (nodes[0].1 - 1.0).abs() > 1e-9 {
            return Err(Error::Config("table must start at the node (1, 1)".into()));
        }
        for w in nodes.windows(2) {
            if !(w[1].0 > w[0].0) || !(w[1].1 > w[0].1) {
                return Err(Error::Config(
                    "table nodes must be strictly increasing".into(),
                ));
            }
        }
        Ok(WeightFunction {
            family: Family::Table { nodes },
        })
    }

    /// ln h(T) on the formula side (T >= 1).
    fn log_formula(&self, t: f64) -> Result<f64> {
        match &self.family {
            Family::Power { rho } => Ok(rho * t.ln()),
            Family::PowerLog {
                exponents,
                onset,
                patch_slope,
                scale,
            } => {
                if t < *onset {
                    Ok(patch_slope * t.ln())
                } else {
                    Ok(scale.ln() + powerlog_raw_log(exponents, t))
                }
            }
            Family::PiecewiseLinearLog(curve) => Ok(curve.gamma(t.ln())),
            Family::Table { nodes } => {
                let last = nodes.last().unwrap();
                if t > last.0 * (1.0 + 1e-12) {
                    return Err(Error::Range(format!(
                        "table evaluation at T = {t} beyond last node {}",
                        last.0
                    )));
                }
                let t = t.min(last.0);
                let idx = nodes.partition_point(|n| n.0 < t).clamp(1, nodes.len() - 1);
                let (t0, v0) = nodes[idx - 1];
                let (t1, v1) = nodes[idx];
                let v = v0 + (v1 - v0) * (t - t0) / (t1 - t0);
                Ok(v.ln())
            }
        }
    }

    /// ln h(T) for any T > 0 (reflection below 1).
    pub fn log_eval(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!(
                "weight argument must be positive, got {t}"
            )));
        }
        if t >= 1.0 {
            self.log_formula(t)
        } else {
            Ok(-self.log_formula(1.0 / t)?)
        }
    }

    /// h(T) for T > 0.
    pub fn eval(&self, t: f64) -> Result<f64> {
        Ok(self.log_eval(t)?.exp())
    }

    /// The unique T > 0 with h(T) = v. Closed form where the family allows,
    /// monotone bisection otherwise.
    pub fn invert(&self, v: f64) -> Result<f64> {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!(
                "weight value must be positive, got {v}"
            )));
        }
        if v < 1.0 {
            return Ok(1.0 / self.invert(1.0 / v)?);
        }
        match &self.family {
            Family::Power { rho } => Ok(v.powf(1.0 / rho)),
            Family::PowerLog {
                onset, patch_slope, ..
            } => {
                let at_onset = patch_slope * onset.ln();
                if v.ln() <= at_onset {
                    Ok(v.powf(1.0 / patch_slope))
                } else {
                    bisect_log_increasing(|t| self.log_formula(t), v.ln(), *onset)
                }
            }
            Family::PiecewiseLinearLog(curve) => Ok(curve.gamma_inv(v.ln()).exp()),
            Family::Table { nodes } => {
                let last = nodes.last().unwrap();
                if v > last.1 * (1.0 + 1e-12) {
                    return Err(Error::Range(format!(
                        "table inversion at v = {v} beyond last node value {}",
                        last.1
                    )));
                }
                let v = v.min(last.1);
                let idx = nodes.partition_point(|n| n.1 < v).clamp(1, nodes.len() - 1);
                let (t0, v0) = nodes[idx - 1];
                let (t1, v1) = nodes[idx];
                Ok(t0 + (t1 - t0) * (v - v0) / (v1 - v0))
            }
        }
    }

    pub fn is_power(&self) -> Option<f64> {
        match &self.family {
            Family::Power { rho } => Some(*rho),
            _ => None,
        }
    }

    pub fn table_nodes(&self) -> Option<&[(f64, f64)]> {
        match &self.family {
            Family::Table { nodes } => Some(nodes),
            _ => None,
        }
    }
}

/// Bisection for ln h(t) = target with h increasing; bracket [lo, ∞).
fn bisect_log_increasing(log_f: impl Fn(f64) -> Result<f64>, target: f64, lo: f64) -> Result<f64> {
    let mut lo = lo;
    let mut hi = lo.max(1.0) * 2.0;
    let mut guard = 0;
    while log_f(hi)? < target {
        hi *= 4.0;
        guard += 1;
        if guard > 300 {
            return Err(Error::Domain("bisection bracket not found".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let width = hi - lo;
        if width <= TAU_INV * mid.max(1.0) || mid <= lo || mid >= hi {
            break;
        }
        if log_f(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

// ---------------------------------------------------------------------------
// Quasimultiplicativity
// ---------------------------------------------------------------------------

/// A range certificate: for k in [k_lo, k_hi],
/// c1 h(M^k) <= h(M^{k+1}) <= c2 h(M^k). Increasing functions have
/// 1 < c1 <= c2, decreasing ones c1 <= c2 < 1. k1 and k2 are the
/// growth-envelope exponents log_M(c1), log_M(c2).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuasiMultCertificate {
    pub base: f64,
    pub c1: f64,
    pub c2: f64,
    pub k_lo: i64,
    pub k_hi: i64,
    pub k1: f64,
    pub k2: f64,
    pub increasing: bool,
}

impl QuasiMultCertificate {
    /// T-range over which the ratio bound was verified: [M^k_lo, M^{k_hi+1}].
    pub fn certified_range(&self) -> (f64, f64) {
        (
            self.base.powi(self.k_lo as i32),
            self.base.powi(self.k_hi as i32 + 1),
        )
    }

    pub fn contains(&self, t: f64) -> bool {
        let (lo, hi) = self.certified_range();
        t >= lo * (1.0 - 1e-12) && t <= hi * (1.0 + 1e-12)
    }
}

/// Certify from a log-evaluator (ln h). Works for any monotone function;
/// used directly by the closure tests of the constructor algebra.
pub fn certify_log_fn(
    log_f: impl Fn(f64) -> Result<f64>,
    base: f64,
    k_lo: i64,
    k_hi: i64,
) -> Result<QuasiMultCertificate> {
    if !(base > 1.0) {
        return Err(Error::Domain("certificate base must exceed 1".into()));
    }
    if k_lo > k_hi {
        return Err(Error::Contract("empty exponent range".into()));
    }
    let mut min_d = f64::INFINITY;
    let mut max_d = f64::NEG_INFINITY;
    let mut prev = log_f(base.powi(k_lo as i32))?;
    for k in k_lo..=k_hi {
        let next = log_f(base.powi(k as i32 + 1))?;
        let d = next - prev;
        min_d = min_d.min(d);
        max_d = max_d.max(d);
        prev = next;
    }
    let increasing = if min_d > 0.0 {
        true
    } else if max_d < 0.0 {
        false
    } else {
        return Err(Error::NotQuasiMultiplicative(format!(
            "ratio range [{}, {}] touches 1",
            min_d.exp(),
            max_d.exp()
        )));
    };
    let ln_m = base.ln();
    Ok(QuasiMultCertificate {
        base,
        c1: min_d.exp(),
        c2: max_d.exp(),
        k_lo,
        k_hi,
        k1: min_d / ln_m,
        k2: max_d / ln_m,
        increasing,
    })
}

/// Tightest (c1, c2) for h over the given exponent range at base M.
pub fn certify_quasimultiplicative(
    h: &WeightFunction,
    base: f64,
    k_lo: i64,
    k_hi: i64,
) -> Result<QuasiMultCertificate> {
    certify_log_fn(|t| h.log_eval(t), base, k_lo, k_hi)
}

/// Uniform constants for a finite collection: shared base required,
/// c1 = min over members, c2 = max, range = intersection of ranges.
pub fn uniform_certificate(certs: &[QuasiMultCertificate]) -> Result<QuasiMultCertificate> {
    let first = certs
        .first()
        .ok_or_else(|| Error::Contract("empty certificate collection".into()))?;
    let mut out = first.clone();
    for c in &certs[1..] {
        if (c.base - first.base).abs() > 1e-12 || c.increasing != first.increasing {
            return Err(Error::Contract(
                "uniform certificate needs a shared base and direction".into(),
            ));
        }
        out.c1 = out.c1.min(c.c1);
        out.c2 = out.c2.max(c.c2);
        out.k_lo = out.k_lo.max(c.k_lo);
        out.k_hi = out.k_hi.min(c.k_hi);
    }
    if out.k_lo > out.k_hi {
        return Err(Error::Range("certificate ranges do not overlap".into()));
    }
    out.k1 = out.c1.ln() / out.base.ln();
    out.k2 = out.c2.ln() / out.base.ln();
    Ok(out)
}

/// Piecewise-linear interpolation of h at the powers of the certificate
/// base. The node range always includes T = 1 so the result is a valid
/// weight function; evaluation beyond the node range errors.
pub fn hat_linearize(h: &WeightFunction, cert: &QuasiMultCertificate) -> Result<WeightFunction> {
    let k_from = cert.k_lo.min(0);
    let k_to = cert.k_hi + 1;
    let mut nodes = Vec::with_capacity((k_to - k_from + 1) as usize);
    for k in k_from..=k_to {
        let t = cert.base.powi(k as i32);
        nodes.push((t, h.eval(t)?));
    }
    WeightFunction::table(nodes)
}

// ---------------------------------------------------------------------------
// Weighted quasinorms
// ---------------------------------------------------------------------------

/// |x|_w = max_i w_i^{-1}(|x_i|); zero coordinates contribute zero.
pub fn weighted_norm(x: &[f64], w: &[WeightFunction]) -> Result<f64> {
    if x.len() != w.len() {
        return Err(Error::Contract(format!(
            "vector length {} does not match weight tuple length {}",
            x.len(),
            w.len()
        )));
    }
    let mut out = 0.0f64;
    for (xi, wi) in x.iter().zip(w) {
        let a = xi.abs();
        if a == 0.0 {
            continue;
        }
        out = out.max(wi.invert(a)?);
    }
    Ok(out)
}

/// ||x||_w: weighted distance to the nearest integer vector.
pub fn nearest_integer_distance(x: &[f64], w: &[WeightFunction]) -> Result<f64> {
    let reduced: Vec<f64> = x.iter().map(|xi| xi - xi.round()).collect();
    weighted_norm(&reduced, w)
}

/// Scalar distance to the nearest integer.
pub fn int_dist(x: f64) -> f64 {
    (x - x.round()).abs()
}

// ---------------------------------------------------------------------------
// Weight systems
// ---------------------------------------------------------------------------

/// The tuples alpha (n functions) and beta (m functions) together with the
/// derived product functions and the critical Dirichlet function
/// g(T) = alpha^{-1}(1/beta(T)).
#[derive(Clone, Debug)]
pub struct WeightSystem {
    alpha: Vec<WeightFunction>,
    beta: Vec<WeightFunction>,
}

impl WeightSystem {
    pub fn new(alpha: Vec<WeightFunction>, beta: Vec<WeightFunction>) -> Result<Self> {
        if alpha.is_empty() || beta.is_empty() {
            return Err(Error::Config(
                "weight system needs at least one function on each side".into(),
            ));
        }
        Ok(WeightSystem { alpha, beta })
    }

    /// Power weights T^{rho_i}, T^{sigma_j}.
    pub fn power_weights(rho: &[f64], sigma: &[f64]) -> Result<Self> {
        let alpha = rho
            .iter()
            .map(|r| WeightFunction::power(*r))
            .collect::<Result<Vec<_>>>()?;
        let beta = sigma
            .iter()
            .map(|s| WeightFunction::power(*s))
            .collect::<Result<Vec<_>>>()?;
        WeightSystem::new(alpha, beta)
    }

    /// The unweighted classical system: rho_i = 1/n, sigma_j = 1/m.
    pub fn equal_power_weights(n: usize, m: usize) -> Result<Self> {
        WeightSystem::power_weights(&vec![1.0 / n as f64; n], &vec![1.0 / m as f64; m])
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }
    pub fn m(&self) -> usize {
        self.beta.len()
    }
    pub fn d(&self) -> usize {
        self.n() + self.m()
    }
    pub fn alpha(&self) -> &[WeightFunction] {
        &self.alpha
    }
    pub fn beta(&self) -> &[WeightFunction] {
        &self.beta
    }

    /// The (beta, alpha) system.
    pub fn swap(&self) -> WeightSystem {
        WeightSystem {
            alpha: self.beta.clone(),
            beta: self.alpha.clone(),
        }
    }

    pub fn alpha_product_log(&self, t: f64) -> Result<f64> {
        self.alpha.iter().map(|a| a.log_eval(t)).sum()
    }

    pub fn beta_product_log(&self, t: f64) -> Result<f64> {
        self.beta.iter().map(|b| b.log_eval(t)).sum()
    }

    /// Sum of exponents when every alpha is a pure power.
    pub fn alpha_power_sum(&self) -> Option<f64> {
        self.alpha.iter().map(|a| a.is_power()).sum()
    }

    pub fn beta_power_sum(&self) -> Option<f64> {
        self.beta.iter().map(|b| b.is_power()).sum()
    }

    /// Inverse of the product function alpha(T) = prod alpha_i(T), v > 0.
    pub fn invert_alpha_product(&self, v: f64) -> Result<f64> {
        invert_product_log(|t| self.alpha_product_log(t), self.alpha_power_sum(), v)
    }

    /// Inverse of beta(T) = prod beta_j(T), v > 0.
    pub fn invert_beta_product(&self, v: f64) -> Result<f64> {
        invert_product_log(|t| self.beta_product_log(t), self.beta_power_sum(), v)
    }

    /// The critical Dirichlet function g(T) = alpha^{-1}(1/beta(T)).
    /// Collapses to the closed power form when every component is a power.
    pub fn dirichlet_exponent(&self) -> ApproxFunction {
        if let (Some(sa), Some(sb)) = (self.alpha_power_sum(), self.beta_power_sum()) {
            return ApproxFunction::scaled_power(1.0, sb / sa).unwrap();
        }
        ApproxFunction {
            repr: ARepr::DirichletExponent(Box::new(self.clone())),
        }
    }
}

fn invert_product_log(
    log_f: impl Fn(f64) -> Result<f64>,
    power_sum: Option<f64>,
    v: f64,
) -> Result<f64> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Domain(format!(
            "product inverse needs v > 0, got {v}"
        )));
    }
    if let Some(s) = power_sum {
        return Ok(v.powf(1.0 / s));
    }
    // the product of weight functions is itself reflective
    let (target, reflect) = if v < 1.0 { (1.0 / v, true) } else { (v, false) };
    let t = bisect_log_increasing(log_f, target.ln(), 1.0)?;
    Ok(if reflect { 1.0 / t } else { t })
}

// ---------------------------------------------------------------------------
// Approximating functions (the decreasing side)
// ---------------------------------------------------------------------------

/// Interpolation rule for tabulated approximating functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interp {
    /// Right-continuous step: the value of the last node at or before T.
    Step,
    /// Piecewise-linear between nodes.
    Linear,
}

#[derive(Clone, Debug)]
enum ARepr {
    /// coeff * T^{-exponent}
    ScaledPower { coeff: f64, exponent: f64 },
    /// coeff * T^{-exponent} (ln T)^{log_exponent} for T >= onset; the
    /// tangent power patch_coeff * T^{-patch_slope} below the onset.
    PowerLogDecay {
        coeff: f64,
        exponent: f64,
        log_exponent: f64,
        onset: f64,
        patch_slope: f64,
        patch_coeff: f64,
    },
    /// Nonincreasing node list on [first, last]; evaluation outside the node
    /// range is a range error.
    Table {
        nodes: Vec<(f64, f64)>,
        interp: Interp,
    },
    /// g(T) = alpha^{-1}(1/beta(T)) for a weight system.
    DirichletExponent(Box<WeightSystem>),
    /// g(T) = 1/f^{-1}(1/T) for a strictly decreasing inner f.
    Dual(Box<ApproxFunction>),
    /// mul * g(arg_mul * T).
    Scaled {
        mul: f64,
        arg_mul: f64,
        inner: Box<ApproxFunction>,
    },
}

/// A positive nonincreasing function on [1, ∞), the approximation target of
/// both the uniform (Dirichlet) and asymptotic problems.
#[derive(Clone, Debug)]
pub struct ApproxFunction {
    repr: ARepr,
}

impl ApproxFunction {
    /// b * T^{-a}.
    pub fn scaled_power(coeff: f64, exponent: f64) -> Result<Self> {
        if coeff <= 0.0 || exponent <= 0.0 {
            return Err(Error::Config(
                "scaled power needs positive coefficient and exponent".into(),
            ));
        }
        Ok(ApproxFunction {
            repr: ARepr::ScaledPower { coeff, exponent },
        })
    }

    pub fn f1() -> Self {
        ApproxFunction::scaled_power(1.0, 1.0).unwrap()
    }

    /// coeff * T^{-exponent} (ln T)^{log_exponent}. The default onset is
    /// e^{(max(log_exponent, 0) + 1)/exponent}, past the critical point, and
    /// the function is extended below it by the tangent power so it is
    /// strictly decreasing on all of (0, ∞).
    pub fn power_log_decay(
        coeff: f64,
        exponent: f64,
        log_exponent: f64,
        onset: Option<f64>,
    ) -> Result<Self> {
        if coeff <= 0.0 || exponent <= 0.0 {
            return Err(Error::Config(
                "power-log decay needs positive coefficient and exponent".into(),
            ));
        }
        let default_onset = ((log_exponent.max(0.0) + 1.0) / exponent).exp();
        let onset = onset.unwrap_or(default_onset);
        // slope of -ln f against ln T at the onset
        let patch_slope = exponent - log_exponent / onset.ln();
        if !(onset > 1.0) || patch_slope <= 0.0 {
            return Err(Error::Config(
                "power-log decay onset must lie beyond the critical point".into(),
            ));
        }
        let f_onset = coeff * onset.powf(-exponent) * onset.ln().powf(log_exponent);
        let patch_coeff = f_onset * onset.powf(patch_slope);
        Ok(ApproxFunction {
            repr: ARepr::PowerLogDecay {
                coeff,
                exponent,
                log_exponent,
                onset,
                patch_slope,
                patch_coeff,
            },
        })
    }

    /// Nonincreasing positive tabulation.
    pub fn table(nodes: Vec<(f64, f64)>, interp: Interp) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Config("table needs at least two nodes".into()));
        }
        for w in nodes.windows(2) {
            if !(w[1].0 > w[0].0) || w[1].1 > w[0].1 {
                return Err(Error::Config(
                    "table nodes must increase in T and not increase in value".into(),
                ));
            }
        }
        if nodes.iter().any(|n| n.1 <= 0.0) {
            return Err(Error::Config("table values must be positive".into()));
        }
        Ok(ApproxFunction {
            repr: ARepr::Table { nodes, interp },
        })
    }

    /// b * g(T).
    pub fn scaled(&self, mul: f64) -> Result<Self> {
        if mul <= 0.0 {
            return Err(Error::Config("scale must be positive".into()));
        }
        Ok(match &self.repr {
            ARepr::ScaledPower { coeff, exponent } => ApproxFunction {
                repr: ARepr::ScaledPower {
                    coeff: coeff * mul,
                    exponent: *exponent,
                },
            },
            _ => ApproxFunction {
                repr: ARepr::Scaled {
                    mul,
                    arg_mul: 1.0,
                    inner: Box::new(self.clone()),
                },
            },
        })
    }

    /// The Dirichlet-improvement dilation eps * g(T/eps).
    pub fn dilated(&self, eps: f64) -> Result<Self> {
        if eps <= 0.0 {
            return Err(Error::Config("dilation must be positive".into()));
        }
        Ok(ApproxFunction {
            repr: ARepr::Scaled {
                mul: eps,
                arg_mul: 1.0 / eps,
                inner: Box::new(self.clone()),
            },
        })
    }

    pub fn is_strictly_decreasing(&self) -> bool {
        match &self.repr {
            ARepr::ScaledPower { .. } | ARepr::PowerLogDecay { .. } => true,
            ARepr::Table { nodes, interp } => {
                *interp == Interp::Linear && nodes.windows(2).all(|w| w[1].1 < w[0].1)
            }
            ARepr::DirichletExponent(_) => true,
            ARepr::Dual(inner) => inner.is_strictly_decreasing(),
            ARepr::Scaled { inner, .. } => inner.is_strictly_decreasing(),
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!(
                "approximating function argument must be positive, got {t}"
            )));
        }
        match &self.repr {
            ARepr::ScaledPower { coeff, exponent } => Ok(coeff * t.powf(-exponent)),
            ARepr::PowerLogDecay {
                coeff,
                exponent,
                log_exponent,
                onset,
                patch_slope,
                patch_coeff,
            } => {
                if t >= *onset {
                    Ok(coeff * t.powf(-exponent) * t.ln().powf(*log_exponent))
                } else {
                    Ok(patch_coeff * t.powf(-patch_slope))
                }
            }
            ARepr::Table { nodes, interp } => {
                let first = nodes[0];
                let last = *nodes.last().unwrap();
                if t < first.0 * (1.0 - 1e-12) || t > last.0 * (1.0 + 1e-12) {
                    return Err(Error::Range(format!(
                        "table evaluation at T = {t} outside [{}, {}]",
                        first.0, last.0
                    )));
                }
                let t = t.clamp(first.0, last.0);
                match interp {
                    Interp::Step => {
                        let idx = nodes.partition_point(|n| n.0 <= t);
                        Ok(nodes[idx.max(1) - 1].1)
                    }
                    Interp::Linear => {
                        let idx = nodes.partition_point(|n| n.0 < t).clamp(1, nodes.len() - 1);
                        let (t0, v0) = nodes[idx - 1];
                        let (t1, v1) = nodes[idx];
                        Ok(v0 + (v1 - v0) * (t - t0) / (t1 - t0))
                    }
                }
            }
            ARepr::DirichletExponent(ws) => {
                // g(T) = alpha^{-1}(1/beta(T)) = 1/alpha^{-1}(beta(T))
                if let Some(sa) = ws.alpha_power_sum() {
                    let log_beta = ws.beta_product_log(t)?;
                    return Ok((-log_beta / sa).exp());
                }
                let beta = ws.beta_product_log(t)?.exp();
                Ok(1.0 / ws.invert_alpha_product(beta)?)
            }
            ARepr::Dual(f) => {
                // generalized inverse of f over [1, ∞), clamped at 1
                let x = f.inverse_decreasing(1.0 / t)?.max(1.0);
                Ok(1.0 / x)
            }
            ARepr::Scaled {
                mul,
                arg_mul,
                inner,
            } => Ok(mul * inner.eval(arg_mul * t)?),
        }
    }

    /// Solve g(T) = v for decreasing g over the natural domain of the
    /// representation; for tabulations the result is clamped to the node
    /// range. Callers needing the generalized inverse over [1, ∞) clamp
    /// themselves.
    pub fn inverse_decreasing(&self, v: f64) -> Result<f64> {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("inverse needs v > 0, got {v}")));
        }
        match &self.repr {
            ARepr::ScaledPower { coeff, exponent } => Ok((coeff / v).powf(1.0 / exponent)),
            ARepr::PowerLogDecay {
                coeff,
                exponent,
                log_exponent,
                onset,
                patch_slope,
                patch_coeff,
            } => {
                let f_onset = patch_coeff * onset.powf(-patch_slope);
                if v >= f_onset {
                    return Ok((patch_coeff / v).powf(1.0 / patch_slope));
                }
                // Newton on x = ln T for ln c - e x + q ln x = ln v, bracket-safeguarded
                let (ln_c, e, q) = (coeff.ln(), *exponent, *log_exponent);
                let logf = |x: f64| ln_c - e * x + q * x.ln();
                let target = v.ln();
                let mut lo = onset.ln();
                let mut hi = lo * 2.0 + 2.0;
                let mut guard = 0;
                while logf(hi) > target {
                    hi *= 2.0;
                    guard += 1;
                    if guard > 200 {
                        return Err(Error::Domain("inverse bracket not found".into()));
                    }
                }
                let mut x = 0.5 * (lo + hi);
                for _ in 0..100 {
                    let fx = logf(x) - target;
                    if fx > 0.0 {
                        lo = x;
                    } else {
                        hi = x;
                    }
                    let d = -e + q / x;
                    let mut next = x - fx / d;
                    if !(next > lo && next < hi) {
                        next = 0.5 * (lo + hi);
                    }
                    if (next - x).abs() <= 1e-15 * x.abs().max(1.0) {
                        x = next;
                        break;
                    }
                    x = next;
                }
                Ok(x.exp())
            }
            ARepr::Table { nodes, interp } => {
                let first = nodes[0];
                let last = *nodes.last().unwrap();
                if v > first.1 {
                    return Ok(first.0);
                }
                if v <= last.1 {
                    return Ok(last.0);
                }
                match interp {
                    Interp::Step => {
                        // largest T with value >= v
                        let mut t = first.0;
                        for i in 0..nodes.len() {
                            if nodes[i].1 >= v {
                                t = if i + 1 < nodes.len() {
                                    nodes[i + 1].0
                                } else {
                                    last.0
                                };
                            }
                        }
                        Ok(t)
                    }
                    Interp::Linear => {
                        let idx = nodes
                            .partition_point(|n| n.1 >= v)
                            .clamp(1, nodes.len() - 1);
                        let (t0, v0) = nodes[idx - 1];
                        let (t1, v1) = nodes[idx];
                        if v1 == v0 {
                            return Ok(t1);
                        }
                        Ok(t0 + (t1 - t0) * (v - v0) / (v1 - v0))
                    }
                }
            }
            ARepr::DirichletExponent(ws) => {
                // g(T) = v  <=>  T = beta^{-1}(1/alpha(v))
                let log_alpha_v = ws.alpha_product_log(v)?;
                let target = (-log_alpha_v).exp();
                ws.invert_beta_product(target)
            }
            ARepr::Dual(f) => {
                // 1/f^{-1}(1/T) = v  <=>  T = 1/f(1/v)
                Ok(1.0 / f.eval(1.0 / v)?)
            }
            ARepr::Scaled {
                mul,
                arg_mul,
                inner,
            } => Ok(inner.inverse_decreasing(v / mul)? / arg_mul),
        }
    }

    /// The duality transform g(T) = 1/f^{-1}(1/T). Closed form for pure
    /// powers; a lazy inverse wrapper otherwise. Applying the transform
    /// twice recovers the original function within the inversion tolerance.
    pub fn duality_transform(&self) -> Result<ApproxFunction> {
        if !self.is_strictly_decreasing() {
            return Err(Error::Contract(
                "duality transform needs a strictly decreasing function; strictify first".into(),
            ));
        }
        match &self.repr {
            ARepr::ScaledPower { coeff, exponent } => {
                // f = b T^{-a}: f^{-1}(1/T) = (bT)^{1/a}, so g(T) = (bT)^{-1/a}
                ApproxFunction::scaled_power(coeff.powf(-1.0 / exponent), 1.0 / exponent)
            }
            _ => Ok(ApproxFunction {
                repr: ARepr::Dual(Box::new(self.clone())),
            }),
        }
    }

    pub fn table_nodes(&self) -> Option<(&[(f64, f64)], Interp)> {
        match &self.repr {
            ARepr::Table { nodes, interp } => Some((nodes, *interp)),
            _ => None,
        }
    }

    /// (coeff, exponent, log_exponent) of the asymptotic tail when the
    /// representation reduces to c T^{-a} (ln T)^{b}; used by the analytic
    /// series classifier.
    pub fn power_log_tail(&self) -> Option<(f64, f64, f64)> {
        match &self.repr {
            ARepr::ScaledPower { coeff, exponent } => Some((*coeff, *exponent, 0.0)),
            ARepr::PowerLogDecay {
                coeff,
                exponent,
                log_exponent,
                ..
            } => Some((*coeff, *exponent, *log_exponent)),
            ARepr::DirichletExponent(ws) => {
                let sa = ws.alpha_power_sum()?;
                let sb = ws.beta_power_sum()?;
                Some((1.0, sb / sa, 0.0))
            }
            ARepr::Dual(f) => {
                // tail of the dual of c T^{-a} (ln T)^b is T^{-1/a} up to
                // log factors; only the pure power case is exact here
                let (c, a, b) = f.power_log_tail()?;
                if b == 0.0 {
                    Some((c.powf(-1.0 / a), 1.0 / a, 0.0))
                } else {
                    None
                }
            }
            ARepr::Scaled {
                mul,
                arg_mul,
                inner,
            } => {
                let (c, a, b) = inner.power_log_tail()?;
                if b == 0.0 {
                    Some((mul * c * arg_mul.powf(-a), a, 0.0))
                } else if *arg_mul == 1.0 {
                    Some((mul * c, a, b))
                } else {
                    // scaling the argument only perturbs the log factor
                    Some((mul * c * arg_mul.powf(-a), a, b))
                }
            }
            ARepr::Table { .. } => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Regularization
// ---------------------------------------------------------------------------

/// The locally finite breakpoint set W = Z_+ ∪ ⋃_j beta_j^{-1}(Z_+)
/// intersected with [1, t_max], sorted and deduplicated.
pub fn breakpoint_set(beta: &[WeightFunction], t_max: f64) -> Result<Vec<f64>> {
    if !(t_max >= 1.0) {
        return Err(Error::Contract("empty window".into()));
    }
    let mut w: Vec<f64> = Vec::new();
    let mut l = 1u64;
    while (l as f64) <= t_max {
        w.push(l as f64);
        l += 1;
        if l > 50_000_000 {
            return Err(Error::Budget("breakpoint set too large".into()));
        }
    }
    for b in beta {
        let v_max = b.eval(t_max)?;
        if v_max > 5e7 {
            return Err(Error::Budget(format!(
                "breakpoint set too large: beta(t_max) = {v_max:.3e}"
            )));
        }
        let mut k = 1u64;
        while (k as f64) <= v_max {
            let t = b.invert(k as f64)?;
            if (1.0..=t_max).contains(&t) {
                w.push(t);
            }
            k += 1;
        }
    }
    w.sort_by(|a, b| a.partial_cmp(b).unwrap());
    w.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(1.0));
    Ok(w)
}

/// Continuous piecewise-linear surrogate equal to g on the breakpoint set W.
/// Solvability verdicts on windows ending at a breakpoint are invariant
/// under this replacement.
pub fn regularize_continuity(
    g: &ApproxFunction,
    beta: &[WeightFunction],
    t_max: f64,
) -> Result<ApproxFunction> {
    let w = breakpoint_set(beta, t_max)?;
    if w.len() < 2 {
        return Err(Error::Contract("window too small to regularize".into()));
    }
    let nodes = w
        .iter()
        .map(|t| Ok((*t, g.eval(*t)?)))
        .collect::<Result<Vec<_>>>()?;
    ApproxFunction::table(nodes, Interp::Linear)
}

/// Strictly decreasing envelopes h_minus <= h <= h_plus built from the
/// integer samples of h by shifting nodes one step and splitting plateaus at
/// midpoint values. Both envelopes are tabulated on [1, floor(t_max)].
pub fn strictify(h: &ApproxFunction, t_max: f64) -> Result<(ApproxFunction, ApproxFunction)> {
    let n = t_max.floor() as i64;
    if n < 3 {
        return Err(Error::Contract("strictify window must reach T = 3".into()));
    }
    let n = n as usize;
    // v[k] = h(k) for k = 1..=n+1
    let mut v = vec![0.0f64; n + 2];
    for (k, slot) in v.iter_mut().enumerate().take(n + 2).skip(1) {
        *slot = h.eval(k as f64)?;
    }

    let mut minus: Vec<f64> = (1..=n).map(|t| v[t + 1]).collect();
    let mut plus: Vec<f64> = (1..=n)
        .map(|t| if t == 1 { 0.0 } else { v[t - 1] })
        .collect();
    // virtual predecessor keeps the plus envelope strict at the window edge
    plus[0] = if v[1] > v[2] {
        v[1] + (v[1] - v[2])
    } else {
        1.5 * v[1]
    };

    split_plateaus_minus(&mut minus);
    split_plateaus_plus(&mut plus);

    let to_table = |vals: &[f64]| -> Result<ApproxFunction> {
        let nodes: Vec<(f64, f64)> = vals
            .iter()
            .enumerate()
            .map(|(i, val)| ((i + 1) as f64, *val))
            .collect();
        ApproxFunction::table(nodes, Interp::Linear)
    };
    let h_minus = to_table(&minus)?;
    let h_plus = to_table(&plus)?;
    if !h_minus.is_strictly_decreasing() || !h_plus.is_strictly_decreasing() {
        return Err(Error::Contract(
            "strictify failed to produce strict envelopes".into(),
        ));
    }
    Ok((h_minus, h_plus))
}

/// Runs of equal values in the minus envelope become strictly decreasing by
/// lowering the run's last node to the midpoint of the drop that follows it
/// and relinearizing the interior.
fn split_plateaus_minus(vals: &mut [f64]) {
    let n = vals.len();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && vals[j + 1] == vals[i] {
            j += 1;
        }
        if j > i {
            let u = vals[i];
            let next = if j + 1 < n { vals[j + 1] } else { u / 2.0 };
            let mid = 0.5 * (u + next);
            vals[j] = mid;
            let run = (j - i) as f64;
            for (step, val) in vals.iter_mut().enumerate().take(j).skip(i + 1) {
                *val = u + (mid - u) * ((step - i) as f64) / run;
            }
        }
        i = j + 1;
    }
}

/// Same for the plus envelope: the run's first node rises to the midpoint of
/// the drop preceding it.
fn split_plateaus_plus(vals: &mut [f64]) {
    let n = vals.len();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && vals[j + 1] == vals[i] {
            j += 1;
        }
        if j > i {
            let u = vals[i];
            let prev = if i > 0 { vals[i - 1] } else { 2.0 * u };
            let mid = 0.5 * (prev + u);
            vals[i] = mid;
            let run = (j - i) as f64;
            for (step, val) in vals.iter_mut().enumerate().take(j).skip(i + 1) {
                *val = mid + (u - mid) * ((step - i) as f64) / run;
            }
        }
        i = j + 1;
    }
}

// ---------------------------------------------------------------------------
// The changing-weights example
// ---------------------------------------------------------------------------

/// The oscillating log-scale curves gamma_1, gamma_2 with slopes 3/4 and 1/4
/// trading places at the powers of 5; gamma_1 + gamma_2 = t identically, and
/// the pair sweeps between the weight profiles (1/3, 2/3) and (2/3, 1/3).
pub mod changing_weights {
    use super::*;

    pub fn gamma1_curve() -> LogLogCurve {
        LogLogCurve {
            base: 5.0,
            slopes: vec![0.75, 0.25],
            anchor: 1.0 / 3.0,
        }
    }

    pub fn gamma2_curve() -> LogLogCurve {
        LogLogCurve {
            base: 5.0,
            slopes: vec![0.25, 0.75],
            anchor: 2.0 / 3.0,
        }
    }

    pub fn beta1() -> WeightFunction {
        let c = gamma1_curve();
        WeightFunction::piecewise_linear_log(c.base, c.slopes, c.anchor).unwrap()
    }

    pub fn beta2() -> WeightFunction {
        let c = gamma2_curve();
        WeightFunction::piecewise_linear_log(c.base, c.slopes, c.anchor).unwrap()
    }

    /// One linear form in two variables: alpha = (T), beta = (beta1, beta2).
    pub fn system() -> WeightSystem {
        WeightSystem::new(
            vec![WeightFunction::power(1.0).unwrap()],
            vec![beta1(), beta2()],
        )
        .unwrap()
    }

    /// Rows (t, gamma1, gamma2, t/3, 2t/3) on a uniform grid over [0, t_max].
    pub fn emit_csv(t_max: f64, rows: usize) -> Result<String> {
        if !(t_max >= 1.0) {
            return Err(Error::Contract("t_max must be at least 1".into()));
        }
        let g1 = gamma1_curve();
        let g2 = gamma2_curve();
        let mut out = String::from("t,gamma1,gamma2,phi1,phi2\n");
        let rows = rows.max(2);
        for i in 0..=rows {
            let t = t_max * (i as f64) / (rows as f64);
            let a = g1.gamma(t);
            let b = g2.gamma(t);
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                t,
                a,
                b,
                t / 3.0,
                2.0 * t / 3.0
            ));
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// JSON configuration
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WeightConfig {
    Power {
        rho: f64,
    },
    PowerLog {
        a: Vec<f64>,
        onset: f64,
    },
    Plog {
        base: f64,
        slopes: Vec<f64>,
        anchor: f64,
    },
    Table {
        nodes: Vec<(f64, f64)>,
    },
}

impl WeightConfig {
    pub fn build(&self) -> Result<WeightFunction> {
        match self {
            WeightConfig::Power { rho } => WeightFunction::power(*rho),
            WeightConfig::PowerLog { a, onset } => WeightFunction::power_log(a.clone(), *onset),
            WeightConfig::Plog {
                base,
                slopes,
                anchor,
            } => WeightFunction::piecewise_linear_log(*base, slopes.clone(), *anchor),
            WeightConfig::Table { nodes } => WeightFunction::table(nodes.clone()),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightSystemConfig {
    pub alpha: Vec<WeightConfig>,
    pub beta: Vec<WeightConfig>,
}

impl WeightSystemConfig {
    pub fn build(&self) -> Result<WeightSystem> {
        WeightSystem::new(
            self.alpha
                .iter()
                .map(|c| c.build())
                .collect::<Result<Vec<_>>>()?,
            self.beta
                .iter()
                .map(|c| c.build())
                .collect::<Result<Vec<_>>>()?,
        )
    }
}

fn default_one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ApproxConfig {
    /// coeff * T^{-exponent}
    Power {
        #[serde(default = "default_one")]
        coeff: f64,
        exponent: f64,
    },
    /// coeff * T^{-exponent} (ln T)^{log_exponent}
    PowerLogDecay {
        #[serde(default = "default_one")]
        coeff: f64,
        exponent: f64,
        log_exponent: f64,
        #[serde(default)]
        onset: Option<f64>,
    },
    Table {
        nodes: Vec<(f64, f64)>,
        interp: Interp,
    },
    /// mul * g_{alpha,beta} of the ambient weight system.
    Dirichlet {
        #[serde(default = "default_one")]
        mul: f64,
    },
}

impl ApproxConfig {
    pub fn build(&self, ws: &WeightSystem) -> Result<ApproxFunction> {
        match self {
            ApproxConfig::Power { coeff, exponent } => {
                ApproxFunction::scaled_power(*coeff, *exponent)
            }
            ApproxConfig::PowerLogDecay {
                coeff,
                exponent,
                log_exponent,
                onset,
            } => ApproxFunction::power_log_decay(*coeff, *exponent, *log_exponent, *onset),
            ApproxConfig::Table { nodes, interp } => ApproxFunction::table(nodes.clone(), *interp),
            ApproxConfig::Dirichlet { mul } => ws.dirichlet_exponent().scaled(*mul),
        }
    }
}
