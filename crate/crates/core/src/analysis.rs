//! Closed-form gain laws and limits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::inverse_checked;
use crate::netcore::{NetworkKind, NetworkMatrix};
use crate::scalar::{complexify, Real};

/// `Gamma(1.5)^4 = pi^2 / 16`.
pub const GAMMA_1_5_POW4: f64 = std::f64::consts::PI * std::f64::consts::PI / 16.0;

/// A closed-form value with the inputs it was evaluated at.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainReport {
    pub formula: &'static str,
    pub inputs: BTreeMap<String, f64>,
    pub value: f64,
}

impl GainReport {
    pub fn new(formula: &'static str, inputs: &[(&str, f64)], value: f64) -> Self {
        Self { formula, inputs: inputs.iter().map(|(k, v)| (k.to_string(), *v)).collect(), value }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingLaws {
    /// Mean single-connected gain `M + (pi^2/16) M (M - 1)`.
    pub dris: f64,
    /// Mean fully-connected gain `M^2`.
    pub bdris: f64,
    pub ratio: f64,
}

/// Mean SISO gains under i.i.d. unit-variance Rayleigh fading.
pub fn scaling_laws(m: usize) -> ScalingLaws {
    let mf = m as f64;
    let dris = mf + GAMMA_1_5_POW4 * mf * (mf - 1.0);
    let bdris = mf * mf;
    ScalingLaws { dris, bdris, ratio: if dris > 0.0 { bdris / dris } else { 1.0 } }
}

/// `Gamma(x + 1/2) / Gamma(x)` through log-gamma.
fn half_gamma_ratio(x: f64) -> f64 {
    (ln_gamma(x + 0.5) - ln_gamma(x)).exp()
}

/// Which denominator to use in [`group_gain_ratio`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupDenominator {
    /// `1 + (M - 1) Gamma^4(1.5)`, the single-connected gain per element.
    #[default]
    Corrected,
    /// `1 + (gs - 1) Gamma^4(1.5)`.
    Printed,
}

/// Mean gain of a group-connected surface per element:
/// `gs + ((M - gs)/gs^2) (Gamma(gs + 1/2)/Gamma(gs))^4`.
pub fn group_gain_per_element(m: usize, group_size: usize) -> Result<f64> {
    if m == 0 || group_size == 0 || m % group_size != 0 {
        return Err(Error::InvalidParams(format!("group size {group_size} does not divide {m}")));
    }
    let g = group_size as f64;
    Ok(g + (m as f64 - g) / (g * g) * half_gamma_ratio(g).powi(4))
}

/// Group-connected over single-connected mean gain.
pub fn group_gain_ratio(m: usize, group_size: usize, denominator: GroupDenominator) -> Result<f64> {
    let num = group_gain_per_element(m, group_size)?;
    let n = match denominator {
        GroupDenominator::Corrected => m,
        GroupDenominator::Printed => group_size,
    };
    Ok(num / (1.0 + (n as f64 - 1.0) * GAMMA_1_5_POW4))
}

/// Large-`M` limit of [`group_gain_ratio`]: `(1/gs^2) (Gamma(gs + 1/2)/(Gamma(gs) Gamma(1.5)))^4`.
pub fn group_gain_limit(group_size: usize) -> f64 {
    let g = group_size as f64;
    half_gamma_ratio(g).powi(4) / (g * g * GAMMA_1_5_POW4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OptimalComplexity {
    pub miso: usize,
    pub mu_mimo: usize,
}

/// Fewest admittance components that keep the optimum: `2M - 1` for MISO and
/// `k (2M - 2k + 1)` with `k = min(D, floor(M/2))`, `D = min(sum N_k, N)`,
/// for multi-user MIMO.
pub fn optimal_complexity(m: usize, n_tx: usize, user_antennas: &[usize]) -> OptimalComplexity {
    let d = user_antennas.iter().sum::<usize>().min(n_tx);
    let k = d.min(m / 2);
    OptimalComplexity { miso: (2 * m).saturating_sub(1), mu_mimo: k * (2 * m - 2 * k + 1) }
}

/// Mean-gain factor of mutual coupling for fully/tree-connected surfaces:
/// `Z^2 (tr R^2 + tr^2 R + sqrt(pi tr R^2) tr R) / (M + M^2 + sqrt(pi M) M)`
/// with `R = Re{Z_II}^{-1}` and `Z` the common diagonal resistance. `R` is
/// formed from `Re{Z_II} / Z`, so an uncoupled array gives exactly 1.
pub fn mc_gain<T: Real>(z_ii: &NetworkMatrix<T>) -> Result<f64> {
    let z = match z_ii.kind() {
        NetworkKind::Impedance => z_ii.clone(),
        _ => z_ii.convert(NetworkKind::Impedance)?,
    };
    let v = z.values();
    let m = v.nrows();
    if m == 0 {
        return Err(Error::DimensionMismatch("empty coupling matrix".into()));
    }
    let d = v[(0, 0)].re;
    for k in 1..m {
        if (v[(k, k)].re - d).abs() > T::lit(1e-9) * d.abs() {
            return Err(Error::InvalidParams("diagonal resistances must be equal".into()));
        }
    }
    if !(d > T::zero()) {
        return Err(Error::SingularRealPart);
    }
    let normalized = v.map(|x| x.re / d);
    let r = inverse_checked(&complexify(&normalized), "Re{Z_II}").map_err(|_| Error::SingularRealPart)?;
    let r = r.map(|x| x.re.as_f64());
    let tr = r.trace();
    let tr2 = (&r * &r).trace();
    let mf = m as f64;
    let pi = std::f64::consts::PI;
    let num = tr2 + tr * tr + (pi * tr2).sqrt() * tr;
    let den = mf + mf * mf + (pi * mf).sqrt() * mf;
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

/// Gain bounds of a distributed over a localized surface. `d_r`, `d_t` are
/// the localized distances and `d_rvec`, `d_tvec` the per-element distances;
/// `lower = upper / M^2` for `a > 0`, and both are 1 for `a = 0`.
pub fn distributed_bounds(d_r: f64, d_t: f64, d_rvec: &[f64], d_tvec: &[f64], a: f64) -> Result<Bounds> {
    if d_rvec.is_empty() || d_rvec.len() != d_tvec.len() {
        return Err(Error::InvalidGeometry(format!("{} and {} element distances", d_rvec.len(), d_tvec.len())));
    }
    let bad = |x: f64| !(x > 0.0) || !x.is_finite();
    if bad(d_r) || bad(d_t) || d_rvec.iter().chain(d_tvec).any(|&x| bad(x)) {
        return Err(Error::InvalidGeometry("distances must be positive and finite".into()));
    }
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::InvalidGeometry(format!("pathloss exponent {a} must be >= 0")));
    }
    if a == 0.0 {
        return Ok(Bounds { lower: 1.0, upper: 1.0 });
    }
    let min_r = d_rvec.iter().copied().fold(f64::INFINITY, f64::min);
    let min_t = d_tvec.iter().copied().fold(f64::INFINITY, f64::min);
    let m = d_rvec.len() as f64;
    let upper = (d_r * d_t / (min_r * min_t)).powf(a);
    Ok(Bounds { lower: upper / (m * m), upper })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolFading {
    Rayleigh,
    Los,
}

/// Large-`M` gain ratio of a dual-polarized surface with cross-polar
/// discrimination inverse `chi`.
pub fn dual_pol_limit(chi: f64, fading: PolFading, same_polarization: bool) -> Result<f64> {
    if !(chi > 0.0 && chi <= 1.0) {
        return Err(Error::OutOfRange(format!("chi must lie in (0, 1], got {chi}")));
    }
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    if same_polarization {
        return Ok(16.0 / pi2);
    }
    Ok(match fading {
        PolFading::Rayleigh => 4.0 * (1.0 + chi).powi(2) / (pi2 * chi),
        PolFading::Los => (1.0 + chi).powi(2) / (4.0 * chi),
    })
}
