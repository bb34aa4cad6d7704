//! Channel generation and evaluation.
//!
//! [`ChannelSet`] holds the transmitter-receiver, surface-receiver and
//! transmitter-surface blocks. Without a coupling block they are the usual
//! cascaded-model channels; with one they are the scattering, impedance or
//! admittance blocks of the coupled model, matching the coupling block's kind.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json::MatrixDoc;
use crate::linalg::inverse_checked;
use crate::netcore::{NetworkKind, NetworkMatrix, DEFAULT_Z0};
use crate::random::{random_complex, rng};
use crate::scalar::{c, identity, CMatrix, Real, C};

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet<T: Real> {
    /// `N_r x N`.
    pub h_rt: CMatrix<T>,
    /// `N_r x M`.
    pub h_ri: CMatrix<T>,
    /// `M x N`.
    pub h_it: CMatrix<T>,
    /// `M x M` coupling block (`S_II`, `Z_II` or `Y_II`).
    pub coupling: Option<NetworkMatrix<T>>,
    pub z0: T,
}

impl<T: Real> ChannelSet<T> {
    pub fn new(h_rt: CMatrix<T>, h_ri: CMatrix<T>, h_it: CMatrix<T>) -> Result<Self> {
        let ch = Self { h_rt, h_ri, h_it, coupling: None, z0: T::lit(DEFAULT_Z0) };
        ch.validate()?;
        Ok(ch)
    }

    /// Single-antenna link without a direct path: `h_ri` is `1 x M`, `h_it` is `M x 1`.
    pub fn siso(h_ri: CMatrix<T>, h_it: CMatrix<T>) -> Result<Self> {
        Self::new(CMatrix::zeros(1, 1), h_ri, h_it)
    }

    pub fn with_coupling(mut self, coupling: NetworkMatrix<T>) -> Result<Self> {
        self.z0 = coupling.z0();
        self.coupling = Some(coupling);
        self.validate()?;
        Ok(self)
    }

    pub fn m(&self) -> usize {
        self.h_ri.ncols()
    }

    pub fn n_r(&self) -> usize {
        self.h_rt.nrows()
    }

    pub fn n_t(&self) -> usize {
        self.h_rt.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (nr, n, m) = (self.h_rt.nrows(), self.h_rt.ncols(), self.h_ri.ncols());
        if self.h_ri.nrows() != nr || self.h_it.nrows() != m || self.h_it.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "h_rt {}x{}, h_ri {}x{}, h_it {}x{} are inconsistent",
                nr,
                n,
                self.h_ri.nrows(),
                m,
                self.h_it.nrows(),
                self.h_it.ncols()
            )));
        }
        if let Some(cpl) = &self.coupling {
            if cpl.ports() != m {
                return Err(Error::DimensionMismatch(format!("coupling block is {0}x{0}, expected {m}x{m}", cpl.ports())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingKind {
    Rayleigh,
    Rician,
    Los,
}

/// Link distances in meters for the pathloss model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDistances {
    pub d_rt: f64,
    pub d_ri: f64,
    pub d_it: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FadingSpec {
    pub kind: FadingKind,
    #[serde(default)]
    pub rician_factor_db: f64,
    #[serde(default)]
    pub pathloss_exponent: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distances: Option<LinkDistances>,
    #[serde(default = "default_true")]
    pub direct_link: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

impl FadingSpec {
    pub fn rayleigh(seed: u64) -> Self {
        Self {
            kind: FadingKind::Rayleigh,
            rician_factor_db: 0.0,
            pathloss_exponent: 0.0,
            distances: None,
            direct_link: true,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.rician_factor_db.is_finite() {
            return Err(Error::InvalidSpec("rician factor must be finite".into()));
        }
        if !(self.pathloss_exponent >= 0.0) || !self.pathloss_exponent.is_finite() {
            return Err(Error::InvalidSpec(format!("pathloss exponent {} must be >= 0", self.pathloss_exponent)));
        }
        if let Some(d) = &self.distances {
            if [d.d_rt, d.d_ri, d.d_it].iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(Error::InvalidSpec("distances must be positive".into()));
            }
        }
        Ok(())
    }

    /// Amplitude factor `d^{-a/2}` (power `d^{-a}`, unit reference at 1 m).
    fn amplitude(&self, d: Option<f64>) -> f64 {
        d.map_or(1.0, |d| d.powf(-0.5 * self.pathloss_exponent))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelDims {
    pub n_r: usize,
    pub n_t: usize,
    pub m: usize,
}

impl ChannelDims {
    pub fn siso(m: usize) -> Self {
        Self { n_r: 1, n_t: 1, m }
    }
}

fn draw_link<T: Real, R: Rng + ?Sized>(rng: &mut R, spec: &FadingSpec, rows: usize, cols: usize, d: Option<f64>) -> CMatrix<T> {
    let los = CMatrix::<T>::from_element(rows, cols, c(T::one(), T::zero()));
    let nlos = random_complex::<T, R>(rng, rows, cols);
    let h = match spec.kind {
        FadingKind::Rayleigh => nlos,
        FadingKind::Los => los,
        FadingKind::Rician => {
            let k = 10f64.powf(spec.rician_factor_db / 10.0);
            los.scale(T::lit((k / (1.0 + k)).sqrt())) + nlos.scale(T::lit((1.0 / (1.0 + k)).sqrt()))
        }
    };
    h.scale(T::lit(spec.amplitude(d)))
}

/// Draws a channel set from a caller-owned stream. The stream is always
/// advanced by the same amount for given dimensions, whatever the fading kind.
pub fn sample_channels_with<T: Real, R: Rng + ?Sized>(rng: &mut R, spec: &FadingSpec, dims: ChannelDims) -> Result<ChannelSet<T>> {
    spec.validate()?;
    if dims.n_r == 0 || dims.n_t == 0 || dims.m == 0 {
        return Err(Error::InvalidSpec(format!("dimensions must be positive, got {dims:?}")));
    }
    let d = spec.distances;
    let mut h_rt = draw_link::<T, R>(rng, spec, dims.n_r, dims.n_t, d.map(|d| d.d_rt));
    let h_ri = draw_link::<T, R>(rng, spec, dims.n_r, dims.m, d.map(|d| d.d_ri));
    let h_it = draw_link::<T, R>(rng, spec, dims.m, dims.n_t, d.map(|d| d.d_it));
    if !spec.direct_link {
        h_rt.fill(C::new(T::zero(), T::zero()));
    }
    ChannelSet::new(h_rt, h_ri, h_it)
}

/// Draws a channel set from the stream seeded by `spec.seed`.
pub fn sample_channels<T: Real>(spec: &FadingSpec, dims: ChannelDims) -> Result<ChannelSet<T>> {
    sample_channels_with(&mut rng(spec.seed), spec, dims)
}

/// Cascaded channel `H_RT + H_RI Theta H_IT`.
pub fn cascade<T: Real>(ch: &ChannelSet<T>, theta: &CMatrix<T>) -> Result<CMatrix<T>> {
    if ch.coupling.is_some() {
        return Err(Error::InvalidSpec("the cascaded model takes uncoupled channels".into()));
    }
    let m = ch.m();
    if theta.nrows() != m || theta.ncols() != m {
        return Err(Error::DimensionMismatch(format!("theta is {}x{}, expected {m}x{m}", theta.nrows(), theta.ncols())));
    }
    Ok(&ch.h_rt + &ch.h_ri * theta * &ch.h_it)
}

/// Coupling-aware channel. The control must have the same kind as the
/// coupling block: scattering `Theta`, impedance `Z_I` or admittance `Y_I`.
pub fn coupled_channel<T: Real>(ch: &ChannelSet<T>, control: &NetworkMatrix<T>) -> Result<CMatrix<T>> {
    let cpl = ch.coupling.as_ref().ok_or_else(|| Error::InvalidSpec("channel set has no coupling block".into()))?;
    if control.kind() != cpl.kind() {
        return Err(Error::InvalidSpec(format!(
            "control kind {:?} does not match coupling kind {:?}",
            control.kind(),
            cpl.kind()
        )));
    }
    let m = ch.m();
    if control.ports() != m {
        return Err(Error::DimensionMismatch(format!("control has {} ports, expected {m}", control.ports())));
    }
    let x = control.values();
    let ii = cpl.values();
    let half = T::lit(0.5);
    Ok(match cpl.kind() {
        NetworkKind::Scattering => {
            let inv = inverse_checked(&(identity::<T>(m) - x * ii), "I - Theta S_II")?;
            &ch.h_rt + &ch.h_ri * inv * x * &ch.h_it
        }
        NetworkKind::Impedance => {
            let inv = inverse_checked(&(ii + x), "Z_II + Z_I")?;
            (&ch.h_rt - &ch.h_ri * inv * &ch.h_it).scale(half / ch.z0)
        }
        NetworkKind::Admittance => {
            let inv = inverse_checked(&(ii + x), "Y_II + Y_I")?;
            (&ch.h_ri * inv * &ch.h_it - &ch.h_rt).scale(half * ch.z0)
        }
    })
}

/// Maps impedance-form blocks to the equivalent scattering-form and
/// admittance-form blocks.
pub fn map_z_to_s<T: Real>(z: &ChannelSet<T>) -> Result<(ChannelSet<T>, ChannelSet<T>)> {
    let cpl = z.coupling.as_ref().ok_or_else(|| Error::InvalidSpec("impedance coupling block required".into()))?;
    if cpl.kind() != NetworkKind::Impedance {
        return Err(Error::InvalidSpec(format!("expected impedance blocks, got {:?}", cpl.kind())));
    }
    let m = z.m();
    let z0 = z.z0;
    let two_z0 = z0 + z0;
    let eye = identity::<T>(m);
    let z_ii = cpl.values();
    let p = inverse_checked(&(z_ii + eye.scale(z0)), "Z_II + Z0 I")?;
    let s_rt = (&z.h_rt - &z.h_ri * &p * &z.h_it).scale(T::one() / two_z0);
    let s_ri = &z.h_ri * &p;
    let s_it = &p * &z.h_it;
    let s_ii = &p * (z_ii - eye.scale(z0));
    let s = ChannelSet { h_rt: s_rt, h_ri: s_ri, h_it: s_it, coupling: None, z0 }
        .with_coupling(NetworkMatrix::scattering(s_ii, z0)?)?;

    let q = inverse_checked(z_ii, "Z_II")?;
    let y_rt = (&z.h_ri * &q * &z.h_it - &z.h_rt).scale(T::one() / (z0 * z0));
    let y_ri = (&z.h_ri * &q).scale(-T::one() / z0);
    let y_it = (&q * &z.h_it).scale(-T::one() / z0);
    let y = ChannelSet { h_rt: y_rt, h_ri: y_ri, h_it: y_it, coupling: None, z0 }
        .with_coupling(NetworkMatrix::admittance(q, z0)?)?;
    Ok((s, y))
}

/// Isotropic-radiator coupling on a uniform linear array:
/// `Z_mm' = -Z_self e^{-j k d |m-m'|} / (j k d |m-m'|)`.
pub fn isotropic_coupling<T: Real>(m: usize, spacing: T, wavelength: T, self_impedance: C<T>, z0: T) -> Result<NetworkMatrix<T>> {
    if !(spacing > T::zero()) || !(wavelength > T::zero()) || !spacing.is_finite() || !wavelength.is_finite() {
        return Err(Error::InvalidGeometry(format!("spacing {spacing} and wavelength {wavelength} must be positive")));
    }
    let k = T::two_pi() / wavelength;
    let z = CMatrix::from_fn(m, m, |i, j| {
        if i == j {
            self_impedance
        } else {
            let x = k * spacing * T::from_count(i.abs_diff(j));
            let e = c(x.cos(), -x.sin());
            -self_impedance * e / c(T::zero(), x)
        }
    });
    NetworkMatrix::impedance(z, z0)
}

/// Thin-wire dipoles parallel to the z axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DipoleArray {
    /// Center coordinates in meters.
    pub positions: Vec<[f64; 3]>,
    pub radius: f64,
    pub length: f64,
    pub wavelength: f64,
}

pub const FREE_SPACE_IMPEDANCE: f64 = 377.0;

/// Uniform linear array of dipoles along x.
pub fn dipole_line(m: usize, spacing: f64, radius: f64, length: f64, wavelength: f64) -> DipoleArray {
    DipoleArray {
        positions: (0..m).map(|k| [k as f64 * spacing, 0.0, 0.0]).collect(),
        radius,
        length,
        wavelength,
    }
}

type Rule = Vec<(f64, f64)>;

fn gl_rule(order: usize) -> Rule {
    let n = NonZeroUsize::new(order.max(1)).expect("order >= 1");
    let rule = GaussLegendre::new(n);
    rule.nodes().copied().zip(rule.weights().copied()).collect()
}

/// Breakpoints of `[a, b]` refined geometrically toward each point of
/// `focus`, starting at width `h0` and doubling away from it.
fn graded_breaks(a: f64, b: f64, focus: &[f64], h0: f64) -> Vec<f64> {
    let mut pts = vec![a, b];
    for &s in focus {
        if s > a && s < b {
            pts.push(s);
        }
        let s = s.clamp(a, b);
        let mut h = h0;
        while h < b - a {
            for x in [s - h, s + h] {
                if x > a && x < b {
                    pts.push(x);
                }
            }
            h *= 2.0;
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|x, y| (*x - *y).abs() <= 1e-15 * (b - a));
    pts
}

fn composite<F: FnMut(f64) -> C<f64>>(rule: &Rule, breaks: &[f64], mut f: F) -> C<f64> {
    let mut acc = c(0.0, 0.0);
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for &(x, wt) in rule {
            acc += f(mid + half * x) * (wt * half);
        }
    }
    acc
}

fn mutual_impedance(arr: &DipoleArray, a: usize, b: usize, rule: &Rule) -> C<f64> {
    let k = std::f64::consts::TAU / arr.wavelength;
    let half = 0.5 * arr.length;
    let pa = arr.positions[a];
    let pb = arr.positions[b];
    let dxy = if a == b { arr.radius } else { ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt() };
    let (mz, mpz) = (pa[2], pb[2]);
    let pre = c(0.0, FREE_SPACE_IMPEDANCE / (4.0 * std::f64::consts::PI * k));
    let s2 = (k * half).sin().powi(2);
    let h0 = 0.25 * dxy;
    let outer_breaks = graded_breaks(mz - half, mz + half, &[mz, mpz, mz - half, mz + half], h0);
    composite(rule, &outer_breaks, |nz| {
        let wa = (k * (half - (nz - mz).abs())).sin();
        let inner_breaks = graded_breaks(mpz - half, mpz + half, &[nz, mpz], h0);
        let inner = composite(rule, &inner_breaks, |npz| {
            let dz = npz - nz;
            let d2 = dxy * dxy + dz * dz;
            let d = d2.sqrt();
            let t1 = c(3.0 / d2 - k * k, 3.0 * k / d) * (dz * dz / d2);
            let t2 = c(1.0 / d, k) / d;
            let bracket = t1 - t2 + c(k * k, 0.0);
            let g = c((k * d).cos(), -(k * d).sin()) / d;
            let wb = (k * (half - (npz - mpz).abs())).sin() / s2;
            bracket * g * wb
        });
        pre * inner * wa
    })
}

fn dipole_matrix(arr: &DipoleArray, order: usize) -> CMatrix<f64> {
    let rule = gl_rule(order);
    let m = arr.positions.len();
    let mut z = CMatrix::<f64>::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let v = mutual_impedance(arr, a, b, &rule);
            z[(a, b)] = v;
            z[(b, a)] = v;
        }
    }
    z
}

/// Mutual-impedance matrix of parallel thin-wire dipoles by composite
/// Gauss-Legendre quadrature of the given per-panel order. The result is
/// accepted when doubling the order changes no entry by more than `1e-6`
/// relative.
pub fn dipole_coupling<T: Real>(arr: &DipoleArray, order: usize, z0: T) -> Result<NetworkMatrix<T>> {
    let m = arr.positions.len();
    if m == 0 || !(arr.radius > 0.0) || !(arr.length > 0.0) || !(arr.wavelength > 0.0) {
        return Err(Error::InvalidGeometry("need at least one dipole and positive radius, length, wavelength".into()));
    }
    let k = std::f64::consts::TAU / arr.wavelength;
    if (k * 0.5 * arr.length).sin().abs() < 1e-9 {
        return Err(Error::InvalidGeometry("dipole length is a multiple of the wavelength".into()));
    }
    for a in 0..m {
        for b in a + 1..m {
            let (pa, pb) = (arr.positions[a], arr.positions[b]);
            if (pa[0] - pb[0]).hypot(pa[1] - pb[1]) < arr.radius {
                return Err(Error::InvalidGeometry(format!("dipoles {a} and {b} overlap")));
            }
        }
    }
    if order == 0 {
        return Err(Error::InvalidParams("quadrature order must be positive".into()));
    }
    let coarse = dipole_matrix(arr, order);
    let fine = dipole_matrix(arr, 2 * order);
    let scale = fine.iter().fold(0.0f64, |acc, z| acc.max(z.norm()));
    let change = coarse
        .iter()
        .zip(fine.iter())
        .map(|(a, b)| (a - b).norm() / b.norm().max(1e-12 * scale))
        .fold(0.0f64, f64::max);
    if change > 1e-6 {
        return Err(Error::QuadratureNotConverged { order, change });
    }
    NetworkMatrix::impedance(fine.map(|z| c(T::lit(z.re), T::lit(z.im))), z0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingDoc {
    pub kind: NetworkKind,
    pub values: MatrixDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSetDoc {
    pub h_rt: MatrixDoc,
    pub h_ri: MatrixDoc,
    pub h_it: MatrixDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<CouplingDoc>,
    #[serde(default = "default_z0")]
    pub z0: f64,
}

fn default_z0() -> f64 {
    DEFAULT_Z0
}

impl ChannelSetDoc {
    pub fn from_channels<T: Real>(ch: &ChannelSet<T>) -> Self {
        Self {
            h_rt: MatrixDoc::from_matrix(&ch.h_rt),
            h_ri: MatrixDoc::from_matrix(&ch.h_ri),
            h_it: MatrixDoc::from_matrix(&ch.h_it),
            coupling: ch
                .coupling
                .as_ref()
                .map(|n| CouplingDoc { kind: n.kind(), values: MatrixDoc::from_matrix(n.values()) }),
            z0: ch.z0.as_f64(),
        }
    }

    pub fn to_channels<T: Real>(&self) -> Result<ChannelSet<T>> {
        let z0 = T::lit(self.z0);
        let mut ch = ChannelSet::new(self.h_rt.to_matrix()?, self.h_ri.to_matrix()?, self.h_it.to_matrix()?)?;
        ch.z0 = z0;
        match &self.coupling {
            Some(cd) => ch.with_coupling(NetworkMatrix::new(cd.values.to_matrix()?, cd.kind, z0)?),
            None => Ok(ch),
        }
    }
}
