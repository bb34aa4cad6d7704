//! Hardware impairments: lossy and frequency-dependent varactors, lossy
//! transmission-line interconnections, and discrete-value susceptances.

use std::collections::BTreeMap;

use nalgebra::Matrix2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{dominant_singular_pair, inverse_checked};
use crate::netcore::NetworkMatrix;
use crate::optimize::{admittance_align_ls, Control, OptimizeResult};
use crate::random::rng;
use crate::scalar::{c, cis, fro, identity, jm, re, zeros, CMatrix, Real, C};
use crate::topology::{ComponentValues, Topology};

/// Tunable element: `L1` to ground in parallel with `L2`, `C` and `R` in series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaractorCircuit<T> {
    pub l1: T,
    pub l2: T,
    /// Parasitic series resistance; 0 for a lossless varactor.
    pub r: T,
    pub c_min: T,
    pub c_max: T,
}

impl<T: Real> VaractorCircuit<T> {
    pub fn new(l1: T, l2: T, r: T, c_min: T, c_max: T) -> Result<Self> {
        let ok = l1 > T::zero() && l2 > T::zero() && r >= T::zero() && c_min > T::zero() && c_min <= c_max;
        if !ok {
            return Err(Error::InvalidParams(format!(
                "varactor needs L1, L2 > 0, R >= 0 and 0 < Cmin <= Cmax, got L1={l1}, L2={l2}, R={r}, C=[{c_min}, {c_max}]"
            )));
        }
        Ok(Self { l1, l2, r, c_min, c_max })
    }

    pub fn lossless(&self) -> Self {
        Self { r: T::zero(), ..*self }
    }

    /// Center and radius of the admittance locus at `f` when `R > 0`.
    pub fn locus_circle(&self, f: T) -> (C<T>, T) {
        let w = T::two_pi() * f;
        let rad = T::one() / (self.r + self.r);
        (c(rad, -T::one() / (w * self.l1)), rad)
    }
}

/// `Y = 1/(j w L1) + 1/(j w L2 + 1/(j w C) + R)`, `w = 2 pi f`.
pub fn varactor_admittance<T: Real>(v: &VaractorCircuit<T>, cap: T, f: T) -> Result<C<T>> {
    if cap < v.c_min || cap > v.c_max {
        return Err(Error::OutOfRange(format!("capacitance {cap} outside [{}, {}]", v.c_min, v.c_max)));
    }
    if !(f > T::zero()) {
        return Err(Error::OutOfRange(format!("frequency must be positive, got {f}")));
    }
    let w = T::two_pi() * f;
    let shunt = jm(w * v.l1).inv();
    let series = c(v.r, w * v.l2 - T::one() / (w * cap)).inv();
    Ok(shunt + series)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope_per_hz: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares line through `Im{Y(C, f)}` of the lossless circuit over
/// `n_points` frequencies spanning `f_center +/- half_band`.
pub fn susceptance_linearity<T: Real>(v: &VaractorCircuit<T>, cap: T, f_center: T, half_band: T, n_points: usize) -> Result<LinearFit> {
    if !(half_band < f_center) || n_points < 2 {
        return Err(Error::InvalidParams("need half_band < f_center and at least two points".into()));
    }
    let lossless = v.lossless();
    let (fc, hb) = (f_center.as_f64(), half_band.as_f64());
    let mut xs = Vec::with_capacity(n_points);
    let mut ys = Vec::with_capacity(n_points);
    for k in 0..n_points {
        let f = fc - hb + 2.0 * hb * k as f64 / (n_points - 1) as f64;
        xs.push(f);
        ys.push(varactor_admittance(&lossless, cap, T::lit(f))?.im.as_f64());
    }
    let n = n_points as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(LinearFit { slope_per_hz: slope, intercept, r2 })
}

/// Which line factor scales the off-diagonal terms summed into a diagonal entry.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagonalReading {
    /// Each summand uses the factor of its own line `(m, n)`.
    #[default]
    PerSummand,
    /// Every summand uses the zero-length factor, i.e. a plain row sum.
    SelfIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineParams<T> {
    /// Attenuation constant in nepers per meter.
    pub alpha: T,
    /// Phase constant in radians per meter.
    pub beta: T,
    pub z0: T,
}

/// Admittance matrix with every inter-port component in series with a
/// transmission line. Off-diagonal entries are
/// `-2 / (Y_{m,m'}^{-1} z+ + Z0 z-)` with `z+- = e^{k l} +- e^{-k l}`,
/// `k = alpha + j beta`; edges with a zero component contribute nothing.
pub fn lossy_line_admittance<T: Real>(
    t: &Topology,
    comps: &ComponentValues<T>,
    lengths: &[T],
    line: LineParams<T>,
    reading: DiagonalReading,
) -> Result<NetworkMatrix<T>> {
    let m = t.m();
    if comps.ground.len() != m || comps.inter.len() != t.edges().len() {
        return Err(Error::MissingComponent(format!(
            "{} ground and {} inter-port values for {m} ports and {} edges",
            comps.ground.len(),
            comps.inter.len(),
            t.edges().len()
        )));
    }
    if lengths.len() != t.edges().len() {
        return Err(Error::DimensionMismatch(format!("{} line lengths for {} edges", lengths.len(), t.edges().len())));
    }
    if !(line.alpha >= T::zero()) || lengths.iter().any(|l| !(*l >= T::zero())) {
        return Err(Error::InvalidParams("attenuation and line lengths must be nonnegative".into()));
    }
    let k = c(line.alpha, line.beta);
    let two = T::lit(2.0);
    let mut y = zeros::<T>(m, m);
    let mut zp = zeros::<T>(m, m);
    let on = |e: usize| t.switches().is_none_or(|s| s[e]);
    for (e, (&(i, j), comp)) in t.edges().iter().zip(&comps.inter).enumerate() {
        if !on(e) || *comp == c(T::zero(), T::zero()) {
            continue;
        }
        let x = k * lengths[e];
        let ep = cis(x.im) * x.re.exp();
        let em = cis(-x.im) * (-x.re).exp();
        let plus = ep + em;
        let minus = ep - em;
        let v = re(-two) / (comp.inv() * plus + minus * line.z0);
        y[(i, j)] = v;
        y[(j, i)] = v;
        zp[(i, j)] = plus;
        zp[(j, i)] = plus;
    }
    for i in 0..m {
        let mut d = comps.ground[i];
        for n in 0..m {
            if n == i || y[(i, n)] == c(T::zero(), T::zero()) {
                continue;
            }
            let factor = match reading {
                DiagonalReading::PerSummand => zp[(i, n)].unscale(two),
                DiagonalReading::SelfIndex => re(T::one()),
            };
            d -= factor * y[(i, n)];
        }
        y[(i, i)] = d;
    }
    NetworkMatrix::admittance(y, line.z0)
}

/// Discrete susceptance magnitudes; entries take `+value` or `-value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Codebook {
    pub bits: u32,
    pub values: Vec<f64>,
}

impl Codebook {
    /// Validates positivity, strict ordering and size (at most `2^bits` values).
    pub fn new(bits: u32, values: Vec<f64>) -> Result<Self> {
        if bits == 0 || bits > 16 {
            return Err(Error::InvalidParams(format!("codebook bits must be in 1..=16, got {bits}")));
        }
        if values.is_empty() || values.len() > 1 << bits {
            return Err(Error::InvalidParams(format!("{} values for a {bits}-bit codebook", values.len())));
        }
        if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParams("codebook values must be positive, finite and strictly increasing".into()));
        }
        Ok(Self { bits, values })
    }

    /// Signed candidates `-v_K, ..., -v_1, v_1, ..., v_K`.
    pub fn candidates(&self) -> Vec<f64> {
        self.values.iter().rev().map(|v| -v).chain(self.values.iter().copied()).collect()
    }

    /// Nearest magnitude with the sign of `x` (positive for zero).
    pub fn quantize(&self, x: f64) -> f64 {
        let mag = x.abs();
        let v = self
            .values
            .iter()
            .copied()
            .min_by(|a, b| (a - mag).abs().total_cmp(&(b - mag).abs()))
            .expect("nonempty codebook");
        if x < 0.0 {
            -v
        } else {
            v
        }
    }
}

/// Upper-triangle positions (diagonal included) that the topology allows to be nonzero.
fn free_entries(t: &Topology) -> Vec<(usize, usize)> {
    let mask = t.mask();
    let m = t.m();
    let mut out = Vec::new();
    for i in 0..m {
        for j in i..m {
            if mask[(i, j)] {
                out.push((i, j));
            }
        }
    }
    out
}

fn susceptance_of<T: Real>(ctrl: &Control<T>) -> CMatrix<T> {
    match ctrl {
        Control::Admittance(y) => y.values().clone(),
        Control::Scattering(_) => unreachable!("least-squares solve returns an admittance"),
    }
}

/// Effective SISO pair used to seed the discrete search: `u^H H_ri` and
/// `H_it v` for the dominant singular pair `(u, v)` of `H_ri H_it`.
fn seed_pair<T: Real>(ch: &ChannelSet<T>) -> (CMatrix<T>, CMatrix<T>) {
    if ch.n_r() == 1 && ch.n_t() == 1 {
        return (ch.h_ri.clone(), ch.h_it.clone());
    }
    let (u, v, _) = dominant_singular_pair(&(&ch.h_ri * &ch.h_it));
    let a = u.adjoint() * &ch.h_ri;
    let b = &ch.h_it * v;
    (CMatrix::from_row_slice(1, a.len(), a.as_slice()), CMatrix::from_column_slice(b.len(), 1, b.as_slice()))
}

fn continuous_susceptance<T: Real>(ch: &ChannelSet<T>, t: &Topology) -> Result<CMatrix<T>> {
    let (a, b) = seed_pair(ch);
    let r = admittance_align_ls(t, &a, &b, T::one() / ch.z0)?;
    Ok(susceptance_of(&r.control))
}

/// `||H_rt + H_ri Theta H_it||_F^2` for `Theta` induced by `Y = j B`.
fn channel_strength<T: Real>(ch: &ChannelSet<T>, b: &[Vec<f64>]) -> Result<T> {
    let m = ch.m();
    let y0 = T::one() / ch.z0;
    let bm = CMatrix::from_fn(m, m, |i, j| jm(T::lit(b[i][j])));
    let eye = identity::<T>(m);
    let inv = inverse_checked(&(eye.scale(y0) + &bm), "Y0 I + Y")?;
    let theta = inv * (eye.scale(y0) - bm);
    let h = &ch.h_rt + &ch.h_ri * theta * &ch.h_it;
    let n = fro(&h);
    Ok(n * n)
}

fn quantized_strength<T: Real>(ch: &ChannelSet<T>, cont: &CMatrix<T>, entries: &[(usize, usize)], cb: &Codebook) -> Result<T> {
    let m = ch.m();
    let mut b = vec![vec![0.0; m]; m];
    for &(i, j) in entries {
        let q = cb.quantize(cont[(i, j)].im.as_f64());
        b[i][j] = q;
        b[j][i] = q;
    }
    channel_strength(ch, &b)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearnedCodebook {
    pub codebook: Codebook,
    /// Mean training strength with quantized continuous solutions, per accepted iteration.
    pub trace: Vec<f64>,
}

/// Offline codebook design: pools the magnitudes of the continuous
/// least-squares susceptances over the training set and clusters them with
/// 1-D k-means (`2^bits` centroids, quantile initialization). A Lloyd step is
/// kept only if the mean training strength does not drop, so the trace is
/// nondecreasing.
pub fn learn_codebook<T: Real>(training: &[ChannelSet<T>], t: &Topology, bits: u32, iters: usize, seed: u64) -> Result<LearnedCodebook> {
    if training.is_empty() {
        return Err(Error::EmptyTraining);
    }
    if bits == 0 || bits > 16 {
        return Err(Error::InvalidParams(format!("codebook bits must be in 1..=16, got {bits}")));
    }
    let entries = free_entries(t);
    let conts = training.iter().map(|ch| continuous_susceptance(ch, t)).collect::<Result<Vec<_>>>()?;
    let mut pool: Vec<f64> = conts
        .iter()
        .flat_map(|b| entries.iter().map(move |&(i, j)| b[(i, j)].im.as_f64().abs()))
        .filter(|v| *v > 0.0)
        .collect();
    if pool.is_empty() {
        return Err(Error::InvalidParams("continuous solutions have no nonzero susceptance".into()));
    }
    pool.sort_by(f64::total_cmp);
    let k = 1usize << bits;
    let mut distinct = pool.clone();
    distinct.dedup();
    let mean_strength = |cb: &Codebook| -> Result<f64> {
        let mut s = 0.0;
        for (ch, cont) in training.iter().zip(&conts) {
            s += quantized_strength(ch, cont, &entries, cb)?.as_f64();
        }
        Ok(s / training.len() as f64)
    };
    if distinct.len() <= k {
        let cb = Codebook::new(bits, distinct)?;
        let s = mean_strength(&cb)?;
        return Ok(LearnedCodebook { codebook: cb, trace: vec![s] });
    }
    let n = pool.len();
    let mut centroids: Vec<f64> = (0..k).map(|q| pool[((2 * q + 1) * n / (2 * k)).min(n - 1)]).collect();
    let mut stream = rng(seed);
    let to_codebook = |cs: &[f64]| -> Result<Codebook> {
        let mut v = cs.to_vec();
        v.sort_by(f64::total_cmp);
        v.dedup();
        Codebook::new(bits, v)
    };
    let mut best = to_codebook(&centroids)?;
    let mut trace = vec![mean_strength(&best)?];
    for _ in 0..iters {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        let mut sorted = centroids.clone();
        sorted.sort_by(f64::total_cmp);
        for &x in &pool {
            let c = sorted.partition_point(|cv| *cv < x);
            let idx = if c == 0 {
                0
            } else if c == k || x - sorted[c - 1] <= sorted[c] - x {
                c - 1
            } else {
                c
            };
            sums[idx] += x;
            counts[idx] += 1;
        }
        let next: Vec<f64> = (0..k)
            .map(|q| if counts[q] > 0 { sums[q] / counts[q] as f64 } else { pool[stream.random_range(0..n)] })
            .collect();
        if next == sorted {
            break;
        }
        let cb = to_codebook(&next)?;
        let s = mean_strength(&cb)?;
        if s < *trace.last().expect("nonempty") {
            break;
        }
        centroids = next;
        best = cb;
        trace.push(s);
    }
    Ok(LearnedCodebook { codebook: best, trace })
}

struct Woodbury<T: Real> {
    inv: CMatrix<T>,
    p: CMatrix<T>,
    q: CMatrix<T>,
    h: CMatrix<T>,
}

impl<T: Real> Woodbury<T> {
    fn new(ch: &ChannelSet<T>, b: &[Vec<f64>]) -> Result<Self> {
        let m = ch.m();
        let y0 = T::one() / ch.z0;
        let a = CMatrix::from_fn(m, m, |i, j| jm(T::lit(b[i][j])) + if i == j { re(y0) } else { re(T::zero()) });
        let inv = inverse_checked(&a, "Y0 I + Y")?;
        let p = &ch.h_ri * &inv;
        let q = &inv * &ch.h_it;
        // H = H_rt - H_ri H_it + 2 Y0 H_ri A^{-1} H_it
        let h = &ch.h_rt - &ch.h_ri * &ch.h_it + (&ch.h_ri * &q).scale(y0 + y0);
        Ok(Self { inv, p, q, h })
    }

    /// Channel after adding `j delta` at `(i, j)` and `(j, i)`.
    fn updated(&self, i: usize, j: usize, delta: T, y0: T) -> CMatrix<T> {
        let d = jm(delta);
        let corr = if i == j {
            let s = re(T::one()) + d * self.inv[(i, i)];
            let scale = d / s;
            self.p.column(i) * self.q.row(i) * scale
        } else {
            // A' = A + U C U^T with U = [e_i e_j], C = d [[0,1],[1,0]]
            let k = Matrix2::new(self.inv[(i, i)], self.inv[(i, j)], self.inv[(j, i)], self.inv[(j, j)]);
            let cm = Matrix2::new(re(T::zero()), d, d, re(T::zero()));
            let s = Matrix2::identity() + cm * k;
            let core = s.try_inverse().expect("Y0 I + jB is always invertible") * cm;
            let mut out = zeros::<T>(self.h.nrows(), self.h.ncols());
            let pu = [self.p.column(i).into_owned(), self.p.column(j).into_owned()];
            let uq = [self.q.row(i).into_owned(), self.q.row(j).into_owned()];
            for a in 0..2 {
                for b in 0..2 {
                    out += &pu[a] * &uq[b] * core[(a, b)];
                }
            }
            out
        };
        &self.h - corr.scale(y0 + y0)
    }
}

/// Online discrete design: start from the quantized continuous solution and
/// sweep the free susceptance entries cyclically, setting each to the signed
/// codebook value that maximizes `||H(Theta)||_F^2`. Stops after `sweeps`
/// passes or a pass without change.
pub fn discrete_optimize<T: Real>(ch: &ChannelSet<T>, t: &Topology, cb: &Codebook, sweeps: usize) -> Result<OptimizeResult<T>> {
    ch.validate()?;
    if ch.coupling.is_some() {
        return Err(Error::InvalidSpec("discrete design uses the cascaded model".into()));
    }
    let m = ch.m();
    if t.m() != m {
        return Err(Error::DimensionMismatch(format!("topology has {} ports, channel has {m}", t.m())));
    }
    let y0 = T::one() / ch.z0;
    let entries = free_entries(t);
    let cont = continuous_susceptance(ch, t)?;
    let mut b = vec![vec![0.0; m]; m];
    for &(i, j) in &entries {
        let v = cb.quantize(cont[(i, j)].im.as_f64());
        b[i][j] = v;
        b[j][i] = v;
    }
    let cands = cb.candidates();
    let mut state = Woodbury::new(ch, &b)?;
    let strength = |h: &CMatrix<T>| {
        let n = fro(h);
        n * n
    };
    let mut current = strength(&state.h);
    let mut trace = vec![current];
    let mut converged = false;
    let mut passes = 0;
    while passes < sweeps {
        passes += 1;
        let mut changed = false;
        for &(i, j) in &entries {
            let now = b[i][j];
            let mut best = (now, current);
            for &v in &cands {
                if v == now {
                    continue;
                }
                let s = strength(&state.updated(i, j, T::lit(v - now), y0));
                if s > best.1 {
                    best = (v, s);
                }
            }
            if best.0 != now {
                b[i][j] = best.0;
                b[j][i] = best.0;
                state = Woodbury::new(ch, &b)?;
                let exact = strength(&state.h);
                // the low-rank estimate chose the move; keep the exact value monotone
                if exact + T::lit(1e-12) * exact.abs() < current {
                    b[i][j] = now;
                    b[j][i] = now;
                    state = Woodbury::new(ch, &b)?;
                } else {
                    current = exact.max(current);
                    changed = true;
                }
            }
        }
        trace.push(current);
        if !changed {
            converged = true;
            break;
        }
    }
    let y = CMatrix::from_fn(m, m, |i, j| jm(T::lit(b[i][j])));
    let eye = identity::<T>(m);
    let theta = inverse_checked(&(eye.scale(y0) + &y), "Y0 I + Y")? * (eye.scale(y0) - &y);
    let objective = channel_strength(ch, &b)?;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("entries".to_string(), entries.len() as f64);
    Ok(OptimizeResult {
        control: Control::Admittance(NetworkMatrix::admittance(y, ch.z0)?),
        theta,
        objective,
        iterations: passes,
        residuals: BTreeMap::new(),
        diagnostics,
        converged,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_channels, ChannelDims, FadingSpec};
    use crate::netcore::{predicates, NetworkKind};
    use crate::optimize::gain_bound;
    use crate::random::uniform;
    use crate::topology::{assemble_admittance, build_topology, Family, TopologyParams};

    fn reference_varactor(r: f64) -> VaractorCircuit<f64> {
        VaractorCircuit::new(6e-9, 0.7e-9, r, 0.35e-12, 3.2e-12).unwrap()
    }

    #[test]
    fn lossless_varactor_is_reactive() {
        let v = reference_varactor(0.0);
        for k in 0..20 {
            let cap = 0.35e-12 + k as f64 * 0.15e-12;
            let y = varactor_admittance(&v, cap, 1e9 + k as f64 * 1e8).unwrap();
            assert!(y.re.abs() < 1e-15);
        }
    }

    #[test]
    fn lossy_varactor_on_circle() {
        let v = reference_varactor(2.5);
        let f = 2.4e9;
        let (center, radius) = v.locus_circle(f);
        for k in 0..=50 {
            let cap = 0.35e-12 + (3.2e-12 - 0.35e-12) * k as f64 / 50.0;
            let y = varactor_admittance(&v, cap, f).unwrap();
            assert!(((y - center).norm() - radius).abs() < 1e-10 * radius);
        }
    }

    #[test]
    fn open_branch_limit() {
        let v = reference_varactor(1e12);
        let f = 2.4e9;
        let y = varactor_admittance(&v, 1e-12, f).unwrap();
        let want = jm(6e-9 * std::f64::consts::TAU * f).inv();
        assert!((y - want).norm() < 1e-9 * want.norm());
        assert!(matches!(varactor_admittance(&v, 5e-12, f), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn susceptance_is_locally_linear() {
        let v = VaractorCircuit::new(2.5e-9, 0.7e-9, 0.0, 0.1e-12, 10e-12).unwrap();
        let fit = susceptance_linearity(&v, 1e-12, 2.4e9, 100e6, 41).unwrap();
        assert!(fit.r2 > 0.99, "{fit:?}");
        let narrow = susceptance_linearity(&v, 1e-12, 2.4e9, 1e3, 41).unwrap();
        assert!(narrow.r2 > 1.0 - 1e-9);
        let other = susceptance_linearity(&v, 2e-12, 2.4e9, 100e6, 41).unwrap();
        assert!((other.slope_per_hz - fit.slope_per_hz).abs() > 1e-3 * fit.slope_per_hz.abs());
    }

    fn lossless_components(t: &Topology, seed: u64) -> ComponentValues<f64> {
        let mut r = rng(seed);
        let g: Vec<f64> = (0..t.m()).map(|_| uniform(&mut r, -0.05, 0.05)).collect();
        let e: Vec<f64> = (0..t.edges().len()).map(|_| uniform(&mut r, -0.05, 0.05)).collect();
        ComponentValues::lossless(&g, &e)
    }

    #[test]
    fn zero_length_lines_reduce_to_assembly() {
        let t = build_topology(Family::Fully, 4, TopologyParams::default()).unwrap();
        let comps = lossless_components(&t, 1);
        let line = LineParams { alpha: 0.3, beta: 20.0, z0: 50.0 };
        let plain = assemble_admittance(&t, &comps, 50.0).unwrap();
        for reading in [DiagonalReading::PerSummand, DiagonalReading::SelfIndex] {
            let y = lossy_line_admittance(&t, &comps, &vec![0.0; 6], line, reading).unwrap();
            assert!(fro(&(y.values() - plain.values())) < 1e-12 * fro(plain.values()));
        }
    }

    #[test]
    fn lossless_half_wave_lines_are_reactive() {
        let t = build_topology(Family::Fully, 4, TopologyParams::default()).unwrap();
        let comps = lossless_components(&t, 2);
        let beta = std::f64::consts::PI / 0.1;
        let line = LineParams { alpha: 0.0, beta, z0: 50.0 };
        let y = lossy_line_admittance(&t, &comps, &vec![0.1; 6], line, DiagonalReading::PerSummand).unwrap();
        let scale = fro(y.values());
        for z in y.values().iter() {
            assert!(z.re.abs() < 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn lossy_entries_on_circle() {
        let t = build_topology(Family::Fully, 4, TopologyParams::default()).unwrap();
        let comps = lossless_components(&t, 3);
        let (alpha, ell) = (0.1, 0.1);
        for a_mult in [1i32, 2, 3] {
            let beta = a_mult as f64 * std::f64::consts::PI / ell;
            let line = LineParams { alpha, beta, z0: 50.0 };
            let y = lossy_line_admittance(&t, &comps, &vec![ell; 6], line, DiagonalReading::PerSummand).unwrap();
            let r = 50.0 * (alpha * ell).sinh();
            let sign = -(-1f64).powi(a_mult);
            for (e, &(i, j)) in t.edges().iter().enumerate() {
                let v = y.values()[(i, j)];
                let simplified = re(sign) / (comps.inter[e].inv() * (alpha * ell).cosh() + r);
                assert!((v - simplified).norm() < 1e-9 * v.norm(), "{v} vs {simplified}");
                let center = re(sign / (2.0 * r));
                assert!(((v - center).norm() - 1.0 / (2.0 * r)).abs() < 1e-9 / r);
            }
        }
    }

    #[test]
    fn half_wave_lossy_lines_stay_passive() {
        let t = build_topology(Family::Fully, 4, TopologyParams::default()).unwrap();
        for seed in 0..50 {
            let comps = lossless_components(&t, 10 + seed);
            let mut r = rng(seed);
            let alpha = uniform(&mut r, 0.01, 2.0);
            let mult = 1 + seed % 3;
            let line = LineParams { alpha, beta: mult as f64 * std::f64::consts::PI / 0.1, z0: 50.0 };
            let y = lossy_line_admittance(&t, &comps, &vec![0.1; 6], line, DiagonalReading::PerSummand).unwrap();
            let s = y.convert(NetworkKind::Scattering).unwrap();
            let p = predicates(&s, 1e-9);
            assert_eq!(p.passive, Some(true), "seed {seed}");
            assert!(!p.lossless);
        }
    }

    #[test]
    fn codebook_validation() {
        assert!(Codebook::new(1, vec![0.01, 0.02]).is_ok());
        assert!(Codebook::new(1, vec![0.02, 0.01]).is_err());
        assert!(Codebook::new(1, vec![0.0, 0.01]).is_err());
        assert!(Codebook::new(1, vec![0.01, 0.02, 0.03]).is_err());
        let cb = Codebook::new(1, vec![0.01, 0.05]).unwrap();
        assert_eq!(cb.candidates(), vec![-0.05, -0.01, 0.01, 0.05]);
        assert_eq!(cb.quantize(-0.04), -0.05);
        let text = serde_json::to_string(&cb).unwrap();
        assert_eq!(serde_json::from_str::<Codebook>(&text).unwrap(), cb);
    }

    fn siso(seed: u64, m: usize) -> ChannelSet<f64> {
        sample_channels(&FadingSpec { direct_link: false, ..FadingSpec::rayleigh(seed) }, ChannelDims::siso(m)).unwrap()
    }

    #[test]
    fn identical_training_reproduces_magnitudes() {
        let t = build_topology(Family::Fully, 2, TopologyParams::default()).unwrap();
        let ch = siso(1, 2);
        let learned = learn_codebook(&[ch.clone(), ch.clone()], &t, 2, 10, 0).unwrap();
        let cont = continuous_susceptance(&ch, &t).unwrap();
        let mut mags: Vec<f64> = free_entries(&t).iter().map(|&(i, j)| cont[(i, j)].im.abs()).collect();
        mags.sort_by(f64::total_cmp);
        assert_eq!(learned.codebook.values, mags);
        let r = discrete_optimize(&ch, &t, &learned.codebook, 5).unwrap();
        let bound = gain_bound(&ch.h_ri, &ch.h_it);
        assert!((r.objective - bound).abs() < 1e-9 * bound);
    }

    #[test]
    fn empty_training_is_rejected() {
        let t = build_topology(Family::Fully, 2, TopologyParams::default()).unwrap();
        assert!(matches!(learn_codebook::<f64>(&[], &t, 1, 5, 0), Err(Error::EmptyTraining)));
    }

    #[test]
    fn discrete_search_is_feasible_and_monotone() {
        let m = 6;
        let t = build_topology(Family::Fully, m, TopologyParams::default()).unwrap();
        let training: Vec<_> = (0..20).map(|s| siso(100 + s, m)).collect();
        let learned = learn_codebook(&training, &t, 1, 20, 0).unwrap();
        assert!(learned.trace.windows(2).all(|w| w[1] >= w[0]));
        let ch = siso(7, m);
        let r = discrete_optimize(&ch, &t, &learned.codebook, 20).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1] >= w[0]));
        let Control::Admittance(y) = &r.control else { panic!() };
        for z in y.values().iter() {
            assert_eq!(z.re, 0.0);
            assert!(learned.codebook.values.contains(&z.im.abs()), "{z}");
        }
        assert!((r.trace.last().unwrap() - r.objective).abs() < 1e-9 * r.objective);
    }

    #[test]
    fn low_rank_update_matches_direct() {
        let m = 4;
        let mut r = rng(5);
        let ch = ChannelSet::new(crate::random::random_complex(&mut r, 2, 3), crate::random::random_complex(&mut r, 2, m), crate::random::random_complex(&mut r, m, 3)).unwrap();
        let mut b = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in i..m {
                let v = uniform(&mut r, -0.05, 0.05);
                b[i][j] = v;
                b[j][i] = v;
            }
        }
        let w = Woodbury::new(&ch, &b).unwrap();
        for (i, j) in [(0, 0), (1, 3), (2, 2), (0, 1)] {
            let h = w.updated(i, j, 0.013, 0.02);
            let mut b2 = b.clone();
            b2[i][j] += 0.013;
            if i != j {
                b2[j][i] += 0.013;
            }
            let direct = Woodbury::new(&ch, &b2).unwrap().h;
            assert!(fro(&(h - &direct)) < 1e-10 * fro(&direct));
        }
    }
}
