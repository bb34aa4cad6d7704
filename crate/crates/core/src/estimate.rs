//! Least-squares estimation of the cascaded channel from pilot slots.
//!
//! In slot `j` the surface applies pattern `Theta_j` and the receiver sees
//! `y_j = sqrt(P_u) H_cas vec(Theta_j) + n_j`, where
//! `H_cas = h_it^T kron H_ri` is `N x M^2` (column-major `vec`). Only the
//! columns of `H_cas` at positions a pattern family can excite are
//! identifiable; these are the admissible rows of the stacked pattern matrix.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::json::MatrixDoc;
use crate::linalg::inverse_checked;
use crate::random::{cn01, rng};
use crate::scalar::{cis, fro, zeros, CMatrix, Real};
use crate::topology::{ScatteringFamily, ScatteringSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct PatternSet<T: Real> {
    pub patterns: Vec<CMatrix<T>>,
    pub family: ScatteringFamily,
    /// Block size for block families; `M` otherwise.
    pub group_size: usize,
}

impl<T: Real> PatternSet<T> {
    pub fn new(patterns: Vec<CMatrix<T>>, family: ScatteringFamily, group_size: usize) -> Result<Self> {
        let Some(first) = patterns.first() else {
            return Err(Error::RankDeficientPatterns("no patterns".into()));
        };
        let m = first.nrows();
        for p in &patterns {
            if p.nrows() != m || p.ncols() != m {
                return Err(Error::DimensionMismatch(format!("pattern is {}x{}, expected {m}x{m}", p.nrows(), p.ncols())));
            }
        }
        if group_size == 0 || m % group_size != 0 {
            return Err(Error::InvalidParams(format!("group size {group_size} does not divide {m}")));
        }
        Ok(Self { patterns, family, group_size })
    }

    pub fn m(&self) -> usize {
        self.patterns[0].nrows()
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Each pattern as a family-tagged scattering matrix.
    pub fn specs(&self) -> Result<Vec<ScatteringSpec<T>>> {
        self.patterns
            .iter()
            .map(|p| ScatteringSpec::new(p.clone(), self.family, self.group_size))
            .collect()
    }

    /// `M^2 x J` matrix whose columns are the vectorized patterns.
    pub fn stacked(&self) -> CMatrix<T> {
        let m = self.m();
        CMatrix::from_fn(m * m, self.len(), |r, j| self.patterns[j][(r % m, r / m)])
    }

    /// Indices into `vec(Theta)` that the family allows to be nonzero.
    pub fn admissible_rows(&self) -> Vec<usize> {
        let m = self.m();
        let g = self.group_size;
        (0..m * m)
            .filter(|&r| {
                let (i, j) = (r % m, r / m);
                match self.family {
                    ScatteringFamily::Diagonal => i == j,
                    ScatteringFamily::BlockUnitary | ScatteringFamily::BlockSymmetricUnitary => i / g == j / g,
                    _ => true,
                }
            })
            .collect()
    }

    /// Stacked pattern matrix restricted to the admissible rows.
    pub fn reduced(&self) -> CMatrix<T> {
        self.stacked().select_rows(&self.admissible_rows())
    }

    fn gram_inverse(&self) -> Result<CMatrix<T>> {
        let p = self.reduced();
        if p.ncols() < p.nrows() {
            return Err(Error::RankDeficientPatterns(format!("{} patterns for {} unknowns", p.ncols(), p.nrows())));
        }
        inverse_checked(&(&p * p.adjoint()), "pattern Gram matrix")
            .map_err(|e| Error::RankDeficientPatterns(e.to_string()))
    }

    /// `tr((P P^H)^{-1})` over the admissible rows.
    pub fn gram_trace_inverse(&self) -> Result<T> {
        Ok(self.gram_inverse()?.trace().re)
    }
}

/// Clock-and-shift matrix `X^a Z^b` with `X` the cyclic shift
/// (`X e_k = e_{k+1}`) and `Z = diag(w^k)`, `w = e^{-j 2 pi / M}`.
pub fn clock_shift<T: Real>(m: usize, a: usize, b: usize) -> CMatrix<T> {
    let mut out = zeros::<T>(m, m);
    let w = -T::two_pi() / T::from_count(m);
    for j in 0..m {
        out[((j + a) % m, j)] = cis(w * T::from_count((b * j) % m));
    }
    out
}

/// The `M^2` clock-and-shift unitaries, ordered by shift then clock power.
pub fn wh_patterns<T: Real>(m: usize) -> Result<PatternSet<T>> {
    if m == 0 {
        return Err(Error::InvalidParams("pattern size must be at least 1".into()));
    }
    let patterns = (0..m).flat_map(|a| (0..m).map(move |b| clock_shift(m, a, b))).collect();
    PatternSet::new(patterns, ScatteringFamily::Unitary, m)
}

/// `M * gs` block-diagonal unitary patterns: pattern `(g', k)` puts
/// `w_G^{g g'} W_k` on block `g`, with `W_k` the clock-and-shift basis of
/// size `gs` and `w_G = e^{-j 2 pi / G}`. Reduces to [`wh_patterns`] for
/// `gs = M` and to DFT-phased diagonal patterns for `gs = 1`.
pub fn group_patterns<T: Real>(m: usize, group_size: usize) -> Result<PatternSet<T>> {
    if m == 0 || group_size == 0 || m % group_size != 0 {
        return Err(Error::InvalidParams(format!("group size {group_size} does not divide {m}")));
    }
    if group_size == m {
        return wh_patterns(m);
    }
    let groups = m / group_size;
    let basis: Vec<CMatrix<T>> = (0..group_size)
        .flat_map(|a| (0..group_size).map(move |b| clock_shift(group_size, a, b)))
        .collect();
    let w = -T::two_pi() / T::from_count(groups);
    let mut patterns = Vec::with_capacity(groups * basis.len());
    for gp in 0..groups {
        for wk in &basis {
            let mut p = zeros::<T>(m, m);
            for g in 0..groups {
                let phase = cis(w * T::from_count((g * gp) % groups));
                let o = g * group_size;
                p.view_mut((o, o), (group_size, group_size)).copy_from(&wk.map(|z| z * phase));
            }
            patterns.push(p);
        }
    }
    let family = if group_size == 1 { ScatteringFamily::Diagonal } else { ScatteringFamily::BlockUnitary };
    PatternSet::new(patterns, family, group_size)
}

/// Cascaded channel `h_it^T kron H_ri` (`N x M^2`) of a single-antenna transmitter.
pub fn cascaded_channel<T: Real>(ch: &ChannelSet<T>) -> Result<CMatrix<T>> {
    ch.validate()?;
    if ch.n_t() != 1 {
        return Err(Error::DimensionMismatch(format!("estimation needs a single-antenna transmitter, got {}", ch.n_t())));
    }
    let m = ch.m();
    Ok(CMatrix::from_fn(ch.n_r(), m * m, |n, r| ch.h_it[(r / m, 0)] * ch.h_ri[(n, r % m)]))
}

/// LS estimate `P_u^{-1/2} Y P^H (P P^H)^{-1}` of the admissible columns of
/// the cascaded channel; the remaining columns of the `N x M^2` result are zero.
pub fn ls_estimate<T: Real>(y_all: &CMatrix<T>, p: &PatternSet<T>, pu: T) -> Result<CMatrix<T>> {
    if y_all.ncols() != p.len() {
        return Err(Error::DimensionMismatch(format!("{} observations for {} patterns", y_all.ncols(), p.len())));
    }
    if !(pu > T::zero()) {
        return Err(Error::InvalidParams(format!("pilot power must be positive, got {pu}")));
    }
    let gi = p.gram_inverse()?;
    let reduced = p.reduced();
    let h = (y_all * reduced.adjoint() * gi).unscale(pu.sqrt());
    let m = p.m();
    let mut out = zeros::<T>(y_all.nrows(), m * m);
    for (k, &r) in p.admissible_rows().iter().enumerate() {
        out.set_column(r, &h.column(k));
    }
    Ok(out)
}

/// `(N sigma^2 / P_u) tr((P P^H)^{-1})`.
pub fn theoretical_mse<T: Real>(p: &PatternSet<T>, n: usize, sigma2: T, pu: T) -> Result<T> {
    Ok(T::from_count(n) * sigma2 / pu * p.gram_trace_inverse()?)
}

/// One pilot round with `CN(0, sigma2)` noise and unit pilot symbols.
/// Returns the squared estimation error over the admissible columns.
pub fn estimation_trial<T: Real>(ch: &ChannelSet<T>, p: &PatternSet<T>, sigma2: T, pu: T, seed: u64) -> Result<T> {
    let h = cascaded_channel(ch)?;
    if h.ncols() != p.m() * p.m() {
        return Err(Error::DimensionMismatch(format!("channel has {} elements, patterns have {}", ch.m(), p.m())));
    }
    let mut stream = rng(seed);
    let sd = sigma2.sqrt();
    let noise = CMatrix::from_fn(h.nrows(), p.len(), |_, _| cn01::<T, _>(&mut stream) * sd);
    let y = (&h * p.stacked()).scale(pu.sqrt()) + noise;
    let est = ls_estimate(&y, p, pu)?;
    let rows = p.admissible_rows();
    let err = h.select_columns(&rows) - est.select_columns(&rows);
    let e = fro(&err);
    Ok(e * e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternSetDoc {
    pub family: ScatteringFamily,
    pub group_size: usize,
    pub patterns: Vec<MatrixDoc>,
}

impl PatternSetDoc {
    pub fn from_patterns<T: Real>(p: &PatternSet<T>) -> Self {
        Self { family: p.family, group_size: p.group_size, patterns: p.patterns.iter().map(MatrixDoc::from_matrix).collect() }
    }

    pub fn to_patterns<T: Real>(&self) -> Result<PatternSet<T>> {
        let patterns = self.patterns.iter().map(MatrixDoc::to_matrix).collect::<Result<Vec<_>>>()?;
        PatternSet::new(patterns, self.family, self.group_size)
    }
}
