//! Received-power maximization over scattering-matrix constraint families.
//!
//! SISO channels are passed as a `1 x M` row `h_ri` and an `M x 1` column
//! `h_it`; the objective is `|h_ri Theta h_it|^2`. For every lossless family
//! the optimum is bounded by `||h_ri||^2 ||h_it||^2`, which the unitary,
//! symmetric-unitary (tree) and fully-connected admittance solvers attain.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{inverse_checked, polar_unitary, real_least_squares, symmetry_residual, unitarity_residual};
use crate::netcore::NetworkMatrix;
use crate::random::rng;
use crate::scalar::{abs, abs2, arg, c, cis, fro, identity, jm, re, zeros, CMatrix, Real, C};
use crate::topology::{embed_blocks, Family, ScatteringFamily, ScatteringSpec, Topology};

/// Solver output: a scattering-level or admittance-level control.
#[derive(Debug, Clone, PartialEq)]
pub enum Control<T: Real> {
    Scattering(ScatteringSpec<T>),
    Admittance(NetworkMatrix<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult<T: Real> {
    pub control: Control<T>,
    /// Scattering matrix realized by the control.
    pub theta: CMatrix<T>,
    /// Channel gain `|h|^2` (received power for multi-antenna transmitters).
    pub objective: T,
    pub iterations: usize,
    /// Constraint and alignment residuals, all `>= 0`.
    pub residuals: BTreeMap<String, f64>,
    /// Additional reported quantities that are not residuals.
    pub diagnostics: BTreeMap<String, f64>,
    /// False when an iterative method stopped on its iteration limit.
    pub converged: bool,
    /// Objective after each outer iteration, starting from the initial point.
    pub trace: Vec<T>,
}

impl<T: Real> OptimizeResult<T> {
    fn closed_form(control: Control<T>, theta: CMatrix<T>, objective: T) -> Self {
        Self {
            control,
            theta,
            objective,
            iterations: 1,
            residuals: BTreeMap::new(),
            diagnostics: BTreeMap::new(),
            converged: true,
            trace: vec![objective],
        }
    }

    fn with_residual(mut self, name: &str, value: T) -> Self {
        self.residuals.insert(name.to_string(), value.as_f64());
        self
    }

    pub fn residual(&self, name: &str) -> Option<f64> {
        self.residuals.get(name).copied()
    }

    /// Largest residual, or 0 when none were recorded.
    pub fn max_residual(&self) -> f64 {
        self.residuals.values().copied().fold(0.0, f64::max)
    }
}

/// Entries of a SISO channel pair as vectors.
fn siso_vectors<T: Real>(h_ri: &CMatrix<T>, h_it: &CMatrix<T>) -> Result<(Vec<C<T>>, Vec<C<T>>)> {
    if h_ri.nrows() != 1 || h_it.ncols() != 1 || h_ri.ncols() != h_it.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "SISO channels must be 1xM and Mx1, got {}x{} and {}x{}",
            h_ri.nrows(),
            h_ri.ncols(),
            h_it.nrows(),
            h_it.ncols()
        )));
    }
    if h_ri.ncols() == 0 {
        return Err(Error::DimensionMismatch("empty channel".into()));
    }
    Ok((h_ri.iter().copied().collect(), h_it.iter().copied().collect()))
}

fn vnorm<T: Real>(v: &[C<T>]) -> T {
    v.iter().fold(T::zero(), |acc, z| acc + abs2(*z)).sqrt()
}

/// `h_ri Theta h_it` for a SISO pair.
pub fn siso_response<T: Real>(h_ri: &CMatrix<T>, theta: &CMatrix<T>, h_it: &CMatrix<T>) -> C<T> {
    (h_ri * theta * h_it)[(0, 0)]
}

pub fn siso_gain<T: Real>(h_ri: &CMatrix<T>, theta: &CMatrix<T>, h_it: &CMatrix<T>) -> T {
    abs2(siso_response(h_ri, theta, h_it))
}

/// `||h_ri||^2 ||h_it||^2`, the gain bound of every lossless architecture.
pub fn gain_bound<T: Real>(h_ri: &CMatrix<T>, h_it: &CMatrix<T>) -> T {
    let a = fro(h_ri);
    let b = fro(h_it);
    a * a * b * b
}

fn is_zero<T: Real>(v: &[C<T>]) -> bool {
    vnorm(v) <= T::zero()
}

fn degenerate<T: Real>(family: ScatteringFamily, h_ri: &CMatrix<T>, h_it: &CMatrix<T>) -> Result<OptimizeResult<T>> {
    let m = h_ri.ncols();
    let theta = identity::<T>(m);
    let obj = siso_gain(h_ri, &theta, h_it);
    let spec = ScatteringSpec::new(theta.clone(), family, m)?;
    Ok(OptimizeResult::closed_form(Control::Scattering(spec), theta, obj).with_residual("degenerate_channel", T::one()))
}

/// D-RIS closed form: `theta_m = -arg(h_ri[m] h_it[m])`.
pub fn dris_phase_align<T: Real>(h_ri: &CMatrix<T>, h_it: &CMatrix<T>) -> Result<OptimizeResult<T>> {
    let (a, b) = siso_vectors(h_ri, h_it)?;
    let m = a.len();
    let mut theta = zeros::<T>(m, m);
    let mut total = T::zero();
    for k in 0..m {
        let p = a[k] * b[k];
        let phase = if abs2(p) > T::zero() { -arg(p) } else { T::zero() };
        theta[(k, k)] = cis(phase);
        total += abs(p);
    }
    let spec = ScatteringSpec::new(theta.clone(), ScatteringFamily::Diagonal, m)?;
    let mut r = OptimizeResult::closed_form(Control::Scattering(spec), theta, total * total);
    r.diagnostics.insert("bound".into(), gain_bound(h_ri, h_it).as_f64());
    Ok(r)
}

/// Householder reflector `p` (unit) and phase `phi` with
/// `-e^{j phi} (I - 2 p p^H) e_1 = v` for unit `v`.
fn householder_to<T: Real>(v: &[C<T>]) -> (Vec<C<T>>, T) {
    let phi = if abs(v[0]) > T::zero() { arg(v[0]) } else { T::zero() };
    let rot = cis(-phi);
    let mut w: Vec<C<T>> = v.iter().map(|z| *z * rot).collect();
    w[0] += re(T::one());
    let n = vnorm(&w);
    for z in w.iter_mut() {
        *z = z.unscale(n);
    }
    (w, phi)
}

/// Unitary (non-reciprocal fully-connected) closed form `Theta = V U^H` whose
/// first columns are `h_ri^H / ||h_ri||` and `h_it / ||h_it||`; the remaining
/// columns come from Householder reflectors, so the result is deterministic.
pub fn unitary_align<T: Real>(h_ri: &CMatrix<T>, h_it: &CMatrix<T>) -> Result<OptimizeResult<T>> {
    let (a, b) = siso_vectors(h_ri, h_it)?;
    if is_zero(&a) || is_zero(&b) {
        return degenerate(ScatteringFamily::Unitary, h_ri, h_it);
    }
    let m = a.len();
    let na = vnorm(&a);
    let nb = vnorm(&b);
    let x: Vec<C<T>> = a.iter().map(|z| z.conj().unscale(na)).collect();
    let y: Vec<C<T>> = b.iter().map(|z| z.unscale(nb)).collect();
    let (p, phv) = householder_to(&x);
    let (q, phu) = householder_to(&y);
    // (I - 2pp^H)(I - 2qq^H) = I - 2pp^H - 2qq^H + 4 (p^H q) p q^H
    let pq = p.iter().zip(&q).fold(re(T::zero()), |acc, (pi, qi)| acc + pi.conj() * qi);
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let g = cis(phv - phu);
    let theta = CMatrix::from_fn(m, m, |i, j| {
        let mut v = -p[i] * p[j].conj() * two - q[i] * q[j].conj() * two + p[i] * pq * q[j].conj() * four;
        if i == j {
            v += re(T::one());
        }
        v * g
    });
    let obj = siso_gain(h_ri, &theta, h_it);
    let res = unitarity_residual(&theta);
    let spec = ScatteringSpec::new(theta.clone(), ScatteringFamily::Unitary, m)?;
    Ok(OptimizeResult::closed_form(Control::Scattering(spec), theta, obj).with_residual("unitarity", res))
}

/// Threshold below which a pivot of the tridiagonal forward solve is degenerate.
pub const TREE_PIVOT_FLOOR: f64 = 1e-12;

struct Tridiagonal<T> {
    diag: Vec<T>,
    off: Vec<T>,
}

impl<T: Real> Tridiagonal<T> {
    fn apply(&self, u: &[C<T>]) -> Vec<C<T>> {
        let m = u.len();
        (0..m)
            .map(|i| {
                let mut s = u[i] * self.diag[i];
                if i > 0 {
                    s += u[i - 1] * self.off[i - 1];
                }
                if i + 1 < m {
                    s += u[i + 1] * self.off[i];
                }
                s
            })
            .collect()
    }

    fn to_matrix(&self) -> DMatrix<T> {
        let m = self.diag.len();
        let mut b = DMatrix::zeros(m, m);
        for i in 0..m {
            b[(i, i)] = self.diag[i];
            if i + 1 < m {
                b[(i, i + 1)] = self.off[i];
                b[(i + 1, i)] = self.off[i];
            }
        }
        b
    }
}

/// Row-by-row solve of `B u = w` for real symmetric tridiagonal `B`: row `m`
/// fixes `b_m` and `b_{m,m+1}` from the real and imaginary parts of
/// `conj(u_m) (w_m - b_{m-1,m} u_{m-1})`. The imaginary part of the last row
/// is not used; it is returned as the consistency residual.
fn tree_forward<T: Real>(u: &[C<T>], w: &[C<T>]) -> Result<(Tridiagonal<T>, T)> {
    let m = u.len();
    let floor = T::lit(TREE_PIVOT_FLOOR);
    let mut diag = vec![T::zero(); m];
    let mut off = vec![T::zero(); m.saturating_sub(1)];
    let mut consistency = T::zero();
    for i in 0..m {
        let mag = abs2(u[i]);
        if mag.sqrt() < floor {
            return Err(Error::DegenerateChannel { index: i, value: mag.sqrt().as_f64() });
        }
        let mut r = w[i];
        if i > 0 {
            r -= u[i - 1] * off[i - 1];
        }
        let ru = r * u[i].conj();
        if i + 1 < m {
            let cross = u[i + 1] * u[i].conj();
            if cross.im.abs() < floor {
                return Err(Error::DegenerateChannel { index: i, value: cross.im.abs().as_f64() });
            }
            off[i] = ru.im / cross.im;
            diag[i] = (ru.re - off[i] * cross.re) / mag;
        } else {
            diag[i] = ru.re / mag;
            consistency = ru.im.abs() / mag.sqrt();
        }
    }
    Ok((Tridiagonal { diag, off }, consistency))
}

fn theta_from_susceptance<T: Real>(b: &DMatrix<T>, y0: T) -> Result<(NetworkMatrix<T>, CMatrix<T>)> {
    let m = b.nrows();
    let y = b.map(jm);
    let eye = identity::<T>(m);
    let inv = inverse_checked(&(eye.scale(y0) + &y), "Y0 I + Y")?;
    let theta = inv * (eye.scale(y0) - &y);
    Ok((NetworkMatrix::admittance(y, T::one() / y0)?, theta))
}

/// Alignment vectors `u = conj(h_ri)/|h_ri| + h_it/|h_it|` and
/// `w = -j Y0 (h_it/|h_it| - conj(h_ri)/|h_ri|)`; `B u = w` makes
/// `Theta h_it` parallel to `h_ri^H`.
fn alignment_vectors<T: Real>(a: &[C<T>], b: &[C<T>], y0: T) -> (Vec<C<T>>, Vec<C<T>>) {
    let na = vnorm(a);
    let nb = vnorm(b);
    let u = a.iter().zip(b).map(|(x, y)| x.conj().unscale(na) + y.unscale(nb)).collect();
    let w = a
        .iter()
        .zip(b)
        .map(|(x, y)| (y.unscale(nb) - x.conj().unscale(na)) * c(T::zero(), -y0))
        .collect();
    (u, w)
}

/// Tree-connected (tridiagonal admittance) closed form. Returns the purely
/// imaginary, symmetric, tridiagonal `Y_I` with `Y_I u = Y0 v` and the
/// symmetric unitary `Theta` it induces, which attains the gain bound.
pub fn tree_admittance_align<T: Real>(h_ri: &CMatrix<T>, h_it: &CMatrix<T>, y0: T) -> Result<OptimizeResult<T>> {
    let (a, b) = siso_vectors(h_ri, h_it)?;
    if is_zero(&a) || is_zero(&b) {
        return degenerate(ScatteringFamily::SymmetricUnitary, h_ri, h_it);
    }
    let (u, w) = alignment_vectors(&a, &b, y0);
    let (mut tri, consistency) = tree_forward(&u, &w)?;
    let wn = vnorm(&w);
    let residual_of = |t: &Tridiagonal<T>| -> Vec<C<T>> { t.apply(&u).iter().zip(&w).map(|(x, y)| *y - *x).collect() };
    // one step of iterative refinement with the same forward solve
    let r = residual_of(&tri);
    if vnorm(&r) > T::lit(1e-14) * wn {
        if let Ok((d, _)) = tree_forward(&u, &r) {
            let cand = Tridiagonal {
                diag: tri.diag.iter().zip(&d.diag).map(|(x, y)| *x + *y).collect(),
                off: tri.off.iter().zip(&d.off).map(|(x, y)| *x + *y).collect(),
            };
            if vnorm(&residual_of(&cand)) < vnorm(&r) {
                tri = cand;
            }
        }
    }
    let alignment = vnorm(&residual_of(&tri)) / wn;
    let bmat = tri.to_matrix();
    let (y, theta) = theta_from_susceptance(&bmat, y0)?;
    let obj = siso_gain(h_ri, &theta, h_it);
    let mut res = OptimizeResult::closed_form(Control::Admittance(y), theta.clone(), obj)
        .with_residual("alignment", alignment)
        .with_residual("consistency", consistency)
        .with_residual("unitarity", unitarity_residual(&theta))
        .with_residual("symmetry", symmetry_residual(&theta));
    res.diagnostics.insert("free_parameters".into(), (2 * a.len() - 1) as f64);
    Ok(res)
}

/// [`tree_admittance_align`] retried with global phase rotations of `h_it`
/// when a pivot is degenerate. The gain is unaffected by the rotation.
pub fn tree_admittance_align_retry<T: Real>(h_ri: &CMatrix<T>, h_it: &CMatrix<T>, y0: T, attempts: usize) -> Result<OptimizeResult<T>> {
    let mut last = None;
    for k in 0..attempts.max(1) {
        let rot = cis(T::lit(0.7 * k as f64));
        match tree_admittance_align(h_ri, &h_it.map(|z| z * rot), y0) {
            Ok(mut r) => {
                r.objective = siso_gain(h_ri, &r.theta, h_it);
                return Ok(r);
            }
            Err(e @ Error::DegenerateChannel { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Least-squares alignment restricted to a topology's admissible admittance
/// entries. Solves the `2M` real equations of `B u = w` over the free
/// susceptances (minimum norm) and reports the relative alignment residual.
pub fn admittance_align_ls<T: Real>(t: &Topology, h_ri: &CMatrix<T>, h_it: &CMatrix<T>, y0: T) -> Result<OptimizeResult<T>> {
    let (a, b) = siso_vectors(h_ri, h_it)?;
    let m = a.len();
    if t.m() != m {
        return Err(Error::DimensionMismatch(format!("topology has {} ports, channel has {m}", t.m())));
    }
    if is_zero(&a) || is_zero(&b) {
        return degenerate(t.family().scattering_family(), h_ri, h_it);
    }
    let (u, w) = alignment_vectors(&a, &b, y0);
    let edges = t.active_edges();
    let cols = m + edges.len();
    let mut sys = DMatrix::<T>::zeros(2 * m, cols);
    let mut put = |row: usize, col: usize, z: C<T>| {
        sys[(2 * row, col)] += z.re;
        sys[(2 * row + 1, col)] += z.im;
    };
    for k in 0..m {
        put(k, k, u[k]);
    }
    for (e, &(i, j)) in edges.iter().enumerate() {
        put(i, m + e, u[j]);
        put(j, m + e, u[i]);
    }
    let rhs = DVector::from_iterator(2 * m, w.iter().flat_map(|z| [z.re, z.im]));
    let x = real_least_squares(&sys, &rhs);
    let mut bmat = DMatrix::<T>::zeros(m, m);
    for k in 0..m {
        bmat[(k, k)] = x[k];
    }
    for (e, &(i, j)) in edges.iter().enumerate() {
        bmat[(i, j)] = x[m + e];
        bmat[(j, i)] = x[m + e];
    }
    let resid = (&sys * &x - &rhs).norm() / rhs.norm();
    let (y, theta) = theta_from_susceptance(&bmat, y0)?;
    let obj = siso_gain(h_ri, &theta, h_it);
    let mut res = OptimizeResult::closed_form(Control::Admittance(y), theta.clone(), obj)
        .with_residual("alignment", resid)
        .with_residual("unitarity", unitarity_residual(&theta));
    res.diagnostics.insert("bound".into(), gain_bound(h_ri, h_it).as_f64());
    if t.family() == Family::Single {
        let d = dris_phase_align(h_ri, h_it)?;
        res.diagnostics.insert("phase_aligned_objective".into(), d.objective.as_f64());
    }
    Ok(res)
}

/// Unit-modulus-determinant-free Givens rotation on ports `(i, j)`:
/// `R[i,i] = R[j,j] = cos(phi)`, `R[i,j] = -e^{j psi} sin(phi)`,
/// `R[j,i] = e^{-j psi} sin(phi)`, applied on the right of `theta`.
fn apply_rotation<T: Real>(theta: &mut CMatrix<T>, i: usize, j: usize, phi: T, psi: T) {
    let (s, co) = phi.sin_cos();
    let e = cis(psi);
    for r in 0..theta.nrows() {
        let ti = theta[(r, i)];
        let tj = theta[(r, j)];
        theta[(r, i)] = ti * co + tj * e.conj() * s;
        theta[(r, j)] = -ti * e * s + tj * co;
    }
}

/// `theta0` times the product of all pair rotations with the given
/// parameters (two per port pair, pairs in lexicographic order).
pub fn givens_product<T: Real>(theta0: &CMatrix<T>, params: &[T]) -> CMatrix<T> {
    let m = theta0.ncols();
    let mut theta = theta0.clone();
    let mut k = 0;
    for i in 0..m {
        for j in i + 1..m {
            apply_rotation(&mut theta, i, j, params[k], params[k + 1]);
            k += 2;
        }
    }
    theta
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GivensOptions {
    pub max_passes: usize,
    pub grid: usize,
    pub seed: u64,
}

impl Default for GivensOptions {
    fn default() -> Self {
        Self { max_passes: 50, grid: 16, seed: 0 }
    }
}

fn golden_max<T: Real, F: FnMut(T) -> T>(mut f: F, lo: T, hi: T, iters: usize) -> (T, T) {
    let g = T::lit(0.618_033_988_749_894_9);
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Coordinate search over the `M(M-1)` rotation parameters of
/// `Theta = theta0 prod R_{i,j}(phi, psi)`. Each pass visits the coordinates
/// in a seeded random order, doing a grid scan plus golden-section refinement,
/// then takes a finite-difference gradient step. Steps are kept only when they
/// improve the objective, so the trace is nondecreasing. Every iterate is
/// rebuilt from its parameters, so it stays unitary to rounding.
pub fn givens_search<T: Real, F>(mut objective: F, theta0: &CMatrix<T>, opts: GivensOptions) -> OptimizeResult<T>
where
    F: FnMut(&CMatrix<T>) -> T,
{
    let m = theta0.ncols();
    let n = m * m.saturating_sub(1);
    let mut params = vec![T::zero(); n];
    let mut best = objective(theta0);
    let mut trace = vec![best];
    let mut stream = rng(opts.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let two_pi = T::two_pi();
    let grid = opts.grid.max(3);
    let step = two_pi / T::from_count(grid);
    let mut converged = n == 0;
    let mut passes = 0;
    while passes < opts.max_passes && !converged {
        passes += 1;
        let start = best;
        order.shuffle(&mut stream);
        for &k in &order {
            let base = params[k];
            let mut eval = |x: T, p: &mut Vec<T>| {
                p[k] = x;
                objective(&givens_product(theta0, p))
            };
            let mut scratch = params.clone();
            let (mut arg_best, mut f_best) = (base, best);
            for g in 1..grid {
                let x = base + step * T::from_count(g);
                let f = eval(x, &mut scratch);
                if f > f_best {
                    f_best = f;
                    arg_best = x;
                }
            }
            let (x, f) = golden_max(|x| eval(x, &mut scratch), arg_best - step, arg_best + step, 40);
            if f > f_best {
                f_best = f;
                arg_best = x;
            }
            if f_best > best {
                params[k] = arg_best;
                best = f_best;
            }
        }
        // finite-difference gradient step with backtracking
        let h = T::lit(1e-6);
        let mut grad = vec![T::zero(); n];
        let mut scratch = params.clone();
        for k in 0..n {
            scratch[k] = params[k] + h;
            let fp = objective(&givens_product(theta0, &scratch));
            scratch[k] = params[k] - h;
            let fm = objective(&givens_product(theta0, &scratch));
            scratch[k] = params[k];
            grad[k] = (fp - fm) / (h + h);
        }
        let gn = grad.iter().fold(T::zero(), |acc, g| acc + *g * *g).sqrt();
        if gn > T::zero() {
            let mut alpha = T::one() / gn;
            for _ in 0..30 {
                let cand: Vec<T> = params.iter().zip(&grad).map(|(p, g)| *p + alpha * *g).collect();
                let f = objective(&givens_product(theta0, &cand));
                if f > best {
                    best = f;
                    params = cand;
                    break;
                }
                alpha *= T::lit(0.5);
            }
        }
        trace.push(best);
        let gain = best - start;
        converged = gain <= T::lit(1e-14) * best.abs().max(T::lit(1e-300));
    }
    let theta = givens_product(theta0, &params);
    let res = unitarity_residual(&theta);
    let spec = ScatteringSpec::new(theta.clone(), ScatteringFamily::Unitary, m.max(1)).expect("square");
    OptimizeResult {
        control: Control::Scattering(spec),
        theta,
        objective: best,
        iterations: passes,
        residuals: BTreeMap::from([("unitarity".to_string(), res.as_f64())]),
        diagnostics: BTreeMap::new(),
        converged,
        trace,
    }
}

/// Smallest singular value below which the symmetric projection is not unique.
pub const PROJECTION_RANK_FLOOR: f64 = 1e-12;

/// Nearest symmetric unitary matrix by the two-step projection: symmetrize,
/// then take the polar factor `U_1 U_2^H`. Returns the projection and whether
/// the symmetric part was rank deficient.
pub fn project_sym_unitary_lenient<T: Real>(a: &CMatrix<T>) -> Result<(ScatteringSpec<T>, bool)> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!("{}x{} is not square", a.nrows(), a.ncols())));
    }
    let sym = (a + a.transpose()).scale(T::lit(0.5));
    let (u, smin) = polar_unitary(&sym);
    let m = a.nrows().max(1);
    let deficient = smin < T::lit(PROJECTION_RANK_FLOOR);
    Ok((ScatteringSpec::new(u, ScatteringFamily::SymmetricUnitary, m)?, deficient))
}

pub fn project_sym_unitary<T: Real>(a: &CMatrix<T>) -> Result<ScatteringSpec<T>> {
    let (spec, deficient) = project_sym_unitary_lenient(a)?;
    if deficient {
        let sym = (a + a.transpose()).scale(T::lit(0.5));
        let smin = sym.singular_values().iter().fold(f64::INFINITY, |acc, s| acc.min(s.as_f64()));
        return Err(Error::RankDeficient(smin));
    }
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyOptions {
    pub rho: f64,
    pub max_iters: usize,
    /// Exit threshold on `||Phi - Theta||_F`.
    pub tol: f64,
}

impl PenaltyOptions {
    pub fn new(rho: f64, max_iters: usize) -> Self {
        Self { rho, max_iters, tol: 1e-6 }
    }
}

/// Penalty (augmented Lagrangian) method for the symmetric-unitary family.
///
/// Splits `Theta` (symmetric, otherwise free) from an auxiliary unitary `Phi`
/// with multiplier `Lambda`. The `Theta` step maximizes a minorizer of the
/// gain minus the penalty in closed form, `Phi` is the polar factor of
/// `Theta + Lambda / rho` and `Lambda` takes a dual ascent step. The returned
/// control is the symmetric-unitary projection of the final `Theta`.
pub fn penalty_sym_unitary<T: Real>(h_ri: &CMatrix<T>, h_it: &CMatrix<T>, opts: PenaltyOptions) -> Result<OptimizeResult<T>> {
    let (a, b) = siso_vectors(h_ri, h_it)?;
    if !(opts.rho > 0.0) || !opts.rho.is_finite() {
        return Err(Error::InvalidParams(format!("penalty weight must be positive, got {}", opts.rho)));
    }
    if is_zero(&a) || is_zero(&b) {
        return degenerate(ScatteringFamily::SymmetricUnitary, h_ri, h_it);
    }
    let m = a.len();
    let na = vnorm(&a);
    let nb = vnorm(&b);
    let av = CMatrix::from_iterator(m, 1, a.iter().map(|z| z.unscale(na)));
    let bv = CMatrix::from_iterator(m, 1, b.iter().map(|z| z.unscale(nb)));
    let half = T::lit(0.5);
    let sym = |x: &CMatrix<T>| (x + x.transpose()).scale(half);
    let gain = |x: &CMatrix<T>| abs2((av.transpose() * x * &bv)[(0, 0)]);
    // start from the co-phased diagonal solution
    let mut theta = dris_phase_align(h_ri, h_it)?.theta;
    let mut phi = theta.clone();
    let mut lambda = zeros::<T>(m, m);
    let mut rho = T::lit(opts.rho);
    let outer = sym(&(av.map(|z| z.conj()) * bv.map(|z| z.conj()).transpose()));
    let mut trace = vec![gain(&project_sym_unitary_lenient(&theta)?.0.theta)];
    let mut primal = T::max_value().unwrap_or(T::one());
    let mut iters = 0;
    let tol = T::lit(opts.tol);
    while iters < opts.max_iters {
        iters += 1;
        let s = (av.transpose() * &theta * &bv)[(0, 0)];
        theta = sym(&(&phi - lambda.unscale(rho))) + outer.map(|z| z * s).scale(T::lit(2.0) / rho);
        phi = polar_unitary(&(&theta + lambda.unscale(rho))).0;
        let gap = &theta - &phi;
        lambda += gap.scale(rho);
        let new_primal = fro(&gap);
        trace.push(gain(&project_sym_unitary_lenient(&theta)?.0.theta));
        if new_primal <= tol && iters > 1 {
            primal = new_primal;
            break;
        }
        // tighten the penalty when the split stalls
        if new_primal > T::lit(0.9) * primal {
            rho *= T::lit(1.05);
        }
        primal = new_primal;
    }
    let converged = primal <= tol;
    let (spec, _) = project_sym_unitary_lenient(&theta)?;
    let distance = fro(&(&theta - &spec.theta));
    let out = spec.theta.clone();
    let obj = siso_gain(h_ri, &out, h_it);
    Ok(OptimizeResult {
        control: Control::Scattering(spec),
        theta: out.clone(),
        objective: obj,
        iterations: iters,
        residuals: BTreeMap::from([
            ("primal".to_string(), primal.as_f64()),
            ("projection_distance".to_string(), distance.as_f64()),
            ("unitarity".to_string(), unitarity_residual(&out).as_f64()),
            ("symmetry".to_string(), symmetry_residual(&out).as_f64()),
        ]),
        diagnostics: BTreeMap::from([("final_rho".to_string(), rho.as_f64())]),
        converged,
        trace: trace.into_iter().map(|g| g * na * na * nb * nb).collect(),
    })
}

/// SISO solvers usable inside the MISO and groupwise drivers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum SisoSolver {
    /// Single-connected closed form.
    Dris,
    /// Non-reciprocal fully-connected closed form.
    Unitary,
    /// Tree-connected admittance solve (symmetric unitary optimum).
    Tree,
    /// Group-connected with tree-connected blocks.
    Group { group_size: usize },
    Penalty { rho: f64, max_iters: usize },
}

impl SisoSolver {
    pub fn family(self) -> ScatteringFamily {
        match self {
            SisoSolver::Dris => ScatteringFamily::Diagonal,
            SisoSolver::Unitary => ScatteringFamily::Unitary,
            SisoSolver::Tree | SisoSolver::Penalty { .. } => ScatteringFamily::SymmetricUnitary,
            SisoSolver::Group { .. } => ScatteringFamily::BlockSymmetricUnitary,
        }
    }

    pub fn solve<T: Real>(self, h_ri: &CMatrix<T>, h_it: &CMatrix<T>, y0: T) -> Result<OptimizeResult<T>> {
        match self {
            SisoSolver::Dris => dris_phase_align(h_ri, h_it),
            SisoSolver::Unitary => unitary_align(h_ri, h_it),
            SisoSolver::Tree => tree_admittance_align_retry(h_ri, h_it, y0, 8),
            SisoSolver::Group { group_size } => groupwise_solve(h_ri, h_it, group_size, SisoSolver::Tree, y0),
            SisoSolver::Penalty { rho, max_iters } => penalty_sym_unitary(h_ri, h_it, PenaltyOptions::new(rho, max_iters)),
        }
    }
}

/// Multiplies `theta` by the global phase that puts `h_ri Theta h_it` on
/// `target` (radians). Every lossless family is closed under this rotation.
fn rotate_onto<T: Real>(theta: &CMatrix<T>, h_ri: &CMatrix<T>, h_it: &CMatrix<T>, target: T) -> CMatrix<T> {
    let s = siso_response(h_ri, theta, h_it);
    if abs2(s) == T::zero() {
        return theta.clone();
    }
    let rot = cis(target - arg(s));
    theta.map(|z| z * rot)
}

/// Block-diagonal solve: the solver runs independently on each group of
/// `group_size` consecutive ports and each block is phase-aligned so the
/// group contributions add coherently.
pub fn groupwise_solve<T: Real>(h_ri: &CMatrix<T>, h_it: &CMatrix<T>, group_size: usize, solver: SisoSolver, y0: T) -> Result<OptimizeResult<T>> {
    let (a, _) = siso_vectors(h_ri, h_it)?;
    let m = a.len();
    if group_size == 0 || m % group_size != 0 {
        return Err(Error::InvalidParams(format!("group size {group_size} does not divide {m}")));
    }
    if matches!(solver, SisoSolver::Group { .. }) {
        return Err(Error::InvalidParams("group solver cannot be nested".into()));
    }
    let mut blocks = Vec::with_capacity(m / group_size);
    let mut index_sets = Vec::with_capacity(m / group_size);
    let mut worst = BTreeMap::<String, f64>::new();
    for g in 0..m / group_size {
        let idx: Vec<usize> = (g * group_size..(g + 1) * group_size).collect();
        let sub_ri = h_ri.select_columns(&idx);
        let sub_it = h_it.select_rows(&idx);
        let r = solver.solve(&sub_ri, &sub_it, y0)?;
        for (k, v) in &r.residuals {
            let e = worst.entry(k.clone()).or_insert(0.0);
            *e = e.max(*v);
        }
        blocks.push(rotate_onto(&r.theta, &sub_ri, &sub_it, T::zero()));
        index_sets.push(idx);
    }
    let theta = embed_blocks(m, &index_sets, &blocks);
    let obj = siso_gain(h_ri, &theta, h_it);
    let family = match solver.family() {
        ScatteringFamily::Unitary => ScatteringFamily::BlockUnitary,
        ScatteringFamily::Diagonal => ScatteringFamily::Diagonal,
        _ => ScatteringFamily::BlockSymmetricUnitary,
    };
    let spec = ScatteringSpec::new(theta.clone(), family, group_size)?;
    let mut res = OptimizeResult::closed_form(Control::Scattering(spec), theta, obj);
    res.residuals = worst;
    Ok(res)
}

/// Received power `P ||h(Theta)||^2` of a MISO link under MRT.
fn miso_channel<T: Real>(ch: &ChannelSet<T>, theta: &CMatrix<T>) -> CMatrix<T> {
    &ch.h_rt + &ch.h_ri * theta * &ch.h_it
}

/// Alternating optimization for a multi-antenna transmitter and single-antenna
/// receiver: MRT precoding `w = sqrt(P) h^H / ||h||` alternates with a
/// surface update on the effective SISO channel `(h_ri, H_it w)`, rotated to
/// add coherently with the direct path. Returns the precoder and the result.
pub fn miso_alternate<T: Real>(ch: &ChannelSet<T>, power: T, solver: SisoSolver, max_iters: usize) -> Result<(CMatrix<T>, OptimizeResult<T>)> {
    miso_alternate_from(ch, power, solver, max_iters, None)
}

/// [`miso_alternate`] from a given initial scattering matrix (identity when `None`).
pub fn miso_alternate_from<T: Real>(
    ch: &ChannelSet<T>,
    power: T,
    solver: SisoSolver,
    max_iters: usize,
    theta0: Option<&CMatrix<T>>,
) -> Result<(CMatrix<T>, OptimizeResult<T>)> {
    ch.validate()?;
    if ch.n_r() != 1 {
        return Err(Error::DimensionMismatch(format!("MISO needs one receive antenna, got {}", ch.n_r())));
    }
    if ch.coupling.is_some() {
        return Err(Error::InvalidSpec("MISO optimization uses the cascaded model".into()));
    }
    if !(power > T::zero()) {
        return Err(Error::InvalidParams(format!("transmit power must be positive, got {power}")));
    }
    let m = ch.m();
    let y0 = T::one() / ch.z0;
    let mut theta = theta0.cloned().unwrap_or_else(|| identity::<T>(m));
    let sqrt_p = power.sqrt();
    let mrt = |h: &CMatrix<T>| -> CMatrix<T> {
        let n = fro(h);
        if n > T::zero() {
            h.adjoint().scale(sqrt_p / n)
        } else {
            let mut w = zeros::<T>(h.ncols(), 1);
            w[(0, 0)] = re(sqrt_p);
            w
        }
    };
    let received = |theta: &CMatrix<T>| {
        let n = fro(&miso_channel(ch, theta));
        power * n * n
    };
    let mut w = mrt(&miso_channel(ch, &theta));
    let mut best = received(&theta);
    let mut trace = vec![best];
    let mut converged = false;
    let mut iters = 0;
    let mut last = None;
    while iters < max_iters {
        iters += 1;
        let b_eff = &ch.h_it * &w;
        let d = (&ch.h_rt * &w)[(0, 0)];
        let r = solver.solve(&ch.h_ri, &b_eff, y0)?;
        let target = if abs2(d) > T::zero() { arg(d) } else { T::zero() };
        let cand = rotate_onto(&r.theta, &ch.h_ri, &b_eff, target);
        let value = received(&cand);
        let improved = value > best;
        if improved {
            theta = cand;
            w = mrt(&miso_channel(ch, &theta));
            last = Some(r);
        }
        let gain = if improved { value - best } else { T::zero() };
        if improved {
            best = value;
        }
        trace.push(best);
        if gain <= T::lit(1e-8) * best {
            converged = true;
            break;
        }
    }
    let family = solver.family();
    let group = match solver {
        SisoSolver::Group { group_size } => group_size,
        _ => m,
    };
    let residuals = last.map(|r| r.residuals).unwrap_or_default();
    let spec = ScatteringSpec::new(theta.clone(), family, group)?;
    let result = OptimizeResult {
        control: Control::Scattering(spec),
        theta,
        objective: best,
        iterations: iters,
        residuals,
        diagnostics: BTreeMap::new(),
        converged,
        trace,
    };
    Ok((w, result))
}
