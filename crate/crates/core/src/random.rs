//! Seeded random matrix generators.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::polar_unitary;
use crate::scalar::{c, jm, CMatrix, Real, C};

pub type SimRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer; turns structured (seed, index) pairs into
/// well-separated stream seeds.
pub fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One circularly-symmetric CN(0, 1) sample.
pub fn cn01<T: Real, R: Rng + ?Sized>(rng: &mut R) -> C<T> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    c(T::lit(a * s), T::lit(b * s))
}

/// Matrix with i.i.d. CN(0, 1) entries.
pub fn random_complex<T: Real, R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix<T> {
    // column-major fill keeps the stream order independent of nalgebra internals
    let data: Vec<C<T>> = (0..rows * cols).map(|_| cn01(rng)).collect();
    CMatrix::from_vec(rows, cols, data)
}

/// Haar-like random unitary (polar factor of a Gaussian matrix).
pub fn random_unitary<T: Real, R: Rng + ?Sized>(rng: &mut R, m: usize) -> CMatrix<T> {
    polar_unitary(&random_complex(rng, m, m)).0
}

/// Random symmetric unitary `U U^T`.
pub fn random_symmetric_unitary<T: Real, R: Rng + ?Sized>(rng: &mut R, m: usize) -> CMatrix<T> {
    let u = random_unitary::<T, R>(rng, m);
    let s = &u * u.transpose();
    (&s + s.transpose()).scale(T::lit(0.5))
}

/// Purely imaginary symmetric matrix `j B` with `B` entries ~ `scale * N(0, 1)`.
pub fn random_imag_symmetric<T: Real, R: Rng + ?Sized>(rng: &mut R, m: usize, scale: f64) -> CMatrix<T> {
    let mut b = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for k in i..m {
            let x: f64 = rng.sample(StandardNormal);
            b[(i, k)] = x * scale;
            b[(k, i)] = x * scale;
        }
    }
    b.map(|x| jm(T::lit(x)))
}

/// Random complex matrix whose real part is positive definite (a lossy but
/// passive impedance or admittance) plus a symmetric reactive part.
pub fn random_passive_symmetric<T: Real, R: Rng + ?Sized>(rng: &mut R, m: usize, scale: f64) -> CMatrix<T> {
    let g = random_complex::<f64, R>(rng, m, m).map(|z| z.re);
    let r = &g * g.transpose() + DMatrix::<f64>::identity(m, m);
    let x = random_imag_symmetric::<f64, R>(rng, m, 1.0);
    CMatrix::from_fn(m, m, |i, k| c(T::lit(r[(i, k)] * scale), T::lit(x[(i, k)].im * scale)))
}

pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{symmetry_residual, unitarity_residual};

    #[test]
    fn generators_respect_structure() {
        let mut r = rng(5);
        let u = random_unitary::<f64, _>(&mut r, 6);
        assert!(unitarity_residual(&u) < 1e-12);
        let s = random_symmetric_unitary::<f64, _>(&mut r, 6);
        assert!(unitarity_residual(&s) < 1e-12);
        assert!(symmetry_residual(&s) < 1e-14);
    }

    #[test]
    fn same_seed_same_stream() {
        let a = random_complex::<f64, _>(&mut rng(9), 3, 3);
        let b = random_complex::<f64, _>(&mut rng(9), 3, 3);
        assert_eq!(a, b);
        assert_ne!(mix_seed(1, 0, 1), mix_seed(1, 1, 0));
    }
}
