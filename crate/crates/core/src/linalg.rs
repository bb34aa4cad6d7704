//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{abs2, fro, identity, CMatrix, Real};

/// Condition-number threshold above which a matrix is treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// 2-norm condition number from the singular values.
pub fn condition_number<T: Real>(m: &CMatrix<T>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().fold(T::zero(), |a, &b| a.max(b));
    let min = sv.iter().fold(T::max_value().unwrap_or(max), |a, &b| a.min(b));
    if min <= T::zero() {
        f64::INFINITY
    } else {
        (max / min).as_f64()
    }
}

/// Inverse with a condition-number guard.
pub fn inverse_checked<T: Real>(m: &CMatrix<T>, context: &'static str) -> Result<CMatrix<T>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "{context}: {}x{} is not square",
            m.nrows(),
            m.ncols()
        )));
    }
    let condition = condition_number(m);
    if !condition.is_finite() || condition > SINGULAR_CONDITION {
        return Err(Error::SingularMatrix { context, condition });
    }
    m.clone()
        .try_inverse()
        .ok_or(Error::SingularMatrix { context, condition })
}

/// Solves `a x = b` by LU without a conditioning check. Callers use this only
/// where `a` is invertible by construction.
pub fn solve_lu<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> Option<CMatrix<T>> {
    a.clone().lu().solve(b)
}

/// Unitary polar factor `U V^H` of `a = U S V^H` together with the smallest
/// singular value.
///
/// nalgebra's SVD occasionally returns inconsistent singular vectors for
/// rank-deficient input, so the factorization is checked and rebuilt from the
/// Hermitian eigendecomposition of `A^H A` when it does not reproduce `a`.
pub fn polar_unitary<T: Real>(a: &CMatrix<T>) -> (CMatrix<T>, T) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^H");
    let sv = &svd.singular_values;
    let smin = sv.iter().fold(T::max_value().unwrap_or(T::one()), |acc, &s| acc.min(s));
    let recon = &u * CMatrix::from_diagonal(&sv.map(crate::scalar::re)) * &v_t;
    if fro(&(recon - a)) <= T::lit(1e-10) * fro(a).max(T::lit(1e-300)) {
        return (u * v_t, smin);
    }
    // singular values stay reliable even when the vectors are not
    (polar_by_eigen(a), smin)
}

fn polar_by_eigen<T: Real>(a: &CMatrix<T>) -> CMatrix<T> {
    let n = a.ncols();
    let g = a.adjoint() * a;
    let eig = nalgebra::SymmetricEigen::new((&g + g.adjoint()).scale(T::lit(0.5)));
    let lmax = eig.eigenvalues.iter().fold(T::zero(), |x, &y| x.max(y));
    let floor = lmax * T::lit(1e-12);
    let mut us: Vec<nalgebra::DVector<crate::scalar::C<T>>> = Vec::with_capacity(n);
    let mut vs = Vec::with_capacity(n);
    let mut used = vec![false; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap_or(std::cmp::Ordering::Equal));
    let push_orthonormal = |us: &mut Vec<nalgebra::DVector<crate::scalar::C<T>>>, mut e: nalgebra::DVector<crate::scalar::C<T>>| {
        for _ in 0..2 {
            for q in us.iter() {
                let p = q.dotc(&e);
                e -= q * p;
            }
        }
        let nrm = e.norm();
        if nrm > T::lit(1e-6) {
            us.push(e.unscale(nrm));
            true
        } else {
            false
        }
    };
    for &i in &order {
        if eig.eigenvalues[i] > floor {
            let v = eig.eigenvectors.column(i).into_owned();
            if push_orthonormal(&mut us, (a * &v).unscale(eig.eigenvalues[i].sqrt())) {
                vs.push(v);
                used[i] = true;
            }
        }
    }
    // complete the left basis for the null directions
    for k in 0..n {
        if us.len() == n {
            break;
        }
        let mut e = nalgebra::DVector::<crate::scalar::C<T>>::zeros(n);
        e[k] = crate::scalar::re(T::one());
        push_orthonormal(&mut us, e);
    }
    for &i in &order {
        if vs.len() == n {
            break;
        }
        if !used[i] {
            vs.push(eig.eigenvectors.column(i).into_owned());
        }
    }
    CMatrix::from_columns(&us) * CMatrix::from_columns(&vs).adjoint()
}

/// Dominant singular triple `(u, v, sigma)` of `a`, from the Hermitian
/// eigendecomposition of `A^H A`.
pub fn dominant_singular_pair<T: Real>(a: &CMatrix<T>) -> (CMatrix<T>, CMatrix<T>, T) {
    let g = a.adjoint() * a;
    let eig = nalgebra::SymmetricEigen::new((&g + g.adjoint()).scale(T::lit(0.5)));
    let k = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(k).into_owned();
    let av = a * &v;
    let sigma = av.norm();
    let u = if sigma > T::zero() {
        av.unscale(sigma)
    } else {
        let mut e = nalgebra::DVector::zeros(a.nrows());
        e[0] = crate::scalar::re(T::one());
        e
    };
    (
        CMatrix::from_column_slice(u.len(), 1, u.as_slice()),
        CMatrix::from_column_slice(v.len(), 1, v.as_slice()),
        sigma,
    )
}

/// `||A^H A - I||_F`.
pub fn unitarity_residual<T: Real>(a: &CMatrix<T>) -> T {
    let n = a.ncols();
    fro(&(a.adjoint() * a - identity::<T>(n)))
}

/// `||A - A^T||_F`.
pub fn symmetry_residual<T: Real>(a: &CMatrix<T>) -> T {
    fro(&(a - a.transpose()))
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn hermitian_min_eigenvalue<T: Real>(h: &CMatrix<T>) -> T {
    let sym = (h + h.adjoint()).scale(T::lit(0.5));
    let eig = nalgebra::SymmetricEigen::new(sym);
    eig.eigenvalues
        .iter()
        .fold(T::max_value().unwrap_or(T::one()), |a, &b| a.min(b))
}

/// Minimum-norm least-squares solution of a real system.
///
/// Works through the eigendecomposition of the Gram matrix of the smaller
/// side (see [`polar_unitary`] on why not SVD), followed by one step of
/// iterative refinement. Directions with singular value below `1e-7` of the
/// largest are treated as null.
pub fn real_least_squares<T: Real>(a: &DMatrix<T>, b: &DVector<T>) -> DVector<T> {
    let wide = a.nrows() <= a.ncols();
    let g = if wide { a * a.transpose() } else { a.transpose() * a };
    let eig = nalgebra::SymmetricEigen::new(g);
    let lmax = eig.eigenvalues.iter().fold(T::zero(), |x, &y| x.max(y));
    let floor = lmax * T::lit(1e-14);
    let q = &eig.eigenvectors;
    let inv = eig.eigenvalues.map(|l| if l > floor { T::one() / l } else { T::zero() });
    let pinv_g = |r: &DVector<T>| -> DVector<T> { q * (q.transpose() * r).component_mul(&inv) };
    let step = |r: &DVector<T>| -> DVector<T> {
        if wide {
            a.transpose() * pinv_g(r)
        } else {
            pinv_g(&(a.transpose() * r))
        }
    };
    let mut x = step(b);
    let r = b - a * &x;
    x += step(&r);
    x
}

/// Sum of squared magnitudes of every entry.
pub fn energy<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| acc + abs2(*z))
}
