//! Multi-port network parameter algebra.
//!
//! A [`NetworkMatrix`] carries an `M x M` impedance, admittance or scattering
//! matrix together with its scalar reference impedance. [`convert`] moves
//! between the three representations and [`predicates`] reports reciprocity,
//! losslessness and passivity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_min_eigenvalue, inverse_checked};
use crate::scalar::{fro, identity, re, real_part, within, CMatrix, CVector, Real};

/// Default reference impedance in ohms.
pub const DEFAULT_Z0: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    Impedance,
    Admittance,
    Scattering,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkMatrix<T: Real> {
    values: CMatrix<T>,
    kind: NetworkKind,
    z0: T,
}

impl<T: Real> NetworkMatrix<T> {
    pub fn new(values: CMatrix<T>, kind: NetworkKind, z0: T) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "network matrix must be square, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if !(z0 > T::zero()) || !z0.is_finite() {
            return Err(Error::InvalidParams(format!(
                "reference impedance must be positive and finite, got {z0}"
            )));
        }
        Ok(Self { values, kind, z0 })
    }

    pub fn impedance(values: CMatrix<T>, z0: T) -> Result<Self> {
        Self::new(values, NetworkKind::Impedance, z0)
    }

    pub fn admittance(values: CMatrix<T>, z0: T) -> Result<Self> {
        Self::new(values, NetworkKind::Admittance, z0)
    }

    pub fn scattering(values: CMatrix<T>, z0: T) -> Result<Self> {
        Self::new(values, NetworkKind::Scattering, z0)
    }

    pub fn values(&self) -> &CMatrix<T> {
        &self.values
    }

    pub fn into_values(self) -> CMatrix<T> {
        self.values
    }

    pub fn kind(&self) -> NetworkKind {
        self.kind
    }

    pub fn z0(&self) -> T {
        self.z0
    }

    pub fn y0(&self) -> T {
        T::one() / self.z0
    }

    pub fn ports(&self) -> usize {
        self.values.nrows()
    }

    pub fn convert(&self, target: NetworkKind) -> Result<Self> {
        convert(self, target)
    }
}

/// Converts a network between impedance, admittance and scattering form.
///
/// `S = (Z + Z0 I)^{-1}(Z - Z0 I) = (Y0 I + Y)^{-1}(Y0 I - Y)` and its inverses
/// `Z = Z0 (I + S)(I - S)^{-1}`, `Y = Y0 (I - S)(I + S)^{-1}`.
pub fn convert<T: Real>(n: &NetworkMatrix<T>, target: NetworkKind) -> Result<NetworkMatrix<T>> {
    use NetworkKind::*;
    let m = n.ports();
    let eye = identity::<T>(m);
    let z0 = n.z0;
    let y0 = n.y0();
    let v = &n.values;
    let out = match (n.kind, target) {
        (a, b) if a == b => v.clone(),
        (Impedance, Admittance) | (Admittance, Impedance) => inverse_checked(v, "Z <-> Y inverse")?,
        (Impedance, Scattering) => {
            let inv = inverse_checked(&(v + eye.scale(z0)), "Z + Z0 I")?;
            inv * (v - eye.scale(z0))
        }
        (Admittance, Scattering) => {
            let inv = inverse_checked(&(eye.scale(y0) + v), "Y0 I + Y")?;
            inv * (eye.scale(y0) - v)
        }
        (Scattering, Impedance) => {
            let inv = inverse_checked(&(&eye - v), "I - S")?;
            ((&eye + v) * inv).scale(z0)
        }
        (Scattering, Admittance) => {
            let inv = inverse_checked(&(&eye + v), "I + S")?;
            ((&eye - v) * inv).scale(y0)
        }
        _ => unreachable!("all kind pairs covered"),
    };
    NetworkMatrix::new(out, target, z0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Predicates {
    pub reciprocal: bool,
    pub lossless: bool,
    /// Reported for scattering matrices only.
    pub passive: Option<bool>,
}

/// Reciprocity, losslessness and (for scattering kind) passivity at tolerance `tol`.
///
/// Reciprocity and impedance/admittance losslessness are judged relative to
/// `||values||_F`; scattering losslessness and passivity are absolute since
/// `S` is dimensionless.
pub fn predicates<T: Real>(n: &NetworkMatrix<T>, tol: T) -> Predicates {
    let v = &n.values;
    let scale = fro(v);
    let reciprocal = within(fro(&(v - v.transpose())), scale, tol);
    match n.kind {
        NetworkKind::Scattering => {
            let gram = v.adjoint() * v;
            let eye = identity::<T>(n.ports());
            let lossless = fro(&(&gram - &eye)) <= tol;
            let passive = hermitian_min_eigenvalue(&(eye - gram)) >= -tol;
            Predicates { reciprocal, lossless, passive: Some(passive) }
        }
        _ => {
            let lossless = within(fro(&real_part(v)), scale, tol);
            Predicates { reciprocal, lossless, passive: None }
        }
    }
}

/// Net real power `1/2 Re{v^T conj(i)}` delivered to a network.
pub fn net_power<T: Real>(v: &CVector<T>, i: &CVector<T>) -> Result<T> {
    if v.len() != i.len() {
        return Err(Error::DimensionMismatch(format!(
            "voltage length {} != current length {}",
            v.len(),
            i.len()
        )));
    }
    let s = v.iter().zip(i.iter()).fold(re(T::zero()), |acc, (a, b)| acc + a * b.conj());
    Ok(s.re * T::lit(0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{c, jm, zeros, C};
    use crate::random::{random_complex, random_imag_symmetric, rng};
    use nalgebra::DVector;

    #[test]
    fn matched_load_reflects_nothing() {
        let z = identity::<f64>(2).scale(50.0);
        let s = NetworkMatrix::impedance(z, 50.0).unwrap().convert(NetworkKind::Scattering).unwrap();
        assert!(fro(s.values()) < 1e-15);
    }

    #[test]
    fn open_circuit_reflects_everything() {
        let y: CMatrix<f64> = zeros(3, 3);
        let s = NetworkMatrix::admittance(y, 50.0).unwrap().convert(NetworkKind::Scattering).unwrap();
        assert!(fro(&(s.values() - identity::<f64>(3))) < 1e-15);
    }

    #[test]
    fn scalar_reactance_maps_to_j() {
        let z = CMatrix::from_element(1, 1, jm(50.0));
        let s = NetworkMatrix::impedance(z, 50.0).unwrap().convert(NetworkKind::Scattering).unwrap();
        let s11: C<f64> = s.values()[(0, 0)];
        assert!((s11 - c(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn singular_network_is_reported() {
        let z = identity::<f64>(2).scale(-50.0);
        let err = NetworkMatrix::impedance(z, 50.0).unwrap().convert(NetworkKind::Scattering);
        assert!(matches!(err, Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn rejects_bad_reference_and_shape() {
        assert!(NetworkMatrix::impedance(identity::<f64>(2), 0.0).is_err());
        assert!(NetworkMatrix::impedance(zeros::<f64>(2, 3), 50.0).is_err());
    }

    #[test]
    fn diagonal_phases_are_ideal() {
        let mut s = zeros::<f64>(4, 4);
        for k in 0..4 {
            s[(k, k)] = crate::scalar::cis(0.7 * k as f64 + 0.1);
        }
        let p = predicates(&NetworkMatrix::scattering(s, 50.0).unwrap(), 1e-10);
        assert_eq!(p, Predicates { reciprocal: true, lossless: true, passive: Some(true) });
    }

    #[test]
    fn half_scaled_identity_is_passive_but_lossy() {
        let s = identity::<f64>(3).scale(0.5);
        let p = predicates(&NetworkMatrix::scattering(s, 50.0).unwrap(), 1e-10);
        assert!(!p.lossless);
        assert_eq!(p.passive, Some(true));
    }

    #[test]
    fn reactive_admittance_gives_unitary_scattering() {
        let mut r = rng(3);
        let y = random_imag_symmetric::<f64, _>(&mut r, 4, 0.02);
        let s = NetworkMatrix::admittance(y, 50.0).unwrap().convert(NetworkKind::Scattering).unwrap();
        let p = predicates(&s, 1e-10);
        assert!(p.lossless && p.reciprocal);
    }

    #[test]
    fn net_power_examples() {
        let one = DVector::from_element(1, c(1.0f64, 0.0));
        let j = DVector::from_element(1, c(0.0, 1.0));
        assert_eq!(net_power(&one, &one).unwrap(), 0.5);
        assert!(net_power(&j, &one).unwrap().abs() < 1e-16);
        let two = DVector::from_element(2, c(1.0, 0.0));
        assert!(net_power(&one, &two).is_err());
    }

    #[test]
    fn reactive_network_absorbs_no_power() {
        let mut r = rng(11);
        for _ in 0..50 {
            let z = random_imag_symmetric::<f64, _>(&mut r, 5, 50.0);
            let i = random_complex::<f64, _>(&mut r, 5, 1);
            let v = &z * &i;
            let p = net_power(&DVector::from_column_slice(v.as_slice()), &DVector::from_column_slice(i.as_slice())).unwrap();
            assert!(p.abs() < 1e-12 * fro(&z), "{p}");
        }
    }

    #[test]
    fn works_in_single_precision() {
        let z = CMatrix::<f32>::from_element(1, 1, jm(50.0));
        let s = NetworkMatrix::impedance(z, 50.0f32).unwrap().convert(NetworkKind::Scattering).unwrap();
        assert!((s.values()[(0, 0)] - c(0.0f32, 1.0)).norm() < 1e-6);
    }
}
