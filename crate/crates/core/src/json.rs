//! JSON document shapes for complex matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{c, CMatrix, Real};

/// A complex matrix as `rows`, `cols` and interleaved `re, im` pairs in
/// row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixDoc {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixDoc {
    pub fn from_matrix<T: Real>(m: &CMatrix<T>) -> Self {
        let mut data = Vec::with_capacity(2 * m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                data.push(z.re.as_f64());
                data.push(z.im.as_f64());
            }
        }
        Self { rows: m.nrows(), cols: m.ncols(), data }
    }

    pub fn to_matrix<T: Real>(&self) -> Result<CMatrix<T>> {
        if self.data.len() != 2 * self.rows * self.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix needs {} numbers, got {}",
                self.rows,
                self.cols,
                2 * self.rows * self.cols,
                self.data.len()
            )));
        }
        Ok(CMatrix::from_fn(self.rows, self.cols, |i, j| {
            let k = 2 * (i * self.cols + j);
            c(T::lit(self.data[k]), T::lit(self.data[k + 1]))
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_interleaving() {
        let m = CMatrix::from_row_slice(1, 2, &[c(1.0, 2.0), c(3.0, 4.0)]);
        let d = MatrixDoc::from_matrix(&m);
        assert_eq!(d.data, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(d.to_matrix::<f64>().unwrap(), m);
        let bad = MatrixDoc { rows: 2, cols: 2, data: vec![0.0; 3] };
        assert!(bad.to_matrix::<f64>().is_err());
    }
}
