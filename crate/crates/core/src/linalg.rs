//! Dense semidefinite Cholesky factorization with a sparse row store for the
//! factor.

use crate::error::{Error, Result};

/// Lower-triangular factor `L` of a symmetric PSD matrix `S = L L^T`, kept as
/// the nonzero entries of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerFactor {
    dim: usize,
    rows: Vec<Vec<(usize, f64)>>,
    /// Diagonal shift that was needed, zero in the common case.
    jitter: f64,
}

impl LowerFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn nonzeros(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// `out = L xi`.
    pub fn mul_into(&self, xi: &[f64], out: &mut [f64]) {
        debug_assert_eq!(xi.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.iter().map(|&(c, v)| v * xi[c]).sum();
        }
    }

    /// Dense copy of `L` (row-major).
    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim * self.dim];
        for (i, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                d[i * self.dim + c] = v;
            }
        }
        d
    }
}

/// Relative pivot size below which a column is treated as exactly degenerate.
const PIVOT_RTOL: f64 = 64.0 * f64::EPSILON;

/// Factor a symmetric PSD matrix given row-major.
///
/// Pivots within rounding of zero mark a rank deficiency and produce a zero
/// column. A clearly negative pivot triggers one retry with
/// `1e-12 * trace / dim` added to the diagonal; a second failure is an error.
pub fn psd_cholesky(matrix: &[f64], dim: usize) -> Result<LowerFactor> {
    assert_eq!(matrix.len(), dim * dim, "matrix is not dim x dim");
    match factor(matrix, dim, 0.0) {
        Ok(rows) => Ok(LowerFactor {
            dim,
            rows,
            jitter: 0.0,
        }),
        Err(_) => {
            let trace: f64 = (0..dim).map(|i| matrix[i * dim + i]).sum();
            let jitter = 1e-12 * trace / dim as f64;
            factor(matrix, dim, jitter).map(|rows| LowerFactor { dim, rows, jitter })
        }
    }
}

fn factor(a: &[f64], dim: usize, jitter: f64) -> Result<Vec<Vec<(usize, f64)>>> {
    let mut l = vec![0.0; dim * dim];
    for j in 0..dim {
        let ajj = a[j * dim + j] + jitter;
        let mut d = ajj;
        for k in 0..j {
            d -= l[j * dim + k] * l[j * dim + k];
        }
        let tol = PIVOT_RTOL * ajj.abs();
        if d > tol {
            let ljj = d.sqrt();
            l[j * dim + j] = ljj;
            for i in (j + 1)..dim {
                let mut s = a[i * dim + j];
                for k in 0..j {
                    s -= l[i * dim + k] * l[j * dim + k];
                }
                l[i * dim + j] = s / ljj;
            }
        } else if d < -tol {
            return Err(Error::NotPositiveSemidefinite { index: j, pivot: d });
        }
        // otherwise: degenerate direction, column stays zero
    }
    Ok((0..dim)
        .map(|i| {
            (0..=i)
                .filter_map(|c| {
                    let v = l[i * dim + c];
                    (v != 0.0).then_some((c, v))
                })
                .collect()
        })
        .collect())
}
