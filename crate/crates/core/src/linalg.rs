//! Small dense helpers shared by the numerical modules.

use faer::Mat;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `A · v` for a column-major dense matrix.
pub(crate) fn mat_vec(a: &Mat<f64>, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.nrows()];
    for (j, &vj) in v.iter().enumerate() {
        if vj == 0.0 {
            continue;
        }
        for (o, aij) in out.iter_mut().zip(a.col_as_slice(j)) {
            *o += aij * vj;
        }
    }
    out
}

/// `Aᵀ · v` for a column-major dense matrix.
pub(crate) fn mat_t_vec(a: &Mat<f64>, v: &[f64]) -> Vec<f64> {
    (0..a.ncols()).map(|j| dot(a.col_as_slice(j), v)).collect()
}
