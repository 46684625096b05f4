//! Shared numeric helpers: guarded symmetric solves, pseudo-inverses, and
//! positive-semidefinite projection.
//!
//! Conventions used throughout the crate:
//!
//! - Innovation covariances are solved by Cholesky when positive definite and
//!   fall back to a symmetric-eigendecomposition pseudo-inverse otherwise
//!   (singular values below [`SINGULAR_REL_TOL`] times the largest are
//!   treated as zero). The fallback is logged at debug level.
//! - Error covariances are re-symmetrized after every update and checked to
//!   stay within [`SYMMETRY_TOL`]; eigenvalues slightly below zero (round-off)
//!   are clipped, anything more negative is a hard error.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Relative cutoff below which a singular or eigen value counts as zero.
pub const SINGULAR_REL_TOL: f64 = 1e-10;

/// Largest tolerated asymmetry (max-abs of `A - A'`) in a covariance that is
/// supposed to be symmetric, relative to its largest entry. Covariance
/// recursions drift by solver round-off — a few orders above machine epsilon
/// on ill-conditioned innovations — while structural mistakes (a transposed
/// factor, a misplaced block) show up at order one.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Magnitude of negative eigenvalue still attributed to round-off when
/// projecting a covariance back onto the positive-semidefinite cone.
pub const EIGEN_FLOOR_TOL: f64 = 1e-10;

/// Condition-number ceiling for square solves in weight synthesis.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Max-abs asymmetry `max |A - A'|`.
pub fn symmetry_gap(a: &DMatrix<f64>) -> f64 {
    let mut gap: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            gap = gap.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    gap
}

/// Returns `(A + A') / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Symmetric pseudo-inverse: eigenvalues with magnitude below
/// [`SINGULAR_REL_TOL`] times the largest are treated as exactly zero.
pub fn sym_pinv(s: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetrize(s).symmetric_eigen();
    let max_mag = eig.eigenvalues.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    let cut = SINGULAR_REL_TOL * max_mag;
    let inv = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues
            .iter()
            .map(|&v| if v.abs() <= cut { 0.0 } else { 1.0 / v }),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
}

/// Solves `S X = B` for symmetric positive-semidefinite `S`: Cholesky when
/// positive definite, pseudo-inverse fallback (logged) when singular.
pub fn sym_solve(s: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    match symmetrize(s).cholesky() {
        Some(chol) => chol.solve(b),
        None => {
            log::debug!(
                "singular {}x{} innovation system, using pseudo-inverse",
                s.nrows(),
                s.ncols()
            );
            sym_pinv(s) * b
        }
    }
}

/// Computes the gain `B S^-1` for symmetric positive-semidefinite `S`.
pub fn right_divide_sym(b: &DMatrix<f64>, s: &DMatrix<f64>) -> DMatrix<f64> {
    sym_solve(s, &b.transpose()).transpose()
}

/// Spectral condition number (largest over smallest singular value), infinity
/// when numerically singular.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || max <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Computes `B A^-1` for a general square `A` via an LU solve of the
/// transposed system; refuses systems with condition number above
/// [`CONDITION_LIMIT`].
pub fn right_divide_square(b: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let cond = condition_number(a);
    if !cond.is_finite() || cond > CONDITION_LIMIT {
        return Err(Error::BuildFailure(format!(
            "{}x{} solve is ill-conditioned (condition number {cond:.3e})",
            a.nrows(),
            a.ncols()
        )));
    }
    let lu = a.transpose().lu();
    match lu.solve(&b.transpose()) {
        Some(x) => Ok(x.transpose()),
        None => Err(Error::BuildFailure(format!(
            "{}x{} solve failed despite acceptable conditioning",
            a.nrows(),
            a.ncols()
        ))),
    }
}

/// Re-symmetrizes a covariance and projects it onto the positive-semidefinite
/// cone. Asymmetry beyond [`SYMMETRY_TOL`] or eigenvalues more negative than
/// the round-off floor are errors, not silently repaired.
pub fn psd_project(a: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let gap = symmetry_gap(a);
    let scale = a.amax().max(1.0);
    if gap > SYMMETRY_TOL * scale {
        return Err(Error::InvalidCovariance(format!(
            "{context}: asymmetry {gap:.3e} exceeds {SYMMETRY_TOL:.0e} relative to \
             the largest entry {scale:.3e}"
        )));
    }
    let sym = symmetrize(a);
    let eig = sym.symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let floor = -EIGEN_FLOOR_TOL * max_eig.max(1.0);
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < floor {
            return Err(Error::InvalidCovariance(format!(
                "{context}: eigenvalue {v:.3e} is negative beyond round-off"
            )));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose())
}

/// Symmetric square root of a positive-semidefinite matrix, used to colour
/// unit-variance Gaussian draws.
pub fn sym_sqrt(cov: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let projected = psd_project(cov, context)?;
    let eig = projected.symmetric_eigen();
    let roots = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&v| v.max(0.0).sqrt()),
    );
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Stacks blocks vertically. All blocks must share a column count; an empty
/// list yields a `0×0` matrix.
pub fn vstack(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    if blocks.is_empty() {
        return DMatrix::zeros(0, 0);
    }
    let cols = blocks[0].ncols();
    assert!(
        blocks.iter().all(|b| b.ncols() == cols),
        "vertical stack needs a uniform column count"
    );
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.rows_mut(at, b.nrows()).copy_from(b);
        at += b.nrows();
    }
    out
}

/// Places blocks along the diagonal, zero elsewhere. Blocks may be
/// rectangular; an empty list yields a `0×0` matrix.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Orthonormal basis of the row space of `f` (rows of the result), with rank
/// decided at `rel_tol` times the largest singular value.
pub fn row_space_basis(f: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    if f.nrows() == 0 || f.ncols() == 0 {
        return DMatrix::zeros(0, f.ncols());
    }
    let svd = f.clone().svd(false, true);
    let v_t = svd.v_t.expect("svd requested v_t");
    let max_sv = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let cut = rel_tol * max_sv;
    let rank = svd.singular_values.iter().filter(|&&s| s > cut).count();
    v_t.rows(0, rank).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn mat2(a: f64, b: f64, c: f64, d: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, b, c, d])
    }

    #[test]
    fn sym_solve_matches_direct_inverse_on_pd_system() {
        let s = mat2(4.0, 1.0, 1.0, 3.0);
        let b = DMatrix::identity(2, 2);
        let x = sym_solve(&s, &b);
        // Hand inverse of [[4,1],[1,3]]: 1/11 [[3,-1],[-1,4]].
        assert_abs_diff_eq!(x[(0, 0)], 3.0 / 11.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[(0, 1)], -1.0 / 11.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[(1, 1)], 4.0 / 11.0, epsilon = 1e-12);
    }

    #[test]
    fn sym_pinv_zeroes_the_null_space() {
        // Rank-1 projector onto (1,1)/sqrt(2) scaled by 2: pinv scales by 1/2
        // on the range and kills the null direction.
        let s = mat2(1.0, 1.0, 1.0, 1.0);
        let p = sym_pinv(&s);
        let expected = mat2(0.25, 0.25, 0.25, 0.25);
        assert_abs_diff_eq!((p - expected).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn sym_solve_falls_back_on_singular_systems() {
        let s = mat2(1.0, 1.0, 1.0, 1.0);
        let b = DMatrix::from_row_slice(2, 1, &[2.0, 2.0]);
        let x = sym_solve(&s, &b);
        // Minimum-norm solution of the consistent singular system: (1, 1).
        assert_abs_diff_eq!(x[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[(1, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn psd_project_clips_roundoff_but_rejects_real_negativity() {
        let slightly_off = mat2(1.0, 0.0, 0.0, -1e-12);
        let fixed = psd_project(&slightly_off, "test").expect("round-off negativity is clipped");
        assert!(fixed[(1, 1)] >= 0.0);

        let indefinite = mat2(1.0, 0.0, 0.0, -0.5);
        assert!(psd_project(&indefinite, "test").is_err());
    }

    #[test]
    fn psd_project_rejects_asymmetry() {
        let asym = mat2(1.0, 0.5, 0.0, 1.0);
        assert!(psd_project(&asym, "test").is_err());
    }

    #[test]
    fn right_divide_square_rejects_ill_conditioned_systems() {
        let nearly_singular = mat2(1.0, 0.0, 0.0, 1e-15);
        let b = DMatrix::identity(2, 2);
        assert!(right_divide_square(&b, &nearly_singular).is_err());
    }

    #[test]
    fn right_divide_square_solves_without_forming_the_inverse() {
        let a = mat2(2.0, 1.0, 0.0, 1.0);
        let b = mat2(1.0, 0.0, 0.0, 1.0);
        let x = right_divide_square(&b, &a).unwrap();
        assert_abs_diff_eq!((x * a - b).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn sym_sqrt_squares_back() {
        let cov = mat2(2.0, 0.5, 0.5, 1.0);
        let root = sym_sqrt(&cov, "test").unwrap();
        assert_abs_diff_eq!((&root * &root - cov).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn row_space_basis_finds_rank() {
        // Two independent rows plus one dependent row.
        let f = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
        let basis = row_space_basis(&f, 1e-8);
        assert_eq!(basis.nrows(), 2);
        // e3 is orthogonal to the row space.
        let e3 = DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]);
        let proj = &e3 * basis.transpose() * &basis;
        assert_abs_diff_eq!(proj.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn vstack_concatenates_rows_in_order() {
        let top = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let bottom = DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 5.0, 6.0]);
        let stacked = vstack(&[top, bottom]);
        assert_eq!(stacked.nrows(), 3);
        assert_eq!(stacked[(0, 1)], 2.0);
        assert_eq!(stacked[(2, 0)], 5.0);
        assert_eq!(vstack(&[]).nrows(), 0);
    }

    #[test]
    fn block_diag_places_blocks_and_zero_fill() {
        let a = DMatrix::from_row_slice(1, 1, &[2.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let d = block_diag(&[a, b]);
        assert_eq!(d.shape(), (3, 3));
        assert_eq!(d[(0, 0)], 2.0);
        assert_eq!(d[(1, 1)], 1.0);
        assert_eq!(d[(2, 2)], 4.0);
        assert_eq!(d[(0, 1)], 0.0);
        assert_eq!(d[(1, 0)], 0.0);
    }
}
