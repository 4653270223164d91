//! Eigendecomposition of the constant system matrix and the derived spectral
//! quantities used throughout the bounds.
//!
//! Eigenvalues come from the real Schur form; eigenvectors from inverse
//! iteration in complex arithmetic. Columns are normalized to unit 2-norm
//! with the first significant component made real positive, so every
//! downstream quantity (`kappa`, `|V|`, `|V^-1|`) is deterministic.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::Error;
use crate::Result;

pub type CMatrix = DMatrix<Complex<f64>>;
pub type CVector = DVector<Complex<f64>>;

/// Eigenbasis of a constant real matrix plus the scalars derived from it.
#[derive(Debug, Clone)]
pub struct EigenData {
    /// Eigenvector matrix, one unit column per eigenvalue.
    pub v: CMatrix,
    pub vinv: CMatrix,
    /// Eigenvalues sorted by descending real part (conjugate pairs adjacent,
    /// positive imaginary part first).
    pub lambdas: Vec<Complex<f64>>,
    /// Largest real part among eigenvalues (spectral abscissa).
    pub alpha1: f64,
    /// Smallest real part.
    pub alphan: f64,
    /// Row-wise absolute sums of `v`.
    pub kappa: Vec<f64>,
    /// Induced 2-norm of `v`.
    pub norm_v: f64,
    /// Induced 2-norm of `v^-1`.
    pub norm_vinv: f64,
}

/// Embeds a complex matrix as the real 2n x 2n block matrix
/// `[[Re, -Im], [Im, Re]]`, whose singular values are those of the complex
/// matrix (each doubled).
fn real_embedding(m: &CMatrix) -> DMatrix<f64> {
    let (r, c) = m.shape();
    let mut out = DMatrix::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let z = m[(i, j)];
            out[(i, j)] = z.re;
            out[(i, j + c)] = -z.im;
            out[(i + r, j)] = z.im;
            out[(i + r, j + c)] = z.re;
        }
    }
    out
}

/// Induced 2-norm (largest singular value) of a complex matrix.
pub fn complex_norm2(m: &CMatrix) -> f64 {
    let sv = real_embedding(m).singular_values();
    sv.iter().fold(0.0f64, |a, &b| a.max(b))
}

/// Induced 2-norm of a real matrix.
pub fn real_norm2(m: &DMatrix<f64>) -> f64 {
    m.clone().singular_values().iter().fold(0.0f64, |a, &b| a.max(b))
}

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex::new(x, 0.0))
}

impl EigenData {
    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }

    /// `V^-1 M V` for a real matrix sample `M = M(t)`.
    pub fn transform(&self, m: &DMatrix<f64>) -> CMatrix {
        &self.vinv * to_complex(m) * &self.v
    }

    /// Norm of the transformed state `|V^-1 x|` for a real vector.
    pub fn transformed_state_norm(&self, x: &DVector<f64>) -> f64 {
        let xc: CVector = x.map(|v| Complex::new(v, 0.0));
        (&self.vinv * xc).norm()
    }
}

/// `|V^-1 M V|` for a real matrix sample `M = M(t)`.
pub fn transformed_norm(eig: &EigenData, m: &DMatrix<f64>) -> f64 {
    complex_norm2(&eig.transform(m))
}

/// `|G_x - i Im(diag G_x)|` with `G_x = V^-1 G V`: the transformed
/// perturbation with the imaginary parts of its diagonal removed (those are
/// already accounted for by the eigenvalue drift).
pub fn g_norm(eig: &EigenData, g: &DMatrix<f64>) -> f64 {
    let mut gx = eig.transform(g);
    let n = gx.nrows();
    for j in 0..n {
        let z = gx[(j, j)];
        gx[(j, j)] = Complex::new(z.re, 0.0);
    }
    complex_norm2(&gx)
}

fn inverse_iteration(a: &CMatrix, lambda: Complex<f64>, scale: f64, tol: f64) -> Result<CVector> {
    let n = a.nrows();
    let mut shift = lambda;
    let start = CVector::from_element(n, Complex::new(1.0, 0.0)).normalize();
    for attempt in 0..4 {
        let mut b = a.clone();
        for i in 0..n {
            b[(i, i)] -= shift;
        }
        let lu = b.lu();
        let mut v = start.clone();
        let mut ok = true;
        for _ in 0..4 {
            match lu.solve(&v) {
                Some(w) => v = w.normalize(),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            let r = (a * &v - &v * lambda).norm() / scale;
            if r <= tol.max(1e-12) * 100.0 {
                return Ok(v);
            }
        }
        // Nearly exact shift made the solve singular or inaccurate; nudge it.
        shift = lambda + Complex::new(1e-12 * (1.0 + lambda.norm()) * (attempt + 1) as f64, 0.0);
    }
    Err(Error::DefectiveMatrix {
        reason: format!("inverse iteration failed to converge for lambda = {lambda}"),
    })
}

/// Decomposes a real square matrix with simple eigenvalues.
///
/// Columns of `V` have unit 2-norm and a real positive first significant
/// component; conjugate eigenvalue pairs get exactly conjugate columns.
/// Fails with `DefectiveMatrix` when eigenvalues repeat (strict policy) or
/// when the residual invariants cannot be met at `tol`.
pub fn eigen_decompose(a: &DMatrix<f64>, tol: f64) -> Result<EigenData> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    let a_norm = real_norm2(a);
    let scale = a_norm.max(1.0);

    let mut lambdas: Vec<Complex<f64>> = a.clone().complex_eigenvalues().iter().copied().collect();

    // The Schur extraction can leave conjugate partners a few ulps apart;
    // snap each pair to an exact conjugate so downstream columns pair up.
    let mut used = vec![false; n];
    for i in 0..n {
        if used[i] || lambdas[i].im <= 0.0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if used[j] || j == i || lambdas[j].im >= 0.0 {
                continue;
            }
            let d = (lambdas[j] - lambdas[i].conj()).norm();
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        if let Some((j, d)) = best {
            if d <= 1e-6 * scale {
                let re = 0.5 * (lambdas[i].re + lambdas[j].re);
                let im = 0.5 * (lambdas[i].im - lambdas[j].im);
                lambdas[i] = Complex::new(re, im);
                lambdas[j] = Complex::new(re, -im);
                used[i] = true;
                used[j] = true;
            }
        }
    }

    lambdas.sort_by(|x, y| {
        y.re.partial_cmp(&x.re)
            .unwrap()
            .then(y.im.partial_cmp(&x.im).unwrap())
    });

    // Strict simple-eigenvalue policy.
    let sep_tol = 1e-8 * scale;
    for i in 0..n {
        for j in i + 1..n {
            if (lambdas[i] - lambdas[j]).norm() < sep_tol {
                return Err(Error::DefectiveMatrix {
                    reason: format!(
                        "eigenvalues {} and {} are not simple (separation < {sep_tol:.1e})",
                        lambdas[i], lambdas[j]
                    ),
                });
            }
        }
    }

    let ac = to_complex(a);
    let mut columns: Vec<Option<CVector>> = vec![None; n];
    for (i, &lam) in lambdas.iter().enumerate() {
        if lam.im < 0.0 {
            continue; // filled from the conjugate partner below
        }
        let v = inverse_iteration(&ac, lam, scale, tol)?;
        columns[i] = Some(normalize_column(v));
    }
    for i in 0..n {
        if columns[i].is_some() {
            continue;
        }
        let lam = lambdas[i];
        let partner = lambdas
            .iter()
            .enumerate()
            .filter(|(j, l)| columns[*j].is_some() && l.im > 0.0)
            .min_by(|(_, x), (_, y)| {
                let dx = (**x - lam.conj()).norm();
                let dy = (**y - lam.conj()).norm();
                dx.partial_cmp(&dy).unwrap()
            })
            .map(|(j, _)| j)
            .ok_or_else(|| Error::DefectiveMatrix {
                reason: format!("no conjugate partner for eigenvalue {lam}"),
            })?;
        // Already unit-norm with real positive leading component; conjugating
        // preserves both, so no second normalization pass.
        let v = columns[partner].as_ref().unwrap().map(|z| z.conj());
        columns[i] = Some(v);
    }

    let mut v = CMatrix::zeros(n, n);
    for (j, col) in columns.iter().enumerate() {
        v.set_column(j, col.as_ref().unwrap());
    }
    let vinv = v.clone().try_inverse().ok_or_else(|| Error::DefectiveMatrix {
        reason: "eigenvector matrix is singular".into(),
    })?;

    // Residual invariants.
    let mut av_minus_vl = &ac * &v;
    for j in 0..n {
        let col = av_minus_vl.column(j) - v.column(j) * lambdas[j];
        av_minus_vl.set_column(j, &col);
    }
    let resid = complex_norm2(&av_minus_vl);
    if resid > tol * scale {
        return Err(Error::DefectiveMatrix {
            reason: format!("eigen residual {resid:.3e} exceeds {:.3e}", tol * scale),
        });
    }
    let mut vvinv = &v * &vinv;
    for i in 0..n {
        vvinv[(i, i)] -= Complex::new(1.0, 0.0);
    }
    let inv_resid = complex_norm2(&vvinv);
    if inv_resid > tol.max(1e-10) {
        return Err(Error::DefectiveMatrix {
            reason: format!("inverse residual {inv_resid:.3e} exceeds {:.3e}", tol.max(1e-10)),
        });
    }

    let kappa: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|k| v[(i, k)].norm()).sum())
        .collect();
    let norm_v = complex_norm2(&v);
    let norm_vinv = complex_norm2(&vinv);
    let alpha1 = lambdas[0].re;
    let alphan = lambdas[n - 1].re;

    Ok(EigenData {
        v,
        vinv,
        lambdas,
        alpha1,
        alphan,
        kappa,
        norm_v,
        norm_vinv,
    })
}

fn normalize_column(v: CVector) -> CVector {
    let v = v.normalize();
    let max_abs = v.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    let first = v
        .iter()
        .find(|z| z.norm() > 1e-8 * max_abs)
        .copied()
        .unwrap_or(Complex::new(1.0, 0.0));
    let phase = first / first.norm();
    v.map(|z| z * phase.conj())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// The two-oscillator block matrix from the model catalog.
    fn coupled_a(c1: f64, c2: f64, w1sq: f64, w2sq: f64, d: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0,
                1.0,
                0.0,
                0.0,
                -(w1sq + d),
                -c1,
                d,
                0.0,
                0.0,
                0.0,
                0.0,
                1.0,
                d,
                0.0,
                -(w2sq + d),
                -c2,
            ],
        )
    }

    /// Eigenvalues of the companion block [[0,1],[-w2,-c]] via the quadratic
    /// formula, for the underdamped case.
    fn block_roots(c: f64, w2: f64) -> (Complex<f64>, Complex<f64>) {
        let disc = c * c - 4.0 * w2;
        assert!(disc < 0.0);
        let re = -c / 2.0;
        let im = (-disc).sqrt() / 2.0;
        (Complex::new(re, im), Complex::new(re, -im))
    }

    #[test]
    fn decoupled_block_eigenvalues() {
        let a = coupled_a(0.4, 0.2, 1.0, 4.0, 0.0);
        let eig = eigen_decompose(&a, 1e-10).unwrap();
        let (l2p, l2m) = block_roots(0.2, 4.0); // -0.1 +- 1.99750i
        let (l1p, l1m) = block_roots(0.4, 1.0); // -0.2 +- 0.97980i
        let expect = [l2p, l2m, l1p, l1m];
        for (got, want) in eig.lambdas.iter().zip(expect.iter()) {
            assert!((got - want).norm() <= 1e-9, "got {got}, want {want}");
        }
        assert_abs_diff_eq!(eig.alpha1, -0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.alphan, -0.2, epsilon = 1e-12);
        // Rounded values quoted to five decimals.
        assert_abs_diff_eq!(eig.lambdas[0].im, 1.99750, epsilon = 1e-5);
        assert_abs_diff_eq!(eig.lambdas[2].im, 0.97980, epsilon = 1e-5);
    }

    #[test]
    fn diagonal_matrix() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        let eig = eigen_decompose(&a, 1e-10).unwrap();
        assert_abs_diff_eq!(eig.alpha1, -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(eig.alphan, -2.0, epsilon = 1e-14);
        for k in &eig.kappa {
            assert_abs_diff_eq!(*k, 1.0, epsilon = 1e-12);
        }
        // V is the identity under the normalization convention.
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(eig.v[(i, j)].re, want, epsilon = 1e-12);
                assert_abs_diff_eq!(eig.v[(i, j)].im, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn identity_is_defective() {
        let a = DMatrix::<f64>::identity(4, 4);
        assert!(matches!(
            eigen_decompose(&a, 1e-10),
            Err(Error::DefectiveMatrix { .. })
        ));
    }

    #[test]
    fn conjugate_pairs_have_conjugate_columns() {
        let a = coupled_a(0.4, 0.2, 1.0, 4.0, 0.1);
        let eig = eigen_decompose(&a, 1e-10).unwrap();
        for j in (0..4).step_by(2) {
            assert_eq!(eig.lambdas[j].im, -eig.lambdas[j + 1].im);
            for i in 0..4 {
                assert_eq!(eig.v[(i, j)].re.to_bits(), eig.v[(i, j + 1)].re.to_bits());
                assert_eq!(eig.v[(i, j)].im.to_bits(), (-eig.v[(i, j + 1)].im).to_bits());
            }
        }
    }

    #[test]
    fn kappa_dominates_row_norms() {
        let a = coupled_a(0.4, 0.2, 1.0, 4.0, 0.1);
        let eig = eigen_decompose(&a, 1e-10).unwrap();
        for i in 0..4 {
            let row2: f64 = (0..4).map(|k| eig.v[(i, k)].norm_sqr()).sum::<f64>().sqrt();
            assert!(eig.kappa[i] >= row2 - 1e-14);
        }
    }

    #[test]
    fn g_norm_trivia() {
        let a = coupled_a(0.4, 0.2, 1.0, 4.0, 0.1);
        let eig = eigen_decompose(&a, 1e-10).unwrap();
        let zero = DMatrix::zeros(4, 4);
        assert_eq!(g_norm(&eig, &zero), 0.0);

        // Real diagonal A: V = I, so a real diagonal G transforms to itself.
        let ad = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0, -3.0, -4.0]));
        let eigd = eigen_decompose(&ad, 1e-10).unwrap();
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -0.25, 0.1, 0.0]));
        assert_abs_diff_eq!(g_norm(&eigd, &g), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(g_norm(&eigd, &g), real_norm2(&g), epsilon = 1e-12);
    }

    #[test]
    fn transformed_norm_trivia() {
        let a = coupled_a(0.4, 0.2, 1.0, 4.0, 0.1);
        let eig = eigen_decompose(&a, 1e-10).unwrap();
        let zero = DMatrix::zeros(4, 4);
        assert_eq!(transformed_norm(&eig, &zero), 0.0);
        let id = DMatrix::identity(4, 4);
        assert_abs_diff_eq!(transformed_norm(&eig, &id), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn submultiplicative_sanity() {
        let a = coupled_a(0.4, 0.2, 1.0, 4.0, 0.1);
        let eig = eigen_decompose(&a, 1e-10).unwrap();
        for k in 0..20 {
            let t = 0.25 * k as f64;
            let mut g = DMatrix::zeros(4, 4);
            g[(1, 0)] = -(0.1 * (3.14 * t).sin() + 0.1 * (6.15 * t).sin());
            g[(3, 2)] = -(0.1 * (3.1 * t).sin() + 0.1 * (6.28 * t).sin());
            let bound = eig.norm_vinv * real_norm2(&g) * eig.norm_v;
            assert!(g_norm(&eig, &g) <= bound + 1e-12);
            assert!(transformed_norm(&eig, &g) <= bound + 1e-12);
        }
    }

    #[test]
    fn reconstruction_residual() {
        let a = coupled_a(0.4, 0.2, 1.0, 4.0, 0.1);
        let eig = eigen_decompose(&a, 1e-10).unwrap();
        let mut lam = CMatrix::zeros(4, 4);
        for i in 0..4 {
            lam[(i, i)] = eig.lambdas[i];
        }
        let rec = &eig.v * lam * &eig.vinv;
        let diff = rec - to_complex(&a);
        assert!(complex_norm2(&diff) <= 1e-8 * real_norm2(&a));
    }

    #[test]
    fn decomposition_is_deterministic() {
        let a = coupled_a(0.4, 0.2, 1.0, 4.0, 0.1);
        let e1 = eigen_decompose(&a, 1e-10).unwrap();
        let e2 = eigen_decompose(&a, 1e-10).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(e1.v[(i, j)].re.to_bits(), e2.v[(i, j)].re.to_bits());
                assert_eq!(e1.v[(i, j)].im.to_bits(), e2.v[(i, j)].im.to_bits());
            }
        }
        assert_eq!(e1.norm_v.to_bits(), e2.norm_v.to_bits());
    }

    proptest::proptest! {
        #[test]
        fn random_reconstruction(seed in 0u64..200) {
            // Deterministic pseudo-random 4x4 matrices.
            let mut vals = Vec::with_capacity(16);
            let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            for _ in 0..16 {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                vals.push(((s >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0);
            }
            let a = DMatrix::from_row_slice(4, 4, &vals);
            match eigen_decompose(&a, 1e-10) {
                Ok(eig) => {
                    let mut lam = CMatrix::zeros(4, 4);
                    for i in 0..4 {
                        lam[(i, i)] = eig.lambdas[i];
                    }
                    let rec = &eig.v * lam * &eig.vinv;
                    let resid = complex_norm2(&(rec - to_complex(&a)));
                    proptest::prop_assert!(resid <= 1e-8 * real_norm2(&a).max(1.0));
                }
                // Random draws may land near-defective; the strict policy
                // rejecting them is conforming behavior.
                Err(Error::DefectiveMatrix { .. }) => {}
                Err(e) => return Err(proptest::test_runner::TestCaseError::fail(format!("{e}"))),
            }
        }
    }
}
