//! Dense complex matrix helpers: full SVD with a deterministic phase
//! convention and spectral norms.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

/// Above this `min(m, p)` the spectral norm switches from a dense SVD to
/// power iteration.
pub const DENSE_NORM_MAX: usize = 64;

/// Relative floor used for numerical rank: `σ > RANK_RTOL · max(σ_max, 1)`.
pub const RANK_RTOL: f64 = 1e-10;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn is_exact_zero(a: &CMat) -> bool {
    a.iter().all(|z| z.re == 0.0 && z.im == 0.0)
}

pub fn frobenius_sq(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Numerical rank threshold for a slice whose largest singular value is
/// `sigma_max`.
pub fn rank_threshold(sigma_max: f64) -> f64 {
    RANK_RTOL * sigma_max.max(1.0)
}

/// Full singular value decomposition `A = U diag(σ) Vᴴ` with square unitary
/// `U` (m×m) and `V` (p×p) and `σ` sorted non-increasing.
///
/// Each of the leading `min(m, p)` columns of `U` is rotated so that its first
/// entry of non-negligible modulus is real positive; the matching column of
/// `V` is rotated by the same phase so every `u vᴴ` is unchanged.
#[derive(Clone, Debug)]
pub struct SliceSvd {
    pub u: CMat,
    pub sigma: Vec<f64>,
    pub v: CMat,
}

impl SliceSvd {
    pub fn sigma_max(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    /// Number of singular values above [`rank_threshold`].
    pub fn rank(&self) -> usize {
        let thr = rank_threshold(self.sigma_max());
        self.sigma.iter().take_while(|&&s| s > thr).count()
    }

    /// `Σ_{i<r} σᵢ uᵢ vᵢᴴ`
    pub fn reconstruct(&self, r: usize) -> CMat {
        let m = self.u.nrows();
        let p = self.v.nrows();
        let r = r.min(self.sigma.len());
        let mut out = CMat::zeros(m, p);
        for i in 0..r {
            let s = self.sigma[i];
            if s == 0.0 {
                continue;
            }
            let u = self.u.column(i);
            let v = self.v.column(i);
            for col in 0..p {
                let vc = v[col].conj() * s;
                for row in 0..m {
                    out[(row, col)] += u[row] * vc;
                }
            }
        }
        out
    }

    /// `diag(σ)` as an m×p matrix.
    pub fn sigma_matrix(&self) -> CMat {
        let m = self.u.nrows();
        let p = self.v.nrows();
        let mut s = CMat::zeros(m, p);
        for (i, &v) in self.sigma.iter().enumerate() {
            s[(i, i)] = C64::from(v);
        }
        s
    }
}

pub fn svd_full(a: &CMat) -> Result<SliceSvd> {
    let (m, p) = a.shape();
    let k = m.min(p);
    if is_exact_zero(a) {
        return Ok(SliceSvd {
            u: CMat::identity(m, m),
            sigma: vec![0.0; k],
            v: CMat::identity(p, p),
        });
    }
    if !a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::SvdFailure {
            slice: None,
            reason: "non-finite entry".into(),
        });
    }

    let fa = faer::Mat::<C64>::from_fn(m, p, |i, j| a[(i, j)]);
    let svd = fa.svd().map_err(|e| Error::SvdFailure {
        slice: None,
        reason: format!("{e:?}"),
    })?;
    let (fu, fs, fv) = (svd.U(), svd.S(), svd.V());
    let mut u = CMat::from_fn(m, m, |i, j| fu[(i, j)]);
    let mut v = CMat::from_fn(p, p, |i, j| fv[(i, j)]);
    let mut sigma: Vec<f64> = (0..k).map(|i| fs.column_vector()[i].re.max(0.0)).collect();

    // Numerically zero singular values are set to exactly zero.
    let keep_tol = sigma[0] * 1e-13 * (m.max(p) as f64);
    for s in sigma.iter_mut().filter(|s| **s <= keep_tol) {
        *s = 0.0;
    }
    for j in 0..k {
        let phase = leading_phase(&u.column(j).into_owned());
        u.column_mut(j).iter_mut().for_each(|z| *z *= phase);
        v.column_mut(j).iter_mut().for_each(|z| *z *= phase);
    }
    Ok(SliceSvd { u, sigma, v })
}

/// Unit-modulus factor making the first non-negligible entry real positive.
fn leading_phase(col: &DVector<C64>) -> C64 {
    let scale = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for z in col.iter() {
        let r = z.norm();
        if r > 1e-12 * scale {
            return z.conj() / r;
        }
    }
    C64::from(1.0)
}

/// Singular values in non-increasing order.
pub fn singular_values(a: &CMat) -> Vec<f64> {
    let (m, p) = a.shape();
    if m == 0 || p == 0 {
        return Vec::new();
    }
    faer::Mat::<C64>::from_fn(m, p, |i, j| a[(i, j)])
        .singular_values()
        .map(|s| s.into_iter().map(|x| x.max(0.0)).collect())
        .unwrap_or_else(|_| vec![f64::NAN; m.min(p)])
}

/// Largest singular value.
pub fn spectral_norm(a: &CMat) -> f64 {
    let (m, p) = a.shape();
    if m == 0 || p == 0 || is_exact_zero(a) {
        return 0.0;
    }
    if m.min(p) <= DENSE_NORM_MAX {
        singular_values(a).first().copied().unwrap_or(0.0)
    } else {
        power_iteration_norm(a, 1e-12, 10 * m.min(p))
    }
}

/// Power iteration on `AᴴA`.
pub fn power_iteration_norm(a: &CMat, tol: f64, max_iter: usize) -> f64 {
    let p = a.ncols();
    // deterministic, generic start vector
    let mut x = DVector::<C64>::from_fn(p, |i, _| C64::new(1.0 + (i as f64).sin() * 0.5, 0.25));
    let nx = x.norm();
    x /= C64::from(nx);
    let mut est = 0.0;
    for _ in 0..max_iter.max(1) {
        let y = a * &x;
        let z = a.adjoint() * &y;
        let nz = z.norm();
        if nz == 0.0 {
            return 0.0;
        }
        let next = y.norm();
        x = z / C64::from(nz);
        if (next - est).abs() <= tol * next.max(1.0) {
            est = next;
            break;
        }
        est = next;
    }
    est
}

/// Max-entry deviation of `AᴴA` and `AAᴴ` from the identity.
pub fn unitarity_defect(a: &CMat) -> f64 {
    let n = a.nrows();
    let eye = CMat::identity(n, n);
    let d1 = (a.adjoint() * a - &eye).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let d2 = (a * a.adjoint() - &eye).iter().map(|z| z.norm()).fold(0.0, f64::max);
    d1.max(d2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_pcg::Pcg64;

    fn random(m: usize, p: usize, rng: &mut Pcg64) -> CMat {
        CMat::from_fn(m, p, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn svd_reconstructs_and_is_unitary() {
        let mut rng = Pcg64::seed_from_u64(7);
        for &(m, p) in &[(1, 1), (3, 2), (2, 5), (4, 4), (6, 1)] {
            let a = random(m, p, &mut rng);
            let s = svd_full(&a).unwrap();
            let rec = &s.u * s.sigma_matrix() * s.v.adjoint();
            assert!((rec - &a).norm() < 1e-12);
            assert!(unitarity_defect(&s.u) < 1e-12);
            assert!(unitarity_defect(&s.v) < 1e-12);
            assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rank_deficient_factors_stay_unitary() {
        let mut rng = Pcg64::seed_from_u64(3);
        let x = random(5, 1, &mut rng);
        let y = random(1, 4, &mut rng);
        let a = &x * &y;
        let s = svd_full(&a).unwrap();
        assert_eq!(s.rank(), 1);
        assert!(unitarity_defect(&s.u) < 1e-12);
        assert!(unitarity_defect(&s.v) < 1e-12);
        assert!((s.reconstruct(1) - &a).norm() < 1e-12);
    }

    #[test]
    fn phase_convention() {
        let mut rng = Pcg64::seed_from_u64(11);
        let a = random(3, 3, &mut rng);
        let s = svd_full(&a).unwrap();
        for j in 0..3 {
            let lead = s.u.column(j)[0];
            assert!(lead.im.abs() < 1e-14 && lead.re > 0.0);
        }
    }

    #[test]
    fn zero_matrix() {
        let s = svd_full(&CMat::zeros(2, 3)).unwrap();
        assert_eq!(s.sigma, vec![0.0, 0.0]);
        assert_eq!(s.rank(), 0);
    }

    #[test]
    fn power_iteration_matches_dense() {
        let mut rng = Pcg64::seed_from_u64(5);
        let a = random(8, 6, &mut rng);
        let dense = spectral_norm(&a);
        let pi = power_iteration_norm(&a, 1e-14, 5000);
        assert!((dense - pi).abs() < 1e-9 * dense);
    }
}
