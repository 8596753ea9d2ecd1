//! Finite tube transforms and the transform-domain tube product.
//!
//! A [`TransformSpec`] wraps an invertible `n × n` matrix `M`. Tubes are
//! multiplied by `x ⋆ y = M⁻¹(Mx ⊙ My)`. The DFT and DCT-II kinds are held as
//! explicit matrices up to [`EXPLICIT_MAX`] and evaluated through FFTs above.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};
use crate::tensor::TubeArray;

/// Largest tube length for which DFT/DCT are stored as dense matrices.
pub const EXPLICIT_MAX: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Identity,
    DftUnitary,
    Dct2Orthonormal,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// A spatial-domain tube of length `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteTube {
    pub coeffs: Vec<C64>,
}

impl FiniteTube {
    pub fn new(coeffs: Vec<C64>) -> Self {
        Self { coeffs }
    }

    pub fn from_real(values: &[f64]) -> Self {
        Self::new(values.iter().map(|&v| C64::from(v)).collect())
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }
}

#[derive(Clone)]
enum Backend {
    Identity,
    Matrix { forward: Arc<CMat>, inverse: Arc<CMat> },
    Fft(Arc<FftPlans>),
}

struct FftPlans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Immutable description of an invertible tube transform.
#[derive(Clone)]
pub struct TransformSpec {
    kind: TransformKind,
    n: usize,
    backend: Backend,
}

impl fmt::Debug for TransformSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let backend = match self.backend {
            Backend::Identity => "identity",
            Backend::Matrix { .. } => "matrix",
            Backend::Fft(_) => "fft",
        };
        f.debug_struct("TransformSpec")
            .field("kind", &self.kind)
            .field("n", &self.n)
            .field("backend", &backend)
            .finish()
    }
}

impl PartialEq for TransformSpec {
    fn eq(&self, other: &Self) -> bool {
        if self.kind != other.kind || self.n != other.n {
            return false;
        }
        match (&self.backend, &other.backend) {
            (Backend::Matrix { forward: a, .. }, Backend::Matrix { forward: b, .. }) if self.kind == TransformKind::Custom => a == b,
            _ => true,
        }
    }
}

fn check_size(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Invalid("tube length must be positive".into()));
    }
    Ok(())
}

/// Dense unitary DFT matrix, `F[j,k] = exp(-2πi jk/n)/√n`.
pub fn dft_matrix(n: usize) -> CMat {
    let scale = 1.0 / (n as f64).sqrt();
    CMat::from_fn(n, n, |j, k| {
        // reduce jk mod n before the trig call to keep the angle small
        let r = ((j * k) % n) as f64;
        C64::from_polar(scale, -2.0 * PI * r / n as f64)
    })
}

/// Dense orthonormal DCT-II matrix.
pub fn dct2_matrix(n: usize) -> CMat {
    CMat::from_fn(n, n, |k, j| {
        let s = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        C64::from(s * (PI * (2 * j + 1) as f64 * k as f64 / (2 * n) as f64).cos())
    })
}

impl TransformSpec {
    pub fn identity(n: usize) -> Result<Self> {
        check_size(n)?;
        Ok(Self {
            kind: TransformKind::Identity,
            n,
            backend: Backend::Identity,
        })
    }

    pub fn dft_unitary(n: usize) -> Result<Self> {
        check_size(n)?;
        if n <= EXPLICIT_MAX {
            let f = dft_matrix(n);
            let inv = f.adjoint();
            Ok(Self::with_matrices(TransformKind::DftUnitary, f, inv))
        } else {
            Ok(Self::fast(TransformKind::DftUnitary, n))
        }
    }

    pub fn dct2_orthonormal(n: usize) -> Result<Self> {
        check_size(n)?;
        if n <= EXPLICIT_MAX {
            let c = dct2_matrix(n);
            let inv = c.transpose();
            Ok(Self::with_matrices(TransformKind::Dct2Orthonormal, c, inv))
        } else {
            Ok(Self::fast(TransformKind::Dct2Orthonormal, n))
        }
    }

    /// Arbitrary invertible matrix. Non-unitary matrices are accepted; see
    /// [`TransformSpec::is_unitary_multiple`].
    pub fn custom(matrix: CMat) -> Result<Self> {
        let (r, c) = matrix.shape();
        if r != c {
            return Err(Error::DimensionMismatch(format!("custom transform must be square, got {r}x{c}")));
        }
        check_size(r)?;
        if !matrix.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NotInvertible("non-finite entry".into()));
        }
        let inverse = matrix
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NotInvertible("LU factorization is singular".into()))?;
        let residual = (&inverse * &matrix - CMat::identity(r, r)).norm();
        if !residual.is_finite() || residual > 1e-10 {
            return Err(Error::NotInvertible(format!("‖M⁻¹M − I‖_F = {residual:e}")));
        }
        Ok(Self::with_matrices(TransformKind::Custom, matrix, inverse))
    }

    fn with_matrices(kind: TransformKind, forward: CMat, inverse: CMat) -> Self {
        Self {
            kind,
            n: forward.nrows(),
            backend: Backend::Matrix {
                forward: Arc::new(forward),
                inverse: Arc::new(inverse),
            },
        }
    }

    /// FFT-backed DFT or DCT-II of any length. Used automatically above
    /// [`EXPLICIT_MAX`].
    pub fn fast(kind: TransformKind, n: usize) -> Self {
        assert!(matches!(kind, TransformKind::DftUnitary | TransformKind::Dct2Orthonormal));
        let len = if kind == TransformKind::DftUnitary { n } else { 2 * n };
        let mut planner = FftPlanner::new();
        let plans = FftPlans {
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        };
        Self {
            kind,
            n,
            backend: Backend::Fft(Arc::new(plans)),
        }
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Materialize `M` as a dense matrix.
    pub fn matrix(&self) -> CMat {
        match &self.backend {
            Backend::Identity => CMat::identity(self.n, self.n),
            Backend::Matrix { forward, .. } => (**forward).clone(),
            Backend::Fft(_) => match self.kind {
                TransformKind::DftUnitary => dft_matrix(self.n),
                _ => dct2_matrix(self.n),
            },
        }
    }

    /// Materialize `M⁻¹`.
    pub fn inverse_matrix(&self) -> CMat {
        match &self.backend {
            Backend::Matrix { inverse, .. } => (**inverse).clone(),
            _ => self.matrix().adjoint(),
        }
    }

    /// True when `MᴴM = cI` for some `c > 0` within `tol` elementwise. The
    /// Eckart–Young guarantees of the finite decomposition need this.
    pub fn is_unitary_multiple(&self, tol: f64) -> bool {
        match self.kind {
            TransformKind::Identity | TransformKind::DftUnitary | TransformKind::Dct2Orthonormal => true,
            TransformKind::Custom => {
                let m = self.matrix();
                let g = m.adjoint() * &m;
                let scale = g[(0, 0)].re;
                if scale <= 0.0 {
                    return false;
                }
                let eye = CMat::identity(self.n, self.n) * C64::from(scale);
                (g - eye).iter().all(|z| z.norm() <= tol * scale.max(1.0))
            }
        }
    }

    /// True when `MᴴM = I` within `tol` elementwise.
    pub fn is_unitary(&self, tol: f64) -> bool {
        match self.kind {
            TransformKind::Custom => {
                let m = self.matrix();
                let g = m.adjoint() * &m - CMat::identity(self.n, self.n);
                g.iter().all(|z| z.norm() <= tol)
            }
            _ => true,
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::DimensionMismatch(format!("tube length {len}, transform size {}", self.n)));
        }
        Ok(())
    }

    /// Apply `M` (or `M⁻¹`) to a slice in place.
    fn apply_in_place(&self, x: &mut [C64], dir: Direction) {
        match &self.backend {
            Backend::Identity => {}
            Backend::Matrix { forward, inverse } => {
                let m = match dir {
                    Direction::Forward => forward,
                    Direction::Inverse => inverse,
                };
                let y: Vec<C64> = (0..self.n)
                    .map(|r| m.row(r).iter().zip(x.iter()).map(|(a, b)| a * b).sum())
                    .collect();
                x.copy_from_slice(&y);
            }
            Backend::Fft(plans) => match (self.kind, dir) {
                (TransformKind::DftUnitary, Direction::Forward) => {
                    plans.forward.process(x);
                    let s = 1.0 / (self.n as f64).sqrt();
                    x.iter_mut().for_each(|z| *z *= s);
                }
                (TransformKind::DftUnitary, Direction::Inverse) => {
                    plans.inverse.process(x);
                    let s = 1.0 / (self.n as f64).sqrt();
                    x.iter_mut().for_each(|z| *z *= s);
                }
                (_, Direction::Forward) => dct2_fast(x, &plans.forward),
                (_, Direction::Inverse) => dct3_fast(x, &plans.inverse),
            },
        }
    }

    pub fn forward(&self, x: &[C64]) -> Result<Vec<C64>> {
        self.check_len(x.len())?;
        let mut y = x.to_vec();
        self.apply_in_place(&mut y, Direction::Forward);
        Ok(y)
    }

    pub fn inverse(&self, xhat: &[C64]) -> Result<Vec<C64>> {
        self.check_len(xhat.len())?;
        let mut y = xhat.to_vec();
        self.apply_in_place(&mut y, Direction::Inverse);
        Ok(y)
    }

    pub fn descriptor(&self) -> TransformDescriptor {
        let matrix = (self.kind == TransformKind::Custom).then(|| {
            let m = self.matrix();
            (0..self.n).map(|r| (0..self.n).map(|c| m[(r, c)]).collect()).collect()
        });
        TransformDescriptor {
            kind: self.kind,
            n: self.n,
            matrix,
        }
    }

    pub fn from_descriptor(d: &TransformDescriptor) -> Result<Self> {
        match d.kind {
            TransformKind::Identity => Self::identity(d.n),
            TransformKind::DftUnitary => Self::dft_unitary(d.n),
            TransformKind::Dct2Orthonormal => Self::dct2_orthonormal(d.n),
            TransformKind::Custom => {
                let rows = d
                    .matrix
                    .as_ref()
                    .ok_or_else(|| Error::Header("custom transform without matrix".into()))?;
                if rows.len() != d.n || rows.iter().any(|r| r.len() != d.n) {
                    return Err(Error::Header("custom transform matrix has wrong shape".into()));
                }
                Self::custom(CMat::from_fn(d.n, d.n, |r, c| rows[r][c]))
            }
        }
    }
}

/// JSON form of a [`TransformSpec`]: `{kind, n, matrix?}` with row-major
/// `[re, im]` entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformDescriptor {
    pub kind: TransformKind,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<C64>>>,
}

// DCT-II through a length-2n FFT of the even extension:
// C_k = s_k · e^{-iπk/2n} · Y_k / 2.
fn dct2_fast(x: &mut [C64], fft: &Arc<dyn Fft<f64>>) {
    let n = x.len();
    let mut buf = Vec::with_capacity(2 * n);
    buf.extend_from_slice(x);
    buf.extend(x.iter().rev());
    fft.process(&mut buf);
    let s0 = (1.0 / n as f64).sqrt();
    let sk = (2.0 / n as f64).sqrt();
    for (k, out) in x.iter_mut().enumerate() {
        let tw = C64::from_polar(0.5, -PI * k as f64 / (2 * n) as f64);
        let s = if k == 0 { s0 } else { sk };
        *out = buf[k] * tw * s;
    }
}

// DCT-III (inverse of the orthonormal DCT-II) through a length-2n inverse FFT.
fn dct3_fast(c: &mut [C64], ifft: &Arc<dyn Fft<f64>>) {
    let n = c.len();
    let s0 = (1.0 / n as f64).sqrt();
    let sk = (2.0 / n as f64).sqrt();
    let mut buf = vec![C64::from(0.0); 2 * n];
    for k in 0..n {
        let s = if k == 0 { s0 } else { sk };
        let a = c[k] * s;
        let angle = PI * k as f64 / (2 * n) as f64;
        buf[k] = a * C64::from_polar(1.0, angle);
        if k > 0 {
            buf[2 * n - k] = a * C64::from_polar(1.0, -angle);
        }
    }
    let dc = c[0] * s0;
    ifft.process(&mut buf);
    for (j, out) in c.iter_mut().enumerate() {
        *out = (buf[j] + dc) * 0.5;
    }
}

pub fn forward_tube(x: &FiniteTube, spec: &TransformSpec) -> Result<Vec<C64>> {
    spec.forward(&x.coeffs)
}

pub fn inverse_tube(xhat: &[C64], spec: &TransformSpec) -> Result<FiniteTube> {
    spec.inverse(xhat).map(FiniteTube::new)
}

/// Transform every tube `T[i, j, :]` along the third mode.
pub fn mode3_apply(t: &TubeArray, spec: &TransformSpec, dir: Direction) -> Result<TubeArray> {
    let (m, p, n) = t.shape();
    spec.check_len(n)?;
    let mut out = t.clone();
    out.tubes_mut().par_chunks_mut(n).for_each(|tube| spec.apply_in_place(tube, dir));
    debug_assert_eq!(out.shape(), (m, p, n));
    Ok(out)
}

/// `x ⋆M y = M⁻¹(Mx ⊙ My)`.
pub fn tube_mprod(x: &FiniteTube, y: &FiniteTube, spec: &TransformSpec) -> Result<FiniteTube> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("tube lengths {} and {}", x.len(), y.len())));
    }
    let xh = spec.forward(&x.coeffs)?;
    let yh = spec.forward(&y.coeffs)?;
    let prod: Vec<C64> = xh.iter().zip(&yh).map(|(a, b)| a * b).collect();
    inverse_tube(&prod, spec)
}

/// The multiplicative unit `e = M⁻¹ 1ₙ` of `⋆M`.
pub fn tube_unit(spec: &TransformSpec) -> FiniteTube {
    let ones = vec![C64::from(1.0); spec.size()];
    FiniteTube::new(spec.inverse(&ones).expect("length matches by construction"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use rand::{Rng, SeedableRng};
    use rand_pcg::Pcg64;

    fn close(a: &[C64], b: &[C64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).norm() <= tol)
    }

    fn rand_tube(n: usize, rng: &mut Pcg64) -> FiniteTube {
        FiniteTube::new(
            (0..n)
                .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect(),
        )
    }

    fn specs(n: usize) -> Vec<TransformSpec> {
        let mut rng = Pcg64::seed_from_u64(n as u64);
        let m = CMat::from_fn(n, n, |i, j| {
            let d = if i == j { 3.0 } else { 0.0 };
            c(d + rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))
        });
        vec![
            TransformSpec::identity(n).unwrap(),
            TransformSpec::dft_unitary(n).unwrap(),
            TransformSpec::dct2_orthonormal(n).unwrap(),
            TransformSpec::custom(m).unwrap(),
        ]
    }

    #[test]
    fn forward_examples() {
        let id = TransformSpec::identity(3).unwrap();
        let x = FiniteTube::from_real(&[1.0, 2.0, 3.0]);
        assert_eq!(forward_tube(&x, &id).unwrap(), x.coeffs);

        // unitary DFT of e_0 is the constant 1/√4 vector
        let f = TransformSpec::dft_unitary(4).unwrap();
        let y = forward_tube(&FiniteTube::from_real(&[1.0, 0.0, 0.0, 0.0]), &f).unwrap();
        assert!(close(&y, &[c(0.5, 0.0); 4], 1e-15));

        let swap = TransformSpec::custom(CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])).unwrap();
        let y = forward_tube(&FiniteTube::from_real(&[5.0, 7.0]), &swap).unwrap();
        assert_eq!(y, vec![c(7.0, 0.0), c(5.0, 0.0)]);
    }

    #[test]
    fn inverse_examples() {
        let id = TransformSpec::identity(2).unwrap();
        assert_eq!(
            inverse_tube(&[c(1.0, 0.0), c(2.0, 0.0)], &id).unwrap().coeffs,
            vec![c(1.0, 0.0), c(2.0, 0.0)]
        );
        let f = TransformSpec::dft_unitary(4).unwrap();
        let x = inverse_tube(&[c(1.0, 0.0); 4], &f).unwrap();
        assert!(close(&x.coeffs, &[c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)], 1e-15));
    }

    #[test]
    fn dimension_mismatch() {
        let f = TransformSpec::dft_unitary(4).unwrap();
        assert!(matches!(
            forward_tube(&FiniteTube::from_real(&[1.0]), &f),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(inverse_tube(&[c(0.0, 0.0); 3], &f), Err(Error::DimensionMismatch(_))));
        let x = FiniteTube::from_real(&[1.0; 4]);
        let y = FiniteTube::from_real(&[1.0; 3]);
        assert!(tube_mprod(&x, &y, &f).is_err());
    }

    #[test]
    fn round_trip_and_isometry() {
        let mut rng = Pcg64::seed_from_u64(1);
        for n in [1, 2, 5, 8] {
            for spec in specs(n) {
                let x = rand_tube(n, &mut rng);
                let back = inverse_tube(&forward_tube(&x, &spec).unwrap(), &spec).unwrap();
                let nx: f64 = x.coeffs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                let err: f64 = back
                    .coeffs
                    .iter()
                    .zip(&x.coeffs)
                    .map(|(a, b)| (a - b).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                assert!(err <= 1e-10 * nx, "{:?} n={n}", spec.kind());
                if spec.kind() != TransformKind::Custom {
                    let xh = forward_tube(&x, &spec).unwrap();
                    let nh: f64 = xh.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                    assert!((nh - nx).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn registered_matrices_are_unitary() {
        for n in [1, 3, 16] {
            for spec in specs(n).into_iter().take(3) {
                let m = spec.matrix();
                let d = m.adjoint() * &m - CMat::identity(n, n);
                assert!(d.iter().all(|z| z.norm() < 1e-12));
                let inv = spec.inverse_matrix() * &m - CMat::identity(n, n);
                assert!(inv.norm() < 1e-10);
            }
        }
    }

    #[test]
    fn mprod_examples() {
        let id = TransformSpec::identity(3).unwrap();
        let r = tube_mprod(
            &FiniteTube::from_real(&[1.0, 2.0, 0.0]),
            &FiniteTube::from_real(&[0.0, 1.0, 5.0]),
            &id,
        )
        .unwrap();
        assert_eq!(r, FiniteTube::from_real(&[0.0, 2.0, 0.0]));

        // unitary DFT scales circular convolution by 1/√n, so δ₀ ⋆ y = y/2 at n=4
        let f = TransformSpec::dft_unitary(4).unwrap();
        let y = FiniteTube::new(vec![c(1.0, 2.0), c(-3.0, 0.5), c(0.0, 1.0), c(4.0, -1.0)]);
        let r = tube_mprod(&FiniteTube::from_real(&[1.0, 0.0, 0.0, 0.0]), &y, &f).unwrap();
        let half: Vec<C64> = y.coeffs.iter().map(|z| z * 0.5).collect();
        assert!(close(&r.coeffs, &half, 1e-14));
    }

    #[test]
    fn unit_commutativity_associativity() {
        let mut rng = Pcg64::seed_from_u64(2);
        for n in [2, 4, 7] {
            for spec in specs(n) {
                let (x, y, z) = (rand_tube(n, &mut rng), rand_tube(n, &mut rng), rand_tube(n, &mut rng));
                let e = tube_unit(&spec);
                assert!(close(&tube_mprod(&x, &e, &spec).unwrap().coeffs, &x.coeffs, 1e-10));
                assert!(close(&tube_mprod(&e, &x, &spec).unwrap().coeffs, &x.coeffs, 1e-10));
                let xy = tube_mprod(&x, &y, &spec).unwrap();
                let yx = tube_mprod(&y, &x, &spec).unwrap();
                assert!(close(&xy.coeffs, &yx.coeffs, 1e-10));
                let l = tube_mprod(&xy, &z, &spec).unwrap();
                let r = tube_mprod(&x, &tube_mprod(&y, &z, &spec).unwrap(), &spec).unwrap();
                assert!(close(&l.coeffs, &r.coeffs, 1e-10));
            }
        }
    }

    #[test]
    fn basis_dependence() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let phi1 = FiniteTube::from_real(&[1.0, 0.0]);
        let phi2 = FiniteTube::from_real(&[0.0, 1.0]);
        let f = TransformSpec::identity(2).unwrap();
        assert_eq!(tube_mprod(&phi1, &phi2, &f).unwrap(), FiniteTube::from_real(&[0.0, 0.0]));
        let g = TransformSpec::custom(CMat::from_row_slice(2, 2, &[c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)])).unwrap();
        let r = tube_mprod(&phi1, &phi2, &g).unwrap();
        assert!(close(&r.coeffs, &[c(0.0, 0.0), c(h, 0.0)], 1e-14));
    }

    #[test]
    fn fast_paths_agree_with_matrices() {
        let mut rng = Pcg64::seed_from_u64(9);
        for n in [1, 2, 3, 17, 64, 100] {
            for kind in [TransformKind::DftUnitary, TransformKind::Dct2Orthonormal] {
                let fast = TransformSpec::fast(kind, n);
                let dense = match kind {
                    TransformKind::DftUnitary => TransformSpec::dft_unitary(n).unwrap(),
                    _ => TransformSpec::dct2_orthonormal(n).unwrap(),
                };
                let x = rand_tube(n, &mut rng);
                assert!(
                    close(&fast.forward(&x.coeffs).unwrap(), &dense.forward(&x.coeffs).unwrap(), 1e-9),
                    "{kind:?} {n}"
                );
                assert!(
                    close(&fast.inverse(&x.coeffs).unwrap(), &dense.inverse(&x.coeffs).unwrap(), 1e-9),
                    "{kind:?} {n}"
                );
            }
        }
        assert!(matches!(
            TransformSpec::dft_unitary(EXPLICIT_MAX + 1).unwrap().backend,
            Backend::Fft(_)
        ));
    }

    #[test]
    fn mode3_round_trip() {
        let mut rng = Pcg64::seed_from_u64(4);
        let t = TubeArray::from_fn(2, 3, 4, |_, _, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let id = TransformSpec::identity(4).unwrap();
        assert_eq!(mode3_apply(&t, &id, Direction::Forward).unwrap(), t);
        let f = TransformSpec::dft_unitary(4).unwrap();
        let back = mode3_apply(&mode3_apply(&t, &f, Direction::Forward).unwrap(), &f, Direction::Inverse).unwrap();
        assert!(close(back.tubes(), t.tubes(), 1e-10));
        let one = TubeArray::from_fn(1, 1, 4, |_, _, k| c(k as f64, 1.0));
        let fwd = mode3_apply(&one, &f, Direction::Forward).unwrap();
        assert_eq!(
            fwd.tubes(),
            forward_tube(&FiniteTube::new(one.tubes().to_vec()), &f).unwrap().as_slice()
        );
        assert!(mode3_apply(&t, &TransformSpec::identity(3).unwrap(), Direction::Forward).is_err());
    }

    #[test]
    fn custom_rejects_singular_and_flags_non_unitary() {
        assert!(matches!(TransformSpec::custom(CMat::zeros(2, 2)), Err(Error::NotInvertible(_))));
        let scaled = TransformSpec::custom(CMat::identity(3, 3) * C64::from(2.0)).unwrap();
        assert!(scaled.is_unitary_multiple(1e-10));
        assert!(!scaled.is_unitary(1e-10));
        let skew = TransformSpec::custom(CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)])).unwrap();
        assert!(!skew.is_unitary_multiple(1e-10));
    }

    #[test]
    fn descriptor_round_trip() {
        for spec in specs(3) {
            let d = spec.descriptor();
            let json = serde_json::to_string(&d).unwrap();
            let back: TransformDescriptor = serde_json::from_str(&json).unwrap();
            assert_eq!(TransformSpec::from_descriptor(&back).unwrap(), spec);
        }
    }
}
