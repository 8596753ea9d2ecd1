//! Quasitubal tensors and finite tubal tensors.
//!
//! A [`QtTensor`] of shape `m × p` is stored by its transform-domain frontal
//! slices: explicit `m × p` matrices on a band `lo..lo+len` and one tail
//! slice repeated at every other index. Entry `(i, j)` read along the frontal
//! axis is an [`EcSeq`].

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, frobenius_sq, is_exact_zero, CMat, C64};
use crate::quasitube::{union_band, EcSeq, HNorm};
use crate::transform::{mode3_apply, Direction, TransformSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct QtTensor {
    m: usize,
    p: usize,
    lo: i64,
    slices: Vec<CMat>,
    tail: CMat,
}

impl QtTensor {
    pub fn new(lo: i64, slices: Vec<CMat>, tail: CMat) -> Result<Self> {
        let (m, p) = tail.shape();
        if m == 0 || p == 0 {
            return Err(Error::Invalid("tensor dimensions must be positive".into()));
        }
        if let Some((k, s)) = slices.iter().enumerate().find(|(_, s)| s.shape() != (m, p)) {
            return Err(Error::DimensionMismatch(format!(
                "slice {} is {}x{}, tail is {m}x{p}",
                lo + k as i64,
                s.nrows(),
                s.ncols()
            )));
        }
        let mut t = Self { m, p, lo, slices, tail };
        t.canonicalize();
        Ok(t)
    }

    /// Tail-zero tensor with the given band slices.
    pub fn from_band(lo: i64, slices: Vec<CMat>) -> Result<Self> {
        let Some(first) = slices.first() else {
            return Err(Error::Invalid("cannot infer shape from an empty band".into()));
        };
        let tail = CMat::zeros(first.nrows(), first.ncols());
        Self::new(lo, slices, tail)
    }

    pub fn zeros(m: usize, p: usize) -> Self {
        Self::new(0, Vec::new(), CMat::zeros(m, p)).expect("positive shape")
    }

    /// `I_p`: identity in every frontal slice.
    pub fn identity(p: usize) -> Self {
        Self::new(0, Vec::new(), CMat::identity(p, p)).expect("positive shape")
    }

    /// Build from entrywise quasitubes. All rows must have equal length.
    pub fn from_entries(entries: &[Vec<EcSeq>]) -> Result<Self> {
        let m = entries.len();
        let p = entries.first().map_or(0, |r| r.len());
        if m == 0 || p == 0 || entries.iter().any(|r| r.len() != p) {
            return Err(Error::Invalid("entries must form a non-empty rectangle".into()));
        }
        let band = entries.iter().flatten().fold(None, |acc, e| union_band(acc, e.band()));
        let tail = CMat::from_fn(m, p, |i, j| entries[i][j].tail());
        let (lo, slices) = match band {
            None => (0, Vec::new()),
            Some((lo, hi)) => (lo, (lo..=hi).map(|k| CMat::from_fn(m, p, |i, j| entries[i][j].get(k))).collect()),
        };
        Self::new(lo, slices, tail)
    }

    fn canonicalize(&mut self) {
        let lead = self.slices.iter().take_while(|s| **s == self.tail).count();
        if lead == self.slices.len() {
            self.slices.clear();
            self.lo = 0;
            return;
        }
        let trail = self.slices.iter().rev().take_while(|s| **s == self.tail).count();
        self.slices.truncate(self.slices.len() - trail);
        self.slices.drain(..lead);
        self.lo += lead as i64;
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.m, self.p)
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn band_slices(&self) -> &[CMat] {
        &self.slices
    }

    pub fn tail_slice(&self) -> &CMat {
        &self.tail
    }

    /// Inclusive band, `None` if every slice equals the tail.
    pub fn band(&self) -> Option<(i64, i64)> {
        (!self.slices.is_empty()).then(|| (self.lo, self.lo + self.slices.len() as i64 - 1))
    }

    /// Transform-domain frontal slice at index `k`.
    pub fn slice(&self, k: i64) -> &CMat {
        let off = k - self.lo;
        if off >= 0 && (off as usize) < self.slices.len() {
            &self.slices[off as usize]
        } else {
            &self.tail
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> EcSeq {
        EcSeq::new(self.lo, self.slices.iter().map(|s| s[(i, j)]).collect(), self.tail[(i, j)])
    }

    /// True when the tail slice is zero, i.e. the tensor lies in `H^{m×p}`.
    pub fn is_tail_zero(&self) -> bool {
        is_exact_zero(&self.tail)
    }

    /// Apply `f` slice-wise over the union band of `self` and `other`.
    pub fn zip_slices(&self, other: &Self, shape: (usize, usize), f: impl Fn(&CMat, &CMat) -> CMat + Sync) -> Result<Self> {
        let tail = f(&self.tail, &other.tail);
        let (lo, slices) = match union_band(self.band(), other.band()) {
            None => (0, Vec::new()),
            Some((lo, hi)) => {
                let ks: Vec<i64> = (lo..=hi).collect();
                (lo, ks.par_iter().map(|&k| f(self.slice(k), other.slice(k))).collect())
            }
        };
        debug_assert_eq!(tail.shape(), shape);
        Self::new(lo, slices, tail)
    }

    pub fn map_slices(&self, f: impl Fn(&CMat) -> CMat + Sync) -> Result<Self> {
        let slices = self.slices.par_iter().map(&f).collect();
        Self::new(self.lo, slices, f(&self.tail))
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.m, self.p, other.m, other.p
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        self.zip_slices(other, self.shape(), |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        self.zip_slices(other, self.shape(), |a, b| a - b)
    }

    pub fn scale(&self, alpha: C64) -> Self {
        self.map_slices(|s| s * alpha).expect("shape preserved")
    }

    /// `X ⋆F Y`: facewise matrix product in the transform domain.
    pub fn prod(&self, other: &Self) -> Result<Self> {
        if self.p != other.m {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.m, self.p, other.m, other.p
            )));
        }
        self.zip_slices(other, (self.m, other.p), |a, b| a * b)
    }

    /// `X*`: every slice conjugate-transposed.
    pub fn conj_transpose(&self) -> Self {
        self.map_slices(|s| s.adjoint()).expect("shape preserved")
    }

    /// `‖X‖_H = √(Σₖ ‖X̂ₖ‖_F²)`, or `NotInH` for a nonzero tail.
    pub fn h_norm(&self) -> HNorm {
        if !self.is_tail_zero() {
            return HNorm::NotInH;
        }
        HNorm::Finite(self.slices.iter().map(frobenius_sq).sum::<f64>().sqrt())
    }

    /// Operator norm: supremum of the slice spectral norms.
    pub fn op_norm(&self) -> f64 {
        let band = self.slices.par_iter().map(linalg::spectral_norm).reduce(|| 0.0, f64::max);
        band.max(linalg::spectral_norm(&self.tail))
    }

    /// `Tr(X) = Σⱼ x_{jj}`.
    pub fn trace(&self) -> Result<EcSeq> {
        if self.m != self.p {
            return Err(Error::NonSquare { m: self.m, p: self.p });
        }
        let tr = |s: &CMat| (0..self.m).map(|i| s[(i, i)]).sum::<C64>();
        Ok(EcSeq::new(self.lo, self.slices.iter().map(tr).collect(), tr(&self.tail)))
    }

    /// Module inner product `⟨X, Y⟩ = Tr(X* ⋆F Y)`, a quasitube.
    pub fn gram_inner(&self, other: &Self) -> Result<EcSeq> {
        self.same_shape(other)?;
        self.conj_transpose().prod(other)?.trace()
    }

    /// Hilbert-space inner product on `H^{m×p}`: `Σ_{h,j} ⟨x_{hj}, y_{hj}⟩`,
    /// linear in the first argument.
    pub fn h_inner(&self, other: &Self) -> Result<C64> {
        self.same_shape(other)?;
        if !self.is_tail_zero() || !other.is_tail_zero() {
            return Err(Error::NotInH);
        }
        let Some((lo, hi)) = union_band(self.band(), other.band()) else {
            return Ok(C64::from(0.0));
        };
        Ok((lo..=hi)
            .map(|k| {
                self.slice(k)
                    .iter()
                    .zip(other.slice(k).iter())
                    .map(|(a, b)| a * b.conj())
                    .sum::<C64>()
            })
            .sum())
    }

    /// Every band and tail slice diagonal (exact zeros off the diagonal up to
    /// `tol`).
    pub fn is_f_diagonal(&self, tol: f64) -> bool {
        let diag = |s: &CMat| {
            s.iter()
                .enumerate()
                .all(|(idx, z)| idx % s.nrows() == idx / s.nrows() || z.norm() <= tol)
        };
        self.slices.iter().all(diag) && diag(&self.tail)
    }

    /// `U* ⋆F U = U ⋆F U* = I` slice by slice within `tol`.
    pub fn is_star_unitary(&self, tol: f64) -> Result<bool> {
        if self.m != self.p {
            return Err(Error::NonSquare { m: self.m, p: self.p });
        }
        Ok(self.unitarity_defect() <= tol)
    }

    /// Largest entrywise deviation of `U*U` or `UU*` from the identity.
    pub fn unitarity_defect(&self) -> f64 {
        self.slices
            .iter()
            .chain(std::iter::once(&self.tail))
            .map(linalg::unitarity_defect)
            .fold(0.0, f64::max)
    }

    /// Restrict to the single frontal index `t`: `φ⁽ᵗ⁾ ⋆F X`.
    pub fn restrict(&self, t: i64) -> Self {
        Self::new(t, vec![self.slice(t).clone()], CMat::zeros(self.m, self.p)).expect("shape preserved")
    }

    /// Rank-one atom `σ φ⁽ᵗ⁾ ⋆F u ⋆F v*` living in frontal slice `t`.
    pub fn atom(t: i64, sigma: f64, u: &[C64], v: &[C64]) -> Self {
        let s = CMat::from_fn(u.len(), v.len(), |i, j| u[i] * v[j].conj() * sigma);
        Self::new(t, vec![s], CMat::zeros(u.len(), v.len())).expect("non-empty vectors")
    }

    /// Max over a window of slice-wise Frobenius distances, tails included.
    pub fn max_slice_distance(&self, other: &Self) -> f64 {
        let tail = (&self.tail - &other.tail).norm();
        match union_band(self.band(), other.band()) {
            None => tail,
            Some((lo, hi)) => (lo..=hi).map(|k| (self.slice(k) - other.slice(k)).norm()).fold(tail, f64::max),
        }
    }
}

/// Dense `m × p × n` complex array stored tube-contiguous:
/// index `(i, j, k)` lives at `(i·p + j)·n + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct TubeArray {
    m: usize,
    p: usize,
    n: usize,
    data: Vec<C64>,
}

impl TubeArray {
    pub fn zeros(m: usize, p: usize, n: usize) -> Self {
        Self {
            m,
            p,
            n,
            data: vec![C64::from(0.0); m * p * n],
        }
    }

    pub fn from_fn(m: usize, p: usize, n: usize, mut f: impl FnMut(usize, usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(m * p * n);
        for i in 0..m {
            for j in 0..p {
                for k in 0..n {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { m, p, n, data }
    }

    pub fn from_vec(m: usize, p: usize, n: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != m * p * n {
            return Err(Error::DimensionMismatch(format!("{} values for {m}x{p}x{n}", data.len())));
        }
        Ok(Self { m, p, n, data })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.m, self.p, self.n)
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> C64 {
        self.data[(i * self.p + j) * self.n + k]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: C64) {
        self.data[(i * self.p + j) * self.n + k] = v;
    }

    pub fn tube(&self, i: usize, j: usize) -> &[C64] {
        let s = (i * self.p + j) * self.n;
        &self.data[s..s + self.n]
    }

    pub fn tubes(&self) -> &[C64] {
        &self.data
    }

    pub fn tubes_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn frontal(&self, k: usize) -> CMat {
        CMat::from_fn(self.m, self.p, |i, j| self.get(i, j, k))
    }

    pub fn from_frontals(slices: &[CMat]) -> Result<Self> {
        let n = slices.len();
        let Some(first) = slices.first() else {
            return Err(Error::Invalid("no frontal slices".into()));
        };
        let (m, p) = first.shape();
        if slices.iter().any(|s| s.shape() != (m, p)) {
            return Err(Error::DimensionMismatch("frontal slices differ in shape".into()));
        }
        Ok(Self::from_fn(m, p, n, |i, j, k| slices[k][(i, j)]))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Spatial-domain tubal tensor bound to a finite transform.
#[derive(Clone, Debug)]
pub struct FiniteTubalTensor {
    data: TubeArray,
    spec: TransformSpec,
}

impl FiniteTubalTensor {
    pub fn new(data: TubeArray, spec: TransformSpec) -> Result<Self> {
        if data.shape().2 != spec.size() {
            return Err(Error::DimensionMismatch(format!(
                "tube length {} but transform size {}",
                data.shape().2,
                spec.size()
            )));
        }
        Ok(Self { data, spec })
    }

    /// Build from transform-domain frontal slices.
    pub fn from_transformed(slices: &[CMat], spec: TransformSpec) -> Result<Self> {
        let hat = TubeArray::from_frontals(slices)?;
        let data = mode3_apply(&hat, &spec, Direction::Inverse)?;
        Self::new(data, spec)
    }

    /// The `⋆M` identity: `I_p` in every transform-domain slice.
    pub fn identity(p: usize, spec: TransformSpec) -> Result<Self> {
        let n = spec.size();
        Self::from_transformed(&vec![CMat::identity(p, p); n], spec)
    }

    pub fn data(&self) -> &TubeArray {
        &self.data
    }

    pub fn spec(&self) -> &TransformSpec {
        &self.spec
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.data.shape()
    }

    /// Transform-domain frontal slices `X̂_{:,:,k}`.
    pub fn transformed_slices(&self) -> Result<Vec<CMat>> {
        let hat = mode3_apply(&self.data, &self.spec, Direction::Forward)?;
        Ok((0..hat.shape().2).map(|k| hat.frontal(k)).collect())
    }

    /// `X ⋆M Y = (X̂ △ Ŷ) ×₃ M⁻¹`.
    pub fn tprod(&self, other: &Self) -> Result<Self> {
        if self.spec != other.spec {
            return Err(Error::DimensionMismatch("operands use different transforms".into()));
        }
        let (m, p, _) = self.shape();
        let (p2, _, _) = other.shape();
        if p != p2 {
            return Err(Error::DimensionMismatch(format!("inner dimensions {p} and {p2}")));
        }
        let a = self.transformed_slices()?;
        let b = other.transformed_slices()?;
        let prod: Vec<CMat> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        debug_assert!(prod.iter().all(|s| s.nrows() == m));
        Self::from_transformed(&prod, self.spec.clone())
    }

    /// `Xᴴ` under `⋆M`: transform-domain slices conjugate-transposed.
    pub fn conj_transpose(&self) -> Result<Self> {
        let slices: Vec<CMat> = self.transformed_slices()?.iter().map(|s| s.adjoint()).collect();
        Self::from_transformed(&slices, self.spec.clone())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() || self.spec != other.spec {
            return Err(Error::DimensionMismatch("shape or transform differs".into()));
        }
        let data: Vec<C64> = self.data.tubes().iter().zip(other.data.tubes()).map(|(a, b)| a + b).collect();
        let (m, p, n) = self.shape();
        Self::new(TubeArray::from_vec(m, p, n, data)?, self.spec.clone())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(C64::from(-1.0)))
    }

    pub fn scale(&self, alpha: C64) -> Self {
        let (m, p, n) = self.shape();
        let data = self.data.tubes().iter().map(|z| z * alpha).collect();
        Self {
            data: TubeArray::from_vec(m, p, n, data).expect("same length"),
            spec: self.spec.clone(),
        }
    }

    pub fn frobenius(&self) -> f64 {
        self.data.frobenius()
    }

    /// Embed into the quasitubal setting: transform-domain slices placed at
    /// frontal indices `offset..offset+n`, zero tail. The transform must be
    /// unitary so that the slices are orthonormal-basis coordinates.
    pub fn to_qt(&self, offset: i64) -> Result<QtTensor> {
        if !self.spec.is_unitary(1e-10) {
            return Err(Error::NonUnitaryTransform("finite_to_qt needs orthonormal coordinates".into()));
        }
        QtTensor::from_band(offset, self.transformed_slices()?)
    }
}
