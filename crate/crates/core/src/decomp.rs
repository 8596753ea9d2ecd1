//! Quasitubal SVD, rank notions and rank truncations.
//!
//! The q-SVD applies a matrix SVD to every transform-domain frontal slice
//! (band slices and the tail slice). Singular values of all slices together
//! form the table `(l, t) ↦ ŝ_l^{(t)}`; ordering that table gives the
//! rank-one components used by the explicit rank-`q` truncation, which is
//! optimal in the `H`-norm among tensors of implicit rank at most `q`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{rank_threshold, svd_full, CMat, SliceSvd, C64};
use crate::quasitube::{union_band, EcSeq};
use crate::tensor::{FiniteTubalTensor, QtTensor};

/// Finite count or the infinite-rank marker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rank {
    Finite(usize),
    Infinite,
}

/// `X = U ⋆F S ⋆F V*` with `⋆F`-unitary `U`, `V` and f-diagonal,
/// non-negative, ordered `S`.
#[derive(Clone, Debug, PartialEq)]
pub struct QSvd {
    pub u: QtTensor,
    pub s: QtTensor,
    pub v: QtTensor,
}

/// Diagonal of an f-diagonal slice as real singular values.
fn diag_sigma(s: &CMat) -> Vec<f64> {
    (0..s.nrows().min(s.ncols())).map(|i| s[(i, i)].re).collect()
}

fn slice_rank(s: &CMat) -> usize {
    let sigma = diag_sigma(s);
    let thr = rank_threshold(sigma.first().copied().unwrap_or(0.0));
    sigma.iter().take_while(|&&v| v > thr).count()
}

impl QSvd {
    pub fn shape(&self) -> (usize, usize) {
        self.s.shape()
    }

    pub fn recompose(&self) -> QtTensor {
        self.u
            .prod(&self.s)
            .and_then(|us| us.prod(&self.v.conj_transpose()))
            .expect("factor shapes are consistent")
    }

    /// Diagonal quasitubes `s₁, …, s_min(m,p)` of `S`.
    pub fn singular_tubes(&self) -> Vec<EcSeq> {
        let (m, p) = self.shape();
        (0..m.min(p)).map(|j| self.s.entry(j, j)).collect()
    }

    /// Check the structural invariants within `tol`.
    pub fn check(&self, tol: f64) -> Result<()> {
        let bad = |what: &str| Err(Error::Invalid(format!("q-SVD invariant violated: {what}")));
        if self.u.unitarity_defect() > tol {
            return bad("U is not f-unitary");
        }
        if self.v.unitarity_defect() > tol {
            return bad("V is not f-unitary");
        }
        if !self.s.is_f_diagonal(0.0) {
            return bad("S is not f-diagonal");
        }
        let tubes = self.singular_tubes();
        if tubes.iter().any(|t| !t.spectrum().is_nonneg) {
            return bad("negative singular value");
        }
        if tubes.windows(2).any(|w| !w[0].geq(&w[1])) {
            return bad("singular quasitubes out of order");
        }
        Ok(())
    }
}

fn assemble(svds: Vec<SliceSvd>, tail: SliceSvd, lo: i64) -> Result<QSvd> {
    let mut us = Vec::with_capacity(svds.len());
    let mut ss = Vec::with_capacity(svds.len());
    let mut vs = Vec::with_capacity(svds.len());
    for s in svds {
        ss.push(s.sigma_matrix());
        us.push(s.u);
        vs.push(s.v);
    }
    Ok(QSvd {
        s: QtTensor::new(lo, ss, tail.sigma_matrix())?,
        u: QtTensor::new(lo, us, tail.u)?,
        v: QtTensor::new(lo, vs, tail.v)?,
    })
}

/// Slice-wise SVD of every band slice and of the tail slice.
pub fn qsvd(x: &QtTensor) -> Result<QSvd> {
    let lo = x.lo();
    let svds = x
        .band_slices()
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            svd_full(s).map_err(|e| match e {
                Error::SvdFailure { reason, .. } => Error::SvdFailure {
                    slice: Some(lo + i as i64),
                    reason,
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let tail = svd_full(x.tail_slice())?;
    assemble(svds, tail, lo)
}

/// Per-slice rank sequence; integer-valued and eventually constant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "RawMultiRank")]
pub struct MultiRank {
    lo: i64,
    ranks: Vec<usize>,
    tail: usize,
}

#[derive(Deserialize)]
struct RawMultiRank {
    #[serde(default)]
    lo: i64,
    #[serde(default)]
    ranks: Vec<usize>,
    tail: usize,
}

impl From<RawMultiRank> for MultiRank {
    fn from(r: RawMultiRank) -> Self {
        MultiRank::new(r.lo, r.ranks, r.tail)
    }
}

impl MultiRank {
    pub fn new(lo: i64, mut ranks: Vec<usize>, tail: usize) -> Self {
        let lead = ranks.iter().take_while(|&&r| r == tail).count();
        if lead == ranks.len() {
            return Self {
                lo: 0,
                ranks: Vec::new(),
                tail,
            };
        }
        let trail = ranks.iter().rev().take_while(|&&r| r == tail).count();
        ranks.truncate(ranks.len() - trail);
        ranks.drain(..lead);
        Self {
            lo: lo + lead as i64,
            ranks,
            tail,
        }
    }

    pub fn constant(r: usize) -> Self {
        Self::new(0, Vec::new(), r)
    }

    pub fn get(&self, k: i64) -> usize {
        let off = k - self.lo;
        if off >= 0 && (off as usize) < self.ranks.len() {
            self.ranks[off as usize]
        } else {
            self.tail
        }
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn tail(&self) -> usize {
        self.tail
    }

    pub fn band(&self) -> Option<(i64, i64)> {
        (!self.ranks.is_empty()).then(|| (self.lo, self.lo + self.ranks.len() as i64 - 1))
    }

    pub fn max(&self) -> usize {
        self.ranks.iter().copied().fold(self.tail, usize::max)
    }

    /// As a real-valued quasitube.
    pub fn to_ec(&self) -> EcSeq {
        EcSeq::new(
            self.lo,
            self.ranks.iter().map(|&r| C64::from(r as f64)).collect(),
            C64::from(self.tail as f64),
        )
    }
}

/// `ρₖ = rank(X̂_{:,:,k})` with the relative floor of [`rank_threshold`].
pub fn multirank(q: &QSvd) -> MultiRank {
    let ranks = q.s.band_slices().iter().map(slice_rank).collect();
    MultiRank::new(q.s.lo(), ranks, slice_rank(q.s.tail_slice()))
}

/// Number of nonzero singular quasitubes.
pub fn qrank(q: &QSvd) -> usize {
    multirank(q).max()
}

/// Number of nonzero transform-domain singular values over all `(l, t)`.
pub fn implicit_rank(q: &QSvd) -> Rank {
    let rho = multirank(q);
    if rho.tail() > 0 {
        Rank::Infinite
    } else {
        Rank::Finite(rho.ranks().iter().sum())
    }
}

/// `rank_{F,⋆F} X`: dimension of the image as a complex vector space.
pub fn rank_f(x: &QtTensor) -> Result<Rank> {
    Ok(implicit_rank(&qsvd(x)?))
}

fn truncated_slice(u: &CMat, s: &CMat, v: &CMat, r: usize) -> CMat {
    let (m, p) = s.shape();
    let mut out = CMat::zeros(m, p);
    for i in 0..r {
        let sigma = s[(i, i)];
        if sigma == C64::from(0.0) {
            continue;
        }
        out += u.column(i) * (v.column(i).adjoint() * sigma);
    }
    out
}

/// Multi-rank `ρ` truncation: slice `k` keeps its leading `ρₖ` singular
/// triples.
pub fn truncate_multirank(q: &QSvd, rho: &MultiRank) -> Result<QtTensor> {
    let (m, p) = q.shape();
    let max = m.min(p);
    if rho.max() > max {
        return Err(Error::RankOutOfRange { rank: rho.max(), max });
    }
    let bands = [q.u.band(), q.s.band(), q.v.band(), rho.band()];
    let band = bands.into_iter().fold(None, union_band);
    let at = |k: Option<i64>| match k {
        Some(k) => truncated_slice(q.u.slice(k), q.s.slice(k), q.v.slice(k), rho.get(k)),
        None => truncated_slice(q.u.tail_slice(), q.s.tail_slice(), q.v.tail_slice(), rho.tail()),
    };
    let tail = at(None);
    match band {
        None => QtTensor::new(0, Vec::new(), tail),
        Some((lo, hi)) => {
            let ks: Vec<i64> = (lo..=hi).collect();
            let slices = ks.par_iter().map(|&k| at(Some(k))).collect();
            QtTensor::new(lo, slices, tail)
        }
    }
}

/// q-rank `r` truncation: constant multi-rank `r`.
pub fn truncate_qrank(q: &QSvd, r: usize) -> Result<QtTensor> {
    truncate_multirank(q, &MultiRank::constant(r))
}

/// A rank-one transform-domain atom `σ φ⁽ᵗ⁾ ⋆F u ⋆F v*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub sigma: f64,
    /// Lateral index (0-based) of the singular pair within slice `t`.
    pub l: usize,
    pub t: i64,
    pub u: Vec<C64>,
    pub v: Vec<C64>,
}

impl Component {
    pub fn to_tensor(&self) -> QtTensor {
        QtTensor::atom(self.t, self.sigma, &self.u, &self.v)
    }

    /// `σ u vᴴ` as a dense slice.
    pub fn outer(&self) -> CMat {
        CMat::from_fn(self.u.len(), self.v.len(), |i, j| self.u[i] * self.v[j].conj() * self.sigma)
    }
}

/// Descending by `σ`; ties broken by smaller `t`, then smaller `l`.
pub fn component_order(a: &Component, b: &Component) -> std::cmp::Ordering {
    b.sigma.total_cmp(&a.sigma).then(a.t.cmp(&b.t)).then(a.l.cmp(&b.l))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Offline,
    Streaming,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentList {
    pub components: Vec<Component>,
    pub provenance: Provenance,
}

impl ComponentList {
    pub fn new(components: Vec<Component>, provenance: Provenance) -> Self {
        Self { components, provenance }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Component> {
        self.components.iter()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.sigma).collect()
    }

    pub fn indices(&self) -> Vec<(usize, i64)> {
        self.components.iter().map(|c| (c.l, c.t)).collect()
    }

    /// Ordering and uniqueness invariants.
    pub fn is_well_ordered(&self) -> bool {
        let ordered = self
            .components
            .windows(2)
            .all(|w| component_order(&w[0], &w[1]) != std::cmp::Ordering::Greater);
        let mut idx = self.indices();
        idx.sort_unstable();
        let distinct = idx.windows(2).all(|w| w[0] != w[1]);
        ordered && distinct && self.components.iter().all(|c| c.sigma >= 0.0)
    }

    /// Sum of the atoms as a tail-zero tensor.
    pub fn to_tensor(&self, m: usize, p: usize) -> QtTensor {
        let lo = self.components.iter().map(|c| c.t).min();
        let hi = self.components.iter().map(|c| c.t).max();
        let (Some(lo), Some(hi)) = (lo, hi) else {
            return QtTensor::zeros(m, p);
        };
        let mut slices = vec![CMat::zeros(m, p); (hi - lo + 1) as usize];
        for c in &self.components {
            slices[(c.t - lo) as usize] += c.outer();
        }
        QtTensor::new(lo, slices, CMat::zeros(m, p)).expect("consistent shapes")
    }
}

/// How many components [`order_components`] should produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Limit {
    Count(usize),
    /// Every nonzero component; requires a tail-zero tensor.
    AllFinite,
}

/// Globally order the nonzero singular values of all slices.
///
/// Singular values at or below the slice's numerical rank floor are not
/// components. A nonzero tail contributes the same values at infinitely
/// many indices, so the order is only defined above the largest tail value.
pub fn order_components(q: &QSvd, limit: Limit) -> Result<ComponentList> {
    let tail_sigma = diag_sigma(q.s.tail_slice());
    let tail_rank = slice_rank(q.s.tail_slice());
    let tail_top = if tail_rank > 0 { tail_sigma[0] } else { 0.0 };
    if tail_rank > 0 && limit == Limit::AllFinite {
        return Err(Error::InfiniteCandidates(
            "nonzero tail slice gives infinitely many components".into(),
        ));
    }

    let mut comps = Vec::new();
    if let Some((lo, hi)) = q.s.band() {
        for t in lo..=hi {
            let s = q.s.slice(t);
            let r = slice_rank(s);
            for l in 0..r {
                comps.push(Component {
                    sigma: s[(l, l)].re,
                    l,
                    t,
                    u: q.u.slice(t).column(l).iter().copied().collect(),
                    v: q.v.slice(t).column(l).iter().copied().collect(),
                });
            }
        }
    }
    comps.sort_by(component_order);

    if tail_rank > 0 {
        let Limit::Count(n) = limit else { unreachable!() };
        let safe = comps.iter().take_while(|c| c.sigma > tail_top).count();
        if n > safe {
            return Err(Error::InfiniteCandidates(format!(
                "requested {n} components but only {safe} exceed the tail singular value {tail_top:e}"
            )));
        }
    }
    if let Limit::Count(n) = limit {
        comps.truncate(n);
    }
    Ok(ComponentList::new(comps, Provenance::Offline))
}

/// Explicit rank-`q` truncation `X_[q]`: the sum of the `q` leading
/// components. Fewer are used when the implicit rank is below `q`.
pub fn truncate_explicit(qs: &QSvd, q: usize) -> Result<(QtTensor, ComponentList)> {
    if !qs.s.is_tail_zero() {
        return Err(Error::NotInH);
    }
    let comps = order_components(qs, Limit::Count(q))?;
    let (m, p) = qs.shape();
    Ok((comps.to_tensor(m, p), comps))
}

/// One row of the error-versus-rank table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub q: usize,
    pub h_error: f64,
    pub op_error: f64,
}

/// `‖X − X_[q]‖_H` and `‖X − X_[q]‖_op` for `q = 0..=q_max`, from the
/// ordered singular values: the squared H error is the suffix sum of `σₙ²`
/// and the op error is `σ_{q+1}`.
pub fn error_curve(qs: &QSvd, q_max: usize) -> Result<Vec<ErrorRow>> {
    if !qs.s.is_tail_zero() {
        return Err(Error::NotInH);
    }
    let sigmas = order_components(qs, Limit::AllFinite)?.sigmas();
    let mut suffix = vec![0.0; sigmas.len() + 1];
    for n in (0..sigmas.len()).rev() {
        suffix[n] = suffix[n + 1] + sigmas[n] * sigmas[n];
    }
    Ok((0..=q_max)
        .map(|q| {
            let q_eff = q.min(sigmas.len());
            ErrorRow {
                q,
                h_error: suffix[q_eff].sqrt(),
                op_error: sigmas.get(q).copied().unwrap_or(0.0),
            }
        })
        .collect())
}

/// `X = U ⋆M S ⋆M Vᴴ` for a finite tubal tensor.
#[derive(Clone, Debug)]
pub struct FiniteTsvd {
    pub u: FiniteTubalTensor,
    pub s: FiniteTubalTensor,
    pub v: FiniteTubalTensor,
    /// Transform-domain slice SVDs, in frontal order.
    pub slices: Vec<SliceSvd>,
    /// False when `M` is not a multiple of a unitary matrix; the truncations
    /// are then not guaranteed to be optimal.
    pub optimality_guaranteed: bool,
}

impl FiniteTsvd {
    pub fn recompose(&self) -> Result<FiniteTubalTensor> {
        self.u.tprod(&self.s)?.tprod(&self.v.conj_transpose()?)
    }

    /// Multi-rank truncation with one rank per frontal slice.
    pub fn truncate_multirank(&self, rho: &[usize]) -> Result<FiniteTubalTensor> {
        if rho.len() != self.slices.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} ranks for {} slices",
                rho.len(),
                self.slices.len()
            )));
        }
        let (m, p, _) = self.s.shape();
        if let Some(&r) = rho.iter().find(|&&r| r > m.min(p)) {
            return Err(Error::RankOutOfRange { rank: r, max: m.min(p) });
        }
        let slices: Vec<CMat> = self.slices.iter().zip(rho).map(|(s, &r)| s.reconstruct(r)).collect();
        FiniteTubalTensor::from_transformed(&slices, self.s.spec().clone())
    }

    /// t-rank `r` truncation.
    pub fn truncate_trank(&self, r: usize) -> Result<FiniteTubalTensor> {
        self.truncate_multirank(&vec![r; self.slices.len()])
    }

    pub fn multirank(&self) -> Vec<usize> {
        self.slices.iter().map(SliceSvd::rank).collect()
    }
}

/// tSVDM: transform, slice-wise SVD, inverse transform.
pub fn tsvd_finite(x: &FiniteTubalTensor) -> Result<FiniteTsvd> {
    let hat = x.transformed_slices()?;
    let slices = hat
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            svd_full(s).map_err(|e| match e {
                Error::SvdFailure { reason, .. } => Error::SvdFailure {
                    slice: Some(k as i64),
                    reason,
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let spec = x.spec().clone();
    let us: Vec<CMat> = slices.iter().map(|s| s.u.clone()).collect();
    let ss: Vec<CMat> = slices.iter().map(SliceSvd::sigma_matrix).collect();
    let vs: Vec<CMat> = slices.iter().map(|s| s.v.clone()).collect();
    Ok(FiniteTsvd {
        u: FiniteTubalTensor::from_transformed(&us, spec.clone())?,
        s: FiniteTubalTensor::from_transformed(&ss, spec.clone())?,
        v: FiniteTubalTensor::from_transformed(&vs, spec.clone())?,
        optimality_guaranteed: spec.is_unitary_multiple(1e-10),
        slices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use crate::tensor::TubeArray;
    use crate::transform::TransformSpec;
    use rand::{Rng, SeedableRng};
    use rand_pcg::Pcg64;

    fn rmat(m: usize, p: usize, rng: &mut Pcg64) -> CMat {
        CMat::from_fn(m, p, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn rqt(m: usize, p: usize, lo: i64, len: usize, rng: &mut Pcg64) -> QtTensor {
        QtTensor::from_band(lo, (0..len).map(|_| rmat(m, p, rng)).collect()).unwrap()
    }

    #[test]
    fn f_diagonal_input_is_its_own_singular_tensor() {
        let s = QtTensor::from_entries(&[
            vec![EcSeq::from_real_band(0, &[3.0, 2.0], 0.0), EcSeq::zero()],
            vec![EcSeq::zero(), EcSeq::from_real_band(0, &[1.0, 0.5], 0.0)],
        ])
        .unwrap();
        let q = qsvd(&s).unwrap();
        assert_eq!(q.s, s);
        assert!(q.u.max_slice_distance(&QtTensor::identity(2)) < 1e-15);
        assert!(q.v.max_slice_distance(&QtTensor::identity(2)) < 1e-15);
    }

    #[test]
    fn zero_tensor() {
        let q = qsvd(&QtTensor::zeros(2, 3)).unwrap();
        assert_eq!(q.s, QtTensor::zeros(2, 3));
        assert_eq!(multirank(&q), MultiRank::constant(0));
        assert_eq!(implicit_rank(&q), Rank::Finite(0));
        assert!(order_components(&q, Limit::AllFinite).unwrap().is_empty());
    }

    #[test]
    fn random_banded_reconstructs() {
        let mut rng = Pcg64::seed_from_u64(1);
        let x = rqt(2, 3, -2, 5, &mut rng);
        let q = qsvd(&x).unwrap();
        q.check(1e-10).unwrap();
        assert!(q.recompose().max_slice_distance(&x) < 1e-10);
        for k in -2..3 {
            let dense = crate::linalg::singular_values(x.slice(k));
            let mut dense: Vec<f64> = dense.to_vec();
            dense.sort_by(|a, b| b.total_cmp(a));
            for (l, d) in dense.iter().enumerate() {
                assert!((q.s.slice(k)[(l, l)].re - d).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ranks_of_identity_and_atoms() {
        let q = qsvd(&QtTensor::identity(3)).unwrap();
        assert_eq!(multirank(&q), MultiRank::constant(3));
        assert_eq!(qrank(&q), 3);
        assert_eq!(implicit_rank(&q), Rank::Infinite);
        assert_eq!(rank_f(&QtTensor::identity(2)).unwrap(), Rank::Infinite);

        let u = [c(0.6, 0.0), c(0.0, 0.8)];
        let v = [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let a = QtTensor::atom(0, 2.0, &u, &v);
        let q = qsvd(&a).unwrap();
        assert_eq!(multirank(&q), MultiRank::new(0, vec![1], 0));
        assert_eq!(qrank(&q), 1);
        assert_eq!(implicit_rank(&q), Rank::Finite(1));
        assert_eq!(rank_f(&a).unwrap(), Rank::Finite(1));

        let b = a.add(&QtTensor::atom(3, 1.0, &u, &v)).unwrap();
        let q = qsvd(&b).unwrap();
        assert_eq!(qrank(&q), 1);
        assert_eq!(implicit_rank(&q), Rank::Finite(2));
    }

    #[test]
    fn multirank_truncation() {
        let mut rng = Pcg64::seed_from_u64(2);
        let x = rqt(3, 2, 0, 4, &mut rng);
        let q = qsvd(&x).unwrap();
        let full = truncate_multirank(&q, &multirank(&q)).unwrap();
        assert!(full.max_slice_distance(&x) < 1e-10);
        assert_eq!(truncate_qrank(&q, 0).unwrap(), QtTensor::zeros(3, 2));
        assert!(matches!(truncate_qrank(&q, 3), Err(Error::RankOutOfRange { .. })));

        let rho = MultiRank::new(0, vec![1, 0, 2, 1], 0);
        let t = truncate_multirank(&q, &rho).unwrap();
        for k in 0..4 {
            let sig = diag_sigma(q.s.slice(k));
            let discarded: f64 = sig.iter().skip(rho.get(k)).map(|s| s * s).sum();
            let err = (x.slice(k) - t.slice(k)).norm_squared();
            assert!((err - discarded).abs() < 1e-12);
        }
    }

    #[test]
    fn tie_break_prefers_smaller_t() {
        // σ = 1 at (l=1, t=0) and at (l=0, t=1); also equal σ = 5 at (l=0,t=0)
        let s0 = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(5.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]));
        let s1 = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(0.5, 0.0), c(0.0, 0.0)]));
        let x = QtTensor::from_band(0, vec![s0, s1]).unwrap();
        let q = qsvd(&x).unwrap();
        let list = order_components(&q, Limit::AllFinite).unwrap();
        assert_eq!(list.indices(), vec![(0, 0), (1, 0), (0, 1), (1, 1)]);

        let s2 = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(2.0, 0.0), c(2.0, 0.0), c(2.0, 0.0)]));
        let s3 = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]));
        let y = QtTensor::from_band(0, vec![s2, s3]).unwrap();
        let list = order_components(&qsvd(&y).unwrap(), Limit::AllFinite).unwrap();
        // (l=2,t=0) precedes (l=0,t=1)
        assert_eq!(list.indices(), vec![(0, 0), (1, 0), (2, 0), (0, 1)]);
        assert!(list.is_well_ordered());
    }

    #[test]
    fn ordering_matches_brute_force_sort() {
        let mut rng = Pcg64::seed_from_u64(3);
        let x = rqt(3, 2, -2, 5, &mut rng);
        let q = qsvd(&x).unwrap();
        let list = order_components(&q, Limit::AllFinite).unwrap();
        let mut table = Vec::new();
        for t in -2..3 {
            let sv = crate::linalg::singular_values(x.slice(t));
            let mut sv: Vec<f64> = sv.to_vec();
            sv.sort_by(|a, b| b.total_cmp(a));
            for (l, s) in sv.into_iter().enumerate() {
                table.push((s, t, l));
            }
        }
        table.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        assert_eq!(list.len(), table.len());
        for (c, (s, t, l)) in list.iter().zip(&table) {
            assert_eq!((c.l, c.t), (*l, *t));
            assert!((c.sigma - s).abs() < 1e-12);
        }
    }

    #[test]
    fn infinite_candidates_rejected() {
        let x = QtTensor::new(0, vec![CMat::identity(2, 2) * C64::from(3.0)], CMat::identity(2, 2)).unwrap();
        let q = qsvd(&x).unwrap();
        assert!(matches!(order_components(&q, Limit::AllFinite), Err(Error::InfiniteCandidates(_))));
        assert_eq!(order_components(&q, Limit::Count(2)).unwrap().len(), 2);
        assert!(matches!(order_components(&q, Limit::Count(3)), Err(Error::InfiniteCandidates(_))));
        assert!(matches!(truncate_explicit(&q, 1), Err(Error::NotInH)));
    }

    #[test]
    fn explicit_truncation_residuals() {
        let mut rng = Pcg64::seed_from_u64(4);
        let x = rqt(2, 2, 0, 3, &mut rng);
        let q = qsvd(&x).unwrap();
        let Rank::Finite(r) = implicit_rank(&q) else { panic!() };
        let all = order_components(&q, Limit::AllFinite).unwrap();
        let total = x.h_norm().unwrap().powi(2);
        let mut prev = f64::INFINITY;
        for k in 0..=r {
            let (xq, comps) = truncate_explicit(&q, k).unwrap();
            assert_eq!(comps.len(), k);
            assert!(rank_f(&xq).unwrap() == Rank::Finite(k));
            let res = x.sub(&xq).unwrap().h_norm().unwrap();
            let tail: f64 = all.sigmas()[k..].iter().map(|s| s * s).sum();
            assert!((res * res - tail).abs() <= 1e-10 * total);
            assert!(res < prev || k == 0);
            prev = res;
        }
        let (exact, _) = truncate_explicit(&q, r + 5).unwrap();
        assert!(exact.max_slice_distance(&x) < 1e-10);
    }

    #[test]
    fn finite_tsvd() {
        let mut rng = Pcg64::seed_from_u64(5);
        let spec = TransformSpec::dft_unitary(4).unwrap();
        let x = FiniteTubalTensor::new(
            TubeArray::from_fn(3, 2, 4, |_, _, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))),
            spec,
        )
        .unwrap();
        let t = tsvd_finite(&x).unwrap();
        assert!(t.optimality_guaranteed);
        assert!(t.recompose().unwrap().sub(&x).unwrap().frobenius() < 1e-10);
        assert!((t.s.frobenius() - x.frobenius()).abs() < 1e-10);

        // n = 1 with the identity transform is a plain matrix SVD
        let a = rmat(3, 2, &mut rng);
        let one = FiniteTubalTensor::new(
            TubeArray::from_fn(3, 2, 1, |i, j, _| a[(i, j)]),
            TransformSpec::identity(1).unwrap(),
        )
        .unwrap();
        let t1 = tsvd_finite(&one).unwrap();
        let sv = crate::linalg::singular_values(&a);
        let mut sv: Vec<f64> = sv.to_vec();
        sv.sort_by(|x, y| y.total_cmp(x));
        for (l, s) in sv.iter().enumerate() {
            assert!((t1.slices[0].sigma[l] - s).abs() < 1e-12);
        }

        let skew = TransformSpec::custom(CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)])).unwrap();
        let y = FiniteTubalTensor::new(TubeArray::from_fn(2, 2, 2, |i, j, k| c((i + 2 * j + k) as f64, 0.0)), skew).unwrap();
        let ty = tsvd_finite(&y).unwrap();
        assert!(!ty.optimality_guaranteed);
        assert!(ty.recompose().unwrap().sub(&y).unwrap().frobenius() < 1e-10);
    }

    #[test]
    fn error_curve_matches_residuals() {
        let mut rng = Pcg64::seed_from_u64(6);
        let x = rqt(2, 3, -1, 4, &mut rng);
        let q = qsvd(&x).unwrap();
        let rows = error_curve(&q, 10).unwrap();
        assert_eq!(rows.len(), 11);
        for r in &rows {
            let (xq, _) = truncate_explicit(&q, r.q).unwrap();
            let res = x.sub(&xq).unwrap();
            assert!((res.h_norm().unwrap() - r.h_error).abs() < 1e-10);
            assert!((res.op_norm() - r.op_error).abs() < 1e-10);
        }
        assert!(rows
            .windows(2)
            .all(|w| w[1].h_error <= w[0].h_error && w[1].op_error <= w[0].op_error));
        assert_eq!(rows[8].h_error, 0.0);
        assert!(matches!(error_curve(&qsvd(&QtTensor::identity(1)).unwrap(), 2), Err(Error::NotInH)));
    }

    #[test]
    fn multirank_serde() {
        let r: MultiRank = serde_json::from_str(r#"{"lo":-1,"ranks":[2,2,1],"tail":2}"#).unwrap();
        assert_eq!(r, MultiRank::new(1, vec![1], 2));
        assert_eq!(r.get(1), 1);
        assert_eq!(r.get(-7), 2);
    }
}
