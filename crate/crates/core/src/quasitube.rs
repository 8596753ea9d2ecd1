//! Quasitubes in the transform domain.
//!
//! A quasitube is determined by its multiplier sequence over `ℤ`; the algebra
//! of quasitubes under `⋆F` is isometrically *-isomorphic to `(ℓ∞, ⊙)`. We
//! represent the eventually-constant subset: finitely many explicit values on
//! a band `lo..lo+len` and one constant `tail` everywhere else. The set is
//! closed under every operation below. A zero tail means the quasitube lies
//! in the square-summable ideal `H`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};

/// Points with `|im| ≤ POS_TOL` and `re ≥ -POS_TOL` count as non-negative.
pub const POS_TOL: f64 = 1e-12;

/// Eventually-constant complex sequence over `ℤ`, kept in canonical form:
/// the band is empty or its first and last values differ from `tail`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawEcSeq")]
pub struct EcSeq {
    lo: i64,
    values: Vec<C64>,
    tail: C64,
}

#[derive(Deserialize)]
struct RawEcSeq {
    lo: i64,
    values: Vec<C64>,
    tail: C64,
}

impl From<RawEcSeq> for EcSeq {
    fn from(r: RawEcSeq) -> Self {
        EcSeq::new(r.lo, r.values, r.tail)
    }
}

/// Norm in the ideal `H`, or a marker that the element lies outside it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HNorm {
    Finite(f64),
    NotInH,
}

impl HNorm {
    pub fn finite(self) -> Option<f64> {
        match self {
            HNorm::Finite(v) => Some(v),
            HNorm::NotInH => None,
        }
    }

    pub fn unwrap(self) -> f64 {
        self.finite().expect("element is not in H")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumDesc {
    pub points: Vec<C64>,
    pub is_selfadjoint: bool,
    pub is_nonneg: bool,
    pub is_strictly_pos: bool,
}

impl SpectrumDesc {
    pub fn radius(&self) -> f64 {
        self.points.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

impl EcSeq {
    pub fn new(lo: i64, values: Vec<C64>, tail: C64) -> Self {
        let mut s = Self { lo, values, tail };
        s.canonicalize();
        s
    }

    /// Tail-zero sequence with the given band.
    pub fn from_band(lo: i64, values: Vec<C64>) -> Self {
        Self::new(lo, values, C64::from(0.0))
    }

    pub fn from_real_band(lo: i64, values: &[f64], tail: f64) -> Self {
        Self::new(lo, values.iter().map(|&v| C64::from(v)).collect(), C64::from(tail))
    }

    pub fn constant(c: C64) -> Self {
        Self::new(0, Vec::new(), c)
    }

    pub fn zero() -> Self {
        Self::constant(C64::from(0.0))
    }

    /// The unit `e` (all ones).
    pub fn unit() -> Self {
        Self::constant(C64::from(1.0))
    }

    /// Basis atom `δⱼ`: 1 at `j`, 0 elsewhere.
    pub fn delta(j: i64) -> Self {
        Self::from_band(j, vec![C64::from(1.0)])
    }

    fn canonicalize(&mut self) {
        let lead = self.values.iter().take_while(|v| **v == self.tail).count();
        if lead == self.values.len() {
            self.values.clear();
            self.lo = 0;
            return;
        }
        let trail = self.values.iter().rev().take_while(|v| **v == self.tail).count();
        self.values.truncate(self.values.len() - trail);
        self.values.drain(..lead);
        self.lo += lead as i64;
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn tail(&self) -> C64 {
        self.tail
    }

    /// Inclusive band `(lo, hi)`, or `None` when the sequence is constant.
    pub fn band(&self) -> Option<(i64, i64)> {
        (!self.values.is_empty()).then(|| (self.lo, self.lo + self.values.len() as i64 - 1))
    }

    pub fn get(&self, k: i64) -> C64 {
        let off = k - self.lo;
        if off >= 0 && (off as usize) < self.values.len() {
            self.values[off as usize]
        } else {
            self.tail
        }
    }

    pub fn is_tail_zero(&self) -> bool {
        self.tail == C64::from(0.0)
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self::new(self.lo, self.values.iter().map(|&v| f(v)).collect(), f(self.tail))
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Self {
        let Some((lo, hi)) = union_band(self.band(), other.band()) else {
            return Self::constant(f(self.tail, other.tail));
        };
        let values = (lo..=hi).map(|k| f(self.get(k), other.get(k))).collect();
        Self::new(lo, values, f(self.tail, other.tail))
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, alpha: C64) -> Self {
        self.map(|v| alpha * v)
    }

    /// Pointwise product: the `⋆F` product of the underlying quasitubes.
    pub fn hadamard(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }

    /// `‖q‖_{H*} = ‖q̂‖_∞`.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(self.tail.norm(), f64::max)
    }

    /// `‖x‖_H = ‖x̂‖₂` for tail-zero sequences.
    pub fn l2_norm(&self) -> HNorm {
        if !self.is_tail_zero() {
            return HNorm::NotInH;
        }
        HNorm::Finite(self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt())
    }

    /// Closure of the value set: the distinct band values and the tail.
    pub fn spectrum(&self) -> SpectrumDesc {
        let mut points: Vec<C64> = Vec::with_capacity(self.values.len() + 1);
        for v in self.values.iter().copied().chain(std::iter::once(self.tail)) {
            if !points.contains(&v) {
                points.push(v);
            }
        }
        let is_selfadjoint = points.iter().all(|z| z.im.abs() <= POS_TOL);
        let is_nonneg = is_selfadjoint && points.iter().all(|z| z.re >= -POS_TOL);
        let is_strictly_pos = is_nonneg && points.iter().all(|z| z.re > POS_TOL);
        SpectrumDesc {
            points,
            is_selfadjoint,
            is_nonneg,
            is_strictly_pos,
        }
    }

    /// Partial order: `a ≥ b` iff `a − b` is non-negative.
    pub fn geq(&self, other: &Self) -> bool {
        self.sub(other).spectrum().is_nonneg
    }

    /// The unique non-negative square root of a non-negative element.
    pub fn sqrt_nonneg(&self) -> Result<Self> {
        if !self.spectrum().is_nonneg {
            return Err(Error::NotNonneg);
        }
        Ok(self.map(|v| C64::from(v.re.max(0.0).sqrt())))
    }

    /// A square root of a self-adjoint element. Negative entries map to
    /// `+i√|a|`.
    pub fn sqrt_selfadjoint(&self) -> Result<Self> {
        if !self.spectrum().is_selfadjoint {
            return Err(Error::NotSelfAdjoint);
        }
        Ok(self.map(|v| {
            if v.re >= 0.0 {
                C64::from(v.re.sqrt())
            } else {
                C64::new(0.0, (-v.re).sqrt())
            }
        }))
    }

    /// `|a| = √(a* ⊙ a)`, the pointwise modulus.
    pub fn abs(&self) -> Self {
        self.map(|v| C64::from(v.norm()))
    }

    pub fn invert(&self) -> Result<Self> {
        if self.spectrum().points.iter().any(|z| z.norm() <= POS_TOL) {
            return Err(Error::Singular);
        }
        Ok(self.map(|v| v.inv()))
    }

    /// Diagonal multiplier matrix `diag(a_lo, …, a_hi)` on an inclusive
    /// window; the matrix of the multiplication operator restricted to the
    /// span of the basis atoms in the window.
    pub fn multiplier_matrix(&self, lo: i64, hi: i64) -> CMat {
        let w = if hi >= lo { (hi - lo + 1) as usize } else { 0 };
        CMat::from_fn(w, w, |r, c| if r == c { self.get(lo + r as i64) } else { C64::from(0.0) })
    }
}

pub(crate) fn union_band(a: Option<(i64, i64)>, b: Option<(i64, i64)>) -> Option<(i64, i64)> {
    match (a, b) {
        (Some((l1, h1)), Some((l2, h2))) => Some((l1.min(l2), h1.max(h2))),
        (x, None) => x,
        (None, y) => y,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use proptest::prelude::*;

    fn r(lo: i64, v: &[f64], t: f64) -> EcSeq {
        EcSeq::from_real_band(lo, v, t)
    }

    /// Dense window evaluation, the pointwise oracle.
    fn window(a: &EcSeq, lo: i64, hi: i64) -> Vec<C64> {
        (lo..=hi).map(|k| a.get(k)).collect()
    }

    fn arb_seq() -> impl Strategy<Value = EcSeq> {
        (
            -6i64..6,
            prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 0..8),
            prop_oneof![Just((0.0, 0.0)), (-3.0..3.0f64, -3.0..3.0f64)],
        )
            .prop_map(|(lo, v, t)| EcSeq::new(lo, v.into_iter().map(|(a, b)| c(a, b)).collect(), c(t.0, t.1)))
    }

    #[test]
    fn canonical_form() {
        let a = r(-2, &[0.0, 1.0, 0.0, 2.0, 0.0], 0.0);
        assert_eq!(a.band(), Some((-1, 1)));
        assert_eq!(a.values(), &[c(1.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)]);
        assert_eq!(r(5, &[3.0, 3.0], 3.0), EcSeq::constant(c(3.0, 0.0)));
    }

    #[test]
    fn add_and_scale() {
        let a = r(0, &[1.0, 2.0], 0.5);
        assert_eq!(a.add(&EcSeq::zero()), a);
        assert_eq!(a.add(&r(3, &[1.0], 2.0)).tail(), c(2.5, 0.0));
        let x = r(-3, &[1.0], 0.25);
        let y = r(4, &[2.0, 5.0], 0.5);
        let s = x.add(&y);
        assert_eq!(s.band(), Some((-3, 5)));
        assert_eq!(window(&s, -5, 7), (-5..=7).map(|k| x.get(k) + y.get(k)).collect::<Vec<_>>());
        assert_eq!(x.scale(c(0.0, 2.0)).get(-3), c(0.0, 2.0));
    }

    #[test]
    fn hadamard_examples() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let p = r(0, &[h, h], 0.0).hadamard(&r(0, &[h, -h], 0.0));
        assert!((p.get(0) - c(0.5, 0.0)).norm() < 1e-15);
        assert!((p.get(1) - c(-0.5, 0.0)).norm() < 1e-15);
        let q = r(-1, &[2.0, -3.0], 0.7);
        assert_eq!(EcSeq::unit().hadamard(&q), q);
        assert_eq!(EcSeq::delta(4).hadamard(&EcSeq::delta(4)), EcSeq::delta(4));
        assert_eq!(EcSeq::delta(4).hadamard(&EcSeq::delta(5)), EcSeq::zero());
    }

    #[test]
    fn norms() {
        assert_eq!(EcSeq::unit().sup_norm(), 1.0);
        assert_eq!(EcSeq::new(0, vec![c(3.0, 0.0), c(0.0, -4.0)], c(1.0, 0.0)).sup_norm(), 4.0);
        assert_eq!(EcSeq::delta(3).l2_norm(), HNorm::Finite(1.0));
        assert_eq!(EcSeq::unit().l2_norm(), HNorm::NotInH);
        assert_eq!(r(0, &[3.0, 4.0], 0.0).l2_norm(), HNorm::Finite(5.0));
    }

    #[test]
    fn spectrum_examples() {
        // band truncation of 1/(j²+1)
        let a = r(-2, &[0.2, 0.5, 1.0, 0.5, 0.2], 0.0);
        let s = a.spectrum();
        assert!(s.is_nonneg && !s.is_strictly_pos);
        let z = EcSeq::zero().spectrum();
        assert_eq!(z.points, vec![c(0.0, 0.0)]);
        assert!(z.is_nonneg);
        let s = r(0, &[2.0, -1.0], 3.0).spectrum();
        assert_eq!(s.points, vec![c(2.0, 0.0), c(-1.0, 0.0), c(3.0, 0.0)]);
        assert!(!s.is_nonneg && s.is_selfadjoint);
        assert!(EcSeq::unit().spectrum().is_strictly_pos);
    }

    #[test]
    fn order_examples() {
        let a = r(1, &[0.3, -2.0], 1.0);
        assert!(a.geq(&a));
        assert!(EcSeq::unit().geq(&EcSeq::delta(2)));
        let x = r(0, &[1.0, 2.0], 0.0);
        let y = r(0, &[2.0, 1.0], 0.0);
        assert!(!x.geq(&y) && !y.geq(&x));
    }

    #[test]
    fn sqrt_examples() {
        assert_eq!(EcSeq::unit().sqrt_nonneg().unwrap(), EcSeq::unit());
        assert_eq!(r(0, &[4.0, 9.0], 1.0).sqrt_nonneg().unwrap(), r(0, &[2.0, 3.0], 1.0));
        let neg = r(0, &[-4.0], 0.0);
        assert!(matches!(neg.sqrt_nonneg(), Err(Error::NotNonneg)));
        let b = neg.sqrt_selfadjoint().unwrap();
        assert_eq!(b.get(0), c(0.0, 2.0));
        assert_eq!(b.hadamard(&b), neg);
        let cplx = EcSeq::new(0, vec![c(1.0, 1.0)], c(0.0, 0.0));
        assert!(matches!(cplx.sqrt_selfadjoint(), Err(Error::NotSelfAdjoint)));
    }

    #[test]
    fn abs_examples() {
        let a = r(0, &[1.0, 2.0], 0.5);
        assert_eq!(a.abs(), a);
        assert_eq!(EcSeq::from_band(0, vec![c(3.0, 4.0)]).abs(), r(0, &[5.0], 0.0));
    }

    #[test]
    fn invert_examples() {
        assert_eq!(EcSeq::unit().invert().unwrap(), EcSeq::unit());
        assert_eq!(r(0, &[4.0], 2.0).invert().unwrap(), r(0, &[0.25], 0.5));
        assert!(matches!(EcSeq::delta(0).invert(), Err(Error::Singular)));
    }

    #[test]
    fn multiplier_matrix_examples() {
        let a = r(-1, &[3.0, 4.0], 0.0);
        let m = a.multiplier_matrix(-3, 3);
        assert_eq!(m.norm(), a.l2_norm().unwrap());
        let eye = EcSeq::unit().multiplier_matrix(0, 8);
        assert_eq!(eye, CMat::identity(9, 9));
        assert_eq!(eye.norm(), 3.0);
        let d = EcSeq::delta(2).multiplier_matrix(0, 4);
        assert_eq!(d.iter().filter(|z| **z != c(0.0, 0.0)).count(), 1);
        assert_eq!(d[(2, 2)], c(1.0, 0.0));
    }

    #[test]
    fn serde_canonicalizes() {
        let json = r#"{"lo":0,"values":[[0.0,0.0],[1.0,2.0]],"tail":[0.0,0.0]}"#;
        let a: EcSeq = serde_json::from_str(json).unwrap();
        assert_eq!(a, EcSeq::from_band(1, vec![c(1.0, 2.0)]));
        let back: EcSeq = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(back, a);
    }

    proptest! {
        #[test]
        fn c_star_identity(a in arb_seq()) {
            let lhs = a.conj().hadamard(&a).sup_norm();
            let rhs = a.sup_norm().powi(2);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.max(1e-300));
        }

        #[test]
        fn conj_is_involutive_and_multiplicative(a in arb_seq(), b in arb_seq()) {
            prop_assert_eq!(a.conj().conj(), a.clone());
            prop_assert_eq!(a.hadamard(&b).conj(), a.conj().hadamard(&b.conj()));
        }

        #[test]
        fn ideal_closure(a in arb_seq(), q in arb_seq()) {
            if a.is_tail_zero() {
                prop_assert!(a.hadamard(&q).is_tail_zero());
                prop_assert!(a.conj().is_tail_zero());
                prop_assert!(a.sup_norm() <= a.l2_norm().unwrap() + 1e-15);
            }
        }

        #[test]
        fn pointwise_ops_match_window(a in arb_seq(), b in arb_seq()) {
            let prod = a.hadamard(&b);
            for k in -20..20 {
                prop_assert_eq!(prod.get(k), a.get(k) * b.get(k));
            }
        }

        #[test]
        fn abs_squares_back(a in arb_seq()) {
            let m = a.abs();
            prop_assert!(m.spectrum().is_nonneg);
            prop_assert_eq!(m.sup_norm(), a.sup_norm());
            let lhs = m.hadamard(&m);
            let rhs = a.conj().hadamard(&a);
            for k in -20..20 {
                prop_assert!((lhs.get(k) - rhs.get(k)).norm() <= 1e-12 * rhs.get(k).norm().max(1.0));
            }
        }

        #[test]
        fn reconstruction_on_window(a in arb_seq(), lo in -10i64..0, w in 0i64..20) {
            let hi = lo + w;
            let mut acc = EcSeq::zero();
            for j in lo..=hi {
                acc = acc.add(&EcSeq::delta(j).hadamard(&a));
            }
            // indicator of the complement of the window
            let outside = EcSeq::new(lo, vec![C64::from(0.0); (w + 1) as usize], C64::from(1.0));
            prop_assert_eq!(acc.add(&outside.hadamard(&a)), a.clone());
        }
    }
}
