//! Band-certified streaming extraction of leading components.
//!
//! The tensor is only available through a frontal-slice oracle `k ↦ X̂_k`
//! together with an energy bound. At each stage the band `|k| ≤ B` is grown
//! until the largest in-band singular value `σ` of the deflated tensor
//! satisfies `σ² > E_out`, where `E_out` bounds the deflated energy outside
//! the band. No slice outside the band can then hold a larger singular value,
//! so the in-band leader is the global leader; it is recorded, subtracted
//! from its home slice, and the next stage begins.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_pcg::Pcg64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomp::{component_order, Component, ComponentList, Provenance};
use crate::error::{Error, Result};
use crate::linalg::{frobenius_sq, rank_threshold, svd_full, CMat, SliceSvd, C64};
use crate::tensor::QtTensor;

/// Lazy access to the transform-domain frontal slices of a tensor in `H`.
///
/// At least one of [`total_energy`](Self::total_energy) and
/// [`tail_energy`](Self::tail_energy) must be available.
pub trait SliceOracle: Sync {
    fn shape(&self) -> (usize, usize);

    fn slice(&self, k: i64) -> Result<CMat>;

    /// `‖X‖_H²`.
    fn total_energy(&self) -> Option<f64> {
        None
    }

    /// Upper bound on `Σ_{|k|>B} ‖X̂_k‖_F²`, non-increasing in `B` and
    /// tending to zero.
    fn tail_energy(&self, _b: u64) -> Option<f64> {
        None
    }
}

/// Oracle backed by an in-memory tail-zero tensor. Its tail energy is exact.
#[derive(Clone, Debug)]
pub struct QtOracle {
    x: QtTensor,
    energies: Vec<(i64, f64)>,
}

impl QtOracle {
    pub fn new(x: QtTensor) -> Result<Self> {
        if !x.is_tail_zero() {
            return Err(Error::NotInH);
        }
        let lo = x.lo();
        let energies = x
            .band_slices()
            .iter()
            .enumerate()
            .map(|(i, s)| (lo + i as i64, frobenius_sq(s)))
            .collect();
        Ok(Self { x, energies })
    }

    pub fn tensor(&self) -> &QtTensor {
        &self.x
    }
}

impl SliceOracle for QtOracle {
    fn shape(&self) -> (usize, usize) {
        self.x.shape()
    }

    fn slice(&self, k: i64) -> Result<CMat> {
        Ok(self.x.slice(k).clone())
    }

    fn total_energy(&self) -> Option<f64> {
        Some(self.energies.iter().map(|e| e.1).sum())
    }

    fn tail_energy(&self, b: u64) -> Option<f64> {
        Some(self.energies.iter().filter(|(k, _)| k.unsigned_abs() > b).map(|e| e.1).sum())
    }
}

/// Slice energy profile of a [`ClosedFormOracle`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ClosedFormFamily {
    /// `‖X̂_k‖_F² = scale · ratio^{|k|}`, `0 < ratio < 1`.
    GeometricDecay { ratio: f64 },
    /// `‖X̂_k‖_F² = scale · (1 + |k|)^{-exponent}`, `exponent > 1`.
    PowerDecay { exponent: f64 },
}

/// JSON descriptor of a closed-form oracle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormDesc {
    pub m: usize,
    pub p: usize,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(flatten)]
    pub family: ClosedFormFamily,
}

fn one() -> f64 {
    1.0
}

/// Slices with a prescribed energy profile: slice `k` is a seeded Gaussian
/// matrix rescaled to the profile's Frobenius norm.
#[derive(Clone, Debug)]
pub struct ClosedFormOracle {
    desc: ClosedFormDesc,
}

impl ClosedFormOracle {
    pub fn new(desc: ClosedFormDesc) -> Result<Self> {
        if desc.m == 0 || desc.p == 0 {
            return Err(Error::Invalid("closed-form oracle needs positive dimensions".into()));
        }
        if !(desc.scale.is_finite() && desc.scale >= 0.0) {
            return Err(Error::Invalid("scale must be finite and non-negative".into()));
        }
        match desc.family {
            ClosedFormFamily::GeometricDecay { ratio } if !(ratio > 0.0 && ratio < 1.0) => {
                return Err(Error::Invalid(format!("geometric ratio {ratio} not in (0, 1)")));
            }
            ClosedFormFamily::PowerDecay { exponent } if !(exponent > 1.0 && exponent.is_finite()) => {
                return Err(Error::Invalid(format!("power exponent {exponent} must exceed 1")));
            }
            _ => {}
        }
        Ok(Self { desc })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::new(serde_json::from_str(s)?)
    }

    pub fn desc(&self) -> &ClosedFormDesc {
        &self.desc
    }

    /// `‖X̂_k‖_F²` by the formula.
    pub fn slice_energy(&self, k: i64) -> f64 {
        let a = k.unsigned_abs() as f64;
        self.desc.scale
            * match self.desc.family {
                ClosedFormFamily::GeometricDecay { ratio } => ratio.powf(a),
                ClosedFormFamily::PowerDecay { exponent } => (1.0 + a).powf(-exponent),
            }
    }

    /// Materialize the band `|k| ≤ b` as a tensor.
    pub fn materialize(&self, b: u64) -> Result<QtTensor> {
        let b = b as i64;
        let slices = (-b..=b).into_par_iter().map(|k| self.slice(k)).collect::<Result<Vec<_>>>()?;
        QtTensor::from_band(-b, slices)
    }
}

impl SliceOracle for ClosedFormOracle {
    fn shape(&self) -> (usize, usize) {
        (self.desc.m, self.desc.p)
    }

    fn slice(&self, k: i64) -> Result<CMat> {
        let (m, p) = (self.desc.m, self.desc.p);
        let seed = self.desc.seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let mut rng = Pcg64::seed_from_u64(seed);
        let g = CMat::from_fn(m, p, |_, _| {
            C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
        });
        let norm = frobenius_sq(&g).sqrt();
        Ok(g * C64::from(self.slice_energy(k).sqrt() / norm))
    }

    fn total_energy(&self) -> Option<f64> {
        match self.desc.family {
            ClosedFormFamily::GeometricDecay { ratio } => Some(self.desc.scale * (1.0 + ratio) / (1.0 - ratio)),
            ClosedFormFamily::PowerDecay { .. } => None,
        }
    }

    fn tail_energy(&self, b: u64) -> Option<f64> {
        let c = self.desc.scale;
        let b = b as f64;
        Some(match self.desc.family {
            ClosedFormFamily::GeometricDecay { ratio } => 2.0 * c * ratio.powf(b + 1.0) / (1.0 - ratio),
            // Σ_{k>B} (1+k)^{-α} ≤ ∫_B^∞ (1+x)^{-α} dx
            ClosedFormFamily::PowerDecay { exponent } => 2.0 * c * (1.0 + b).powf(1.0 - exponent) / (exponent - 1.0),
        })
    }
}

/// Slices stored as `slice_{k}.mat` files in a directory. A missing file is
/// a zero slice.
#[derive(Clone, Debug)]
pub struct DirOracle {
    dir: PathBuf,
    m: usize,
    p: usize,
    total: f64,
}

impl DirOracle {
    pub fn new(dir: impl Into<PathBuf>, m: usize, p: usize, total_energy: f64) -> Result<Self> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(Error::Invalid(format!("{} is not a directory", dir.display())));
        }
        if !(total_energy.is_finite() && total_energy >= 0.0) {
            return Err(Error::Invalid("total energy must be finite and non-negative".into()));
        }
        Ok(Self {
            dir,
            m,
            p,
            total: total_energy,
        })
    }
}

impl SliceOracle for DirOracle {
    fn shape(&self) -> (usize, usize) {
        (self.m, self.p)
    }

    fn slice(&self, k: i64) -> Result<CMat> {
        let path = self.dir.join(crate::io::slice_file_name(k));
        if !path.exists() {
            return Ok(CMat::zeros(self.m, self.p));
        }
        let (kk, s) = crate::io::read_slice_mat(&path).map_err(|e| Error::Oracle { k, reason: e.to_string() })?;
        if kk != k || s.shape() != (self.m, self.p) {
            return Err(Error::Oracle {
                k,
                reason: format!("file holds slice {kk} of shape {:?}", s.shape()),
            });
        }
        Ok(s)
    }

    fn total_energy(&self) -> Option<f64> {
        Some(self.total)
    }
}

/// Band growth policy. Bands never shrink between stages.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BandSchedule {
    pub start: u64,
    pub max_band: u64,
    pub growth: Growth,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Growth {
    /// `B ← max(1, 2B)`
    Doubling,
    /// `B ← B + step`
    Additive(u64),
}

pub const DEFAULT_MAX_BAND: u64 = 1 << 20;

impl Default for BandSchedule {
    fn default() -> Self {
        Self {
            start: 0,
            max_band: DEFAULT_MAX_BAND,
            growth: Growth::Doubling,
        }
    }
}

impl BandSchedule {
    pub fn next(&self, b: u64) -> u64 {
        let n = match self.growth {
            Growth::Doubling => (2 * b).max(1),
            Growth::Additive(step) => b + step.max(1),
        };
        n.min(self.max_band)
    }
}

/// One stage's proof that its leader is global: `sigma_sq > bound`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub stage: usize,
    pub band: u64,
    pub sigma_sq: f64,
    pub bound: f64,
}

impl Certificate {
    pub fn holds(&self) -> bool {
        certified(self.sigma_sq, self.bound)
    }
}

/// Strict inequality with a relative guard against boundary ties.
fn certified(sigma_sq: f64, bound: f64) -> bool {
    sigma_sq > 0.0 && sigma_sq - bound > 1e-12 * sigma_sq
}

#[derive(Clone, Debug)]
pub struct ExtractionReport {
    pub components: ComponentList,
    pub bands_used: Vec<u64>,
    pub certificates: Vec<Certificate>,
    pub slices_evaluated: usize,
    /// `‖X‖_H² − Σ σₙ²`; an upper bound when the oracle has no total energy.
    pub residual_energy: f64,
    /// The tensor ran out of components before `q` were found.
    pub exhausted: bool,
}

/// Outcome of checking one band.
#[derive(Clone, Debug)]
pub struct BandCheck {
    pub certified: bool,
    pub leader: Option<Component>,
    pub sigma_sq: f64,
    pub bound: f64,
    pub in_band_energy: f64,
}

struct SliceState {
    deflated: CMat,
    floor: f64,
    atoms: usize,
    svd: Option<SliceSvd>,
}

impl SliceState {
    fn subtract(&mut self, c: &Component) {
        self.deflated -= c.outer();
        self.atoms += 1;
        self.svd = None;
    }

    fn leader(&mut self, t: i64) -> Result<Option<Component>> {
        if self.svd.is_none() {
            let svd = svd_full(&self.deflated).map_err(|e| Error::SvdFailure {
                slice: Some(t),
                reason: e.to_string(),
            })?;
            self.svd = Some(svd);
        }
        let svd = self.svd.as_ref().expect("computed above");
        let sigma = svd.sigma_max();
        if sigma <= self.floor {
            return Ok(None);
        }
        Ok(Some(Component {
            sigma,
            l: self.atoms,
            t,
            u: svd.u.column(0).iter().copied().collect(),
            v: svd.v.column(0).iter().copied().collect(),
        }))
    }
}

/// Slice cache plus the deflation state of the streaming procedure.
pub struct Extractor<'a, O: SliceOracle + ?Sized> {
    oracle: &'a O,
    cache: BTreeMap<i64, SliceState>,
    deflated: Vec<Component>,
    pending: BTreeMap<i64, Vec<Component>>,
    evaluated: usize,
}

impl<'a, O: SliceOracle + ?Sized> Extractor<'a, O> {
    pub fn new(oracle: &'a O) -> Result<Self> {
        if oracle.total_energy().is_none() && oracle.tail_energy(0).is_none() {
            return Err(Error::NoEnergyBound);
        }
        Ok(Self {
            oracle,
            cache: BTreeMap::new(),
            deflated: Vec::new(),
            pending: BTreeMap::new(),
            evaluated: 0,
        })
    }

    pub fn slices_evaluated(&self) -> usize {
        self.evaluated
    }

    pub fn deflated(&self) -> &[Component] {
        &self.deflated
    }

    /// Subtract an atom from its home slice.
    pub fn deflate(&mut self, c: Component) {
        match self.cache.get_mut(&c.t) {
            Some(s) => s.subtract(&c),
            None => self.pending.entry(c.t).or_default().push(c.clone()),
        }
        self.deflated.push(c);
    }

    fn ensure_band(&mut self, b: u64) -> Result<()> {
        let b = b as i64;
        let missing: Vec<i64> = (-b..=b).filter(|k| !self.cache.contains_key(k)).collect();
        let (m, p) = self.oracle.shape();
        let oracle = self.oracle;
        let fetched = missing
            .par_iter()
            .map(|&k| {
                let s = oracle.slice(k).map_err(|e| match e {
                    e @ Error::Oracle { .. } => e,
                    other => Error::Oracle {
                        k,
                        reason: other.to_string(),
                    },
                })?;
                if s.shape() != (m, p) {
                    return Err(Error::Oracle {
                        k,
                        reason: format!("slice shape {:?}, expected {:?}", s.shape(), (m, p)),
                    });
                }
                if !s.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                    return Err(Error::Oracle {
                        k,
                        reason: "non-finite entry".into(),
                    });
                }
                Ok((k, s))
            })
            .collect::<Result<Vec<_>>>()?;
        self.evaluated += fetched.len();
        for (k, s) in fetched {
            let floor = rank_threshold(crate::linalg::spectral_norm(&s));
            let mut state = SliceState {
                deflated: s,
                floor,
                atoms: 0,
                svd: None,
            };
            for c in self.pending.remove(&k).unwrap_or_default() {
                state.subtract(&c);
            }
            self.cache.insert(k, state);
        }
        Ok(())
    }

    /// Evaluate `|k| ≤ b` and test the certificate for the deflated tensor.
    pub fn check(&mut self, b: u64) -> Result<BandCheck> {
        self.ensure_band(b)?;
        let bi = b as i64;
        let mut leader: Option<Component> = None;
        let mut in_band = 0.0;
        for (&t, state) in self.cache.range_mut(-bi..=bi) {
            in_band += frobenius_sq(&state.deflated);
            if let Some(c) = state.leader(t)? {
                if leader.as_ref().is_none_or(|l| component_order(&c, l).is_lt()) {
                    leader = Some(c);
                }
            }
        }
        let out_atoms: f64 = self
            .deflated
            .iter()
            .filter(|c| c.t.unsigned_abs() > b)
            .map(|c| c.sigma * c.sigma)
            .sum();
        let all_atoms: f64 = self.deflated.iter().map(|c| c.sigma * c.sigma).sum();
        let from_tail = self.oracle.tail_energy(b).map(|e| e - out_atoms);
        let from_total = self.oracle.total_energy().map(|e| e - all_atoms - in_band);
        let bound = match (from_tail, from_total) {
            (Some(a), Some(t)) => a.min(t),
            (Some(a), None) => a,
            (None, Some(t)) => t,
            (None, None) => return Err(Error::NoEnergyBound),
        }
        .max(0.0);
        let sigma_sq = leader.as_ref().map_or(0.0, |c| c.sigma * c.sigma);
        Ok(BandCheck {
            certified: leader.is_some() && certified(sigma_sq, bound),
            leader,
            sigma_sq,
            bound,
            in_band_energy: in_band,
        })
    }

    /// Upper bound on the total energy of the original tensor.
    fn energy_scale(&self, b: u64) -> f64 {
        if let Some(t) = self.oracle.total_energy() {
            return t;
        }
        let bi = b as i64;
        let in_band: f64 = self.cache.range(-bi..=bi).map(|(_, s)| frobenius_sq(&s.deflated)).sum();
        let atoms: f64 = self.deflated.iter().map(|c| c.sigma * c.sigma).sum();
        self.oracle.tail_energy(b).unwrap_or(0.0) + in_band + atoms
    }
}

/// Test band `|k| ≤ b` after deflating `deflated`.
pub fn certify_band<O: SliceOracle + ?Sized>(oracle: &O, deflated: &ComponentList, b: u64) -> Result<BandCheck> {
    let mut ex = Extractor::new(oracle)?;
    for c in deflated.iter() {
        ex.deflate(c.clone());
    }
    ex.check(b)
}

/// Extract the `q` leading components.
pub fn extract_top_q<O: SliceOracle + ?Sized>(oracle: &O, q: usize, schedule: BandSchedule) -> Result<ExtractionReport> {
    let mut ex = Extractor::new(oracle)?;
    let mut b = schedule.start.min(schedule.max_band);
    let mut bands_used = Vec::new();
    let mut certificates = Vec::new();
    let mut exhausted = false;

    'stages: for stage in 0..q {
        loop {
            let chk = ex.check(b)?;
            if chk.certified {
                certificates.push(Certificate {
                    stage,
                    band: b,
                    sigma_sq: chk.sigma_sq,
                    bound: chk.bound,
                });
                bands_used.push(b);
                ex.deflate(chk.leader.expect("certified band has a leader"));
                break;
            }
            let floor = 1e-20 + 64.0 * f64::EPSILON * ex.energy_scale(b);
            if chk.leader.is_none() && chk.bound <= floor {
                exhausted = true;
                break 'stages;
            }
            if b >= schedule.max_band {
                return Err(Error::BandExceeded {
                    stage,
                    band: b,
                    sigma_sq: chk.sigma_sq,
                    bound: chk.bound,
                });
            }
            b = schedule.next(b);
        }
    }

    let extracted: f64 = ex.deflated().iter().map(|c| c.sigma * c.sigma).sum();
    let residual_energy = ex.energy_scale(b) - extracted;
    Ok(ExtractionReport {
        components: ComponentList::new(ex.deflated().to_vec(), Provenance::Streaming),
        bands_used,
        certificates,
        slices_evaluated: ex.slices_evaluated(),
        residual_energy,
        exhausted,
    })
}

/// Recompute every stage from scratch and confirm that the recorded
/// certificate holds and selects the recorded component.
pub fn replay_certificates<O: SliceOracle + ?Sized>(oracle: &O, report: &ExtractionReport) -> Result<bool> {
    if report.certificates.len() != report.components.len() {
        return Ok(false);
    }
    let mut ex = Extractor::new(oracle)?;
    for (cert, comp) in report.certificates.iter().zip(report.components.iter()) {
        let chk = ex.check(cert.band)?;
        let Some(leader) = chk.leader else {
            return Ok(false);
        };
        let same = (leader.l, leader.t) == (comp.l, comp.t) && (leader.sigma - comp.sigma).abs() <= 1e-12 * comp.sigma.max(1.0);
        if !(chk.certified && cert.holds() && same) {
            return Ok(false);
        }
        ex.deflate(comp.clone());
    }
    Ok(true)
}
