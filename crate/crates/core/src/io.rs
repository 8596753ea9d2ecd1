//! The QTT binary format and CSV export.
//!
//! A file is the ASCII magic `QTT1`, a little-endian `u32` header length, a
//! UTF-8 JSON header and a payload of little-endian complex128 values
//! (`re` then `im`), row-major within each slice. Tensor payloads hold the
//! band slices in index order followed by the tail slice when `has_tail` is 1.
//! A q-SVD file concatenates the sections `U`, `S`, `V`, each laid out like a
//! tensor payload and described by the header's `sections` array. A
//! component file stores, per component, `σ` (as a complex value with zero
//! imaginary part), then `u`, then `v`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decomp::{Component, ComponentList, FiniteTsvd, Provenance, QSvd};
use crate::error::{Error, Result};
use crate::linalg::{CMat, SliceSvd, C64};
use crate::tensor::{FiniteTubalTensor, QtTensor, TubeArray};
use crate::transform::{TransformDescriptor, TransformSpec};

pub const MAGIC: &[u8; 4] = b"QTT1";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Tensor,
    Qsvd,
    Components,
}

/// Shape of one tensor section.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub m: usize,
    pub p: usize,
    pub lo: i64,
    pub n_slices: usize,
    pub has_tail: u8,
}

impl Section {
    fn payload_len(&self) -> usize {
        16 * self.m * self.p * (self.n_slices + self.has_tail as usize)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: Kind,
    pub m: usize,
    pub p: usize,
    pub lo: i64,
    pub n_slices: usize,
    pub has_tail: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<TransformDescriptor>,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sections: Vec<Section>,
    /// `[l, t]` per component.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indices: Option<Vec<(usize, i64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// Anything the QTT format stores.
#[derive(Clone, Debug)]
pub enum QttObject {
    Tensor(QtTensor),
    /// A finite tubal tensor in the original domain, with its transform.
    Finite(FiniteTubalTensor),
    QSvd(QSvd),
    Components(ComponentList),
}

impl QttObject {
    pub fn kind(&self) -> Kind {
        match self {
            QttObject::Tensor(_) | QttObject::Finite(_) => Kind::Tensor,
            QttObject::QSvd(_) => Kind::Qsvd,
            QttObject::Components(_) => Kind::Components,
        }
    }
}

fn has_tail_bits(t: &CMat) -> bool {
    t.iter().any(|z| z.re.to_bits() != 0 || z.im.to_bits() != 0)
}

fn section_of(name: &str, x: &QtTensor) -> Section {
    let (m, p) = x.shape();
    Section {
        name: name.into(),
        m,
        p,
        lo: x.lo(),
        n_slices: x.band_slices().len(),
        has_tail: has_tail_bits(x.tail_slice()) as u8,
    }
}

fn put_c64(buf: &mut Vec<u8>, z: C64) {
    buf.extend_from_slice(&z.re.to_le_bytes());
    buf.extend_from_slice(&z.im.to_le_bytes());
}

fn put_slice(buf: &mut Vec<u8>, s: &CMat) {
    for i in 0..s.nrows() {
        for j in 0..s.ncols() {
            put_c64(buf, s[(i, j)]);
        }
    }
}

fn put_tensor(buf: &mut Vec<u8>, x: &QtTensor, sec: &Section) {
    for s in x.band_slices() {
        put_slice(buf, s);
    }
    if sec.has_tail == 1 {
        put_slice(buf, x.tail_slice());
    }
}

fn tensor_header(kind: Kind, sec: &Section) -> Header {
    Header {
        kind,
        m: sec.m,
        p: sec.p,
        lo: sec.lo,
        n_slices: sec.n_slices,
        has_tail: sec.has_tail,
        transform: None,
        version: VERSION,
        sections: Vec::new(),
        indices: None,
        provenance: None,
    }
}

/// Serialize to bytes.
pub fn encode(obj: &QttObject) -> Result<Vec<u8>> {
    encode_with(obj, None)
}

/// A finite tSVDM stored as a q-SVD file: the transform-domain factor
/// slices at indices `0..n` and the transform descriptor in the header.
pub fn encode_tsvd(t: &FiniteTsvd) -> Result<Vec<u8>> {
    let tensor = |slices: Vec<CMat>| QtTensor::from_band(0, slices);
    let q = QSvd {
        u: tensor(t.slices.iter().map(|s| s.u.clone()).collect())?,
        s: tensor(t.slices.iter().map(SliceSvd::sigma_matrix).collect())?,
        v: tensor(t.slices.iter().map(|s| s.v.clone()).collect())?,
    };
    encode_with(&QttObject::QSvd(q), Some(t.s.spec().descriptor()))
}

fn encode_with(obj: &QttObject, transform: Option<TransformDescriptor>) -> Result<Vec<u8>> {
    let mut payload = Vec::new();
    let header = match obj {
        QttObject::Tensor(x) => {
            let sec = section_of("X", x);
            put_tensor(&mut payload, x, &sec);
            tensor_header(Kind::Tensor, &sec)
        }
        QttObject::Finite(x) => {
            let (m, p, n) = x.shape();
            for k in 0..n {
                put_slice(&mut payload, &x.data().frontal(k));
            }
            let mut h = tensor_header(
                Kind::Tensor,
                &Section {
                    name: "X".into(),
                    m,
                    p,
                    lo: 0,
                    n_slices: n,
                    has_tail: 0,
                },
            );
            h.transform = Some(x.spec().descriptor());
            h
        }
        QttObject::QSvd(q) => {
            let secs = vec![section_of("U", &q.u), section_of("S", &q.s), section_of("V", &q.v)];
            for (sec, x) in secs.iter().zip([&q.u, &q.s, &q.v]) {
                put_tensor(&mut payload, x, sec);
            }
            let mut h = tensor_header(Kind::Qsvd, &secs[1]);
            h.sections = secs;
            h.transform = transform;
            h
        }
        QttObject::Components(list) => {
            let (m, p) = component_shape(list)?;
            for c in list.iter() {
                put_c64(&mut payload, C64::from(c.sigma));
                c.u.iter().chain(&c.v).for_each(|&z| put_c64(&mut payload, z));
            }
            Header {
                kind: Kind::Components,
                m,
                p,
                lo: 0,
                n_slices: list.len(),
                has_tail: 0,
                transform: None,
                version: VERSION,
                sections: Vec::new(),
                indices: Some(list.indices()),
                provenance: Some(list.provenance),
            }
        }
    };
    Ok(frame(&serde_json::to_vec(&header)?, &payload))
}

fn component_shape(list: &ComponentList) -> Result<(usize, usize)> {
    let Some(first) = list.components.first() else {
        return Ok((0, 0));
    };
    let (m, p) = (first.u.len(), first.v.len());
    if list.iter().any(|c| c.u.len() != m || c.v.len() != p) {
        return Err(Error::DimensionMismatch("components have differing vector lengths".into()));
    }
    Ok((m, p))
}

fn frame(header: &[u8], payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + header.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header);
    out.extend_from_slice(payload);
    out
}

/// Split a framed buffer into its JSON header and payload.
fn unframe<'a>(bytes: &'a [u8], origin: &Path) -> Result<(&'a [u8], &'a [u8])> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic {
            path: origin.to_path_buf(),
        });
    }
    if bytes.len() < 8 {
        return Err(Error::Truncated {
            expected: 8,
            found: bytes.len(),
        });
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    if bytes.len() < 8 + hlen {
        return Err(Error::Truncated {
            expected: 8 + hlen,
            found: bytes.len(),
        });
    }
    Ok((&bytes[8..8 + hlen], &bytes[8 + hlen..]))
}

fn check_payload(payload: &[u8], expected: usize) -> Result<()> {
    match payload.len().cmp(&expected) {
        std::cmp::Ordering::Less => Err(Error::Truncated {
            expected,
            found: payload.len(),
        }),
        std::cmp::Ordering::Greater => Err(Error::Header(format!("{} trailing payload bytes", payload.len() - expected))),
        std::cmp::Ordering::Equal => Ok(()),
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn c64(&mut self) -> C64 {
        let re = f64::from_le_bytes(self.buf[self.pos..self.pos + 8].try_into().expect("8 bytes"));
        let im = f64::from_le_bytes(self.buf[self.pos + 8..self.pos + 16].try_into().expect("8 bytes"));
        self.pos += 16;
        C64::new(re, im)
    }

    fn slice(&mut self, m: usize, p: usize) -> CMat {
        let mut s = CMat::zeros(m, p);
        for i in 0..m {
            for j in 0..p {
                s[(i, j)] = self.c64();
            }
        }
        s
    }

    fn tensor(&mut self, sec: &Section) -> Result<QtTensor> {
        let slices = (0..sec.n_slices).map(|_| self.slice(sec.m, sec.p)).collect();
        let tail = match sec.has_tail {
            0 => CMat::zeros(sec.m, sec.p),
            1 => self.slice(sec.m, sec.p),
            v => return Err(Error::Header(format!("has_tail must be 0 or 1, got {v}"))),
        };
        QtTensor::new(sec.lo, slices, tail)
    }
}

/// Deserialize from bytes; `origin` labels errors.
pub fn decode(bytes: &[u8], origin: &Path) -> Result<QttObject> {
    let (hbytes, payload) = unframe(bytes, origin)?;
    let header: Header = serde_json::from_slice(hbytes).map_err(|e| Error::Header(e.to_string()))?;
    if header.version != VERSION {
        return Err(Error::Version(header.version));
    }
    let mut rd = Reader { buf: payload, pos: 0 };
    match header.kind {
        Kind::Tensor => {
            let sec = Section {
                name: "X".into(),
                m: header.m,
                p: header.p,
                lo: header.lo,
                n_slices: header.n_slices,
                has_tail: header.has_tail,
            };
            if sec.has_tail > 1 {
                return Err(Error::Header(format!("has_tail must be 0 or 1, got {}", sec.has_tail)));
            }
            check_payload(payload, sec.payload_len())?;
            match &header.transform {
                None => Ok(QttObject::Tensor(rd.tensor(&sec)?)),
                Some(d) => {
                    if sec.has_tail != 0 || sec.lo != 0 {
                        return Err(Error::Header("finite tensor with tail or offset".into()));
                    }
                    let spec = TransformSpec::from_descriptor(d)?;
                    let slices: Vec<CMat> = (0..sec.n_slices).map(|_| rd.slice(sec.m, sec.p)).collect();
                    let data = if slices.is_empty() {
                        TubeArray::zeros(sec.m, sec.p, 0)
                    } else {
                        TubeArray::from_frontals(&slices)?
                    };
                    Ok(QttObject::Finite(FiniteTubalTensor::new(data, spec)?))
                }
            }
        }
        Kind::Qsvd => {
            let names: Vec<&str> = header.sections.iter().map(|s| s.name.as_str()).collect();
            if names != ["U", "S", "V"] {
                return Err(Error::Header(format!("q-SVD sections {names:?}, expected [U, S, V]")));
            }
            check_payload(payload, header.sections.iter().map(Section::payload_len).sum())?;
            let u = rd.tensor(&header.sections[0])?;
            let s = rd.tensor(&header.sections[1])?;
            let v = rd.tensor(&header.sections[2])?;
            let (m, p) = s.shape();
            if u.shape() != (m, m) || v.shape() != (p, p) {
                return Err(Error::Header("q-SVD factor shapes are inconsistent".into()));
            }
            Ok(QttObject::QSvd(QSvd { u, s, v }))
        }
        Kind::Components => {
            let indices = header.indices.ok_or_else(|| Error::Header("components without indices".into()))?;
            if indices.len() != header.n_slices {
                return Err(Error::Header("index count differs from n_slices".into()));
            }
            let (m, p) = (header.m, header.p);
            check_payload(payload, 16 * indices.len() * (1 + m + p))?;
            let components = indices
                .iter()
                .map(|&(l, t)| {
                    let sigma = rd.c64().re;
                    let u = (0..m).map(|_| rd.c64()).collect();
                    let v = (0..p).map(|_| rd.c64()).collect();
                    Component { sigma, l, t, u, v }
                })
                .collect();
            let provenance = header.provenance.unwrap_or(Provenance::Offline);
            Ok(QttObject::Components(ComponentList::new(components, provenance)))
        }
    }
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_qtt(path: &Path, obj: &QttObject) -> Result<()> {
    write_atomic(path, &encode(obj)?)
}

pub fn read_qtt(path: &Path) -> Result<QttObject> {
    decode(&fs::read(path)?, path)
}

/// Read the header only.
pub fn read_header(path: &Path) -> Result<Header> {
    let bytes = fs::read(path)?;
    let (h, _) = unframe(&bytes, path)?;
    serde_json::from_slice(h).map_err(|e| Error::Header(e.to_string()))
}

fn kind_mismatch(path: &Path, want: &str) -> Error {
    Error::Header(format!("{} does not hold a {want}", path.display()))
}

pub fn read_tensor(path: &Path) -> Result<QtTensor> {
    match read_qtt(path)? {
        QttObject::Tensor(x) => Ok(x),
        _ => Err(kind_mismatch(path, "quasitubal tensor")),
    }
}

pub fn read_qsvd(path: &Path) -> Result<QSvd> {
    match read_qtt(path)? {
        QttObject::QSvd(q) => Ok(q),
        _ => Err(kind_mismatch(path, "q-SVD")),
    }
}

pub fn read_components(path: &Path) -> Result<ComponentList> {
    match read_qtt(path)? {
        QttObject::Components(c) => Ok(c),
        _ => Err(kind_mismatch(path, "component list")),
    }
}

#[derive(Serialize, Deserialize)]
struct SliceHeader {
    m: usize,
    p: usize,
    k: i64,
}

pub fn slice_file_name(k: i64) -> String {
    format!("slice_{k}.mat")
}

/// One transform-domain frontal slice with header `{m, p, k}`.
pub fn encode_slice_mat(k: i64, s: &CMat) -> Result<Vec<u8>> {
    let header = SliceHeader {
        m: s.nrows(),
        p: s.ncols(),
        k,
    };
    let mut payload = Vec::with_capacity(16 * s.len());
    put_slice(&mut payload, s);
    Ok(frame(&serde_json::to_vec(&header)?, &payload))
}

pub fn decode_slice_mat(bytes: &[u8], origin: &Path) -> Result<(i64, CMat)> {
    let (h, payload) = unframe(bytes, origin)?;
    let h: SliceHeader = serde_json::from_slice(h).map_err(|e| Error::Header(e.to_string()))?;
    check_payload(payload, 16 * h.m * h.p)?;
    Ok((h.k, Reader { buf: payload, pos: 0 }.slice(h.m, h.p)))
}

pub fn write_slice_mat(path: &Path, k: i64, s: &CMat) -> Result<()> {
    write_atomic(path, &encode_slice_mat(k, s)?)
}

pub fn read_slice_mat(path: &Path) -> Result<(i64, CMat)> {
    decode_slice_mat(&fs::read(path)?, path)
}

/// Write every band slice of a tail-zero tensor as `slice_{k}.mat` into
/// `dir`; returns the total energy.
pub fn write_slice_dir(dir: &Path, x: &QtTensor) -> Result<f64> {
    if !x.is_tail_zero() {
        return Err(Error::NotInH);
    }
    fs::create_dir_all(dir)?;
    let mut energy = 0.0;
    if let Some((lo, hi)) = x.band() {
        for k in lo..=hi {
            let s = x.slice(k);
            energy += crate::linalg::frobenius_sq(s);
            write_slice_mat(&dir.join(slice_file_name(k)), k, s)?;
        }
    }
    Ok(energy)
}

/// CSV header `n,sigma,l,t,u_re_0,u_im_0,…,v_re_0,v_im_0,…`.
pub fn components_csv_header(m: usize, p: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["n", "sigma", "l", "t"].iter().map(|s| s.to_string()).collect();
    for (name, len) in [("u", m), ("v", p)] {
        for i in 0..len {
            cols.push(format!("{name}_re_{i}"));
            cols.push(format!("{name}_im_{i}"));
        }
    }
    cols
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// `n` is 1-based, `l` 0-based; reals carry 17 significant digits.
pub fn write_components_csv(path: &Path, list: &ComponentList) -> Result<()> {
    let (m, p) = component_shape(list)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(components_csv_header(m, p))?;
    for (n, c) in list.iter().enumerate() {
        let mut row = vec![(n + 1).to_string(), fmt_f64(c.sigma), c.l.to_string(), c.t.to_string()];
        for z in c.u.iter().chain(&c.v) {
            row.push(fmt_f64(z.re));
            row.push(fmt_f64(z.im));
        }
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

/// Parse a file written by [`write_components_csv`].
pub fn read_components_csv(path: &Path) -> Result<Vec<Component>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let m = headers.iter().filter(|h| h.starts_with("u_re_")).count();
    let p = headers.iter().filter(|h| h.starts_with("v_re_")).count();
    let bad = |what: &str| Error::Header(format!("components CSV: bad {what}"));
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> { rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| bad("number")) };
        let sigma = num(1)?;
        let l = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad("l"))?;
        let t = rec.get(3).and_then(|s| s.parse().ok()).ok_or_else(|| bad("t"))?;
        let vec_at = |start: usize, len: usize| -> Result<Vec<C64>> {
            (0..len)
                .map(|i| Ok(C64::new(num(start + 2 * i)?, num(start + 2 * i + 1)?)))
                .collect()
        };
        let u = vec_at(4, m)?;
        let v = vec_at(4 + 2 * m, p)?;
        out.push(Component { sigma, l, t, u, v });
    }
    Ok(out)
}
