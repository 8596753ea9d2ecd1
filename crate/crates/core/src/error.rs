use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("transform matrix is not invertible: {0}")]
    NotInvertible(String),

    #[error("transform is not unitary; {0}")]
    NonUnitaryTransform(String),

    #[error("quasitube is not non-negative")]
    NotNonneg,

    #[error("quasitube is not self-adjoint")]
    NotSelfAdjoint,

    #[error("quasitube is singular: 0 lies in its spectrum")]
    Singular,

    #[error("object is not in H (nonzero constant tail)")]
    NotInH,

    #[error("expected a square tensor, got {m}x{p}")]
    NonSquare { m: usize, p: usize },

    #[error("rank {rank} out of range (max {max})")]
    RankOutOfRange { rank: usize, max: usize },

    #[error("infinite candidate set: {0}")]
    InfiniteCandidates(String),

    #[error("SVD failed on frontal slice {slice:?}: {reason}")]
    SvdFailure { slice: Option<i64>, reason: String },

    #[error("slice oracle failed at k = {k}: {reason}")]
    Oracle { k: i64, reason: String },

    #[error("oracle provides neither total energy nor a tail-energy bound")]
    NoEnergyBound,

    #[error(
        "stage {stage}: band reached {band} without certification \
         (sigma_max^2 = {sigma_sq:e}, out-of-band bound = {bound:e})"
    )]
    BandExceeded {
        stage: usize,
        band: u64,
        sigma_sq: f64,
        bound: f64,
    },

    #[error("bad magic in {path}")]
    BadMagic { path: PathBuf },

    #[error("unsupported format version {0}")]
    Version(u32),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("malformed header: {0}")]
    Header(String),

    #[error("invalid parameter: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
