use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite matrix")]
    NonFinite,

    #[error("rank deficient loading")]
    RankDeficient,

    #[error("global estimation requires >= 2 groups (got {0})")]
    TooFewGroups(usize),

    #[error("insufficient length for lag: T = {t}, max lag = {h0}")]
    InsufficientLength { t: usize, h0: usize },

    #[error("degenerate spectrum")]
    DegenerateSpectrum,

    #[error("input does not have orthonormal columns (deviation {0:.3e})")]
    NotOrthonormal(f64),

    #[error("noise covariance not PSD (min eigenvalue {0:.3e})")]
    NoiseNotPsd(f64),

    #[error("local space swallowed by global complement in group {group} (sigma_min = {sigma_min:.3e})")]
    LocalSpaceSwallowed { group: usize, sigma_min: f64 },

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid panel: {}", .0.join("; "))]
    InvalidPanel(Vec<String>),

    #[error("invalid factor dimensions: {0}")]
    InvalidDims(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("ingestion failed: {0}")]
    Ingest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used for structured CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonFinite => "non_finite",
            Error::RankDeficient => "rank_deficient",
            Error::TooFewGroups(_) => "too_few_groups",
            Error::InsufficientLength { .. } => "insufficient_length",
            Error::DegenerateSpectrum => "degenerate_spectrum",
            Error::NotOrthonormal(_) => "not_orthonormal",
            Error::NoiseNotPsd(_) => "noise_not_psd",
            Error::LocalSpaceSwallowed { .. } => "local_space_swallowed",
            Error::DegenerateSeries(_) => "degenerate_series",
            Error::Shape(_) => "shape",
            Error::InvalidPanel(_) => "invalid_panel",
            Error::InvalidDims(_) => "invalid_dims",
            Error::Config(_) => "config",
            Error::Ingest(_) => "ingest",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
