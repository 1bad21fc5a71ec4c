use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("non-finite value at pixel {pixel} (observation {observation})")]
    NonFinite { pixel: usize, observation: usize },

    #[error("design error: {0}")]
    Design(String),

    /// Pixels whose residual variance is zero under the fitted model.
    #[error("degenerate pixels with zero residual variance: {}", format_indices(.pixels))]
    DegeneratePixels { pixels: Vec<usize> },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error(
        "estimated combined excursion set is empty or fills the whole lattice; \
         confidence regions are undefined because there is no estimated boundary"
    )]
    EmptyEstimate,

    #[error("degenerate bootstrap: zero standard deviation in realization {realization} at boundary point {point}")]
    DegenerateBootstrap { realization: usize, point: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("PNG error: {0}")]
    Png(String),
}

fn format_indices(pixels: &[usize]) -> String {
    const SHOWN: usize = 20;
    let mut s = pixels
        .iter()
        .take(SHOWN)
        .map(|p| p.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    if pixels.len() > SHOWN {
        s.push_str(&format!(", ... ({} total)", pixels.len()));
    }
    s
}
