use thiserror::Error;

use crate::eigen::EigenError;
use crate::model::ModelError;
use crate::panel::PanelError;
use crate::report::ReportError;
use crate::rmt::RmtError;
use crate::sector::SectorError;
use crate::synth::SynthError;

/// Any failure of the library, tagged for CLI exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Panel(#[from] PanelError),

    #[error(transparent)]
    Eigen(#[from] EigenError),

    #[error(transparent)]
    Sector(#[from] SectorError),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Rmt(#[from] RmtError),

    #[error(transparent)]
    Synth(#[from] SynthError),

    #[error(transparent)]
    Report(#[from] ReportError),

    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("invalid input: {0}")]
    Input(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Eigen(EigenError::NonFinite { .. }) => false,
            Error::Eigen(_) => true,
            Error::Model(ModelError::Sector(e)) | Error::Sector(e) => matches!(e, SectorError::NonPositiveLeading { .. } | SectorError::Eigen(_)),
            Error::Model(ModelError::ZeroVarianceFactor(_) | ModelError::NonPositiveLeading { .. } | ModelError::Eigen(_)) => true,
            Error::Rmt(RmtError::RankDeficient(_) | RmtError::NonPositiveEigenvalue(..) | RmtError::NoResiduals | RmtError::Eigen(_)) => true,
            Error::Report(ReportError::Model(ModelError::Eigen(_))) => true,
            _ => false,
        }
    }

    /// 1 for input errors, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        if self.is_numerical() {
            2
        } else {
            1
        }
    }
}
