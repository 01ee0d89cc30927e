use thiserror::Error;

use crate::analytics::AnalyticsError;
use crate::descriptor::DescriptorError;
use crate::placement::PlacementError;
use crate::taxonomy::TaxonomyError;
use crate::verify::VerifyError;

/// Any failure raised by the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("no modules")]
    NoModules,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
