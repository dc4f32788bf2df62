//! Local histograms of images, occlusion models of textures, and a subspace
//! classifier built on top of them.
//!
//! Images live on a cyclic grid `Z_W × Z_H` and take values in a finite
//! product of cyclic groups. [`histogram::local_histogram`] turns an image
//! into a [`cube::HistCube`], one normalized histogram per pixel.
//! [`occlusion`] and [`texture`] describe random label maps that paste
//! source images together, and tell when the expected local histogram of the
//! result is a fixed mixture of the sources' local histograms.
//! [`classifier`] learns one affine subspace of histograms per class.
//!
//! ```
//! use histocube::prelude::*;
//!
//! let grid = Grid::new(4, 4)?;
//! let f = Image::from_fn(grid, ValueSpace::cyclic(2)?, |p| (p.row + p.col) % 2)?;
//! let lh = local_histogram(&f, &WeightingFunction::square(grid, 1)?, &FilterPlan::direct())?;
//! // every pixel sees five of one value and four of the other
//! assert_eq!(lh.histogram(0), vec![5.0 / 9.0, 4.0 / 9.0]);
//! assert!(lh.normalization_error() < 1e-12);
//! # Ok::<(), histocube::Error>(())
//! ```

pub mod cube;
pub mod error;
mod fft;
pub mod grid;
pub mod histogram;
pub mod image;
pub mod occlusion;
pub mod rng;
pub mod texture;
pub mod window;
pub mod classifier;
pub mod io;
pub mod synthetic;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::classifier::{
        classify_image, classify_image_reference, classify_pixel, erode_labels, evaluate, train, ConfusionMatrix,
        SubspaceClassifier, TrainingSet,
    };
    pub use crate::cube::HistCube;
    pub use crate::error::{Error, Result};
    pub use crate::grid::{Grid, Offset, Point};
    pub use crate::histogram::{bin_histcube, local_histogram, FilterMode, FilterPlan};
    pub use crate::image::{quantize_values, translate_image, Image, LabelMap, Quantization, ValueMap, ValueSpace};
    pub use crate::occlusion::{
        check_flatness, expected_local_histogram, marginal_field, occlude, sample_label_map,
        verify_decomposition_bound, MarginalField, OcclusionModel, ENUMERATION_CAP,
    };
    pub use crate::texture::{
        check_effective_disjointness, overlay_marginals, synthesize_texture, BlobDistribution, DisjointnessCheck,
        ExpansionModel, OverlayModel,
    };
    pub use crate::window::{WeightingFunction, WindowSpec};
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/local-histograms.md")]
    pub mod local_histograms {}
    #[doc = include_str!("../../../book/src/occlusion.md")]
    pub mod occlusion {}
    #[doc = include_str!("../../../book/src/textures.md")]
    pub mod textures {}
    #[doc = include_str!("../../../book/src/classification.md")]
    pub mod classification {}
    #[doc = include_str!("../../../book/src/files-and-cli.md")]
    pub mod files_and_cli {}
    #[doc = include_str!("../../../README.md")]
    pub mod readme {}
}
