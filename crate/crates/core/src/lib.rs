//! Focus-contrast agglomeration classification for instance masks of
//! microscopic crystals.
//!
//! Instances that touch are agglomerated when they share a focus level and
//! separated when their focus differs. The crate covers the mask interchange
//! format, raster post-processing, focus measures, the touch graph, the
//! contrast classifiers, blur augmentation, a synthetic scene generator and
//! the evaluation metrics.

pub mod augment;
pub mod contrast;
pub mod focusmeas;
pub mod graph;
pub mod gray;
pub mod interchange;
pub mod metrics;
pub mod raster;
pub mod synth;

pub use contrast::{classify_agglomeration, ClassificationConfig, ContrastMethod, FocusSource};
pub use gray::GrayImage;
pub use interchange::{
    AggloClass, BBox, BinaryMask, FocusLevel, InstanceRecord, Role, Scene, SceneError,
};
