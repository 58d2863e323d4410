//! Synthetic phantoms and textures, measurement synthesis, file formats and datasets.

mod dataset;
mod images;
mod measurement;
mod phantom;

pub use dataset::{
    build_mri_dataset, build_sr_dataset, build_sr_dataset_from_images, split_seeds, DatasetManifest, ManifestEntry, MriDataConfig, MriDataset, Split, SrDataConfig, SrDataset,
    MRI_DATA_KEYS,
};
pub use images::{load_image, load_image_dir, save_image, BitDepth};
pub use measurement::{synthesize_measurements, MeasurementFile, MEASUREMENT_MAGIC, MEASUREMENT_VERSION};
pub use phantom::{generate_phantom, generate_texture, PhantomSpec};
