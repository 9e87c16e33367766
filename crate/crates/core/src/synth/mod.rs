//! Synthetic courts, ball flights and labelled trajectory datasets.

mod court;
mod dataset;
mod flight;
mod generate;
mod label;

pub use court::{render_court, Camera, CourtGeometry, BACKGROUND, COURT_WIDTH, LINE_INTENSITY, SIDE_LENGTH};
pub use dataset::{dataset_from_text, dataset_to_text, read_dataset, write_dataset, DatasetRecord, DATA_MAGIC};
pub use flight::{simulate_trajectory, LaunchParams, FRAME_RATE, GRAVITY, HORIZON};
pub use generate::{
    generate_dataset, generate_dataset_threads, generate_record, random_camera, record_geometry, random_geometry, scheduled_label, GeneratorConfig,
};
pub use label::assign_label;
