//! Scene files, synthetic scenes and CSV ingestion.

pub mod format;
pub mod generate;
pub mod ingest;

pub use format::{list_scene_files, load_dataset, save_dataset, ForecastFile, SceneFile};
pub use generate::{generate_scenes, Sample, ScenarioKind, ScenarioSpec};
pub use ingest::{ingest_csv, ingest_file, Ingested};
