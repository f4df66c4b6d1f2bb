//! Implicit object memory for embodied object detection.
//!
//! Detected object features are projected onto a ground-plane grid, averaged
//! over the frames each cell was seen in, and read back along every pixel's
//! depth ray to enhance the detector's pixel features. The crate also ships
//! the two comparison memories, a box-world RGB-D simulator with an oracle
//! detector, and the evaluation protocols.
//!
//! Geometry and memory code is generic over [`Scalar`] (`f32` or `f64`);
//! the simulator and the evaluators work in `f64`.

pub mod baselines;
pub mod detector;
pub mod embedding;
pub mod evaluation;
pub mod features;
pub mod geometry;
pub mod linalg;
pub mod memories;
pub mod memory;
pub mod pipeline;
pub mod scalar;
pub mod seeding;
pub mod simulator;

pub use scalar::Scalar;

pub type PoseF32 = geometry::Pose<f32>;
pub type PoseF64 = geometry::Pose<f64>;
pub type ExtrinsicsF32 = geometry::Extrinsics<f32>;
pub type ExtrinsicsF64 = geometry::Extrinsics<f64>;
pub type IntrinsicsF32 = geometry::CameraIntrinsics<f32>;
pub type IntrinsicsF64 = geometry::CameraIntrinsics<f64>;
pub type MemoryGridF32 = memory::MemoryGrid<f32>;
pub type MemoryGridF64 = memory::MemoryGrid<f64>;
pub type FeatureMapF32 = features::FeatureMap<f32>;
pub type FeatureMapF64 = features::FeatureMap<f64>;
pub type EmbeddingTableF32 = embedding::ClassEmbeddingTable<f32>;
pub type EmbeddingTableF64 = embedding::ClassEmbeddingTable<f64>;
