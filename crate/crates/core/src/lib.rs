//! Multi-view stereo reconstruction for equirectangular 360° images.
//!
//! The crate covers the spherical camera model, latitude-adaptive kernel
//! sampling, spherical-sweep cost volumes with radial depth, TSDF fusion
//! with marching cubes, a synthetic ground-truth renderer and the usual
//! depth and mesh evaluation metrics. All numeric code is generic over
//! [`Real`] (`f32` or `f64`); the `*64` / `*32` aliases below pick one.

pub mod erp_camera;
pub mod error;
pub mod features;
pub mod geometry;
pub mod image;
pub mod mesh;
pub mod metrics;
pub mod pfm;
pub mod scalar;
pub mod sphere_kernel;
pub mod sweep;
pub mod synth;
pub mod tsdf;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Point3f64 = geometry::Point3<f64>;
pub type Point3f32 = geometry::Point3<f32>;
pub type Pose64 = erp_camera::Pose<f64>;
pub type Pose32 = erp_camera::Pose<f32>;
pub type SphericalCoord64 = erp_camera::SphericalCoord<f64>;
pub type SphericalCoord32 = erp_camera::SphericalCoord<f32>;
pub type PixelCoord64 = erp_camera::PixelCoord<f64>;
pub type PixelCoord32 = erp_camera::PixelCoord<f32>;
pub type Image64 = image::Image<f64>;
pub type Image32 = image::Image<f32>;
pub type DepthMap64 = sweep::DepthMap<f64>;
pub type DepthMap32 = sweep::DepthMap<f32>;
pub type TriangleMesh64 = mesh::TriangleMesh<f64>;
pub type TriangleMesh32 = mesh::TriangleMesh<f32>;
pub type SceneSpec64 = synth::SceneSpec<f64>;
pub type SceneSpec32 = synth::SceneSpec<f32>;
pub type TsdfGrid64 = tsdf::TsdfGrid<f64>;
pub type TsdfGrid32 = tsdf::TsdfGrid<f32>;
