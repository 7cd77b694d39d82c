//! Zero-training evaluation: FeatDice, PCA projections, the closed-form
//! attention cost model, and wall-clock benchmarks.

pub mod bench;
pub mod complexity;
pub mod featdice;
pub mod pca;

pub use bench::{benchmark_forward, BenchRow};
pub use complexity::{attention_cost, ComplexityReport, LayerCost};
pub use featdice::{downsample_mask, feat_dice, similarity_map, FeatDice, LesionMask};
pub use pca::{pca_project, pca_project_with, Pca, PcaConfig};
