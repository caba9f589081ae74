//! Classification trees by column generation over decision paths.
//!
//! The learner builds depth-`k` univariate binary decision trees by
//! generating root-to-leaf decision paths as columns of a path-selection
//! master LP, pricing new paths against the master's duals, and recovering
//! an integral tree from the generated columns. Candidate thresholds come
//! from repeated CART runs on subsamples of the training data, and the
//! full-data CART tree's paths warm-start the master, so the final tree
//! never trains worse than CART.
//!
//! Start with [`driver::run_cgh`] for end-to-end training, or the runnable
//! programs under `examples/`:
//!
//! ```bash
//! cargo run --release --example train_basic
//! cargo run --release --example compare_with_cart
//! cargo run --release --example threshold_sampling
//! cargo run --release --example pricing_modes
//! cargo run --release --example solver_standalone
//! cargo run --release --example model_roundtrip
//! cargo run --release --example benchmark_suite
//! ```

pub mod cart;
pub mod dataset;
pub mod driver;
pub mod error;
pub mod harness;
pub mod master;
pub mod pricing;
pub mod sampling;
pub mod solver;
pub mod tree;

pub use error::{Error, Result};
