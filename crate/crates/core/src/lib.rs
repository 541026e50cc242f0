//! eForest: a tree-ensemble autoencoder.
//!
//! An instance is encoded as the vector of leaf ordinals it reaches in each
//! tree of a forest. Decoding turns every leaf back into the conjunction of
//! tests on its root path, intersects those rules into the maximal compatible
//! rule (MCR) and picks a representative point from the resulting box.
//!
//! ```
//! use eforest::{decode, forest_encode, train_forest, Dataset, Mode, Schema, Strategy, TrainConfig};
//!
//! let rows = vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, 0.5], vec![1.0, 2.0]];
//! let data = Dataset::from_rows(Schema::numeric(2).unwrap(), &rows, None).unwrap();
//! let forest = train_forest(&data, &TrainConfig::new(Mode::Unsupervised, 20, 7)).unwrap();
//! let x = &data.instances()[1];
//! let code = forest_encode(&forest, x);
//! let back = decode(&forest, &code, Strategy::Min, None).unwrap();
//! assert_eq!(back.len(), 2);
//! ```

pub mod channels;
pub mod codec;
pub mod error;
pub mod io;
pub mod metrics;
pub mod persist;
pub mod rng;
pub mod rule;
pub mod schema;
pub mod synth;
pub mod train;
pub mod tree;

pub use codec::{decode, decode_batch, decode_mcr, encode_batch, path_rules, EncodingMatrix, TreeMask};
pub use error::{Error, Result};
pub use metrics::{cosine_distance, damage_curve, mse, reconstruct, Metric, ReconOptions, ReconReport};
pub use persist::{load_model, save_model};
pub use rule::{calculate_mcr, representative, simplify, Constraint, Interval, Mcr, Rule, Strategy};
pub use schema::{Attribute, AttributeKind, Bounds, Dataset, Instance, Schema, Value};
pub use train::{train_forest, Mode, TrainConfig};
pub use tree::{forest_encode, get_path, tree_encode, Encoding, Forest, Node, NodeTest, Tree};
