//! Certification of decision-tree learning against bounded training-data
//! bias.
//!
//! The crate trains CART-style trees with Gini impurity and proves, for a
//! given query point, that the prediction cannot change no matter how an
//! adversary exercises a declared bias model over the training set: adding
//! up to `m` rows (`miss`), relabeling up to `l` rows (`flip`), or removing
//! up to `f` rows (`fake`), each optionally restricted to a target
//! predicate, and freely composed. The proof runs an abstract interpretation
//! of the learner with exact rational interval arithmetic, so a `Robust`
//! verdict is a guarantee, while `Unknown` may be a false alarm.
//!
//! Companion tooling: an exhaustive oracle that enumerates the bias set
//! outright (ground truth on small instances), a seeded randomized falsifier
//! that searches for concrete counterexamples, and stratified certification
//! reporting over a test set.

pub mod bias;
pub mod certify;
pub mod concrete;
pub mod dataset;
pub mod error;
pub mod fuzz;
pub mod interval;
pub mod oracle;
pub mod report;

pub use bias::{normalize, parse_bias_dsl, parse_bias_dsl_sized, parse_target, BiasComponent, BiasKind, BiasModel, NormalizedBiasModel};
pub use certify::{certify, AbstractDataset, CertificationResult, Verdict};
pub use concrete::{best_split, cost, gini, infer, pr, train, TreeNode};
pub use dataset::{load_dataset, Dataset, Feature, FeatureKind, FeatureSchema, Predicate, Row, TargetAtom, TargetPredicate, Test, Value};
pub use error::{Error, Result};
pub use interval::{Interval, Rat};
