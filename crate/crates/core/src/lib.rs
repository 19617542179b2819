//! Action anticipation through cycle transformations.
//!
//! Three anticipation models share one reverse-mode autodiff engine:
//!
//! * **SE** (semantic experience) recognizes the observed action and maps the
//!   recognized label to a future label.
//! * **PV** (pattern visualization) synthesizes future features and
//!   classifies them.
//! * **ACT** translates observed features forward, classifies them, translates
//!   them back, and ties the two paths together with cycle-consistency losses
//!   in feature space and label space.
//!
//! [`data`] generates synthetic procedural videos from Markov activity
//! grammars, [`training`] fits models with Adam, and [`evaluation`] computes
//! Top-k and mean-over-classes accuracy and runs the experiment suites.

pub mod attention;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod losses;
pub mod models;
pub mod rng;
pub mod tape;
pub mod tensor;
pub mod training;

pub use attention::{EncoderConfig, EncoderParams};
pub use data::{AnticipationExample, DataConfig, Dataset, Geometry, GrammarConfig};
pub use error::{Error, Result};
pub use evaluation::{EvalReport, EvalRow, Protocol, Suite, SuiteConfig};
pub use gradcheck::Parameterized;
pub use losses::{CycleLabelTarget, LossBreakdown, LossConfig, LossTerms};
pub use models::{ClassifyMode, ModelConfig, ModelKind, ModelParams};
pub use tape::{GradientMap, Tape, Var};
pub use tensor::Tensor;
pub use training::{AdamConfig, TrainConfig, TrainHistory};
