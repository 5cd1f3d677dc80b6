//! Citation-network simulation and disruption-index analysis.
//!
//! The crate grows synthetic citation networks under publication and
//! reference-list growth, computes the CD disruption index and its
//! components, builds degree-preserving null models and fits the
//! fixed-effects regressions used to separate disruption from citation
//! volume.

pub mod corpus;
pub mod econometrics;
pub mod error;
pub mod experiments;
pub mod generator;
pub mod metrics;
pub mod nullmodel;
pub mod table;

pub use corpus::{load_corpus, write_corpus, CitationNetwork, PaperId, PaperNode};
pub use error::{Error, Result};
pub use generator::{build_schedule, grow, GrowthConfig, GrowthSchedule};
pub use metrics::{compute_cd, compute_cd_all, DisruptionRecord};
pub use table::{PaperRow, PaperTable};
