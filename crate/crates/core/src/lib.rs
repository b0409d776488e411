//! Assessment engine for continuously valued binary classifiers.
//!
//! Load a test set with per-item scores from one or more classifiers, apply
//! dual-threshold operating points with a reject option, and compare
//! classifiers and subgroups through metrics, curves and selections built
//! with set algebra.
//!
//! ```
//! use cbx_core::model::{Dataset, IngestDoc, LoadOptions};
//! use cbx_core::trinary::{trinary_summary, OperatingPoint};
//!
//! let doc = IngestDoc::new("neg", "pos")
//!     .instance("a", "pos")
//!     .instance("b", "neg")
//!     .classifier("LR", [("a", 0.9), ("b", 0.45)]);
//! let (data, report) = Dataset::from_ingest(doc, &LoadOptions::default()).unwrap();
//! assert!(report.is_accepted());
//! let op = OperatingPoint::new(0.4, 0.6).unwrap();
//! let counts = trinary_summary(&data, data.classifier("LR").unwrap(), &op, None, None);
//! assert_eq!((counts.tp, counts.rejected), (1.0, 1.0));
//! ```

pub mod convert;
pub mod curves;
pub mod error;
pub mod metrics;
pub mod model;
pub mod query;
pub mod sampling;
pub mod select;
pub mod session;
pub mod trinary;

#[cfg(feature = "server")]
pub mod server;

pub use error::{Error, Result};
