//! Blinded human-versus-algorithm rating study.
//!
//! - [`session`]: randomized, source-balanced rating sessions.
//! - [`store`]: journaled, crash-safe score storage.
//! - [`report`]: paired and pooled expert-versus-algorithm comparison.
//! - [`service`]: the HTTP+JSON API consumed by the rating UI.
//! - [`export`]: slice renderings that make up the case pool.

pub mod error;
pub mod export;
pub mod report;
pub mod service;
pub mod session;
pub mod store;

pub use error::{Result, TuringError};
pub use report::{turing_report, Dimension, TuringReport};
pub use service::{router, serve, AppState, ServiceConfig};
pub use session::{create_sessions, CasePool, PoolCase, RatingSession, Source};
pub use store::Store;
