//! HTTP session service for human-study sessions: passive rating and
//! classification protocols plus interactive teaching, with every session
//! persisted to an append-only JSONL log.

mod api;
mod checkpoints;
mod error;
mod store;

pub use api::{
    router, serve, AppState, CreateSession, Created, GuessBody, NextExample, ResponseAck,
    SessionStatusView,
};
pub use checkpoints::{Checkpoints, TeacherPair};
pub use error::{ApiError, ServiceError};
pub use store::SessionStore;
