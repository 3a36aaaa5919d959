//! Session management and the HTTP/WebSocket front end.

pub mod http;
pub mod session;

pub use session::{
    Action, Ack, ControlRequest, CounterSnapshot, Delta, ServiceError, Session, SessionManager, SessionStatus, Snapshot,
    Speed,
};
