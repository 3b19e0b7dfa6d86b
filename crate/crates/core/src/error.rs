//! Crate-wide error wrapping the per-module errors.

use thiserror::Error;

use crate::eval::EvalError;
use crate::flow::FlowError;
use crate::geometry::GeometryError;
use crate::io::IoError;
use crate::logic::LogicError;
use crate::model::{ModelError, SessionId, Timestamp};
use crate::sim::SimError;
use crate::trend::TrendError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error(transparent)]
    Trend(#[from] TrendError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("session {session}, ts {ts}: {source}")]
    At {
        session: SessionId,
        ts: Timestamp,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Attaches the session and second being processed.
    pub fn at(self, session: &SessionId, ts: Timestamp) -> Self {
        match self {
            e @ Error::At { .. } => e,
            e => Error::At {
                session: session.clone(),
                ts,
                source: Box::new(e),
            },
        }
    }

    /// True when the input was at fault; false for system failures and
    /// numerical breakdowns.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Io(e) => e.is_validation(),
            Error::Eval(EvalError::NonConvergence(_)) => false,
            Error::At { source, .. } => source.is_validation(),
            _ => true,
        }
    }
}
