use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use mdtroom_core::analysis::AnalysisError;
use mdtroom_core::debate::EngineError;
use mdtroom_core::store::StoreError;
use serde::Serialize;

/// Error body shared by every endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    /// Set when a session was created but its initial round failed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.to_owned(),
                message: message.into(),
                session_id: None,
            },
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BadRequest", message)
    }

    pub fn unknown_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "UnknownSession", format!("no session {id}"))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }

    pub fn with_session(mut self, id: impl Into<String>) -> Self {
        self.body.session_id = Some(id.into());
        self
    }
}

fn store_status(e: &StoreError) -> StatusCode {
    match e {
        StoreError::OutOfRange(_) => StatusCode::RANGE_NOT_SATISFIABLE,
        StoreError::IllegalEvent(_) => StatusCode::CONFLICT,
        StoreError::StorageFailure(_) | StoreError::CorruptFile(_) | StoreError::Divergence { .. } => {
            StatusCode::INTERNAL_SERVER_ERROR
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        use EngineError::*;
        let status = match &e {
            InvalidCase(_) | DuplicateAgent(_) | TooFewAgents | InvalidConfig(_) | UnknownItem(_)
            | UnknownAgent(_) | MutedAgent(_) | EmptyTargets | EmptySelection | EmptyInstruction
            | Case(_) => StatusCode::BAD_REQUEST,
            UnknownConflict(_) => StatusCode::NOT_FOUND,
            WrongPhase(_) | RoundBudgetExhausted | ConflictAlreadyResolved(_) | IllegalTransition(_)
            | NoRounds | ItemInUse(_) => StatusCode::CONFLICT,
            TransportDown(_) => StatusCode::SERVICE_UNAVAILABLE,
            Store(s) => store_status(s),
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<AnalysisError> for ApiError {
    fn from(e: AnalysisError) -> Self {
        let status = match &e {
            AnalysisError::UnknownRound(_)
            | AnalysisError::UnknownItem(_)
            | AnalysisError::UnknownConflict(_) => StatusCode::NOT_FOUND,
            AnalysisError::TooFewRounds | AnalysisError::NoRounds => StatusCode::CONFLICT,
            AnalysisError::Store(s) => store_status(s),
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::new(store_status(&e), e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
