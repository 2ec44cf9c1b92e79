//! JSON error bodies: `{code, message, details: [{path, message}]}`.

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{FromRequest, FromRequestParts, Request};
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::de::DeserializeOwned;
use serde::Serialize;

use daedalus_core::Error as CoreError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ErrorDetail {
    /// JSON pointer into the request (or a particle id for label conflicts).
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub details: Vec<ErrorDetail>,
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
                code: code.into(),
                message: message.into(),
                details: Vec::new(),
            },
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    pub fn with_detail(mut self, path: impl Into<String>, message: impl Into<String>) -> Self {
        self.body.details.push(ErrorDetail {
            path: path.into(),
            message: message.into(),
        });
        self
    }

    /// Maps an engine error found while validating the request body; every
    /// unknown reference is a validation failure of the field at `prefix`.
    pub fn from_request_error(e: CoreError, prefix: &str) -> Self {
        match e {
            CoreError::UnknownAlphabet(_)
            | CoreError::UnknownAlphabetName(_)
            | CoreError::UnknownLabel { .. } => {
                let path = format!("{prefix}/alphabet");
                ApiError::validation(e.to_string()).with_detail(path, e.to_string())
            }
            other => ApiError::from_core(other, prefix),
        }
    }

    /// Maps an engine error. `prefix` is the request pointer under which
    /// configuration fields live.
    pub fn from_core(e: CoreError, prefix: &str) -> Self {
        let message = e.to_string();
        match &e {
            CoreError::UnknownAlphabet(_)
            | CoreError::UnknownAlphabetName(_)
            | CoreError::UnknownLabel { .. } => ApiError::not_found(message),
            CoreError::DuplicateAlphabet(_) | CoreError::LabelInUse { .. } => {
                ApiError::conflict(message)
            }
            CoreError::MergeConflicts(conflicts) => {
                let mut err = ApiError::conflict(message);
                for c in conflicts {
                    let path = match &c.particle {
                        Some(p) => format!("/assignments/{p}/{}", c.alphabet),
                        None => format!("/alphabets/{}", c.alphabet),
                    };
                    let detail = format!(
                        "ours {:?}, theirs {:?}",
                        c.ours.map(|l| l.0),
                        c.theirs.map(|l| l.0)
                    );
                    err = err.with_detail(path, detail);
                }
                err
            }
            CoreError::Cancelled => ApiError::conflict(message),
            CoreError::InvalidConfig { field, message: m } => ApiError::validation(message.clone())
                .with_detail(format!("{prefix}/{field}"), m.clone()),
            CoreError::UnknownAttribute(a) | CoreError::MissingBins(a) => {
                ApiError::validation(message.clone())
                    .with_detail(format!("/attribute/{a}"), message)
            }
            CoreError::UnknownParticle(p) => ApiError::validation(message.clone())
                .with_detail(format!("/particles/{p}"), message),
            CoreError::Snapshot {
                pointer,
                message: m,
            } => ApiError::validation(message.clone()).with_detail(pointer.clone(), m.clone()),
            CoreError::InvalidFilter {
                attribute,
                message: m,
            } => ApiError::validation(message.clone())
                .with_detail(format!("/filters/{attribute}"), m.clone()),
            _ => ApiError::validation(message),
        }
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        ApiError::from_core(e, "")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

/// `Json` whose rejections are JSON error bodies.
pub struct ApiJson<T>(pub T);

impl<S, T> FromRequest<S> for ApiJson<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(ApiJson(v)),
            Err(rejection) => Err(json_rejection(rejection)),
        }
    }
}

fn json_rejection(rejection: JsonRejection) -> ApiError {
    let status = rejection.status();
    let code = if status == StatusCode::UNPROCESSABLE_ENTITY {
        "validation"
    } else {
        "bad_request"
    };
    ApiError::new(status, code, rejection.body_text())
}

/// `Query` whose rejections are JSON error bodies.
pub struct ApiQuery<T>(pub T);

impl<S, T> FromRequestParts<S> for ApiQuery<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        match axum::extract::Query::<T>::from_request_parts(parts, state).await {
            Ok(axum::extract::Query(v)) => Ok(ApiQuery(v)),
            Err(rejection) => Err(query_rejection(rejection)),
        }
    }
}

fn query_rejection(rejection: QueryRejection) -> ApiError {
    ApiError::new(
        StatusCode::BAD_REQUEST,
        "bad_request",
        rejection.body_text(),
    )
}
