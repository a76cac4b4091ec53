use std::path::Path;

use mmagls::{Error, ErrorClass};
use serde_json::{json, Value};

/// Error reported as JSON on stderr; the kind prefix selects the exit code.
#[derive(Debug)]
pub struct CliError {
    pub kind: String,
    pub message: String,
    pub details: Option<Value>,
}

impl CliError {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        Self {
            kind: kind.to_string(),
            message: message.into(),
            details: None,
        }
    }

    pub fn usage(kind: &str, message: impl Into<String>) -> Self {
        debug_assert!(kind.starts_with("usage."));
        Self::new(kind, message)
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        let kind = if e.kind() == std::io::ErrorKind::NotFound {
            "io.not_found"
        } else {
            "io.error"
        };
        Self::new(kind, format!("{}: {e}", path.display()))
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn class(&self) -> ErrorClass {
        match self.kind.split('.').next() {
            Some("usage") => ErrorClass::Usage,
            Some("io") => ErrorClass::Io,
            Some("data") => ErrorClass::Data,
            Some("grid") => ErrorClass::Dimension,
            _ => ErrorClass::Numerical,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Usage => 1,
            ErrorClass::Io => 2,
            ErrorClass::Data => 3,
            ErrorClass::Dimension => 4,
            ErrorClass::Numerical => 5,
        }
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "error": {
                "kind": self.kind,
                "message": self.message,
                "exit_code": self.exit_code(),
            }
        });
        if let Some(d) = &self.details {
            v["error"]["details"] = d.clone();
        }
        v
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let details = match &e {
            Error::NonFinite { location } => Some(json!({ "location": location })),
            Error::NonFiniteLoss { epoch, .. } => Some(json!({ "epoch": epoch })),
            _ => None,
        };
        Self {
            kind: e.kind().to_string(),
            message: e.to_string(),
            details,
        }
    }
}
