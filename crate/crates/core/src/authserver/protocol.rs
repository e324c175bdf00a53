//! Line-delimited JSON wire protocol.
//!
//! Each request is one JSON object on one line with a `type` tag and a
//! client-chosen `request_id`. Each response echoes both and carries a
//! `status` of `ok`, `rejected` (policy violations) or `error` (with `code`
//! and `message`). Malformed or unknown requests get an error response and
//! the connection stays usable.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Deserialize;
use serde_json::{json, Map, Value};

use super::{AuthError, AuthServer, LinkStatus, PasswordOutcome};
use crate::credstore::DeviceDescriptor;

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Request {
    Hello {
        device: DeviceDescriptor,
    },
    Register {
        username: String,
        #[serde(default)]
        personal_info: BTreeMap<String, String>,
        login_password: String,
    },
    UsernameEntry {
        username: String,
    },
    PasswordEntry {
        password: String,
    },
    ModifyLogin {
        new_login_password: String,
    },
    ModifyAuth {
        accept: bool,
    },
    IssueLink {},
    RedeemLink {
        link_token: String,
        #[serde(default)]
        username: Option<String>,
    },
    LinkStatus {},
    AdminUnlock {
        username: String,
        admin_token: String,
    },
}

const KNOWN_TYPES: &[&str] = &[
    "hello",
    "register",
    "username_entry",
    "password_entry",
    "modify_login",
    "modify_auth",
    "issue_link",
    "redeem_link",
    "link_status",
    "admin_unlock",
];

type Fields = Map<String, Value>;

fn fields(v: Value) -> Fields {
    match v {
        Value::Object(m) => m,
        _ => Fields::new(),
    }
}

enum Reply {
    Ok(Fields),
    Rejected(Fields),
    Error { code: &'static str, message: String },
}

impl From<AuthError> for Reply {
    fn from(e: AuthError) -> Self {
        match e {
            AuthError::PolicyViolation(violations) => Reply::Rejected(fields(json!({
                "code": "policy_violation",
                "violations": violations,
            }))),
            other => Reply::Error {
                code: other.code(),
                message: other.to_string(),
            },
        }
    }
}

/// One client connection: owns at most one session, closed on drop.
pub struct Connection {
    server: Arc<AuthServer>,
    session: Option<String>,
}

impl Connection {
    pub fn new(server: Arc<AuthServer>) -> Self {
        Connection { server, session: None }
    }

    pub fn session_id(&self) -> Option<&str> {
        self.session.as_deref()
    }

    /// Handles one request line and returns the response line (no newline).
    pub fn handle_line(&mut self, line: &str) -> String {
        self.handle_value(serde_json::from_str(line)).to_string()
    }

    pub fn handle_json(&mut self, request: Value) -> Value {
        self.handle_value(Ok(request))
    }

    fn handle_value(&mut self, parsed: serde_json::Result<Value>) -> Value {
        let (ty, request_id, reply) = match parsed {
            Err(e) => (
                Value::Null,
                Value::Null,
                Reply::Error {
                    code: "malformed",
                    message: format!("request is not valid JSON: {e}"),
                },
            ),
            Ok(value) => {
                let ty = value.get("type").cloned().unwrap_or(Value::Null);
                let request_id = value.get("request_id").cloned().unwrap_or(Value::Null);
                let reply = match ty.as_str() {
                    None => Reply::Error {
                        code: "malformed",
                        message: "request has no string `type`".into(),
                    },
                    Some(t) if !KNOWN_TYPES.contains(&t) => Reply::Error {
                        code: "unknown_type",
                        message: format!("unknown request type {t:?}"),
                    },
                    Some(_) => match serde_json::from_value::<Request>(value) {
                        Ok(request) => self.dispatch(request),
                        Err(e) => Reply::Error {
                            code: "malformed",
                            message: format!("bad payload: {e}"),
                        },
                    },
                };
                (ty, request_id, reply)
            }
        };
        let mut out = Fields::new();
        out.insert("type".into(), ty);
        out.insert("request_id".into(), request_id);
        match reply {
            Reply::Ok(f) => {
                out.insert("status".into(), "ok".into());
                out.extend(f);
            }
            Reply::Rejected(f) => {
                out.insert("status".into(), "rejected".into());
                out.extend(f);
            }
            Reply::Error { code, message } => {
                out.insert("status".into(), "error".into());
                out.insert("code".into(), code.into());
                out.insert("message".into(), message.into());
            }
        }
        Value::Object(out)
    }

    fn require_session(&self) -> Result<&str, AuthError> {
        self.session
            .as_deref()
            .ok_or_else(|| AuthError::ProtocolError("send hello first".into()))
    }

    fn dispatch(&mut self, request: Request) -> Reply {
        match self.try_dispatch(request) {
            Ok(f) => Reply::Ok(f),
            Err(e) => e.into(),
        }
    }

    fn try_dispatch(&mut self, request: Request) -> Result<Fields, AuthError> {
        let server = Arc::clone(&self.server);
        Ok(match request {
            Request::Hello { device } => {
                if let Some(old) = self.session.take() {
                    server.close_session(&old);
                }
                let hint = server.username_hint(&device);
                let id = server.open_session(device)?;
                self.session = Some(id.clone());
                let mut f = fields(json!({ "session_id": id }));
                if let Some(username) = hint {
                    f.insert("username_hint".into(), username.into());
                }
                f
            }
            Request::Register {
                username,
                personal_info,
                login_password,
            } => {
                let info = server.register(self.require_session()?, &username, personal_info, &login_password)?;
                fields(json!({
                    "username": username,
                    "target_length": info.target_length,
                    "strategy": info.strategy,
                }))
            }
            Request::UsernameEntry { username } => {
                let state = server.handle_username_entry(self.require_session()?, &username)?;
                fields(json!({ "field_state": state.as_str() }))
            }
            Request::PasswordEntry { password } => {
                let outcome = server.handle_password_entry(self.require_session()?, &password)?;
                let mut f = fields(json!({ "result": outcome.as_str() }));
                if let PasswordOutcome::Granted { session_token } = outcome {
                    f.insert("session_token".into(), session_token.into());
                }
                f
            }
            Request::ModifyLogin { new_login_password } => {
                server.modify_login_password(self.require_session()?, &new_login_password)?;
                fields(json!({ "result": "modified" }))
            }
            Request::ModifyAuth { accept } => {
                let applied = server.modify_auth_password(self.require_session()?, accept)?;
                fields(json!({ "result": if applied { "accepted" } else { "declined" } }))
            }
            Request::IssueLink {} => {
                let link = server.issue_link_token(self.require_session()?)?;
                fields(json!({
                    "link_token": link.token,
                    "expires_at": link.expires_at,
                    "ttl_secs": server.config().link_ttl_secs,
                }))
            }
            Request::RedeemLink { link_token, username } => {
                let desktop_token =
                    server.redeem_link_token(self.require_session()?, &link_token, username.as_deref())?;
                fields(json!({ "result": "granted", "session_token": desktop_token }))
            }
            Request::LinkStatus {} => match server.link_status(self.require_session()?)? {
                LinkStatus::Pending => fields(json!({ "result": "pending" })),
                LinkStatus::Expired => fields(json!({ "result": "expired" })),
                LinkStatus::Granted {
                    username,
                    session_token,
                } => fields(json!({
                    "result": "granted",
                    "username": username,
                    "session_token": session_token,
                })),
            },
            Request::AdminUnlock { username, admin_token } => {
                server.admin_unlock(&username, &admin_token)?;
                fields(json!({ "username": username }))
            }
        })
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(id) = self.session.take() {
            self.server.close_session(&id);
        }
    }
}
