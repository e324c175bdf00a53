//! Scripted multi-device runs against an in-process server.
//!
//! A scenario names some devices and lists steps. Each step sends one message
//! from one device and checks a subset of the response fields. The server
//! runs with an in-memory store, a mock clock and a fixed seed, so the same
//! scenario and seed always produce the same report.
//!
//! Inside message strings, `{{auth_password:USER}}` expands to the account's
//! registered authentication password (modelling a stolen one),
//! `{{random_login}}` to a seeded random login-policy string, and
//! `{{last:DEVICE:FIELD}}` to the latest value of a field in that device's
//! responses.
//! The runner-only message `{"type": "advance_clock", "seconds": N}` moves the
//! mock clock. A `hello` without a `device` gets the step's device descriptor.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use dualpass_core::{AuthServer, Clock, Connection, CredStore, DeviceDescriptor, MockClock, ServerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::profile::DeviceProfile;
use crate::CliError;

/// Mock clock reading at the start of every run.
pub const SCENARIO_EPOCH: u64 = 1_700_000_000;
/// Admin token configured when a scenario brings no config of its own.
pub const SCENARIO_ADMIN_TOKEN: &str = "scenario-admin";
/// Matches any value, as long as the field is present.
pub const ANY: &str = "<any>";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeviceRef {
    Inline(DeviceDescriptor),
    /// Path to a device profile, relative to the scenario file.
    Profile(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Step {
    pub device: String,
    pub message: Value,
    #[serde(default)]
    pub expect: Map<String, Value>,
    /// Expected value of the server's authentication-initiation counter after
    /// this step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initiations: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ServerConfig>,
    #[serde(default)]
    pub devices: BTreeMap<String, DeviceRef>,
    pub steps: Vec<Step>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Scenario(format!("bad scenario: {e}")))
    }

    /// Loads a scenario file and inlines any device profiles it references.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Scenario(format!("{}: {e}", path.display())))?;
        let mut scenario = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for device in scenario.devices.values_mut() {
            if let DeviceRef::Profile(rel) = device {
                *device = DeviceRef::Inline(DeviceProfile::load(&base.join(rel.as_str()))?.device);
            }
        }
        Ok(scenario)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepReport {
    pub index: usize,
    pub device: String,
    pub request: String,
    pub expected: String,
    pub actual: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub seed: u64,
    pub passed: bool,
    pub initiations: u64,
    /// How often each password-entry result was seen.
    pub outcomes: BTreeMap<String, u64>,
    /// How often each username-field state was seen.
    pub field_states: BTreeMap<String, u64>,
    pub steps: Vec<StepReport>,
}

impl ScenarioReport {
    pub fn passed_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.passed).count()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "scenario {} (seed {}): {}, {}/{} steps",
            self.name,
            self.seed,
            if self.passed { "PASS" } else { "FAIL" },
            self.passed_steps(),
            self.steps.len()
        );
        let w = |f: fn(&StepReport) -> usize, min: usize| self.steps.iter().map(f).fold(min, usize::max);
        let wd = w(|s| s.device.len(), 6);
        let wr = w(|s| s.request.len(), 7);
        let we = w(|s| s.expected.len(), 8);
        let wa = w(|s| s.actual.len(), 6);
        let _ = writeln!(
            out,
            "{:>3}  {:wd$}  {:wr$}  {:we$}  actual",
            "#", "device", "request", "expected"
        );
        for s in &self.steps {
            let _ = writeln!(
                out,
                "{:>3}  {:wd$}  {:wr$}  {:we$}  {:wa$}  {}",
                s.index,
                s.device,
                s.request,
                s.expected,
                s.actual,
                if s.passed { "ok" } else { "FAIL" }
            );
        }
        let _ = writeln!(out, "authentication initiations: {}", self.initiations);
        out
    }
}

fn render(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn matches(expected: &Value, actual: Option<&Value>) -> bool {
    match (expected, actual) {
        (Value::String(s), Some(_)) if s == ANY => true,
        (e, Some(a)) => e == a,
        (_, None) => false,
    }
}

struct Runner {
    server: Arc<AuthServer>,
    clock: Arc<MockClock>,
    rng: ChaCha20Rng,
    connections: BTreeMap<String, Connection>,
    last: BTreeMap<String, Map<String, Value>>,
}

impl Runner {
    fn expand(&mut self, text: &str) -> Result<String, CliError> {
        let mut out = String::new();
        let mut rest = text;
        while let Some(start) = rest.find("{{") {
            let end = rest[start..]
                .find("}}")
                .ok_or_else(|| CliError::Scenario(format!("unterminated placeholder in {text:?}")))?;
            out.push_str(&rest[..start]);
            let key = &rest[start + 2..start + end];
            out.push_str(&self.placeholder(key)?);
            rest = &rest[start + end + 2..];
        }
        out.push_str(rest);
        Ok(out)
    }

    fn placeholder(&mut self, key: &str) -> Result<String, CliError> {
        let unknown = || CliError::Scenario(format!("cannot expand {{{{{key}}}}}"));
        if key == "random_login" {
            let alphabet = dualpass_core::convcore::LOGIN_ALPHABET.as_bytes();
            let len = self.rng.gen_range(8..=12);
            return Ok((0..len)
                .map(|_| alphabet[self.rng.gen_range(0..alphabet.len())] as char)
                .collect());
        }
        if let Some(user) = key.strip_prefix("auth_password:") {
            return self.server.reveal_auth_password_for_testing(user).ok_or_else(unknown);
        }
        if let Some((device, field)) = key.strip_prefix("last:").and_then(|k| k.split_once(':')) {
            return self
                .last
                .get(device)
                .and_then(|r| r.get(field))
                .map(render)
                .ok_or_else(unknown);
        }
        Err(unknown())
    }

    fn expand_value(&mut self, v: &Value) -> Result<Value, CliError> {
        Ok(match v {
            Value::String(s) => Value::String(self.expand(s)?),
            Value::Array(items) => Value::Array(items.iter().map(|i| self.expand_value(i)).collect::<Result<_, _>>()?),
            Value::Object(map) => {
                let mut out = Map::new();
                for (k, v) in map {
                    out.insert(k.clone(), self.expand_value(v)?);
                }
                Value::Object(out)
            }
            other => other.clone(),
        })
    }
}

/// Runs `scenario` on a fresh server. `seed` overrides the scenario's own.
pub fn run_scenario(scenario: &Scenario, seed: Option<u64>) -> Result<ScenarioReport, CliError> {
    let seed = seed.or(scenario.seed).unwrap_or(0);
    let config = scenario.config.clone().unwrap_or_else(|| ServerConfig {
        admin_token: Some(SCENARIO_ADMIN_TOKEN.into()),
        ..ServerConfig::default()
    });
    let clock = Arc::new(MockClock::new(SCENARIO_EPOCH));
    let server = AuthServer::new(config, CredStore::in_memory(), clock.clone(), Some(seed))
        .map_err(|e| CliError::Scenario(e.to_string()))?;
    let mut runner = Runner {
        server: Arc::new(server),
        clock,
        rng: ChaCha20Rng::seed_from_u64(seed ^ 0x7363_656e_6172_696f),
        connections: BTreeMap::new(),
        last: BTreeMap::new(),
    };

    let mut report = ScenarioReport {
        name: scenario.name.clone(),
        seed,
        passed: true,
        initiations: 0,
        outcomes: BTreeMap::new(),
        field_states: BTreeMap::new(),
        steps: Vec::new(),
    };

    for (i, step) in scenario.steps.iter().enumerate() {
        let index = i + 1;
        let mut message = runner.expand_value(&step.message)?;
        if !message.is_object() {
            return Err(CliError::Scenario(format!("step {index}: message must be an object")));
        }
        let kind = message["type"].as_str().unwrap_or("").to_owned();
        if kind == "hello" && message.get("device").is_none() {
            let device = match scenario.devices.get(&step.device) {
                Some(DeviceRef::Inline(d)) => d.clone(),
                Some(DeviceRef::Profile(p)) => {
                    return Err(CliError::Scenario(format!(
                        "profile {p} was not resolved; load the scenario from a file"
                    )))
                }
                None => {
                    return Err(CliError::Scenario(format!(
                        "step {index}: unknown device {}",
                        step.device
                    )))
                }
            };
            message["device"] = json!(device);
        }
        if message.get("request_id").is_none() {
            message["request_id"] = json!(format!("s{index}"));
        }

        let response = if kind == "advance_clock" {
            let secs = message["seconds"]
                .as_u64()
                .ok_or_else(|| CliError::Scenario(format!("step {index}: advance_clock needs seconds")))?;
            runner.clock.advance(secs);
            json!({"type": "advance_clock", "status": "ok", "now": runner.clock.now()})
        } else {
            let server = Arc::clone(&runner.server);
            let conn = runner
                .connections
                .entry(step.device.clone())
                .or_insert_with(|| Connection::new(server));
            conn.handle_json(message)
        };

        if kind == "password_entry" {
            if let Some(r) = response.get("result").and_then(Value::as_str) {
                *report.outcomes.entry(r.to_owned()).or_default() += 1;
            }
        }
        if let Some(f) = response.get("field_state").and_then(Value::as_str) {
            *report.field_states.entry(f.to_owned()).or_default() += 1;
        }

        let initiations = runner.server.authentication_initiations();
        let mut expected = Vec::new();
        let mut actual = Vec::new();
        let mut passed = true;
        for (k, v) in &step.expect {
            let got = response.get(k);
            passed &= matches(v, got);
            expected.push(format!("{k}={}", render(v)));
            actual.push(format!("{k}={}", got.map(render).unwrap_or_else(|| "<absent>".into())));
        }
        if let Some(want) = step.initiations {
            passed &= want == initiations;
            expected.push(format!("initiations={want}"));
            actual.push(format!("initiations={initiations}"));
        }
        if !passed && !step.expect.contains_key("code") {
            if let Some(code) = response.get("code") {
                actual.push(format!("code={}", render(code)));
            }
        }
        report.passed &= passed;
        report.steps.push(StepReport {
            index,
            device: step.device.clone(),
            request: kind,
            expected: expected.join(" "),
            actual: actual.join(" "),
            passed,
        });
        if let Value::Object(fields) = response {
            runner.last.entry(step.device.clone()).or_default().extend(fields);
        }
    }
    report.initiations = runner.server.authentication_initiations();
    Ok(report)
}
