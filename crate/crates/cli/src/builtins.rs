use serde_json::{json, Value};

use crate::scenario::Scenario;

const FILES: &[(&str, &str)] = &[
    ("account-change", include_str!("../scenarios/account-change.json")),
    ("credential-theft", include_str!("../scenarios/credential-theft.json")),
    ("field-disabled", include_str!("../scenarios/field-disabled.json")),
    ("link-replay", include_str!("../scenarios/link-replay.json")),
    ("lockout", include_str!("../scenarios/lockout.json")),
    ("sim-swap", include_str!("../scenarios/sim-swap.json")),
];

pub const NONLOCAL_MATRIX: &str = "nonlocal-matrix";

pub fn builtin_names() -> Vec<&'static str> {
    let mut names: Vec<&str> = FILES.iter().map(|(n, _)| *n).collect();
    names.push(NONLOCAL_MATRIX);
    names.sort_unstable();
    names
}

pub fn builtin(name: &str) -> Option<Scenario> {
    if name == NONLOCAL_MATRIX {
        return Some(nonlocal_matrix());
    }
    let (_, text) = FILES.iter().find(|(n, _)| *n == name)?;
    Some(Scenario::from_json(text).expect("builtin scenarios parse"))
}

fn step(device: &str, message: Value, expect: Value) -> Value {
    json!({"device": device, "message": message, "expect": expect})
}

/// Every nonlocal device, with the right and a wrong username, tries the login
/// password, the authentication password and a random string. Then the
/// registered phone goes through the same inputs.
fn nonlocal_matrix() -> Scenario {
    let alice = json!({"phone_number": "+15550100", "imei": "356938035643809", "sim_id": "89014103211118510720", "device_kind": "smartphone"});
    let devices = json!({
        "alice_phone": alice,
        "unregistered_phone": {"phone_number": "+15550666", "imei": "353918057791136", "sim_id": "89014103219999990666", "device_kind": "smartphone"},
        "swapped_phone": {"phone_number": "+15550100", "imei": "353918057791136", "sim_id": "89014103219999990100", "device_kind": "smartphone"},
        "desktop": {"device_kind": "desktop"},
    });
    let inputs = ["abc123", "{{auth_password:alice}}", "{{random_login}}"];

    let mut steps = vec![
        step("alice_phone", json!({"type": "hello"}), json!({"status": "ok"})),
        step(
            "alice_phone",
            json!({"type": "register", "username": "alice", "login_password": "abc123"}),
            json!({"status": "ok"}),
        ),
    ];
    for device in ["unregistered_phone", "swapped_phone", "desktop"] {
        for username in ["alice", "mallory"] {
            steps.push(step(device, json!({"type": "hello"}), json!({"status": "ok"})));
            steps.push(step(
                device,
                json!({"type": "username_entry", "username": username}),
                json!({"field_state": "disabled"}),
            ));
            for input in inputs {
                steps.push(step(
                    device,
                    json!({"type": "password_entry", "password": input}),
                    json!({"result": "disabled"}),
                ));
            }
        }
    }
    if let Some(last) = steps.last_mut() {
        last["initiations"] = json!(0);
    }

    steps.push(step("alice_phone", json!({"type": "hello"}), json!({})));
    steps.push(step(
        "alice_phone",
        json!({"type": "username_entry", "username": "mallory"}),
        json!({"field_state": "disabled"}),
    ));
    steps.push(step(
        "alice_phone",
        json!({"type": "password_entry", "password": "abc123"}),
        json!({"result": "disabled"}),
    ));
    steps.push(step("alice_phone", json!({"type": "hello"}), json!({})));
    steps.push(step(
        "alice_phone",
        json!({"type": "username_entry", "username": "alice"}),
        json!({"field_state": "enabled"}),
    ));
    steps.push(step(
        "alice_phone",
        json!({"type": "password_entry", "password": "{{random_login}}"}),
        json!({"result": "denied"}),
    ));
    steps.push(step(
        "alice_phone",
        json!({"type": "password_entry", "password": "{{auth_password:alice}}"}),
        json!({"result": "locked_out"}),
    ));
    steps.push(step("alice_phone", json!({"type": "hello"}), json!({})));
    steps.push(step(
        "alice_phone",
        json!({"type": "username_entry", "username": "alice"}),
        json!({"field_state": "enabled"}),
    ));
    steps.push(step(
        "alice_phone",
        json!({"type": "password_entry", "password": "abc123"}),
        json!({"result": "granted"}),
    ));

    serde_json::from_value(json!({
        "name": NONLOCAL_MATRIX,
        "description": "Nonlocal devices never reach the password check; only the registered phone does.",
        "devices": devices,
        "steps": steps,
    }))
    .expect("matrix scenario is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_loads_under_its_name() {
        for name in builtin_names() {
            assert_eq!(builtin(name).unwrap().name, name);
        }
        assert!(builtin("nope").is_none());
    }
}
