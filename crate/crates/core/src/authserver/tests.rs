use std::collections::BTreeMap;
use std::sync::Arc;

use super::*;
use crate::clock::MockClock;
use crate::credstore::DeviceKind;
use crate::policy::ViolationKind;
use crate::testutil::phone;

const START: u64 = 1_700_000_000;

struct Harness {
    server: AuthServer,
    clock: Arc<MockClock>,
}

fn harness() -> Harness {
    harness_with(ServerConfig {
        admin_token: Some("root".into()),
        ..ServerConfig::default()
    })
}

fn harness_with(config: ServerConfig) -> Harness {
    let clock = Arc::new(MockClock::new(START));
    let server = AuthServer::new(config, CredStore::in_memory(), clock.clone(), Some(42)).unwrap();
    Harness { server, clock }
}

fn desktop(tag: &str) -> DeviceDescriptor {
    DeviceDescriptor {
        phone_number: String::new(),
        imei: String::new(),
        sim_id: format!("desk-{tag}"),
        device_kind: DeviceKind::Desktop,
    }
}

impl Harness {
    fn register(&self, device: DeviceDescriptor, username: &str, login: &str) {
        let sid = self.server.open_session(device).unwrap();
        self.server.register(&sid, username, BTreeMap::new(), login).unwrap();
        self.server.close_session(&sid);
    }

    fn login(
        &self,
        device: &DeviceDescriptor,
        username: &str,
        password: &str,
    ) -> (String, FieldState, PasswordOutcome) {
        let sid = self.server.open_session(device.clone()).unwrap();
        let field = self.server.handle_username_entry(&sid, username).unwrap();
        let outcome = self.server.handle_password_entry(&sid, password).unwrap();
        (sid, field, outcome)
    }

    fn account(&self, username: &str) -> AccountRecord {
        self.server
            .with_store(|s| s.find_by_username(username).cloned())
            .unwrap()
    }
}

#[test]
fn registered_phone_logs_in() {
    let h = harness();
    let alice = phone("+1555");
    h.register(alice.clone(), "alice", "abc123");
    let (sid, field, outcome) = h.login(&alice, "alice", "abc123");
    assert_eq!(field, FieldState::Enabled);
    assert!(matches!(outcome, PasswordOutcome::Granted { .. }));
    assert_eq!(
        h.server.session(&sid).unwrap().phase,
        Phase::Authenticated("alice".into())
    );
    assert_eq!(h.server.authentication_initiations(), 1);
}

#[test]
fn username_gate() {
    let h = harness();
    let alice = phone("+1555");
    h.register(alice.clone(), "alice", "abc123");

    let sid = h.server.open_session(desktop("x")).unwrap();
    assert_eq!(
        h.server.handle_username_entry(&sid, "alice").unwrap(),
        FieldState::Disabled
    );
    // the server ignores a client that submits anyway
    assert_eq!(
        h.server.handle_password_entry(&sid, "abc123").unwrap(),
        PasswordOutcome::Disabled
    );
    assert_eq!(h.server.session(&sid).unwrap().phase, Phase::FieldDisabled);

    let sid = h.server.open_session(alice.clone()).unwrap();
    assert_eq!(
        h.server.handle_username_entry(&sid, "bob").unwrap(),
        FieldState::Disabled
    );

    // username entry only once per session
    let sid = h.server.open_session(alice).unwrap();
    h.server.handle_username_entry(&sid, "alice").unwrap();
    assert!(matches!(
        h.server.handle_username_entry(&sid, "alice"),
        Err(AuthError::ProtocolError(_))
    ));
    assert_eq!(h.server.authentication_initiations(), 0);
}

#[test]
fn fresh_session_password_is_disabled() {
    let h = harness();
    let sid = h.server.open_session(phone("+1")).unwrap();
    assert_eq!(
        h.server.handle_password_entry(&sid, "abc123").unwrap(),
        PasswordOutcome::Disabled
    );
}

#[test]
fn auth_password_in_field_is_locked_out() {
    let h = harness();
    let alice = phone("+1555");
    h.register(alice.clone(), "alice", "abc123");
    let auth = h.server.reveal_auth_password_for_testing("alice").unwrap();
    let (sid, _, outcome) = h.login(&alice, "alice", &auth);
    assert_eq!(outcome, PasswordOutcome::LockedOut);
    assert_eq!(h.server.session(&sid).unwrap().phase, Phase::FieldDisabled);
    assert_eq!(h.account("alice").failed_attempts, 0);
    assert_eq!(h.server.authentication_initiations(), 0);
}

#[test]
fn sim_swap_phone_never_initiates() {
    let h = harness();
    let alice = phone("+1555");
    h.register(alice.clone(), "alice", "abc123");
    let attacker = DeviceDescriptor {
        imei: "attacker-imei".into(),
        sim_id: "swapped-sim".into(),
        ..alice
    };
    let (_, field, outcome) = h.login(&attacker, "alice", "abc123");
    assert_eq!(field, FieldState::Disabled);
    assert_eq!(outcome, PasswordOutcome::Disabled);
    assert_eq!(h.server.authentication_initiations(), 0);
}

#[test]
fn three_failures_lock_the_account() {
    let h = harness();
    let alice = phone("+1555");
    h.register(alice.clone(), "alice", "abc123");
    let sid = h.server.open_session(alice.clone()).unwrap();
    h.server.handle_username_entry(&sid, "alice").unwrap();
    for wrong in ["abc124", "abd123", "xbc123"] {
        assert_eq!(
            h.server.handle_password_entry(&sid, wrong).unwrap(),
            PasswordOutcome::Denied
        );
    }
    assert!(matches!(h.account("alice").lock_state, LockState::Locked { .. }));
    assert_eq!(
        h.server.handle_password_entry(&sid, "abc123").unwrap(),
        PasswordOutcome::LockedOut
    );

    assert!(matches!(
        h.server.admin_unlock("alice", "nope"),
        Err(AuthError::Unauthorized)
    ));
    h.server.admin_unlock("alice", "root").unwrap();
    let (_, _, outcome) = h.login(&alice, "alice", "abc123");
    assert!(matches!(outcome, PasswordOutcome::Granted { .. }));
}

#[test]
fn admin_unlock_refused_without_configured_token() {
    let h = harness_with(ServerConfig::default());
    h.register(phone("+1"), "alice", "abc123");
    assert!(matches!(
        h.server.admin_unlock("alice", ""),
        Err(AuthError::Unauthorized)
    ));
}

#[test]
fn wrong_length_counts_as_failure() {
    let h = harness();
    let alice = phone("+1555");
    h.register(alice.clone(), "alice", "abc123");
    let (_, _, outcome) = h.login(&alice, "alice", "abc1234");
    assert_eq!(outcome, PasswordOutcome::Denied);
    assert_eq!(h.account("alice").failed_attempts, 1);
}

#[test]
fn registration_rules() {
    let h = harness();
    let sid = h.server.open_session(desktop("d")).unwrap();
    assert!(matches!(
        h.server.register(&sid, "alice", BTreeMap::new(), "abc123"),
        Err(AuthError::NotASmartphone)
    ));

    let sid = h.server.open_session(phone("+1")).unwrap();
    match h.server.register(&sid, "alice", BTreeMap::new(), "Abc123") {
        Err(AuthError::PolicyViolation(v)) => {
            assert_eq!(v[0].kind, ViolationKind::InvalidCharacter { position: 1 })
        }
        other => panic!("{other:?}"),
    }
    let info = h.server.register(&sid, "alice", BTreeMap::new(), "abc123").unwrap();
    assert_eq!(info.target_length, 20);
    assert_eq!(info.strategy, "combo");
    assert!(matches!(
        h.server.register(&sid, "alice", BTreeMap::new(), "abc123"),
        Err(AuthError::DuplicateUsername(_))
    ));
    assert!(matches!(
        h.server.register(&sid, "alice2", BTreeMap::new(), "abc123"),
        Err(AuthError::DeviceAlreadyBound)
    ));
    assert_eq!(h.server.with_store(|s| s.snapshot().accounts.len()), 1);
}

#[test]
fn modify_login_password_keeps_verifier() {
    let h = harness();
    let alice = phone("+1555");
    h.register(alice.clone(), "alice", "abc123");
    let before = h.account("alice");
    let (sid, _, _) = h.login(&alice, "alice", "abc123");

    match h.server.modify_login_password(&sid, "abcd") {
        Err(AuthError::PolicyViolation(v)) => assert_eq!(v[0].kind, ViolationKind::TooShort),
        other => panic!("{other:?}"),
    }
    h.server.modify_login_password(&sid, "xyz789").unwrap();
    let after = h.account("alice");
    assert_eq!(after.auth_verifier, before.auth_verifier);
    assert_eq!(after.version, before.version + 1);
    assert!(matches!(
        h.login(&alice, "alice", "xyz789").2,
        PasswordOutcome::Granted { .. }
    ));
    assert_eq!(h.login(&alice, "alice", "abc123").2, PasswordOutcome::Denied);
}

#[test]
fn modify_login_to_same_password() {
    let h = harness();
    let alice = phone("+1555");
    h.register(alice.clone(), "alice", "abc123");
    let before = h.account("alice");
    let (sid, _, _) = h.login(&alice, "alice", "abc123");
    h.server.modify_login_password(&sid, "abc123").unwrap();
    let after = h.account("alice");
    assert_eq!(after.auth_verifier, before.auth_verifier);
    assert_eq!(after.converter, before.converter);
    assert!(matches!(
        h.login(&alice, "alice", "abc123").2,
        PasswordOutcome::Granted { .. }
    ));
}

#[test]
fn modify_login_with_new_length_regenerates() {
    let h = harness();
    let alice = phone("+1555");
    h.register(alice.clone(), "alice", "abc123");
    let before = h.account("alice");
    let (sid, _, _) = h.login(&alice, "alice", "abc123");
    h.server.modify_login_password(&sid, "longerpass9").unwrap();
    let after = h.account("alice");
    assert_ne!(after.auth_verifier, before.auth_verifier);
    assert_eq!(after.converter.len(), 11);
    assert!(matches!(
        h.login(&alice, "alice", "longerpass9").2,
        PasswordOutcome::Granted { .. }
    ));
}

#[test]
fn modify_requires_authenticated_owner() {
    let h = harness();
    let alice = phone("+1555");
    h.register(alice.clone(), "alice", "abc123");
    let sid = h.server.open_session(alice).unwrap();
    assert!(matches!(
        h.server.modify_login_password(&sid, "xyz789"),
        Err(AuthError::NotAuthenticated)
    ));
    assert!(matches!(
        h.server.modify_auth_password(&sid, true),
        Err(AuthError::NotAuthenticated)
    ));
}

#[test]
fn modify_auth_password() {
    let h = harness();
    let alice = phone("+1555");
    h.register(alice.clone(), "alice", "abc123");
    let old_auth = h.server.reveal_auth_password_for_testing("alice").unwrap();
    let before = h.account("alice");
    let (sid, _, _) = h.login(&alice, "alice", "abc123");

    assert!(!h.server.modify_auth_password(&sid, false).unwrap());
    assert_eq!(h.account("alice"), before);

    assert!(h.server.modify_auth_password(&sid, true).unwrap());
    let first = h.account("alice");
    let new_auth = h.server.reveal_auth_password_for_testing("alice").unwrap();
    assert!(!first.auth_verifier.verify(&old_auth));
    assert!(first.auth_verifier.verify(&new_auth));
    assert_eq!(first.version, before.version + 1);

    assert!(h.server.modify_auth_password(&sid, true).unwrap());
    let second = h.account("alice");
    assert_ne!(second.auth_verifier, first.auth_verifier);
    assert!(matches!(
        h.login(&alice, "alice", "abc123").2,
        PasswordOutcome::Granted { .. }
    ));
}

#[test]
fn link_token_flow() {
    let h = harness();
    let alice = phone("+1555");
    h.register(alice.clone(), "alice", "abc123");
    let desk = h.server.open_session(desktop("d")).unwrap();
    let link = h.server.issue_link_token(&desk).unwrap();
    assert_eq!(link.token.len(), 32);
    assert_eq!(h.server.link_status(&desk).unwrap(), LinkStatus::Pending);

    let (phone_sid, _, _) = h.login(&alice, "alice", "abc123");
    let token = h.server.redeem_link_token(&phone_sid, &link.token, None).unwrap();
    assert_eq!(
        h.server.link_status(&desk).unwrap(),
        LinkStatus::Granted {
            username: "alice".into(),
            session_token: token
        }
    );
    assert!(matches!(
        h.server.redeem_link_token(&phone_sid, &link.token, None),
        Err(AuthError::TokenUsed)
    ));
    assert!(matches!(
        h.server.redeem_link_token(&phone_sid, "ffff", None),
        Err(AuthError::TokenUnknown)
    ));
}

#[test]
fn link_token_ttl_boundary() {
    let h = harness();
    let alice = phone("+1555");
    h.register(alice.clone(), "alice", "abc123");
    let (phone_sid, _, _) = h.login(&alice, "alice", "abc123");

    let desk = h.server.open_session(desktop("a")).unwrap();
    let link = h.server.issue_link_token(&desk).unwrap();
    h.clock.advance(121);
    assert!(matches!(
        h.server.redeem_link_token(&phone_sid, &link.token, None),
        Err(AuthError::TokenExpired)
    ));
    assert_eq!(h.server.link_status(&desk).unwrap(), LinkStatus::Expired);

    let desk = h.server.open_session(desktop("b")).unwrap();
    let link = h.server.issue_link_token(&desk).unwrap();
    h.clock.advance(119);
    h.server.redeem_link_token(&phone_sid, &link.token, None).unwrap();
}

#[test]
fn link_token_guards() {
    let h = harness();
    let alice = phone("+1555");
    let bob = phone("+1666");
    h.register(alice.clone(), "alice", "abc123");
    h.register(bob.clone(), "bob", "bobby1");

    let phone_sid = h.server.open_session(alice.clone()).unwrap();
    assert!(matches!(
        h.server.issue_link_token(&phone_sid),
        Err(AuthError::SmartphoneCannotIssue)
    ));

    let desk = h.server.open_session(desktop("d")).unwrap();
    let link = h.server.issue_link_token(&desk).unwrap();
    // unauthenticated phone
    assert!(matches!(
        h.server.redeem_link_token(&phone_sid, &link.token, None),
        Err(AuthError::NotAuthenticated)
    ));
    // bob cannot push the desktop into alice's account
    let (bob_sid, _, _) = h.login(&bob, "bob", "bobby1");
    assert!(matches!(
        h.server.redeem_link_token(&bob_sid, &link.token, Some("alice")),
        Err(AuthError::AccountMismatch)
    ));
    h.server.redeem_link_token(&bob_sid, &link.token, None).unwrap();
    assert_eq!(
        h.server.session(&desk).unwrap().phase,
        Phase::Authenticated("bob".into())
    );

    // an authenticated desktop cannot redeem for others
    let desk2 = h.server.open_session(desktop("e")).unwrap();
    let link2 = h.server.issue_link_token(&desk2).unwrap();
    assert!(matches!(
        h.server.redeem_link_token(&desk, &link2.token, None),
        Err(AuthError::NotAuthenticated)
    ));
}

#[test]
fn invalid_device_rejected() {
    let h = harness();
    let bad = DeviceDescriptor {
        phone_number: " ".into(),
        imei: "x".into(),
        sim_id: "y".into(),
        device_kind: DeviceKind::Smartphone,
    };
    assert!(matches!(h.server.open_session(bad), Err(AuthError::InvalidDevice(_))));
}

#[test]
fn config_consistency() {
    let mut cfg = ServerConfig::default();
    assert!(cfg.check().is_ok());
    cfg.generator.target_length = 24;
    assert!(cfg.check().is_err());
    cfg.policy.auth_length = 24;
    assert!(cfg.check().is_ok());
    cfg.generator.max_digit = 2;
    assert!(cfg.check().is_err());
}

#[test]
fn username_hint_is_opt_in() {
    let h = harness_with(ServerConfig {
        username_hint: true,
        ..ServerConfig::default()
    });
    let alice = phone("+1555");
    h.register(alice.clone(), "alice", "abc123");
    assert_eq!(h.server.username_hint(&alice).as_deref(), Some("alice"));
    assert_eq!(h.server.username_hint(&phone("+1999")), None);
    assert_eq!(harness().server.username_hint(&alice), None);
}
