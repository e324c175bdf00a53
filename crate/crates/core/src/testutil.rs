use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::convcore::{generate_auth_password, generate_converter, GeneratorConfig};
use crate::credstore::{AccountRecord, AuthVerifier, DeviceDescriptor, DeviceKind, LockState};
use crate::identity::{derive_identifier, IdentifierStrategy};

pub fn phone(number: &str) -> DeviceDescriptor {
    DeviceDescriptor {
        phone_number: number.into(),
        imei: format!("imei-{number}"),
        sim_id: format!("sim-{number}"),
        device_kind: DeviceKind::Smartphone,
    }
}

pub fn sample_account(username: &str, number: &str, seed: u64) -> AccountRecord {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let login = "abc123";
    let converter = generate_converter(login, &GeneratorConfig::default(), &mut rng).unwrap();
    let process_identifier = derive_identifier(&converter, login, IdentifierStrategy::default(), &mut rng).unwrap();
    let auth = generate_auth_password(&converter, login).unwrap();
    AccountRecord {
        username: username.into(),
        user_identifier: number.into(),
        personal_info: BTreeMap::new(),
        device: phone(number),
        converter,
        auth_verifier: AuthVerifier::new(&auth, &mut rng),
        process_identifier,
        failed_attempts: 0,
        lock_state: LockState::Unlocked,
        version: 1,
    }
}
