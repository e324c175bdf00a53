use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::sync::Arc;

use dualpass_core::authserver::spawn_server;
use dualpass_core::{AuthServer, CredStore, MockClock, ServerConfig};
use serde_json::{json, Value};

struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    next_id: u64,
    transcript: Vec<String>,
}

impl Client {
    fn connect(addr: std::net::SocketAddr) -> Self {
        let stream = TcpStream::connect(addr).unwrap();
        Client {
            writer: stream.try_clone().unwrap(),
            reader: BufReader::new(stream),
            next_id: 0,
            transcript: Vec::new(),
        }
    }

    fn raw(&mut self, line: &str) -> Value {
        self.writer.write_all(line.as_bytes()).unwrap();
        self.writer.write_all(b"\n").unwrap();
        let mut resp = String::new();
        self.reader.read_line(&mut resp).unwrap();
        self.transcript.push(resp.clone());
        serde_json::from_str(&resp).unwrap()
    }

    fn send(&mut self, mut msg: Value) -> Value {
        self.next_id += 1;
        msg["request_id"] = json!(format!("r{}", self.next_id));
        let resp = self.raw(&msg.to_string());
        assert_eq!(resp["request_id"], msg["request_id"]);
        assert_eq!(resp["type"], msg["type"]);
        resp
    }
}

fn alice_phone() -> Value {
    json!({"phone_number": "+1555", "imei": "356938035643809", "sim_id": "8901", "device_kind": "smartphone"})
}

fn start() -> (std::net::SocketAddr, Arc<AuthServer>) {
    let server = Arc::new(
        AuthServer::new(
            ServerConfig::default(),
            CredStore::in_memory(),
            Arc::new(MockClock::new(5_000)),
            Some(9),
        )
        .unwrap(),
    );
    let (addr, _) = spawn_server("127.0.0.1:0", Arc::clone(&server)).unwrap();
    (addr, server)
}

#[test]
fn errors_keep_the_connection_open() {
    let (addr, _) = start();
    let mut c = Client::connect(addr);
    let r = c.raw("not json");
    assert_eq!(r["status"], "error");
    assert_eq!(r["code"], "malformed");
    let r = c.send(json!({"type": "teleport"}));
    assert_eq!(r["code"], "unknown_type");
    let r = c.send(json!({"type": "username_entry", "username": "alice"}));
    assert_eq!(r["code"], "protocol_error");
    let r = c.send(json!({"type": "hello"}));
    assert_eq!(r["code"], "malformed");
    let r = c.send(json!({"type": "hello", "device": alice_phone()}));
    assert_eq!(r["status"], "ok");
    assert!(r["session_id"].is_string());
}

#[test]
fn register_and_login_over_tcp() {
    let (addr, server) = start();
    let mut phone = Client::connect(addr);
    phone.send(json!({"type": "hello", "device": alice_phone()}));
    let r = phone.send(json!({"type": "register", "username": "alice", "login_password": "Abc123"}));
    assert_eq!(r["status"], "rejected");
    assert_eq!(r["violations"][0]["kind"], "invalid_character");
    assert_eq!(r["violations"][0]["position"], 1);
    let r = phone.send(json!({
        "type": "register", "username": "alice", "login_password": "abc123",
        "personal_info": {"name": "Alice"}
    }));
    assert_eq!(r["status"], "ok", "{r}");
    assert_eq!(r["target_length"], 20);

    phone.send(json!({"type": "hello", "device": alice_phone()}));
    let r = phone.send(json!({"type": "username_entry", "username": "alice"}));
    assert_eq!(r["field_state"], "enabled");
    let r = phone.send(json!({"type": "password_entry", "password": "abc123"}));
    assert_eq!(r["result"], "granted");
    assert_eq!(r["session_token"].as_str().unwrap().len(), 32);

    let r = phone.send(json!({"type": "modify_auth", "accept": false}));
    assert_eq!(r["result"], "declined");
    let r = phone.send(json!({"type": "modify_login", "new_login_password": "xyz789"}));
    assert_eq!(r["result"], "modified");

    // desktop link through a second connection
    let mut desk = Client::connect(addr);
    desk.send(json!({"type": "hello", "device": {"device_kind": "desktop", "sim_id": "office"}}));
    let link = desk.send(json!({"type": "issue_link"}));
    let token = link["link_token"].as_str().unwrap().to_owned();
    assert_eq!(desk.send(json!({"type": "link_status"}))["result"], "pending");
    let r = phone.send(json!({"type": "redeem_link", "link_token": token}));
    assert_eq!(r["result"], "granted");
    let status = desk.send(json!({"type": "link_status"}));
    assert_eq!(status["result"], "granted");
    assert_eq!(status["username"], "alice");
    assert_eq!(status["session_token"], r["session_token"]);
    let r = phone.send(json!({"type": "redeem_link", "link_token": token}));
    assert_eq!(r["code"], "token_used");

    let r = phone.send(json!({"type": "admin_unlock", "username": "alice", "admin_token": "x"}));
    assert_eq!(r["code"], "unauthorized");

    let auth = server.reveal_auth_password_for_testing("alice").unwrap();
    for line in phone.transcript.iter().chain(&desk.transcript) {
        assert!(!line.contains(&auth), "authentication password on the wire");
    }
}

#[test]
fn disabled_field_is_server_enforced() {
    let (addr, server) = start();
    let mut phone = Client::connect(addr);
    phone.send(json!({"type": "hello", "device": alice_phone()}));
    phone.send(json!({"type": "register", "username": "alice", "login_password": "abc123"}));

    let mut attacker = Client::connect(addr);
    attacker.send(json!({"type": "hello", "device": {"device_kind": "desktop"}}));
    let r = attacker.send(json!({"type": "username_entry", "username": "alice"}));
    assert_eq!(r["field_state"], "disabled");
    for _ in 0..5 {
        let r = attacker.send(json!({"type": "password_entry", "password": "abc123"}));
        assert_eq!(r["result"], "disabled");
    }
    assert_eq!(server.authentication_initiations(), 0);
}
