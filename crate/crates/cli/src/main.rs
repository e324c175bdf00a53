use std::collections::BTreeMap;
use std::io::{self, BufRead};
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dualpass_cli::{builtin, builtin_names, load_scenario, run_scenario, DeviceProfile, WireClient};
use dualpass_core::{authserver, AuthServer, CredStore, ServerConfig, SystemClock};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "dualpass", version, about = "Dual-password login server and client")]
struct Cli {
    /// Server address for client commands.
    #[arg(long, global = true, env = "DUALPASS_SERVER", default_value = "127.0.0.1:7878")]
    server: String,
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Read passwords from stdin, one per line, instead of prompting.
    #[arg(long, global = true)]
    password_stdin: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the authentication server.
    Serve {
        #[arg(long, env = "DUALPASS_STORE")]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        /// Server config as JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Fix every random choice. For tests only.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Register an account from a smartphone profile.
    Register {
        #[command(flatten)]
        who: Who,
        /// Personal information as key=value, repeatable.
        #[arg(long = "info", value_parser = parse_kv)]
        info: Vec<(String, String)>,
    },
    /// Log in with the login password.
    Login {
        #[command(flatten)]
        who: Who,
    },
    /// Log in, then replace the login password.
    ModifyLogin {
        #[command(flatten)]
        who: Who,
    },
    /// Log in, then regenerate the authentication password.
    ModifyAuth {
        #[command(flatten)]
        who: Who,
        #[arg(long, conflicts_with = "decline")]
        accept: bool,
        #[arg(long)]
        decline: bool,
    },
    /// Desktop login through a token redeemed on the phone.
    #[command(subcommand)]
    Link(LinkCommand),
    #[command(subcommand)]
    Admin(AdminCommand),
    /// Run scripted multi-device scenarios.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
}

#[derive(Args)]
struct Who {
    /// Device profile (JSON).
    #[arg(long)]
    device: PathBuf,
    #[arg(long = "user")]
    username: String,
}

#[derive(Subcommand)]
enum LinkCommand {
    /// Issue a link token from a desktop.
    Issue {
        #[arg(long)]
        device: PathBuf,
        /// Wait up to this many seconds for the token to be redeemed.
        #[arg(long)]
        wait: Option<u64>,
    },
    /// Log in on the phone and redeem a desktop's token.
    Redeem {
        #[command(flatten)]
        who: Who,
        #[arg(long)]
        token: String,
    },
}

#[derive(Subcommand)]
enum AdminCommand {
    /// Clear a locked account.
    Unlock {
        #[arg(long = "user")]
        username: String,
        #[arg(long, env = "DUALPASS_ADMIN_TOKEN")]
        admin_token: String,
    },
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// Run a scenario file or `builtin:NAME`.
    Run {
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List builtin scenarios.
    List,
}

fn parse_kv(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .ok_or_else(|| format!("expected key=value, got {s:?}"))
}

struct Passwords {
    from_stdin: bool,
}

impl Passwords {
    fn read(&self, prompt: &str) -> Result<String> {
        if self.from_stdin {
            let mut line = String::new();
            if io::stdin().lock().read_line(&mut line)? == 0 {
                bail!("stdin closed while reading a password");
            }
            return Ok(line.trim_end_matches(['\r', '\n']).to_owned());
        }
        rpassword::prompt_password(prompt).context("reading password")
    }
}

struct Output {
    json: bool,
}

impl Output {
    fn emit(&self, value: &Value, text: &str) {
        if self.json {
            println!("{value}");
        } else {
            println!("{text}");
        }
    }
}

fn status_of(resp: &Value) -> Result<()> {
    match resp["status"].as_str() {
        Some("ok") => Ok(()),
        Some("rejected") => {
            let reasons: Vec<String> = resp["violations"]
                .as_array()
                .into_iter()
                .flatten()
                .map(|v| v["detail"].as_str().unwrap_or("invalid").to_owned())
                .collect();
            bail!("rejected: {}", reasons.join("; "))
        }
        _ => bail!(
            "{}: {}",
            resp["code"].as_str().unwrap_or("error"),
            resp["message"].as_str().unwrap_or("request failed")
        ),
    }
}

fn connect(server: &str, device: &std::path::Path) -> Result<WireClient> {
    let profile = DeviceProfile::load(device)?;
    let mut client = WireClient::connect(server)?;
    let resp = client.call(json!({"type": "hello", "device": profile.device}))?;
    status_of(&resp)?;
    Ok(client)
}

/// Returns the final response: the password-entry result, or the username
/// step when the field comes back disabled.
fn login(client: &mut WireClient, who: &Who, passwords: &Passwords) -> Result<Value> {
    let resp = client.call(json!({"type": "username_entry", "username": who.username}))?;
    status_of(&resp)?;
    if resp["field_state"] != "enabled" {
        return Ok(resp);
    }
    let password = passwords.read("login password: ")?;
    let resp = client.call(json!({"type": "password_entry", "password": password}))?;
    status_of(&resp)?;
    Ok(resp)
}

fn login_result(resp: &Value) -> &str {
    resp["result"].as_str().unwrap_or("disabled")
}

fn run(cli: Cli) -> Result<bool> {
    let out = Output { json: cli.json };
    let passwords = Passwords {
        from_stdin: cli.password_stdin,
    };
    match cli.command {
        Command::Serve {
            store,
            listen,
            config,
            seed,
        } => {
            let config: ServerConfig = match config {
                Some(path) => serde_json::from_str(
                    &std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?,
                )
                .with_context(|| format!("parsing {}", path.display()))?,
                None => ServerConfig::default(),
            };
            let store = CredStore::open(&store).with_context(|| format!("opening {}", store.display()))?;
            let server = AuthServer::new(config, store, Arc::new(SystemClock), seed)?;
            let listener = TcpListener::bind(&listen).with_context(|| format!("binding {listen}"))?;
            log::info!("listening on {}", listener.local_addr()?);
            authserver::serve(listener, Arc::new(server))?;
            Ok(true)
        }
        Command::Register { who, info } => {
            let mut client = connect(&cli.server, &who.device)?;
            let password = passwords.read("new login password: ")?;
            let info: BTreeMap<_, _> = info.into_iter().collect();
            let resp = client.call(json!({
                "type": "register", "username": who.username,
                "login_password": password, "personal_info": info,
            }))?;
            status_of(&resp)?;
            out.emit(&resp, &format!("registered {}", who.username));
            Ok(true)
        }
        Command::Login { who } => {
            let mut client = connect(&cli.server, &who.device)?;
            let resp = login(&mut client, &who, &passwords)?;
            let result = login_result(&resp);
            out.emit(&resp, result);
            Ok(result == "granted")
        }
        Command::ModifyLogin { who } => {
            let mut client = connect(&cli.server, &who.device)?;
            let resp = login(&mut client, &who, &passwords)?;
            if login_result(&resp) != "granted" {
                out.emit(&resp, login_result(&resp));
                return Ok(false);
            }
            let new = passwords.read("new login password: ")?;
            let resp = client.call(json!({"type": "modify_login", "new_login_password": new}))?;
            status_of(&resp)?;
            out.emit(&resp, "login password changed");
            Ok(true)
        }
        Command::ModifyAuth { who, accept, decline } => {
            let mut client = connect(&cli.server, &who.device)?;
            let resp = login(&mut client, &who, &passwords)?;
            if login_result(&resp) != "granted" {
                out.emit(&resp, login_result(&resp));
                return Ok(false);
            }
            let accept = if accept || decline {
                accept
            } else {
                let answer = passwords.read("regenerate the authentication password? [y/N] ")?;
                answer.trim().eq_ignore_ascii_case("y")
            };
            let resp = client.call(json!({"type": "modify_auth", "accept": accept}))?;
            status_of(&resp)?;
            out.emit(&resp, resp["result"].as_str().unwrap_or("?"));
            Ok(true)
        }
        Command::Link(LinkCommand::Issue { device, wait }) => {
            let mut client = connect(&cli.server, &device)?;
            let resp = client.call(json!({"type": "issue_link"}))?;
            status_of(&resp)?;
            out.emit(
                &resp,
                &format!(
                    "link token {} (valid {}s)",
                    resp["link_token"].as_str().unwrap_or(""),
                    resp["ttl_secs"]
                ),
            );
            let Some(wait) = wait else { return Ok(true) };
            let deadline = Instant::now() + Duration::from_secs(wait);
            loop {
                let status = client.call(json!({"type": "link_status"}))?;
                status_of(&status)?;
                match status["result"].as_str() {
                    Some("pending") if Instant::now() < deadline => thread::sleep(Duration::from_secs(1)),
                    Some("granted") => {
                        out.emit(
                            &status,
                            &format!("granted for {}", status["username"].as_str().unwrap_or("?")),
                        );
                        return Ok(true);
                    }
                    other => {
                        out.emit(&status, other.unwrap_or("expired"));
                        return Ok(false);
                    }
                }
            }
        }
        Command::Link(LinkCommand::Redeem { who, token }) => {
            let mut client = connect(&cli.server, &who.device)?;
            let resp = login(&mut client, &who, &passwords)?;
            if login_result(&resp) != "granted" {
                out.emit(&resp, login_result(&resp));
                return Ok(false);
            }
            let resp = client.call(json!({"type": "redeem_link", "link_token": token, "username": who.username}))?;
            status_of(&resp)?;
            out.emit(&resp, "desktop logged in");
            Ok(true)
        }
        Command::Admin(AdminCommand::Unlock { username, admin_token }) => {
            let mut client = WireClient::connect(&cli.server)?;
            let resp =
                client.call(json!({"type": "admin_unlock", "username": username, "admin_token": admin_token}))?;
            status_of(&resp)?;
            out.emit(&resp, &format!("unlocked {username}"));
            Ok(true)
        }
        Command::Scenario(ScenarioCommand::Run { scenario, seed }) => {
            let report = run_scenario(&load_scenario(&scenario)?, seed)?;
            if out.json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.to_text());
            }
            Ok(report.passed)
        }
        Command::Scenario(ScenarioCommand::List) => {
            for name in builtin_names() {
                let s = builtin(name).expect("listed builtin exists");
                if out.json {
                    println!("{}", json!({"name": name, "description": s.description}));
                } else {
                    println!("{name:18} {}", s.description);
                }
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if matches!(cli.command, Command::Serve { .. }) {
        "info"
    } else {
        "warn"
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
