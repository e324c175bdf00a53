use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;

use serde_json::{json, Value};

use crate::CliError;

/// Blocking line-protocol client: one request, one response.
pub struct WireClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    next_id: u64,
}

impl WireClient {
    pub fn connect(addr: &str) -> Result<Self, CliError> {
        let stream = TcpStream::connect(addr).map_err(|e| CliError::Connection(format!("{addr}: {e}")))?;
        let writer = stream.try_clone().map_err(|e| CliError::Connection(e.to_string()))?;
        Ok(WireClient {
            reader: BufReader::new(stream),
            writer,
            next_id: 0,
        })
    }

    /// Sends `request` with a fresh `request_id` and returns the response.
    pub fn call(&mut self, mut request: Value) -> Result<Value, CliError> {
        self.next_id += 1;
        request["request_id"] = json!(format!("cli-{}", self.next_id));
        let mut line = request.to_string();
        line.push('\n');
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| CliError::Connection(e.to_string()))?;
        let mut resp = String::new();
        let n = self
            .reader
            .read_line(&mut resp)
            .map_err(|e| CliError::Connection(e.to_string()))?;
        if n == 0 {
            return Err(CliError::Connection("server closed the connection".into()));
        }
        serde_json::from_str(&resp).map_err(|e| CliError::Connection(format!("bad response: {e}")))
    }
}
