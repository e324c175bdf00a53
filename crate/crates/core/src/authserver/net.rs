use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use log::{debug, warn};

use super::{AuthServer, Connection};

/// Longest request line accepted before the connection is dropped.
const MAX_LINE: usize = 64 * 1024;

fn handle_client(stream: TcpStream, server: Arc<AuthServer>) -> io::Result<()> {
    let peer = stream.peer_addr().ok();
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut conn = Connection::new(server);
    let mut line = String::new();
    loop {
        line.clear();
        let n = (&mut reader).take(MAX_LINE as u64 + 1).read_line(&mut line)?;
        if n == 0 {
            break;
        }
        if n > MAX_LINE {
            warn!("dropping {peer:?}: request line over {MAX_LINE} bytes");
            break;
        }
        let request = line.trim_end_matches(['\r', '\n']);
        if request.trim().is_empty() {
            continue;
        }
        let mut response = conn.handle_line(request);
        response.push('\n');
        writer.write_all(response.as_bytes())?;
        writer.flush()?;
    }
    debug!("connection from {peer:?} closed");
    Ok(())
}

/// Accepts connections forever, one thread per connection.
pub fn serve(listener: TcpListener, server: Arc<AuthServer>) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let server = Arc::clone(&server);
        thread::spawn(move || {
            if let Err(e) = handle_client(stream, server) {
                debug!("connection ended with error: {e}");
            }
        });
    }
    Ok(())
}

/// Binds `addr` and serves on a background thread; returns the bound address.
pub fn spawn_server(addr: &str, server: Arc<AuthServer>) -> io::Result<(SocketAddr, JoinHandle<io::Result<()>>)> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let handle = thread::spawn(move || serve(listener, server));
    Ok((local, handle))
}
