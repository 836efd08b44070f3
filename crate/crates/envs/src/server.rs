//! HTTP worker serving one environment. Requests are handled on a single
//! thread, so execution order equals arrival order.

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use tiny_http::{Header, Response, Server};

use crate::host::{EnvHost, Environment};
use crate::protocol::ServeError;

pub struct Worker {
    server: Arc<Server>,
    addr: SocketAddr,
    thread: Option<JoinHandle<()>>,
}

impl Worker {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the worker stops (it only stops via [`Worker::stop`]).
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Serves `env` on `addr` (use port 0 for an ephemeral port).
pub fn serve<E: Environment + 'static>(env: E, addr: &str) -> Result<Worker, ServeError> {
    let mut host = EnvHost::new(env).map_err(ServeError::InvalidSpec)?;
    let server = Server::http(addr).map_err(|e| ServeError::BindFailure {
        addr: addr.to_owned(),
        message: e.to_string(),
    })?;
    let server = Arc::new(server);
    let bound = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| ServeError::BindFailure {
            addr: addr.to_owned(),
            message: "not an IP listener".into(),
        })?;
    let listener = Arc::clone(&server);
    let thread = std::thread::spawn(move || {
        let json = Header::from_bytes("Content-Type", "application/json").expect("static header");
        for mut request in listener.incoming_requests() {
            let mut body = String::new();
            let reply = match request.as_reader().read_to_string(&mut body) {
                Ok(_) => host.handle_wire(request.method().as_str(), request.url(), &body),
                Err(e) => host.handle_wire("POST", "/execute", &format!("<unreadable: {e}>")),
            };
            let response = Response::from_string(reply.body)
                .with_status_code(reply.status)
                .with_header(json.clone());
            let _ = request.respond(response);
        }
    });
    Ok(Worker {
        server,
        addr: bound,
        thread: Some(thread),
    })
}
