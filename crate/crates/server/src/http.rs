//! axum routes over a shared [`Notary`].

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use proves_core::{Notary, NotaryError};

use crate::api::{self, status_for, Operation};

/// Largest accepted request body.
pub const MAX_BODY: usize = 64 << 20;
const OCTETS: [(&str, &str); 1] = [("content-type", "application/octet-stream")];

pub fn router(notary: Arc<Notary>) -> Router {
    Router::new()
        .route("/v1/register", post(register))
        .route("/v1/sign", post(sign))
        .route("/v1/verify", post(verify))
        .route("/v1/revoke", post(revoke))
        .route("/v1/key", get(key))
        .layer(DefaultBodyLimit::max(MAX_BODY))
        .with_state(notary)
}

fn failure(op: Operation, e: NotaryError) -> Response {
    let code = status_for(op, &e);
    if code >= 500 {
        tracing::error!(?op, error = %e, "request failed");
    } else {
        tracing::info!(?op, error = %e, "request rejected");
    }
    let status = StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, e.to_string()).into_response()
}

fn ok(status: StatusCode, body: Result<Vec<u8>, proves_core::wire::WireError>) -> Response {
    match body {
        Ok(b) => (status, OCTETS, b).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

/// Run CPU-bound notary work off the async workers.
async fn blocking<T: Send + 'static>(
    op: Operation,
    f: impl FnOnce() -> Result<T, NotaryError> + Send + 'static,
) -> Result<T, Response> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(|e| failure(op, e)),
        Err(e) => Err(failure(op, NotaryError::Internal(e.to_string()))),
    }
}

async fn register(State(n): State<Arc<Notary>>, body: Bytes) -> Response {
    let r = blocking(Operation::Register, move || {
        let (id, pk) = api::decode_register(&body)?;
        n.register(&id, &pk)
    })
    .await;
    match r {
        Ok(()) => StatusCode::CREATED.into_response(),
        Err(resp) => resp,
    }
}

async fn sign(State(n): State<Arc<Notary>>, body: Bytes) -> Response {
    let r = blocking(Operation::Sign, move || {
        let req = api::decode_sign_request(&body)?;
        n.sign(&req)
    })
    .await;
    match r {
        Ok(resp) => ok(StatusCode::OK, api::encode_sign_response(&resp)),
        Err(resp) => resp,
    }
}

async fn verify(State(n): State<Arc<Notary>>, body: Bytes) -> Response {
    let r = blocking(Operation::Verify, move || {
        let (image, container) = api::decode_verify_request(&body)?;
        n.verify(&image, container.as_deref())
    })
    .await;
    match r {
        Ok(report) => ok(StatusCode::OK, api::encode_report(&report)),
        Err(resp) => resp,
    }
}

async fn revoke(State(n): State<Arc<Notary>>, body: Bytes) -> Response {
    let r = blocking(Operation::Revoke, move || {
        let (id, effective) = api::decode_revoke(&body)?;
        n.revoke(&id, effective)
    })
    .await;
    match r {
        Ok(t) => ok(StatusCode::OK, api::encode_effective(t)),
        Err(resp) => resp,
    }
}

async fn key(State(n): State<Arc<Notary>>) -> Response {
    (StatusCode::OK, OCTETS, n.public_key().to_sec1_bytes()).into_response()
}

pub async fn serve(
    listener: tokio::net::TcpListener,
    notary: Arc<Notary>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(notary))
        .with_graceful_shutdown(shutdown)
        .await
}

/// A server running on its own runtime thread; stops when dropped.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    /// Bind `addr` (port 0 picks a free port) and serve in the background.
    pub fn spawn(notary: Arc<Notary>, addr: &str) -> std::io::Result<Self> {
        let std_listener = std::net::TcpListener::bind(addr)?;
        std_listener.set_nonblocking(true)?;
        let local = std_listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener)?;
                serve(listener, notary, async {
                    let _ = rx.await;
                })
                .await
            })
        });
        Ok(Self {
            addr: local,
            stop: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
