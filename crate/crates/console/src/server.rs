use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use ecp_core::runtime::{LibraryError, Manifest};
use ecp_core::simcore::SimConfig;
use futures::{SinkExt, StreamExt};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, oneshot};

use crate::protocol::{parse_command, Command, CommandMessage, ErrorCode, ServerMessage};
use crate::session::{Session, SessionError};

/// Frames buffered per client before it counts as too slow and is dropped.
pub const TELEMETRY_BUFFER: usize = 256;

#[derive(Debug, Error)]
pub enum ConsoleError {
    #[error("loading manifest {path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: LibraryError,
    },
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("binding {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub struct ServeConfig {
    pub manifest: PathBuf,
    pub bind: SocketAddr,
    /// Simulated seconds per wall-clock second.
    pub speed: f64,
    pub seed: u64,
    pub sim: SimConfig,
}

enum Request {
    Command(CommandMessage, oneshot::Sender<ServerMessage>),
    Hello(oneshot::Sender<ServerMessage>),
}

/// Connection to the tick loop. The loop stops once every handle is gone.
#[derive(Clone)]
pub struct TickHandle {
    requests: mpsc::UnboundedSender<Request>,
    telemetry: broadcast::Sender<Arc<str>>,
}

impl TickHandle {
    pub async fn command(&self, msg: CommandMessage) -> ServerMessage {
        let id = msg.id;
        let (tx, rx) = oneshot::channel();
        if self.requests.send(Request::Command(msg, tx)).is_err() {
            return ServerMessage::error(Some(id), ErrorCode::Internal, "simulation loop stopped");
        }
        rx.await
            .unwrap_or_else(|_| ServerMessage::error(Some(id), ErrorCode::Internal, "simulation loop stopped"))
    }

    pub async fn hello(&self) -> Option<ServerMessage> {
        let (tx, rx) = oneshot::channel();
        self.requests.send(Request::Hello(tx)).ok()?;
        rx.await.ok()
    }

    /// Serialized telemetry messages from now on.
    pub fn subscribe(&self) -> broadcast::Receiver<Arc<str>> {
        self.telemetry.subscribe()
    }
}

/// Starts the thread that owns `session`. Commands are applied between
/// control steps, and each step's frame is broadcast to all subscribers.
pub fn spawn_tick_loop(session: Session) -> (TickHandle, JoinHandle<()>) {
    let (req_tx, req_rx) = mpsc::unbounded_channel();
    let (tel_tx, _) = broadcast::channel(TELEMETRY_BUFFER);
    let handle = TickHandle {
        requests: req_tx,
        telemetry: tel_tx.clone(),
    };
    let join = std::thread::Builder::new()
        .name("tick-loop".into())
        .spawn(move || tick_loop(session, req_rx, tel_tx))
        .expect("spawning the tick loop");
    (handle, join)
}

fn serve_request(session: &mut Session, req: Request) {
    match req {
        Request::Command(msg, reply) => {
            let _ = reply.send(session.apply(msg.id, &msg.command));
        }
        Request::Hello(reply) => {
            let _ = reply.send(session.hello());
        }
    }
}

fn tick_loop(mut session: Session, mut requests: mpsc::UnboundedReceiver<Request>, telemetry: broadcast::Sender<Arc<str>>) {
    let mut deadline = Instant::now();
    loop {
        loop {
            match requests.try_recv() {
                Ok(r) => serve_request(&mut session, r),
                Err(mpsc::error::TryRecvError::Empty) => break,
                Err(mpsc::error::TryRecvError::Disconnected) => return,
            }
        }
        if session.paused() {
            match requests.blocking_recv() {
                Some(r) => serve_request(&mut session, r),
                None => return,
            }
            deadline = Instant::now();
            continue;
        }
        if let Some(frame) = session.step() {
            // no receivers is fine
            let _ = telemetry.send(Arc::from(ServerMessage::telemetry(frame).to_json()));
        }
        deadline += Duration::from_secs_f64(session.control_dt() / session.speed());
        let now = Instant::now();
        if deadline > now {
            std::thread::sleep(deadline - now);
        } else {
            // running behind: do not try to catch up in a burst
            deadline = now;
        }
    }
}

pub fn router(handle: TickHandle) -> Router {
    Router::new()
        .route("/", get(|| async { "ecp console: connect a WebSocket to /ws\n" }))
        .route("/ws", get(ws_upgrade))
        .with_state(handle)
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(handle): State<TickHandle>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, handle))
}

async fn client(socket: WebSocket, handle: TickHandle) {
    let (mut sink, mut stream) = socket.split();
    let mut telemetry = handle.subscribe();
    let Some(hello) = handle.hello().await else {
        return;
    };
    if sink.send(Message::Text(hello.to_json().into())).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            incoming = stream.next() => {
                let reply = match incoming {
                    Some(Ok(Message::Text(text))) => match parse_command(text.as_str()) {
                        Ok(msg) => handle.command(msg).await,
                        Err(e) => e,
                    },
                    Some(Ok(Message::Binary(_))) => {
                        ServerMessage::error(None, ErrorCode::BadRequest, "commands are JSON text messages")
                    }
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                if sink.send(Message::Text(reply.to_json().into())).await.is_err() {
                    break;
                }
            }
            frame = telemetry.recv() => match frame {
                Ok(json) => {
                    if sink.send(Message::Text(json.as_ref().into())).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    log::warn!("dropping a client that fell {n} frames behind");
                    let _ = sink.send(Message::Close(None)).await;
                    break;
                }
                Err(broadcast::error::RecvError::Closed) => break,
            },
        }
    }
}

/// Serves `session` on an already bound listener until the future is
/// dropped or the listener fails.
pub async fn run(listener: TcpListener, session: Session, speed: f64) -> Result<(), ConsoleError> {
    let (handle, _join) = spawn_tick_loop(session);
    if speed != 1.0 {
        if let ServerMessage::Error { message, .. } = handle.command(CommandMessage::new(0, Command::SetSpeed { speed })).await {
            log::warn!("ignoring --speed: {message}");
        }
    }
    axum::serve(listener, router(handle)).await?;
    Ok(())
}

/// Loads the manifest, binds and serves until interrupted.
pub async fn serve(cfg: ServeConfig) -> Result<(), ConsoleError> {
    let manifest = Manifest::load(&cfg.manifest).map_err(|source| ConsoleError::Manifest {
        path: cfg.manifest.clone(),
        source,
    })?;
    let base = cfg.manifest.parent().map(PathBuf::from).unwrap_or_default();
    let lib = manifest.load_library(&base).map_err(|source| ConsoleError::Manifest {
        path: cfg.manifest.clone(),
        source,
    })?;
    let session = Session::new(lib, cfg.sim, cfg.seed)?;
    let listener = TcpListener::bind(cfg.bind).await.map_err(|source| ConsoleError::Bind { addr: cfg.bind, source })?;
    log::info!("console listening on ws://{}/ws", listener.local_addr()?);
    tokio::select! {
        r = run(listener, session, cfg.speed) => r,
        _ = tokio::signal::ctrl_c() => Ok(()),
    }
}
