use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use anyhow::Result;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use serde::Deserialize;
use srs_search::comms::CommLevel;
use srs_search::session::Session;
use srs_search::sim::{EpisodeConfig, World};
use tokio::net::TcpListener;
use tokio::sync::mpsc::{unbounded_channel, UnboundedReceiver, UnboundedSender};
use tokio::time::MissedTickBehavior;

use crate::tools::TraceFile;

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub config: EpisodeConfig,
    /// Level for sessions that do not ask for one.
    pub level: CommLevel,
    pub log_dir: PathBuf,
    /// Simulation ticks per wall-clock second.
    pub tick_hz: f64,
    /// How long a session keeps running with no client attached.
    pub grace: Duration,
}

enum Event {
    Join {
        client: u64,
        tx: UnboundedSender<String>,
    },
    Leave {
        client: u64,
    },
    Frame {
        client: u64,
        text: String,
    },
}

struct App {
    world: Arc<World>,
    options: ServeOptions,
    sessions: Mutex<HashMap<String, UnboundedSender<Event>>>,
    next_client: AtomicU64,
    next_session: AtomicU64,
}

#[derive(Debug, Deserialize)]
struct SessionQuery {
    session: Option<String>,
    level: Option<CommLevel>,
    seed: Option<u64>,
    origin: Option<String>,
}

pub fn router(world: Arc<World>, options: ServeOptions) -> Router {
    let app = Arc::new(App {
        world,
        options,
        sessions: Mutex::new(HashMap::new()),
        next_client: AtomicU64::new(1),
        next_session: AtomicU64::new(1),
    });
    Router::new()
        .route("/ws", get(upgrade))
        .route("/health", get(|| async { "ok" }))
        .with_state(app)
}

pub async fn serve(listener: TcpListener, world: Arc<World>, options: ServeOptions) -> Result<()> {
    tracing::info!(addr = %listener.local_addr()?, "serving");
    axum::serve(listener, router(world, options)).await?;
    Ok(())
}

async fn upgrade(
    State(app): State<Arc<App>>,
    Query(query): Query<SessionQuery>,
    ws: WebSocketUpgrade,
) -> Response {
    ws.on_upgrade(move |socket| client_loop(app, query, socket))
}

impl App {
    /// Channel into the named session, starting it if needed.
    fn session(
        self: &Arc<Self>,
        query: &SessionQuery,
    ) -> Result<(String, UnboundedSender<Event>), String> {
        let mut sessions = self.sessions.lock().expect("session table lock");
        let id = query.session.clone().unwrap_or_else(|| {
            format!(
                "session-{}",
                self.next_session.fetch_add(1, Ordering::Relaxed)
            )
        });
        if let Some(tx) = sessions.get(&id).filter(|tx| !tx.is_closed()) {
            return Ok((id, tx.clone()));
        }
        let mut config = self.options.config.clone();
        if let Some(seed) = query.seed {
            config.seed = seed;
        }
        if let Some(origin) = &query.origin {
            config.origin = origin.clone();
        }
        let level = query.level.unwrap_or(self.options.level);
        let session = Session::new(id.clone(), self.world.clone(), &config, level)
            .map_err(|e| e.to_string())?;
        let (tx, rx) = unbounded_channel();
        sessions.insert(id.clone(), tx.clone());
        tokio::spawn(session_loop(self.clone(), session, config, rx));
        Ok((id, tx))
    }
}

async fn client_loop(app: Arc<App>, query: SessionQuery, mut socket: WebSocket) {
    let (_, session) = match app.session(&query) {
        Ok(s) => s,
        Err(e) => {
            let reply = serde_json::json!({ "type": "error", "seq": 1, "message": e });
            let _ = socket.send(Message::Text(reply.to_string().into())).await;
            return;
        }
    };
    let client = app.next_client.fetch_add(1, Ordering::Relaxed);
    let (tx, mut rx) = unbounded_channel::<String>();
    if session.send(Event::Join { client, tx }).is_err() {
        return;
    }
    loop {
        tokio::select! {
            out = rx.recv() => match out {
                Some(text) => {
                    if socket.send(Message::Text(text.into())).await.is_err() {
                        break;
                    }
                }
                None => break,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Text(text))) => {
                    let _ = session.send(Event::Frame { client, text: text.as_str().to_owned() });
                }
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                Some(Ok(_)) => {}
            },
        }
    }
    let _ = session.send(Event::Leave { client });
    let _ = socket.send(Message::Close(None)).await;
}

async fn session_loop(
    app: Arc<App>,
    mut session: Session,
    config: EpisodeConfig,
    mut events: UnboundedReceiver<Event>,
) {
    let period = Duration::from_secs_f64(1.0 / app.options.tick_hz.max(0.1));
    let mut ticker = tokio::time::interval(period);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
    let mut clients: BTreeMap<u64, UnboundedSender<String>> = BTreeMap::new();
    let mut alone_since = Some(Instant::now());
    let mut started = false;
    let mut auto_paused = false;

    let broadcast = |clients: &BTreeMap<u64, UnboundedSender<String>>, text: &str| {
        for tx in clients.values() {
            let _ = tx.send(text.to_owned());
        }
    };

    loop {
        tokio::select! {
            _ = ticker.tick() => {
                if let Some(since) = alone_since {
                    if since.elapsed() >= app.options.grace {
                        if !started {
                            break;
                        }
                        if !session.is_paused() {
                            session.set_paused(true);
                            auto_paused = true;
                        }
                    }
                }
                if !started {
                    continue;
                }
                for message in session.step() {
                    broadcast(&clients, &message.to_json());
                }
                if session.is_over() {
                    break;
                }
            }
            event = events.recv() => match event {
                Some(Event::Join { client, tx }) => {
                    let _ = tx.send(session.hello().to_json());
                    clients.insert(client, tx);
                    started = true;
                    alone_since = None;
                    if auto_paused {
                        session.set_paused(false);
                        auto_paused = false;
                    }
                }
                Some(Event::Leave { client }) => {
                    clients.remove(&client);
                    if clients.is_empty() {
                        alone_since = Some(Instant::now());
                    }
                }
                Some(Event::Frame { client, text }) => {
                    if let Some(reply) = session.receive(&text) {
                        if let Some(tx) = clients.get(&client) {
                            let _ = tx.send(reply.to_json());
                        }
                    }
                }
                None => break,
            },
        }
    }

    app.sessions
        .lock()
        .expect("session table lock")
        .remove(session.id());
    if started {
        if let Err(e) = save_session(&app.options.log_dir, &session, &config) {
            tracing::error!(session = session.id(), error = %e, "could not save session");
        }
    }
}

fn save_session(dir: &std::path::Path, session: &Session, config: &EpisodeConfig) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    session
        .log()
        .save(dir.join(format!("{}.eplog", session.id())))?;
    let trace = TraceFile {
        session: session.id().to_string(),
        level: session.level(),
        origin: config.origin.clone(),
        seed: config.seed,
        last_tick: session.episode().tick_index(),
        entries: session.trace().to_vec(),
    };
    std::fs::write(
        dir.join(format!("{}.trace.json", session.id())),
        serde_json::to_vec_pretty(&trace)?,
    )?;
    tracing::info!(session = session.id(), "session saved");
    Ok(())
}
