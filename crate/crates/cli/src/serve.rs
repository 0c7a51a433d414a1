//! WebSocket bridge in front of the session hub. Each socket becomes one hub
//! connection; text frames are JSON [`ClientFrame`]s.

use std::sync::Arc;

use anyhow::Result;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use harvest_core::harness::{HubOptions, ServerFrame, SessionHub};
use harvest_core::RunConfig;
use tokio::sync::mpsc;

async fn upgrade(ws: WebSocketUpgrade, State(hub): State<SessionHub>) -> Response {
    ws.on_upgrade(move |socket| connection(socket, hub))
}

async fn connection(socket: WebSocket, hub: SessionHub) {
    let (mut sink, mut stream) = socket.split();
    let (tx, mut rx) = mpsc::unbounded_channel::<ServerFrame>();
    let conn = hub.connect(Arc::new(move |frame| {
        let _ = tx.send(frame);
    }));
    let writer = tokio::spawn(async move {
        while let Some(frame) = rx.recv().await {
            let text = serde_json::to_string(&frame).expect("frame serializes");
            if sink.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
    });
    while let Some(Ok(msg)) = stream.next().await {
        match msg {
            Message::Text(text) => hub.handle_text(conn, text.as_str()),
            Message::Close(_) => break,
            _ => {}
        }
    }
    tracing::info!(conn, "connection closed");
    hub.disconnect(conn);
    writer.abort();
}

pub fn router(hub: SessionHub) -> Router {
    Router::new()
        .route("/ws", get(upgrade))
        .route("/health", get(|| async { "ok" }))
        .with_state(hub)
}

pub fn serve(cfg: RunConfig, opts: HubOptions, host: &str, port: u16) -> Result<()> {
    let hub = SessionHub::new(cfg, opts);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host, port)).await?;
        println!("listening on ws://{}/ws", listener.local_addr()?);
        axum::serve(listener, router(hub)).await?;
        Ok(())
    })
}
