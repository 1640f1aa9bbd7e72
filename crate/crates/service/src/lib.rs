//! Command line and HTTP front end for the simulated HDA screen reader.

pub mod cli;
pub mod http;
pub mod script;
pub mod session;

use session::Session;

/// Serves the HTTP API for `session` until the process is stopped.
pub async fn serve(session: Session, bind: &str, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind((bind, port)).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, http::router(http::AppState::new(session))).await
}
