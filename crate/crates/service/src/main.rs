use std::time::Duration;

use geoseg_service::{router, spawn_reaper, AppState, ServiceConfig};

fn env_parse<T: std::str::FromStr>(name: &str) -> Option<T> {
    let raw = std::env::var(name).ok()?;
    match raw.parse() {
        Ok(v) => Some(v),
        Err(_) => {
            eprintln!("ignoring {name}={raw:?}: not a valid value");
            None
        }
    }
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let addr = std::env::var("GEOSEG_ADDR").unwrap_or_else(|_| "127.0.0.1:8080".into());
    let mut config = ServiceConfig::default();
    if let Some(secs) = env_parse::<u64>("GEOSEG_IDLE_SECS") {
        config.idle_timeout = Duration::from_secs(secs);
    }
    if let Some(px) = env_parse("GEOSEG_MAX_PIXELS") {
        config.max_pixels = px;
    }
    config.cors_origin = std::env::var("GEOSEG_CORS_ORIGIN").ok().filter(|o| !o.is_empty());

    let state = AppState::new(config);
    spawn_reaper(state.clone(), Duration::from_secs(60));
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
