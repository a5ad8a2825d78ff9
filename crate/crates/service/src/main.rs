use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Parser;
use log::info;

use slicecast_service::{router, AppState, ServiceConfig};

#[derive(Parser)]
#[command(name = "slicecast-serve", version, about = "HTTP render service for slicecast")]
struct Args {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Address to bind.
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Directory of `.raw` volumes with `.json` descriptors.
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    /// Renders allowed in flight before answering 503 (default: core count).
    #[arg(long)]
    max_concurrency: Option<usize>,
    /// Attenuation buffers kept in memory.
    #[arg(long, default_value_t = 8)]
    cache_size: usize,
}

async fn shutdown_signal() {
    if tokio::signal::ctrl_c().await.is_ok() {
        info!("shutting down");
    }
}

#[tokio::main]
async fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let mut config = ServiceConfig::new(&args.data_dir);
    if let Some(n) = args.max_concurrency {
        if n == 0 {
            bail!("--max-concurrency must be at least 1");
        }
        config.max_concurrency = n;
    }
    config.cache_capacity = args.cache_size;

    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .context("invalid host or port")?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    info!(
        "serving {} on http://{addr} (max {} concurrent renders)",
        config.data_dir.display(),
        config.max_concurrency
    );
    axum::serve(listener, router(AppState::new(config)))
        .with_graceful_shutdown(shutdown_signal())
        .await?;
    Ok(())
}
