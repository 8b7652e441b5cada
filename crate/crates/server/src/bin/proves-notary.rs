use std::process::ExitCode;
use std::sync::Arc;

use proves_core::{Notary, SystemClock};
use tracing_subscriber::EnvFilter;

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    match run().await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            tracing::error!("{e}");
            ExitCode::FAILURE
        }
    }
}

async fn run() -> Result<(), Box<dyn std::error::Error>> {
    let config = proves_server::config_from_env()?;
    let dir = proves_server::data_dir_from_env();
    let addr = proves_server::addr_from_env();
    let notary = Arc::new(Notary::open(&dir, &config, Arc::new(SystemClock))?);
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    tracing::info!(addr = %listener.local_addr()?, data_dir = %dir.display(), "notary listening");
    proves_server::serve(listener, notary, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}
