use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use cyclepot_core::pipeline::discover_bundles;

/// Serve region bundles as GeoJSON layers.
#[derive(Debug, Parser)]
#[command(name = "cyclepot-server", version)]
struct Args {
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Directory holding one bundle per region.
    #[arg(long)]
    bundles: PathBuf,
    /// Static files for the map UI, served for unmatched paths.
    #[arg(long)]
    static_root: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> ExitCode {
    let args = Args::parse();
    let bundles = match discover_bundles(&args.bundles) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    eprintln!("loaded {} region bundle(s) from {}", bundles.len(), args.bundles.display());
    let app = cyclepot_server::app(bundles, args.static_root);
    let listener = match tokio::net::TcpListener::bind(args.listen).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: cannot listen on {}: {e}", args.listen);
            return ExitCode::FAILURE;
        }
    };
    eprintln!("listening on http://{}", args.listen);
    if let Err(e) = axum::serve(listener, app).await {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
