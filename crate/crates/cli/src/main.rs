use std::process::ExitCode;

use clap::Parser;
use texdeform_cli::commands::{cmd_geodesics, cmd_run, exit_code, Cli, Command, ServeArgs};
use texdeform_cli::service::{router, Assets, AppState};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match &cli.command {
        Command::Run(args) => cmd_run(args).map(exit_code),
        Command::Geodesics(args) => cmd_geodesics(args).map(|()| 0),
        Command::Serve(args) => serve(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn serve(args: &ServeArgs) -> texdeform::Result<u8> {
    let assets = Assets::load(&args.mesh, &args.image)?;
    let app = router(AppState::new(assets));
    let addr = std::net::SocketAddr::new(args.host, args.port);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| texdeform::Error::io("tokio runtime", e))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| texdeform::Error::io(addr.to_string(), e))?;
        println!("listening on http://{addr}");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| texdeform::Error::io(addr.to_string(), e))
    })?;
    Ok(0)
}
