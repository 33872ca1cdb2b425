use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use screenome::learn::{simulate_collaboration, synth_corpus, SimulationConfig};
use screenome::scene::{corpus_matrix, write_corpus, Platform, SceneParams};
use screenome::service::{http, theoretical_latency, Engine, EngineConfig};
use screenome::store::{Share, Store, SystemClock};

#[derive(Parser)]
#[command(version, about = "Overlay interface modification: capture, annotate, compile, stream")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the session server with scripted demo devices.
    Serve {
        #[arg(long, default_value = "data")]
        root: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = 60)]
        fps: u32,
        #[arg(long, default_value = "ui/dist")]
        ui: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Collaborative training simulation; writes an accuracy curve CSV.
    Simulate {
        #[arg(long = "M", default_value_t = 1)]
        m: usize,
        #[arg(long = "N", default_value_t = 1)]
        n: usize,
        /// Timesteps; defaults to running until positives run out.
        #[arg(long = "T")]
        t: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Multiplies the default corpus sizes.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value = "curve.csv")]
        out: PathBuf,
    },
    /// Evaluate the theoretical latency model.
    BenchLatency {
        #[arg(long, default_value_t = 1.0)]
        frame_kb: f64,
        #[arg(long, default_value_t = 250.0)]
        bandwidth_mbps: f64,
        #[arg(long, default_value_t = 5.0)]
        inference_ms: f64,
        #[arg(long, default_value_t = 1)]
        one_way: u32,
    },
    /// Compile a stored annotation into an intervention.
    Compile {
        #[arg(long, default_value = "data")]
        root: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long)]
        annotation_id: u64,
        #[arg(long)]
        private: bool,
    },
    /// Write the synthetic scene corpus and its manifest.
    GenScenes {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        count: u64,
        #[arg(long, default_value = "corpus")]
        out: PathBuf,
    },
    /// Create an account.
    AddUser {
        #[arg(long, default_value = "data")]
        root: PathBuf,
        #[arg(long)]
        username: String,
        #[arg(long)]
        password: String,
        #[arg(long, value_delimiter = ',', default_value = "android")]
        devices: Vec<String>,
        #[arg(long, default_value = "default")]
        network: String,
    },
}

fn scaled(n: usize, scale: f64) -> usize {
    ((n as f64 * scale).round() as usize).max(1)
}

fn run(cli: Cli) -> screenome::Result<()> {
    match cli.command {
        Command::Serve { root, port, fps, ui, host } => {
            let store = Arc::new(Store::open(&root)?);
            let engine = Arc::new(
                Engine::new(
                    store,
                    EngineConfig {
                        default_fps: fps,
                        ..EngineConfig::default()
                    },
                )
                .with_sink(Arc::new(screenome::text::JsonlSink::new(root.join("logs/texthook.jsonl")))),
            );
            engine.register_demo_devices(&[0, 1, 2, 3, 4], 3000, Arc::new(SystemClock))?;
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| screenome::Error::InvalidArgument(format!("address: {e}")))?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                log::info!("listening on http://{}", listener.local_addr()?);
                http::serve(listener, engine, ui).await
            })
        }
        Command::Simulate { m, n, t, seed, scale, out } => {
            let corpus = Arc::new(synth_corpus(seed, scaled(1652, scale), scaled(15184, scale), scaled(187, scale)));
            let cfg = match t {
                Some(t) => SimulationConfig::new(m, n, t, seed, corpus),
                None => SimulationConfig::until_exhausted(m, n, seed, corpus),
            };
            let curve = simulate_collaboration(&cfg)?;
            std::fs::write(&out, curve.to_csv())?;
            println!(
                "baseline {:.4}, final {:.4}, {} points -> {}",
                curve.baseline,
                curve.final_accuracy().unwrap_or(f64::NAN),
                curve.points.len(),
                out.display()
            );
            Ok(())
        }
        Command::BenchLatency {
            frame_kb,
            bandwidth_mbps,
            inference_ms,
            one_way,
        } => {
            let ms = theoretical_latency(frame_kb * 1024.0 * 8.0, bandwidth_mbps * 1e6, inference_ms, one_way)?;
            println!("{ms:.6} ms");
            Ok(())
        }
        Command::Compile {
            root,
            user,
            annotation_id,
            private,
        } => {
            let store = Store::open(&root)?;
            let share = if private { Share::Private } else { Share::Network };
            let spec = store.compile_for(&user, annotation_id, share)?;
            println!("{}", serde_json::to_string_pretty(&spec)?);
            Ok(())
        }
        Command::GenScenes { seed, count, out } => {
            let seeds: Vec<u64> = (seed..seed + count).collect();
            let (scenes, manifest) = corpus_matrix(&seeds, &Platform::ALL, &SceneParams::default())?;
            write_corpus(&out, &scenes, &manifest)?;
            println!("{} scenes -> {}", scenes.len(), out.display());
            Ok(())
        }
        Command::AddUser {
            root,
            username,
            password,
            devices,
            network,
        } => {
            let store = Store::open(&root)?;
            let devices: Vec<&str> = devices.iter().map(String::as_str).collect();
            store.create_user(&username, &password, &devices, &network)?;
            println!("created {username}");
            Ok(())
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
