use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cbx_core::convert::{convert_predictions, parse_score_mapping, ConvertOptions};
use cbx_core::model::{Dataset, LoadOptions, ValidationReport};
use cbx_core::server::{cors, router, serve, AppState};
use cbx_core::session::Session;

#[derive(Parser)]
#[command(name = "cbx", version, about = "Classifier assessment with reject-option operating points")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP/JSON service.
    Serve(ServeArgs),
    /// Load a dataset and print its validation report.
    Validate {
        file: PathBuf,
        #[command(flatten)]
        load: LoadArgs,
    },
    /// Print the metrics table of every classifier at the default point.
    Summary {
        file: PathBuf,
        #[command(flatten)]
        load: LoadArgs,
    },
    /// Convert a prediction dump (CSV) into the JSON ingest format.
    Convert(ConvertArgs),
}

#[derive(Args)]
struct LoadArgs {
    /// Min-max normalize classifiers with scores outside [0, 1].
    #[arg(long, env = "CBX_NORMALIZE")]
    normalize: bool,
    /// Class names as `negative,positive`.
    #[arg(long, env = "CBX_CLASSES")]
    classes: Option<String>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "CBX_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "CBX_HOST", default_value = "127.0.0.1")]
    host: IpAddr,
    /// Dataset to preload as session `s1`.
    #[arg(long, env = "CBX_DATA")]
    data: Option<PathBuf>,
    /// Allowed CORS origin (`*` for any).
    #[arg(long, env = "CBX_CORS_ORIGIN")]
    cors_origin: Option<String>,
    #[command(flatten)]
    load: LoadArgs,
}

#[derive(Args)]
struct ConvertArgs {
    input: PathBuf,
    /// Column with the true labels.
    #[arg(long)]
    label: String,
    /// Score column, as `name=column` or just `column`; repeatable.
    #[arg(long = "score", required = true)]
    scores: Vec<String>,
    /// Column with instance ids (rows are numbered when omitted).
    #[arg(long)]
    id: Option<String>,
    /// Class names as `negative,positive`.
    #[arg(long)]
    classes: Option<String>,
    /// Drop the remaining columns instead of keeping them as features.
    #[arg(long)]
    no_features: bool,
    /// Output file (stdout when omitted).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn classes(arg: Option<&str>) -> Result<Option<[String; 2]>, String> {
    arg.map(|c| match c.split_once(',') {
        Some((neg, pos)) => Ok([neg.to_owned(), pos.to_owned()]),
        None => Err(format!("classes must be `negative,positive`, got `{c}`")),
    })
    .transpose()
}

fn load(path: &Path, args: &LoadArgs) -> Result<(Dataset, ValidationReport), String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let opts = LoadOptions {
        normalize: args.normalize,
        classes: classes(args.classes.as_deref())?,
        source: Some(path.display().to_string()),
    };
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let loaded = if is_csv {
        Dataset::from_csv(&bytes, &opts)
    } else {
        Dataset::from_json(&bytes, &opts)
    };
    loaded.map_err(|e| match e {
        cbx_core::Error::Validation(ref report) => {
            format!("{e}\n{}", serde_json::to_string_pretty(report).unwrap_or_default())
        }
        e => format!("{}: {e}", path.display()),
    })
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("output serializes"));
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Validate { file, load: args } => {
            let (_, report) = load(&file, &args)?;
            print_json(&report);
        }
        Command::Summary { file, load: args } => {
            let (dataset, _) = load(&file, &args)?;
            let table = Session::new(dataset).metrics_table().map_err(|e| e.to_string())?;
            print_json(&table);
        }
        Command::Convert(args) => {
            let bytes = std::fs::read(&args.input).map_err(|e| format!("{}: {e}", args.input.display()))?;
            let opts = ConvertOptions {
                id_column: args.id,
                label_column: args.label,
                scores: args.scores.iter().map(|s| parse_score_mapping(s)).collect(),
                classes: classes(args.classes.as_deref())?,
                keep_features: !args.no_features,
                source: Some(args.input.display().to_string()),
            };
            let doc = convert_predictions(&bytes, &opts).map_err(|e| e.to_string())?;
            let json = serde_json::to_string_pretty(&doc).expect("ingest document serializes");
            match args.output {
                Some(path) => std::fs::write(&path, json).map_err(|e| format!("{}: {e}", path.display()))?,
                None => println!("{json}"),
            }
        }
        Command::Serve(args) => {
            let state = AppState::new();
            if let Some(path) = &args.data {
                let (dataset, report) = load(path, &args.load)?;
                for w in &report.warnings {
                    log::warn!("{}: {}", w.code, w.message);
                }
                let id = state.insert(Session::new(dataset));
                log::info!("preloaded {} as session {id}", path.display());
            }
            let mut app = router(state);
            if let Some(origin) = &args.cors_origin {
                app = app.layer(cors(origin).map_err(|e| e.to_string())?);
            }
            let addr = SocketAddr::new(args.host, args.port);
            tokio::runtime::Runtime::new()
                .map_err(|e| e.to_string())?
                .block_on(serve(addr, app))
                .map_err(|e| format!("server error: {e}"))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
