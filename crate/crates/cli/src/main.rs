use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use condmeasure_cli::commands::{self, Format};
use condmeasure_cli::error::{CliError, CliResult};
use condmeasure_cli::session::SessionStore;

/// Conditional distributions, Bayes' formula and mutual information on
/// finitely representable measures.
#[derive(Debug, Parser)]
#[command(name = "condmeasure", version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// Check the five regularity conditions of a joint and the Bayes
    /// validity gate of a likelihood model.
    Check {
        model: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Mutual information of the joint in nats, or `infinite`.
    Mi { model: PathBuf },
    /// Posterior of a likelihood model after one observation.
    Bayes {
        model: PathBuf,
        /// Observed point: an atom label or `@<rational>`.
        #[arg(long)]
        observe: String,
        /// Write the posterior here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Node-wise and global domination of a Bayesian network.
    NetCheck {
        model: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Run the experiment of a model file against a true parameter; CSV.
    Simulate {
        model: PathBuf,
        #[arg(long)]
        theta: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Overrides the configured trial limit.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Worked examples.
    Demo {
        #[command(subcommand)]
        which: Demo,
    },
    /// Equivalence suite of the five conditions over random joints.
    Verify {
        #[arg(long, default_value_t = 1000)]
        draws: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Worker threads; default: available parallelism.
        #[arg(long)]
        workers: Option<usize>,
        /// Where to write the certificate on disagreement.
        #[arg(long, default_value = "verify-certificate.json")]
        certificate: PathBuf,
    },
    /// Local session service for interactive experiments.
    Serve {
        #[arg(long, default_value_t = 8400)]
        port: u16,
        /// Address to bind; loopback unless changed.
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        bind: IpAddr,
        /// Session records directory.
        #[arg(long, default_value = "sessions")]
        data_dir: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum Demo {
    /// X = Y uniform on [0, 1): every condition fails, information is infinite.
    Example1 {
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// The binary digits of a uniform X, observed one at a time.
    BinaryDigits {
        #[arg(long, default_value_t = 16)]
        t: usize,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
}

fn run(cli: Cli) -> CliResult<String> {
    match cli.verb {
        Verb::Check { model, format } => commands::check(&commands::load(&model)?, format),
        Verb::Mi { model } => commands::mi(&commands::load(&model)?),
        Verb::Bayes { model, observe, out } => {
            let text = commands::bayes(&commands::load(&model)?, &observe)?;
            match out {
                Some(path) => {
                    std::fs::write(&path, &text)
                        .map_err(|e| CliError::validation("io", format!("{}: {e}", path.display())))?;
                    Ok(format!("posterior written to {}\n", path.display()))
                }
                None => Ok(text),
            }
        }
        Verb::NetCheck { model, format } => commands::net_check(&commands::load(&model)?, format),
        Verb::Simulate {
            model,
            theta,
            seed,
            trials,
        } => commands::simulate(&commands::load(&model)?, &theta, seed, trials),
        Verb::Demo { which } => match which {
            Demo::Example1 { format } => commands::demo_example1(format),
            Demo::BinaryDigits { t, format } => commands::demo_binary_digits(t, format),
        },
        Verb::Verify {
            draws,
            seed,
            workers,
            certificate,
        } => {
            let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            commands::run_verify(draws, seed, workers, &certificate).map(|(out, _)| out)
        }
        Verb::Serve { port, bind, data_dir } => {
            let store = SessionStore::open(&data_dir).map_err(|e| CliError::Internal(e.to_string()))?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
            rt.block_on(condmeasure_cli::service::serve(SocketAddr::new(bind, port), store))
                .map_err(|e| CliError::Internal(e.to_string()))?;
            Ok(String::new())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let err = CliError::validation("usage", e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    let result = std::panic::catch_unwind(|| run(cli)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(CliError::Internal(msg))
    });
    match result {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            if let CliError::Certificate(msg) = &e {
                println!("{msg}");
            }
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
