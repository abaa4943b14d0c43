use std::io::{self, BufRead, IsTerminal, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};

use llib_cli::{format_file, parse_binding, repl_session, run_file, RunOptions, EXIT_INPUT};
use llib_core::Repl;
use llib_service::Config;

#[derive(Parser)]
#[command(name = "llib", version, about = "Datalog programs and recursive library functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a program and print its query result
    Run {
        file: PathBuf,
        /// Bind a declared relation to a CSV file
        #[arg(long = "bind", value_name = "NAME=PATH", value_parser = parse_binding)]
        bindings: Vec<(String, PathBuf)>,
        /// Write the result as CSV instead of printing it
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "max-iters")]
        max_iterations: Option<usize>,
        #[arg(long)]
        max_rows: Option<usize>,
        /// Leave wall-clock times out of the output
        #[arg(long)]
        deterministic: bool,
    },
    /// Interactive session
    Repl {
        #[arg(long = "max-iters")]
        max_iterations: Option<usize>,
        #[arg(long)]
        deterministic: bool,
    },
    /// Start the HTTP service
    Serve {
        /// Defaults to LLIB_PORT or 8080
        #[arg(long)]
        port: Option<u16>,
        /// Defaults to LLIB_TIMEOUT_MS or 10000
        #[arg(long)]
        timeout_ms: Option<u64>,
        /// Defaults to LLIB_MAX_ROWS or 1000000
        #[arg(long)]
        max_rows: Option<usize>,
        #[arg(long)]
        max_input_rows: Option<usize>,
        /// Directory with the built playground bundle
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Allow cross-origin requests (local development)
        #[arg(long)]
        cors: bool,
    },
    /// Print a program in canonical layout
    Fmt {
        file: PathBuf,
        /// Fail if the file is not already formatted
        #[arg(long)]
        check: bool,
    },
    /// List library functions
    Funcs {
        /// Full reference page in Markdown
        #[arg(long)]
        markdown: bool,
    },
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn repl(max_iterations: Option<usize>, deterministic: bool) -> ExitCode {
    let mut repl = Repl::new(repl_session(max_iterations));
    repl.deterministic = deterministic;
    let interactive = io::stdin().is_terminal();
    let mut out = io::stdout();
    if interactive {
        let _ = writeln!(out, "llib repl; .help for commands");
    }
    let stdin = io::stdin();
    let mut lines = stdin.lock().lines();
    loop {
        if interactive {
            let _ = write!(out, "{}", repl.prompt());
            let _ = out.flush();
        }
        let Some(Ok(line)) = lines.next() else { break };
        let reply = repl.handle_line(&line);
        if !reply.output.is_empty() {
            let _ = writeln!(out, "{}", reply.output);
        }
        if reply.quit {
            break;
        }
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            file,
            bindings,
            out,
            max_iterations,
            max_rows,
            deterministic,
        } => {
            let opts = RunOptions {
                program: file,
                bindings,
                out,
                max_iterations,
                max_rows,
                deterministic,
            };
            code(run_file(&opts, &mut io::stdout(), &mut io::stderr()))
        }
        Command::Repl {
            max_iterations,
            deterministic,
        } => repl(max_iterations, deterministic),
        Command::Serve {
            port,
            timeout_ms,
            max_rows,
            max_input_rows,
            static_dir,
            cors,
        } => {
            let mut config = match Config::from_env() {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return code(EXIT_INPUT);
                }
            };
            if let Some(p) = port {
                config.port = p;
            }
            if let Some(ms) = timeout_ms {
                config.timeout = Duration::from_millis(ms);
            }
            if let Some(n) = max_rows {
                config.max_rows = n;
            }
            if let Some(n) = max_input_rows {
                config.max_input_rows = n;
            }
            config.static_dir = static_dir;
            config.cors = cors;
            let rt = match tokio::runtime::Runtime::new() {
                Ok(rt) => rt,
                Err(e) => {
                    eprintln!("error: {e}");
                    return code(1);
                }
            };
            match rt.block_on(llib_service::serve(config)) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    code(1)
                }
            }
        }
        Command::Fmt { file, check } => match format_file(&file) {
            Ok(formatted) => {
                if check {
                    let original = std::fs::read_to_string(&file).unwrap_or_default();
                    if original.trim_end() != formatted {
                        eprintln!("{} is not formatted", file.display());
                        return code(1);
                    }
                } else {
                    println!("{formatted}");
                }
                ExitCode::SUCCESS
            }
            Err(msg) => {
                eprintln!("{msg}");
                code(EXIT_INPUT)
            }
        },
        Command::Funcs { markdown } => {
            let catalog = llib_core::Catalog::new();
            if markdown {
                print!("{}", catalog.reference_markdown());
            } else {
                for f in catalog.describe() {
                    println!("{:<20} {}", f.name, f.doc);
                }
            }
            ExitCode::SUCCESS
        }
    }
}
