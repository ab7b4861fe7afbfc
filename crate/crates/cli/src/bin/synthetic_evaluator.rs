//! The built-in synthetic landscape served over the evaluator protocol, for
//! exercising the external-evaluator path. Fault modes inject protocol
//! failures.

use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use altnas::evaluator::{serve, SyntheticLandscape};
use altnas::search_space::{parse_space, SpaceHash};
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Ok,
    /// Answer the handshake with a different space hash.
    BadHash,
    /// Answer the handshake with a line that is not JSON.
    Garbage,
    /// Report fitness 1.5.
    OutOfRange,
    /// Exit at the first eval request.
    ExitEarly,
}

#[derive(Debug, Parser)]
#[command(about = "Synthetic evaluator speaking evaluator protocol version 1 on stdin/stdout")]
struct Args {
    #[arg(long)]
    space: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Mode::Ok)]
    mode: Mode,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let space = match std::fs::read_to_string(&args.space)
        .map_err(|e| e.to_string())
        .and_then(|t| parse_space(&t).map_err(|e| e.to_string()))
    {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{}: {e}", args.space.display());
            return ExitCode::from(1);
        }
    };
    let landscape = SyntheticLandscape::new(&space, args.seed);
    let mut stdin = io::stdin().lock();
    let mut stdout = io::stdout().lock();

    if args.mode == Mode::Garbage {
        let mut line = String::new();
        let _ = stdin.read_line(&mut line);
        let _ = writeln!(stdout, "this is not json");
        let _ = stdout.flush();
        return ExitCode::SUCCESS;
    }
    let hash = match args.mode {
        Mode::BadHash => SpaceHash(space.space_hash().0 ^ 1),
        _ => space.space_hash(),
    };
    let mode = args.mode;
    let result = serve(stdin, &mut stdout, hash, |genome| {
        space.validate(genome).map_err(|e| e.to_string())?;
        match mode {
            Mode::OutOfRange => Ok(1.5),
            Mode::ExitEarly => std::process::exit(0),
            _ => Ok(landscape.fitness(&space, genome)),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(3)
        }
    }
}
