mod args;
mod commands;
mod report;

use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use args::Cli;
use commands::{run, CliError, Context, EXIT_USAGE};
use report::{envelope_json, write_artifact, RunManifest};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let global = &cli.global;
    if let Some(n) = global.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size the worker pool: {e}")))?;
    }
    let started = Instant::now();
    let report = run(&cli.command, &Context { global })?;
    let mut params = report.params.clone();
    if let Some(obj) = params.as_object_mut() {
        obj.insert("global".into(), serde_json::to_value(global).expect("flags serialize"));
    }
    let manifest = RunManifest {
        command: cli.command.name().to_string(),
        argv: std::env::args().collect(),
        params,
        seed: global.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_secs: started.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
    };
    if let Some(path) = &global.out {
        write_artifact(path, global.csv, &manifest, &report)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let written = if global.out.is_some() {
        out.write_all(report.text.as_bytes())
    } else if global.json {
        writeln!(out, "{}", envelope_json(&manifest, &report.result))
    } else if global.csv {
        report.table.write_csv(&mut out).map_err(std::io::Error::other)
    } else {
        out.write_all(report.text.as_bytes())
    };
    // a closed pipe is not worth a failure exit
    if let Err(e) = written {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            eprintln!("error: cannot write output: {e}");
            return Ok(1);
        }
    }
    Ok(report.exit)
}
