use std::io::Read;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use shapely::check::{check_program, records, render_text};
use shapely::eval::{run_function, EvalOptions, Literal};
use shapely::infer::{
    closures_with_inhabitants, infer_program, AttemptOutcome, InferError, InferenceConfig, InferenceReport,
};
use shapely::syntax::{check_scopes, desugar, print_program, validate_restriction, Program};
use shapely::parse_program;

const OK: u8 = 0;
const REJECTED: u8 = 1;
const STATIC_ERROR: u8 = 2;
const INFERENCE_FAILED: u8 = 3;
const RUNTIME_ERROR: u8 = 4;

#[derive(Parser)]
#[command(name = "shapely", version, about = "Size-aware type checking and inference for list programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Highest total degree tried by inference.
    #[arg(long, global = true, default_value_t = 6)]
    max_degree: u32,

    /// Evaluation step budget per test run.
    #[arg(long, global = true, default_value_t = 10_000_000, value_parser = clap::value_parser!(u64).range(1..))]
    budget: u64,

    /// First element value of generated test inputs.
    #[arg(long, global = true, default_value_t = 42)]
    seed: i64,

    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    /// Check benign sharing and heap monotonicity during evaluation.
    #[arg(long, global = true)]
    debug_assert: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    /// One JSON object per line.
    Structured,
}

#[derive(Subcommand)]
enum Command {
    /// Check every function against its size annotation.
    Check { path: String },
    /// Infer size-aware types for every top-level function.
    Infer {
        path: String,
        /// Print the program with inferred annotations instead of a type list.
        #[arg(long)]
        annotate: bool,
    },
    /// Evaluate a function on literal arguments such as "[1,2,3]".
    Eval {
        path: String,
        function: String,
        args: Vec<String>,
    },
    /// Print the parsed program, or its core form with --core.
    Ast {
        path: String,
        #[arg(long)]
        core: bool,
    },
}

fn read_source(path: &str) -> Result<String, String> {
    if path == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(|e| format!("stdin: {e}"))?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))
    }
}

fn emit(format: Format, text: impl FnOnce() -> String, record: impl FnOnce() -> serde_json::Value) {
    match format {
        Format::Text => print!("{}", text()),
        Format::Structured => println!("{}", record()),
    }
}

fn fail(format: Format, code: u8, kind: &str, message: String) -> ExitCode {
    match format {
        Format::Text => eprintln!("{kind}: {message}"),
        Format::Structured => println!("{}", json!({"kind": kind, "message": message})),
    }
    ExitCode::from(code)
}

fn load(path: &str, format: Format) -> Result<Program, ExitCode> {
    let src = read_source(path).map_err(|e| fail(format, STATIC_ERROR, "io", e))?;
    parse_program(&src).map_err(|e| fail(format, STATIC_ERROR, "syntax", e.to_string()))
}

/// Scope and restriction errors, which every command reports the same way.
fn validate(p: &Program, format: Format) -> Result<(), ExitCode> {
    let mut msgs: Vec<String> = check_scopes(p).iter().map(|e| format!("scope: {e}")).collect();
    if msgs.is_empty() {
        msgs.extend(
            validate_restriction(&desugar(p))
                .iter()
                .map(|v| format!("RestrictionViolation: {v}")),
        );
    }
    if msgs.is_empty() {
        return Ok(());
    }
    for m in &msgs {
        match format {
            Format::Text => eprintln!("error: {m}"),
            Format::Structured => println!("{}", json!({"kind": "static", "message": m})),
        }
    }
    Err(ExitCode::from(STATIC_ERROR))
}

fn cmd_check(cli: &Cli, path: &str) -> ExitCode {
    let p = match load(path, cli.format) {
        Ok(p) => p,
        Err(c) => return c,
    };
    let report = check_program(&p);
    match cli.format {
        Format::Text => print!("{}", render_text(&report)),
        Format::Structured => {
            for e in &report.errors {
                println!("{}", json!({"kind": "error", "message": e.to_string()}));
            }
            for f in report.all_functions() {
                println!(
                    "{}",
                    json!({
                        "kind": "function",
                        "function": f.function,
                        "type": f.ftype.as_ref().map(|t| t.to_string()),
                        "accepted": f.accepted(),
                        "errors": f.errors.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
                        "warnings": f.warnings,
                    })
                );
            }
            for r in records(&report) {
                let mut v = serde_json::to_value(&r).expect("records serialize");
                v["kind"] = json!("obligation");
                println!("{v}");
            }
        }
    }
    if report.has_static_errors() {
        ExitCode::from(STATIC_ERROR)
    } else if report.accepted() {
        ExitCode::from(OK)
    } else {
        ExitCode::from(REJECTED)
    }
}

fn describe_failure(rep: &InferenceReport) -> String {
    let mut out = format!("  {}\n", rep.diagnosis());
    for a in &rep.attempts {
        let cand = a.candidate.as_ref().map(|t| t.to_string()).unwrap_or_else(|| "-".into());
        let outcome = match &a.outcome {
            AttemptOutcome::Accepted => "accepted".to_string(),
            AttemptOutcome::Rejected(why) => format!("rejected ({})", why.first().cloned().unwrap_or_default()),
            AttemptOutcome::Failed(m) => format!("failed ({m})"),
        };
        out.push_str(&format!("  degree {}: {cand}: {outcome}\n", a.degree));
    }
    out
}

fn cmd_infer(cli: &Cli, path: &str, annotate: bool) -> ExitCode {
    let mut p = match load(path, cli.format) {
        Ok(p) => p,
        Err(c) => return c,
    };
    if let Err(c) = validate(&p, cli.format) {
        return c;
    }
    let cfg = InferenceConfig {
        max_degree: cli.max_degree,
        budget: cli.budget,
        seed: cli.seed,
        debug_assertions: cli.debug_assert,
        ..InferenceConfig::default()
    };
    let inference = match infer_program(&p, &cfg) {
        Ok(r) => r,
        Err(e) => return fail(cli.format, STATIC_ERROR, "static", e.to_string()),
    };
    let mut code = OK;
    for (name, r) in &inference.results {
        match r {
            Ok(rep) => {
                let t = rep.result.as_ref().expect("successful inference has a type");
                if !annotate {
                    emit(
                        cli.format,
                        || format!("{name} : {t}\n"),
                        || {
                            json!({"kind": "inferred", "function": name, "type": t.to_string(),
                                   "degree": rep.attempts.last().map(|a| a.degree), "evaluations": rep.evaluations})
                        },
                    );
                }
            }
            Err(e) => {
                code = code.max(match e {
                    InferError::Static { .. } | InferError::UnsupportedShape(_) => STATIC_ERROR,
                    _ => INFERENCE_FAILED,
                });
                let detail = match e {
                    InferError::DegreeCapExceeded(rep) => describe_failure(rep),
                    _ => String::new(),
                };
                let kind = error_kind(e);
                match cli.format {
                    Format::Text => eprint!("{name}: {kind}: {e}\n{detail}"),
                    Format::Structured => println!(
                        "{}",
                        json!({"kind": "failure", "function": name, "error": kind, "message": e.to_string()})
                    ),
                }
            }
        }
    }
    if annotate {
        for def in &mut p.functions {
            if let Some(t) = inference.inferred(&def.name) {
                def.annotation = Some(t.clone());
            }
        }
        print!("{}", print_program(&p));
    }
    ExitCode::from(code)
}

fn error_kind(e: &InferError) -> &'static str {
    match e {
        InferError::NodeSearchExhausted(_) => "NodeSearchExhausted",
        InferError::SingularSystem => "SingularSystem",
        InferError::NonShapelyObservation { .. } => "NonShapelyObservation",
        InferError::BudgetExhausted { .. } => "BudgetExhausted",
        InferError::Runtime { .. } => "RuntimeError",
        InferError::IncompleteMeasurement { .. } => "IncompleteMeasurement",
        InferError::DegreeCapExceeded(_) => "DegreeCapExceeded",
        InferError::Static { .. } => "StaticError",
        InferError::UnsupportedShape(_) => "UnsupportedShape",
    }
}

fn cmd_eval(cli: &Cli, path: &str, function: &str, args: &[String]) -> ExitCode {
    let p = match load(path, cli.format) {
        Ok(p) => p,
        Err(c) => return c,
    };
    if let Err(c) = validate(&p, cli.format) {
        return c;
    }
    let core = desugar(&p);
    let Some(arity) = core
        .functions
        .iter()
        .find(|f| f.name == function)
        .map(|f| f.params.len())
        .or_else(|| core.externs.iter().find(|e| e.name == function).map(|e| e.params.len()))
    else {
        return fail(cli.format, STATIC_ERROR, "unknown", format!("no function `{function}`"));
    };
    if arity != args.len() {
        return fail(
            cli.format,
            STATIC_ERROR,
            "arity",
            format!("`{function}` takes {arity} arguments, {} given", args.len()),
        );
    }
    let mut lits = Vec::new();
    for a in args {
        match Literal::parse(a) {
            Ok(l) => lits.push(l),
            Err(e) => return fail(cli.format, STATIC_ERROR, "literal", format!("{a}: {e}")),
        }
    }
    let closures = match closures_with_inhabitants(&core) {
        Ok(c) => c,
        Err(e) => return fail(cli.format, STATIC_ERROR, "extern", e.to_string()),
    };
    let opts = EvalOptions {
        budget: cli.budget,
        debug_assertions: cli.debug_assert,
        ..EvalOptions::default()
    };
    match run_function(&closures, function, &lits, opts) {
        Ok((v, heap)) => {
            let text = Literal::read(&heap, v).map(|l| l.to_string()).unwrap_or_else(|| format!("{v:?}"));
            emit(cli.format, || format!("{text}\n"), || json!({"kind": "value", "value": text}));
            ExitCode::from(OK)
        }
        Err(e) => fail(cli.format, RUNTIME_ERROR, "runtime", e.to_string()),
    }
}

fn cmd_ast(cli: &Cli, path: &str, core: bool) -> ExitCode {
    let p = match load(path, cli.format) {
        Ok(p) => p,
        Err(c) => return c,
    };
    let p = if core {
        if let Err(c) = validate(&p, cli.format) {
            return c;
        }
        desugar(&p)
    } else {
        p
    };
    let text = print_program(&p);
    emit(cli.format, || text.clone(), || json!({"kind": "program", "source": text}));
    ExitCode::from(OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Check { path } => cmd_check(&cli, path),
        Command::Infer { path, annotate } => cmd_infer(&cli, path, *annotate),
        Command::Eval { path, function, args } => cmd_eval(&cli, path, function, args),
        Command::Ast { path, core } => cmd_ast(&cli, path, *core),
    }
}
