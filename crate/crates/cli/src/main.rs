use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use colnest_core::bench::{BenchOptions, Engine, Prepared};
use colnest_core::codec::{decode_all, random_access_at, validate, ColumnStore, Encoder, PathStep, Value};
use colnest_core::exec::{event_count, run_columnar, run_columnar_parallel, run_materialized, RunResult};
use colnest_core::generate::{event_schema, generate, GeneratorConfig};
use colnest_core::interchange::{parse_items, to_json};
use colnest_core::queries::QueryId;
use colnest_core::query::{parse, Program};
use colnest_core::schema::Schema;
use colnest_core::storage;
use colnest_core::transform::{compile, explain, CompileOptions};

#[derive(Parser)]
#[command(name = "colnest", version, about = "Columnar storage and compiled queries for nested records")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a JSON array of values of SCHEMA into a store directory.
    Encode {
        values: PathBuf,
        schema: String,
        out: PathBuf,
        #[arg(long, default_value = "events")]
        prefix: String,
    },
    /// Print stored values as JSON, or one object reached by --path.
    Decode {
        dir: PathBuf,
        /// Dot-separated steps from the top-level list, e.g. `0.muons.1.pt`;
        /// `~` steps into whichever union alternative is stored.
        #[arg(long)]
        path: Option<String>,
        #[arg(long, default_value = "events")]
        prefix: String,
    },
    /// Check the structural invariants of every stored prefix.
    Validate { dir: PathBuf },
    /// Run a query and print what it emits, one value per line.
    Run {
        query: PathBuf,
        dir: PathBuf,
        #[arg(long, default_value = "columnar", value_parser = ["columnar", "materialized"])]
        engine: String,
        #[arg(long)]
        no_range_checks: bool,
        #[arg(long)]
        no_optimize: bool,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long, default_value = "events")]
        prefix: String,
    },
    /// Print the compiled plan of a query for events of SCHEMA.
    Explain {
        query: PathBuf,
        schema: String,
        #[arg(long)]
        no_range_checks: bool,
        #[arg(long)]
        no_optimize: bool,
        #[arg(long, default_value = "events")]
        prefix: String,
    },
    /// Write a store of synthetic muon events.
    Generate {
        #[arg(long)]
        events: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        dir: PathBuf,
    },
    /// Time one benchmark query on one engine.
    Bench {
        #[arg(long)]
        query: QueryId,
        #[arg(long, default_value = "columnar")]
        engine: Engine,
        dir: PathBuf,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load(dir: &Path) -> Result<ColumnStore> {
    storage::load(dir).with_context(|| format!("loading {}", dir.display()))
}

fn stored_schema<'s>(store: &'s ColumnStore, prefix: &str) -> Result<&'s Schema> {
    store.schema(prefix).ok_or_else(|| anyhow!("the store has no prefix {prefix:?}"))
}

fn event_schema_of(store: &ColumnStore, prefix: &str) -> Result<Schema> {
    match stored_schema(store, prefix)? {
        Schema::List(item) => Ok((**item).clone()),
        other => bail!("prefix {prefix:?} holds {other}, not a list of events"),
    }
}

fn read_program(path: &Path) -> Result<Program> {
    let src = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&src).map_err(|e| anyhow!("{}:{}: syntax error: {}", path.display(), e.pos, e.message))
}

fn options(no_range_checks: bool, no_optimize: bool) -> CompileOptions {
    let options = if no_range_checks { CompileOptions::unchecked() } else { CompileOptions::default() };
    if no_optimize {
        options.without_optimizations()
    } else {
        options
    }
}

fn parse_path(text: &str) -> Vec<PathStep> {
    text.split('.')
        .filter(|s| !s.is_empty())
        .map(|s| match s.parse::<i64>() {
            Ok(i) => PathStep::Index(i),
            Err(_) if s == "~" => PathStep::Resolve,
            Err(_) => PathStep::Field(s.to_string()),
        })
        .collect()
}

fn dispatch(command: Command) -> Result<ExitCode> {
    let mut out = io::stdout().lock();
    match command {
        Command::Encode { values, schema, out: dir, prefix } => {
            let item: Schema = schema.parse().map_err(|e| anyhow!("schema: {e}"))?;
            let text = fs::read_to_string(&values).with_context(|| format!("reading {}", values.display()))?;
            let items = parse_items(&text, &item).with_context(|| format!("reading {}", values.display()))?;
            let n = items.len();
            let mut store = ColumnStore::new();
            Encoder::new(&mut store, &Schema::list(item), &prefix)?.push(&Value::List(items))?;
            storage::save(&store, &dir)?;
            writeln!(out, "encoded {n} values into {} columns in {}", store.len(), dir.display())?;
        }
        Command::Decode { dir, path, prefix } => {
            let store = load(&dir)?;
            let schema = stored_schema(&store, &prefix)?;
            let json = match path {
                None => {
                    let values = decode_all(&store, schema, &prefix)?;
                    to_json(values.first().ok_or_else(|| anyhow!("nothing stored under {prefix:?}"))?)
                }
                Some(path) => to_json(&random_access_at(&store, schema, &prefix, 0, &parse_path(&path))?),
            };
            writeln!(out, "{}", serde_json::to_string_pretty(&json)?)?;
        }
        Command::Validate { dir } => {
            let store = load(&dir)?;
            let mut ok = true;
            for (prefix, schema) in store.prefixes() {
                let report = validate(&store, schema, prefix);
                ok &= report.is_ok();
                writeln!(out, "{prefix}: {}", report.to_string().trim_end())?;
            }
            if !ok {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Run { query, dir, engine, no_range_checks, no_optimize, threads, prefix } => {
            let program = read_program(&query)?;
            let store = load(&dir)?;
            let schema = event_schema_of(&store, &prefix)?;
            let n = event_count(&store, &prefix)?;
            let result: RunResult = if engine == "materialized" {
                run_materialized(&program, &store, &schema, &prefix, 0..n)
            } else {
                let plan = compile(&program, &schema, &prefix, options(no_range_checks, no_optimize))?;
                if threads > 1 {
                    run_columnar_parallel(&plan, &store, 0..n, threads)
                } else {
                    run_columnar(&plan, &store, 0..n)
                }
            };
            match result {
                Ok((sink, _)) => out.write_all(sink.to_text().as_bytes())?,
                Err(failure) => {
                    out.write_all(failure.partial.to_text().as_bytes())?;
                    out.flush()?;
                    eprintln!("error: {failure}");
                    return Ok(ExitCode::FAILURE);
                }
            }
        }
        Command::Explain { query, schema, no_range_checks, no_optimize, prefix } => {
            let program = read_program(&query)?;
            let schema: Schema = schema.parse().map_err(|e| anyhow!("schema: {e}"))?;
            let plan = compile(&program, &schema, &prefix, options(no_range_checks, no_optimize))?;
            write!(out, "{}", explain(&plan))?;
        }
        Command::Generate { events, seed, dir } => {
            let store = generate(&GeneratorConfig::new(events, seed));
            storage::save(&store, &dir)?;
            writeln!(out, "generated {events} events (seed {seed}) in {}", dir.display())?;
        }
        Command::Bench { query, engine, dir, repeats } => {
            let store = load(&dir)?;
            let stored = event_schema_of(&store, colnest_core::generate::PREFIX)?;
            if stored.without_nicknames() != event_schema() {
                bail!("benchmarks need events of {}, the store holds {stored}", event_schema());
            }
            let prepared = Prepared::new(query)?;
            let options = BenchOptions { repeats, count_reads: true, cross_check: true };
            let report = prepared.bench(engine, &store, options)?;
            writeln!(out, "query      {query}")?;
            writeln!(out, "engine     {engine}")?;
            writeln!(out, "events     {}", report.events)?;
            writeln!(out, "emitted    {}", report.emitted)?;
            writeln!(out, "best wall  {:.3?}", report.wall)?;
            writeln!(out, "rate       {:.3} MHz", report.events_per_second() / 1e6)?;
            writeln!(out, "reads per column:")?;
            for (column, n) in report.read_counts.unwrap_or_default() {
                writeln!(out, "  {n:>12}  {column}")?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
