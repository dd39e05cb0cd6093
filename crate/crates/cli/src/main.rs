use std::fs;
use std::io::BufWriter;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use hyperloop::compiler::{allocate_layout, compile, CompiledProgram, Options, Output, Params};
use hyperloop::interp::run_interpreter;
use hyperloop::oracle::{
    enumerate_hypergraphs, oracle_helly_berge, random_hypergraph, random_hypergraph_sized,
};
use hyperloop::verify::check;
use hyperloop::{AlgorithmKind, Error, Hypergraph};

/// Exit codes.
const EXIT_OTHER: u8 = 1;
const EXIT_IO: u8 = 3;
const EXIT_PARSE: u8 = 4;
const EXIT_CAPACITY: u8 = 5;
const EXIT_NON_TERMINATION: u8 = 6;
const EXIT_MISMATCH: u8 = 7;

#[derive(Parser)]
#[command(
    name = "hyperloop",
    version,
    about = "Compile hypergraph algorithms to looped transformers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a hypergraph instance to a program file.
    Compile(CompileArgs),
    /// Execute a compiled program and print the decoded result.
    Run(RunArgs),
    /// Check transformer traces against the reference interpreter and oracles.
    Verify(VerifyArgs),
    /// Time compiled programs across instance sizes.
    Bench(BenchArgs),
}

#[derive(Args)]
struct Common {
    /// Number of distinguishable positions.
    #[arg(long, env = "HYPERLOOP_N_MAX", default_value_t = hyperloop::positional::DEFAULT_N_MAX)]
    n_max: usize,
    /// Pass budget (defaults to the algorithm's bound).
    #[arg(long)]
    max_passes: Option<usize>,
}

#[derive(Args)]
struct CompileArgs {
    #[arg(long)]
    algo: AlgorithmKind,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Dijkstra source vertex.
    #[arg(long)]
    start: Option<usize>,
    /// Current node of a standalone hyperedge scan.
    #[arg(long)]
    node: Option<usize>,
    /// Comma-separated values for a standalone minimum search.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<u64>>,
    /// Row count (defaults to max(n_v, n_e) + 1).
    #[arg(long)]
    k: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    program: PathBuf,
    #[arg(long)]
    max_passes: Option<usize>,
    /// Write one JSON object per pass to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    algo: AlgorithmKind,
    /// Seed range `a..b` (end exclusive).
    #[arg(long, value_parser = parse_range, default_value = "0..100")]
    seeds: Range<u64>,
    /// Check every hypergraph with n_v <= 4 and n_e <= 3 instead of seeds.
    #[arg(long)]
    exhaustive: bool,
    #[arg(long, default_value_t = 12)]
    n_v_max: usize,
    #[arg(long, default_value_t = 12)]
    n_e_max: usize,
    #[arg(long, default_value_t = 9)]
    w_max: u64,
    /// Zero the MLP output of this layer before running.
    #[arg(long)]
    corrupt_layer: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct BenchArgs {
    /// Algorithms to time (all by default).
    #[arg(long)]
    algo: Option<AlgorithmKind>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 9)]
    w_max: u64,
    #[command(flatten)]
    common: Common,
}

fn parse_range(s: &str) -> Result<Range<u64>, String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected a..b, got '{s}'"))?;
    let a: u64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if b < a {
        return Err(format!("empty range {s}"));
    }
    Ok(a..b)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::Parse(_) | Error::Json(_) | Error::InvalidHypergraph(_) => EXIT_PARSE,
        Error::Capacity { .. } | Error::LayoutTooSmall { .. } => EXIT_CAPACITY,
        Error::NonTermination { .. } => EXIT_NON_TERMINATION,
        _ => EXIT_OTHER,
    }
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn options(common: &Common, k: Option<usize>) -> Options {
    Options {
        n_max: common.n_max,
        k,
        max_passes: common.max_passes,
    }
}

fn describe(p: &CompiledProgram) -> String {
    let heads: Vec<String> = p
        .program
        .layers
        .iter()
        .map(|l| l.heads.len().to_string())
        .collect();
    format!(
        "algorithm={} layers={} heads=[{}] d={} K={} omega={} n_max={}",
        p.kind,
        p.layer_count(),
        heads.join(","),
        p.layout.d,
        p.params.k,
        p.params.omega,
        p.params.n_max
    )
}

fn cmd_compile(a: CompileArgs) -> Result<u8, Error> {
    let h = Hypergraph::from_json(&read(&a.input)?)?;
    let params = Params {
        start: a.start,
        node: a.node,
        values: a.values,
    };
    let p = compile(a.algo, &h, &params, &options(&a.common, a.k))?;
    let w = BufWriter::new(fs::File::create(&a.out)?);
    serde_json::to_writer(w, &p)?;
    println!("{}", describe(&p));
    Ok(0)
}

fn cmd_run(a: RunArgs) -> Result<u8, Error> {
    let mut p: CompiledProgram =
        serde_json::from_str(&read(&a.program)?).map_err(|e| Error::Parse(e.to_string()))?;
    if let Some(m) = a.max_passes {
        p.program.max_passes = m;
    }
    let run = p.run(a.trace.is_some())?;
    if let (Some(path), Some(trace)) = (&a.trace, &run.trace) {
        trace.write_jsonl(BufWriter::new(fs::File::create(path)?))?;
    }
    println!("{}", serde_json::to_string(&run.output)?);
    println!("passes={}", run.passes);
    Ok(0)
}

fn cmd_verify(a: VerifyArgs) -> Result<u8, Error> {
    let opts = options(&a.common, None);
    let instances: Vec<(String, Hypergraph)> = if a.exhaustive {
        enumerate_hypergraphs(4, 3)
            .into_iter()
            .enumerate()
            .map(|(i, h)| (format!("#{i}"), h))
            .collect()
    } else {
        a.seeds
            .clone()
            .map(|s| {
                (
                    format!("seed {s}"),
                    random_hypergraph(s, a.n_v_max, a.n_e_max, a.w_max),
                )
            })
            .collect()
    };
    if a.exhaustive {
        println!(
            "enumerated {} hypergraphs (n_v <= 4, n_e <= 3)",
            instances.len()
        );
    }
    let params = Params {
        start: Some(1),
        ..Params::default()
    };
    let total = instances.len();
    let (mut trace_ok, mut oracle_ok, mut failed) = (0, 0, 0);
    for (name, h) in &instances {
        let c = match check(a.algo, h, &params, &opts, a.corrupt_layer) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("{name}: {e}");
                failed += 1;
                continue;
            }
        };
        if c.trace.is_empty() {
            trace_ok += 1;
        } else {
            eprintln!("{name}: {}", c.trace);
        }
        if c.oracle_equal {
            oracle_ok += 1;
        } else if a.algo != AlgorithmKind::Helly {
            eprintln!(
                "{name}: output {} differs from oracle",
                serde_json::to_string(&c.output)?
            );
        }
        if !c.passed() {
            failed += 1;
        }
    }
    if a.algo == AlgorithmKind::Helly {
        println!("{trace_ok}/{total} trace-equal, {oracle_ok}/{total} agree with the classical Helly property (reported only)");
    } else {
        println!("{trace_ok}/{total} trace-equal, {oracle_ok}/{total} oracle-equal");
    }
    Ok(if failed == 0 { 0 } else { EXIT_MISMATCH })
}

fn cmd_bench(a: BenchArgs) -> Result<u8, Error> {
    let kinds: Vec<AlgorithmKind> = match a.algo {
        Some(k) => vec![k],
        None => AlgorithmKind::ALL.to_vec(),
    };
    println!(
        "{:<16} {:>4} {:>4} {:>4} {:>4} {:>6} {:>8} {:>8} {:>10}",
        "algorithm", "n_v", "n_e", "K", "d", "layers", "passes", "interp", "ms"
    );
    for kind in kinds {
        for &n in &a.sizes {
            let h = random_hypergraph_sized(a.seed, n, n, a.w_max);
            let params = Params {
                start: Some(1),
                ..Params::default()
            };
            let p = compile(kind, &h, &params, &options(&a.common, None))?;
            let t = Instant::now();
            let run = p.run(false)?;
            let ms = t.elapsed().as_secs_f64() * 1e3;
            let reference = run_interpreter(kind, &h, &params, None, a.common.max_passes)?;
            println!(
                "{:<16} {:>4} {:>4} {:>4} {:>4} {:>6} {:>8} {:>8} {:>10.2}",
                kind.name(),
                h.n_v(),
                h.n_e(),
                p.params.k,
                p.layout.d,
                p.layer_count(),
                run.passes,
                reference.passes,
                ms
            );
            if kind == AlgorithmKind::Helly && n <= 12 {
                if let (Output::Helly { helly }, Ok(berge)) = (&run.output, oracle_helly_berge(&h))
                {
                    if *helly != berge {
                        println!(
                            "  note: literal result {helly}, classical Helly property {berge}"
                        );
                    }
                }
            }
        }
    }
    let widths: Vec<String> = AlgorithmKind::ALL
        .iter()
        .map(|k| format!("{}={}", k.name(), allocate_layout(*k).d))
        .collect();
    println!("widths: {}", widths.join(" "));
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Compile(a) => cmd_compile(a),
        Command::Run(a) => cmd_run(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
