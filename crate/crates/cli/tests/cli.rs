use std::path::Path;
use std::process::{Command, Output};

const EXAMPLE: &str = r#"{"num_vertices":3,"edges":[{"weight":2,"vertices":[1,2]},{"weight":5,"vertices":[2,3]},{"weight":9,"vertices":[1,3]}]}"#;

fn hyperloop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperloop"))
        .args(args)
        .env_remove("HYPERLOOP_N_MAX")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_example(dir: &Path) -> String {
    let p = dir.join("h.json");
    std::fs::write(&p, EXAMPLE).unwrap();
    p.to_str().unwrap().to_owned()
}

fn compile(dir: &Path, algo: &str, extra: &[&str]) -> (Output, String) {
    let input = write_example(dir);
    let out = dir
        .join(format!("{algo}.json"))
        .to_str()
        .unwrap()
        .to_owned();
    let mut args = vec!["compile", "--algo", algo, "--input", &input, "--out", &out];
    args.extend_from_slice(extra);
    (hyperloop(&args), out)
}

#[test]
fn compile_reports_layer_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = compile(dir.path(), "dijkstra", &["--start", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("layers=27"), "{}", stdout(&o));
    assert!(Path::new(&out).exists());
    let (o, _) = compile(dir.path(), "helly", &[]);
    assert!(stdout(&o).contains("layers=11"));
    let (o, _) = compile(dir.path(), "visit-hyperedge", &["--node", "1"]);
    assert!(stdout(&o).contains("layers=10"));
    let (o, _) = compile(dir.path(), "get_minimum", &["--values", "5,2,9"]);
    assert!(stdout(&o).contains("layers=7"));
}

#[test]
fn run_prints_decoded_results() {
    let dir = tempfile::tempdir().unwrap();
    let (_, program) = compile(dir.path(), "dijkstra", &["--start", "1"]);
    let trace = dir.path().join("t.jsonl");
    let o = hyperloop(&[
        "run",
        "--program",
        &program,
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains(r#""dists":[0,2,7]"#), "{text}");
    assert!(text.contains("passes=15"));
    let lines = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(lines.lines().count(), 16);
    assert!(lines.lines().all(|l| l.starts_with(r#"{"pass":"#)));

    let (_, program) = compile(dir.path(), "helly", &[]);
    let o = hyperloop(&["run", "--program", &program]);
    assert!(stdout(&o).contains(r#""helly":false"#));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let out = dir.path().join("p.json");
    let o = hyperloop(&[
        "compile",
        "--algo",
        "helly",
        "--input",
        missing.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));

    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"num_vertices":2,"edges":[{"weight":1,"vertices":[1,1]}]}"#,
    )
    .unwrap();
    let o = hyperloop(&[
        "compile",
        "--algo",
        "helly",
        "--input",
        bad.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));

    let (o, _) = compile(dir.path(), "helly", &["--k", "65", "--n-max", "64"]);
    assert_eq!(o.status.code(), Some(5));
    let (o, _) = compile(dir.path(), "helly", &["--k", "64", "--n-max", "64"]);
    assert_eq!(o.status.code(), Some(0));

    let (_, program) = compile(dir.path(), "dijkstra", &["--start", "1"]);
    let o = hyperloop(&["run", "--program", &program, "--max-passes", "1"]);
    assert_eq!(o.status.code(), Some(6));

    let o = hyperloop(&["compile", "--algo", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_summaries() {
    let o = hyperloop(&["verify", "--algo", "dijkstra", "--seeds", "0..10"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("10/10 trace-equal, 10/10 oracle-equal"));
    // deterministic for a fixed range
    assert_eq!(
        stdout(&o),
        stdout(&hyperloop(&[
            "verify", "--algo", "dijkstra", "--seeds", "0..10"
        ]))
    );

    let o = hyperloop(&[
        "verify",
        "--algo",
        "get_minimum",
        "--seeds",
        "0..3",
        "--corrupt-layer",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(7));
    assert!(String::from_utf8_lossy(&o.stderr).contains("first divergence at pass 1"));

    let o = hyperloop(&["verify", "--algo", "helly", "--exhaustive"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("enumerated 4056 hypergraphs"));
}

#[test]
fn bench_table() {
    let o = hyperloop(&["bench", "--algo", "dijkstra", "--sizes", "1,8"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let header = text.lines().next().unwrap();
    for col in ["K", "d", "layers", "passes", "interp"] {
        assert!(header.split_whitespace().any(|c| c == col), "{header}");
    }
    for row in text.lines().filter(|l| l.starts_with("dijkstra")) {
        let cols: Vec<&str> = row.split_whitespace().collect();
        assert_eq!(cols[6], cols[7], "{row}");
    }
}
