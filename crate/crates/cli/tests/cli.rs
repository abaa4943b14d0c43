use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

const TC_PROGRAM: &str = "database({
arc(From: integer, To: integer)
}).
tc(From,To)<- arc(From,To).
tc(From,To) <- tc(From,Tmp), arc(Tmp,To).
query tc(From, To).
";

fn llib(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_llib"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tc.dl"), TC_PROGRAM).unwrap();
    std::fs::write(dir.path().join("arc.csv"), "1,2\n2,3\n3,4\n").unwrap();
    dir
}

#[test]
fn run_prints_closure_table() {
    let dir = setup();
    let out = llib(&["run", "tc.dl", "--bind", "arc=arc.csv", "--deterministic"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("From | To\n-----+---\n1    | 2\n1    | 3\n1    | 4\n"), "{stdout}");
    assert!(stdout.contains("(6 rows)"));
    assert!(stdout.ends_with("strata=1 iterations=3 rows=6\n"), "{stdout}");

    let again = llib(&["run", "tc.dl", "--bind", "arc=arc.csv", "--deterministic"], dir.path());
    assert_eq!(again.stdout, stdout.as_bytes());
}

#[test]
fn header_lines_are_detected() {
    let dir = setup();
    std::fs::write(dir.path().join("arc_h.csv"), "From,To\n1,2\n").unwrap();
    let out = llib(&["run", "tc.dl", "--bind", "arc=arc_h.csv", "--deterministic"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().contains("(1 row)"));
}

#[test]
fn out_writes_csv_and_only_stats() {
    let dir = setup();
    let out = llib(
        &["run", "tc.dl", "--bind", "arc=arc.csv", "--out", "result.csv", "--deterministic"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "strata=1 iterations=3 rows=6\n");
    let csv = std::fs::read_to_string(dir.path().join("result.csv")).unwrap();
    assert_eq!(csv, "From,To\n1,2\n1,3\n1,4\n2,3\n2,4\n3,4\n");
}

#[test]
fn missing_binding_exits_2() {
    let dir = setup();
    let out = llib(&["run", "tc.dl"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("MissingRelation"));
}

#[test]
fn syntax_error_shows_caret_and_exits_2() {
    let dir = setup();
    std::fs::write(dir.path().join("bad.dl"), "p(X) <- q(X).\np(X <- q(X).\n").unwrap();
    let out = llib(&["run", "bad.dl"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("error[SyntaxError]"), "{err}");
    assert!(err.contains("bad.dl:2:5"), "{err}");
    assert!(err.contains("2 | p(X <- q(X).\n  |     ^"), "{err}");
}

#[test]
fn evaluation_error_exits_1() {
    let dir = setup();
    std::fs::write(dir.path().join("nat.dl"), "nat(0).\nnat(Y) <- nat(X), Y = X + 1.\nquery nat(X).\n").unwrap();
    let out = llib(&["run", "nat.dl", "--max-iters", "20"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("LimitExceeded"));
}

#[test]
fn usage_error_exits_2() {
    let dir = setup();
    assert_eq!(llib(&["run"], dir.path()).status.code(), Some(2));
    assert_eq!(llib(&["run", "tc.dl", "--bind", "arc"], dir.path()).status.code(), Some(2));
}

#[test]
fn fmt_is_idempotent() {
    let dir = setup();
    let out = llib(&["fmt", "tc.dl"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let formatted = String::from_utf8(out.stdout).unwrap();
    std::fs::write(dir.path().join("fmt.dl"), &formatted).unwrap();
    assert_eq!(llib(&["fmt", "fmt.dl"], dir.path()).stdout, formatted.as_bytes());
    assert_eq!(llib(&["fmt", "--check", "fmt.dl"], dir.path()).status.code(), Some(0));
    assert_eq!(llib(&["fmt", "--check", "tc.dl"], dir.path()).status.code(), Some(1));
}

#[test]
fn repl_session_over_stdin() {
    let dir = setup();
    let mut child = Command::new(env!("CARGO_BIN_EXE_llib"))
        .args(["repl", "--deterministic"])
        .current_dir(dir.path())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let script = "\
.load arc arc.csv arc(From: integer, To: integer)
tc(From,To)<- arc(From,To).
tc(From,To) <- tc(From,Tmp),
   arc(Tmp,To).
p(X <- q.
query tc(From, To).
.funcs
.quit
";
    child.stdin.take().unwrap().write_all(script.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("loaded 3 rows into arc"), "{stdout}");
    assert!(stdout.contains("error[SyntaxError]"), "{stdout}");
    assert!(stdout.contains("(6 rows)"), "{stdout}");
    assert!(stdout.contains("LogRegBGD"), "{stdout}");
}

#[test]
fn funcs_markdown_matches_docs() {
    let dir = setup();
    let out = llib(&["funcs", "--markdown"], dir.path());
    let docs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/functions.md");
    let committed = std::fs::read_to_string(docs).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), committed);
}
