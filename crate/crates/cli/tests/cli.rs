use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

fn stockflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stockflow"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn run_writes_961_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("base.csv");
    let o = stockflow(&["run", "pharma-baseline", "-o", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 962);
    assert!(lines[0].starts_with("Time,A,averaged complaints,"));
    assert!(lines[961].starts_with("120,"));
}

#[test]
fn run_selected_vars() {
    let o = stockflow(&["run", "pharma-baseline", "--vars", "production rate,order rate"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("Time,order rate,production rate"));
    assert_eq!(lines.next(), Some("0,10000,10000"));
    assert_eq!(out.lines().count(), 962);

    let o = stockflow(&["run", "pharma-baseline", "--vars", "nope"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn run_overrides() {
    let o = stockflow(&[
        "run",
        "pharma-baseline",
        "--set",
        "final time=10",
        "--set",
        "SAVEPER=1",
        "--set-init",
        "trained testers=50",
        "--vars",
        "Trained Testers",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 12);
    assert_eq!(out.lines().nth(1), Some("0,50"));

    assert_eq!(code(&stockflow(&["run", "pharma-baseline", "--set", "TIME STEP=0"])), 2);
    assert_eq!(
        code(&stockflow(&["run", "pharma-baseline", "--set", "Trained Testers=3"])),
        2
    );
    assert_eq!(code(&stockflow(&["run", "pharma-baseline", "--set-init", "A=3"])), 2);
    assert_eq!(code(&stockflow(&["run", "pharma-baseline", "--set", "nope=3"])), 2);
    assert_eq!(code(&stockflow(&["run", "pharma-baseline", "--set", "A"])), 1);
    assert_eq!(code(&stockflow(&["run", "pharma-baseline", "--set", "A=x"])), 1);
}

#[test]
fn usage_errors_and_help() {
    assert_eq!(code(&stockflow(&[])), 1);
    assert_eq!(code(&stockflow(&["frobnicate"])), 1);
    assert_eq!(code(&stockflow(&["run"])), 1);
    assert_eq!(code(&stockflow(&["run", "pharma-baseline", "--seed", "-1"])), 1);
    let help = stockflow(&["--help"]);
    assert_eq!(code(&help), 0);
    assert!(stdout(&help).contains("compare"));
    assert_eq!(code(&stockflow(&["--version"])), 0);
}

#[test]
fn unknown_model_and_parse_errors() {
    let o = stockflow(&["check", "nope"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("pharma-baseline"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.sd");
    std::fs::write(&path, "x = 1 +\ny = MAX(1)\nz = 2\n").unwrap();
    let o = stockflow(&["check", path.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("bad.sd:1:8: Syntax"), "{err}");
    assert!(err.contains("bad.sd:2:5: Arity"), "{err}");
}

#[test]
fn runtime_abort_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nan.sd");
    std::fs::write(&path, "FINAL TIME = 4\nx = 1 / (2 - time)\n").unwrap();
    let o = stockflow(&["run", path.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("\"x\" is not finite at time 2"));
}

#[test]
fn check_summary_and_trees() {
    let o = stockflow(&["check", "pharma-baseline"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.starts_with("model pharma-baseline: 24 variables\n"));
    assert!(out.contains("stock       2  Trained Testers, Trainee Testers"));
    assert!(out.contains("flows         hiring rate, quitting rate, training completion rate"));

    let o = stockflow(&[
        "check",
        "pharma-improved",
        "--tree",
        "uses",
        "--var",
        "Trainees Testers",
        "--depth",
        "1",
    ]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o)
        .ends_with("Trainees Testers [stock]\n  effective testing capacity\n  training completion rate [flow]\n"));

    assert_eq!(code(&stockflow(&["check", "pharma-baseline", "--tree", "causes"])), 1);
    assert_eq!(
        code(&stockflow(&[
            "check",
            "pharma-baseline",
            "--tree",
            "causes",
            "--var",
            "nope"
        ])),
        2
    );
}

#[test]
fn sweep_writes_one_csv_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let o = stockflow(&[
        "sweep",
        "pharma-baseline",
        "--param",
        "HIRING DELAY",
        "--values",
        "2,4,6",
        "--vars",
        "quitting rate,testers needed",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut files: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(
        files,
        [
            "pharma-baseline_hiring_delay_2.csv",
            "pharma-baseline_hiring_delay_4.csv",
            "pharma-baseline_hiring_delay_6.csv"
        ]
    );
    let csv = std::fs::read_to_string(dir.path().join(&files[1])).unwrap();
    assert!(csv.starts_with("Time,quitting rate,testers needed\n"));
    let table = stdout(&o);
    assert_eq!(table.lines().count(), 7);

    // Same as a single run with the override.
    let single = stockflow(&[
        "run",
        "pharma-baseline",
        "--set",
        "HIRING DELAY=4",
        "--vars",
        "quitting rate,testers needed",
    ]);
    assert_eq!(stdout(&single), csv);

    assert_eq!(
        code(&stockflow(&[
            "sweep",
            "pharma-baseline",
            "--param",
            "order rate",
            "--values",
            "1"
        ])),
        2
    );
    assert_eq!(code(&stockflow(&["sweep", "pharma-baseline", "--param", "A"])), 1);
}

#[test]
fn compare_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.csv");
    let o = stockflow(&[
        "compare",
        "pharma-baseline",
        "pharma-improved",
        "--vars",
        "Trainee Testers",
        "--window",
        "5:120",
        "-o",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("window 5..120\n"));
    let csv = std::fs::read_to_string(&path).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0][..3], ["variable", "run", "mean"]);
    assert_eq!(rows.len(), 3);
    let base: f64 = rows[1][2].parse().unwrap();
    let improved: f64 = rows[2][2].parse().unwrap();
    assert_eq!(rows[2][1], "pharma-improved");
    assert!(improved < base);

    let same = stockflow(&[
        "compare",
        "pharma-baseline",
        "pharma-baseline",
        "--set-b",
        "HIRING DELAY=4",
        "--vars",
        "quitting rate",
    ]);
    assert_eq!(code(&same), 0);
    assert!(stdout(&same).contains("quitting rate  b"));

    assert_eq!(
        code(&stockflow(&[
            "compare",
            "pharma-baseline",
            "pharma-improved",
            "--vars",
            "x",
            "--window",
            "5-9"
        ])),
        1
    );
    assert_eq!(
        code(&stockflow(&[
            "compare",
            "pharma-baseline",
            "pharma-improved",
            "--vars",
            "nope"
        ])),
        2
    );
    assert_eq!(
        code(&stockflow(&[
            "compare",
            "pharma-baseline",
            "pharma-improved",
            "--set-b",
            "FINAL TIME=60",
            "--vars",
            "A"
        ])),
        2
    );
}

#[test]
fn identical_invocations_are_byte_identical() {
    let a = stockflow(&["run", "pharma-improved", "--set", "A=1", "--seed", "42"]);
    let b = stockflow(&["run", "pharma-improved", "--set", "A=1", "--seed", "42"]);
    let c = stockflow(&["run", "pharma-improved", "--set", "A=1", "--seed", "43"]);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn serve_rejects_bad_port_env() {
    let o = Command::new(env!("CARGO_BIN_EXE_stockflow"))
        .arg("serve")
        .env("STOCKFLOW_PORT", "not-a-port")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("STOCKFLOW_PORT"));
}

#[test]
fn serve_answers_over_http() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_stockflow"))
        .arg("serve")
        .env("STOCKFLOW_PORT", port.to_string())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let mut stream = loop {
        match TcpStream::connect(("127.0.0.1", port)) {
            Ok(s) => break s,
            Err(_) if Instant::now() < deadline => {
                std::thread::sleep(Duration::from_millis(50));
            }
            Err(e) => {
                child.kill().unwrap();
                panic!("server did not start: {e}");
            }
        }
    };
    stream
        .write_all(b"GET /api/models HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n")
        .unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains("\"pharma-improved\""));
}
