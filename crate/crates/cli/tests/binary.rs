use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Command, Stdio};

use smearcount::netpbm::save_pgm;
use smearcount::GrayImage;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_smearcount");

#[test]
fn synth_then_analyze() {
    let dir = TempDir::new().unwrap();
    let p = |name: &str| dir.path().join(name);
    std::fs::write(
        p("spec.json"),
        r#"{"width": 320, "height": 320, "n_white": 1, "n_red": 20, "rng_seed": 3}"#,
    )
    .unwrap();

    let out = Command::new(BIN)
        .args(["synth", "--spec"])
        .arg(p("spec.json"))
        .arg("--out")
        .arg(p("s.pgm"))
        .arg("--truth")
        .arg(p("t.json"))
        .arg("--out-config")
        .arg(p("c.json"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = Command::new(BIN)
        .args(["analyze", "--input"])
        .arg(p("s.pgm"))
        .arg("--config")
        .arg(p("c.json"))
        .arg("--out-overlay")
        .arg(p("o.ppm"))
        .arg("--out-report")
        .arg(p("r.json"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("white cells: 1"));
    assert!(p("o.ppm").is_file() && p("r.json").is_file());
}

#[test]
fn bad_input_fails_with_message() {
    let dir = TempDir::new().unwrap();
    let out = Command::new(BIN)
        .args([
            "analyze",
            "--input",
            "nope.pgm",
            "--config",
            "nope.json",
            "--out-overlay",
        ])
        .arg(dir.path().join("o.ppm"))
        .arg("--out-report")
        .arg(dir.path().join("r.json"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.pgm"));
}

#[test]
fn serve_answers_over_tcp() {
    let mut child = Command::new(BIN)
        .args(["serve", "--port", "0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line.trim().rsplit("http://").next().unwrap().to_string();

    let body = save_pgm(&GrayImage::filled(8, 8, 0.5));
    let mut stream = TcpStream::connect(&addr).unwrap();
    write!(
        stream,
        "POST /sessions HTTP/1.1\r\nHost: {addr}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    )
    .unwrap();
    stream.write_all(&body).unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();

    assert!(response.starts_with("HTTP/1.1 201"), "{response}");
    assert!(response.contains("session_id"));
}
