#![cfg(unix)]

use std::io::{BufRead, BufReader, Write};
use std::os::unix::net::UnixStream;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::Value;

use avsearch::bridge;
use avsearch::environment::EnvConfig;
use avsearch::scene::{generate_map, AngleClass, Condition, SlotLayout};

fn connect(path: &std::path::Path) -> UnixStream {
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        match UnixStream::connect(path) {
            Ok(s) => return s,
            Err(e) if Instant::now() < deadline => {
                let _ = e;
                std::thread::sleep(Duration::from_millis(20));
            }
            Err(e) => panic!("cannot connect: {e}"),
        }
    }
}

fn read_json(reader: &mut impl BufRead) -> Value {
    let mut line = String::new();
    reader.read_line(&mut line).unwrap();
    serde_json::from_str(&line).unwrap()
}

#[test]
fn second_client_is_refused_while_first_is_served() {
    let tmp = tempfile::tempdir().unwrap();
    let sock = tmp.path().join("bridge.sock");
    let map = Arc::new(generate_map(Condition::new(AngleClass::Side, 5, 2), &SlotLayout::default(), 9).unwrap());
    let server = {
        let sock = sock.clone();
        std::thread::spawn(move || bridge::serve_unix(&sock, EnvConfig::default(), Some(map), true))
    };

    let first = connect(&sock);
    let mut first_in = BufReader::new(first.try_clone().unwrap());
    let hello = read_json(&mut first_in);
    assert_eq!(hello["type"], "hello");
    assert_eq!(hello["protocol"], bridge::PROTOCOL);
    assert_eq!(hello["posterior_shape"], serde_json::json!([30, 360]));

    let second = connect(&sock);
    let refusal = read_json(&mut BufReader::new(second));
    assert_eq!(refusal["type"], "error");
    assert_eq!(refusal["code"], "busy");

    let mut w = &first;
    w.write_all(b"{\"type\":\"reset\",\"seed\":2}\n").unwrap();
    let obs = read_json(&mut first_in);
    assert_eq!(obs["type"], "observation");
    assert_eq!(obs["elapsed_steps"], 0);
    w.write_all(b"{\"type\":\"step\",\"action\":\"stay\"}\n").unwrap();
    let obs = read_json(&mut first_in);
    assert_eq!(obs["elapsed_steps"], 1);
    assert!((obs["reward"].as_f64().unwrap() + 0.1).abs() < 1e-12);
    w.write_all(b"{\"type\":\"close\"}\n").unwrap();
    assert_eq!(read_json(&mut first_in)["type"], "closed");

    server.join().unwrap().unwrap();
}

#[test]
fn malformed_and_out_of_order_requests() {
    let map = Arc::new(generate_map(Condition::new(AngleClass::Front, 1, 0), &SlotLayout::default(), 4).unwrap());
    let mut session = bridge::Session::new(EnvConfig::default(), Some(map));
    let code = |s: &mut bridge::Session, line: &str| -> String {
        let v: Value = serde_json::from_str(&s.handle(line).0.to_line()).unwrap();
        v["code"].as_str().unwrap_or("").to_string()
    };
    assert_eq!(code(&mut session, "{\"type\":\"step\",\"action\":1}"), "no_episode");
    assert_eq!(code(&mut session, "not json"), "malformed");
    assert_eq!(code(&mut session, "{\"type\":\"reset\",\"seed\":1,\"extra\":0}"), "malformed");
    assert_eq!(code(&mut session, "{\"type\":\"reset\",\"seed\":1,\"map_path\":\"/nonexistent.json\"}"), "bad_map");
    assert_eq!(code(&mut session, "{\"type\":\"reset\",\"seed\":1}"), "");
    assert_eq!(code(&mut session, "{\"type\":\"step\",\"action\":\"jump\"}"), "bad_action");
    assert_eq!(code(&mut session, "{\"type\":\"step\",\"action\":0}"), "bad_action");
}
