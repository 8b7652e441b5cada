use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

use proves_core::{Config, FixedClock, KeyPair, Notary, Timestamp};
use proves_server::ServerHandle;

struct Env {
    _server: ServerHandle,
    addr: String,
    dir: tempfile::TempDir,
}

impl Env {
    fn new() -> Self {
        let clock = Arc::new(FixedClock::new(Timestamp(1_700_000_000)));
        let notary = Arc::new(Notary::ephemeral(KeyPair::from_seed(1), &Config::default(), clock));
        let server = ServerHandle::spawn(notary, "127.0.0.1:0").unwrap();
        Self {
            addr: server.base_url(),
            _server: server,
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_str().unwrap().to_owned()
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_proves"))
            .args(args)
            .env("PROVES_ADDR", &self.addr)
            .output()
            .unwrap()
    }

    fn code(&self, args: &[&str]) -> i32 {
        self.run(args).status.code().unwrap()
    }

    /// Scene, key, registration and a signed copy at `signed.png`.
    fn signed(&self) -> String {
        let (scene, key, signed) = (self.path("s.png"), self.path("dev.key"), self.path("signed.png"));
        assert_eq!(self.code(&["scene", "--out", &scene, "--faces", "4", "--seed", "3"]), 0);
        assert_eq!(self.code(&["keygen", "--out", &key, "--seed", "5"]), 0);
        assert_eq!(self.code(&["register", "--device", "cam", "--key", &key]), 0);
        assert_eq!(self.code(&["sign", &scene, "--device", "cam", "--key", &key, "--out", &signed]), 0);
        signed
    }
}

#[test]
fn sign_verify_and_attack_exit_codes() {
    let env = Env::new();
    let signed = env.signed();
    let out = env.run(&["verify", &signed]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.matches("Verified similarity").count(), 4, "{text}");

    let benign = env.path("benign.png");
    assert_eq!(env.code(&["transform", &signed, "--out", &benign, "--benign", "random:4"]), 0);
    assert_eq!(env.code(&["verify", &benign]), 0);

    for kind in ["replace", "swap", "remove", "occlude"] {
        let att = env.path(&format!("{kind}.png"));
        let spec = format!("kind={kind},targets=1+2,noise=2,seed=1");
        assert_eq!(env.code(&["transform", &signed, "--out", &att, "--attack", &spec]), 0);
        let ann = env.path(&format!("{kind}-ann.png"));
        assert_eq!(env.code(&["verify", &att, "--annotate", &ann]), 1, "{kind}");
        assert!(Path::new(&ann).exists());
    }

    let crop = env.path("crop.png");
    let spec = "kind=crop-out,targets=1";
    assert_eq!(env.code(&["transform", &signed, "--out", &crop, "--attack", spec]), 0);
    let out = env.run(&["verify", &crop, "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    // The largest window excluding face 1 may lose neighbours too.
    let cropped = report["face_outcomes"].as_array().unwrap().iter().filter(|o| o["kind"] == "Cropped").count();
    assert!(cropped >= 1);
    assert_eq!(report["cropped_count"], cropped);
}

#[test]
fn rejection_exit_codes() {
    let env = Env::new();
    let signed = env.signed();
    let key = env.path("dev.key");
    let scene = env.path("s.png");

    assert_eq!(env.code(&["register", "--device", "cam", "--key", &key]), 3);
    assert_eq!(env.code(&["verify", &scene]), 8);

    let jpeg = env.path("photo.jpg");
    std::fs::write(&jpeg, b"\xff\xd8\xff\xe0 not a png").unwrap();
    assert_eq!(env.code(&["sign", &jpeg, "--device", "cam", "--key", &key]), 5);

    assert_eq!(env.code(&["revoke", "--device", "cam", "--effective", "2000-01-01T00:00:00Z"]), 0);
    assert_eq!(env.code(&["verify", &signed]), 6);
    assert_eq!(env.code(&["sign", &scene, "--device", "cam", "--key", &key]), 3);

    assert_eq!(env.code(&["frobnicate"]), 64);
    let out = Command::new(env!("CARGO_BIN_EXE_proves"))
        .args(["verify", &signed])
        .env("PROVES_ADDR", "127.0.0.1:1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sidecar_signing() {
    let env = Env::new();
    env.signed();
    let (scene, key, out) = (env.path("s.png"), env.path("dev.key"), env.path("side.png"));
    assert_eq!(env.code(&["sign", &scene, "--device", "cam", "--key", &key, "--sidecar", "--out", &out]), 0);
    assert!(Path::new(&format!("{out}.provsig")).exists());
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&scene).unwrap());
    assert_eq!(env.code(&["verify", &out]), 0);
}

#[test]
fn local_bench_prints_table() {
    let env = Env::new();
    let out = env.run(&["bench", "--local", "--images", "4", "--trials", "3", "--crop-trials", "3", "--serial"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let table = proves_harness::bench::parse_table(&text).unwrap();
    assert!(table.contains_key("verified_pct"));
    assert!(table.contains_key("swap_rejection_pct"));
}
