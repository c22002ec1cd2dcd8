//! The examples in `docs/` must stay loadable.

use khalasi_core::env::Environment;
use khalasi_core::episode::{run_episode, EpisodeConfig};
use khalasi_core::eval::ExperimentSpec;
use khalasi_core::policy::wire::{decode_host, decode_policy};
use khalasi_core::policy::DriftPolicy;
use std::path::Path;

fn doc(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../docs")
        .join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Bodies of the fenced blocks whose info string is exactly `info`.
fn blocks(text: &str, info: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Option<String> = None;
    for line in text.lines() {
        match (&mut current, line.strip_prefix("```")) {
            (None, Some(tag)) if tag.trim() == info => current = Some(String::new()),
            (Some(body), Some("")) => {
                out.push(std::mem::take(body));
                current = None;
            }
            (Some(body), _) => {
                body.push_str(line);
                body.push('\n');
            }
            _ => {}
        }
    }
    out
}

#[test]
fn config_examples_load_and_run() {
    let text = doc("config.md");
    let episodes = blocks(&text, "toml episode");
    assert_eq!(episodes.len(), 3);
    for body in episodes {
        let mut cfg: EpisodeConfig =
            toml::from_str(&body).unwrap_or_else(|e| panic!("{e}\n{body}"));
        cfg.step_limit = 5;
        let env = Environment::with_flow(&cfg.env, cfg.flow.clone()).unwrap();
        run_episode(&cfg, &env, &mut DriftPolicy).unwrap();
    }
    let specs = blocks(&text, "toml experiment");
    assert_eq!(specs.len(), 1);
    let spec: ExperimentSpec = toml::from_str(&specs[0]).unwrap();
    spec.validate().unwrap();
}

#[test]
fn protocol_transcript_decodes() {
    let text = doc("protocol.md");
    let mut counts = (0, 0);
    for body in blocks(&text, "text") {
        for line in body.lines() {
            if let Some(msg) = line.strip_prefix("H> ") {
                decode_host(msg).unwrap_or_else(|e| panic!("{e}: {msg}"));
                counts.0 += 1;
            } else if let Some(msg) = line.strip_prefix("P< ") {
                decode_policy(msg).unwrap_or_else(|e| panic!("{e}: {msg}"));
                counts.1 += 1;
            }
        }
    }
    assert_eq!(counts, (5, 4));
}
