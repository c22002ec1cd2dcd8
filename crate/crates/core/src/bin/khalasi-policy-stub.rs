//! Minimal external policy for exercising the NDJSON protocol.
//!
//! ```text
//! khalasi-policy-stub [zero|greedy|wild|die-after=N|die-once=PATH|hang|garbage|wrong-step] [--maps]
//! ```

use khalasi_core::policy::wire::{
    decode_host, encode, state_from_message, HostMessage, PolicyMessage,
};
use khalasi_core::policy::GreedyPolicy;
use khalasi_core::Vec2;
use std::fs::OpenOptions;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

enum Mode {
    Zero,
    Greedy,
    /// Replies (2, −2), outside the action box.
    Wild,
    DieAfter(u64),
    /// Crashes at step 1 unless `PATH` exists, creating it first, so only
    /// one episode in a batch dies.
    DieOnce(PathBuf),
    Hang,
    Garbage,
    WrongStep,
}

fn parse_mode(arg: &str) -> Option<Mode> {
    Some(match arg {
        "zero" => Mode::Zero,
        "greedy" => Mode::Greedy,
        "wild" => Mode::Wild,
        "hang" => Mode::Hang,
        "garbage" => Mode::Garbage,
        "wrong-step" => Mode::WrongStep,
        _ => {
            if let Some(path) = arg.strip_prefix("die-once=") {
                Mode::DieOnce(PathBuf::from(path))
            } else {
                Mode::DieAfter(arg.strip_prefix("die-after=")?.parse().ok()?)
            }
        }
    })
}

fn main() -> ExitCode {
    let mut mode = Mode::Zero;
    let mut wants_maps = false;
    for arg in std::env::args().skip(1) {
        if arg == "--maps" {
            wants_maps = true;
        } else if let Some(m) = parse_mode(&arg) {
            mode = m;
        } else {
            eprintln!("khalasi-policy-stub: unknown argument `{arg}`");
            return ExitCode::from(2);
        }
    }
    let greedy = GreedyPolicy::default();
    let stdin = std::io::stdin();
    let mut out = std::io::stdout().lock();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        let msg = match decode_host(&line) {
            Ok(m) => m,
            Err(e) => {
                eprintln!("khalasi-policy-stub: {e}");
                return ExitCode::from(1);
            }
        };
        let reply = match &msg {
            HostMessage::Reset { .. } => encode(&PolicyMessage::Ack { wants_maps }),
            HostMessage::End { .. } => continue,
            HostMessage::Obs { .. } => {
                let (step, state) =
                    state_from_message(&msg).expect("obs carries a 9-element state");
                let action = match &mode {
                    Mode::Zero => [0.0, 0.0],
                    Mode::Wild => [2.0, -2.0],
                    Mode::Greedy => {
                        let a = greedy.command(Vec2::new(state[0], state[1]), state[8]);
                        [a.left, a.right]
                    }
                    Mode::DieAfter(n) if step >= *n => return ExitCode::from(3),
                    Mode::DieOnce(path)
                        if step >= 1
                            && OpenOptions::new()
                                .write(true)
                                .create_new(true)
                                .open(path)
                                .is_ok() =>
                    {
                        return ExitCode::from(3)
                    }
                    Mode::DieOnce(_) => [0.0, 0.0],
                    Mode::DieAfter(_) => [0.0, 0.0],
                    Mode::Hang => loop {
                        std::thread::park();
                    },
                    Mode::Garbage => {
                        let _ = out.write_all(b"this is not json\n");
                        let _ = out.flush();
                        continue;
                    }
                    Mode::WrongStep => {
                        let _ = out.write_all(
                            encode(&PolicyMessage::Act {
                                action: [0.0, 0.0],
                                step: Some(step + 1),
                            })
                            .as_bytes(),
                        );
                        let _ = out.flush();
                        continue;
                    }
                };
                encode(&PolicyMessage::Act {
                    action,
                    step: Some(step),
                })
            }
        };
        if out
            .write_all(reply.as_bytes())
            .and_then(|_| out.flush())
            .is_err()
        {
            break;
        }
    }
    ExitCode::SUCCESS
}
