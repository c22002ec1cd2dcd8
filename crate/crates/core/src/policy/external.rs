use super::wire::{self, HostMessage, PolicyMessage};
use super::{EpisodeContext, Outcome, Policy, PolicyError};
use crate::obs::Observation;
use crate::vehicle::Action;
use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

/// How long a finished child gets to exit on its own before it is killed.
const EXIT_GRACE: Duration = Duration::from_millis(500);

/// A policy on the far side of a byte stream speaking the line protocol in
/// [`wire`].
///
/// Reads and writes happen on helper threads so a policy that stops
/// reading or never answers can only ever cost one timeout.
pub struct ExternalPolicy {
    name: String,
    lines_out: Option<Sender<String>>,
    lines_in: Receiver<Option<String>>,
    timeout: Duration,
    child: Option<Child>,
    wants_maps: bool,
    broken: bool,
}

impl ExternalPolicy {
    pub fn from_streams<R, W>(
        name: impl Into<String>,
        reader: R,
        writer: W,
        timeout: Duration,
    ) -> Self
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx_in, lines_in) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) | Err(_) => {
                        let _ = tx_in.send(None);
                        return;
                    }
                    Ok(_) => {
                        if tx_in.send(Some(line)).is_err() {
                            return;
                        }
                    }
                }
            }
        });
        let (lines_out, rx_out) = mpsc::channel::<String>();
        thread::spawn(move || {
            let mut writer = writer;
            for line in rx_out {
                if writer
                    .write_all(line.as_bytes())
                    .and_then(|_| writer.flush())
                    .is_err()
                {
                    return;
                }
            }
        });
        Self {
            name: name.into(),
            lines_out: Some(lines_out),
            lines_in,
            timeout,
            child: None,
            wants_maps: true,
            broken: false,
        }
    }

    /// Runs `command` through `sh -c` with piped stdin/stdout; stderr is
    /// inherited. The shell and everything it starts share a fresh process
    /// group, which is what gets killed on timeout.
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self, PolicyError> {
        let mut cmd = Command::new("sh");
        cmd.arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit());
        #[cfg(unix)]
        std::os::unix::process::CommandExt::process_group(&mut cmd, 0);
        let mut child = cmd.spawn().map_err(|source| PolicyError::Spawn {
            command: command.to_string(),
            source,
        })?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let mut p = Self::from_streams(format!("exec:{command}"), stdout, stdin, timeout);
        p.child = Some(child);
        Ok(p)
    }

    fn send(&mut self, msg: &HostMessage) -> Result<(), PolicyError> {
        let tx = self.lines_out.as_ref().ok_or(PolicyError::Closed)?;
        tx.send(wire::encode(msg)).map_err(|_| {
            self.broken = true;
            PolicyError::Closed
        })
    }

    fn receive(&mut self) -> Result<PolicyMessage, PolicyError> {
        match self.lines_in.recv_timeout(self.timeout) {
            Ok(Some(line)) => wire::decode_policy(&line).inspect_err(|_| self.broken = true),
            Ok(None) | Err(RecvTimeoutError::Disconnected) => {
                self.broken = true;
                Err(PolicyError::Closed)
            }
            Err(RecvTimeoutError::Timeout) => {
                self.broken = true;
                self.kill();
                Err(PolicyError::Timeout(self.timeout))
            }
        }
    }

    fn check_alive(&self) -> Result<(), PolicyError> {
        if self.broken {
            Err(PolicyError::Closed)
        } else {
            Ok(())
        }
    }

    fn kill(&mut self) {
        if let Some(mut child) = self.child.take() {
            #[cfg(unix)]
            if let Ok(pgid) = libc::pid_t::try_from(child.id()) {
                // SAFETY: plain syscall on a group this process created
                unsafe {
                    libc::killpg(pgid, libc::SIGKILL);
                }
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl Policy for ExternalPolicy {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn wants_maps(&self) -> bool {
        self.wants_maps
    }

    fn reset(&mut self, ctx: &EpisodeContext) -> Result<(), PolicyError> {
        self.check_alive()?;
        self.send(&HostMessage::Reset {
            seed: ctx.seed,
            episode: ctx.into(),
        })?;
        match self.receive()? {
            PolicyMessage::Ack { wants_maps } => {
                self.wants_maps = wants_maps;
                Ok(())
            }
            other => {
                self.broken = true;
                Err(PolicyError::Unexpected {
                    expected: "ack",
                    got: other.kind().into(),
                })
            }
        }
    }

    fn act(&mut self, obs: &Observation) -> Result<Action, PolicyError> {
        self.check_alive()?;
        self.send(&wire::obs_message(obs, self.wants_maps))?;
        match self.receive()? {
            PolicyMessage::Act { action, step } => {
                if let Some(s) = step.filter(|&s| s != obs.step) {
                    self.broken = true;
                    return Err(PolicyError::StepMismatch {
                        expected: obs.step,
                        got: s,
                    });
                }
                let raw = Action::new(action[0], action[1]);
                let a = raw.clamped();
                if a != raw {
                    log::warn!(
                        "{}: action ({}, {}) at step {} clamped to ({}, {})",
                        self.name,
                        raw.left,
                        raw.right,
                        obs.step,
                        a.left,
                        a.right
                    );
                }
                Ok(a)
            }
            other => {
                self.broken = true;
                Err(PolicyError::Unexpected {
                    expected: "act",
                    got: other.kind().into(),
                })
            }
        }
    }

    fn end(&mut self, outcome: Outcome, steps: u64, energy: f64) -> Result<(), PolicyError> {
        self.check_alive()?;
        self.send(&HostMessage::End {
            outcome,
            steps,
            total_energy: energy,
        })
    }
}

impl Drop for ExternalPolicy {
    fn drop(&mut self) {
        // closing stdin is the polite way to ask the child to leave
        self.lines_out = None;
        if let Some(child) = self.child.as_mut() {
            let deadline = Instant::now() + EXIT_GRACE;
            while Instant::now() < deadline {
                match child.try_wait() {
                    Ok(Some(_)) | Err(_) => {
                        self.child = None;
                        return;
                    }
                    Ok(None) => thread::sleep(Duration::from_millis(5)),
                }
            }
        }
        self.kill();
    }
}
