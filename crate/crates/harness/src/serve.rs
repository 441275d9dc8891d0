//! TCP transport for [`LiveSession`].
//!
//! Sessions are served one at a time. A reader thread decodes frames and
//! hands them to the simulation loop over a channel, so a slow client never
//! stalls a running preset.

use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use crate::config::SessionConfig;
use crate::live::LiveSession;
use crate::wire::{self, ServerMessage};
use crate::HarnessError;

#[derive(Debug, Clone, Copy, Default)]
pub struct ServeOptions {
    /// Pace presets at wall-clock speed instead of as fast as possible.
    pub realtime: bool,
    /// Stop after this many sessions; run forever when `None`.
    pub max_sessions: Option<usize>,
}

pub struct Server {
    listener: TcpListener,
    cfg: SessionConfig,
    opts: ServeOptions,
}

enum Inbound {
    Frame(Vec<u8>),
    Closed,
}

impl Server {
    pub fn bind(addr: &str, cfg: SessionConfig, opts: ServeOptions) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let listener = TcpListener::bind(addr)?;
        Ok(Server { listener, cfg, opts })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, HarnessError> {
        Ok(self.listener.local_addr()?)
    }

    pub fn run(self) -> Result<(), HarnessError> {
        let mut served = 0;
        for stream in self.listener.incoming() {
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    continue;
                }
            };
            let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
            log::info!("session from {peer}");
            match serve_session(stream, self.cfg.clone(), self.opts.realtime) {
                Ok(()) => log::info!("session from {peer} closed"),
                Err(e) => log::warn!("session from {peer} ended: {e}"),
            }
            served += 1;
            if self.opts.max_sessions.is_some_and(|m| served >= m) {
                break;
            }
        }
        Ok(())
    }
}

/// Runs one session to completion on an accepted connection.
pub fn serve_session(stream: TcpStream, cfg: SessionConfig, realtime: bool) -> Result<(), HarnessError> {
    stream.set_nodelay(true)?;
    let mut reader = stream.try_clone()?;
    let mut writer = std::io::BufWriter::new(stream);
    let mut session = LiveSession::new(cfg)?;
    wire::send(&mut writer, &session.snapshot_message())?;

    let (tx, rx) = mpsc::channel();
    let reader_thread = thread::spawn(move || {
        loop {
            match wire::read_frame(&mut reader) {
                Ok(Some(body)) => {
                    if tx.send(Inbound::Frame(body)).is_err() {
                        break;
                    }
                }
                Ok(None) => break,
                Err(e) => {
                    log::warn!("read failed: {e}");
                    break;
                }
            }
        }
        let _ = tx.send(Inbound::Closed);
    });

    let step = Duration::from_secs_f64(session.timestep());
    let mut next_tick = Instant::now();
    let result = loop {
        let inbound = if session.preset_active() {
            let wait = if realtime { next_tick.saturating_duration_since(Instant::now()) } else { Duration::ZERO };
            match rx.recv_timeout(wait) {
                Ok(m) => Some(m),
                Err(RecvTimeoutError::Timeout) => None,
                Err(RecvTimeoutError::Disconnected) => Some(Inbound::Closed),
            }
        } else {
            Some(rx.recv().unwrap_or(Inbound::Closed))
        };
        let replies = match inbound {
            Some(Inbound::Frame(body)) => {
                let was_running = session.preset_active();
                let out = session.handle(&body);
                if !was_running && session.preset_active() {
                    next_tick = Instant::now();
                }
                out
            }
            Some(Inbound::Closed) => break Ok(()),
            None => {
                next_tick += step;
                session.tick()
            }
        };
        if let Err(e) = send_all(&mut writer, &replies) {
            break Err(e.into());
        }
    };
    let _ = writer.get_ref().shutdown(std::net::Shutdown::Both);
    let _ = reader_thread.join();
    result
}

fn send_all(out: &mut impl std::io::Write, messages: &[ServerMessage]) -> std::io::Result<()> {
    for m in messages {
        wire::send(out, m)?;
    }
    Ok(())
}

/// Blocking client used by tests and scripts.
pub struct Client {
    stream: TcpStream,
}

impl Client {
    pub fn connect(addr: SocketAddr) -> Result<Self, HarnessError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Client { stream })
    }

    pub fn send(&mut self, message: &crate::wire::ClientMessage) -> Result<(), HarnessError> {
        Ok(wire::send(&mut self.stream, message)?)
    }

    pub fn send_raw(&mut self, body: &[u8]) -> Result<(), HarnessError> {
        Ok(wire::write_frame(&mut self.stream, body)?)
    }

    /// Next message, or `None` once the server closes.
    pub fn recv(&mut self) -> Result<Option<ServerMessage>, HarnessError> {
        match wire::read_frame(&mut self.stream)? {
            Some(body) => serde_json::from_slice(&body)
                .map(Some)
                .map_err(|e| HarnessError::Format { source_name: "server".into(), line: 0, detail: e.to_string() }),
            None => Ok(None),
        }
    }

    /// Reads until a message matches `stop`, returning everything read.
    pub fn recv_until(&mut self, stop: impl Fn(&ServerMessage) -> bool) -> Result<Vec<ServerMessage>, HarnessError> {
        let mut out = Vec::new();
        while let Some(m) = self.recv()? {
            let done = stop(&m);
            out.push(m);
            if done {
                return Ok(out);
            }
        }
        Err(HarnessError::Net(std::io::ErrorKind::UnexpectedEof.into()))
    }

    pub fn set_read_timeout(&self, timeout: Option<Duration>) -> Result<(), HarnessError> {
        Ok(self.stream.set_read_timeout(timeout)?)
    }
}
