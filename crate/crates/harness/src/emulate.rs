//! Controller emulator behind a TCP byte stream, plus a host-side sender.
//!
//! The emulator clock is wall-clock milliseconds since the endpoint started.
//! Its state survives disconnects; a heartbeat thread writes a
//! [`StateDump`] line to the side channel at a fixed interval.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use slosh_core::device::{encode, EmulatorState, MotorCommand, MotorModel, StateDump};
use slosh_core::engine::PulseCommand;

use crate::HarnessError;

pub struct EmulatorEndpoint {
    listener: TcpListener,
    state: Arc<Mutex<EmulatorState>>,
    started: Instant,
}

/// Stops the heartbeat thread when dropped.
pub struct Heartbeat {
    stop: Arc<AtomicBool>,
    handle: Option<thread::JoinHandle<()>>,
}

impl Drop for Heartbeat {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl EmulatorEndpoint {
    pub fn bind(addr: &str, model: MotorModel) -> Result<Self, HarnessError> {
        Ok(EmulatorEndpoint {
            listener: TcpListener::bind(addr)?,
            state: Arc::new(Mutex::new(EmulatorState::new(model))),
            started: Instant::now(),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, HarnessError> {
        Ok(self.listener.local_addr()?)
    }

    /// Shared handle to the emulator, for inspection.
    pub fn state(&self) -> Arc<Mutex<EmulatorState>> {
        Arc::clone(&self.state)
    }

    fn now_ms(started: Instant) -> u64 {
        started.elapsed().as_millis() as u64
    }

    /// Starts writing one JSON state dump per line to `sink` every `interval`.
    pub fn heartbeat(&self, interval: Duration, mut sink: Box<dyn Write + Send>) -> Heartbeat {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let state = Arc::clone(&self.state);
        let started = self.started;
        let handle = thread::spawn(move || {
            let mut next = Instant::now();
            while !flag.load(Ordering::Relaxed) {
                let dump = {
                    let mut s = state.lock().expect("emulator lock");
                    s.advance(Self::now_ms(started));
                    s.dump()
                };
                if let Err(e) = write_dump(&mut sink, &dump) {
                    log::warn!("heartbeat sink: {e}");
                    return;
                }
                next += interval;
                while !flag.load(Ordering::Relaxed) && Instant::now() < next {
                    thread::sleep(next.saturating_duration_since(Instant::now()).min(Duration::from_millis(20)));
                }
            }
        });
        Heartbeat { stop, handle: Some(handle) }
    }

    /// Serves connections one after another. Transport errors end the
    /// connection, never the emulator.
    pub fn run(&self, max_connections: Option<usize>) -> Result<(), HarnessError> {
        for (served, stream) in self.listener.incoming().enumerate() {
            match stream {
                Ok(s) => {
                    if let Err(e) = self.pump(s) {
                        log::warn!("device link: {e}");
                    }
                }
                Err(e) => log::warn!("accept failed: {e}"),
            }
            if max_connections.is_some_and(|m| served + 1 >= m) {
                break;
            }
        }
        Ok(())
    }

    fn pump(&self, mut stream: TcpStream) -> std::io::Result<()> {
        let mut buf = [0u8; 4096];
        loop {
            let n = match stream.read(&mut buf) {
                Ok(0) => return Ok(()),
                Ok(n) => n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e),
            };
            let mut s = self.state.lock().expect("emulator lock");
            let faults_before = s.faults().len();
            s.feed(&buf[..n], Self::now_ms(self.started));
            for f in &s.faults()[faults_before..] {
                log::warn!("frame fault at {} ms: {}", f.at_ms, f.error);
            }
        }
    }
}

pub fn write_dump(out: &mut impl Write, dump: &StateDump) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, dump)?;
    out.write_all(b"\n")?;
    out.flush()
}

/// Frame for one pulse.
pub fn frame_for(event: &PulseCommand) -> Result<[u8; 6], HarnessError> {
    let cmd = MotorCommand::new(event.motor, event.strength, event.duration_ms)
        .map_err(|e| HarnessError::Usage(format!("event not encodable: {e}")))?;
    encode(&cmd).map_err(|e| HarnessError::Usage(format!("event not encodable: {e}")))
}

/// Sends every event as a frame. With `realtime`, each frame waits until
/// its `t_start` relative to the first event.
pub fn play(out: &mut impl Write, events: &[PulseCommand], realtime: bool) -> Result<usize, HarnessError> {
    let started = Instant::now();
    let t0 = events.first().map_or(0.0, |e| e.t_start);
    for event in events {
        let frame = frame_for(event)?;
        if realtime {
            let due = Duration::from_secs_f64((event.t_start - t0).max(0.0));
            thread::sleep(due.saturating_sub(started.elapsed()));
        }
        out.write_all(&frame)?;
    }
    out.flush()?;
    Ok(events.len())
}
