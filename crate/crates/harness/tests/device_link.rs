use std::io::Write;
use std::net::TcpStream;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use slosh_core::calibration::{generate_motion, MotionKind, MotionSpec};
use slosh_core::device::{MotorModel, StateDump};
use slosh_harness::emulate::{frame_for, play, EmulatorEndpoint};
use slosh_harness::{simulate, SessionConfig};

#[derive(Clone, Default)]
struct Shared(Arc<Mutex<Vec<u8>>>);

impl Write for Shared {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

fn serve_once(endpoint: EmulatorEndpoint, connections: usize) -> (std::net::SocketAddr, thread::JoinHandle<EmulatorEndpoint>) {
    let addr = endpoint.local_addr().unwrap();
    let handle = thread::spawn(move || {
        endpoint.run(Some(connections)).unwrap();
        endpoint
    });
    (addr, handle)
}

#[test]
fn simulated_events_arrive_one_to_one() {
    let cfg = SessionConfig::default();
    let poses = generate_motion(&MotionSpec::fast(MotionKind::Shake, 4.0), cfg.timestep).unwrap();
    let events = simulate(&cfg, &poses).unwrap().events;
    assert!(!events.is_empty());

    let endpoint = EmulatorEndpoint::bind("127.0.0.1:0", MotorModel::default()).unwrap();
    let (addr, handle) = serve_once(endpoint, 1);
    let mut stream = TcpStream::connect(addr).unwrap();
    assert_eq!(play(&mut stream, &events, false).unwrap(), events.len());
    drop(stream);
    let endpoint = handle.join().unwrap();

    let state = endpoint.state();
    let state = state.lock().unwrap();
    assert!(state.faults().is_empty());
    let got: Vec<_> = state.activations().iter().map(|a| a.command).collect();
    let want: Vec<_> = events.iter().map(|e| (e.motor as u8, e.strength, e.duration_ms as u16)).collect();
    assert_eq!(got.iter().map(|c| (c.motor, c.strength, c.duration_ms)).collect::<Vec<_>>(), want);
}

#[test]
fn corrupted_byte_gives_one_fault_and_state_survives_reconnects() {
    let endpoint = EmulatorEndpoint::bind("127.0.0.1:0", MotorModel::default()).unwrap();
    let (addr, handle) = serve_once(endpoint, 2);
    let event = slosh_core::engine::PulseCommand {
        t_start: 0.0,
        motor: 2,
        duration_ms: 80,
        strength: 200,
        cause: slosh_core::engine::Cause::Proximity,
    };
    let good = frame_for(&event).unwrap();
    let mut bad = good;
    bad[2] ^= 0x10;

    let mut s = TcpStream::connect(addr).unwrap();
    s.write_all(&bad).unwrap();
    s.write_all(&good).unwrap();
    drop(s);
    // Second connection: the earlier activation must still be there.
    thread::sleep(Duration::from_millis(50));
    let mut s = TcpStream::connect(addr).unwrap();
    s.write_all(&good).unwrap();
    drop(s);

    let endpoint = handle.join().unwrap();
    let state = endpoint.state();
    let state = state.lock().unwrap();
    assert_eq!(state.faults().len(), 1);
    assert_eq!(state.activations().len(), 2);
    assert!(state.activations().iter().all(|a| a.command.motor == 2 && a.command.strength == 200));
}

#[test]
fn idle_heartbeat_reports_quiet_motors() {
    let endpoint = EmulatorEndpoint::bind("127.0.0.1:0", MotorModel::default()).unwrap();
    let sink = Shared::default();
    let beat = endpoint.heartbeat(Duration::from_millis(20), Box::new(sink.clone()));
    thread::sleep(Duration::from_millis(150));
    drop(beat);
    let text = String::from_utf8(sink.0.lock().unwrap().clone()).unwrap();
    let dumps: Vec<StateDump> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(dumps.len() >= 3, "{} dumps", dumps.len());
    for d in &dumps {
        assert_eq!(d.motors.len(), 8);
        assert!(d.motors.iter().all(|m| !m.active));
        assert_eq!(d.total_power_w, 0.0);
        assert_eq!(d.energy_j, 0.0);
    }
    assert!(dumps.windows(2).all(|w| w[0].clock_ms <= w[1].clock_ms));
}
