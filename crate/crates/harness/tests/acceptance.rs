//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runtime limits are part of each criterion.

mod common;

use std::f64::consts::TAU;
use std::time::Instant;

use slosh_core::acoustics::{impact_duration, load_pcm, quantize, AudioClip, DEFAULT_NOISE_FLOOR};
use slosh_core::calibration::{calibrate, default_mix, generate_motion, MotionKind, MotionSpec};
use slosh_core::device::{decode, encode, power_draw, Decoded, MotorCommand, MotorModel, StreamDecoder, MAX_MOTOR};
use slosh_core::engine::{run_engine, Cause, PulseCommand, DEFAULT_ACCEL_THRESHOLD};
use slosh_core::fluid::{settle, FluidParams, FluidSolver};
use slosh_core::pose::{trajectory_drives, Drive};
use slosh_core::vessel::{ActuatorLayout, VesselProfile};
use slosh_harness::pipeline::{analyze, run_simulate, AnalyzeOptions};
use slosh_harness::{formats, simulate, SessionConfig, SimulationOutput};

type Outcome = Result<String, String>;
/// Name, runtime limit (s), check.
type Criterion = (&'static str, f64, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run_preset(cfg: &SessionConfig, spec: MotionSpec) -> SimulationOutput {
    let poses = generate_motion(&spec, cfg.timestep).expect("preset motion");
    simulate(cfg, &poses).expect("simulation")
}

fn pulse_duration() -> Outcome {
    // Slow presets emit nothing (see the silence criterion), so the suite is
    // the fast presets on every vessel, each trace replayed for every motor
    // count and strength.
    let mut total = 0;
    let mut bad = 0;
    let mut runs = 0;
    for vessel in VesselProfile::builtin_names() {
        let cfg = SessionConfig { vessel: vessel.into(), ..SessionConfig::default() };
        let profile = cfg.profile().unwrap();
        for kind in MotionKind::ALL {
            let out = run_preset(&cfg, MotionSpec::fast(kind, 3.0));
            for n in [4, 6, 8] {
                for strength in [150u8, 200, 255] {
                    let layout = ActuatorLayout::with_defaults(&profile, n).unwrap();
                    let trigger = slosh_core::engine::TriggerConfig { pulse_strength: strength, ..cfg.trigger.clone() };
                    let events = run_engine(&out.cog, &layout, &trigger, cfg.fill_height_for(&profile), cfg.timestep).unwrap();
                    runs += 1;
                    total += events.len();
                    bad += events.iter().filter(|e| e.duration_ms != 80).count();
                }
            }
        }
    }
    check(total > 0 && bad == 0, format!("{total} pulses over {runs} configurations, {bad} not 80 ms"))
}

fn slow_silence() -> Outcome {
    let cfg = SessionConfig::default();
    let counts: Vec<usize> =
        MotionKind::ALL.iter().map(|&k| run_preset(&cfg, MotionSpec::slow(k, 30.0)).events.len()).collect();
    check(counts.iter().all(|&c| c == 0), format!("events sway/shake/swirl = {counts:?}"))
}

fn fast_sway_laterality() -> Outcome {
    let cfg = SessionConfig::default();
    let spec = MotionSpec::fast(MotionKind::Sway, 10.0);
    let events = run_preset(&cfg, spec).events;
    let layout = cfg.layout_for(&cfg.profile().unwrap()).unwrap();
    let proximity: Vec<&PulseCommand> = events.iter().filter(|e| e.cause == Cause::Proximity).collect();
    // x = A sin(wt): the vessel decelerates while moving left when sin(wt) < 0.
    let in_phase: Vec<&&PulseCommand> =
        proximity.iter().filter(|e| (TAU * spec.frequency * e.t_start + spec.phase).sin() < 0.0).collect();
    let left = in_phase.iter().filter(|e| common::left_half(layout.azimuth(e.motor))).count();
    let share = if in_phase.is_empty() { 0.0 } else { left as f64 / in_phase.len() as f64 };
    check(
        !proximity.is_empty() && !in_phase.is_empty() && share >= 0.8,
        format!("{} proximity events, {left}/{} in leftward-deceleration half-cycles on the left ({:.0}%)", proximity.len(), in_phase.len(), share * 100.0),
    )
}

fn vertical_synchrony() -> Outcome {
    let cfg = SessionConfig::default();
    let out = run_preset(&cfg, MotionSpec::fast(MotionKind::Shake, 10.0));
    let profile = cfg.profile().unwrap();
    let mut notes = Vec::new();
    let mut ok = true;
    for n in [4, 6, 8] {
        let layout = ActuatorLayout::with_defaults(&profile, n).unwrap();
        let mut c = cfg.clone();
        c.actuators.motor_count = n;
        let events = if n == 8 {
            out.events.clone()
        } else {
            run_engine(&out.cog, &layout, &c.trigger, c.fill_height_for(&profile), c.timestep).unwrap()
        };
        let vertical: Vec<&PulseCommand> = events.iter().filter(|e| e.cause == Cause::Vertical).collect();
        let mut starts: Vec<f64> = vertical.iter().map(|e| e.t_start).collect();
        starts.dedup();
        let full = starts
            .iter()
            .filter(|&&t| {
                let mut motors: Vec<usize> = vertical.iter().filter(|e| e.t_start == t).map(|e| e.motor).collect();
                motors.sort_unstable();
                motors == (0..n).collect::<Vec<_>>()
            })
            .count();
        ok &= full >= 1;
        notes.push(format!("{n} motors: {full}/{} bursts span all", starts.len()));
    }
    check(ok, notes.join("; "))
}

fn calibration_sanity() -> Outcome {
    let cfg = SessionConfig::default();
    let profile = cfg.profile().unwrap();
    let params = cfg.fluid_params();
    let full = calibrate(&profile, &params, &default_mix(600.0), 7).map_err(|e| e.to_string())?;
    let monotone = full.p25 <= full.p50 && full.p50 <= full.p75 && full.p75 <= full.p90;
    let matches_frozen = ((full.selected - DEFAULT_ACCEL_THRESHOLD) / DEFAULT_ACCEL_THRESHOLD).abs() < 1e-3;
    let smoke = default_mix(60.0);
    let a = calibrate(&profile, &params, &smoke, 7).map_err(|e| e.to_string())?;
    let b = calibrate(&profile, &params, &smoke, 7).map_err(|e| e.to_string())?;
    check(
        monotone && full.selected == full.p25 && matches_frozen && a == b,
        format!(
            "600 s: p25 {:.3e} p50 {:.3e} p75 {:.3e} p90 {:.3e}, selected = p25, frozen default reproduced: {matches_frozen}; 60 s repeat identical: {}",
            full.p25, full.p50, full.p75, full.p90, a == b
        ),
    )
}

fn fluid_invariants() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count_ok = true;
    for profile in [VesselProfile::beaker(), VesselProfile::erlen(), VesselProfile::florence()] {
        let params = FluidParams::default();
        let mut solver = FluidSolver::new(profile.clone(), params.clone()).unwrap();
        let mut state = solver.spawn().unwrap();
        let n = state.len();
        for kind in MotionKind::ALL {
            let poses = generate_motion(&MotionSpec::fast(kind, 2.0), params.timestep).unwrap();
            for drive in trajectory_drives(&poses, params.timestep, params.gravity).unwrap() {
                solver.step(&mut state, &drive).unwrap();
                count_ok &= state.len() == n;
                for p in &state.positions {
                    worst = worst.max((profile.project(p).point - p).norm());
                }
            }
        }
    }
    let params = FluidParams::default();
    let mut solver = FluidSolver::new(VesselProfile::beaker(), params.clone()).unwrap();
    let mut state = solver.spawn().unwrap();
    settle(&mut solver, &mut state, 5.0).unwrap();
    solver.step(&mut state, &Drive::at_rest(params.gravity)).unwrap();
    let cog = state.center_of_gravity();
    let off_axis = cog.x.hypot(cog.y);
    check(
        count_ok && worst <= 1e-3 && off_axis <= 1e-3,
        format!("count constant: {count_ok}; worst excursion {worst:.2e} m; settled CoG {off_axis:.2e} m off axis"),
    )
}

fn cog_oracle() -> Outcome {
    use rand::{Rng, SeedableRng};
    let vessels = [VesselProfile::beaker(), VesselProfile::erlen(), VesselProfile::florence()];
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let params = FluidParams { particle_count: rng.random_range(1..900), seed, ..FluidParams::default() };
        let mut solver = FluidSolver::new(vessels[seed as usize % 3].clone(), params.clone()).unwrap();
        let mut state = solver.spawn().unwrap();
        for _ in 0..rng.random_range(0..5) {
            solver.step(&mut state, &Drive::at_rest(params.gravity)).unwrap();
        }
        let got = state.center_of_gravity();
        let n = state.positions.len() as f64;
        for axis in 0..3 {
            let mut sum = 0.0;
            for p in &state.positions {
                sum += p[axis];
            }
            worst = worst.max((got[axis] - sum / n).abs());
        }
    }
    check(worst <= 1e-12, format!("100 configurations, worst deviation {worst:.1e} m"))
}

fn acoustics() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = common::impact_corpus(dir.path());
    let paths: Vec<_> = corpus.iter().map(|f| f.path.clone()).collect();
    let report = analyze(&paths, &AnalyzeOptions::default()).map_err(|e| e.to_string())?;
    let oracle = common::corpus_mean_ms(&corpus);
    let mean = report.mean_duration_ms.unwrap_or(f64::NAN);
    let corpus_ok = report.failures.is_empty() && (mean - oracle).abs() < 1e-9;

    let rate = 48_000u32;
    let cycle: Vec<f64> = (0..=240).map(|k| quantize((TAU * 200.0 * k as f64 / rate as f64).sin()) as f64 / 32768.0).collect();
    let sine = impact_duration(&AudioClip::mono(rate, cycle).unwrap(), 0, DEFAULT_NOISE_FLOOR).unwrap();
    let sample_ms = 1000.0 / rate as f64;
    let sine_ok = (sine.duration_ms - 5.0).abs() <= sample_ms;

    let mut scale_ok = true;
    for f in &corpus {
        let clip = load_pcm(&std::fs::read(&f.path).unwrap()).unwrap();
        for ch in 0..clip.channel_count() {
            let base = impact_duration(&clip, ch, DEFAULT_NOISE_FLOOR).unwrap();
            for k in [0.25, 0.5, 2.0, 4.0] {
                let scaled = AudioClip::new(
                    clip.sample_rate(),
                    (0..clip.channel_count()).map(|c| clip.channel(c).unwrap().iter().map(|x| x * k).collect()).collect(),
                )
                .unwrap();
                scale_ok &= impact_duration(&scaled, ch, DEFAULT_NOISE_FLOOR * k).unwrap() == base;
            }
        }
    }
    check(
        corpus_ok && sine_ok && scale_ok,
        format!(
            "81-clip mean {mean:.6} ms vs oracle {oracle:.6} ms; 200 Hz cycle {:.4} ms; scale invariance: {scale_ok}",
            sine.duration_ms
        ),
    )
}

fn protocol() -> Outcome {
    let mut round_trips = 0;
    let mut missed = 0;
    let mut corruptions = 0;
    for motor in 0..=MAX_MOTOR {
        for strength in [0u8, 150, 200, 255] {
            for duration_ms in [0u16, 80, 65535] {
                let cmd = MotorCommand { motor, strength, duration_ms };
                let frame = encode(&cmd).unwrap();
                if decode(&frame) == Ok(cmd) {
                    round_trips += 1;
                }
                for pos in 0..frame.len() {
                    for value in 0..=255u8 {
                        if value == frame[pos] {
                            continue;
                        }
                        let mut bad = frame;
                        bad[pos] = value;
                        corruptions += 1;
                        let accepted = if pos == 0 {
                            StreamDecoder::new().push(&bad).iter().any(|d| matches!(d, Decoded::Command(_)))
                        } else {
                            decode(&bad).is_ok()
                        };
                        missed += accepted as usize;
                    }
                }
            }
        }
    }
    let model = MotorModel::default();
    let full = power_draw(255, &model).average_power;
    let mid = power_draw(150, &model).effective_voltage;
    let power_ok = ((full - 1.645) / 1.645).abs() <= 0.01;
    let volt_ok = (mid - 2.94).abs() < 0.005;
    check(
        round_trips == 96 && missed == 0 && power_ok && volt_ok,
        format!("{round_trips}/96 round trips; {missed}/{corruptions} corruptions accepted; {full:.4} W at 255; {mid:.3} V at 150"),
    )
}

fn end_to_end_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = SessionConfig::default();
    let traj = dir.path().join("sway.jsonl");
    formats::save_trajectory(&traj, &generate_motion(&MotionSpec::fast(MotionKind::Swirl, 6.0), cfg.timestep).unwrap())
        .map_err(|e| e.to_string())?;
    let mut logs = Vec::new();
    for run in 0..2 {
        let events = dir.path().join(format!("events{run}.jsonl"));
        run_simulate(&cfg, &traj, &events, None).map_err(|e| e.to_string())?;
        logs.push(std::fs::read(&events).unwrap());
    }
    let lines = logs[0].iter().filter(|&&b| b == b'\n').count();
    check(lines > 0 && logs[0] == logs[1], format!("{lines} event lines, identical: {}", logs[0] == logs[1]))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("pulse duration", 10.0, pulse_duration),
        ("slow-motion silence", 30.0, slow_silence),
        ("fast-sway laterality", 60.0, fast_sway_laterality),
        ("vertical-shake synchrony", 60.0, vertical_synchrony),
        ("calibration sanity", 300.0, calibration_sanity),
        ("fluid invariants", f64::INFINITY, fluid_invariants),
        ("CoG oracle", f64::INFINITY, cog_oracle),
        ("acoustics", f64::INFINITY, acoustics),
        ("protocol", f64::INFINITY, protocol),
        ("end-to-end determinism", f64::INFINITY, end_to_end_determinism),
    ];
    let mut failed = 0;
    for (name, limit, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match outcome {
            Ok(d) if secs <= limit => (true, d),
            Ok(d) => (false, format!("{d}; over the {limit} s limit")),
            Err(d) => (false, d),
        };
        failed += !pass as usize;
        println!("{} {name}: {detail} [{secs:.1} s]", if pass { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
