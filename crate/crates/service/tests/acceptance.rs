//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use hda_access::client::{find_beep_generator, resolve_bar, send_verb, ClientError, ControllerBinding};
use hda_access::controller::{regs, AccessKind, ControllerModel, Mmio, PciConfigSpace, RegisterAccess};
use hda_access::profile::Profile;
use hda_access::screenreader::{Form, Key};
use hda_access::verb::{default_catalog, CodecAddress, NodeId, VerbCommand, VerbId};
use hda_access_service::cli;
use hda_access_service::script::parse_script;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BIN: &str = env!("CARGO_BIN_EXE_hda-access");
const SCRIPTS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/scripts");

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !($cond) {
            return Err(format!($($fmt)+));
        }
    };
}

fn run_cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(BIN)
        .args(args)
        .env_remove("ACCESS_PROFILE")
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "{args:?} exited {}: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn within(limit: Duration, start: Instant) -> Result<Duration, String> {
    let took = start.elapsed();
    ensure!(took < limit, "took {took:?}, limit {limit:?}");
    Ok(took)
}

fn node0_ground_truth() -> Outcome {
    let start = Instant::now();
    let vendor = run_cli(&["verb", "0", "0", "F00", "00"])?;
    let revision = run_cli(&["verb", "0", "0", "F00", "02"])?;
    ensure!(vendor.trim() == "0x14F1510F", "vendor printed {vendor:?}");
    ensure!(revision.trim() == "0x00100100", "revision printed {revision:?}");
    let took = within(Duration::from_secs(1), start)?;
    Ok(format!("0x14F1510F / 0x00100100 in {took:?}"))
}

fn ready(latency: u32) -> (ControllerModel, ControllerBinding) {
    let mut profile = Profile::cx_default();
    profile.controller.latency_steps = latency;
    let mut ctrl = profile.build_controller().unwrap();
    let binding = ControllerBinding::establish(&mut ctrl).unwrap();
    (ctrl, binding)
}

fn trace_reproduction() -> Outcome {
    let icis = |kind, value| RegisterAccess {
        kind,
        offset: regs::ICIS,
        width: 4,
        value,
    };
    for latency in 1..=5u32 {
        let (mut ctrl, b) = ready(latency);
        ctrl.enable_trace();
        let cmd = VerbCommand::get_parameter(CodecAddress::default(), NodeId(0), 0);
        let word = cmd.encode().unwrap();
        let r = send_verb(&b, &mut ctrl, &cmd, 100, |c| c.step(1)).map_err(|e| e.to_string())?;
        ensure!(r.0 == 0x14F1_510F, "response {r}");

        // idle check, command out, busy set, busy polls, response in, ack
        let mut expected = vec![
            icis(AccessKind::Read, 0),
            RegisterAccess {
                kind: AccessKind::Write,
                offset: regs::ICOI,
                width: 4,
                value: word,
            },
            icis(AccessKind::Write, 1),
        ];
        expected.extend((1..latency).map(|_| icis(AccessKind::Read, 1)));
        expected.push(icis(AccessKind::Read, 2));
        expected.push(RegisterAccess {
            kind: AccessKind::Read,
            offset: regs::ICII,
            width: 4,
            value: 0x14F1_510F,
        });
        expected.push(icis(AccessKind::Write, 2));
        let trace = ctrl.take_trace();
        ensure!(trace == expected, "latency {latency}: trace {trace:?}");
        ensure!(ctrl.fault_log().is_empty(), "faults {:?}", ctrl.fault_log());
    }
    Ok("ICIS idle read, ICOI write, ICB set, ICIS busy polls, ICII read, IRV ack; 0 faults (latency 1..5)".into())
}

fn bar_masking() -> Outcome {
    let cfg = PciConfigSpace::hda_function(0x8086, 0x1D20, 0xFEB0_0004, 0);
    let base = resolve_bar(&cfg).map_err(|e| e.to_string())?;
    ensure!(base == 0xFEB0_0000, "resolved {base:#010x}");
    let mut rng = ChaCha8Rng::seed_from_u64(0xBA5E);
    for _ in 0..100_000 {
        let hdbarl: u32 = rng.random_range(1..=u32::MAX);
        let base = resolve_bar(&PciConfigSpace::hda_function(0x8086, 0x1D20, hdbarl, 0)).map_err(|e| e.to_string())?;
        ensure!(base & 0xF == 0, "HDBARL {hdbarl:#010x} resolved to {base:#010x}");
        ensure!(base == hdbarl & 0xFFFF_FFF0, "HDBARL {hdbarl:#010x} resolved to {base:#010x}");
    }
    Ok("0xFEB00004 -> 0xFEB00000; low nibble clear for 100000 random HDBARL".into())
}

/// Sign flips between consecutive nonzero samples of a 16-bit mono WAV body.
fn crossings_per_second(wav: &[u8]) -> f64 {
    let samples: Vec<i16> = wav[44..]
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]))
        .collect();
    let mut flips = 0usize;
    let mut last = 0i16;
    for &s in samples.iter().filter(|s| **s != 0) {
        if last != 0 && (s > 0) != (last > 0) {
            flips += 1;
        }
        last = s;
    }
    flips as f64 / 2.0 / (samples.len() as f64 / 48_000.0)
}

fn beep_fidelity() -> Outcome {
    let start = Instant::now();
    let profile = Profile::cx_default();
    let mut worst = 0.0f64;
    for d in [1u8, 2, 5, 10, 50, 100, 200, 255] {
        let wav = cli::beep(&profile, d, 1000).map_err(|e| e.to_string())?;
        ensure!(wav.len() == 96_044, "d={d}: {} bytes", wav.len());
        let expected = 12_000.0 / f64::from(d);
        let measured = crossings_per_second(&wav);
        let err = (measured - expected).abs();
        ensure!(err <= 1.0, "d={d}: measured {measured} Hz, expected {expected} Hz");
        worst = worst.max(err);
    }
    let took = within(Duration::from_secs(5), start)?;
    Ok(format!("8 dividers, worst error {worst:.3} Hz, {took:?}"))
}

fn random_command(rng: &mut ChaCha8Rng) -> VerbCommand {
    const LONG: [u8; 4] = [0x2, 0x3, 0xA, 0xB];
    let cad = CodecAddress::new(rng.random_range(0..=15)).unwrap();
    let nid = NodeId(rng.random());
    if rng.random_bool(0.3) {
        let id = LONG[rng.random_range(0..LONG.len())];
        VerbCommand::new(cad, nid, VerbId::Long(id), rng.random())
    } else {
        let id = loop {
            let id: u16 = rng.random_range(0..=0xFFF);
            if !LONG.contains(&((id >> 8) as u8)) {
                break id;
            }
        };
        VerbCommand::new(cad, nid, VerbId::Short(id), rng.random_range(0..=0xFF))
    }
}

fn round_trip() -> Outcome {
    let start = Instant::now();
    let catalog = default_catalog();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    for i in 0..100_000 {
        let cmd = random_command(&mut rng);
        let word = cmd.encode().map_err(|e| format!("#{i} {cmd:?}: {e}"))?;
        let back = VerbCommand::decode(word, &catalog);
        ensure!(back == cmd, "#{i}: {cmd:?} -> {word:#010x} -> {back:?}");
    }
    let took = within(Duration::from_secs(5), start)?;
    Ok(format!("100000 commands in {took:?}"))
}

fn fsm_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF5A);
    let mut steps_checked = 0u64;
    for run in 0..2_000 {
        let (mut ctrl, _) = ready(rng.random_range(1..=4));
        for _ in 0..100 {
            match rng.random_range(0..6) {
                0 => {
                    let cad = if rng.random_bool(0.9) { 0 } else { 5 };
                    let word = VerbCommand::get_parameter(CodecAddress::new(cad).unwrap(), NodeId(0), rng.random_range(0..10))
                        .encode()
                        .unwrap();
                    ctrl.mmio_write(regs::ICOI, 4, word).unwrap();
                }
                1 => ctrl.mmio_write(regs::ICIS, 2, 1).unwrap(),
                2 => ctrl.mmio_write(regs::ICIS, 2, 2).unwrap(),
                3 => {
                    ctrl.mmio_read(regs::ICIS, 2).unwrap();
                }
                _ => {
                    ctrl.step(rng.random_range(1..=3));
                    steps_checked += 1;
                    let r = ctrl.registers();
                    ensure!(!(r.icb() && r.irv()), "run {run}: ICB=1 and IRV=1 after step");
                }
            }
            ensure!(ctrl.pending().is_some() == ctrl.registers().icb(), "run {run}: pending/ICB disagree");
        }
    }

    let cmd = VerbCommand::get_parameter(CodecAddress::default(), NodeId(0), 0);
    for latency in 1..=24u32 {
        for max_polls in 1..=24u32 {
            let (mut ctrl, b) = ready(latency);
            let r = send_verb(&b, &mut ctrl, &cmd, max_polls, |c| c.step(1));
            let timed_out = matches!(r, Err(ClientError::ResponseTimeout(_)));
            ensure!(
                timed_out == (latency > max_polls),
                "latency {latency}, max_polls {max_polls}: {r:?}"
            );
        }
    }
    Ok(format!("{steps_checked} random steps without ICB&IRV; timeout iff latency > max_polls over 24x24 grid"))
}

fn topology() -> Outcome {
    let (mut ctrl, b) = ready(1);
    let topo = b.discover(&mut ctrl, CodecAddress::default()).map_err(|e| e.to_string())?;
    let nid = find_beep_generator(&topo).map_err(|e| e.to_string())?;
    ensure!(nid == NodeId(0x12), "beep generator at {nid}");
    let node = topo.nodes.iter().find(|n| n.nid == nid).unwrap();
    let widget_type = (node.raw >> 20) & 0xF;
    ensure!(widget_type == 0x7, "widget type {widget_type:#x}");
    let listing = run_cli(&["enumerate"])?;
    ensure!(
        listing.lines().any(|l| l.starts_with("0x12 beep-generator")),
        "enumerate output:\n{listing}"
    );
    Ok(format!("beep generator at 0x12, caps {:#010X}, widget type 0x7", node.raw))
}

/// Announcement length from the tone code's arithmetic: 120 ms earcon, then a
/// 20 ms gap and 80 ms per label character.
fn announcement_ms(label: &str) -> u64 {
    let chars = label.chars().count() as u64;
    if chars == 0 {
        120
    } else {
        120 + 20 + 80 * chars
    }
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let script = Path::new(SCRIPTS).join("tab-tab-enter.keys");
    let mut outputs = Vec::new();
    for run in 0..2 {
        let wav = dir.path().join(format!("run{run}.wav"));
        let txt = dir.path().join(format!("run{run}.txt"));
        run_cli(&[
            "demo",
            "--script",
            script.to_str().unwrap(),
            "--out",
            wav.to_str().unwrap(),
            "--transcript",
            txt.to_str().unwrap(),
        ])?;
        outputs.push((std::fs::read(&wav).unwrap(), std::fs::read(&txt).unwrap()));
    }
    ensure!(outputs[0].0 == outputs[1].0, "WAV files differ");
    ensure!(outputs[0].1 == outputs[1].1, "transcripts differ");

    let keys: Vec<Key> = parse_script(&std::fs::read_to_string(&script).unwrap()).map_err(|e| e.to_string())?;
    let mut form = Form::demo_bios();
    let mut total_ms = 0;
    for k in keys {
        for ev in form.handle_key(k) {
            total_ms += announcement_ms(&form.field(&ev.field_id).unwrap().label);
        }
    }
    let wav = &outputs[0].0;
    let frames = (wav.len() - 44) as i64 / 2;
    let expected = (total_ms * 48) as i64;
    ensure!((frames - expected).abs() <= 1, "{frames} frames, expected {expected}");
    let transcript = String::from_utf8_lossy(&outputs[0].1);
    Ok(format!(
        "identical outputs; {frames} frames = {total_ms} ms; transcript {:?}",
        transcript.lines().collect::<Vec<_>>()
    ))
}

fn main() {
    let criteria: [Check; 8] = [
        ("node-0 ground truth", node0_ground_truth),
        ("register trace reproduction", trace_reproduction),
        ("BAR masking", bar_masking),
        ("beep fidelity", beep_fidelity),
        ("encode/decode round-trip", round_trip),
        ("FSM invariants", fsm_invariants),
        ("topology", topology),
        ("end-to-end determinism", end_to_end),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
