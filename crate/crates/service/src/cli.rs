//! Command line front end.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use hda_access::client::{resolve_bar, ControllerBinding};
use hda_access::codec::{param, WidgetKind};
use hda_access::controller::ControllerModel;
use hda_access::profile::Profile;
use hda_access::render::{timeline_to_pcm, write_wav, RenderConfig};
use hda_access::screenreader::{Form, ToneTable};
use hda_access::verb::{decode_trace, CodecAddress, NodeId, VerbCatalog, VerbCommand, VerbId};
use hda_access::Millis;

use crate::script::parse_script;
use crate::session::Session;

#[derive(Debug, Parser)]
#[command(name = "hda-access", version, about = "Simulated HDA beep screen reader")]
pub struct Cli {
    /// Machine profile (TOML); the built-in cx-default profile otherwise.
    #[arg(long, global = true, env = "ACCESS_PROFILE")]
    pub profile: Option<PathBuf>,

    /// Override the controller's command latency, in steps.
    #[arg(long, global = true)]
    pub latency_steps: Option<u32>,

    /// Tone table overrides (TOML).
    #[arg(long, global = true)]
    pub tones: Option<PathBuf>,

    /// Form definition (TOML); the built-in demo-bios form otherwise.
    #[arg(long, global = true)]
    pub form: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Controller PCI identity, BAR and codec identity.
    Info,
    /// Walk the codec topology.
    Enumerate,
    /// Send one verb and print the response. All arguments are hex; VERB may
    /// also be a catalog name such as GetParameter.
    Verb {
        cad: String,
        nid: String,
        verb: String,
        payload: String,
    },
    /// Play DIVIDER on the beep generator for MS milliseconds and save it.
    Beep {
        divider: u8,
        ms: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a key script through the screen reader.
    Demo {
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the transcript; printed to stdout otherwise.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
    },
    /// Decode a file of hex command words.
    DecodeTrace { file: PathBuf },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

impl Cli {
    pub fn load_profile(&self) -> Result<Profile> {
        let mut profile = match &self.profile {
            Some(p) => Profile::load(p)?,
            None => Profile::cx_default(),
        };
        if let Some(n) = self.latency_steps {
            if n == 0 {
                bail!("--latency-steps must be at least 1");
            }
            profile.controller.latency_steps = n;
        }
        Ok(profile)
    }

    fn load_form(&self) -> Result<Form> {
        Ok(match &self.form {
            Some(p) => Form::load(p)?,
            None => Form::demo_bios(),
        })
    }

    fn load_tones(&self) -> Result<ToneTable> {
        Ok(match &self.tones {
            Some(p) => ToneTable::from_toml_str(&read(p)?)?,
            None => ToneTable::default(),
        })
    }

    pub fn session(&self) -> Result<Session> {
        Ok(Session::new(&self.load_profile()?, self.load_form()?, self.load_tones()?)?)
    }
}

fn machine(profile: &Profile) -> Result<(ControllerModel, ControllerBinding)> {
    let mut ctrl = profile.build_controller()?;
    let binding = ControllerBinding::establish(&mut ctrl)?;
    Ok((ctrl, binding))
}

fn parse_hex(what: &str, s: &str) -> Result<u32> {
    let digits = s.trim_start_matches("0x").trim_start_matches("0X");
    u32::from_str_radix(digits, 16).map_err(|_| anyhow!("{what}: {s:?} is not a hex number"))
}

/// A verb argument: a catalog name, or a hex id. Ids up to 0xF that the
/// catalog lists as long-form select the 4-bit form.
pub fn parse_verb_id(s: &str, catalog: &VerbCatalog) -> Result<VerbId> {
    if let Some(v) = catalog.lookup(s) {
        return Ok(v);
    }
    let id = parse_hex("verb", s)?;
    if id <= 0xF && catalog.is_long_id(id as u8) {
        Ok(VerbId::Long(id as u8))
    } else if id <= 0xFFF {
        Ok(VerbId::Short(id as u16))
    } else {
        bail!("verb: {s:?} is neither a catalog name nor a 12-bit id")
    }
}

pub fn verb_command(cad: &str, nid: &str, verb: &str, payload: &str, catalog: &VerbCatalog) -> Result<VerbCommand> {
    let cad = parse_hex("cad", cad)?;
    let cad = CodecAddress::new(u8::try_from(cad).unwrap_or(u8::MAX))?;
    let nid = parse_hex("nid", nid)?;
    let nid = u8::try_from(nid).map_err(|_| anyhow!("nid: {nid:#x} exceeds 0xFF"))?;
    let payload = parse_hex("payload", payload)?;
    let payload = u16::try_from(payload).map_err(|_| anyhow!("payload: {payload:#x} exceeds 16 bits"))?;
    let cmd = VerbCommand::new(cad, NodeId(nid), parse_verb_id(verb, catalog)?, payload);
    catalog.validate(&cmd)?;
    Ok(cmd)
}

pub fn info(profile: &Profile) -> Result<String> {
    let (mut ctrl, binding) = machine(profile)?;
    let cfg = ctrl.config_space().clone();
    let (class, subclass, _) = cfg.class_code();
    let cad = CodecAddress::default();
    let vendor = binding.send(&mut ctrl, &VerbCommand::get_parameter(cad, NodeId::ROOT, param::VENDOR_ID))?;
    let revision = binding.send(&mut ctrl, &VerbCommand::get_parameter(cad, NodeId::ROOT, param::REVISION_ID))?;
    let mut out = String::new();
    writeln!(out, "profile     {}", profile.name)?;
    writeln!(
        out,
        "controller  {} vendor {:#06x} device {:#06x} class {class:02x}/{subclass:02x}",
        binding.pci(),
        cfg.vendor_id(),
        cfg.device_id()
    )?;
    writeln!(out, "bar         {:#010X} (HDBARL {:#010X})", resolve_bar(&cfg)?, cfg.hdbarl())?;
    writeln!(out, "codec 0     vendor {vendor} revision {revision}")?;
    Ok(out)
}

pub fn enumerate(profile: &Profile) -> Result<String> {
    let (mut ctrl, binding) = machine(profile)?;
    let topo = binding.discover(&mut ctrl, CodecAddress::default())?;
    let mut out = String::new();
    for n in &topo.nodes {
        let field = match n.kind {
            WidgetKind::Root => "subordinates",
            WidgetKind::FunctionGroup => "type",
            _ => "caps",
        };
        writeln!(out, "{} {} {field}={:#010X}", n.nid, n.kind, n.raw)?;
    }
    Ok(out)
}

pub fn verb(profile: &Profile, cmd: &VerbCommand) -> Result<String> {
    let (mut ctrl, binding) = machine(profile)?;
    let response = binding.send(&mut ctrl, cmd)?;
    Ok(format!("{response}\n"))
}

/// Drives the beep generator through the full stack and renders the result.
pub fn beep(profile: &Profile, divider: u8, ms: u64) -> Result<Vec<u8>> {
    if ms == 0 {
        bail!("duration must be positive");
    }
    let (mut ctrl, binding) = machine(profile)?;
    let cad = CodecAddress::default();
    let nid = hda_access::client::find_beep_generator(&binding.discover(&mut ctrl, cad)?)?;
    let start = ctrl.clock_ms();
    binding.send(&mut ctrl, &VerbCommand::set_beep(cad, nid, divider))?;
    ctrl.advance_clock(Millis::from_integer(ms))?;
    binding.send(&mut ctrl, &VerbCommand::set_beep(cad, nid, 0))?;
    let timeline = ctrl.codec(cad).expect("codec 0 attached").beep_timeline(nid)?;
    let window = timeline.window(start, ctrl.clock_ms());
    let pcm = timeline_to_pcm(&window, Millis::from_integer(ms), &RenderConfig::default())?;
    Ok(write_wav(&pcm))
}

/// Replays `script` and returns the session's WAV and transcript.
pub fn demo(mut session: Session, script: &str) -> Result<(Vec<u8>, String)> {
    for key in parse_script(script)? {
        session.press(key)?;
    }
    Ok((session.session_wav()?, session.transcript()))
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Info => print!("{}", info(&cli.load_profile()?)?),
        Command::Enumerate => print!("{}", enumerate(&cli.load_profile()?)?),
        Command::Verb {
            cad,
            nid,
            verb: v,
            payload,
        } => {
            let profile = cli.load_profile()?;
            let cmd = verb_command(cad, nid, v, payload, &profile.catalog)?;
            print!("{}", verb(&profile, &cmd)?);
        }
        Command::Beep { divider, ms, out } => {
            write(out, &beep(&cli.load_profile()?, *divider, *ms)?)?;
        }
        Command::Demo {
            script,
            out,
            transcript,
        } => {
            let (wav, text) = demo(cli.session()?, &read(script)?)?;
            write(out, &wav)?;
            match transcript {
                Some(p) => write(p, text.as_bytes())?,
                None => print!("{text}"),
            }
        }
        Command::Serve { port, bind } => {
            let session = cli.session()?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::serve(session, bind, *port))?;
        }
        Command::DecodeTrace { file } => {
            let profile = cli.load_profile()?;
            for line in decode_trace(&read(file)?, &profile.catalog)? {
                println!("{line}");
            }
        }
    }
    Ok(())
}
