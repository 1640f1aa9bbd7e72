//! Simulated HDA controller.
//!
//! Models the PCI function, the MMIO register window and the immediate command
//! interface. A command armed through ICIS completes after `latency_steps`
//! calls to [`ControllerModel::step`]; the clock only moves through
//! [`ControllerModel::advance_clock`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::codec::CodecModel;
use crate::verb::{CodecAddress, VerbCatalog, VerbCommand};
use crate::Millis;

/// MMIO register offsets and bits.
pub mod regs {
    pub const GCAP: u32 = 0x00;
    pub const VMIN: u32 = 0x02;
    pub const VMAJ: u32 = 0x03;
    pub const GCTL: u32 = 0x08;
    pub const STATESTS: u32 = 0x0E;
    pub const ICOI: u32 = 0x60;
    pub const ICII: u32 = 0x64;
    pub const ICIS: u32 = 0x68;

    /// Size of the simulated MMIO window. CORB/RIRB (0x40..0x5F) read as zero.
    pub const MMIO_SIZE: u32 = 0x80;

    pub const GCTL_CRST: u32 = 1 << 0;
    const GCTL_FCNTRL: u32 = 1 << 1;
    const GCTL_UNSOL: u32 = 1 << 8;
    pub(super) const GCTL_IMPLEMENTED: u32 = GCTL_CRST | GCTL_FCNTRL | GCTL_UNSOL;

    pub const ICIS_ICB: u16 = 1 << 0;
    pub const ICIS_IRV: u16 = 1 << 1;
}

/// PCI config space offsets.
pub mod pci {
    pub const VENDOR_ID: usize = 0x00;
    pub const DEVICE_ID: usize = 0x02;
    pub const PROG_IF: usize = 0x09;
    pub const SUBCLASS: usize = 0x0A;
    pub const CLASS: usize = 0x0B;
    pub const HDBARL: usize = 0x10;
    pub const HDBARU: usize = 0x14;

    pub const CLASS_MULTIMEDIA: u8 = 0x04;
    pub const SUBCLASS_AUDIO_DEVICE: u8 = 0x03;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ControllerError {
    #[error("no such device at PCI {0}")]
    NoSuchDevice(PciAddress),
    #[error("invalid PCI address {0:?}")]
    InvalidPciAddress(String),
    #[error("config access at {offset:#x} width {width} outside the 256-byte space")]
    ConfigRange { offset: usize, width: usize },
    #[error("access width {0} not one of 1, 2, 4")]
    BadWidth(usize),
    #[error("MMIO access at {offset:#x} width {width} outside the register window")]
    OutOfWindow { offset: u32, width: usize },
    #[error("clock delta must be positive")]
    NonPositiveDelta,
    #[error("codec address {0} already occupied")]
    DuplicateCodec(CodecAddress),
    #[error("latency_steps must be at least 1")]
    ZeroLatency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PciAddress {
    pub bus: u8,
    pub device: u8,
    pub function: u8,
}

impl PciAddress {
    /// Where the HDA function lives on the chipsets this models.
    pub const HDA_DEFAULT: PciAddress = PciAddress {
        bus: 0,
        device: 27,
        function: 0,
    };

    pub fn new(bus: u8, device: u8, function: u8) -> Result<Self, ControllerError> {
        if device > 31 || function > 7 {
            return Err(ControllerError::InvalidPciAddress(format!(
                "{bus}:{device}:{function}"
            )));
        }
        Ok(PciAddress {
            bus,
            device,
            function,
        })
    }
}

impl fmt::Display for PciAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.bus, self.device, self.function)
    }
}

impl FromStr for PciAddress {
    type Err = ControllerError;

    /// Parses `bus:device:function` in decimal.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ControllerError::InvalidPciAddress(s.to_owned());
        let parts: Vec<u8> = s
            .split(':')
            .map(|p| p.trim().parse::<u8>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?;
        match parts[..] {
            [b, d, f] => PciAddress::new(b, d, f).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

fn check_width(width: usize) -> Result<(), ControllerError> {
    match width {
        1 | 2 | 4 => Ok(()),
        w => Err(ControllerError::BadWidth(w)),
    }
}

/// 256 bytes of type-0 configuration space.
#[derive(Clone, PartialEq, Eq)]
pub struct PciConfigSpace {
    raw: [u8; 256],
}

impl fmt::Debug for PciConfigSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PciConfigSpace")
            .field("vendor_id", &format_args!("{:#06x}", self.vendor_id()))
            .field("device_id", &format_args!("{:#06x}", self.device_id()))
            .field("class_code", &self.class_code())
            .field("hdbarl", &format_args!("{:#010x}", self.hdbarl()))
            .finish()
    }
}

impl Default for PciConfigSpace {
    fn default() -> Self {
        PciConfigSpace { raw: [0; 256] }
    }
}

impl PciConfigSpace {
    /// Config space of an HDA function (class 04h, subclass 03h).
    pub fn hda_function(vendor_id: u16, device_id: u16, hdbarl: u32, hdbaru: u32) -> Self {
        let mut cfg = PciConfigSpace::default();
        cfg.set(pci::VENDOR_ID, 2, vendor_id.into());
        cfg.set(pci::DEVICE_ID, 2, device_id.into());
        cfg.raw[pci::SUBCLASS] = pci::SUBCLASS_AUDIO_DEVICE;
        cfg.raw[pci::CLASS] = pci::CLASS_MULTIMEDIA;
        cfg.set(pci::HDBARL, 4, hdbarl);
        cfg.set(pci::HDBARU, 4, hdbaru);
        cfg
    }

    pub fn from_bytes(raw: [u8; 256]) -> Self {
        PciConfigSpace { raw }
    }

    pub fn bytes(&self) -> &[u8; 256] {
        &self.raw
    }

    /// Little-endian read.
    pub fn read(&self, offset: usize, width: usize) -> Result<u32, ControllerError> {
        check_width(width)?;
        if offset + width > self.raw.len() {
            return Err(ControllerError::ConfigRange { offset, width });
        }
        Ok(self.raw[offset..offset + width]
            .iter()
            .rev()
            .fold(0, |acc, b| (acc << 8) | u32::from(*b)))
    }

    pub fn write(&mut self, offset: usize, width: usize, value: u32) -> Result<(), ControllerError> {
        check_width(width)?;
        if offset + width > self.raw.len() {
            return Err(ControllerError::ConfigRange { offset, width });
        }
        self.set(offset, width, value);
        Ok(())
    }

    fn set(&mut self, offset: usize, width: usize, value: u32) {
        for i in 0..width {
            self.raw[offset + i] = (value >> (8 * i)) as u8;
        }
    }

    fn field(&self, offset: usize, width: usize) -> u32 {
        self.read(offset, width).expect("fixed in-range field")
    }

    pub fn vendor_id(&self) -> u16 {
        self.field(pci::VENDOR_ID, 2) as u16
    }

    pub fn device_id(&self) -> u16 {
        self.field(pci::DEVICE_ID, 2) as u16
    }

    /// `(class, subclass, prog-if)`.
    pub fn class_code(&self) -> (u8, u8, u8) {
        (
            self.raw[pci::CLASS],
            self.raw[pci::SUBCLASS],
            self.raw[pci::PROG_IF],
        )
    }

    pub fn is_hda_function(&self) -> bool {
        let (class, sub, _) = self.class_code();
        class == pci::CLASS_MULTIMEDIA && sub == pci::SUBCLASS_AUDIO_DEVICE
    }

    pub fn hdbarl(&self) -> u32 {
        self.field(pci::HDBARL, 4)
    }

    pub fn hdbaru(&self) -> u32 {
        self.field(pci::HDBARU, 4)
    }
}

/// Something that can enumerate PCI functions.
pub trait PciScanner {
    /// All present functions, in scan order.
    fn enumerate(&self) -> Vec<(PciAddress, PciConfigSpace)>;

    fn probe(&self, addr: PciAddress) -> Option<PciConfigSpace> {
        self.enumerate()
            .into_iter()
            .find(|(a, _)| *a == addr)
            .map(|(_, c)| c)
    }
}

/// A plain bus of config spaces, for machines with more than one function.
#[derive(Debug, Clone, Default)]
pub struct PciBus {
    devices: BTreeMap<PciAddress, PciConfigSpace>,
}

impl PciBus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, addr: PciAddress, config: PciConfigSpace) {
        self.devices.insert(addr, config);
    }
}

impl PciScanner for PciBus {
    fn enumerate(&self) -> Vec<(PciAddress, PciConfigSpace)> {
        self.devices.iter().map(|(a, c)| (*a, c.clone())).collect()
    }

    fn probe(&self, addr: PciAddress) -> Option<PciConfigSpace> {
        self.devices.get(&addr).cloned()
    }
}

/// Register-level MMIO access.
pub trait Mmio {
    fn mmio_read(&mut self, offset: u32, width: usize) -> Result<u32, ControllerError>;
    fn mmio_write(&mut self, offset: u32, width: usize, value: u32) -> Result<(), ControllerError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ControllerRegisterFile {
    pub gcap: u16,
    pub vmin: u8,
    pub vmaj: u8,
    pub gctl: u32,
    pub statests: u16,
    pub icoi: u32,
    pub icii: u32,
    pub icis: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Reg {
    Gcap,
    Vmin,
    Vmaj,
    Gctl,
    Statests,
    Icoi,
    Icii,
    Icis,
}

const REG_MAP: [(u32, u32, Reg); 8] = [
    (regs::GCAP, 2, Reg::Gcap),
    (regs::VMIN, 1, Reg::Vmin),
    (regs::VMAJ, 1, Reg::Vmaj),
    (regs::GCTL, 4, Reg::Gctl),
    (regs::STATESTS, 2, Reg::Statests),
    (regs::ICOI, 4, Reg::Icoi),
    (regs::ICII, 4, Reg::Icii),
    (regs::ICIS, 2, Reg::Icis),
];

impl ControllerRegisterFile {
    fn power_on() -> Self {
        ControllerRegisterFile {
            // 4 output, 4 input streams, 64-bit addressing
            gcap: 0x4401,
            vmin: 0x00,
            vmaj: 0x01,
            ..Default::default()
        }
    }

    fn value(&self, reg: Reg) -> u32 {
        match reg {
            Reg::Gcap => self.gcap.into(),
            Reg::Vmin => self.vmin.into(),
            Reg::Vmaj => self.vmaj.into(),
            Reg::Gctl => self.gctl,
            Reg::Statests => self.statests.into(),
            Reg::Icoi => self.icoi,
            Reg::Icii => self.icii,
            Reg::Icis => self.icis.into(),
        }
    }

    fn read_byte(&self, offset: u32) -> u8 {
        REG_MAP
            .iter()
            .find(|(base, size, _)| (*base..base + size).contains(&offset))
            .map_or(0, |(base, _, reg)| (self.value(*reg) >> (8 * (offset - base))) as u8)
    }

    pub fn icb(&self) -> bool {
        self.icis & regs::ICIS_ICB != 0
    }

    pub fn irv(&self) -> bool {
        self.icis & regs::ICIS_IRV != 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultKind {
    /// ICOI written while a command was in flight; the new word replaces the
    /// pending one.
    IcoiWriteWhileBusy,
    /// ICB set while already busy.
    ArmWhileBusy,
    /// ICB set while an unconsumed response was still flagged by IRV; the
    /// old response is discarded.
    ArmWithUnreadResponse,
    /// ICB set while the controller is held in reset; ignored.
    CommandInReset,
    /// Command routed to a codec address with nothing attached.
    NoCodec(CodecAddress),
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultKind::IcoiWriteWhileBusy => f.write_str("ICOI written while ICB=1"),
            FaultKind::ArmWhileBusy => f.write_str("ICB set while ICB=1"),
            FaultKind::ArmWithUnreadResponse => f.write_str("ICB set while IRV=1"),
            FaultKind::CommandInReset => f.write_str("ICB set while in reset"),
            FaultKind::NoCodec(cad) => write!(f, "no codec at address {cad}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fault {
    pub kind: FaultKind,
    pub step: u64,
    pub clock_ms: Millis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    Read,
    Write,
}

/// One MMIO access, as seen by the trace recorder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegisterAccess {
    pub kind: AccessKind,
    pub offset: u32,
    pub width: usize,
    pub value: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingCommand {
    pub word: u32,
    pub steps_remaining: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CommandCounters {
    pub icoi_writes: u64,
    pub armed: u64,
    /// Responses produced by an attached codec.
    pub responses: u64,
}

/// Identity and timing of a simulated controller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControllerConfig {
    pub pci_address: PciAddress,
    pub vendor_id: u16,
    pub device_id: u16,
    pub bar_base: u32,
    /// Low flag bits of HDBARL (memory BAR type bits).
    pub bar_flags: u8,
    pub latency_steps: u32,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            pci_address: PciAddress::HDA_DEFAULT,
            vendor_id: 0x8086,
            device_id: 0x1D20,
            bar_base: 0xFEB0_0000,
            // 64-bit memory BAR
            bar_flags: 0x4,
            latency_steps: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ControllerModel {
    pci_address: PciAddress,
    pci: PciConfigSpace,
    regs: ControllerRegisterFile,
    pending: Option<PendingCommand>,
    latency_steps: u32,
    clock_ms: Millis,
    steps: u64,
    codecs: BTreeMap<CodecAddress, CodecModel>,
    catalog: VerbCatalog,
    fault_log: Vec<Fault>,
    counters: CommandCounters,
    trace: Option<Vec<RegisterAccess>>,
}

impl Default for ControllerModel {
    fn default() -> Self {
        ControllerModel::new(ControllerConfig::default()).expect("default config is valid")
    }
}

impl ControllerModel {
    pub fn new(config: ControllerConfig) -> Result<Self, ControllerError> {
        if config.latency_steps == 0 {
            return Err(ControllerError::ZeroLatency);
        }
        let hdbarl = (config.bar_base & 0xFFFF_FFF0) | u32::from(config.bar_flags & 0xF);
        Ok(ControllerModel {
            pci_address: config.pci_address,
            pci: PciConfigSpace::hda_function(config.vendor_id, config.device_id, hdbarl, 0),
            regs: ControllerRegisterFile::power_on(),
            pending: None,
            latency_steps: config.latency_steps,
            clock_ms: Millis::from_integer(0),
            steps: 0,
            codecs: BTreeMap::new(),
            catalog: VerbCatalog::default(),
            fault_log: Vec::new(),
            counters: CommandCounters::default(),
            trace: None,
        })
    }

    pub fn with_catalog(mut self, catalog: VerbCatalog) -> Self {
        self.catalog = catalog;
        self
    }

    pub fn catalog(&self) -> &VerbCatalog {
        &self.catalog
    }

    pub fn pci_address(&self) -> PciAddress {
        self.pci_address
    }

    pub fn config_space(&self) -> &PciConfigSpace {
        &self.pci
    }

    pub fn registers(&self) -> &ControllerRegisterFile {
        &self.regs
    }

    pub fn pending(&self) -> Option<PendingCommand> {
        self.pending
    }

    pub fn latency_steps(&self) -> u32 {
        self.latency_steps
    }

    pub fn set_latency_steps(&mut self, steps: u32) -> Result<(), ControllerError> {
        if steps == 0 {
            return Err(ControllerError::ZeroLatency);
        }
        self.latency_steps = steps;
        Ok(())
    }

    pub fn clock_ms(&self) -> Millis {
        self.clock_ms
    }

    pub fn fault_log(&self) -> &[Fault] {
        &self.fault_log
    }

    pub fn counters(&self) -> CommandCounters {
        self.counters
    }

    pub fn codec(&self, cad: CodecAddress) -> Option<&CodecModel> {
        self.codecs.get(&cad)
    }

    pub fn codec_mut(&mut self, cad: CodecAddress) -> Option<&mut CodecModel> {
        self.codecs.get_mut(&cad)
    }

    /// Starts recording every MMIO access. Clears any previous recording.
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    /// Returns the recorded accesses so far and keeps recording.
    pub fn take_trace(&mut self) -> Vec<RegisterAccess> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn config_read(
        &self,
        addr: PciAddress,
        offset: usize,
        width: usize,
    ) -> Result<u32, ControllerError> {
        if addr != self.pci_address {
            return Err(ControllerError::NoSuchDevice(addr));
        }
        self.pci.read(offset, width)
    }

    pub fn attach_codec(
        &mut self,
        cad: CodecAddress,
        codec: CodecModel,
    ) -> Result<(), ControllerError> {
        if self.codecs.contains_key(&cad) {
            return Err(ControllerError::DuplicateCodec(cad));
        }
        self.codecs.insert(cad, codec);
        if self.in_operation() {
            self.regs.statests |= 1 << cad.value();
        }
        Ok(())
    }

    /// Back to power-on state. Attached codecs stay attached but are reset.
    pub fn reset(&mut self) {
        self.regs = ControllerRegisterFile::power_on();
        self.pending = None;
        self.clock_ms = Millis::from_integer(0);
        self.steps = 0;
        self.fault_log.clear();
        self.counters = CommandCounters::default();
        if let Some(t) = self.trace.as_mut() {
            t.clear();
        }
        for codec in self.codecs.values_mut() {
            codec.reset();
        }
    }

    pub fn advance_clock(&mut self, delta_ms: Millis) -> Result<(), ControllerError> {
        if delta_ms <= Millis::from_integer(0) {
            return Err(ControllerError::NonPositiveDelta);
        }
        self.clock_ms += delta_ms;
        Ok(())
    }

    pub fn step(&mut self, n: u32) {
        for _ in 0..n {
            self.steps += 1;
            let Some(p) = self.pending.as_mut() else {
                continue;
            };
            p.steps_remaining -= 1;
            if p.steps_remaining == 0 {
                let word = p.word;
                self.pending = None;
                self.complete(word);
            }
        }
    }

    fn complete(&mut self, word: u32) {
        let cmd = VerbCommand::decode(word, &self.catalog);
        let response = match self.codecs.get_mut(&cmd.cad) {
            Some(codec) => {
                self.counters.responses += 1;
                codec.execute_verb(&cmd, self.clock_ms).0
            }
            None => {
                self.fault(FaultKind::NoCodec(cmd.cad));
                0
            }
        };
        self.regs.icii = response;
        self.regs.icis = (self.regs.icis & !regs::ICIS_ICB) | regs::ICIS_IRV;
    }

    fn in_operation(&self) -> bool {
        self.regs.gctl & regs::GCTL_CRST != 0
    }

    fn fault(&mut self, kind: FaultKind) {
        self.fault_log.push(Fault {
            kind,
            step: self.steps,
            clock_ms: self.clock_ms,
        });
    }

    fn check_window(offset: u32, width: usize) -> Result<(), ControllerError> {
        check_width(width)?;
        if u64::from(offset) + width as u64 > u64::from(regs::MMIO_SIZE) {
            return Err(ControllerError::OutOfWindow { offset, width });
        }
        Ok(())
    }

    fn record(&mut self, kind: AccessKind, offset: u32, width: usize, value: u32) {
        if let Some(t) = self.trace.as_mut() {
            t.push(RegisterAccess {
                kind,
                offset,
                width,
                value,
            });
        }
    }

    /// Applies the bytes of a write that land in `reg`. `written` and `mask`
    /// are aligned to the register's own byte 0.
    fn write_reg(&mut self, reg: Reg, written: u32, mask: u32) {
        let merged = |old: u32| (old & !mask) | (written & mask);
        match reg {
            Reg::Gcap | Reg::Vmin | Reg::Vmaj | Reg::Icii => {}
            Reg::Gctl => {
                let was_running = self.in_operation();
                self.regs.gctl = merged(self.regs.gctl) & regs::GCTL_IMPLEMENTED;
                match (was_running, self.in_operation()) {
                    (false, true) => {
                        self.regs.statests = self
                            .codecs
                            .keys()
                            .fold(0, |acc, cad| acc | (1 << cad.value()));
                    }
                    (true, false) => {
                        self.regs.statests = 0;
                        self.regs.icoi = 0;
                        self.regs.icii = 0;
                        self.regs.icis = 0;
                        self.pending = None;
                    }
                    _ => {}
                }
            }
            Reg::Statests => {
                // write-one-to-clear
                self.regs.statests &= !((written & mask) as u16);
            }
            Reg::Icoi => {
                self.counters.icoi_writes += 1;
                self.regs.icoi = merged(self.regs.icoi);
                if let Some(p) = self.pending.as_mut() {
                    p.word = self.regs.icoi;
                    self.fault(FaultKind::IcoiWriteWhileBusy);
                }
            }
            Reg::Icis => {
                let bits = (written & mask) as u16;
                if bits & regs::ICIS_IRV != 0 {
                    self.regs.icis &= !regs::ICIS_IRV;
                }
                if bits & regs::ICIS_ICB != 0 {
                    self.arm();
                }
            }
        }
    }

    fn arm(&mut self) {
        if !self.in_operation() {
            self.fault(FaultKind::CommandInReset);
            return;
        }
        if self.regs.icb() {
            self.fault(FaultKind::ArmWhileBusy);
            return;
        }
        if self.regs.irv() {
            self.fault(FaultKind::ArmWithUnreadResponse);
            self.regs.icis &= !regs::ICIS_IRV;
        }
        self.pending = Some(PendingCommand {
            word: self.regs.icoi,
            steps_remaining: self.latency_steps,
        });
        self.regs.icis |= regs::ICIS_ICB;
        self.counters.armed += 1;
    }
}

impl Mmio for ControllerModel {
    fn mmio_read(&mut self, offset: u32, width: usize) -> Result<u32, ControllerError> {
        Self::check_window(offset, width)?;
        let value = (0..width as u32)
            .rev()
            .fold(0, |acc, i| (acc << 8) | u32::from(self.regs.read_byte(offset + i)));
        self.record(AccessKind::Read, offset, width, value);
        Ok(value)
    }

    fn mmio_write(&mut self, offset: u32, width: usize, value: u32) -> Result<(), ControllerError> {
        Self::check_window(offset, width)?;
        self.record(AccessKind::Write, offset, width, value);
        let end = offset + width as u32;
        for (base, size, reg) in REG_MAP {
            let lo = offset.max(base);
            let hi = end.min(base + size);
            if lo >= hi {
                continue;
            }
            let (mut written, mut mask) = (0u32, 0u32);
            for addr in lo..hi {
                let byte = (value >> (8 * (addr - offset))) & 0xFF;
                written |= byte << (8 * (addr - base));
                mask |= 0xFF << (8 * (addr - base));
            }
            self.write_reg(reg, written, mask);
        }
        Ok(())
    }
}

impl PciScanner for ControllerModel {
    fn enumerate(&self) -> Vec<(PciAddress, PciConfigSpace)> {
        vec![(self.pci_address, self.pci.clone())]
    }
}
