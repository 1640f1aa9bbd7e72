//! Driver side of the stack: find the controller on PCI, resolve its BAR and
//! talk to codecs through the immediate command registers.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::codec::{param, SubordinateRange, WidgetKind};
use crate::controller::{regs, ControllerError, ControllerModel, Mmio, PciAddress, PciConfigSpace, PciScanner};
use crate::verb::{CodecAddress, NodeId, VerbCommand, VerbError, VerbResponse};

/// Poll budget used by the convenience wrappers.
pub const DEFAULT_MAX_POLLS: u32 = 1000;

/// Memory BAR address mask; the low nibble holds type/prefetch flags.
pub const BAR_ADDRESS_MASK: u32 = 0xFFFF_FFF0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("controller not found")]
    ControllerNotFound,
    #[error("BAR unassigned")]
    BarUnassigned,
    #[error("BAR base {0:#010x} has flag bits set")]
    UnalignedBar(u32),
    #[error("max_polls must be at least 1")]
    ZeroPolls,
    #[error("busy timeout: ICB still set after {0} polls")]
    BusyTimeout(u32),
    #[error("response timeout: IRV not set after {0} polls")]
    ResponseTimeout(u32),
    #[error("no beep generator")]
    NoBeepGenerator,
    #[error(transparent)]
    Access(#[from] ControllerError),
    #[error(transparent)]
    Verb(#[from] VerbError),
}

/// Finds the HDA function: first function with class 04h/03h, otherwise
/// whatever sits at 0:27:0.
pub fn locate_controller(scanner: &impl PciScanner) -> Result<PciAddress, ClientError> {
    if let Some((addr, _)) = scanner
        .enumerate()
        .into_iter()
        .find(|(_, cfg)| cfg.is_hda_function())
    {
        return Ok(addr);
    }
    scanner
        .probe(PciAddress::HDA_DEFAULT)
        .map(|_| PciAddress::HDA_DEFAULT)
        .ok_or(ClientError::ControllerNotFound)
}

pub fn resolve_bar(config: &PciConfigSpace) -> Result<u32, ClientError> {
    match config.hdbarl() {
        0 => Err(ClientError::BarUnassigned),
        hdbarl => Ok(hdbarl & BAR_ADDRESS_MASK),
    }
}

/// A located controller: where it is and where its registers are mapped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControllerBinding {
    pci: PciAddress,
    bar_base: u32,
}

impl ControllerBinding {
    pub fn new(pci: PciAddress, bar_base: u32) -> Result<Self, ClientError> {
        if bar_base & !BAR_ADDRESS_MASK != 0 {
            return Err(ClientError::UnalignedBar(bar_base));
        }
        Ok(ControllerBinding { pci, bar_base })
    }

    /// Locates the controller, resolves its BAR and takes it out of reset.
    pub fn establish<B: Mmio + PciScanner>(bus: &mut B) -> Result<Self, ClientError> {
        let pci = locate_controller(bus)?;
        let config = bus.probe(pci).ok_or(ClientError::ControllerNotFound)?;
        let binding = ControllerBinding::new(pci, resolve_bar(&config)?)?;
        let gctl = binding.read32(bus, regs::GCTL)?;
        if gctl & regs::GCTL_CRST == 0 {
            binding.write32(bus, regs::GCTL, gctl | regs::GCTL_CRST)?;
        }
        Ok(binding)
    }

    pub fn pci(&self) -> PciAddress {
        self.pci
    }

    pub fn bar_base(&self) -> u32 {
        self.bar_base
    }

    /// Physical address of a controller register.
    pub fn register_address(&self, offset: u32) -> u64 {
        u64::from(self.bar_base) + u64::from(offset)
    }

    pub fn write32(&self, bus: &mut impl Mmio, offset: u32, value: u32) -> Result<(), ClientError> {
        write_controller_register32(self, bus, offset, value)
    }

    pub fn read32(&self, bus: &mut impl Mmio, offset: u32) -> Result<u32, ClientError> {
        read_controller_register32(self, bus, offset)
    }

    /// [`send_verb`] with the default poll budget, stepping the controller
    /// once per poll.
    pub fn send(&self, ctrl: &mut ControllerModel, cmd: &VerbCommand) -> Result<VerbResponse, ClientError> {
        send_verb(self, ctrl, cmd, DEFAULT_MAX_POLLS, |c| c.step(1))
    }

    pub fn discover(&self, ctrl: &mut ControllerModel, cad: CodecAddress) -> Result<CodecTopology, ClientError> {
        discover_topology(self, ctrl, cad, DEFAULT_MAX_POLLS, |c| c.step(1))
    }
}

// The simulated bus decodes by offset alone; the binding's base only matters
// for reporting the physical address.
pub fn write_controller_register32(
    _binding: &ControllerBinding,
    bus: &mut impl Mmio,
    offset: u32,
    value: u32,
) -> Result<(), ClientError> {
    Ok(bus.mmio_write(offset, 4, value)?)
}

pub fn read_controller_register32(
    _binding: &ControllerBinding,
    bus: &mut impl Mmio,
    offset: u32,
) -> Result<u32, ClientError> {
    Ok(bus.mmio_read(offset, 4)?)
}

/// Sends one verb over the immediate command interface.
///
/// Waits for ICB to drop, writes the command to ICOI, sets ICB, then polls
/// ICIS until IRV is set, reads ICII and acknowledges IRV. Each phase may poll
/// ICIS at most `max_polls` times; `stepper` runs between polls.
pub fn send_verb<B: Mmio>(
    binding: &ControllerBinding,
    bus: &mut B,
    cmd: &VerbCommand,
    max_polls: u32,
    mut stepper: impl FnMut(&mut B),
) -> Result<VerbResponse, ClientError> {
    if max_polls == 0 {
        return Err(ClientError::ZeroPolls);
    }
    let word = cmd.encode()?;
    let icb = u32::from(regs::ICIS_ICB);
    let irv = u32::from(regs::ICIS_IRV);

    let mut polls = 0;
    loop {
        polls += 1;
        if binding.read32(bus, regs::ICIS)? & icb == 0 {
            break;
        }
        if polls == max_polls {
            return Err(ClientError::BusyTimeout(max_polls));
        }
        stepper(bus);
    }

    binding.write32(bus, regs::ICOI, word)?;
    binding.write32(bus, regs::ICIS, icb)?;

    for _ in 0..max_polls {
        stepper(bus);
        if binding.read32(bus, regs::ICIS)? & irv != 0 {
            let response = binding.read32(bus, regs::ICII)?;
            binding.write32(bus, regs::ICIS, irv)?;
            return Ok(VerbResponse(response));
        }
    }
    Err(ClientError::ResponseTimeout(max_polls))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TopologyNode {
    pub nid: NodeId,
    pub kind: WidgetKind,
    /// Subordinate count word for the root, group type for function groups,
    /// audio widget capabilities otherwise.
    pub raw: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodecTopology {
    pub cad: CodecAddress,
    pub nodes: Vec<TopologyNode>,
}

impl CodecTopology {
    pub fn function_groups(&self) -> impl Iterator<Item = &TopologyNode> {
        self.nodes.iter().filter(|n| n.kind == WidgetKind::FunctionGroup)
    }
}

/// Walks root → function groups → widgets using `GetParameter`.
pub fn discover_topology<B: Mmio>(
    binding: &ControllerBinding,
    bus: &mut B,
    cad: CodecAddress,
    max_polls: u32,
    mut stepper: impl FnMut(&mut B),
) -> Result<CodecTopology, ClientError> {
    let mut get = |bus: &mut B, nid: NodeId, p: u8| -> Result<u32, ClientError> {
        let cmd = VerbCommand::get_parameter(cad, nid, p);
        Ok(send_verb(binding, bus, &cmd, max_polls, &mut stepper)?.0)
    };

    let mut visited = BTreeSet::from([NodeId::ROOT]);
    let root_word = get(bus, NodeId::ROOT, param::SUBORDINATE_NODE_COUNT)?;
    let mut nodes = vec![TopologyNode {
        nid: NodeId::ROOT,
        kind: WidgetKind::Root,
        raw: root_word,
    }];

    for group in SubordinateRange::from_word(root_word).nids() {
        if !visited.insert(group) {
            continue;
        }
        let group_type = get(bus, group, param::FUNCTION_GROUP_TYPE)?;
        nodes.push(TopologyNode {
            nid: group,
            kind: WidgetKind::FunctionGroup,
            raw: group_type,
        });
        let range = SubordinateRange::from_word(get(bus, group, param::SUBORDINATE_NODE_COUNT)?);
        for nid in range.nids() {
            if !visited.insert(nid) {
                continue;
            }
            let caps = get(bus, nid, param::AUDIO_WIDGET_CAPS)?;
            nodes.push(TopologyNode {
                nid,
                kind: WidgetKind::from_widget_type(((caps >> 20) & 0xF) as u8),
                raw: caps,
            });
        }
    }
    Ok(CodecTopology { cad, nodes })
}

pub fn find_beep_generator(topology: &CodecTopology) -> Result<NodeId, ClientError> {
    topology
        .nodes
        .iter()
        .find(|n| n.kind == WidgetKind::BeepGenerator)
        .map(|n| n.nid)
        .ok_or(ClientError::NoBeepGenerator)
}
