//! Simulated HDA codec: a table of widget nodes answering verbs.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::verb::{self, NodeId, VerbCommand, VerbResponse};
use crate::Millis;

/// `GetParameter` parameter ids.
pub mod param {
    pub const VENDOR_ID: u8 = 0x00;
    pub const REVISION_ID: u8 = 0x02;
    pub const SUBORDINATE_NODE_COUNT: u8 = 0x04;
    pub const FUNCTION_GROUP_TYPE: u8 = 0x05;
    pub const AUDIO_WIDGET_CAPS: u8 = 0x09;
}

/// Function group type reported by parameter 0x05 for an audio function group.
pub const FUNCTION_GROUP_AUDIO: u32 = 0x01;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("node {0} is not a beep generator")]
    NotBeepGenerator(NodeId),
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("node {nid}: subordinate range covers undeclared node {missing}")]
    UndeclaredSubordinate { nid: NodeId, missing: NodeId },
    #[error("node {0}: only root and function-group nodes may have subordinates")]
    SubordinatesOnWidget(NodeId),
    #[error("profile must declare a root node at nid 0x00")]
    MissingRoot,
    #[error("node {0}: root kind is only valid at nid 0x00")]
    MisplacedRoot(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WidgetKind {
    Root,
    FunctionGroup,
    AudioOutput,
    Pin,
    BeepGenerator,
    /// A widget type this model does not simulate; seen only in discovered
    /// topologies.
    Other(u8),
}

impl WidgetKind {
    /// Parses a profile kind name. `Other` has no profile spelling.
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "root" => WidgetKind::Root,
            "function-group" => WidgetKind::FunctionGroup,
            "audio-output" => WidgetKind::AudioOutput,
            "pin" => WidgetKind::Pin,
            "beep-generator" => WidgetKind::BeepGenerator,
            _ => return None,
        })
    }

    /// Audio widget type field (capability bits 23:20).
    pub fn widget_type(self) -> Option<u8> {
        match self {
            WidgetKind::AudioOutput => Some(0x0),
            WidgetKind::Pin => Some(0x4),
            WidgetKind::BeepGenerator => Some(0x7),
            WidgetKind::Other(t) => Some(t),
            WidgetKind::Root | WidgetKind::FunctionGroup => None,
        }
    }

    pub fn from_widget_type(t: u8) -> Self {
        match t {
            0x0 => WidgetKind::AudioOutput,
            0x4 => WidgetKind::Pin,
            0x7 => WidgetKind::BeepGenerator,
            t => WidgetKind::Other(t),
        }
    }

    fn is_grouping(self) -> bool {
        matches!(self, WidgetKind::Root | WidgetKind::FunctionGroup)
    }

    fn default_caps(self) -> u32 {
        let ty = u32::from(self.widget_type().unwrap_or(0)) << 20;
        match self {
            // stereo, output amp present
            WidgetKind::AudioOutput | WidgetKind::Pin => ty | 0x5,
            _ => ty,
        }
    }
}

impl fmt::Display for WidgetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WidgetKind::Root => f.write_str("root"),
            WidgetKind::FunctionGroup => f.write_str("function-group"),
            WidgetKind::AudioOutput => f.write_str("audio-output"),
            WidgetKind::Pin => f.write_str("pin"),
            WidgetKind::BeepGenerator => f.write_str("beep-generator"),
            WidgetKind::Other(t) => write!(f, "widget-type-{t:#x}"),
        }
    }
}

/// Contiguous child node range of a grouping node, as reported by
/// parameter 0x04: `(start << 16) | count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubordinateRange {
    pub start: NodeId,
    pub count: u8,
}

impl SubordinateRange {
    pub fn word(self) -> u32 {
        (u32::from(self.start.0) << 16) | u32::from(self.count)
    }

    pub fn from_word(word: u32) -> Self {
        SubordinateRange {
            start: NodeId((word >> 16) as u8),
            count: word as u8,
        }
    }

    /// Node ids in the range, clipped at 0xFF.
    pub fn nids(self) -> impl Iterator<Item = NodeId> {
        let start = u16::from(self.start.0);
        let end = (start + u16::from(self.count)).min(0x100);
        (start..end).map(|n| NodeId(n as u8))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WidgetSpec {
    pub nid: NodeId,
    pub kind: WidgetKind,
    pub subordinates: Option<SubordinateRange>,
    /// Parameter overrides; these win over derived values.
    pub params: BTreeMap<u8, u32>,
}

impl WidgetSpec {
    pub fn new(nid: u8, kind: WidgetKind) -> Self {
        WidgetSpec {
            nid: NodeId(nid),
            kind,
            subordinates: None,
            params: BTreeMap::new(),
        }
    }

    pub fn with_subordinates(mut self, start: u8, count: u8) -> Self {
        self.subordinates = Some(SubordinateRange {
            start: NodeId(start),
            count,
        });
        self
    }

    pub fn with_param(mut self, param: u8, value: u32) -> Self {
        self.params.insert(param, value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodecProfile {
    pub name: String,
    pub vendor_response: u32,
    pub revision_response: u32,
    pub nodes: Vec<WidgetSpec>,
}

impl CodecProfile {
    pub fn validate(&self) -> Result<(), CodecError> {
        let mut seen = BTreeMap::new();
        for node in &self.nodes {
            if seen.insert(node.nid, node.kind).is_some() {
                return Err(CodecError::DuplicateNode(node.nid));
            }
            if node.kind == WidgetKind::Root && node.nid != NodeId::ROOT {
                return Err(CodecError::MisplacedRoot(node.nid));
            }
        }
        if seen.get(&NodeId::ROOT) != Some(&WidgetKind::Root) {
            return Err(CodecError::MissingRoot);
        }
        for node in &self.nodes {
            let Some(range) = node.subordinates else {
                continue;
            };
            if !node.kind.is_grouping() {
                return Err(CodecError::SubordinatesOnWidget(node.nid));
            }
            if let Some(missing) = range.nids().find(|n| !seen.contains_key(n)) {
                return Err(CodecError::UndeclaredSubordinate {
                    nid: node.nid,
                    missing,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AmpChannel {
    pub mute: bool,
    pub gain: u8,
}

impl AmpChannel {
    fn word(self) -> u32 {
        (u32::from(self.mute) << 7) | u32::from(self.gain & 0x7F)
    }
}

/// Amp state indexed by `[output=0/input=1][left=0/right=1]`.
pub type AmpState = [[AmpChannel; 2]; 2];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WidgetNode {
    pub nid: NodeId,
    pub kind: WidgetKind,
    pub params: BTreeMap<u8, u32>,
    pub amp: AmpState,
    pub beep_divider: u8,
    pub power_state: u8,
    pub pin_control: u8,
    pub converter_format: u16,
}

impl WidgetNode {
    fn has_amp(&self) -> bool {
        matches!(
            self.kind,
            WidgetKind::AudioOutput | WidgetKind::Pin | WidgetKind::BeepGenerator
        )
    }
}

/// Divider changes of one beep generator, in clock order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BeepTimeline {
    entries: Vec<(Millis, u8)>,
}

impl BeepTimeline {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a timeline from entries whose times strictly increase.
    pub fn from_entries(entries: Vec<(Millis, u8)>) -> Option<Self> {
        entries
            .windows(2)
            .all(|w| w[0].0 < w[1].0)
            .then_some(BeepTimeline { entries })
    }

    pub fn entries(&self) -> &[(Millis, u8)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last_time(&self) -> Option<Millis> {
        self.entries.last().map(|e| e.0)
    }

    /// Records a divider change. A change at the same instant as the last
    /// entry replaces it; the clock never runs backwards, so earlier times
    /// are folded onto the last instant too.
    pub fn record(&mut self, at: Millis, divider: u8) {
        match self.entries.last_mut() {
            Some(last) if at <= last.0 => last.1 = divider,
            _ => self.entries.push((at, divider)),
        }
    }

    /// Divider in effect at `t` (0 before the first entry).
    pub fn divider_at(&self, t: Millis) -> u8 {
        self.entries
            .iter()
            .take_while(|e| e.0 <= t)
            .last()
            .map_or(0, |e| e.1)
    }

    /// The part of the timeline in `[from, to)`, rebased so `from` is time 0.
    pub fn window(&self, from: Millis, to: Millis) -> BeepTimeline {
        let mut out = BeepTimeline::new();
        out.entries.push((Millis::from_integer(0), self.divider_at(from)));
        for &(t, d) in &self.entries {
            if t > from && t < to {
                out.entries.push((t - from, d));
            }
        }
        out
    }
}

/// A codec instance built from a [`CodecProfile`].
#[derive(Debug, Clone)]
pub struct CodecModel {
    profile: CodecProfile,
    nodes: BTreeMap<NodeId, WidgetNode>,
    timelines: BTreeMap<NodeId, BeepTimeline>,
}

impl CodecModel {
    pub fn new(profile: CodecProfile) -> Result<Self, CodecError> {
        profile.validate()?;
        let mut codec = CodecModel {
            profile,
            nodes: BTreeMap::new(),
            timelines: BTreeMap::new(),
        };
        codec.reset();
        Ok(codec)
    }

    pub fn profile(&self) -> &CodecProfile {
        &self.profile
    }

    pub fn node(&self, nid: NodeId) -> Option<&WidgetNode> {
        self.nodes.get(&nid)
    }

    /// Restores power-on state: amps, dividers and timelines cleared.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.timelines.clear();
        for spec in &self.profile.nodes {
            let mut params = BTreeMap::new();
            match spec.kind {
                WidgetKind::Root => {
                    params.insert(param::VENDOR_ID, self.profile.vendor_response);
                    params.insert(param::REVISION_ID, self.profile.revision_response);
                }
                WidgetKind::FunctionGroup => {
                    params.insert(param::FUNCTION_GROUP_TYPE, FUNCTION_GROUP_AUDIO);
                }
                kind => {
                    params.insert(param::AUDIO_WIDGET_CAPS, kind.default_caps());
                }
            }
            if spec.kind.is_grouping() {
                let word = spec.subordinates.map_or(0, SubordinateRange::word);
                params.insert(param::SUBORDINATE_NODE_COUNT, word);
            }
            params.extend(spec.params.iter().map(|(k, v)| (*k, *v)));
            if spec.kind == WidgetKind::BeepGenerator {
                self.timelines.insert(spec.nid, BeepTimeline::new());
            }
            self.nodes.insert(
                spec.nid,
                WidgetNode {
                    nid: spec.nid,
                    kind: spec.kind,
                    params,
                    amp: AmpState::default(),
                    beep_divider: 0,
                    power_state: 0,
                    pin_control: 0,
                    converter_format: 0,
                },
            );
        }
    }

    pub fn get_parameter(&self, nid: NodeId, param: u8) -> u32 {
        self.nodes
            .get(&nid)
            .and_then(|n| n.params.get(&param))
            .copied()
            .unwrap_or(0)
    }

    /// Executes one command. The codec address is not checked; routing is the
    /// controller's job. Unknown verbs and nodes answer zero.
    pub fn execute_verb(&mut self, cmd: &VerbCommand, at_ms: Millis) -> VerbResponse {
        if cmd.verb == verb::GET_PARAMETER {
            return VerbResponse(self.get_parameter(cmd.nid, cmd.payload as u8));
        }
        let Some(node) = self.nodes.get_mut(&cmd.nid) else {
            return VerbResponse(0);
        };
        let payload = cmd.payload;
        let word = match cmd.verb {
            verb::SET_BEEP_CONTROL if node.kind == WidgetKind::BeepGenerator => {
                node.beep_divider = payload as u8;
                if let Some(tl) = self.timelines.get_mut(&cmd.nid) {
                    tl.record(at_ms, payload as u8);
                }
                0
            }
            verb::GET_BEEP_CONTROL if node.kind == WidgetKind::BeepGenerator => {
                u32::from(node.beep_divider)
            }
            verb::SET_AMP_GAIN_MUTE if node.has_amp() => {
                let value = AmpChannel {
                    mute: payload & 0x80 != 0,
                    gain: (payload & 0x7F) as u8,
                };
                for (dir, dir_bit) in [(0, 15), (1, 14)] {
                    for (ch, ch_bit) in [(0, 13), (1, 12)] {
                        if payload & (1 << dir_bit) != 0 && payload & (1 << ch_bit) != 0 {
                            node.amp[dir][ch] = value;
                        }
                    }
                }
                0
            }
            verb::GET_AMP_GAIN_MUTE if node.has_amp() => {
                let dir = if payload & 0x8000 != 0 { 0 } else { 1 };
                let ch = if payload & 0x2000 != 0 { 0 } else { 1 };
                node.amp[dir][ch].word()
            }
            verb::SET_POWER_STATE if node.kind != WidgetKind::Root => {
                node.power_state = (payload & 0xF) as u8;
                0
            }
            verb::GET_POWER_STATE if node.kind != WidgetKind::Root => {
                // actual state (7:4) follows the requested state (3:0) immediately
                let ps = u32::from(node.power_state);
                (ps << 4) | ps
            }
            verb::SET_PIN_WIDGET_CONTROL if node.kind == WidgetKind::Pin => {
                node.pin_control = payload as u8;
                0
            }
            verb::GET_PIN_WIDGET_CONTROL if node.kind == WidgetKind::Pin => {
                u32::from(node.pin_control)
            }
            verb::SET_CONVERTER_FORMAT if node.kind == WidgetKind::AudioOutput => {
                node.converter_format = payload;
                0
            }
            verb::GET_CONVERTER_FORMAT if node.kind == WidgetKind::AudioOutput => {
                u32::from(node.converter_format)
            }
            _ => 0,
        };
        VerbResponse(word)
    }

    pub fn beep_timeline(&self, nid: NodeId) -> Result<&BeepTimeline, CodecError> {
        self.timelines
            .get(&nid)
            .ok_or(CodecError::NotBeepGenerator(nid))
    }
}
