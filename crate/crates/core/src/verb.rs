//! HDA verb command words.
//!
//! A command word is laid out as:
//!
//! ```text
//!  31    28 27        20 19                      0
//! +--------+------------+-------------------------+
//! |  CAd   |    NID     |  verb id + payload      |
//! +--------+------------+-------------------------+
//! ```
//!
//! Bits 19:0 carry either a 12-bit verb id with an 8-bit payload, or a 4-bit
//! verb id with a 16-bit payload (amp gain/mute, converter format). Which of the
//! two applies is not encoded in the word; it is decided by the catalog's set of
//! long-form ids.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerbError {
    #[error("codec address {0} out of range (0..=15)")]
    CodecAddress(u8),
    #[error("12-bit verb id {0:#x} out of range")]
    ShortId(u16),
    #[error("4-bit verb id {0:#x} out of range")]
    LongId(u8),
    #[error("payload {payload:#x} does not fit the {bits}-bit field of verb {verb}")]
    PayloadOverflow { verb: VerbId, payload: u32, bits: u32 },
    #[error("4-bit verb id {0:#x} is not a long-form id in the catalog")]
    NotLongForm(u8),
    #[error("12-bit verb id {0:#x} collides with a long-form id in the catalog")]
    AmbiguousShortId(u16),
    #[error("duplicate catalog verb {0}")]
    DuplicateVerb(VerbId),
    #[error("duplicate catalog name {0:?}")]
    DuplicateName(String),
    #[error("trace line {line}: {msg}")]
    Trace { line: usize, msg: String },
}

/// Codec address on the link (command word bits 31:28).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct CodecAddress(u8);

impl CodecAddress {
    pub const MAX: u8 = 15;

    pub fn new(value: u8) -> Result<Self, VerbError> {
        if value > Self::MAX {
            return Err(VerbError::CodecAddress(value));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl fmt::Display for CodecAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Widget node id (command word bits 27:20).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct NodeId(pub u8);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#04x}", self.0)
    }
}

/// Verb identifier in one of the two command forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VerbId {
    /// 12-bit id, 8-bit payload.
    Short(u16),
    /// 4-bit id, 16-bit payload.
    Long(u8),
}

impl VerbId {
    pub fn payload_bits(self) -> u32 {
        match self {
            VerbId::Short(_) => 8,
            VerbId::Long(_) => 16,
        }
    }

    fn check_range(self) -> Result<(), VerbError> {
        match self {
            VerbId::Short(id) if id > 0xFFF => Err(VerbError::ShortId(id)),
            VerbId::Long(id) if id > 0xF => Err(VerbError::LongId(id)),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for VerbId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerbId::Short(id) => write!(f, "{id:03X}"),
            VerbId::Long(id) => write!(f, "{id:X}--"),
        }
    }
}

pub const GET_PARAMETER: VerbId = VerbId::Short(0xF00);
pub const GET_BEEP_CONTROL: VerbId = VerbId::Short(0xF0A);
pub const SET_BEEP_CONTROL: VerbId = VerbId::Short(0x70A);
pub const GET_AMP_GAIN_MUTE: VerbId = VerbId::Long(0xB);
pub const SET_AMP_GAIN_MUTE: VerbId = VerbId::Long(0x3);
pub const GET_CONVERTER_FORMAT: VerbId = VerbId::Long(0xA);
pub const SET_CONVERTER_FORMAT: VerbId = VerbId::Long(0x2);
pub const GET_POWER_STATE: VerbId = VerbId::Short(0xF05);
pub const SET_POWER_STATE: VerbId = VerbId::Short(0x705);
pub const GET_PIN_WIDGET_CONTROL: VerbId = VerbId::Short(0xF07);
pub const SET_PIN_WIDGET_CONTROL: VerbId = VerbId::Short(0x707);

/// A decoded command word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VerbCommand {
    pub cad: CodecAddress,
    pub nid: NodeId,
    pub verb: VerbId,
    pub payload: u16,
}

impl VerbCommand {
    pub fn new(cad: CodecAddress, nid: NodeId, verb: VerbId, payload: u16) -> Self {
        Self {
            cad,
            nid,
            verb,
            payload,
        }
    }

    pub fn get_parameter(cad: CodecAddress, nid: NodeId, param: u8) -> Self {
        Self::new(cad, nid, GET_PARAMETER, param.into())
    }

    pub fn set_beep(cad: CodecAddress, nid: NodeId, divider: u8) -> Self {
        Self::new(cad, nid, SET_BEEP_CONTROL, divider.into())
    }

    /// Packs the command into its 32-bit wire form.
    pub fn encode(&self) -> Result<u32, VerbError> {
        self.verb.check_range()?;
        let bits = self.verb.payload_bits();
        if u32::from(self.payload) >> bits != 0 {
            return Err(VerbError::PayloadOverflow {
                verb: self.verb,
                payload: self.payload.into(),
                bits,
            });
        }
        let low = match self.verb {
            VerbId::Short(id) => (u32::from(id) << 8) | u32::from(self.payload),
            VerbId::Long(id) => (u32::from(id) << 16) | u32::from(self.payload),
        };
        Ok((u32::from(self.cad.0) << 28) | (u32::from(self.nid.0) << 20) | low)
    }

    /// Unpacks a command word. Total: every word decodes to something.
    pub fn decode(word: u32, catalog: &VerbCatalog) -> Self {
        let cad = CodecAddress((word >> 28) as u8);
        let nid = NodeId((word >> 20) as u8);
        let hi4 = ((word >> 16) & 0xF) as u8;
        if catalog.is_long_id(hi4) {
            Self::new(cad, nid, VerbId::Long(hi4), (word & 0xFFFF) as u16)
        } else {
            let id = ((word >> 8) & 0xFFF) as u16;
            Self::new(cad, nid, VerbId::Short(id), (word & 0xFF) as u16)
        }
    }
}

/// Raw 32-bit response word latched into ICII.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct VerbResponse(pub u32);

impl fmt::Display for VerbResponse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:08X}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Get,
    Set,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatalogEntry {
    pub name: String,
    pub verb: VerbId,
    pub direction: Direction,
    pub pair: Option<String>,
}

/// Named verbs, with get/set pairs and the set of long-form ids used to
/// disambiguate decoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerbCatalog {
    entries: Vec<CatalogEntry>,
}

impl Default for VerbCatalog {
    fn default() -> Self {
        let mut catalog = VerbCatalog { entries: Vec::new() };
        catalog
            .add_single("GetParameter", GET_PARAMETER, Direction::Get)
            .unwrap();
        for (get_name, get, set_name, set) in [
            ("GetBeepControl", GET_BEEP_CONTROL, "SetBeepControl", SET_BEEP_CONTROL),
            ("GetAmpGainMute", GET_AMP_GAIN_MUTE, "SetAmpGainMute", SET_AMP_GAIN_MUTE),
            (
                "GetConverterFormat",
                GET_CONVERTER_FORMAT,
                "SetConverterFormat",
                SET_CONVERTER_FORMAT,
            ),
            ("GetPowerState", GET_POWER_STATE, "SetPowerState", SET_POWER_STATE),
            (
                "GetPinWidgetControl",
                GET_PIN_WIDGET_CONTROL,
                "SetPinWidgetControl",
                SET_PIN_WIDGET_CONTROL,
            ),
        ] {
            catalog.add_pair(get_name, get, set_name, set).unwrap();
        }
        catalog
    }
}

impl VerbCatalog {
    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn lookup(&self, name: &str) -> Option<VerbId> {
        self.entry(name).map(|e| e.verb)
    }

    pub fn entry(&self, name: &str) -> Option<&CatalogEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn name_of(&self, verb: VerbId) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| e.verb == verb)
            .map(|e| e.name.as_str())
    }

    /// The entry paired with `name`, if any.
    pub fn pair(&self, name: &str) -> Option<&CatalogEntry> {
        self.entry(name)?.pair.as_deref().and_then(|p| self.entry(p))
    }

    pub fn is_long_id(&self, id: u8) -> bool {
        self.entries.iter().any(|e| e.verb == VerbId::Long(id))
    }

    pub fn long_ids(&self) -> Vec<u8> {
        let mut ids: Vec<u8> = self
            .entries
            .iter()
            .filter_map(|e| match e.verb {
                VerbId::Long(id) => Some(id),
                VerbId::Short(_) => None,
            })
            .collect();
        ids.sort_unstable();
        ids
    }

    pub fn add_single(
        &mut self,
        name: &str,
        verb: VerbId,
        direction: Direction,
    ) -> Result<(), VerbError> {
        self.check_new(name, verb)?;
        self.entries.push(CatalogEntry {
            name: name.to_owned(),
            verb,
            direction,
            pair: None,
        });
        Ok(())
    }

    /// Adds a get/set pair, each entry referencing the other.
    pub fn add_pair(
        &mut self,
        get_name: &str,
        get: VerbId,
        set_name: &str,
        set: VerbId,
    ) -> Result<(), VerbError> {
        self.check_new(get_name, get)?;
        self.check_new(set_name, set)?;
        if get == set {
            return Err(VerbError::DuplicateVerb(get));
        }
        if get_name == set_name {
            return Err(VerbError::DuplicateName(get_name.to_owned()));
        }
        self.entries.push(CatalogEntry {
            name: get_name.to_owned(),
            verb: get,
            direction: Direction::Get,
            pair: Some(set_name.to_owned()),
        });
        self.entries.push(CatalogEntry {
            name: set_name.to_owned(),
            verb: set,
            direction: Direction::Set,
            pair: Some(get_name.to_owned()),
        });
        Ok(())
    }

    fn check_new(&self, name: &str, verb: VerbId) -> Result<(), VerbError> {
        verb.check_range()?;
        if self.entries.iter().any(|e| e.verb == verb) {
            return Err(VerbError::DuplicateVerb(verb));
        }
        if self.entry(name).is_some() {
            return Err(VerbError::DuplicateName(name.to_owned()));
        }
        if let VerbId::Short(id) = verb {
            if self.is_long_id((id >> 8) as u8) {
                return Err(VerbError::AmbiguousShortId(id));
            }
        }
        if let VerbId::Long(id) = verb {
            if let Some(e) = self
                .entries
                .iter()
                .find(|e| matches!(e.verb, VerbId::Short(s) if (s >> 8) as u8 == id))
            {
                if let VerbId::Short(s) = e.verb {
                    return Err(VerbError::AmbiguousShortId(s));
                }
            }
        }
        Ok(())
    }

    /// Checks that `cmd` survives an encode/decode round trip under this
    /// catalog: widths fit, long ids are cataloged, and short ids do not
    /// start with a long-form nibble.
    pub fn validate(&self, cmd: &VerbCommand) -> Result<(), VerbError> {
        cmd.encode()?;
        match cmd.verb {
            VerbId::Long(id) if !self.is_long_id(id) => Err(VerbError::NotLongForm(id)),
            VerbId::Short(id) if self.is_long_id((id >> 8) as u8) => {
                Err(VerbError::AmbiguousShortId(id))
            }
            _ => Ok(()),
        }
    }

    /// Renders a decoded command as `cad nid verb-name payload`.
    pub fn describe(&self, cmd: &VerbCommand) -> String {
        let name = match self.name_of(cmd.verb) {
            Some(name) => name.to_owned(),
            None => format!("Verb{}", cmd.verb),
        };
        let payload = match cmd.verb {
            VerbId::Short(_) => format!("0x{:02X}", cmd.payload),
            VerbId::Long(_) => format!("0x{:04X}", cmd.payload),
        };
        format!("{} 0x{:02X} {} {}", cmd.cad, cmd.nid.0, name, payload)
    }
}

pub fn default_catalog() -> VerbCatalog {
    VerbCatalog::default()
}

/// Decodes a verb trace: one hex command word per line (`0x` prefix optional).
/// Blank lines and `#` comments are skipped.
pub fn decode_trace(text: &str, catalog: &VerbCatalog) -> Result<Vec<String>, VerbError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let digits = line
            .strip_prefix("0x")
            .or_else(|| line.strip_prefix("0X"))
            .unwrap_or(line);
        let word = u32::from_str_radix(digits, 16).map_err(|e| VerbError::Trace {
            line: idx + 1,
            msg: format!("{line:?}: {e}"),
        })?;
        out.push(catalog.describe(&VerbCommand::decode(word, catalog)));
    }
    Ok(out)
}
