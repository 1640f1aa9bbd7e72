//! Profile documents.
//!
//! A profile is a TOML document describing one simulated machine: the
//! controller's PCI identity and timing, the codec's node-0 identity, its node
//! table, and optional vendor verbs. See `profiles/cx-default.toml`.
//!
//! ```toml
//! name = "example"
//!
//! [controller]            # optional; every key has a default
//! pci = "0:27:0"
//! vendor_id = 0x8086
//! device_id = 0x1D20
//! bar_base = 0xFEB00000
//! bar_flags = 0x4
//! latency_steps = 1
//!
//! [identity]
//! vendor_response = 0x14F1510F
//! revision_response = 0x00100100
//!
//! [[nodes]]
//! nid = 0x00
//! kind = "root"            # root | function-group | audio-output | pin | beep-generator
//! subordinates = { start = 0x01, count = 1 }
//! params = { "0x0D" = 0x00000001 }   # parameter overrides, hex keys
//!
//! [[verbs]]                # optional vendor verbs
//! name = "GetVendorX"
//! id = 0xF90
//! long = false
//! direction = "get"
//! pair = "SetVendorX"
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::codec::{CodecError, CodecModel, CodecProfile, SubordinateRange, WidgetKind, WidgetSpec};
use crate::controller::{ControllerConfig, ControllerError, ControllerModel, PciAddress};
use crate::verb::{CodecAddress, Direction, NodeId, VerbCatalog, VerbError, VerbId};

const CX_DEFAULT: &str = include_str!("../profiles/cx-default.toml");

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("profile parse error: {0}")]
    Parse(String),
    #[error("profile key `{key}`: {msg}")]
    Field { key: String, msg: String },
    #[error("profile: {0}")]
    Codec(#[from] CodecError),
    #[error("profile: {0}")]
    Controller(#[from] ControllerError),
    #[error("profile verbs: {0}")]
    Verb(#[from] VerbError),
    #[error("reading profile {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    name: Option<String>,
    controller: Option<RawController>,
    identity: RawIdentity,
    #[serde(default)]
    nodes: Vec<RawNode>,
    #[serde(default)]
    verbs: Vec<RawVerb>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawController {
    pci: Option<String>,
    vendor_id: Option<i64>,
    device_id: Option<i64>,
    bar_base: Option<i64>,
    bar_flags: Option<i64>,
    latency_steps: Option<i64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIdentity {
    vendor_response: i64,
    revision_response: i64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    nid: i64,
    kind: String,
    subordinates: Option<RawRange>,
    #[serde(default)]
    params: BTreeMap<String, i64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRange {
    start: i64,
    count: i64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerb {
    name: String,
    id: i64,
    #[serde(default)]
    long: bool,
    direction: String,
    pair: Option<String>,
}

fn field_err(key: impl Into<String>, msg: impl Into<String>) -> ProfileError {
    ProfileError::Field {
        key: key.into(),
        msg: msg.into(),
    }
}

fn narrow<T: TryFrom<i64>>(value: i64, key: &str) -> Result<T, ProfileError> {
    T::try_from(value).map_err(|_| {
        field_err(
            key,
            format!("value {value:#x} out of range for {}", std::any::type_name::<T>()),
        )
    })
}

fn parse_hex_key(s: &str, key: &str) -> Result<u8, ProfileError> {
    let digits = s
        .strip_prefix("0x")
        .or_else(|| s.strip_prefix("0X"))
        .unwrap_or(s);
    u8::from_str_radix(digits, 16)
        .map_err(|_| field_err(key, format!("parameter id {s:?} is not a hex byte")))
}

/// A parsed machine profile.
#[derive(Debug, Clone)]
pub struct Profile {
    pub name: String,
    pub controller: ControllerConfig,
    pub codec: CodecProfile,
    pub catalog: VerbCatalog,
}

impl Profile {
    /// The shipped `cx-default` profile.
    pub fn cx_default() -> Self {
        Profile::from_toml_str(CX_DEFAULT).expect("shipped profile parses")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProfileError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ProfileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Profile::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ProfileError> {
        let raw: RawProfile = toml::from_str(text).map_err(|e| ProfileError::Parse(e.to_string()))?;
        let name = raw.name.unwrap_or_else(|| "unnamed".to_owned());

        let rc = raw.controller.unwrap_or_default();
        let defaults = ControllerConfig::default();
        let controller = ControllerConfig {
            pci_address: match rc.pci {
                Some(s) => s
                    .parse::<PciAddress>()
                    .map_err(|e| field_err("controller.pci", e.to_string()))?,
                None => defaults.pci_address,
            },
            vendor_id: rc
                .vendor_id
                .map(|v| narrow(v, "controller.vendor_id"))
                .transpose()?
                .unwrap_or(defaults.vendor_id),
            device_id: rc
                .device_id
                .map(|v| narrow(v, "controller.device_id"))
                .transpose()?
                .unwrap_or(defaults.device_id),
            bar_base: match rc.bar_base {
                Some(v) => {
                    let base: u32 = narrow(v, "controller.bar_base")?;
                    if base & 0xF != 0 {
                        return Err(field_err(
                            "controller.bar_base",
                            "low 4 bits are BAR flag bits and must be zero",
                        ));
                    }
                    base
                }
                None => defaults.bar_base,
            },
            bar_flags: match rc.bar_flags {
                Some(v) => {
                    let flags: u8 = narrow(v, "controller.bar_flags")?;
                    if flags > 0xF {
                        return Err(field_err("controller.bar_flags", "must fit in 4 bits"));
                    }
                    flags
                }
                None => defaults.bar_flags,
            },
            latency_steps: match rc.latency_steps {
                Some(v) => {
                    let steps: u32 = narrow(v, "controller.latency_steps")?;
                    if steps == 0 {
                        return Err(field_err("controller.latency_steps", "must be at least 1"));
                    }
                    steps
                }
                None => defaults.latency_steps,
            },
        };

        let mut nodes = Vec::with_capacity(raw.nodes.len());
        let mut seen = BTreeSet::new();
        for (i, rn) in raw.nodes.into_iter().enumerate() {
            let key = |k: &str| format!("nodes[{i}].{k}");
            let nid: u8 = narrow(rn.nid, &key("nid"))?;
            if !seen.insert(nid) {
                return Err(field_err(key("nid"), format!("duplicate node id {nid:#04x}")));
            }
            let kind = WidgetKind::from_name(&rn.kind)
                .ok_or_else(|| field_err(key("kind"), format!("unknown kind {:?}", rn.kind)))?;
            let subordinates = rn
                .subordinates
                .map(|r| -> Result<_, ProfileError> {
                    Ok(SubordinateRange {
                        start: NodeId(narrow(r.start, &key("subordinates.start"))?),
                        count: narrow(r.count, &key("subordinates.count"))?,
                    })
                })
                .transpose()?;
            let mut params = BTreeMap::new();
            for (k, v) in rn.params {
                let pkey = key(&format!("params.{k}"));
                params.insert(parse_hex_key(&k, &pkey)?, narrow::<u32>(v, &pkey)?);
            }
            nodes.push(WidgetSpec {
                nid: NodeId(nid),
                kind,
                subordinates,
                params,
            });
        }

        let codec = CodecProfile {
            name: name.clone(),
            vendor_response: narrow(raw.identity.vendor_response, "identity.vendor_response")?,
            revision_response: narrow(raw.identity.revision_response, "identity.revision_response")?,
            nodes,
        };
        codec.validate()?;

        let catalog = build_catalog(raw.verbs)?;
        Ok(Profile {
            name,
            controller,
            codec,
            catalog,
        })
    }

    /// A controller with this profile's codec attached at address 0, still
    /// held in reset.
    pub fn build_controller(&self) -> Result<ControllerModel, ProfileError> {
        let mut ctrl = ControllerModel::new(self.controller.clone())?.with_catalog(self.catalog.clone());
        ctrl.attach_codec(CodecAddress::default(), CodecModel::new(self.codec.clone())?)?;
        Ok(ctrl)
    }
}

fn build_catalog(verbs: Vec<RawVerb>) -> Result<VerbCatalog, ProfileError> {
    let mut catalog = VerbCatalog::default();
    let mut parsed = Vec::new();
    for (i, v) in verbs.into_iter().enumerate() {
        let key = |k: &str| format!("verbs[{i}].{k}");
        let id = if v.long {
            VerbId::Long(narrow(v.id, &key("id"))?)
        } else {
            VerbId::Short(narrow(v.id, &key("id"))?)
        };
        let direction = match v.direction.as_str() {
            "get" => Direction::Get,
            "set" => Direction::Set,
            other => return Err(field_err(key("direction"), format!("{other:?} is not get|set"))),
        };
        parsed.push((v.name, id, direction, v.pair));
    }
    let mut added = BTreeSet::new();
    for (name, id, direction, pair) in &parsed {
        if added.contains(name) {
            continue;
        }
        match pair {
            Some(p) => {
                let Some((pname, pid, pdir, ppair)) = parsed.iter().find(|e| &e.0 == p) else {
                    return Err(field_err(format!("verbs.{name}.pair"), format!("unknown verb {p:?}")));
                };
                if ppair.as_deref() != Some(name.as_str()) || pdir == direction {
                    return Err(field_err(
                        format!("verbs.{name}.pair"),
                        "pair must be a get/set counterpart naming this verb back",
                    ));
                }
                if *direction == Direction::Get {
                    catalog.add_pair(name, *id, pname, *pid)?;
                } else {
                    catalog.add_pair(pname, *pid, name, *id)?;
                }
                added.insert(pname.clone());
            }
            None => catalog.add_single(name, *id, *direction)?,
        }
        added.insert(name.clone());
    }
    Ok(catalog)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_profile_identity() {
        let p = Profile::cx_default();
        assert_eq!(p.name, "cx-default");
        assert_eq!(p.codec.vendor_response, 0x14F1_510F);
        assert_eq!(p.codec.revision_response, 0x0010_0100);
        assert_eq!(p.controller, ControllerConfig::default());
        let beep = p.codec.nodes.iter().find(|n| n.nid == NodeId(0x12)).unwrap();
        assert_eq!(beep.kind, WidgetKind::BeepGenerator);
    }

    const MINIMAL: &str = r#"
        [identity]
        vendor_response = 0x11112222
        revision_response = 0x1
        [[nodes]]
        nid = 0
        kind = "root"
    "#;

    #[test]
    fn defaults_filled() {
        let p = Profile::from_toml_str(MINIMAL).unwrap();
        assert_eq!(p.controller, ControllerConfig::default());
        assert_eq!(p.codec.nodes.len(), 1);
        assert_eq!(p.catalog, VerbCatalog::default());
    }

    #[test]
    fn duplicate_nid_names_key() {
        let doc = format!("{MINIMAL}\n[[nodes]]\nnid = 0x12\nkind = \"pin\"\n[[nodes]]\nnid = 0x12\nkind = \"beep-generator\"\n");
        let err = Profile::from_toml_str(&doc).unwrap_err();
        match err {
            ProfileError::Field { key, .. } => assert_eq!(key, "nodes[2].nid"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn malformed_fields_name_key() {
        let doc = MINIMAL.replace("kind = \"root\"", "kind = \"mixer\"");
        assert!(Profile::from_toml_str(&doc).unwrap_err().to_string().contains("nodes[0].kind"));

        let doc = format!("{MINIMAL}\n[controller]\nlatency_steps = 0\n");
        assert!(Profile::from_toml_str(&doc)
            .unwrap_err()
            .to_string()
            .contains("controller.latency_steps"));

        let doc = format!("{MINIMAL}\n[controller]\nbar_base = 0xFEB00004\n");
        assert!(Profile::from_toml_str(&doc).unwrap_err().to_string().contains("controller.bar_base"));

        let doc = MINIMAL.replace("nid = 0\n", "nid = 0\nparams = { \"zz\" = 1 }\n");
        assert!(Profile::from_toml_str(&doc).unwrap_err().to_string().contains("params.zz"));

        let doc = format!("{MINIMAL}\nbogus = 1\n");
        assert!(Profile::from_toml_str(&doc).unwrap_err().to_string().contains("bogus"));
    }

    #[test]
    fn param_overrides_are_served() {
        let doc = MINIMAL.replace("nid = 0\n", "nid = 0\nparams = { \"0x0D\" = 0x12345678, \"00\" = 0xAB }\n");
        let p = Profile::from_toml_str(&doc).unwrap();
        let codec = CodecModel::new(p.codec).unwrap();
        assert_eq!(codec.get_parameter(NodeId(0), 0x0D), 0x1234_5678);
        assert_eq!(codec.get_parameter(NodeId(0), 0x00), 0xAB);
    }

    #[test]
    fn vendor_verbs_extend_catalog() {
        let doc = format!(
            "{MINIMAL}\n[[verbs]]\nname = \"SetVendorX\"\nid = 0x790\ndirection = \"set\"\npair = \"GetVendorX\"\n\
             [[verbs]]\nname = \"GetVendorX\"\nid = 0xF90\ndirection = \"get\"\npair = \"SetVendorX\"\n\
             [[verbs]]\nname = \"VendorLong\"\nid = 0x4\nlong = true\ndirection = \"set\"\n"
        );
        let p = Profile::from_toml_str(&doc).unwrap();
        assert_eq!(p.catalog.lookup("GetVendorX"), Some(VerbId::Short(0xF90)));
        assert_eq!(p.catalog.pair("GetVendorX").unwrap().name, "SetVendorX");
        assert!(p.catalog.is_long_id(4));
    }

    #[test]
    fn build_controller_attaches_codec() {
        let ctrl = Profile::cx_default().build_controller().unwrap();
        assert!(ctrl.codec(CodecAddress::default()).is_some());
        assert_eq!(ctrl.pci_address(), PciAddress::HDA_DEFAULT);
    }
}
