//! Screen reader core for a BIOS-style setup form.
//!
//! Keys move focus or change values and produce [`UiEvent`]s. Each event is
//! turned into an [`AnnouncementPlan`]: a short earcon identifying the kind of
//! field, followed by one tone per character of the field label. Plans are
//! played by programming the codec's beep generator over the immediate
//! command interface.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{ClientError, ControllerBinding};
use crate::controller::ControllerModel;
use crate::render::BEEP_BASE_HZ;
use crate::verb::{CodecAddress, NodeId, VerbCommand};
use crate::Millis;

const DEMO_BIOS: &str = include_str!("../forms/demo-bios.toml");

#[derive(Debug, Error)]
pub enum FormError {
    #[error("form parse error: {0}")]
    Parse(String),
    #[error("field `{id}`: {msg}")]
    Field { id: String, msg: String },
    #[error("duplicate field id `{0}`")]
    DuplicateId(String),
    #[error("tone table: {0}")]
    ToneTable(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn field_err(id: &str, msg: impl Into<String>) -> FormError {
    FormError::Field {
        id: id.to_owned(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Selection,
    Toggle,
    Numeric,
    Action,
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FieldKind::Selection => "selection",
            FieldKind::Toggle => "toggle",
            FieldKind::Numeric => "numeric",
            FieldKind::Action => "action",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldControl {
    Selection { options: Vec<String>, selected: usize },
    Toggle { on: bool },
    Numeric { min: i64, max: i64, step: i64, value: i64 },
    Action,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Field {
    pub id: String,
    pub label: String,
    control: FieldControl,
}

impl Field {
    pub fn new(id: &str, label: &str, control: FieldControl) -> Result<Self, FormError> {
        match &control {
            FieldControl::Selection { options, selected } => {
                if options.is_empty() {
                    return Err(field_err(id, "selection needs at least one option"));
                }
                if *selected >= options.len() {
                    return Err(field_err(id, "selected option out of range"));
                }
            }
            FieldControl::Numeric {
                min,
                max,
                step,
                value,
            } => {
                if min > max || *step <= 0 {
                    return Err(field_err(id, "numeric range needs min <= max and step > 0"));
                }
                if !(min..=max).contains(&value) {
                    return Err(field_err(id, format!("value {value} outside {min}..={max}")));
                }
            }
            FieldControl::Toggle { .. } | FieldControl::Action => {}
        }
        Ok(Field {
            id: id.to_owned(),
            label: label.to_owned(),
            control,
        })
    }

    pub fn control(&self) -> &FieldControl {
        &self.control
    }

    pub fn kind(&self) -> FieldKind {
        match self.control {
            FieldControl::Selection { .. } => FieldKind::Selection,
            FieldControl::Toggle { .. } => FieldKind::Toggle,
            FieldControl::Numeric { .. } => FieldKind::Numeric,
            FieldControl::Action => FieldKind::Action,
        }
    }

    /// Spoken form of the current value.
    pub fn value_text(&self) -> String {
        match &self.control {
            FieldControl::Selection { options, selected } => options[*selected].clone(),
            FieldControl::Toggle { on } => if *on { "on" } else { "off" }.to_owned(),
            FieldControl::Numeric { value, .. } => value.to_string(),
            FieldControl::Action => "button".to_owned(),
        }
    }

    /// Moves the value one notch, wrapping at the ends. Returns whether the
    /// field has a value to change.
    fn cycle(&mut self, forward: bool) -> bool {
        match &mut self.control {
            FieldControl::Selection { options, selected } => {
                let n = options.len();
                *selected = if forward {
                    (*selected + 1) % n
                } else {
                    (*selected + n - 1) % n
                };
                true
            }
            FieldControl::Toggle { on } => {
                *on = !*on;
                true
            }
            FieldControl::Numeric {
                min,
                max,
                step,
                value,
            } => {
                *value = if forward {
                    if *value > *max - *step {
                        *min
                    } else {
                        *value + *step
                    }
                } else if *value < *min + *step {
                    *max
                } else {
                    *value - *step
                };
                true
            }
            FieldControl::Action => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Key {
    Tab,
    ShiftTab,
    Up,
    Down,
    Left,
    Right,
    Enter,
}

impl Key {
    pub const ALL: [Key; 7] = [
        Key::Tab,
        Key::ShiftTab,
        Key::Up,
        Key::Down,
        Key::Left,
        Key::Right,
        Key::Enter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Key::Tab => "Tab",
            Key::ShiftTab => "ShiftTab",
            Key::Up => "Up",
            Key::Down => "Down",
            Key::Left => "Left",
            Key::Right => "Right",
            Key::Enter => "Enter",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown key {0:?}")]
pub struct UnknownKey(pub String);

impl FromStr for Key {
    type Err = UnknownKey;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        Key::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(t))
            .or_else(|| t.eq_ignore_ascii_case("shift+tab").then_some(Key::ShiftTab))
            .ok_or_else(|| UnknownKey(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    FocusChanged,
    ValueChanged,
    Activated,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UiEvent {
    pub kind: EventKind,
    pub field_id: String,
    pub transcript: String,
}

impl UiEvent {
    fn focus_or_value(kind: EventKind, field: &Field) -> Self {
        UiEvent {
            kind,
            field_id: field.id.clone(),
            transcript: format!("{}: {}", field.label, field.value_text()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldSnapshot {
    pub id: String,
    pub label: String,
    pub kind: FieldKind,
    pub value: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub range: Option<(i64, i64)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FormSnapshot {
    pub title: String,
    pub focus: usize,
    pub fields: Vec<FieldSnapshot>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawForm {
    title: String,
    #[serde(default)]
    fields: Vec<RawField>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawField {
    id: String,
    label: String,
    kind: FieldKind,
    options: Option<Vec<String>>,
    min: Option<i64>,
    max: Option<i64>,
    step: Option<i64>,
    value: Option<toml::Value>,
}

impl RawField {
    fn into_field(self) -> Result<Field, FormError> {
        let id = self.id.as_str();
        let control = match self.kind {
            FieldKind::Selection => {
                let options = self
                    .options
                    .ok_or_else(|| field_err(id, "selection needs `options`"))?;
                let selected = match &self.value {
                    None => 0,
                    Some(toml::Value::String(s)) => options
                        .iter()
                        .position(|o| o == s)
                        .ok_or_else(|| field_err(id, format!("value {s:?} is not an option")))?,
                    Some(_) => return Err(field_err(id, "selection value must be an option string")),
                };
                FieldControl::Selection { options, selected }
            }
            FieldKind::Toggle => match &self.value {
                None => FieldControl::Toggle { on: false },
                Some(toml::Value::Boolean(on)) => FieldControl::Toggle { on: *on },
                Some(_) => return Err(field_err(id, "toggle value must be true or false")),
            },
            FieldKind::Numeric => {
                let min = self.min.ok_or_else(|| field_err(id, "numeric needs `min`"))?;
                let max = self.max.ok_or_else(|| field_err(id, "numeric needs `max`"))?;
                let value = match &self.value {
                    None => min,
                    Some(toml::Value::Integer(v)) => *v,
                    Some(_) => return Err(field_err(id, "numeric value must be an integer")),
                };
                FieldControl::Numeric {
                    min,
                    max,
                    step: self.step.unwrap_or(1),
                    value,
                }
            }
            FieldKind::Action => FieldControl::Action,
        };
        Field::new(id, &self.label, control)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Form {
    pub title: String,
    fields: Vec<Field>,
    focus_index: usize,
}

impl Form {
    pub fn new(title: &str, fields: Vec<Field>) -> Result<Self, FormError> {
        let mut ids = BTreeSet::new();
        for f in &fields {
            if !ids.insert(f.id.as_str()) {
                return Err(FormError::DuplicateId(f.id.clone()));
            }
        }
        Ok(Form {
            title: title.to_owned(),
            fields,
            focus_index: 0,
        })
    }

    /// The shipped `demo-bios` form.
    pub fn demo_bios() -> Self {
        Form::from_toml_str(DEMO_BIOS).expect("shipped form parses")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FormError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| FormError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Form::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, FormError> {
        let raw: RawForm = toml::from_str(text).map_err(|e| FormError::Parse(e.to_string()))?;
        let fields = raw
            .fields
            .into_iter()
            .map(RawField::into_field)
            .collect::<Result<Vec<_>, _>>()?;
        Form::new(&raw.title, fields)
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn field(&self, id: &str) -> Option<&Field> {
        self.fields.iter().find(|f| f.id == id)
    }

    pub fn focus_index(&self) -> usize {
        self.focus_index
    }

    pub fn focused(&self) -> Option<&Field> {
        self.fields.get(self.focus_index)
    }

    pub fn snapshot(&self) -> FormSnapshot {
        FormSnapshot {
            title: self.title.clone(),
            focus: self.focus_index,
            fields: self
                .fields
                .iter()
                .map(|f| FieldSnapshot {
                    id: f.id.clone(),
                    label: f.label.clone(),
                    kind: f.kind(),
                    value: f.value_text(),
                    options: match &f.control {
                        FieldControl::Selection { options, .. } => Some(options.clone()),
                        _ => None,
                    },
                    range: match f.control {
                        FieldControl::Numeric { min, max, .. } => Some((min, max)),
                        _ => None,
                    },
                })
                .collect(),
        }
    }

    fn move_focus(&mut self, forward: bool) -> Vec<UiEvent> {
        let n = self.fields.len();
        self.focus_index = if forward {
            (self.focus_index + 1) % n
        } else {
            (self.focus_index + n - 1) % n
        };
        vec![UiEvent::focus_or_value(
            EventKind::FocusChanged,
            &self.fields[self.focus_index],
        )]
    }

    pub fn handle_key(&mut self, key: Key) -> Vec<UiEvent> {
        if self.fields.is_empty() {
            return Vec::new();
        }
        match key {
            Key::Tab | Key::Down => self.move_focus(true),
            Key::ShiftTab | Key::Up => self.move_focus(false),
            Key::Left | Key::Right => {
                let field = &mut self.fields[self.focus_index];
                if field.cycle(key == Key::Right) {
                    vec![UiEvent::focus_or_value(EventKind::ValueChanged, field)]
                } else {
                    Vec::new()
                }
            }
            Key::Enter => {
                let field = &self.fields[self.focus_index];
                if field.kind() == FieldKind::Action {
                    vec![UiEvent {
                        kind: EventKind::Activated,
                        field_id: field.id.clone(),
                        transcript: format!("{} activated", field.label),
                    }]
                } else {
                    Vec::new()
                }
            }
        }
    }

    /// Like [`Form::handle_key`], ignoring names that are not keys.
    pub fn handle_key_name(&mut self, name: &str) -> Vec<UiEvent> {
        name.parse().map(|k| self.handle_key(k)).unwrap_or_default()
    }
}

/// A tone (or silence when `frequency_hz` is 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ToneSegment {
    pub frequency_hz: u32,
    pub duration_ms: u32,
}

impl ToneSegment {
    pub fn tone(frequency_hz: u32, duration_ms: u32) -> Self {
        ToneSegment {
            frequency_hz,
            duration_ms,
        }
    }

    pub fn gap(duration_ms: u32) -> Self {
        Self::tone(0, duration_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnnouncementPlan {
    pub segments: Vec<ToneSegment>,
    pub transcript: String,
}

impl AnnouncementPlan {
    pub fn total_duration_ms(&self) -> u64 {
        self.segments.iter().map(|s| u64::from(s.duration_ms)).sum()
    }
}

/// Lowest and highest frequencies a beep divider of 1..=255 can realize.
pub const MIN_TONE_HZ: u32 = 47;
pub const MAX_TONE_HZ: u32 = BEEP_BASE_HZ;

/// Frequencies and durations of the tone code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToneTable {
    pub selection_hz: u32,
    pub toggle_hz: u32,
    pub numeric_hz: u32,
    pub action_hz: u32,
    pub earcon_ms: u32,
    pub letter_base_hz: u32,
    pub letter_step_hz: u32,
    pub letter_ms: u32,
    pub gap_ms: u32,
    pub other_char_hz: u32,
}

impl Default for ToneTable {
    fn default() -> Self {
        ToneTable {
            selection_hz: 880,
            toggle_hz: 660,
            numeric_hz: 550,
            action_hz: 440,
            earcon_ms: 120,
            letter_base_hz: 300,
            letter_step_hz: 25,
            letter_ms: 60,
            gap_ms: 20,
            other_char_hz: 200,
        }
    }
}

impl ToneTable {
    pub fn from_toml_str(text: &str) -> Result<Self, FormError> {
        let table: ToneTable = toml::from_str(text).map_err(|e| FormError::ToneTable(e.to_string()))?;
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<(), FormError> {
        let highest_letter = self.letter_base_hz + 25 * self.letter_step_hz;
        for (name, hz) in [
            ("selection_hz", self.selection_hz),
            ("toggle_hz", self.toggle_hz),
            ("numeric_hz", self.numeric_hz),
            ("action_hz", self.action_hz),
            ("letter_base_hz", self.letter_base_hz),
            ("highest letter", highest_letter),
            ("other_char_hz", self.other_char_hz),
        ] {
            if !(MIN_TONE_HZ..=MAX_TONE_HZ).contains(&hz) {
                return Err(FormError::ToneTable(format!(
                    "{name} = {hz} outside {MIN_TONE_HZ}..={MAX_TONE_HZ} Hz"
                )));
            }
        }
        for (name, ms) in [
            ("earcon_ms", self.earcon_ms),
            ("letter_ms", self.letter_ms),
            ("gap_ms", self.gap_ms),
        ] {
            if ms == 0 {
                return Err(FormError::ToneTable(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn earcon_hz(&self, kind: FieldKind) -> u32 {
        match kind {
            FieldKind::Selection => self.selection_hz,
            FieldKind::Toggle => self.toggle_hz,
            FieldKind::Numeric => self.numeric_hz,
            FieldKind::Action => self.action_hz,
        }
    }

    pub fn char_hz(&self, c: char) -> u32 {
        if c.is_ascii_lowercase() {
            self.letter_base_hz + self.letter_step_hz * (c as u32 - 'a' as u32)
        } else {
            self.other_char_hz
        }
    }
}

/// Earcon for the field kind, then a tone and a gap per lowercased label
/// character, with a gap between the earcon and the first character.
pub fn plan_announcement(event: &UiEvent, field: &Field, table: &ToneTable) -> AnnouncementPlan {
    let mut segments = vec![ToneSegment::tone(table.earcon_hz(field.kind()), table.earcon_ms)];
    let label = field.label.to_lowercase();
    if !label.is_empty() {
        segments.push(ToneSegment::gap(table.gap_ms));
        for c in label.chars() {
            segments.push(ToneSegment::tone(table.char_hz(c), table.letter_ms));
            segments.push(ToneSegment::gap(table.gap_ms));
        }
    }
    AnnouncementPlan {
        segments,
        transcript: event.transcript.clone(),
    }
}

/// Beep divider realizing `frequency_hz` (0 stays 0, i.e. silence).
pub fn frequency_to_divider(frequency_hz: u32) -> u8 {
    if frequency_hz == 0 {
        return 0;
    }
    let f = u64::from(frequency_hz);
    // round(12000 / f), half up
    let d = (2 * u64::from(BEEP_BASE_HZ) + f) / (2 * f);
    d.clamp(1, 255) as u8
}

/// Beep generator to play through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeepTarget {
    pub cad: CodecAddress,
    pub nid: NodeId,
}

/// Clock interval an announcement occupied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpokenSpan {
    pub start_ms: Millis,
    pub end_ms: Millis,
}

/// Plays a plan: one `SetBeepControl` per segment, the clock advanced by the
/// segment's duration after each, and a final `SetBeepControl(0)`.
///
/// On failure a silencing verb is still attempted before the error is
/// returned.
pub fn speak(
    plan: &AnnouncementPlan,
    binding: &ControllerBinding,
    target: BeepTarget,
    ctrl: &mut ControllerModel,
) -> Result<SpokenSpan, ClientError> {
    let start_ms = ctrl.clock_ms();
    let result: Result<(), ClientError> = plan.segments.iter().try_for_each(|seg| {
        let divider = frequency_to_divider(seg.frequency_hz);
        binding.send(ctrl, &VerbCommand::set_beep(target.cad, target.nid, divider))?;
        ctrl.advance_clock(Millis::from_integer(seg.duration_ms.into()))?;
        Ok(())
    });
    let silence = binding.send(ctrl, &VerbCommand::set_beep(target.cad, target.nid, 0));
    result?;
    silence?;
    Ok(SpokenSpan {
        start_ms,
        end_ms: ctrl.clock_ms(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::Profile;

    fn three_fields() -> Form {
        Form::new(
            "t",
            vec![
                Field::new("a", "A", FieldControl::Toggle { on: true }).unwrap(),
                Field::new("b", "B", FieldControl::Toggle { on: true }).unwrap(),
                Field::new("c", "C", FieldControl::Action).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn tab_moves_forward() {
        let mut f = three_fields();
        let ev = f.handle_key(Key::Tab);
        assert_eq!(f.focus_index(), 1);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, EventKind::FocusChanged);
        assert_eq!(ev[0].transcript, "B: on");
    }

    #[test]
    fn tab_wraps() {
        let mut f = three_fields();
        f.handle_key(Key::Tab);
        f.handle_key(Key::Tab);
        f.handle_key(Key::Tab);
        assert_eq!(f.focus_index(), 0);
        f.handle_key(Key::ShiftTab);
        assert_eq!(f.focus_index(), 2);
        f.handle_key(Key::Down);
        assert_eq!(f.focus_index(), 0);
        f.handle_key(Key::Up);
        assert_eq!(f.focus_index(), 2);
    }

    #[test]
    fn left_cycles_toggle() {
        let mut f = Form::new(
            "t",
            vec![Field::new("sb", "SecureBoot", FieldControl::Toggle { on: true }).unwrap()],
        )
        .unwrap();
        let ev = f.handle_key(Key::Left);
        assert_eq!(f.fields()[0].value_text(), "off");
        assert_eq!(ev[0].kind, EventKind::ValueChanged);
        assert_eq!(ev[0].transcript, "SecureBoot: off");
    }

    #[test]
    fn numeric_and_selection_wrap() {
        let mut f = Form::demo_bios();
        f.handle_key(Key::Tab);
        f.handle_key(Key::Tab);
        assert_eq!(f.focused().unwrap().id, "rtc-hour");
        for _ in 0..11 {
            f.handle_key(Key::Right);
        }
        assert_eq!(f.focused().unwrap().value_text(), "23");
        let ev = f.handle_key(Key::Right);
        assert_eq!(ev[0].transcript, "RTC Hour: 0");
        f.handle_key(Key::Left);
        assert_eq!(f.focused().unwrap().value_text(), "23");

        f.handle_key(Key::Tab);
        f.handle_key(Key::Tab);
        let ev = f.handle_key(Key::Left);
        assert_eq!(ev[0].transcript, "Boot Order: UEFI Shell");
    }

    #[test]
    fn enter_activates_actions_only() {
        let mut f = three_fields();
        assert!(f.handle_key(Key::Enter).is_empty());
        f.handle_key(Key::ShiftTab);
        let ev = f.handle_key(Key::Enter);
        assert_eq!(ev[0].kind, EventKind::Activated);
        assert_eq!(ev[0].transcript, "C activated");
        // actions have no value to cycle
        assert!(f.handle_key(Key::Left).is_empty());
    }

    #[test]
    fn unknown_keys_ignored() {
        let mut f = three_fields();
        assert!(f.handle_key_name("Escape").is_empty());
        assert_eq!(f.focus_index(), 0);
        assert_eq!(f.handle_key_name("shift+tab").len(), 1);
        assert!(Form::new("e", vec![]).unwrap().handle_key(Key::Tab).is_empty());
    }

    #[test]
    fn demo_form_contents() {
        let f = Form::demo_bios();
        let kinds: Vec<_> = f.fields().iter().map(|f| f.kind()).collect();
        assert_eq!(
            kinds,
            vec![FieldKind::Selection, FieldKind::Toggle, FieldKind::Numeric, FieldKind::Action]
        );
        assert_eq!(f.field("save-exit").unwrap().label, "Save & Exit");
        assert_eq!(f.snapshot().fields[2].range, Some((0, 23)));
    }

    #[test]
    fn form_file_errors() {
        let bad = "title = \"x\"\n[[fields]]\nid = \"a\"\nlabel = \"A\"\nkind = \"numeric\"\nmin = 0\nmax = 5\nvalue = 9\n";
        assert!(Form::from_toml_str(bad).unwrap_err().to_string().contains("`a`"));
        let dup = "title = \"x\"\n[[fields]]\nid = \"a\"\nlabel = \"A\"\nkind = \"action\"\n[[fields]]\nid = \"a\"\nlabel = \"B\"\nkind = \"action\"\n";
        assert!(matches!(Form::from_toml_str(dup), Err(FormError::DuplicateId(_))));
    }

    fn event_for(field: &Field) -> UiEvent {
        UiEvent::focus_or_value(EventKind::FocusChanged, field)
    }

    #[test]
    fn plan_for_os_toggle() {
        let field = Field::new("x", "os", FieldControl::Toggle { on: true }).unwrap();
        let plan = plan_announcement(&event_for(&field), &field, &ToneTable::default());
        let o = 300 + 25 * 14;
        let s = 300 + 25 * 18;
        assert_eq!((o, s), (650, 750));
        assert_eq!(
            plan.segments,
            vec![
                ToneSegment::tone(660, 120),
                ToneSegment::gap(20),
                ToneSegment::tone(o, 60),
                ToneSegment::gap(20),
                ToneSegment::tone(s, 60),
                ToneSegment::gap(20),
            ]
        );
        assert_eq!(plan.transcript, "os: on");
    }

    #[test]
    fn plan_edge_cases() {
        let t = ToneTable::default();
        let empty = Field::new("x", "", FieldControl::Action).unwrap();
        let plan = plan_announcement(&event_for(&empty), &empty, &t);
        assert_eq!(plan.segments, vec![ToneSegment::tone(440, 120)]);
        let odd = Field::new("y", "A1", FieldControl::Action).unwrap();
        let plan = plan_announcement(&event_for(&odd), &odd, &t);
        assert_eq!(plan.segments[2].frequency_hz, 300);
        assert_eq!(plan.segments[4].frequency_hz, 200);
        assert_eq!(plan.total_duration_ms(), 120 + 20 + 2 * 80);
    }

    #[test]
    fn tone_table_overrides() {
        let t = ToneTable::from_toml_str("action_hz = 500\ngap_ms = 10\n").unwrap();
        assert_eq!(t.action_hz, 500);
        assert_eq!(t.toggle_hz, 660);
        assert!(ToneTable::from_toml_str("action_hz = 20000\n").is_err());
        assert!(ToneTable::from_toml_str("gap_ms = 0\n").is_err());
        assert!(ToneTable::from_toml_str("bogus = 1\n").is_err());
    }

    #[test]
    fn dividers() {
        assert_eq!(frequency_to_divider(0), 0);
        assert_eq!(frequency_to_divider(660), 18);
        assert_eq!(frequency_to_divider(12_001), 1);
        assert_eq!(frequency_to_divider(47), 255);
        assert_eq!(frequency_to_divider(1), 255);
        // 12000/880 = 13.64
        assert_eq!(frequency_to_divider(880), 14);
    }

    fn machine() -> (ControllerModel, ControllerBinding, BeepTarget) {
        let mut ctrl = Profile::cx_default().build_controller().unwrap();
        let binding = ControllerBinding::establish(&mut ctrl).unwrap();
        let target = BeepTarget {
            cad: CodecAddress::default(),
            nid: NodeId(0x12),
        };
        (ctrl, binding, target)
    }

    fn timeline(ctrl: &ControllerModel) -> Vec<(Millis, u8)> {
        ctrl.codec(CodecAddress::default())
            .unwrap()
            .beep_timeline(NodeId(0x12))
            .unwrap()
            .entries()
            .to_vec()
    }

    #[test]
    fn speak_single_segment() {
        let (mut ctrl, b, t) = machine();
        ctrl.advance_clock(Millis::from_integer(7)).unwrap();
        let plan = AnnouncementPlan {
            segments: vec![ToneSegment::tone(660, 120)],
            transcript: "x".into(),
        };
        let span = speak(&plan, &b, t, &mut ctrl).unwrap();
        assert_eq!(
            timeline(&ctrl),
            vec![(Millis::from_integer(7), 18), (Millis::from_integer(127), 0)]
        );
        assert_eq!(span.end_ms - span.start_ms, Millis::from_integer(120));
        assert!(ctrl.fault_log().is_empty());
    }

    #[test]
    fn speak_empty_and_clamped() {
        let (mut ctrl, b, t) = machine();
        let empty = AnnouncementPlan {
            segments: vec![],
            transcript: "x".into(),
        };
        speak(&empty, &b, t, &mut ctrl).unwrap();
        assert_eq!(timeline(&ctrl), vec![(Millis::from_integer(0), 0)]);

        let (mut ctrl, b, t) = machine();
        let plan = AnnouncementPlan {
            segments: vec![ToneSegment::tone(12_001, 10)],
            transcript: "x".into(),
        };
        speak(&plan, &b, t, &mut ctrl).unwrap();
        assert_eq!(timeline(&ctrl)[0].1, 1);
    }

    #[test]
    fn speak_failure_still_silences() {
        let (mut ctrl, b, t) = machine();
        let plan = AnnouncementPlan {
            segments: vec![ToneSegment::tone(440, 0)],
            transcript: "x".into(),
        };
        // zero duration makes advance_clock fail after the tone started
        assert!(speak(&plan, &b, t, &mut ctrl).is_err());
        assert_eq!(timeline(&ctrl), vec![(Millis::from_integer(0), 0)]);
    }
}
