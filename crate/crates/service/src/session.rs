//! One simulated machine plus the screen reader driving it.

use hda_access::client::{find_beep_generator, ClientError, ControllerBinding};
use hda_access::controller::ControllerModel;
use hda_access::profile::{Profile, ProfileError};
use hda_access::render::{timeline_to_pcm, write_wav, RenderConfig, RenderError};
use hda_access::screenreader::{plan_announcement, speak, BeepTarget, Form, Key, ToneTable, UiEvent};
use hda_access::verb::CodecAddress;
use hda_access::Millis;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("codec {0} has no beep generator")]
    NoBeep(CodecAddress),
}

/// A UI event and the clock interval its announcement occupied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoggedEvent {
    pub seq: u64,
    #[serde(flatten)]
    pub event: UiEvent,
    #[serde(serialize_with = "millis_f64")]
    pub start_ms: Millis,
    #[serde(serialize_with = "millis_f64")]
    pub end_ms: Millis,
}

fn millis_f64<S: serde::Serializer>(m: &Millis, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(*m.numer() as f64 / *m.denom() as f64)
}

pub struct Session {
    ctrl: ControllerModel,
    binding: ControllerBinding,
    target: BeepTarget,
    form: Form,
    tones: ToneTable,
    render: RenderConfig,
    log: Vec<LoggedEvent>,
    last_wav: Option<Vec<u8>>,
}

impl Session {
    /// Brings up the machine described by `profile` and locates the beep
    /// generator on codec 0.
    pub fn new(profile: &Profile, form: Form, tones: ToneTable) -> Result<Self, SessionError> {
        let mut ctrl = profile.build_controller()?;
        let binding = ControllerBinding::establish(&mut ctrl)?;
        let cad = CodecAddress::default();
        let topology = binding.discover(&mut ctrl, cad)?;
        let nid = find_beep_generator(&topology).map_err(|_| SessionError::NoBeep(cad))?;
        Ok(Session {
            ctrl,
            binding,
            target: BeepTarget { cad, nid },
            form,
            tones,
            render: RenderConfig::default(),
            log: Vec::new(),
            last_wav: None,
        })
    }

    pub fn form(&self) -> &Form {
        &self.form
    }

    pub fn controller(&self) -> &ControllerModel {
        &self.ctrl
    }

    pub fn target(&self) -> BeepTarget {
        self.target
    }

    pub fn events(&self) -> &[LoggedEvent] {
        &self.log
    }

    pub fn last_wav(&self) -> Option<&[u8]> {
        self.last_wav.as_deref()
    }

    /// Applies a key, announces every resulting event and renders the
    /// announcements into the "last audio" slot. Keys that produce no event
    /// leave the slot alone.
    pub fn press(&mut self, key: Key) -> Result<Vec<LoggedEvent>, SessionError> {
        let events = self.form.handle_key(key);
        let mut logged = Vec::with_capacity(events.len());
        for event in events {
            let field = self
                .form
                .field(&event.field_id)
                .expect("events name fields of this form");
            let plan = plan_announcement(&event, field, &self.tones);
            let span = speak(&plan, &self.binding, self.target, &mut self.ctrl)?;
            let entry = LoggedEvent {
                seq: self.log.len() as u64,
                event,
                start_ms: span.start_ms,
                end_ms: span.end_ms,
            };
            self.log.push(entry.clone());
            logged.push(entry);
        }
        if let (Some(first), Some(last)) = (logged.first(), logged.last()) {
            self.last_wav = Some(self.render_window(first.start_ms, last.end_ms)?);
        }
        Ok(logged)
    }

    /// One line per announced event.
    pub fn transcript(&self) -> String {
        self.log
            .iter()
            .map(|e| format!("{}\n", e.event.transcript))
            .collect()
    }

    fn timeline(&self) -> &hda_access::codec::BeepTimeline {
        self.ctrl
            .codec(self.target.cad)
            .and_then(|c| c.beep_timeline(self.target.nid).ok())
            .expect("target located at session start")
    }

    fn render_window(&self, from: Millis, to: Millis) -> Result<Vec<u8>, SessionError> {
        let window = self.timeline().window(from, to);
        let pcm = timeline_to_pcm(&window, to - from, &self.render)?;
        Ok(write_wav(&pcm))
    }

    /// Everything the beep generator played since power-on.
    pub fn session_wav(&self) -> Result<Vec<u8>, SessionError> {
        self.render_window(Millis::from_integer(0), self.ctrl.clock_ms())
    }
}
