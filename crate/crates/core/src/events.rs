//! Command routing and the kiosk event broadcaster.
//!
//! Frontends subscribe to a single broadcaster. Each subscriber has a
//! bounded buffer of [`EVENT_BUFFER`] events; when a subscriber falls further
//! behind, its oldest events are dropped and it observes a [`StreamItem::Gap`]
//! carrying the number of events it missed.

use std::collections::HashSet;
use std::path::Path;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use crate::error::{load_file, parse_json, Error, Result};
use crate::text::{normalize, tokenize, Token};

pub const EVENT_BUFFER: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    AvatarAnimation,
    DisplayText,
    DisplayPanel,
    MediaStub,
}

/// An event before it has been stamped with a sequence number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventTemplate {
    pub kind: EventKind,
    pub name: String,
    #[serde(default)]
    pub payload: String,
}

impl EventTemplate {
    pub fn new(kind: EventKind, name: &str, payload: &str) -> Self {
        EventTemplate {
            kind,
            name: name.to_owned(),
            payload: payload.to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KioskEvent {
    pub seq: u64,
    pub kind: EventKind,
    pub name: String,
    pub payload: String,
    pub ts: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandRule {
    pub triggers: Vec<String>,
    #[serde(default)]
    pub response_text: String,
    #[serde(default)]
    pub events: Vec<EventTemplate>,
}

impl CommandRule {
    fn validate(&self) -> Result<()> {
        if self.triggers.is_empty() {
            return Err(Error::Validation("command rule has no triggers".into()));
        }
        for t in &self.triggers {
            if t.is_empty() || normalize(t) != *t {
                return Err(Error::Validation(format!(
                    "trigger {t:?} is not normalized"
                )));
            }
        }
        if self.events.is_empty() && self.response_text.trim().is_empty() {
            return Err(Error::Validation(format!(
                "rule {:?} has neither events nor response text",
                self.triggers[0]
            )));
        }
        Ok(())
    }
}

/// A matched rule together with the trigger that selected it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteMatch<'a> {
    pub rule: &'a CommandRule,
    pub trigger: &'a str,
}

/// Validated command rules with globally unique triggers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    rules: Vec<CommandRule>,
    trigger_tokens: Vec<Vec<Vec<Token>>>,
}

impl RuleSet {
    pub fn new(rules: Vec<CommandRule>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &rules {
            r.validate()?;
            for t in &r.triggers {
                if !seen.insert(t.as_str()) {
                    return Err(Error::Validation(format!("duplicate trigger {t:?}")));
                }
            }
        }
        let trigger_tokens = rules
            .iter()
            .map(|r| r.triggers.iter().map(|t| tokenize(t)).collect())
            .collect();
        Ok(RuleSet {
            rules,
            trigger_tokens,
        })
    }

    /// JSON array of `{triggers, response_text, events: [{kind, name, payload}]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        Self::new(parse_json("rules", text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_file(path, Self::from_json)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.rules).expect("rules always serialize")
    }

    pub fn rules(&self) -> &[CommandRule] {
        &self.rules
    }

    /// Finds the rule whose trigger occurs in the utterance as a contiguous
    /// token run. The longest trigger (in tokens) wins; ties go to the
    /// earlier rule.
    pub fn route(&self, utterance: &str) -> Option<RouteMatch<'_>> {
        let words = tokenize(utterance);
        let mut best: Option<(usize, RouteMatch<'_>)> = None;
        for (rule, triggers) in self.rules.iter().zip(&self.trigger_tokens) {
            for (trigger, toks) in rule.triggers.iter().zip(triggers) {
                if !crate::text::contains_phrase(&words, toks) {
                    continue;
                }
                if best.as_ref().is_none_or(|(len, _)| toks.len() > *len) {
                    best = Some((toks.len(), RouteMatch { rule, trigger }));
                }
            }
        }
        best.map(|(_, m)| m)
    }

    /// The built-in offline command set.
    pub fn default_rules() -> Self {
        use EventKind::*;
        let rule = |triggers: &[&str], response: &str, events: Vec<EventTemplate>| CommandRule {
            triggers: triggers.iter().map(|s| s.to_string()).collect(),
            response_text: response.to_owned(),
            events,
        };
        Self::new(vec![
            rule(
                &["hello", "hi", "salam", "privet"],
                "Salam!",
                vec![
                    EventTemplate::new(AvatarAnimation, "wave", ""),
                    EventTemplate::new(DisplayText, "greeting", "Salam!"),
                ],
            ),
            rule(
                &["how are you", "kak dela"],
                "I'm great, thank you! How can I help you?",
                vec![EventTemplate::new(AvatarAnimation, "talk", "")],
            ),
            rule(
                &["weather", "pogoda"],
                "Bishkek: +18°C, clear sky.",
                vec![
                    EventTemplate::new(DisplayText, "weather", "Bishkek: +18°C, clear sky"),
                    EventTemplate::new(AvatarAnimation, "talk", ""),
                ],
            ),
            rule(
                &["news", "novosti"],
                "Here are today's headlines.",
                vec![
                    EventTemplate::new(
                        DisplayText,
                        "news",
                        "Admission to the university is open. Orientation week starts on Monday.",
                    ),
                    EventTemplate::new(AvatarAnimation, "talk", ""),
                ],
            ),
            rule(
                &["what time is it", "current time", "vremya"],
                "Here is the current time in Kyrgyzstan.",
                vec![
                    EventTemplate::new(DisplayText, "time", "Asia/Bishkek (UTC+6)"),
                    EventTemplate::new(AvatarAnimation, "talk", ""),
                ],
            ),
            rule(
                &["music", "play music", "muzyka"],
                "Playing some music.",
                vec![
                    EventTemplate::new(MediaStub, "music", "music"),
                    EventTemplate::new(AvatarAnimation, "dance", ""),
                ],
            ),
            rule(
                &["studencheskiy gorodok", "campus map", "show campus"],
                "Here is our campus.",
                vec![
                    EventTemplate::new(DisplayPanel, "campus_map", "campus_map"),
                    EventTemplate::new(AvatarAnimation, "talk", ""),
                ],
            ),
        ])
        .expect("built-in rules are valid")
    }
}

/// One item read from a subscription.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StreamItem {
    Event(KioskEvent),
    /// The subscriber fell behind and `dropped` events were discarded.
    Gap {
        dropped: u64,
    },
}

impl StreamItem {
    pub fn gap(dropped: u64) -> Self {
        StreamItem::Gap { dropped }
    }
}

/// Events serialize as themselves; gaps as `{"kind":"gap","dropped":N}`.
impl Serialize for StreamItem {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        match self {
            StreamItem::Event(e) => e.serialize(s),
            StreamItem::Gap { dropped } => {
                let mut st = s.serialize_struct("Gap", 2)?;
                st.serialize_field("kind", "gap")?;
                st.serialize_field("dropped", dropped)?;
                st.end()
            }
        }
    }
}

struct Inner {
    next_seq: u64,
    sender: Option<broadcast::Sender<KioskEvent>>,
}

/// Fan-out of kiosk events to any number of subscribers.
///
/// Sequence numbers are assigned and sent under one lock, so every
/// subscriber sees strictly increasing `seq` values.
pub struct Broadcaster {
    inner: Mutex<Inner>,
}

impl Default for Broadcaster {
    fn default() -> Self {
        Self::new()
    }
}

impl Broadcaster {
    pub fn new() -> Self {
        Self::with_capacity(EVENT_BUFFER)
    }

    pub fn with_capacity(capacity: usize) -> Self {
        let (tx, _) = broadcast::channel(capacity);
        Broadcaster {
            inner: Mutex::new(Inner {
                next_seq: 1,
                sender: Some(tx),
            }),
        }
    }

    /// Stamps the template with the next seq and the current time, then
    /// delivers it to all current subscribers.
    pub fn publish(&self, template: &EventTemplate) -> Result<KioskEvent> {
        let mut inner = self.inner.lock().expect("broadcaster lock poisoned");
        let seq = inner.next_seq;
        let Some(tx) = inner.sender.as_ref() else {
            return Err(Error::Unavailable("broadcaster is shut down".into()));
        };
        let event = KioskEvent {
            seq,
            kind: template.kind,
            name: template.name.clone(),
            payload: template.payload.clone(),
            ts: Utc::now(),
        };
        // no subscribers is not an error
        let _ = tx.send(event.clone());
        inner.next_seq += 1;
        Ok(event)
    }

    pub fn publish_all(&self, templates: &[EventTemplate]) -> Result<Vec<KioskEvent>> {
        templates.iter().map(|t| self.publish(t)).collect()
    }

    pub fn subscribe(&self) -> Result<Subscription> {
        let inner = self.inner.lock().expect("broadcaster lock poisoned");
        match inner.sender.as_ref() {
            Some(tx) => Ok(Subscription { rx: tx.subscribe() }),
            None => Err(Error::Unavailable("broadcaster is shut down".into())),
        }
    }

    /// Closes the channel. Existing subscriptions drain what they hold and
    /// then end; new subscriptions and publishes fail.
    pub fn shutdown(&self) {
        self.inner.lock().expect("broadcaster lock poisoned").sender = None;
    }

    pub fn subscriber_count(&self) -> usize {
        let inner = self.inner.lock().expect("broadcaster lock poisoned");
        inner.sender.as_ref().map_or(0, |tx| tx.receiver_count())
    }
}

pub struct Subscription {
    rx: broadcast::Receiver<KioskEvent>,
}

impl Subscription {
    /// Next event or gap marker; `None` once the broadcaster has shut down
    /// and the buffer is drained.
    pub async fn next(&mut self) -> Option<StreamItem> {
        match self.rx.recv().await {
            Ok(e) => Some(StreamItem::Event(e)),
            Err(broadcast::error::RecvError::Lagged(n)) => Some(StreamItem::gap(n)),
            Err(broadcast::error::RecvError::Closed) => None,
        }
    }

    /// Blocking variant of [`Subscription::next`] for non-async callers.
    pub fn next_blocking(&mut self) -> Option<StreamItem> {
        match self.rx.blocking_recv() {
            Ok(e) => Some(StreamItem::Event(e)),
            Err(broadcast::error::RecvError::Lagged(n)) => Some(StreamItem::gap(n)),
            Err(broadcast::error::RecvError::Closed) => None,
        }
    }

    /// Non-blocking read; `None` when nothing is buffered.
    pub fn try_next(&mut self) -> Option<StreamItem> {
        match self.rx.try_recv() {
            Ok(e) => Some(StreamItem::Event(e)),
            Err(broadcast::error::TryRecvError::Lagged(n)) => Some(StreamItem::gap(n)),
            Err(_) => None,
        }
    }
}
