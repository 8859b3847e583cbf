//! Speech-act messages and per-(sender, receiver) FIFO channels.
//!
//! Only the head of a queue is ever eligible for reception, which is the same
//! rule reception guards use in [`crate::cpn::enabled`].

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpn::Token;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Performative {
    Request,
    Inform,
    Order,
    Wish,
}

impl fmt::Display for Performative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Performative::Request => "request",
            Performative::Inform => "inform",
            Performative::Order => "order",
            Performative::Wish => "wish",
        })
    }
}

/// Ordered (sender, receiver) pair naming one channel.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelKey {
    pub sender: String,
    pub receiver: String,
}

impl ChannelKey {
    pub fn new(sender: impl Into<String>, receiver: impl Into<String>) -> Self {
        ChannelKey {
            sender: sender.into(),
            receiver: receiver.into(),
        }
    }
}

impl fmt::Display for ChannelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.sender, self.receiver)
    }
}

/// A speech-act message. Its wire form is one JSON object with the fields
/// below.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Message {
    pub sender: String,
    pub receiver: String,
    pub performative: Performative,
    pub action: String,
    #[serde(default)]
    pub params: Vec<Token>,
    /// Assigned by [`Channels::send`]; starts at 1 on every channel.
    #[serde(default)]
    pub seq: u64,
}

impl Message {
    pub fn new(
        sender: impl Into<String>,
        receiver: impl Into<String>,
        performative: Performative,
        action: impl Into<String>,
        params: Vec<Token>,
    ) -> Self {
        Message {
            sender: sender.into(),
            receiver: receiver.into(),
            performative,
            action: action.into(),
            params,
            seq: 0,
        }
    }

    pub fn key(&self) -> ChannelKey {
        ChannelKey::new(&self.sender, &self.receiver)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MessagingError {
    #[error("agent `{0}` cannot send a message to itself")]
    SelfSend(String),
    #[error("channel {channel} is full ({capacity} messages)")]
    BackpressureExceeded { channel: ChannelKey, capacity: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize)]
pub struct Channel {
    pub queue: VecDeque<Message>,
    next_seq: u64,
    sent: u64,
    received: u64,
}

impl Channel {
    pub fn sent(&self) -> u64 {
        self.sent
    }

    pub fn received(&self) -> u64 {
        self.received
    }
}

/// The set of channels of a society. Queues are unbounded unless a capacity
/// is configured.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Channels {
    channels: BTreeMap<ChannelKey, Channel>,
    capacity: Option<usize>,
}

impl Channels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bounded(capacity: usize) -> Self {
        Channels {
            channels: BTreeMap::new(),
            capacity: Some(capacity),
        }
    }

    /// Appends `msg` to its channel with the next sequence number.
    pub fn send(&mut self, mut msg: Message) -> Result<u64, MessagingError> {
        if msg.sender == msg.receiver {
            return Err(MessagingError::SelfSend(msg.sender));
        }
        let key = msg.key();
        let channel = self.channels.entry(key.clone()).or_default();
        if let Some(capacity) = self.capacity {
            if channel.queue.len() >= capacity {
                return Err(MessagingError::BackpressureExceeded { channel: key, capacity });
            }
        }
        channel.next_seq += 1;
        channel.sent += 1;
        msg.seq = channel.next_seq;
        channel.queue.push_back(msg);
        Ok(channel.next_seq)
    }

    pub fn head(&self, key: &ChannelKey) -> Option<&Message> {
        self.channels.get(key).and_then(|c| c.queue.front())
    }

    /// Pops the head of `key` if it carries `action`.
    pub fn receive_on(&mut self, key: &ChannelKey, action: &str) -> Option<Message> {
        let channel = self.channels.get_mut(key)?;
        if channel.queue.front()?.action != action {
            return None;
        }
        channel.received += 1;
        channel.queue.pop_front()
    }

    /// Pops the first head message addressed to `receiver` that carries
    /// `action`, scanning channels in key order. A non-matching head blocks
    /// its channel.
    pub fn receive(&mut self, receiver: &str, action: &str) -> Option<Message> {
        let key = self
            .channels
            .iter()
            .find(|(k, c)| k.receiver == receiver && c.queue.front().is_some_and(|m| m.action == action))
            .map(|(k, _)| k.clone())?;
        self.receive_on(&key, action)
    }

    pub fn channel(&self, key: &ChannelKey) -> Option<&Channel> {
        self.channels.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ChannelKey, &Channel)> {
        self.channels.iter()
    }

    /// Total messages waiting in all queues.
    pub fn queued(&self) -> usize {
        self.channels.values().map(|c| c.queue.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.queued() == 0
    }

    pub fn total_sent(&self) -> u64 {
        self.channels.values().map(|c| c.sent).sum()
    }

    pub fn total_received(&self) -> u64 {
        self.channels.values().map(|c| c.received).sum()
    }

    /// Queue contents only, without counters. Used as a state key.
    pub fn contents(&self) -> Vec<(ChannelKey, Vec<Message>)> {
        self.channels
            .iter()
            .filter(|(_, c)| !c.queue.is_empty())
            .map(|(k, c)| (k.clone(), c.queue.iter().cloned().collect()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpn::TokenValue;

    fn msg(s: &str, r: &str, action: &str) -> Message {
        Message::new(s, r, Performative::Request, action, vec![Token::new("Pg", TokenValue::id("pg1"))])
    }

    #[test]
    fn first_send_gets_seq_one() {
        let mut ch = Channels::new();
        assert_eq!(ch.send(msg("WP", "PP", "G")).unwrap(), 1);
        let key = ChannelKey::new("WP", "PP");
        assert_eq!(ch.channel(&key).unwrap().queue.len(), 1);
        assert_eq!(ch.head(&key).unwrap().seq, 1);
    }

    #[test]
    fn two_sends_keep_fifo_order() {
        let mut ch = Channels::new();
        ch.send(msg("WP", "PP", "G")).unwrap();
        ch.send(msg("WP", "PP", "H")).unwrap();
        let key = ChannelKey::new("WP", "PP");
        let seqs: Vec<u64> = ch.channel(&key).unwrap().queue.iter().map(|m| m.seq).collect();
        assert_eq!(seqs, vec![1, 2]);
        assert_eq!(ch.receive_on(&key, "G").unwrap().seq, 1);
        assert_eq!(ch.receive_on(&key, "H").unwrap().seq, 2);
    }

    #[test]
    fn self_send_is_rejected() {
        let mut ch = Channels::new();
        assert_eq!(ch.send(msg("WP", "WP", "G")), Err(MessagingError::SelfSend("WP".into())));
        assert!(ch.is_empty());
    }

    #[test]
    fn receive_matches_head_only() {
        let mut ch = Channels::new();
        ch.send(msg("WP", "PP", "G")).unwrap();
        assert!(ch.receive("PP", "Ma").is_none());
        assert_eq!(ch.queued(), 1);
        let m = ch.receive("PP", "G").unwrap();
        assert_eq!(m.action, "G");
        assert!(ch.is_empty());
        assert!(ch.receive("PP", "G").is_none());
    }

    #[test]
    fn bounded_channel_reports_backpressure() {
        let mut ch = Channels::bounded(1);
        ch.send(msg("A", "B", "x")).unwrap();
        assert!(matches!(
            ch.send(msg("A", "B", "x")),
            Err(MessagingError::BackpressureExceeded { capacity: 1, .. })
        ));
        // other channels are unaffected
        ch.send(msg("B", "A", "x")).unwrap();
    }

    #[test]
    fn wire_form_has_exactly_the_message_fields() {
        let mut m = msg("WP", "PP", "G");
        m.seq = 3;
        let v = serde_json::to_value(&m).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, vec!["action", "params", "performative", "receiver", "sender", "seq"]);
        let back: Message = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }
}
