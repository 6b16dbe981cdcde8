//! In-process event bus between the router and the two agents, plus the
//! sliding conversation window.

use std::collections::VecDeque;

use crossbeam_channel::{unbounded, Receiver, Sender};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::error::{Error, Result};

pub const DEFAULT_WINDOW_CAPACITY: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    UserUtterance,
    AgentResponse,
    SilenceDetected,
    TopicShift,
    PriorityRetrieval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConversationEvent {
    pub kind: EventKind,
    pub turn_index: u64,
    pub text: String,
    pub timestamp: Timestamp,
}

impl ConversationEvent {
    pub fn new(kind: EventKind, turn_index: u64, text: impl Into<String>, timestamp: Timestamp) -> Self {
        Self {
            kind,
            turn_index,
            text: text.into(),
            timestamp,
        }
    }
}

/// An event stamped with its bus-wide publish sequence number.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub seq: u64,
    pub event: ConversationEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct SlidingWindow {
    capacity: usize,
    turns: VecDeque<Turn>,
}

impl SlidingWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "window capacity must be positive");
        Self {
            capacity,
            turns: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn push(&mut self, turn: Turn) {
        if self.turns.len() == self.capacity {
            self.turns.pop_front();
        }
        self.turns.push_back(turn);
    }

    /// The last `min(n, len)` turns, oldest first.
    pub fn context(&self, n: usize) -> Vec<Turn> {
        let skip = self.turns.len().saturating_sub(n);
        self.turns.iter().skip(skip).cloned().collect()
    }
}

struct Bus {
    subscribers: Vec<Sender<Envelope>>,
    next_seq: u64,
    closed: bool,
}

/// Fan-out bus with one unbounded FIFO per subscriber. Sequence numbers are
/// assigned and delivered under one lock, so every subscriber sees events
/// in the same global order.
pub struct ConversationStream {
    bus: Mutex<Bus>,
    window: RwLock<SlidingWindow>,
}

impl Default for ConversationStream {
    fn default() -> Self {
        Self::new(DEFAULT_WINDOW_CAPACITY)
    }
}

impl ConversationStream {
    pub fn new(window_capacity: usize) -> Self {
        Self {
            bus: Mutex::new(Bus {
                subscribers: Vec::new(),
                next_seq: 0,
                closed: false,
            }),
            window: RwLock::new(SlidingWindow::new(window_capacity)),
        }
    }

    /// Delivers `event` to every live subscriber and returns its sequence
    /// number. Utterances and responses also enter the window.
    pub fn publish(&self, event: ConversationEvent) -> Result<u64> {
        let mut bus = self.bus.lock();
        if bus.closed {
            return Err(Error::BusClosed);
        }
        let seq = bus.next_seq;
        bus.next_seq += 1;
        let role = match event.kind {
            EventKind::UserUtterance => Some(Role::User),
            EventKind::AgentResponse => Some(Role::Agent),
            _ => None,
        };
        if let Some(role) = role {
            self.window.write().push(Turn {
                role,
                text: event.text.clone(),
            });
        }
        let envelope = Envelope { seq, event };
        bus.subscribers.retain(|tx| tx.send(envelope.clone()).is_ok());
        Ok(seq)
    }

    /// A handle that receives events published from now on. Subscribing to a
    /// closed bus yields a handle already at end of stream.
    pub fn subscribe(&self) -> Subscription {
        let (tx, rx) = unbounded();
        let mut bus = self.bus.lock();
        if !bus.closed {
            bus.subscribers.push(tx);
        }
        Subscription { rx }
    }

    /// Closes the bus. Subscribers drain what was already queued, then see
    /// end of stream.
    pub fn close(&self) {
        let mut bus = self.bus.lock();
        bus.closed = true;
        bus.subscribers.clear();
    }

    pub fn is_closed(&self) -> bool {
        self.bus.lock().closed
    }

    /// Number of events published so far.
    pub fn published(&self) -> u64 {
        self.bus.lock().next_seq
    }

    pub fn window_context(&self, n: usize) -> Vec<Turn> {
        self.window.read().context(n)
    }
}

pub struct Subscription {
    rx: Receiver<Envelope>,
}

impl Subscription {
    /// Blocks for the next event; `None` once the bus is closed and drained.
    pub fn next_event(&self) -> Option<Envelope> {
        self.rx.recv().ok()
    }

    pub fn try_next(&self) -> Option<Envelope> {
        self.rx.try_recv().ok()
    }

    /// Stops receiving; the bus drops this subscriber on its next publish.
    pub fn close(self) {}
}
