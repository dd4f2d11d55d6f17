//! Message passing between converters.
//!
//! Each converter periodically broadcasts its (filtered) output current to
//! its neighbors over directed links with a one-sample delivery delay.
//! Attack notifications ride the same links so receivers can drop a
//! compromised sender from their current averaging.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Communication topology.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// Each converter receives from its left and right neighbor.
    Ring,
    /// Each converter receives from every other converter.
    Full,
}

/// Directed communication graph over `k` converters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CommGraph {
    pub k: usize,
    /// Directed links as (receiver, sender) pairs.
    pub links: Vec<(usize, usize)>,
}

impl CommGraph {
    pub fn new(k: usize, topology: Topology) -> Result<Self> {
        if k < 2 {
            return Err(Error::config(format!(
                "communication graph needs at least 2 converters, got {k}"
            )));
        }
        let mut links = Vec::new();
        for r in 0..k {
            match topology {
                Topology::Ring => {
                    let left = (r + k - 1) % k;
                    let right = (r + 1) % k;
                    links.push((r, left));
                    if right != left {
                        links.push((r, right));
                    }
                }
                Topology::Full => {
                    for s in 0..k {
                        if s != r {
                            links.push((r, s));
                        }
                    }
                }
            }
        }
        let graph = Self { k, links };
        graph.validate()?;
        Ok(graph)
    }

    pub fn validate(&self) -> Result<()> {
        let mut inbound = vec![0usize; self.k];
        for &(r, s) in &self.links {
            if r == s {
                return Err(Error::config(format!("self-link on converter {r}")));
            }
            if r >= self.k || s >= self.k {
                return Err(Error::config(format!("link ({r}, {s}) out of range for k={}", self.k)));
            }
            inbound[r] += 1;
        }
        if let Some(r) = inbound.iter().position(|&n| n == 0) {
            return Err(Error::config(format!("converter {r} has no inbound link")));
        }
        Ok(())
    }

    /// Senders that deliver to `receiver`, ascending.
    pub fn senders_to(&self, receiver: usize) -> Vec<usize> {
        let mut s: Vec<usize> = self
            .links
            .iter()
            .filter(|(r, _)| *r == receiver)
            .map(|(_, s)| *s)
            .collect();
        s.sort_unstable();
        s
    }

    /// Index of a directed link in `links`, if present.
    pub fn link_index(&self, sender: usize, receiver: usize) -> Option<usize> {
        self.links.iter().position(|&(r, s)| r == receiver && s == sender)
    }
}

/// Payload classes carried by the links.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum MessageKind {
    /// Filtered output current of the sender, A.
    Current,
    /// Sender reports (or clears) an attack on its own data.
    AttackNotification { active: bool },
}

/// One queued message on a directed link.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommMessage {
    pub sender: usize,
    pub receiver: usize,
    pub value: f64,
    /// Sample index at which the message was sent.
    pub sample_index: u64,
    pub kind: MessageKind,
}

/// FIFO message transport with a one-sample delivery delay.
#[derive(Clone, Debug, Default)]
pub struct CommBus {
    queue: VecDeque<CommMessage>,
}

impl CommBus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Queue one message per outbound link of `sender`. Messages sent at
    /// `sample_index` become readable at `sample_index + 1`.
    pub fn broadcast(
        &mut self,
        graph: &CommGraph,
        sender: usize,
        value: f64,
        sample_index: u64,
        kind: MessageKind,
    ) -> Result<()> {
        if sender >= graph.k {
            return Err(Error::config(format!("unknown sender {sender}")));
        }
        for &(r, s) in &graph.links {
            if s == sender {
                self.queue.push_back(CommMessage {
                    sender,
                    receiver: r,
                    value,
                    sample_index,
                    kind,
                });
            }
        }
        Ok(())
    }

    /// All messages visible to each receiver at `sample_index`, i.e. those
    /// sent strictly before it. Delivery order per receiver is
    /// (sample_index, sender) lexicographic.
    pub fn deliver(&mut self, graph: &CommGraph, sample_index: u64) -> Vec<Vec<CommMessage>> {
        let mut inboxes = vec![Vec::new(); graph.k];
        while let Some(msg) = self.queue.front() {
            if msg.sample_index + 1 > sample_index {
                break;
            }
            let msg = self.queue.pop_front().unwrap();
            inboxes[msg.receiver].push(msg);
        }
        for inbox in &mut inboxes {
            inbox.sort_by_key(|m| (m.sample_index, m.sender));
        }
        inboxes
    }

    /// Mutable view of the not-yet-delivered messages, for attack injection.
    pub fn in_flight_mut(&mut self) -> impl Iterator<Item = &mut CommMessage> {
        self.queue.iter_mut()
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }
}

/// Arithmetic mean of the local current and the received neighbor values.
/// An empty inbox degrades to the local value.
pub fn average_received(local_i: f64, inbox_values: &[f64]) -> f64 {
    let sum: f64 = local_i + inbox_values.iter().sum::<f64>();
    sum / (1.0 + inbox_values.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_of_four_topology() {
        let g = CommGraph::new(4, Topology::Ring).unwrap();
        assert_eq!(g.senders_to(0), vec![1, 3]);
        assert_eq!(g.senders_to(2), vec![1, 3]);
        assert!(g.link_index(1, 2).is_some());
        assert!(g.link_index(0, 2).is_none());
    }

    #[test]
    fn ring_of_two_dedupes_links() {
        let g = CommGraph::new(2, Topology::Ring).unwrap();
        assert_eq!(g.senders_to(0), vec![1]);
        assert_eq!(g.senders_to(1), vec![0]);
        assert_eq!(g.links.len(), 2);
    }

    #[test]
    fn full_topology_links_everyone() {
        let g = CommGraph::new(4, Topology::Full).unwrap();
        assert_eq!(g.senders_to(0), vec![1, 2, 3]);
        assert_eq!(g.links.len(), 12);
    }

    #[test]
    fn single_converter_graph_rejected() {
        assert!(CommGraph::new(1, Topology::Ring).is_err());
    }

    #[test]
    fn broadcast_reaches_ring_neighbors_only() {
        let g = CommGraph::new(4, Topology::Ring).unwrap();
        let mut bus = CommBus::new();
        bus.broadcast(&g, 2, 1.5, 0, MessageKind::Current).unwrap();
        let inboxes = bus.deliver(&g, 1);
        assert!(inboxes[0].is_empty());
        assert_eq!(inboxes[1].len(), 1);
        assert_eq!(inboxes[3].len(), 1);
        assert!(inboxes[2].is_empty());
    }

    #[test]
    fn one_sample_delivery_delay() {
        let g = CommGraph::new(3, Topology::Ring).unwrap();
        let mut bus = CommBus::new();
        bus.broadcast(&g, 0, 2.0, 5, MessageKind::Current).unwrap();
        // Not readable at the send sample.
        let at_send = bus.deliver(&g, 5);
        assert!(at_send.iter().all(|i| i.is_empty()));
        let next = bus.deliver(&g, 6);
        assert_eq!(next[1].len(), 1);
        assert_eq!(next[1][0].value, 2.0);
    }

    #[test]
    fn same_sample_broadcasts_order_by_sender() {
        let g = CommGraph::new(3, Topology::Full).unwrap();
        let mut bus = CommBus::new();
        bus.broadcast(&g, 2, 20.0, 0, MessageKind::Current).unwrap();
        bus.broadcast(&g, 1, 10.0, 0, MessageKind::Current).unwrap();
        let inboxes = bus.deliver(&g, 1);
        let senders: Vec<usize> = inboxes[0].iter().map(|m| m.sender).collect();
        assert_eq!(senders, vec![1, 2]);
    }

    #[test]
    fn unknown_sender_is_config_error() {
        let g = CommGraph::new(3, Topology::Ring).unwrap();
        let mut bus = CommBus::new();
        assert!(bus.broadcast(&g, 9, 0.0, 0, MessageKind::Current).is_err());
    }

    #[test]
    fn average_received_cases() {
        assert_eq!(average_received(2.0, &[2.0, 2.0]), 2.0);
        assert_eq!(average_received(1.0, &[3.0]), 2.0);
        assert_eq!(average_received(4.2, &[]), 4.2);
    }
}
