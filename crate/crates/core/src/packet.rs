//! Frames exchanged between nodes.

use serde::{Deserialize, Serialize};

use crate::adaptive::ScheduleBitfield;
use crate::icn::Name;
use crate::radio::NodeId;

/// Phase of an Interest relative to the routing tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterestPacket {
    pub name: Name,
    pub nonce: u64,
    pub direction: Direction,
    pub piggyback: Option<Box<ScheduleBitfield>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataChunk {
    pub name: Name,
    pub chunk_index: u32,
    pub payload_bytes: usize,
}

/// Name advertisement travelling child to parent toward the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamPacket {
    pub prefix: Name,
    pub origin: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Packet {
    Interest(InterestPacket),
    Data(DataChunk),
    Nam(NamPacket),
    Dio { rank: u32 },
    Dao { parent: NodeId },
    Beacon,
    LinkAck { acked_seq: u64 },
}

impl Packet {
    pub fn kind(&self) -> &'static str {
        match self {
            Packet::Interest(_) => "interest",
            Packet::Data(_) => "data",
            Packet::Nam(_) => "nam",
            Packet::Dio { .. } => "dio",
            Packet::Dao { .. } => "dao",
            Packet::Beacon => "beacon",
            Packet::LinkAck { .. } => "ack",
        }
    }

    /// Nominal on-air size in bytes.
    pub fn size_bytes(&self) -> usize {
        match self {
            Packet::Interest(i) => 24 + i.name.wire_len() + i.piggyback.as_ref().map_or(0, |b| b.wire_len()),
            Packet::Data(d) => 24 + d.name.wire_len() + d.payload_bytes,
            Packet::Nam(n) => 20 + n.prefix.wire_len(),
            Packet::Dio { .. } => 28,
            Packet::Dao { .. } => 24,
            Packet::Beacon => 30,
            Packet::LinkAck { .. } => 5,
        }
    }
}
