use super::{NodeId, SimTime};

/// Application payload carried by a [`Message`].
pub trait Payload: Clone {
    /// Bytes the payload occupies on the wire, excluding framing.
    fn payload_bytes(&self) -> u32;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Message<M> {
    pub src: NodeId,
    pub dst: NodeId,
    /// Payload plus header.
    pub size_bytes: u32,
    pub sent_at: SimTime,
    pub multicast: bool,
    pub payload: M,
}

impl<M: Payload> Message<M> {
    pub fn payload_bytes(&self) -> u32 {
        self.payload.payload_bytes()
    }
}
