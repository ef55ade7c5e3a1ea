//! Network model: degradable one-way channels, the binary wire format and a
//! UDP transport for live runs.

pub mod channel;
pub mod datagram;
pub mod presets;
pub mod wire;

pub use channel::{Channel, ChannelConfig, ChannelError, ChannelStats, DropCause, InFlight, Jitter, SendOutcome};
pub use datagram::DatagramTransport;
pub use wire::{decode, encode, CloudPoint, PointBlock, WireError, WireMessage};
