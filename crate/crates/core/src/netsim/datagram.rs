//! One message per UDP datagram.

use std::io;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::time::Duration;

use super::wire::{decode, encode, WireError, WireMessage};

/// Largest UDP payload over IPv4.
pub const MAX_DATAGRAM: usize = 65_507;

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("message of {0} bytes exceeds one datagram")]
    TooLarge(usize),
    #[error("decode: {0}")]
    Wire(#[from] WireError),
}

#[derive(Debug)]
pub struct DatagramTransport {
    socket: UdpSocket,
    peer: SocketAddr,
    buf: Vec<u8>,
}

impl DatagramTransport {
    pub fn bind(local: impl ToSocketAddrs, peer: impl ToSocketAddrs) -> Result<Self, TransportError> {
        let socket = UdpSocket::bind(local)?;
        let peer = peer
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "no peer address"))?;
        Ok(DatagramTransport {
            socket,
            peer,
            buf: vec![0u8; MAX_DATAGRAM + 1],
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.socket.local_addr()
    }

    pub fn set_peer(&mut self, peer: SocketAddr) {
        self.peer = peer;
    }

    pub fn send(&self, msg: &WireMessage) -> Result<usize, TransportError> {
        let bytes = encode(msg);
        if bytes.len() > MAX_DATAGRAM {
            return Err(TransportError::TooLarge(bytes.len()));
        }
        Ok(self.socket.send_to(&bytes, self.peer)?)
    }

    /// Waits up to `timeout` for one message. `Ok(None)` on timeout.
    pub fn recv(&mut self, timeout: Duration) -> Result<Option<WireMessage>, TransportError> {
        self.socket.set_read_timeout(Some(timeout.max(Duration::from_micros(1))))?;
        match self.socket.recv_from(&mut self.buf) {
            Ok((n, _)) => Ok(Some(decode(&self.buf[..n])?)),
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::{HandSample, Pose, Timestamp};

    #[test]
    fn loopback_round_trip() {
        let mut a = DatagramTransport::bind("127.0.0.1:0", "127.0.0.1:9").unwrap();
        let mut b = DatagramTransport::bind("127.0.0.1:0", a.local_addr().unwrap()).unwrap();
        a.set_peer(b.local_addr().unwrap());
        let msg = WireMessage::UserMotion(HandSample::new(Timestamp(5), Pose::from_translation(1.0, 2.0, 3.0), 0.25));
        a.send(&msg).unwrap();
        assert_eq!(b.recv(Duration::from_secs(2)).unwrap(), Some(msg));
        assert_eq!(b.recv(Duration::from_millis(10)).unwrap(), None);
    }
}
