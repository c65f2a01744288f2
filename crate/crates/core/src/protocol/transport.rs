//! Byte-stream transports for the classical channel.

use std::io::{self, Read, Write};
use std::net::{Shutdown, TcpStream};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};

/// A reliable, ordered, bidirectional byte stream.
pub trait Transport: Read + Write + Send {
    /// Signals end of stream to the peer. Further writes fail.
    fn finish(&mut self) -> io::Result<()>;
}

impl Transport for TcpStream {
    fn finish(&mut self) -> io::Result<()> {
        self.flush()?;
        match self.shutdown(Shutdown::Write) {
            Err(e) if e.kind() == io::ErrorKind::NotConnected => Ok(()),
            r => r,
        }
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn finish(&mut self) -> io::Result<()> {
        (**self).finish()
    }
}

/// One end of an in-memory duplex pipe.
pub struct LoopbackEnd {
    tx: Option<Sender<Vec<u8>>>,
    rx: Receiver<Vec<u8>>,
    buf: Vec<u8>,
    pos: usize,
}

/// Two connected in-memory endpoints.
pub fn loopback_pair() -> (LoopbackEnd, LoopbackEnd) {
    let (a_tx, b_rx) = channel();
    let (b_tx, a_rx) = channel();
    let end = |tx, rx| LoopbackEnd {
        tx: Some(tx),
        rx,
        buf: Vec::new(),
        pos: 0,
    };
    (end(a_tx, a_rx), end(b_tx, b_rx))
}

impl Read for LoopbackEnd {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        if out.is_empty() {
            return Ok(0);
        }
        while self.pos == self.buf.len() {
            match self.rx.recv() {
                Ok(chunk) => {
                    self.buf = chunk;
                    self.pos = 0;
                }
                // peer dropped its sender: end of stream
                Err(_) => return Ok(0),
            }
        }
        let n = out.len().min(self.buf.len() - self.pos);
        out[..n].copy_from_slice(&self.buf[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

impl Write for LoopbackEnd {
    fn write(&mut self, data: &[u8]) -> io::Result<usize> {
        let tx = self
            .tx
            .as_ref()
            .ok_or_else(|| io::Error::new(io::ErrorKind::BrokenPipe, "loopback already finished"))?;
        if data.is_empty() {
            return Ok(0);
        }
        tx.send(data.to_vec())
            .map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "loopback peer closed"))?;
        Ok(data.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl Transport for LoopbackEnd {
    fn finish(&mut self) -> io::Result<()> {
        self.tx = None;
        Ok(())
    }
}

/// Shared log of every byte written through a [`Recording`].
pub type WireLog = Arc<Mutex<Vec<u8>>>;

/// Wraps a transport and keeps a copy of everything it sends.
pub struct Recording<T> {
    inner: T,
    log: WireLog,
}

impl<T> Recording<T> {
    pub fn new(inner: T) -> (Self, WireLog) {
        let log = WireLog::default();
        (
            Self {
                inner,
                log: Arc::clone(&log),
            },
            log,
        )
    }
}

impl<T: Read> Read for Recording<T> {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        self.inner.read(out)
    }
}

impl<T: Write> Write for Recording<T> {
    fn write(&mut self, data: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(data)?;
        self.log.lock().expect("wire log poisoned").extend_from_slice(&data[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

impl<T: Transport> Transport for Recording<T> {
    fn finish(&mut self) -> io::Result<()> {
        self.inner.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loopback_carries_bytes_both_ways() {
        let (mut a, mut b) = loopback_pair();
        a.write_all(b"hello").unwrap();
        b.write_all(b"world!").unwrap();
        let mut buf = [0u8; 5];
        b.read_exact(&mut buf).unwrap();
        assert_eq!(&buf, b"hello");
        let mut buf = [0u8; 6];
        a.read_exact(&mut buf).unwrap();
        assert_eq!(&buf, b"world!");
    }

    #[test]
    fn finish_gives_eof() {
        let (mut a, mut b) = loopback_pair();
        a.write_all(b"xy").unwrap();
        a.finish().unwrap();
        assert!(a.write_all(b"z").is_err());
        let mut v = Vec::new();
        b.read_to_end(&mut v).unwrap();
        assert_eq!(v, b"xy");
    }

    #[test]
    fn recording_logs_writes_only() {
        let (a, mut b) = loopback_pair();
        let (mut rec, log) = Recording::new(a);
        rec.write_all(b"abc").unwrap();
        b.write_all(b"ignored").unwrap();
        let mut buf = [0u8; 7];
        rec.read_exact(&mut buf).unwrap();
        assert_eq!(&*log.lock().unwrap(), b"abc");
    }
}
