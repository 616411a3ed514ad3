//! Frame transports: in-process channels and TCP, plus a capturing wrapper.

use std::io::{BufReader, BufWriter};
use std::net::TcpStream;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::federation::wire::{decode_message, encode_message, read_frame, write_frame, Message};

/// A bidirectional, ordered, reliable frame pipe.
pub trait Link: Send {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<()>;
    fn recv_frame(&mut self) -> Result<Vec<u8>>;

    fn send(&mut self, msg: &Message) -> Result<()> {
        self.send_frame(encode_message(msg)?)
    }

    fn recv(&mut self) -> Result<Message> {
        decode_message(&self.recv_frame()?)
    }
}

impl<L: Link + ?Sized> Link for Box<L> {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<()> {
        (**self).send_frame(frame)
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>> {
        (**self).recv_frame()
    }
}

/// One end of an in-process link.
pub struct ChannelLink {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

impl ChannelLink {
    pub fn pair() -> (ChannelLink, ChannelLink) {
        let (a_tx, b_rx) = channel();
        let (b_tx, a_rx) = channel();
        (
            ChannelLink { tx: a_tx, rx: a_rx },
            ChannelLink { tx: b_tx, rx: b_rx },
        )
    }
}

impl Link for ChannelLink {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<()> {
        self.tx
            .send(frame)
            .map_err(|_| Error::Disconnected("in-process peer dropped".into()))
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>> {
        self.rx
            .recv()
            .map_err(|_| Error::Disconnected("in-process peer dropped".into()))
    }
}

pub struct TcpLink {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl TcpLink {
    pub fn new(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        Ok(TcpLink {
            reader,
            writer: BufWriter::new(stream),
        })
    }

    pub fn connect(addr: &str) -> Result<Self> {
        TcpLink::new(TcpStream::connect(addr)?)
    }
}

impl Link for TcpLink {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<()> {
        write_frame(&mut self.writer, &frame)
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>> {
        let frame = read_frame(&mut self.reader);
        if frame.is_err() {
            // a malformed frame leaves the stream unsynchronized
            let _ = self.reader.get_ref().shutdown(std::net::Shutdown::Both);
        }
        frame
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

/// Shared record of every frame that crossed a [`CaptureLink`].
#[derive(Clone, Default)]
pub struct FrameLog(Arc<Mutex<Vec<(Direction, Vec<u8>)>>>);

impl FrameLog {
    pub fn new() -> Self {
        FrameLog::default()
    }

    pub fn frames(&self) -> Vec<(Direction, Vec<u8>)> {
        self.0.lock().expect("frame log poisoned").clone()
    }

    fn push(&self, dir: Direction, frame: &[u8]) {
        self.0.lock().expect("frame log poisoned").push((dir, frame.to_vec()));
    }
}

/// Wraps a link and copies every frame into a [`FrameLog`].
pub struct CaptureLink<L> {
    inner: L,
    log: FrameLog,
}

impl<L: Link> CaptureLink<L> {
    pub fn new(inner: L, log: FrameLog) -> Self {
        CaptureLink { inner, log }
    }
}

impl<L: Link> Link for CaptureLink<L> {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<()> {
        self.log.push(Direction::Sent, &frame);
        self.inner.send_frame(frame)
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>> {
        let frame = self.inner.recv_frame()?;
        self.log.push(Direction::Received, &frame);
        Ok(frame)
    }
}
