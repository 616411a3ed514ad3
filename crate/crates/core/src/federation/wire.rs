//! Framed binary protocol between the server and its clients.
//!
//! ```text
//! frame   = len:u32le  version:u8(=0x01)  type:u8  payload[len]
//! block   = mode:u32le  ndim:u8(=2)  dims:ndim×u32le  values:Π dims × f64le (row-major)
//! blocks  = count:u32le  block*
//!
//! HELLO         0x01  client:u32le
//! FACTORS       0x02  blocks
//! LOCATIONS     0x03  count:u32le  index:u32le*
//! PUBLIC_UPLOAD 0x04  round:u64le  blocks
//! GLOBAL_BCAST  0x05  round:u64le  blocks
//! ROUND_STATUS  0x06  round:u64le  rel_err:f64le
//! SHUTDOWN      0x07  reason:u8
//! ```
//!
//! `len` counts payload bytes only. Blocks are always two-dimensional, so no
//! message can carry a tensor.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};
use crate::federation::model::ModeBlock;
use crate::matrix::Matrix;

pub const PROTOCOL_VERSION: u8 = 0x01;
/// Largest payload accepted from the wire.
pub const MAX_PAYLOAD: usize = 1 << 28;
const HEADER_LEN: usize = 6;

#[repr(u8)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MessageType {
    Hello = 0x01,
    Factors = 0x02,
    Locations = 0x03,
    PublicUpload = 0x04,
    GlobalBcast = 0x05,
    RoundStatus = 0x06,
    Shutdown = 0x07,
}

impl TryFrom<u8> for MessageType {
    type Error = Error;

    fn try_from(b: u8) -> Result<Self> {
        Ok(match b {
            0x01 => MessageType::Hello,
            0x02 => MessageType::Factors,
            0x03 => MessageType::Locations,
            0x04 => MessageType::PublicUpload,
            0x05 => MessageType::GlobalBcast,
            0x06 => MessageType::RoundStatus,
            0x07 => MessageType::Shutdown,
            other => return Err(Error::Format(format!("unknown message type 0x{other:02x}"))),
        })
    }
}

#[repr(u8)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShutdownReason {
    Converged = 0,
    MaxRounds = 1,
    Aborted = 2,
}

impl TryFrom<u8> for ShutdownReason {
    type Error = Error;

    fn try_from(b: u8) -> Result<Self> {
        Ok(match b {
            0 => ShutdownReason::Converged,
            1 => ShutdownReason::MaxRounds,
            2 => ShutdownReason::Aborted,
            other => return Err(Error::Format(format!("unknown shutdown reason {other}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    /// Client → server introduction; echoed back by the server as the go-ahead.
    Hello { client: u32 },
    /// Coupled-mode factor matrices after burn-in, used only for selection.
    Factors { blocks: Vec<ModeBlock> },
    Locations { indices: Vec<u32> },
    PublicUpload { round: u64, blocks: Vec<ModeBlock> },
    GlobalBcast { round: u64, blocks: Vec<ModeBlock> },
    RoundStatus { round: u64, rel_err: f64 },
    Shutdown { reason: ShutdownReason },
}

impl Message {
    pub fn kind(&self) -> MessageType {
        match self {
            Message::Hello { .. } => MessageType::Hello,
            Message::Factors { .. } => MessageType::Factors,
            Message::Locations { .. } => MessageType::Locations,
            Message::PublicUpload { .. } => MessageType::PublicUpload,
            Message::GlobalBcast { .. } => MessageType::GlobalBcast,
            Message::RoundStatus { .. } => MessageType::RoundStatus,
            Message::Shutdown { .. } => MessageType::Shutdown,
        }
    }

    /// Every matrix block carried by the message.
    pub fn blocks(&self) -> &[ModeBlock] {
        match self {
            Message::Factors { blocks }
            | Message::PublicUpload { blocks, .. }
            | Message::GlobalBcast { blocks, .. } => blocks,
            _ => &[],
        }
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn count(&mut self, n: usize) -> Result<()> {
        let n = u32::try_from(n).map_err(|_| Error::Format(format!("count {n} exceeds u32")))?;
        self.u32(n);
        Ok(())
    }
    fn blocks(&mut self, blocks: &[ModeBlock]) -> Result<()> {
        self.count(blocks.len())?;
        for b in blocks {
            self.count(b.mode)?;
            self.u8(2);
            self.count(b.columns.rows())?;
            self.count(b.columns.cols())?;
            for &v in b.columns.as_slice() {
                self.f64(v);
            }
        }
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Format(format!(
                "truncated payload: need {n} bytes, {} left",
                self.buf.len()
            )));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn blocks(&mut self) -> Result<Vec<ModeBlock>> {
        let n = self.u32()? as usize;
        // every block needs at least 13 header bytes
        if n > self.buf.len() / 13 {
            return Err(Error::Format(format!("block count {n} exceeds payload")));
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mode = self.u32()? as usize;
            let ndim = self.u8()?;
            if ndim != 2 {
                return Err(Error::Format(format!("blocks must be matrices, got {ndim} dims")));
            }
            let rows = self.u32()? as usize;
            let cols = self.u32()? as usize;
            let len = rows
                .checked_mul(cols)
                .filter(|&l| l <= self.buf.len() / 8)
                .ok_or_else(|| Error::Format(format!("{rows}x{cols} block exceeds payload")))?;
            let data = (0..len).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
            out.push(ModeBlock::new(mode, Matrix::from_vec(rows, cols, data)?));
        }
        Ok(out)
    }
    fn finish(self) -> Result<()> {
        if !self.buf.is_empty() {
            return Err(Error::Format(format!("{} trailing payload bytes", self.buf.len())));
        }
        Ok(())
    }
}

/// Encodes a complete frame, length prefix included.
pub fn encode_message(msg: &Message) -> Result<Vec<u8>> {
    let mut w = Writer(Vec::with_capacity(64));
    match msg {
        Message::Hello { client } => w.u32(*client),
        Message::Factors { blocks } => w.blocks(blocks)?,
        Message::Locations { indices } => {
            w.count(indices.len())?;
            indices.iter().for_each(|&i| w.u32(i));
        }
        Message::PublicUpload { round, blocks } | Message::GlobalBcast { round, blocks } => {
            w.u64(*round);
            w.blocks(blocks)?;
        }
        Message::RoundStatus { round, rel_err } => {
            w.u64(*round);
            w.f64(*rel_err);
        }
        Message::Shutdown { reason } => w.u8(*reason as u8),
    }
    let payload = w.0;
    if payload.len() > MAX_PAYLOAD {
        return Err(Error::Format(format!("payload of {} bytes is too large", payload.len())));
    }
    let mut frame = Vec::with_capacity(HEADER_LEN + payload.len());
    frame.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    frame.push(PROTOCOL_VERSION);
    frame.push(msg.kind() as u8);
    frame.extend_from_slice(&payload);
    Ok(frame)
}

fn check_header(frame: &[u8]) -> Result<(MessageType, usize)> {
    if frame.len() < HEADER_LEN {
        return Err(Error::Format(format!("frame of {} bytes has no header", frame.len())));
    }
    let len = u32::from_le_bytes(frame[..4].try_into().unwrap()) as usize;
    if len > MAX_PAYLOAD {
        return Err(Error::Format(format!("declared payload length {len} exceeds limit")));
    }
    if frame[4] != PROTOCOL_VERSION {
        return Err(Error::Format(format!("protocol version {} unsupported", frame[4])));
    }
    let kind = MessageType::try_from(frame[5])?;
    Ok((kind, len))
}

/// Decodes one complete frame; the declared length must match exactly.
pub fn decode_message(frame: &[u8]) -> Result<Message> {
    let (kind, len) = check_header(frame)?;
    let payload = &frame[HEADER_LEN..];
    if payload.len() != len {
        return Err(Error::Format(format!(
            "declared payload length {len} but frame carries {}",
            payload.len()
        )));
    }
    let mut r = Reader { buf: payload };
    let msg = match kind {
        MessageType::Hello => Message::Hello { client: r.u32()? },
        MessageType::Factors => Message::Factors { blocks: r.blocks()? },
        MessageType::Locations => {
            let n = r.u32()? as usize;
            if n > r.buf.len() / 4 {
                return Err(Error::Format(format!("location count {n} exceeds payload")));
            }
            Message::Locations {
                indices: (0..n).map(|_| r.u32()).collect::<Result<_>>()?,
            }
        }
        MessageType::PublicUpload => Message::PublicUpload {
            round: r.u64()?,
            blocks: r.blocks()?,
        },
        MessageType::GlobalBcast => Message::GlobalBcast {
            round: r.u64()?,
            blocks: r.blocks()?,
        },
        MessageType::RoundStatus => Message::RoundStatus {
            round: r.u64()?,
            rel_err: r.f64()?,
        },
        MessageType::Shutdown => Message::Shutdown {
            reason: ShutdownReason::try_from(r.u8()?)?,
        },
    };
    r.finish()?;
    Ok(msg)
}

/// Reads one frame from a stream, validating the header before allocating the payload.
pub fn read_frame(reader: &mut impl Read) -> Result<Vec<u8>> {
    let mut header = [0u8; HEADER_LEN];
    reader.read_exact(&mut header).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::Disconnected("stream closed".into()),
        _ => Error::Io(e),
    })?;
    let (_, len) = check_header(&header)?;
    let mut frame = Vec::with_capacity(HEADER_LEN + len);
    frame.extend_from_slice(&header);
    frame.resize(HEADER_LEN + len, 0);
    reader.read_exact(&mut frame[HEADER_LEN..]).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::Disconnected("stream closed mid-frame".into()),
        _ => Error::Io(e),
    })?;
    Ok(frame)
}

pub fn write_frame(writer: &mut impl Write, frame: &[u8]) -> Result<()> {
    writer.write_all(frame)?;
    writer.flush()?;
    Ok(())
}
