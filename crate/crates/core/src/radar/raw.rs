//! Raw ADC capture files.
//!
//! Little-endian throughout. A 64-byte file header
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `LFRD`                            |
//! | 4      | 4    | format version (u32, currently 1)       |
//! | 8      | 32   | SHA-256 digest of the chirp config JSON |
//! | 40     | 4    | chirps per frame (u32)                  |
//! | 44     | 4    | Rx count (u32)                          |
//! | 48     | 4    | ADC samples per chirp (u32)             |
//! | 52     | 4    | frame count (u32)                       |
//! | 56     | 8    | reserved, zero                          |
//!
//! is followed by `frame count` frames, each a 40-byte frame header
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 8    | steering angle, degrees (f64) |
//! | 8      | 8    | leaf distance, m (f64)        |
//! | 16     | 8    | RWC label, % (f64)            |
//! | 24     | 8    | frame seed (u64)              |
//! | 32     | 4    | measurement index (u32)       |
//! | 36     | 4    | leaf id (u32)                 |
//!
//! and then the samples as interleaved I/Q `i16` pairs, the sample index
//! varying fastest, then Rx, then chirp.

use super::{dequantize, quantize, ChirpConfig, RadarFrame};
use num_complex::Complex64;
use std::io::{Read, Write};

pub const MAGIC: &[u8; 4] = b"LFRD";
pub const VERSION: u32 = 1;
pub const FILE_HEADER_LEN: usize = 64;
pub const FRAME_HEADER_LEN: usize = 40;

#[derive(Debug, thiserror::Error)]
pub enum RawFormatError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a raw capture (bad magic)")]
    BadMagic,
    #[error("unsupported capture version {0}")]
    UnsupportedVersion(u32),
    #[error("capture was recorded with a different chirp config")]
    ConfigDigestMismatch,
    #[error("file header truncated")]
    TruncatedHeader,
    #[error("frame {index} truncated")]
    TruncatedFrame { index: usize },
    #[error("too many frames for the header")]
    TooManyFrames,
}

/// Labels stored alongside each frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMeta {
    pub distance: f64,
    pub rwc: f64,
    pub measurement: u32,
    pub leaf_id: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawCapture {
    pub version: u32,
    pub config_digest: [u8; 32],
    pub frames: Vec<(FrameMeta, RadarFrame)>,
}

fn u32_of(n: usize) -> Result<u32, RawFormatError> {
    u32::try_from(n).map_err(|_| RawFormatError::TooManyFrames)
}

/// Streaming writer; the frame count is fixed up front by the header.
pub struct RawWriter<W: Write> {
    inner: W,
    cfg: ChirpConfig,
    remaining: usize,
    buf: Vec<u8>,
}

impl<W: Write> RawWriter<W> {
    pub fn new(mut inner: W, cfg: &ChirpConfig, frame_count: usize) -> Result<Self, RawFormatError> {
        let mut header = Vec::with_capacity(FILE_HEADER_LEN);
        header.extend_from_slice(MAGIC);
        header.extend_from_slice(&VERSION.to_le_bytes());
        header.extend_from_slice(&cfg.digest());
        for v in [cfg.n_chirps, cfg.rx_count, cfg.adc_samples, frame_count] {
            header.extend_from_slice(&u32_of(v)?.to_le_bytes());
        }
        header.resize(FILE_HEADER_LEN, 0);
        inner.write_all(&header)?;
        Ok(Self {
            inner,
            cfg: cfg.clone(),
            remaining: frame_count,
            buf: Vec::new(),
        })
    }

    pub fn write_frame(&mut self, meta: &FrameMeta, frame: &RadarFrame) -> Result<(), RawFormatError> {
        if self.remaining == 0 {
            return Err(RawFormatError::TooManyFrames);
        }
        if !frame.matches(&self.cfg) {
            return Err(RawFormatError::ConfigDigestMismatch);
        }
        let buf = &mut self.buf;
        buf.clear();
        buf.extend_from_slice(&frame.steering_angle.to_le_bytes());
        buf.extend_from_slice(&meta.distance.to_le_bytes());
        buf.extend_from_slice(&meta.rwc.to_le_bytes());
        buf.extend_from_slice(&frame.seed.to_le_bytes());
        buf.extend_from_slice(&meta.measurement.to_le_bytes());
        buf.extend_from_slice(&meta.leaf_id.to_le_bytes());
        for v in &frame.cube {
            buf.extend_from_slice(&quantize(v.re).to_le_bytes());
            buf.extend_from_slice(&quantize(v.im).to_le_bytes());
        }
        self.inner.write_all(buf)?;
        self.remaining -= 1;
        Ok(())
    }

    /// Flushes and returns the sink; fails if frames are missing.
    pub fn finish(mut self) -> Result<W, RawFormatError> {
        if self.remaining != 0 {
            return Err(RawFormatError::TruncatedFrame {
                index: self.remaining,
            });
        }
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn write_capture<W: Write>(
    w: W,
    cfg: &ChirpConfig,
    frames: &[(FrameMeta, RadarFrame)],
) -> Result<(), RawFormatError> {
    let mut writer = RawWriter::new(w, cfg, frames.len())?;
    for (meta, frame) in frames {
        writer.write_frame(meta, frame)?;
    }
    writer.finish()?;
    Ok(())
}

fn arr<const N: usize>(s: &[u8]) -> [u8; N] {
    s.try_into().expect("length checked")
}

/// Fills `buf` completely, or reports how many bytes were available.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<usize, std::io::Error> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Streaming reader, checking the capture was recorded with `cfg`.
pub struct RawReader<R: Read> {
    inner: R,
    pub version: u32,
    pub config_digest: [u8; 32],
    pub frame_count: usize,
    next: usize,
    n_chirps: usize,
    rx_count: usize,
    adc_samples: usize,
    buf: Vec<u8>,
}

impl<R: Read> RawReader<R> {
    pub fn new(mut inner: R, cfg: &ChirpConfig) -> Result<Self, RawFormatError> {
        let mut header = [0u8; FILE_HEADER_LEN];
        let got = read_full(&mut inner, &mut header)?;
        if got < 4 || &header[..4] != MAGIC {
            return Err(RawFormatError::BadMagic);
        }
        if got < FILE_HEADER_LEN {
            return Err(RawFormatError::TruncatedHeader);
        }
        let version = u32::from_le_bytes(arr(&header[4..8]));
        if version != VERSION {
            return Err(RawFormatError::UnsupportedVersion(version));
        }
        let digest: [u8; 32] = arr(&header[8..40]);
        let field = |i: usize| u32::from_le_bytes(arr(&header[40 + 4 * i..44 + 4 * i])) as usize;
        let (n_chirps, rx_count, adc_samples, frame_count) = (field(0), field(1), field(2), field(3));
        if digest != cfg.digest()
            || n_chirps != cfg.n_chirps
            || rx_count != cfg.rx_count
            || adc_samples != cfg.adc_samples
        {
            return Err(RawFormatError::ConfigDigestMismatch);
        }
        Ok(Self {
            inner,
            version,
            config_digest: digest,
            frame_count,
            next: 0,
            n_chirps,
            rx_count,
            adc_samples,
            buf: vec![0u8; FRAME_HEADER_LEN + 4 * n_chirps * rx_count * adc_samples],
        })
    }

    /// The next frame, or `None` after the last one.
    pub fn next_frame(&mut self) -> Result<Option<(FrameMeta, RadarFrame)>, RawFormatError> {
        if self.next == self.frame_count {
            return Ok(None);
        }
        let index = self.next;
        if read_full(&mut self.inner, &mut self.buf)? < self.buf.len() {
            return Err(RawFormatError::TruncatedFrame { index });
        }
        self.next += 1;
        let body = &self.buf;
        let f64_at = |o: usize| f64::from_le_bytes(arr(&body[o..o + 8]));
        let meta = FrameMeta {
            distance: f64_at(8),
            rwc: f64_at(16),
            measurement: u32::from_le_bytes(arr(&body[32..36])),
            leaf_id: u32::from_le_bytes(arr(&body[36..40])),
        };
        let cube = body[FRAME_HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| {
                let re = i16::from_le_bytes([c[0], c[1]]);
                let im = i16::from_le_bytes([c[2], c[3]]);
                Complex64::new(dequantize(re), dequantize(im))
            })
            .collect();
        let frame = RadarFrame {
            n_chirps: self.n_chirps,
            rx_count: self.rx_count,
            adc_samples: self.adc_samples,
            cube,
            steering_angle: f64_at(0),
            seed: u64::from_le_bytes(arr(&body[24..32])),
        };
        Ok(Some((meta, frame)))
    }
}

/// Reads a whole capture into memory.
pub fn read_capture<R: Read>(r: R, cfg: &ChirpConfig) -> Result<RawCapture, RawFormatError> {
    let mut reader = RawReader::new(r, cfg)?;
    let mut frames = Vec::with_capacity(reader.frame_count.min(1 << 12));
    while let Some(f) = reader.next_frame()? {
        frames.push(f);
    }
    Ok(RawCapture {
        version: reader.version,
        config_digest: reader.config_digest,
        frames,
    })
}
