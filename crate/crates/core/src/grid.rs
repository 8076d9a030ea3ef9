//! Frequency-domain resource grids and their binary serialization.
//!
//! Grids hold one complex value per resource element, indexed by
//! `(frame, subframe 0..9, symbol 0..13, subcarrier)`. Only the normal
//! cyclic prefix layout (14 symbols per subframe) is modelled. The on-disk
//! format is `CSGRID01`: an 8-byte magic, four little-endian `u32` dimension
//! fields and interleaved IEEE-754 32-bit I/Q samples in
//! `(frame, subframe, symbol, subcarrier)` row-major order.

use num_complex::Complex64;
use std::io::{Read, Write};

pub const SUBFRAMES_PER_FRAME: usize = 10;
pub const SYMBOLS_PER_SUBFRAME: usize = 14;
pub const SC_PER_RB: usize = 12;

const MAGIC: &[u8; 8] = b"CSGRID01";

#[derive(Debug, thiserror::Error)]
pub enum GridError {
    #[error("subcarrier count {0} is not a positive multiple of 12")]
    BadSubcarrierCount(usize),
    #[error("grid dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("bad magic, not a CSGRID01 file")]
    BadMagic,
    #[error("unsupported grid geometry: {0} subframes x {1} symbols")]
    BadGeometry(u32, u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Role of one resource element inside a cell's transmit grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReRole {
    Empty,
    /// Cell-specific reference signal for the given antenna port.
    Crs(u8),
    Pss,
    Sss,
    Pbch,
    /// PDCCH/PDSCH resource, occupied at random per frame.
    Payload,
}

/// One radio frame of complex samples (10 subframes x 14 symbols x n_sc).
#[derive(Debug, Clone, PartialEq)]
pub struct FrameGrid {
    n_sc: usize,
    data: Vec<Complex64>,
}

impl FrameGrid {
    pub fn zeroed(n_sc: usize) -> Result<Self, GridError> {
        if n_sc == 0 || n_sc % SC_PER_RB != 0 {
            return Err(GridError::BadSubcarrierCount(n_sc));
        }
        Ok(Self {
            n_sc,
            data: vec![Complex64::new(0.0, 0.0); n_sc * SUBFRAMES_PER_FRAME * SYMBOLS_PER_SUBFRAME],
        })
    }

    #[inline]
    pub fn n_sc(&self) -> usize {
        self.n_sc
    }

    #[inline]
    fn idx(&self, subframe: usize, symbol: usize, k: usize) -> usize {
        debug_assert!(subframe < SUBFRAMES_PER_FRAME && symbol < SYMBOLS_PER_SUBFRAME && k < self.n_sc);
        (subframe * SYMBOLS_PER_SUBFRAME + symbol) * self.n_sc + k
    }

    #[inline]
    pub fn get(&self, subframe: usize, symbol: usize, k: usize) -> Complex64 {
        self.data[self.idx(subframe, symbol, k)]
    }

    #[inline]
    pub fn set(&mut self, subframe: usize, symbol: usize, k: usize, v: Complex64) {
        let i = self.idx(subframe, symbol, k);
        self.data[i] = v;
    }

    #[inline]
    pub fn add(&mut self, subframe: usize, symbol: usize, k: usize, v: Complex64) {
        let i = self.idx(subframe, symbol, k);
        self.data[i] += v;
    }

    /// One OFDM symbol as a contiguous slice of subcarriers.
    pub fn symbol(&self, subframe: usize, symbol: usize) -> &[Complex64] {
        let i = self.idx(subframe, symbol, 0);
        &self.data[i..i + self.n_sc]
    }

    pub fn symbol_mut(&mut self, subframe: usize, symbol: usize) -> &mut [Complex64] {
        let i = self.idx(subframe, symbol, 0);
        &mut self.data[i..i + self.n_sc]
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.data
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn scale(&mut self, amplitude: f64) {
        for v in &mut self.data {
            *v *= amplitude;
        }
    }

    /// Index of the first subcarrier of the central 72-subcarrier window.
    pub fn center_offset(&self) -> usize {
        debug_assert!(self.n_sc >= 72);
        self.n_sc / 2 - 36
    }
}

/// A multi-frame capture for one transmit or receive stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Capture {
    pub frames: Vec<FrameGrid>,
}

impl Capture {
    pub fn new(frames: Vec<FrameGrid>) -> Result<Self, GridError> {
        if let Some(first) = frames.first() {
            let n_sc = first.n_sc;
            if frames.iter().any(|f| f.n_sc != n_sc) {
                return Err(GridError::DimensionMismatch(
                    "frames with differing subcarrier counts".into(),
                ));
            }
        }
        Ok(Self { frames })
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn n_sc(&self) -> usize {
        self.frames.first().map_or(0, |f| f.n_sc)
    }

    /// Serialize in CSGRID01 layout.
    pub fn write_csgrid<W: Write>(&self, w: &mut W) -> Result<(), GridError> {
        w.write_all(MAGIC)?;
        for dim in [
            self.n_frames() as u32,
            SUBFRAMES_PER_FRAME as u32,
            SYMBOLS_PER_SUBFRAME as u32,
            self.n_sc() as u32,
        ] {
            w.write_all(&dim.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(8 * 1024);
        for frame in &self.frames {
            buf.clear();
            for v in &frame.data {
                buf.extend_from_slice(&(v.re as f32).to_le_bytes());
                buf.extend_from_slice(&(v.im as f32).to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_csgrid<R: Read>(r: &mut R) -> Result<Self, GridError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(GridError::BadMagic);
        }
        let mut dim = [0u8; 4];
        let mut read_u32 = |r: &mut R| -> Result<u32, GridError> {
            r.read_exact(&mut dim)?;
            Ok(u32::from_le_bytes(dim))
        };
        let n_frames = read_u32(r)? as usize;
        let n_subframes = read_u32(r)?;
        let n_symbols = read_u32(r)?;
        let n_sc = read_u32(r)? as usize;
        if n_subframes as usize != SUBFRAMES_PER_FRAME || n_symbols as usize != SYMBOLS_PER_SUBFRAME {
            return Err(GridError::BadGeometry(n_subframes, n_symbols));
        }
        if n_sc == 0 || n_sc % SC_PER_RB != 0 {
            return Err(GridError::BadSubcarrierCount(n_sc));
        }
        let samples_per_frame = n_sc * SUBFRAMES_PER_FRAME * SYMBOLS_PER_SUBFRAME;
        let mut frames = Vec::with_capacity(n_frames);
        let mut raw = vec![0u8; samples_per_frame * 8];
        for _ in 0..n_frames {
            r.read_exact(&mut raw)?;
            let mut frame = FrameGrid::zeroed(n_sc)?;
            for (i, chunk) in raw.chunks_exact(8).enumerate() {
                let re = f32::from_le_bytes(chunk[0..4].try_into().unwrap());
                let im = f32::from_le_bytes(chunk[4..8].try_into().unwrap());
                frame.data[i] = Complex64::new(f64::from(re), f64::from(im));
            }
            frames.push(frame);
        }
        Capture::new(frames)
    }
}

/// Incremental CSGRID01 writer for captures too large to hold in memory.
pub struct CsgridWriter<W: Write> {
    sink: W,
    n_sc: usize,
    declared_frames: usize,
    written: usize,
    buf: Vec<u8>,
}

impl<W: Write> CsgridWriter<W> {
    pub fn new(mut sink: W, n_frames: usize, n_sc: usize) -> Result<Self, GridError> {
        if n_sc == 0 || n_sc % SC_PER_RB != 0 {
            return Err(GridError::BadSubcarrierCount(n_sc));
        }
        sink.write_all(MAGIC)?;
        for dim in [
            n_frames as u32,
            SUBFRAMES_PER_FRAME as u32,
            SYMBOLS_PER_SUBFRAME as u32,
            n_sc as u32,
        ] {
            sink.write_all(&dim.to_le_bytes())?;
        }
        Ok(Self {
            sink,
            n_sc,
            declared_frames: n_frames,
            written: 0,
            buf: Vec::new(),
        })
    }

    pub fn append(&mut self, frame: &FrameGrid) -> Result<(), GridError> {
        if frame.n_sc != self.n_sc {
            return Err(GridError::DimensionMismatch(format!(
                "frame width {} vs capture {}",
                frame.n_sc, self.n_sc
            )));
        }
        if self.written >= self.declared_frames {
            return Err(GridError::DimensionMismatch(
                "more frames than declared in the header".into(),
            ));
        }
        self.buf.clear();
        for v in &frame.data {
            self.buf.extend_from_slice(&(v.re as f32).to_le_bytes());
            self.buf.extend_from_slice(&(v.im as f32).to_le_bytes());
        }
        self.sink.write_all(&self.buf)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, GridError> {
        if self.written != self.declared_frames {
            return Err(GridError::DimensionMismatch(format!(
                "wrote {} of {} declared frames",
                self.written, self.declared_frames
            )));
        }
        self.sink.flush()?;
        Ok(self.sink)
    }
}

/// Incremental CSGRID01 reader.
pub struct CsgridReader<R: Read> {
    source: R,
    n_sc: usize,
    n_frames: usize,
    read: usize,
    raw: Vec<u8>,
}

impl<R: Read> CsgridReader<R> {
    pub fn new(mut source: R) -> Result<Self, GridError> {
        let mut magic = [0u8; 8];
        source.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(GridError::BadMagic);
        }
        let mut dim = [0u8; 4];
        let mut read_u32 = |r: &mut R| -> Result<u32, GridError> {
            r.read_exact(&mut dim)?;
            Ok(u32::from_le_bytes(dim))
        };
        let n_frames = read_u32(&mut source)? as usize;
        let n_subframes = read_u32(&mut source)?;
        let n_symbols = read_u32(&mut source)?;
        let n_sc = read_u32(&mut source)? as usize;
        if n_subframes as usize != SUBFRAMES_PER_FRAME || n_symbols as usize != SYMBOLS_PER_SUBFRAME {
            return Err(GridError::BadGeometry(n_subframes, n_symbols));
        }
        if n_sc == 0 || n_sc % SC_PER_RB != 0 {
            return Err(GridError::BadSubcarrierCount(n_sc));
        }
        let samples = n_sc * SUBFRAMES_PER_FRAME * SYMBOLS_PER_SUBFRAME;
        Ok(Self {
            source,
            n_sc,
            n_frames,
            read: 0,
            raw: vec![0u8; samples * 8],
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_sc(&self) -> usize {
        self.n_sc
    }

    pub fn next_frame(&mut self) -> Result<Option<FrameGrid>, GridError> {
        if self.read >= self.n_frames {
            return Ok(None);
        }
        self.source.read_exact(&mut self.raw)?;
        let mut frame = FrameGrid::zeroed(self.n_sc)?;
        for (i, chunk) in self.raw.chunks_exact(8).enumerate() {
            let re = f32::from_le_bytes(chunk[0..4].try_into().unwrap());
            let im = f32::from_le_bytes(chunk[4..8].try_into().unwrap());
            frame.data[i] = Complex64::new(f64::from(re), f64::from(im));
        }
        self.read += 1;
        Ok(Some(frame))
    }
}

/// Per-cell static layout: the role of every RE of one frame.
///
/// The layout is identical in every frame; only PBCH contents and payload
/// occupancy vary over time.
#[derive(Debug, Clone)]
pub struct RoleMap {
    n_sc: usize,
    roles: Vec<ReRole>,
}

impl RoleMap {
    pub fn new(n_sc: usize) -> Self {
        Self {
            n_sc,
            roles: vec![ReRole::Empty; n_sc * SUBFRAMES_PER_FRAME * SYMBOLS_PER_SUBFRAME],
        }
    }

    #[inline]
    fn idx(&self, subframe: usize, symbol: usize, k: usize) -> usize {
        (subframe * SYMBOLS_PER_SUBFRAME + symbol) * self.n_sc + k
    }

    #[inline]
    pub fn get(&self, subframe: usize, symbol: usize, k: usize) -> ReRole {
        self.roles[self.idx(subframe, symbol, k)]
    }

    #[inline]
    pub fn set(&mut self, subframe: usize, symbol: usize, k: usize, role: ReRole) {
        let i = self.idx(subframe, symbol, k);
        self.roles[i] = role;
    }

    pub fn n_sc(&self) -> usize {
        self.n_sc
    }

    /// All `(subframe, symbol, subcarrier)` positions carrying `role`.
    pub fn entries(&self, role: ReRole) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for sf in 0..SUBFRAMES_PER_FRAME {
            for sym in 0..SYMBOLS_PER_SUBFRAME {
                for k in 0..self.n_sc {
                    if self.roles[self.idx(sf, sym, k)] == role {
                        out.push((sf, sym, k));
                    }
                }
            }
        }
        out
    }

    pub fn count(&self, role: ReRole) -> usize {
        self.roles.iter().filter(|r| **r == role).count()
    }
}
