//! FOODRAW1 frame container.
//!
//! ```text
//! offset  size  field
//! 0       8     magic "FOODRAW1"
//! 8       4     u32 version (1)
//! 12      4     u32 frame_count
//! 16      1     u8 n_rx
//! 17      1     u8 reserved (0)
//! 18      2     u16 n_chirps
//! 20      2     u16 n_samples
//! 22      ...   frame_count records of
//!               u8 label (0..=2 PER1..PER3, 3 OOD, 255 unlabeled)
//!               n_rx * n_chirps * n_samples u16 codes
//! ```
//!
//! All integers are little-endian. Codes must fit in 12 bits.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{CubeShape, Dataset, FrameCube, Label, ADC_MAX};

pub const MAGIC: &[u8; 8] = b"FOODRAW1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 22;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("i/o error")]
    Io(#[from] io::Error),
    #[error("not a FOODRAW1 file (magic {0:?})")]
    BadMagic(Vec<u8>),
    #[error("unsupported FOODRAW1 version {0}")]
    Version(u32),
    #[error("truncated file: needed {needed} more bytes at offset {offset} ({context})")]
    Truncated {
        offset: u64,
        needed: u64,
        context: String,
    },
    #[error("frame {frame}: code {value} at index {index} exceeds 12 bits")]
    CodeOutOfRange {
        frame: u32,
        index: usize,
        value: u16,
    },
    #[error("frame {frame}: unknown label byte {value}")]
    BadLabel { frame: u32, value: u8 },
    #[error("bad header: {0}")]
    Header(String),
    #[error("trailing bytes after frame {0}")]
    Trailing(u32),
}

/// Reads exactly `buf.len()` bytes, reporting how far the file got.
fn read_full<R: Read>(
    r: &mut R,
    buf: &mut [u8],
    offset: &mut u64,
    context: impl FnOnce() -> String,
) -> Result<(), FormatError> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(FormatError::Truncated {
                    offset: *offset + filled as u64,
                    needed: (buf.len() - filled) as u64,
                    context: context(),
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    *offset += buf.len() as u64;
    Ok(())
}

/// Streaming reader yielding one frame at a time.
pub struct FrameReader<R> {
    inner: R,
    shape: CubeShape,
    frame_count: u32,
    next: u32,
    offset: u64,
    buf: Vec<u8>,
}

impl FrameReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, FormatError> {
        Self::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read> FrameReader<R> {
    pub fn new(mut inner: R) -> Result<Self, FormatError> {
        let mut header = [0u8; HEADER_LEN as usize];
        let mut offset = 0;
        read_full(&mut inner, &mut header, &mut offset, || "header".into())?;
        if &header[..8] != MAGIC {
            return Err(FormatError::BadMagic(header[..8].to_vec()));
        }
        let version = u32::from_le_bytes(header[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(FormatError::Version(version));
        }
        let frame_count = u32::from_le_bytes(header[12..16].try_into().unwrap());
        let shape = CubeShape {
            n_rx: header[16] as usize,
            n_chirps: u16::from_le_bytes(header[18..20].try_into().unwrap()) as usize,
            n_samples: u16::from_le_bytes(header[20..22].try_into().unwrap()) as usize,
        };
        if shape.is_empty() {
            return Err(FormatError::Header(format!("empty cube shape {shape:?}")));
        }
        Ok(Self {
            inner,
            shape,
            frame_count,
            next: 0,
            offset,
            buf: vec![0; 1 + 2 * shape.len()],
        })
    }

    pub fn shape(&self) -> CubeShape {
        self.shape
    }

    pub fn frame_count(&self) -> u32 {
        self.frame_count
    }

    fn read_frame(&mut self) -> Result<FrameCube, FormatError> {
        let index = self.next;
        let total = self.frame_count;
        read_full(&mut self.inner, &mut self.buf, &mut self.offset, || {
            format!("frame {} of {total}", index + 1)
        })?;
        self.next += 1;
        let label = Label::from_code(self.buf[0]).ok_or(FormatError::BadLabel {
            frame: index,
            value: self.buf[0],
        })?;
        let mut codes = Vec::with_capacity(self.shape.len());
        for (i, pair) in self.buf[1..].chunks_exact(2).enumerate() {
            let value = u16::from_le_bytes([pair[0], pair[1]]);
            if value > ADC_MAX {
                return Err(FormatError::CodeOutOfRange {
                    frame: index,
                    index: i,
                    value,
                });
            }
            codes.push(value);
        }
        Ok(FrameCube {
            shape: self.shape,
            codes,
            label,
        })
    }

    /// Fails if anything follows the advertised frames.
    pub fn finish(mut self) -> Result<(), FormatError> {
        let mut probe = [0u8; 1];
        loop {
            match self.inner.read(&mut probe) {
                Ok(0) => return Ok(()),
                Ok(_) => return Err(FormatError::Trailing(self.frame_count)),
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
}

impl<R: Read> Iterator for FrameReader<R> {
    type Item = Result<FrameCube, FormatError>;

    fn next(&mut self) -> Option<Self::Item> {
        (self.next < self.frame_count).then(|| self.read_frame())
    }
}

pub fn write_dataset<W: Write>(mut w: W, dataset: &Dataset) -> Result<(), FormatError> {
    let s = dataset.shape;
    let n_rx = u8::try_from(s.n_rx).map_err(|_| FormatError::Header("n_rx > 255".into()))?;
    let n_chirps =
        u16::try_from(s.n_chirps).map_err(|_| FormatError::Header("n_chirps > 65535".into()))?;
    let n_samples =
        u16::try_from(s.n_samples).map_err(|_| FormatError::Header("n_samples > 65535".into()))?;
    let count = u32::try_from(dataset.len())
        .map_err(|_| FormatError::Header("more than u32::MAX frames".into()))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&count.to_le_bytes())?;
    w.write_all(&[n_rx, 0])?;
    w.write_all(&n_chirps.to_le_bytes())?;
    w.write_all(&n_samples.to_le_bytes())?;
    let mut buf = Vec::with_capacity(1 + 2 * s.len());
    for (i, f) in dataset.frames.iter().enumerate() {
        if f.shape != s {
            return Err(FormatError::Header(format!(
                "frame {i} has shape {:?}, dataset {:?}",
                f.shape, s
            )));
        }
        buf.clear();
        buf.push(f.label.code());
        for (j, &c) in f.codes.iter().enumerate() {
            if c > ADC_MAX {
                return Err(FormatError::CodeOutOfRange {
                    frame: i as u32,
                    index: j,
                    value: c,
                });
            }
            buf.extend_from_slice(&c.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(r: R) -> Result<Dataset, FormatError> {
    let mut reader = FrameReader::new(r)?;
    let shape = reader.shape();
    let frames = reader.by_ref().collect::<Result<Vec<_>, _>>()?;
    reader.finish()?;
    Ok(Dataset { shape, frames })
}

pub fn save_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<(), FormatError> {
    write_dataset(BufWriter::new(File::create(path)?), dataset)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, FormatError> {
    read_dataset(BufReader::new(File::open(path)?))
}
