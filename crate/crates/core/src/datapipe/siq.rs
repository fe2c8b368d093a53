//! SIQ1 record files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! file   := "SIQ1" version:u32 record*
//! record := transmitter_id:u32 message_id:u64 timestamp_s:f64 snr_db:f32
//!           noise_score:f32 n_samples:u32 (i:f32 q:f32){n_samples}
//! ```
//!
//! A NaN noise score means "unset".

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::sigcore::Waveform;
use crate::synth::MessageRecord;
use crate::{Error, Result};

pub const SIQ_MAGIC: [u8; 4] = *b"SIQ1";
pub const SIQ_VERSION: u32 = 1;

const FILE_HEADER_LEN: u64 = 8;
const RECORD_HEADER_LEN: usize = 32;
const MAX_SAMPLES: u32 = 1 << 26;

/// Streaming writer. The file header is written on construction.
pub struct RecordWriter<W: Write> {
    inner: W,
    written: usize,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(mut inner: W) -> io::Result<Self> {
        inner.write_all(&SIQ_MAGIC)?;
        inner.write_all(&SIQ_VERSION.to_le_bytes())?;
        Ok(RecordWriter { inner, written: 0 })
    }

    pub fn write(&mut self, r: &MessageRecord) -> io::Result<()> {
        let n = u32::try_from(r.waveform.len())
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "waveform too long"))?;
        let mut buf = Vec::with_capacity(RECORD_HEADER_LEN + 8 * n as usize);
        buf.extend_from_slice(&r.transmitter_id.to_le_bytes());
        buf.extend_from_slice(&r.message_id.to_le_bytes());
        buf.extend_from_slice(&r.timestamp_s.to_le_bytes());
        buf.extend_from_slice(&r.snr_db.to_le_bytes());
        buf.extend_from_slice(&r.noise_score.unwrap_or(f32::NAN).to_le_bytes());
        buf.extend_from_slice(&n.to_le_bytes());
        for (i, q) in r.waveform.i().iter().zip(r.waveform.q()) {
            buf.extend_from_slice(&i.to_le_bytes());
            buf.extend_from_slice(&q.to_le_bytes());
        }
        self.inner.write_all(&buf)?;
        self.written += 1;
        Ok(())
    }

    pub fn written(&self) -> usize {
        self.written
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Streaming reader yielding one record at a time.
pub struct RecordReader<R: Read> {
    inner: R,
    path: PathBuf,
    offset: u64,
    failed: bool,
}

/// Reads until `buf` is full or EOF; returns the byte count.
fn fill<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(got)
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes(b.try_into().unwrap())
}

fn le_f32(b: &[u8]) -> f32 {
    f32::from_le_bytes(b.try_into().unwrap())
}

impl<R: Read> RecordReader<R> {
    /// Checks the magic and version. `path` is only used in error messages.
    pub fn new(mut inner: R, path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut head = [0u8; FILE_HEADER_LEN as usize];
        let got = fill(&mut inner, &mut head).map_err(|e| Error::io(&path, e))?;
        if got < head.len() || head[..4] != SIQ_MAGIC {
            return Err(Error::Format {
                path,
                reason: "missing SIQ1 magic".into(),
            });
        }
        let version = le_u32(&head[4..8]);
        if version > SIQ_VERSION {
            return Err(Error::UnsupportedVersion {
                path,
                found: version,
                supported: SIQ_VERSION,
            });
        }
        if version == 0 {
            return Err(Error::Format {
                path,
                reason: "version 0 is not a valid SIQ version".into(),
            });
        }
        Ok(RecordReader {
            inner,
            path,
            offset: FILE_HEADER_LEN,
            failed: false,
        })
    }

    fn corrupt(&mut self, offset: u64, reason: impl Into<String>) -> Error {
        self.failed = true;
        Error::Corrupt {
            path: self.path.clone(),
            offset,
            reason: reason.into(),
        }
    }

    fn read_one(&mut self) -> Option<Result<MessageRecord>> {
        let start = self.offset;
        let mut head = [0u8; RECORD_HEADER_LEN];
        let got = match fill(&mut self.inner, &mut head) {
            Ok(n) => n,
            Err(e) => {
                self.failed = true;
                return Some(Err(Error::io(&self.path, e)));
            }
        };
        if got == 0 {
            return None;
        }
        if got < RECORD_HEADER_LEN {
            return Some(Err(self.corrupt(start, format!("truncated record header ({got} of {RECORD_HEADER_LEN} bytes)"))));
        }
        let n = le_u32(&head[28..32]);
        if n == 0 || n > MAX_SAMPLES {
            return Some(Err(self.corrupt(start, format!("implausible sample count {n}"))));
        }
        let mut payload = vec![0u8; 8 * n as usize];
        let got = match fill(&mut self.inner, &mut payload) {
            Ok(k) => k,
            Err(e) => {
                self.failed = true;
                return Some(Err(Error::io(&self.path, e)));
            }
        };
        if got < payload.len() {
            return Some(Err(self.corrupt(
                start,
                format!("truncated sample payload ({got} of {} bytes)", payload.len()),
            )));
        }
        self.offset += (RECORD_HEADER_LEN + payload.len()) as u64;
        let (i, q): (Vec<f32>, Vec<f32>) = payload
            .chunks_exact(8)
            .map(|c| (le_f32(&c[..4]), le_f32(&c[4..])))
            .unzip();
        let noise = le_f32(&head[24..28]);
        Some(Ok(MessageRecord {
            transmitter_id: le_u32(&head[0..4]),
            message_id: u64::from_le_bytes(head[4..12].try_into().unwrap()),
            timestamp_s: f64::from_le_bytes(head[12..20].try_into().unwrap()),
            snr_db: le_f32(&head[20..24]),
            noise_score: (!noise.is_nan()).then_some(noise),
            waveform: Waveform::new(i, q).expect("lengths match and n >= 1"),
        }))
    }
}

impl<R: Read> Iterator for RecordReader<R> {
    type Item = Result<MessageRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        self.read_one()
    }
}

pub fn open_records(path: impl AsRef<Path>) -> Result<RecordReader<BufReader<File>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    RecordReader::new(BufReader::new(file), path)
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<MessageRecord>> {
    open_records(path)?.collect()
}

/// Writes all records to `path`, replacing it atomically: the data goes to a
/// temporary file in the same directory which is renamed on success.
pub fn write_records<'a, I>(records: I, path: impl AsRef<Path>) -> Result<usize>
where
    I: IntoIterator<Item = &'a MessageRecord>,
{
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    let mut writer = RecordWriter::new(BufWriter::new(tmp)).map_err(|e| Error::io(path, e))?;
    for r in records {
        writer.write(r).map_err(|e| Error::io(path, e))?;
    }
    let count = writer.written();
    let tmp = writer
        .finish()
        .map_err(|e| Error::io(path, e))?
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(count)
}
