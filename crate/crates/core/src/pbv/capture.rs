//! Classic libpcap capture files: streaming reader and a minimal writer.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const LINKTYPE_ETHERNET: u32 = 1;
pub const LINKTYPE_RAW: u32 = 101;

const MAGIC_MICROS: u32 = 0xA1B2_C3D4;
const MAGIC_NANOS: u32 = 0xA1B2_3C4D;
const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timestamp {
    pub secs: u32,
    pub nanos: u32,
}

/// One captured frame as it appears in the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPacket {
    pub link_type: u32,
    pub timestamp: Timestamp,
    /// Length of the frame on the wire; `bytes` may be shorter.
    pub orig_len: u32,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Copy)]
enum Endian {
    Little,
    Big,
}

impl Endian {
    fn u32(self, b: &[u8]) -> u32 {
        let a = [b[0], b[1], b[2], b[3]];
        match self {
            Endian::Little => u32::from_le_bytes(a),
            Endian::Big => u32::from_be_bytes(a),
        }
    }
}

/// Header fields shared by every record in a capture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaptureHeader {
    pub link_type: u32,
    pub snap_len: u32,
    pub nanosecond: bool,
}

pub struct CaptureReader<R> {
    inner: R,
    header: CaptureHeader,
    endian: Endian,
    context: String,
    index: u64,
    done: bool,
}

impl CaptureReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::new(BufReader::with_capacity(1 << 16, file), path.display().to_string())
    }
}

impl<R: Read> CaptureReader<R> {
    /// Parses the global header; `context` names the source in error messages.
    pub fn new(mut inner: R, context: impl Into<String>) -> Result<Self> {
        let context = context.into();
        let mut hdr = [0u8; GLOBAL_HEADER_LEN];
        if !read_exact_or(&mut inner, &mut hdr, &context)? {
            return Err(Error::format(&context, "file shorter than the pcap global header"));
        }
        let le = u32::from_le_bytes([hdr[0], hdr[1], hdr[2], hdr[3]]);
        let (endian, nanosecond) = match le {
            MAGIC_MICROS => (Endian::Little, false),
            MAGIC_NANOS => (Endian::Little, true),
            m if m.swap_bytes() == MAGIC_MICROS => (Endian::Big, false),
            m if m.swap_bytes() == MAGIC_NANOS => (Endian::Big, true),
            m => {
                return Err(Error::format(
                    &context,
                    format!("bad pcap magic 0x{:08X}", m.swap_bytes()),
                ))
            }
        };
        let header = CaptureHeader {
            snap_len: endian.u32(&hdr[16..20]),
            link_type: endian.u32(&hdr[20..24]),
            nanosecond,
        };
        Ok(Self {
            inner,
            header,
            endian,
            context,
            index: 0,
            done: false,
        })
    }

    pub fn header(&self) -> CaptureHeader {
        self.header
    }

    fn read_record(&mut self) -> Result<Option<RawPacket>> {
        let mut rec = [0u8; RECORD_HEADER_LEN];
        let mut got = 0;
        while got < rec.len() {
            match self.inner.read(&mut rec[got..]) {
                Ok(0) => break,
                Ok(n) => got += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(Error::io(&self.context, e)),
            }
        }
        if got == 0 {
            return Ok(None);
        }
        if got < rec.len() {
            return Err(self.truncated("record header"));
        }
        let secs = self.endian.u32(&rec[0..4]);
        let frac = self.endian.u32(&rec[4..8]);
        let incl_len = self.endian.u32(&rec[8..12]);
        let orig_len = self.endian.u32(&rec[12..16]);
        if self.header.snap_len != 0 && incl_len > self.header.snap_len {
            return Err(Error::format(
                &self.context,
                format!(
                    "record {}: captured length {} exceeds snap length {}",
                    self.index, incl_len, self.header.snap_len
                ),
            ));
        }
        let mut bytes = vec![0u8; incl_len as usize];
        if !read_exact_or(&mut self.inner, &mut bytes, &self.context)? {
            return Err(self.truncated("record body"));
        }
        let nanos = if self.header.nanosecond {
            frac
        } else {
            frac.saturating_mul(1000)
        };
        self.index += 1;
        Ok(Some(RawPacket {
            link_type: self.header.link_type,
            timestamp: Timestamp { secs, nanos },
            orig_len,
            bytes,
        }))
    }

    fn truncated(&self, what: &str) -> Error {
        Error::format(
            &self.context,
            format!("record {}: truncated {}", self.index, what),
        )
    }
}

impl<R: Read> Iterator for CaptureReader<R> {
    type Item = Result<RawPacket>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_record() {
            Ok(Some(p)) => Some(Ok(p)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Returns `Ok(false)` on a clean or partial EOF instead of an error.
fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], context: &str) -> Result<bool> {
    match r.read_exact(buf) {
        Ok(()) => Ok(true),
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => Ok(false),
        Err(e) => Err(Error::io(context, e)),
    }
}

/// Opens a capture file and streams its records in file order.
pub fn read_capture(path: impl AsRef<Path>) -> Result<CaptureReader<BufReader<File>>> {
    CaptureReader::open(path)
}

/// Writes little-endian, microsecond-resolution classic pcap.
pub struct CaptureWriter<W: Write> {
    inner: W,
    path: PathBuf,
}

impl CaptureWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>, link_type: u32) -> Result<Self> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Self::new(BufWriter::new(file), path, link_type)
    }
}

impl<W: Write> CaptureWriter<W> {
    pub fn new(mut inner: W, path: impl Into<PathBuf>, link_type: u32) -> Result<Self> {
        let path = path.into();
        let mut hdr = Vec::with_capacity(GLOBAL_HEADER_LEN);
        hdr.extend_from_slice(&MAGIC_MICROS.to_le_bytes());
        hdr.extend_from_slice(&2u16.to_le_bytes());
        hdr.extend_from_slice(&4u16.to_le_bytes());
        hdr.extend_from_slice(&0i32.to_le_bytes());
        hdr.extend_from_slice(&0u32.to_le_bytes());
        hdr.extend_from_slice(&65535u32.to_le_bytes());
        hdr.extend_from_slice(&link_type.to_le_bytes());
        inner.write_all(&hdr).map_err(|e| Error::io(&path, e))?;
        Ok(Self { inner, path })
    }

    pub fn write_packet(&mut self, timestamp: Timestamp, bytes: &[u8]) -> Result<()> {
        let len = u32::try_from(bytes.len())
            .ok()
            .filter(|&l| l <= 65535)
            .ok_or_else(|| Error::Contract(format!("packet of {} bytes exceeds snap length", bytes.len())))?;
        let mut rec = [0u8; RECORD_HEADER_LEN];
        rec[0..4].copy_from_slice(&timestamp.secs.to_le_bytes());
        rec[4..8].copy_from_slice(&(timestamp.nanos / 1000).to_le_bytes());
        rec[8..12].copy_from_slice(&len.to_le_bytes());
        rec[12..16].copy_from_slice(&len.to_le_bytes());
        self.inner
            .write_all(&rec)
            .and_then(|_| self.inner.write_all(bytes))
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(self.inner)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn write_in_memory(link: u32, packets: &[&[u8]]) -> Vec<u8> {
        let mut w = CaptureWriter::new(Vec::new(), "mem", link).unwrap();
        for (i, p) in packets.iter().enumerate() {
            w.write_packet(
                Timestamp {
                    secs: 1_600_000_000 + i as u32,
                    nanos: 250_000,
                },
                p,
            )
            .unwrap();
        }
        w.finish().unwrap()
    }

    #[test]
    fn header_only_capture_is_empty() {
        let buf = write_in_memory(LINKTYPE_ETHERNET, &[]);
        let r = CaptureReader::new(Cursor::new(buf), "mem").unwrap();
        assert_eq!(r.count(), 0);
    }

    #[test]
    fn three_records_round_trip_in_order() {
        let pkts: [&[u8]; 3] = [&[1, 2, 3], &[], &[9; 60]];
        let buf = write_in_memory(LINKTYPE_RAW, &pkts);
        let got: Vec<_> = CaptureReader::new(Cursor::new(buf), "mem")
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(got.len(), 3);
        for (i, (g, want)) in got.iter().zip(pkts).enumerate() {
            assert_eq!(g.bytes, want);
            assert_eq!(g.link_type, LINKTYPE_RAW);
            assert_eq!(g.timestamp.secs, 1_600_000_000 + i as u32);
            assert_eq!(g.timestamp.nanos, 250_000);
        }
    }

    #[test]
    fn bad_magic_is_a_format_error() {
        let mut buf = write_in_memory(LINKTYPE_ETHERNET, &[]);
        buf[0..4].copy_from_slice(&0xDEAD_BEEFu32.to_be_bytes());
        let err = CaptureReader::new(Cursor::new(buf), "mem").err().unwrap();
        assert!(matches!(err, Error::Format { .. }), "{err}");
        assert!(err.to_string().contains("0xDEADBEEF"));
    }

    #[test]
    fn big_endian_header_is_accepted() {
        let mut buf = Vec::new();
        buf.extend_from_slice(&MAGIC_MICROS.to_be_bytes());
        buf.extend_from_slice(&2u16.to_be_bytes());
        buf.extend_from_slice(&4u16.to_be_bytes());
        buf.extend_from_slice(&[0; 8]);
        buf.extend_from_slice(&65535u32.to_be_bytes());
        buf.extend_from_slice(&LINKTYPE_RAW.to_be_bytes());
        buf.extend_from_slice(&7u32.to_be_bytes());
        buf.extend_from_slice(&3u32.to_be_bytes());
        buf.extend_from_slice(&2u32.to_be_bytes());
        buf.extend_from_slice(&2u32.to_be_bytes());
        buf.extend_from_slice(&[0xAB, 0xCD]);
        let got: Vec<_> = CaptureReader::new(Cursor::new(buf), "mem")
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(got[0].bytes, vec![0xAB, 0xCD]);
        assert_eq!(got[0].timestamp, Timestamp { secs: 7, nanos: 3000 });
    }

    #[test]
    fn truncated_record_names_its_index() {
        let mut buf = write_in_memory(LINKTYPE_ETHERNET, &[&[0; 20], &[0; 20]]);
        buf.truncate(buf.len() - 5);
        let results: Vec<_> = CaptureReader::new(Cursor::new(buf), "mem").unwrap().collect();
        assert_eq!(results.len(), 2);
        assert!(results[0].is_ok());
        let err = results[1].as_ref().unwrap_err().to_string();
        assert!(err.contains("record 1"), "{err}");
    }
}
