//! PBVD container: `"PBVD"`, version u16, class count u16, class names
//! (u16 length + UTF-8 each), sample count u64, then per sample a u16
//! label (`0xFFFF` = unlabeled) followed by the 1480 raw octets.
//! Little-endian throughout.

use super::{ClassSchema, TrafficDataset};
use crate::error::{Error, Result};
use crate::pbv::PBV_LEN;
use crate::wire::Cursor;

pub const MAGIC: &[u8; 4] = b"PBVD";
pub const VERSION: u16 = 1;
pub const UNLABELED: u16 = 0xFFFF;

pub(super) fn encode(ds: &TrafficDataset) -> Vec<u8> {
    let names = ds.schema().names();
    let mut out = Vec::with_capacity(16 + ds.len() * (PBV_LEN + 2));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(names.len() as u16).to_le_bytes());
    for n in names {
        out.extend_from_slice(&(n.len() as u16).to_le_bytes());
        out.extend_from_slice(n.as_bytes());
    }
    out.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    for i in 0..ds.len() {
        out.extend_from_slice(&ds.label(i).unwrap_or(UNLABELED).to_le_bytes());
        out.extend_from_slice(ds.octets(i));
    }
    out
}

pub(super) fn decode(buf: &[u8], context: &str) -> Result<TrafficDataset> {
    let mut c = Cursor::new(buf, context);
    if c.take(4, "magic")? != MAGIC {
        return Err(Error::format(context, "missing PBVD magic"));
    }
    let version = c.u16("version")?;
    if version != VERSION {
        return Err(Error::format(context, format!("unsupported version {version}, expected {VERSION}")));
    }
    let n_classes = c.u16("class count")? as usize;
    let mut names = Vec::with_capacity(n_classes);
    for i in 0..n_classes {
        let len = c.u16("class name length")? as usize;
        let raw = c.take(len, "class name")?;
        let name = std::str::from_utf8(raw)
            .map_err(|_| Error::format(context, format!("class name {i} is not UTF-8")))?;
        names.push(name.to_owned());
    }
    let schema = ClassSchema::new(names).map_err(|e| Error::format(context, e.to_string()))?;
    let count = c.u64("sample count")?;
    let body = (count as u128) * (PBV_LEN as u128 + 2);
    let remaining = (buf.len() - c.at) as u128;
    if body != remaining {
        return Err(Error::format(
            context,
            format!("header declares {count} samples ({body} bytes) but {remaining} bytes follow"),
        ));
    }
    let mut ds = TrafficDataset::with_capacity(schema, count as usize);
    for i in 0..count as usize {
        let label = c.u16("label")?;
        let octets: &[u8; PBV_LEN] = c.take(PBV_LEN, "sample")?.try_into().unwrap();
        let label = match label {
            UNLABELED => None,
            l if (l as usize) < n_classes => Some(l),
            l => {
                return Err(Error::format(
                    context,
                    format!("sample {i} has label {l} but only {n_classes} classes are declared"),
                ))
            }
        };
        ds.push(label, octets)?;
    }
    Ok(ds)
}
