//! Binary snapshot format.
//!
//! Layout, all little-endian: magic `PCLB`, format version `u16`, dimension
//! `u16`, then `lo_i, hi_i` as `i32` for each axis, `p` as `f64`, `seed` as
//! `u64`, kind as `u8` (0 bond, 1 site), then the packed bit array, bit `i`
//! at byte `i / 8`, position `i % 8`, in canonical edge/vertex order.

use std::io::{Read, Write};

use super::config::{BondConfig, SiteConfig};
use super::lattice_box::LatticeBox;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PCLB";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Snapshot {
    Bond(BondConfig),
    Site(SiteConfig),
}

fn write_header(w: &mut impl Write, bx: &LatticeBox, p: f64, seed: u64, kind: u8) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(bx.dim() as u16).to_le_bytes())?;
    for a in 0..bx.dim() {
        w.write_all(&bx.lo()[a].to_le_bytes())?;
        w.write_all(&bx.hi()[a].to_le_bytes())?;
    }
    w.write_all(&p.to_le_bytes())?;
    w.write_all(&seed.to_le_bytes())?;
    w.write_all(&[kind])?;
    Ok(())
}

fn write_bits(w: &mut impl Write, words: &[u64], nbits: usize) -> Result<()> {
    let bytes: Vec<u8> = words.iter().flat_map(|x| x.to_le_bytes()).take(nbits.div_ceil(8)).collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn write_bond(w: &mut impl Write, cfg: &BondConfig) -> Result<()> {
    write_header(w, cfg.lattice_box(), cfg.p(), cfg.seed(), 0)?;
    write_bits(w, cfg.bits(), cfg.edge_count())
}

pub fn write_site(w: &mut impl Write, cfg: &SiteConfig) -> Result<()> {
    write_header(w, cfg.lattice_box(), cfg.q(), cfg.seed(), 1)?;
    write_bits(w, cfg.bits(), cfg.lattice_box().vertex_count())
}

pub fn write_snapshot(w: &mut impl Write, snap: &Snapshot) -> Result<()> {
    match snap {
        Snapshot::Bond(c) => write_bond(w, c),
        Snapshot::Site(c) => write_site(w, c),
    }
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    Ok(buf)
}

pub fn read_snapshot(r: &mut impl Read) -> Result<Snapshot> {
    if &take::<4>(r)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u16::from_le_bytes(take(r)?);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let d = u16::from_le_bytes(take(r)?) as usize;
    let mut lo = Vec::with_capacity(d);
    let mut hi = Vec::with_capacity(d);
    for _ in 0..d {
        lo.push(i32::from_le_bytes(take(r)?));
        hi.push(i32::from_le_bytes(take(r)?));
    }
    let bx = LatticeBox::new(lo, hi).map_err(|e| Error::Format(e.to_string()))?;
    let p = f64::from_le_bytes(take(r)?);
    let seed = u64::from_le_bytes(take(r)?);
    let kind = take::<1>(r)?[0];
    let nbits = match kind {
        0 => bx.edge_count(),
        1 => bx.vertex_count(),
        k => return Err(Error::Format(format!("unknown kind {k}"))),
    };
    let mut bytes = vec![0u8; nbits.div_ceil(8)];
    r.read_exact(&mut bytes).map_err(|e| Error::Format(format!("truncated bit array: {e}")))?;
    let mut words = vec![0u64; nbits.div_ceil(64)];
    for (i, b) in bytes.iter().enumerate() {
        words[i / 8] |= (*b as u64) << (8 * (i % 8));
    }
    Ok(match kind {
        0 => Snapshot::Bond(BondConfig::from_bits(bx, p, seed, words)?),
        _ => Snapshot::Site(SiteConfig::from_bits(bx, p, seed, words)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_frozen() {
        let bx = LatticeBox::cube(&[0, 0], 1).unwrap();
        let cfg = BondConfig::sample(&bx, 1.0, 5).unwrap();
        let mut buf = Vec::new();
        write_bond(&mut buf, &cfg).unwrap();
        // 4 + 2 + 2 + 2*8 + 8 + 8 + 1 header bytes, 4 edges -> 1 byte
        assert_eq!(buf.len(), 41 + 1);
        assert_eq!(&buf[0..4], b"PCLB");
        assert_eq!(&buf[4..6], &[1, 0]);
        assert_eq!(&buf[6..8], &[2, 0]);
        assert_eq!(buf[40], 0);
        assert_eq!(buf[41], 0b1111);
    }

    proptest! {
        #[test]
        fn roundtrip(side in 0i32..7, d in 1usize..4, p in 0.0f64..=1.0, seed: u64, site: bool) {
            let bx = LatticeBox::new(vec![-1; d], vec![side - 1; d]).unwrap();
            let snap = if site {
                Snapshot::Site(SiteConfig::sample(&bx, p, seed).unwrap())
            } else {
                Snapshot::Bond(BondConfig::sample(&bx, p, seed).unwrap())
            };
            let mut buf = Vec::new();
            write_snapshot(&mut buf, &snap).unwrap();
            let back = read_snapshot(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(back, snap);
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_snapshot(&mut &b"XXXX"[..]).is_err());
        assert!(read_snapshot(&mut &b"PCLB\x01\x00"[..]).is_err());
    }
}
