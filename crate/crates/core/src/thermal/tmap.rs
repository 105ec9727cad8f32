//! `.tmap` layout: the line `TMAP1`, then `<width> <height>` in decimal, each
//! newline-terminated, then `width * height` little-endian `f32` values in
//! row-major order.

use std::path::Path;

use super::ThermalMosaic;
use crate::error::{Error, Result};
use crate::imgcore::pnm::write_bytes;

pub const TMAP_MAGIC: &str = "TMAP1";

pub fn encode_tmap(m: &ThermalMosaic) -> Vec<u8> {
    let mut out = format!("{TMAP_MAGIC}\n{} {}\n", m.width, m.height).into_bytes();
    out.reserve(m.temps.len() * 4);
    for t in &m.temps {
        out.extend_from_slice(&t.to_le_bytes());
    }
    out
}

fn take_line<'a>(bytes: &mut &'a [u8]) -> Result<&'a str> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format("tmap", "truncated header"))?;
    let line = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::format("tmap", "header is not text"))?;
    *bytes = &bytes[nl + 1..];
    Ok(line)
}

/// Decoding keeps the stored values as they are; timing fields are zero.
pub fn decode_tmap(mut bytes: &[u8]) -> Result<ThermalMosaic> {
    if take_line(&mut bytes)? != TMAP_MAGIC {
        return Err(Error::format("tmap", "bad magic"));
    }
    let dims = take_line(&mut bytes)?;
    let mut it = dims.split_ascii_whitespace().map(str::parse::<usize>);
    let (Some(Ok(w)), Some(Ok(h)), None) = (it.next(), it.next(), it.next()) else {
        return Err(Error::format("tmap", format!("bad dimension line {dims:?}")));
    };
    let n = w.checked_mul(h).filter(|&n| n > 0).ok_or_else(|| Error::format("tmap", "empty or overflowing grid"))?;
    if bytes.len() != n * 4 {
        return Err(Error::format("tmap", format!("expected {} payload bytes, got {}", n * 4, bytes.len())));
    }
    let temps = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(ThermalMosaic {
        width: w,
        height: h,
        temps,
        start_time_us: 0,
        line_period_us: 0.0,
        clamped: 0,
    })
}

pub fn write_tmap(path: impl AsRef<Path>, m: &ThermalMosaic) -> Result<()> {
    write_bytes(path.as_ref(), &encode_tmap(m))
}

pub fn read_tmap(path: impl AsRef<Path>) -> Result<ThermalMosaic> {
    let p = path.as_ref();
    decode_tmap(&std::fs::read(p).map_err(|e| Error::io(p, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let m = ThermalMosaic::from_grid(2, 1, vec![30.0, 800.0]).unwrap();
        let b = encode_tmap(&m);
        assert_eq!(&b[..10], b"TMAP1\n2 1\n");
        assert_eq!(&b[10..14], &30f32.to_le_bytes());
        assert_eq!(b.len(), 18);
    }

    #[test]
    fn rejects_damage() {
        let m = ThermalMosaic::from_grid(2, 2, vec![40.0; 4]).unwrap();
        let b = encode_tmap(&m);
        assert!(decode_tmap(&b[..b.len() - 1]).is_err());
        assert!(decode_tmap(b"TMAP2\n1 1\n\0\0\0\0").is_err());
        assert!(decode_tmap(b"TMAP1\n1\n\0\0\0\0").is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(w in 1usize..20, h in 1usize..20, seed in any::<u32>()) {
            let temps: Vec<f32> = (0..w * h).map(|i| 30.0 + ((i as u32).wrapping_mul(seed) % 77_000) as f32 / 100.0).collect();
            let m = ThermalMosaic::from_grid(w, h, temps).unwrap();
            let back = decode_tmap(&encode_tmap(&m)).unwrap();
            prop_assert_eq!(back.temps.iter().map(|t| t.to_bits()).collect::<Vec<_>>(), m.temps.iter().map(|t| t.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!((back.width, back.height), (w, h));
        }
    }
}
