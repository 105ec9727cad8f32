//! Binary PGM (P5) and PPM (P6) codecs, 8 bits per channel.
//!
//! Binary masks are stored as PGM with values {0, 255}; on read any nonzero
//! sample is foreground.

use std::io::{Read, Write};
use std::path::Path;

use super::{BinaryImage, GrayImage};
use crate::error::{Error, Result};

/// 8-bit interleaved RGB raster.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: usize,
}

fn parse_header(bytes: &[u8]) -> Result<(Header, usize)> {
    let err = |reason: &str| Error::format("pnm", reason);
    if bytes.len() < 2 {
        return Err(err("truncated header"));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(err("truncated header")),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(err("expected decimal header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err("header field out of range"))?;
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(err("missing whitespace after maxval")),
    }
    let header = Header {
        magic,
        width: fields[0],
        height: fields[1],
        maxval: fields[2],
    };
    if header.maxval != 255 {
        return Err(err("only maxval 255 is supported"));
    }
    Ok((header, pos))
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let (h, start) = parse_header(bytes)?;
    if &h.magic != b"P5" {
        return Err(Error::format("pgm", "expected P5 magic"));
    }
    let len = h.width * h.height;
    let raster = bytes
        .get(start..start + len)
        .ok_or_else(|| Error::format("pgm", "truncated raster"))?;
    GrayImage::from_vec(h.width, h.height, raster.to_vec())
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let (h, start) = parse_header(bytes)?;
    if &h.magic != b"P6" {
        return Err(Error::format("ppm", "expected P6 magic"));
    }
    let len = 3 * h.width * h.height;
    let raster = bytes
        .get(start..start + len)
        .ok_or_else(|| Error::format("ppm", "truncated raster"))?;
    Ok(RgbImage {
        width: h.width,
        height: h.height,
        data: raster.to_vec(),
    })
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pgm(img))
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes)
}

pub fn write_ppm(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    write_bytes(path.as_ref(), &encode_ppm(img))
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryImage> {
    let g = read_pgm(path)?;
    BinaryImage::from_vec(
        g.width(),
        g.height(),
        g.data().iter().map(|&v| v != 0).collect(),
    )
}

pub fn write_mask(path: impl AsRef<Path>, mask: &BinaryImage) -> Result<()> {
    write_pgm(path, &mask.to_gray())
}

/// Row-at-a-time reader over a P5 file, for rasters too large to hold twice.
pub struct PgmRows {
    reader: std::io::BufReader<std::fs::File>,
    path: std::path::PathBuf,
    width: usize,
    height: usize,
    next: usize,
}

/// Headers longer than this (comments included) are rejected by `PgmRows`.
const MAX_HEADER: usize = 4096;

impl PgmRows {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        use std::io::{Seek, SeekFrom};
        let path = path.as_ref().to_path_buf();
        let mut file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut prefix = Vec::with_capacity(MAX_HEADER);
        (&mut file)
            .take(MAX_HEADER as u64)
            .read_to_end(&mut prefix)
            .map_err(|e| Error::io(&path, e))?;
        let (h, start) = parse_header(&prefix)?;
        if &h.magic != b"P5" {
            return Err(Error::format("pgm", "expected P5 magic"));
        }
        GrayImage::new(h.width, 1)?;
        GrayImage::new(1, h.height)?;
        file.seek(SeekFrom::Start(start as u64)).map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            reader: std::io::BufReader::new(file),
            path,
            width: h.width,
            height: h.height,
            next: 0,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Fills `row` (resized to the width) with the next raster row; `false`
    /// once every row has been read.
    pub fn read_row(&mut self, row: &mut Vec<u8>) -> Result<bool> {
        if self.next == self.height {
            return Ok(false);
        }
        row.resize(self.width, 0);
        self.reader.read_exact(row).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::format("pgm", "truncated raster"),
            _ => Error::io(&self.path, e),
        })?;
        self.next += 1;
        Ok(true)
    }
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_with_comment() {
        let mut bytes = b"P5\n# made by hand\n3 2\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (3, 2));
        assert_eq!(img.get(2, 1), 6);
    }

    #[test]
    fn rejects_truncated_and_wrong_magic() {
        assert!(decode_pgm(b"P5\n3 2\n255\n\x01\x02").is_err());
        assert!(decode_pgm(b"P6\n1 1\n255\n\x01\x02\x03").is_err());
        assert!(decode_pgm(b"P5\n1 1\n65535\n\x01\x02").is_err());
    }

    #[test]
    fn row_reader_matches_whole_decode() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::from_fn(13, 9, |x, y| (x * 7 + y * 31) as u8).unwrap();
        let p = dir.path().join("r.pgm");
        write_pgm(&p, &img).unwrap();
        let mut rows = PgmRows::open(&p).unwrap();
        let mut buf = Vec::new();
        let mut y = 0;
        while rows.read_row(&mut buf).unwrap() {
            assert_eq!(buf, img.row(y));
            y += 1;
        }
        assert_eq!(y, 9);

        let bytes = encode_pgm(&img);
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        let mut rows = PgmRows::open(&p).unwrap();
        let err = (0..9).try_for_each(|_| rows.read_row(&mut buf).map(|_| ()));
        assert!(matches!(err, Err(Error::Format { .. })));
    }

    #[test]
    fn mask_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let mask = BinaryImage::from_fn(7, 5, |x, y| (x * y) % 3 == 1).unwrap();
        let p = dir.path().join("m.pgm");
        write_mask(&p, &mask).unwrap();
        assert_eq!(read_mask(&p).unwrap(), mask);
    }

    proptest! {
        #[test]
        fn pgm_round_trip_is_bit_exact(w in 1usize..40, h in 1usize..40, seed in any::<u64>()) {
            let img = GrayImage::from_fn(w, h, |x, y| {
                (seed.wrapping_mul(6364136223846793005).wrapping_add((x * 131 + y * 7919) as u64) >> 33) as u8
            }).unwrap();
            let bytes = encode_pgm(&img);
            prop_assert_eq!(decode_pgm(&bytes).unwrap(), img);
        }

        #[test]
        fn ppm_round_trip_is_bit_exact(w in 1usize..20, h in 1usize..20, fill in any::<u8>()) {
            let img = RgbImage { width: w, height: h, data: (0..3 * w * h).map(|i| (i as u8).wrapping_add(fill)).collect() };
            prop_assert_eq!(decode_ppm(&encode_ppm(&img)).unwrap(), img);
        }
    }
}
