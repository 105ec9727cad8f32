//! Built-in 5x7 bitmap digits, scaled by pixel replication.

use crate::imgcore::{BBox, GrayImage};

pub const GLYPH_COLS: usize = 5;
pub const GLYPH_ROWS: usize = 7;

const DIGITS: [[u8; GLYPH_ROWS]; 10] = [
    [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110],
    [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
    [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111],
    [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110],
    [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010],
    [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110],
    [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110],
    [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000],
    [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110],
    [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100],
];

fn rows_for(ch: char) -> Option<&'static [u8; GLYPH_ROWS]> {
    ch.to_digit(10).map(|d| &DIGITS[d as usize])
}

#[inline]
fn cell_set(rows: &[u8; GLYPH_ROWS], col: usize, row: usize) -> bool {
    rows[row] >> (GLYPH_COLS - 1 - col) & 1 == 1
}

/// Draws `ch` with its font cell's top-left at (x, y); returns the tight box
/// of the pixels written, clipped to the image. Unknown characters draw nothing.
pub fn draw_glyph(
    img: &mut GrayImage,
    ch: char,
    x: usize,
    y: usize,
    scale: usize,
    value: u8,
) -> Option<BBox> {
    let rows = rows_for(ch)?;
    let mut bounds: Option<(usize, usize, usize, usize)> = None;
    for row in 0..GLYPH_ROWS {
        for col in 0..GLYPH_COLS {
            if !cell_set(rows, col, row) {
                continue;
            }
            for sy in 0..scale {
                for sx in 0..scale {
                    let px = x + col * scale + sx;
                    let py = y + row * scale + sy;
                    if px < img.width() && py < img.height() {
                        img.set(px, py, value);
                        let b = bounds.get_or_insert((px, py, px, py));
                        b.0 = b.0.min(px);
                        b.1 = b.1.min(py);
                        b.2 = b.2.max(px);
                        b.3 = b.3.max(py);
                    }
                }
            }
        }
    }
    bounds.map(|(x0, y0, x1, y1)| BBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
}

/// Column range `[first, last]` of set cells, used to place touching glyphs.
pub fn glyph_extent(ch: char) -> Option<(usize, usize)> {
    let rows = rows_for(ch)?;
    let cols: Vec<usize> = (0..GLYPH_COLS)
        .filter(|&c| (0..GLYPH_ROWS).any(|r| cell_set(rows, c, r)))
        .collect();
    Some((*cols.first()?, *cols.last()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_digit_spans_full_height() {
        for d in '0'..='9' {
            let mut img = GrayImage::new(40, 40).unwrap();
            let b = draw_glyph(&mut img, d, 2, 3, 3, 200).unwrap();
            assert_eq!(b.y, 3);
            assert_eq!(b.h, GLYPH_ROWS * 3, "digit {d}");
        }
    }

    #[test]
    fn one_is_narrow() {
        assert_eq!(glyph_extent('1'), Some((1, 3)));
        assert_eq!(glyph_extent('0'), Some((0, 4)));
        assert!(draw_glyph(&mut GrayImage::new(10, 10).unwrap(), 'x', 0, 0, 1, 9).is_none());
    }
}
