//! 5×7 digit glyphs used for the corner shortcut.

/// One row per line, five bits per row, most significant bit leftmost.
pub const DIGITS: [[u8; 7]; 10] = [
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

pub const GLYPH_W: usize = 5;
pub const GLYPH_H: usize = 7;
pub const GLYPH_SCALE: usize = 2;
pub const GLYPH_OFFSET: usize = 2;

/// Height and width (16×12) of the corner region a stamped glyph can touch.
pub const SHORTCUT_BOX: (usize, usize) = (
    GLYPH_OFFSET + GLYPH_H * GLYPH_SCALE,
    GLYPH_OFFSET + GLYPH_W * GLYPH_SCALE,
);

pub fn glyph_bit(digit: usize, row: usize, col: usize) -> bool {
    DIGITS[digit][row] >> (GLYPH_W - 1 - col) & 1 == 1
}
