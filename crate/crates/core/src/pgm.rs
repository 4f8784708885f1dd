//! Binary 8-bit PGM (P5) images.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::events::SensorGeometry;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    /// Row-major, one byte per pixel.
    pub data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    pub fn geometry(&self) -> SensorGeometry {
        SensorGeometry {
            width: self.width,
            height: self.height,
        }
    }
}

pub fn write_pgm<W: Write>(mut out: W, img: &GrayImage) -> Result<()> {
    write!(out, "P5\n{} {}\n255\n", img.width, img.height)?;
    out.write_all(&img.data)?;
    Ok(())
}

pub fn read_pgm<R: Read>(mut input: R) -> Result<GrayImage> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut pos = 0;
    let magic = header_token(&bytes, &mut pos)?;
    if magic != "P5" {
        return Err(Error::parse(format!("not a binary PGM (magic {magic:?})")));
    }
    let width: u32 = header_number(&bytes, &mut pos)?;
    let height: u32 = header_number(&bytes, &mut pos)?;
    let maxval: u32 = header_number(&bytes, &mut pos)?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::parse(format!("unsupported PGM maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let n = width as usize * height as usize;
    let data = bytes
        .get(pos..pos + n)
        .ok_or_else(|| Error::parse("truncated PGM raster"))?
        .to_vec();
    Ok(GrayImage { width, height, data })
}

fn header_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(Error::parse("truncated PGM header")),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
        *pos += 1;
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn header_number(bytes: &[u8], pos: &mut usize) -> Result<u32> {
    let tok = header_token(bytes, pos)?;
    tok.parse()
        .map_err(|_| Error::parse(format!("bad PGM header field {tok:?}")))
}

pub fn save_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_pgm(&mut out, img)?;
    out.flush()?;
    Ok(())
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    read_pgm(BufReader::new(File::open(path)?))
}
