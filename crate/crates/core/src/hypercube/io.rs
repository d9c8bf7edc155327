//! Binary formats.
//!
//! Cube (`.hsc`): magic `HSCB`, version u16, height/width/channels u32,
//! dtype u8 (1 = f32), then little-endian f32 samples in BIP order.
//!
//! Mask (`.msk`): magic `MSK1`, height/width u32, one byte per pixel.
//!
//! Composites are written as binary PPM (P6).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{ClassMask, HyperCube, RgbImage};
use crate::error::{Error, Result};

pub const CUBE_MAGIC: &[u8; 4] = b"HSCB";
pub const MASK_MAGIC: &[u8; 4] = b"MSK1";
pub const CUBE_VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 1;
/// Bytes before the payload of a `.hsc` file.
pub const CUBE_HEADER_LEN: usize = 4 + 2 + 3 * 4 + 1;

fn read_magic<R: Read>(reader: &mut R, expected: &[u8; 4]) -> Result<()> {
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic)?;
    if &magic != expected {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(expected).into_owned(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    Ok(())
}

fn read_dim<R: Read>(reader: &mut R) -> Result<usize> {
    Ok(reader.read_u32::<LittleEndian>()? as usize)
}

fn write_dim<W: Write>(writer: &mut W, value: usize) -> Result<()> {
    let v = u32::try_from(value)
        .map_err(|_| Error::DimMismatch(format!("extent {value} does not fit in u32")))?;
    writer.write_u32::<LittleEndian>(v)?;
    Ok(())
}

pub fn read_cube<R: Read>(mut reader: R) -> Result<HyperCube> {
    read_magic(&mut reader, CUBE_MAGIC)?;
    let version = reader.read_u16::<LittleEndian>()?;
    if version != CUBE_VERSION {
        return Err(Error::UnsupportedFormat(format!("cube version {version}")));
    }
    let height = read_dim(&mut reader)?;
    let width = read_dim(&mut reader)?;
    let channels = read_dim(&mut reader)?;
    let dtype = reader.read_u8()?;
    if dtype != DTYPE_F32 {
        return Err(Error::UnsupportedFormat(format!("dtype code {dtype}")));
    }

    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    let expected = (height as u64) * (width as u64) * (channels as u64) * 4;
    if payload.len() as u64 != expected {
        return Err(Error::DimMismatch(format!(
            "{height}x{width}x{channels} cube needs {expected} payload bytes, found {}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    HyperCube::new(height, width, channels, data)
}

pub fn write_cube<W: Write>(cube: &HyperCube, mut writer: W) -> Result<()> {
    if cube.height() == 0 || cube.width() == 0 || cube.channels() == 0 {
        return Err(Error::EmptyCube {
            height: cube.height(),
            width: cube.width(),
            channels: cube.channels(),
        });
    }
    writer.write_all(CUBE_MAGIC)?;
    writer.write_u16::<LittleEndian>(CUBE_VERSION)?;
    write_dim(&mut writer, cube.height())?;
    write_dim(&mut writer, cube.width())?;
    write_dim(&mut writer, cube.channels())?;
    writer.write_u8(DTYPE_F32)?;
    for &v in cube.data() {
        writer.write_f32::<LittleEndian>(v)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn load_cube(path: impl AsRef<Path>) -> Result<HyperCube> {
    read_cube(BufReader::new(File::open(path)?))
}

pub fn save_cube(cube: &HyperCube, path: impl AsRef<Path>) -> Result<()> {
    write_cube(cube, BufWriter::new(File::create(path)?))
}

pub fn read_mask<R: Read>(mut reader: R) -> Result<ClassMask> {
    read_magic(&mut reader, MASK_MAGIC)?;
    let height = read_dim(&mut reader)?;
    let width = read_dim(&mut reader)?;
    let mut labels = Vec::new();
    reader.read_to_end(&mut labels)?;
    if labels.len() as u64 != height as u64 * width as u64 {
        return Err(Error::DimMismatch(format!(
            "{height}x{width} mask needs {} payload bytes, found {}",
            height * width,
            labels.len()
        )));
    }
    ClassMask::new(height, width, labels)
}

pub fn write_mask<W: Write>(mask: &ClassMask, mut writer: W) -> Result<()> {
    writer.write_all(MASK_MAGIC)?;
    write_dim(&mut writer, mask.height())?;
    write_dim(&mut writer, mask.width())?;
    writer.write_all(mask.labels())?;
    writer.flush()?;
    Ok(())
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<ClassMask> {
    read_mask(BufReader::new(File::open(path)?))
}

pub fn save_mask(mask: &ClassMask, path: impl AsRef<Path>) -> Result<()> {
    write_mask(mask, BufWriter::new(File::create(path)?))
}

pub fn write_ppm<W: Write>(image: &RgbImage, mut writer: W) -> Result<()> {
    write!(writer, "P6\n{} {}\n255\n", image.width, image.height)?;
    writer.write_all(&image.pixels)?;
    writer.flush()?;
    Ok(())
}

pub fn save_ppm(image: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    write_ppm(image, BufWriter::new(File::create(path)?))
}

/// Reads an `index,wavelength_nm` table. A header row and `#` comments are
/// skipped; indices must cover `0..n` exactly once.
pub fn load_wavelengths(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse(e.to_string()))?;

    let mut rows: Vec<(usize, f64)> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        if record.len() != 2 {
            return Err(Error::Parse(format!(
                "wavelength row {} has {} fields",
                line + 1,
                record.len()
            )));
        }
        let Ok(index) = record[0].parse::<usize>() else {
            if line == 0 {
                continue; // header
            }
            return Err(Error::Parse(format!("bad index {:?}", &record[0])));
        };
        let wl: f64 = record[1]
            .parse()
            .map_err(|_| Error::Parse(format!("bad wavelength {:?}", &record[1])))?;
        rows.push((index, wl));
    }
    rows.sort_by_key(|&(i, _)| i);
    for (expected, &(index, _)) in rows.iter().enumerate() {
        if index != expected {
            return Err(Error::Parse(format!(
                "wavelength table indices are not 0..{}",
                rows.len()
            )));
        }
    }
    Ok(rows.into_iter().map(|(_, w)| w).collect())
}

pub fn save_wavelengths(wavelengths_nm: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
    writer
        .write_record(["index", "wavelength_nm"])
        .map_err(|e| Error::Parse(e.to_string()))?;
    for (i, w) in wavelengths_nm.iter().enumerate() {
        writer
            .write_record([i.to_string(), w.to_string()])
            .map_err(|e| Error::Parse(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube_bytes(h: u32, w: u32, c: u32, payload_len: usize) -> Vec<u8> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(CUBE_MAGIC);
        bytes.extend_from_slice(&CUBE_VERSION.to_le_bytes());
        for d in [h, w, c] {
            bytes.extend_from_slice(&d.to_le_bytes());
        }
        bytes.push(DTYPE_F32);
        bytes.extend(std::iter::repeat_n(0u8, payload_len));
        bytes
    }

    #[test]
    fn reads_identity_cube() {
        let cube = HyperCube::new(2, 2, 3, (0..12).map(|v| v as f32).collect()).unwrap();
        let mut buf = Vec::new();
        write_cube(&cube, &mut buf).unwrap();
        assert_eq!(buf.len(), CUBE_HEADER_LEN + 48);
        let back = read_cube(buf.as_slice()).unwrap();
        assert_eq!(back.spectrum(0, 0), &[0.0, 1.0, 2.0]);
        assert_eq!(back, cube);
    }

    #[test]
    fn truncated_payload_is_dim_mismatch() {
        let bytes = cube_bytes(2, 2, 3, 40);
        assert!(matches!(
            read_cube(bytes.as_slice()),
            Err(Error::DimMismatch(_))
        ));
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let mut bytes = cube_bytes(1, 1, 1, 4);
        bytes[0] = b'X';
        assert!(matches!(
            read_cube(bytes.as_slice()),
            Err(Error::BadMagic { .. })
        ));
    }

    #[test]
    fn nan_payload_is_rejected() {
        let mut bytes = cube_bytes(1, 1, 1, 0);
        bytes.extend_from_slice(&f32::INFINITY.to_le_bytes());
        assert!(matches!(
            read_cube(bytes.as_slice()),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn empty_cube_cannot_be_saved() {
        let cube = HyperCube::new(0, 0, 3, vec![]).unwrap();
        let mut buf = Vec::new();
        assert!(matches!(
            write_cube(&cube, &mut buf),
            Err(Error::EmptyCube { .. })
        ));
    }

    #[test]
    fn mask_round_trip_and_layout() {
        let mask = ClassMask::new(2, 3, vec![0, 1, 2, 2, 1, 0]).unwrap();
        let mut buf = Vec::new();
        write_mask(&mask, &mut buf).unwrap();
        assert_eq!(&buf[..4], MASK_MAGIC);
        assert_eq!(buf.len(), 12 + 6);
        assert_eq!(read_mask(buf.as_slice()).unwrap(), mask);
        buf.pop();
        assert!(matches!(
            read_mask(buf.as_slice()),
            Err(Error::DimMismatch(_))
        ));
    }

    #[test]
    fn ppm_header() {
        let img = RgbImage {
            width: 2,
            height: 1,
            pixels: vec![1, 2, 3, 4, 5, 6],
        };
        let mut buf = Vec::new();
        write_ppm(&img, &mut buf).unwrap();
        assert_eq!(&buf[..11], b"P6\n2 1\n255\n");
        assert_eq!(&buf[11..], &[1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn wavelength_table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wl.csv");
        let table = vec![426.82, 436.99, 447.17, 1205.07];
        save_wavelengths(&table, &path).unwrap();
        assert_eq!(load_wavelengths(&path).unwrap(), table);

        std::fs::write(&path, "# comment\n1,500.5\n0,400.25\n").unwrap();
        assert_eq!(load_wavelengths(&path).unwrap(), vec![400.25, 500.5]);

        std::fs::write(&path, "0,400\n2,500\n").unwrap();
        assert!(load_wavelengths(&path).is_err());
    }
}
