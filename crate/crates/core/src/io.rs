//! On-disk formats, all little-endian:
//!
//! * `CIMG v1` — complex grids (images, reconstructions, k-space dumps):
//!   magic `CIMG`, u32 version = 1, u32 height, u32 width, then
//!   height*width (f64 re, f64 im) pairs, row-major.
//! * `MASK v1` — sampling masks: magic `MSK1`, u32 height, u32 width, then
//!   ceil(h*w/8) bytes of row-major bit-packed booleans, LSB first (bit 0
//!   of byte 0 is location (0,0)).
//! * `UTFS` — transform sets: magic `UTFS`, u32 K, u32 n, then K blocks of
//!   n*n (f64 re, f64 im) pairs, row-major within each block.
//! * labels — u32 N, then N u16 labels, 1-based.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{ComplexImage, KSpace};
use crate::sampling::SamplingMask;
use crate::sparse::{ClusterAssignment, TransformSet};

const CIMG_MAGIC: &[u8; 4] = b"CIMG";
const MASK_MAGIC: &[u8; 4] = b"MSK1";
const UTFS_MAGIC: &[u8; 4] = b"UTFS";
const CIMG_VERSION: u32 = 1;

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn write_complex_block(w: &mut impl Write, data: &[Complex64]) -> Result<()> {
    let mut buf = Vec::with_capacity(data.len() * 16);
    for v in data {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_complex_block(r: &mut impl Read, count: usize) -> Result<Vec<Complex64>> {
    let mut buf = vec![0u8; count * 16];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[0..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..16].try_into().unwrap()),
            )
        })
        .collect())
}

fn check_magic(r: &mut impl Read, expect: &[u8; 4], what: &str) -> Result<()> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != expect {
        return Err(Error::InvalidInput(format!(
            "not a {what} file (bad magic)"
        )));
    }
    Ok(())
}

fn checked_dims(height: u32, width: u32, what: &str) -> Result<(usize, usize)> {
    let (h, w) = (height as usize, width as usize);
    if h == 0 || w == 0 || h.checked_mul(w).is_none() {
        return Err(Error::InvalidInput(format!(
            "{what}: bad dimensions {h}x{w}"
        )));
    }
    Ok((h, w))
}

fn write_cimg_raw(path: &Path, height: usize, width: usize, data: &[Complex64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CIMG_MAGIC)?;
    write_u32(&mut w, CIMG_VERSION)?;
    write_u32(&mut w, height as u32)?;
    write_u32(&mut w, width as u32)?;
    write_complex_block(&mut w, data)?;
    w.flush()?;
    Ok(())
}

fn read_cimg_raw(path: &Path) -> Result<(usize, usize, Vec<Complex64>)> {
    let mut r = BufReader::new(File::open(path)?);
    check_magic(&mut r, CIMG_MAGIC, "CIMG")?;
    let version = read_u32(&mut r)?;
    if version != CIMG_VERSION {
        return Err(Error::InvalidInput(format!(
            "unsupported CIMG version {version}"
        )));
    }
    let (h, w) = checked_dims(read_u32(&mut r)?, read_u32(&mut r)?, "CIMG")?;
    let data = read_complex_block(&mut r, h * w)?;
    Ok((h, w, data))
}

pub fn write_image(path: &Path, img: &ComplexImage) -> Result<()> {
    write_cimg_raw(path, img.height(), img.width(), img.as_slice())
}

pub fn read_image(path: &Path) -> Result<ComplexImage> {
    let (h, w, data) = read_cimg_raw(path)?;
    ComplexImage::new(h, w, data)
}

pub fn write_kspace(path: &Path, k: &KSpace) -> Result<()> {
    write_cimg_raw(path, k.height(), k.width(), k.as_slice())
}

pub fn read_kspace(path: &Path) -> Result<KSpace> {
    let (h, w, data) = read_cimg_raw(path)?;
    KSpace::new(h, w, data)
}

pub fn write_mask(path: &Path, mask: &SamplingMask) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MASK_MAGIC)?;
    write_u32(&mut w, mask.height() as u32)?;
    write_u32(&mut w, mask.width() as u32)?;
    let bits = mask.as_slice();
    let mut packed = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            packed[i / 8] |= 1 << (i % 8);
        }
    }
    w.write_all(&packed)?;
    w.flush()?;
    Ok(())
}

pub fn read_mask(path: &Path) -> Result<SamplingMask> {
    let mut r = BufReader::new(File::open(path)?);
    check_magic(&mut r, MASK_MAGIC, "MASK")?;
    let (h, w) = checked_dims(read_u32(&mut r)?, read_u32(&mut r)?, "MASK")?;
    let mut packed = vec![0u8; (h * w).div_ceil(8)];
    r.read_exact(&mut packed)?;
    let bits: Vec<bool> = (0..h * w)
        .map(|i| packed[i / 8] & (1 << (i % 8)) != 0)
        .collect();
    let mask = SamplingMask::from_grid(h, w, bits)?;
    if mask.num_sampled() == 0 {
        return Err(Error::InvalidInput(
            "mask file contains no sampled locations".into(),
        ));
    }
    Ok(mask)
}

pub fn write_transforms(path: &Path, transforms: &TransformSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(UTFS_MAGIC)?;
    write_u32(&mut w, transforms.num_transforms() as u32)?;
    write_u32(&mut w, transforms.side() as u32)?;
    let n = transforms.side();
    for m in transforms.iter() {
        // Row-major on disk; DMatrix is column-major in memory.
        let mut row_major = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                row_major.push(m[(i, j)]);
            }
        }
        write_complex_block(&mut w, &row_major)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_transforms(path: &Path) -> Result<TransformSet> {
    let mut r = BufReader::new(File::open(path)?);
    check_magic(&mut r, UTFS_MAGIC, "UTFS")?;
    let k = read_u32(&mut r)? as usize;
    let n = read_u32(&mut r)? as usize;
    if k == 0 || n == 0 || n.checked_mul(n).is_none() {
        return Err(Error::InvalidInput(format!("UTFS: bad header K={k} n={n}")));
    }
    let mut mats = Vec::with_capacity(k);
    for _ in 0..k {
        let row_major = read_complex_block(&mut r, n * n)?;
        mats.push(DMatrix::from_fn(n, n, |i, j| row_major[i * n + j]));
    }
    TransformSet::new(mats)
}

/// Labels are stored 1-based as u16.
pub fn write_labels(path: &Path, labels: &ClusterAssignment) -> Result<()> {
    if labels.num_clusters() > u16::MAX as u32 {
        return Err(Error::InvalidInput("more than 65535 clusters".into()));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_u32(&mut w, labels.len() as u32)?;
    let mut buf = Vec::with_capacity(labels.len() * 2);
    for &l in labels.labels() {
        buf.extend_from_slice(&((l + 1) as u16).to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

/// Returns 0-based labels and the number of clusters implied by the file
/// (the largest label seen).
pub fn read_labels(path: &Path) -> Result<ClusterAssignment> {
    let mut r = BufReader::new(File::open(path)?);
    let count = read_u32(&mut r)? as usize;
    let mut buf = vec![0u8; count * 2];
    r.read_exact(&mut buf)?;
    let mut labels = Vec::with_capacity(count);
    for c in buf.chunks_exact(2) {
        let v = u16::from_le_bytes([c[0], c[1]]);
        if v == 0 {
            return Err(Error::InvalidInput("labels file contains label 0".into()));
        }
        labels.push((v - 1) as u32);
    }
    let k = labels.iter().copied().max().unwrap_or(0) + 1;
    ClusterAssignment::new(labels, k)
}
