//! GRD1 binary tensor format: magic "GRD1", format version u16, rank u16,
//! rank × u32 dims, then a row-major f32 payload (last dimension fastest),
//! all little-endian.

use crate::error::{Error, Result};
use crate::fields::Grid;
use crate::stats::{EnsembleSet, Season};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"GRD1";
const VERSION: u16 = 1;
const MAX_RANK: u16 = 8;

/// A raw tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct GrdFile {
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

impl GrdFile {
    pub fn new(dims: Vec<u32>, data: Vec<f32>) -> Result<Self> {
        check_dims(&dims, data.len())?;
        Ok(Self { dims, data })
    }
}

fn check_dims(dims: &[u32], len: usize) -> Result<()> {
    if dims.is_empty() || dims.len() > MAX_RANK as usize {
        return Err(Error::Format(format!(
            "tensor rank must be 1..={MAX_RANK}, got {}",
            dims.len()
        )));
    }
    let mut product: usize = 1;
    for &d in dims {
        if d == 0 {
            return Err(Error::Format("tensor dimensions must be positive".into()));
        }
        product = product
            .checked_mul(d as usize)
            .ok_or_else(|| Error::Format("tensor dimensions overflow".into()))?;
    }
    if product != len {
        return Err(Error::Format(format!(
            "dims {dims:?} imply {product} values but payload has {len}"
        )));
    }
    Ok(())
}

/// Writes a tensor; the parent directory must exist.
pub fn write_grd(path: &Path, grd: &GrdFile) -> Result<()> {
    check_dims(&grd.dims, grd.data.len())?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u16::<LittleEndian>(VERSION)?;
    w.write_u16::<LittleEndian>(grd.dims.len() as u16)?;
    for &d in &grd.dims {
        w.write_u32::<LittleEndian>(d)?;
    }
    for &v in &grd.data {
        w.write_f32::<LittleEndian>(v)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a tensor, rejecting bad magic, unknown versions, and files whose
/// length disagrees with the header.
pub fn read_grd(path: &Path) -> Result<GrdFile> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format(format!("{}: too short for a GRD1 header", path.display())))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {magic:?}, expected \"GRD1\"",
            path.display()
        )));
    }
    let version = r.read_u16::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported GRD1 version {version} (this build reads {VERSION})",
            path.display()
        )));
    }
    let rank = r.read_u16::<LittleEndian>()?;
    if rank == 0 || rank > MAX_RANK {
        return Err(Error::Format(format!(
            "{}: rank {rank} outside 1..={MAX_RANK}",
            path.display()
        )));
    }
    let mut dims = Vec::with_capacity(rank as usize);
    for _ in 0..rank {
        dims.push(r.read_u32::<LittleEndian>()?);
    }
    let count = dims.iter().try_fold(1usize, |acc, &d| {
        if d == 0 {
            None
        } else {
            acc.checked_mul(d as usize)
        }
    });
    let count = count.ok_or_else(|| {
        Error::Format(format!("{}: dims {dims:?} are invalid", path.display()))
    })?;
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        data.push(r.read_f32::<LittleEndian>().map_err(|_| {
            Error::Format(format!(
                "{}: payload shorter than dims {dims:?} imply",
                path.display()
            ))
        })?);
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Format(format!(
            "{}: trailing bytes after payload",
            path.display()
        )));
    }
    Ok(GrdFile { dims, data })
}

/// Writes one h×w field as a rank-2 tensor (f32 precision).
pub fn write_grid(path: &Path, g: &Grid) -> Result<()> {
    let data: Vec<f32> = g.values().iter().map(|&v| v as f32).collect();
    write_grd(path, &GrdFile::new(vec![g.h() as u32, g.w() as u32], data)?)
}

pub fn read_grid(path: &Path) -> Result<Grid> {
    let grd = read_grd(path)?;
    if grd.dims.len() != 2 {
        return Err(Error::Format(format!(
            "{}: expected a rank-2 field, got rank {}",
            path.display(),
            grd.dims.len()
        )));
    }
    Grid::new(
        grd.dims[0] as usize,
        grd.dims[1] as usize,
        grd.data.iter().map(|&v| v as f64).collect(),
    )
}

/// Writes S same-shape fields as one rank-3 tensor (S, h, w).
pub fn write_stack(path: &Path, grids: &[Grid]) -> Result<()> {
    if grids.is_empty() {
        return Err(Error::Shape("cannot write an empty field stack".into()));
    }
    let (h, w) = (grids[0].h(), grids[0].w());
    let mut data = Vec::with_capacity(grids.len() * h * w);
    for (i, g) in grids.iter().enumerate() {
        if g.h() != h || g.w() != w {
            return Err(Error::Shape(format!(
                "stack field {i} is {}×{}, expected {h}×{w}",
                g.h(),
                g.w()
            )));
        }
        data.extend(g.values().iter().map(|&v| v as f32));
    }
    write_grd(
        path,
        &GrdFile::new(vec![grids.len() as u32, h as u32, w as u32], data)?,
    )
}

pub fn read_stack(path: &Path) -> Result<Vec<Grid>> {
    let grd = read_grd(path)?;
    if grd.dims.len() != 3 {
        return Err(Error::Format(format!(
            "{}: expected a rank-3 field stack, got rank {}",
            path.display(),
            grd.dims.len()
        )));
    }
    let (s, h, w) = (
        grd.dims[0] as usize,
        grd.dims[1] as usize,
        grd.dims[2] as usize,
    );
    (0..s)
        .map(|i| {
            let base = i * h * w;
            Grid::new(
                h,
                w,
                grd.data[base..base + h * w]
                    .iter()
                    .map(|&v| v as f64)
                    .collect(),
            )
        })
        .collect()
}

/// Writes an ensemble set as one rank-4 tensor (S, M, h, w). Season labels
/// travel separately (see the seasons CSV helpers).
pub fn write_ensemble(path: &Path, set: &EnsembleSet) -> Result<()> {
    write_grd(
        path,
        &GrdFile::new(
            vec![
                set.n_samples() as u32,
                set.n_members() as u32,
                set.h() as u32,
                set.w() as u32,
            ],
            set.values().to_vec(),
        )?,
    )
}

pub fn read_ensemble(path: &Path, labels: Option<Vec<Season>>) -> Result<EnsembleSet> {
    let grd = read_grd(path)?;
    if grd.dims.len() != 4 {
        return Err(Error::Format(format!(
            "{}: expected a rank-4 ensemble, got rank {}",
            path.display(),
            grd.dims.len()
        )));
    }
    EnsembleSet::new(
        grd.dims[0] as usize,
        grd.dims[1] as usize,
        grd.dims[2] as usize,
        grd.dims[3] as usize,
        grd.data,
        labels,
    )
}

/// Writes `sample,season` rows for a labeled dataset.
pub fn write_seasons(path: &Path, seasons: &[Season]) -> Result<()> {
    let mut out = String::from("sample,season\n");
    for (i, s) in seasons.iter().enumerate() {
        out.push_str(&format!("{i},{}\n", s.label()));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_seasons(path: &Path) -> Result<Vec<Season>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if ln == 0 || line.trim().is_empty() {
            continue;
        }
        let season = line.rsplit(',').next().unwrap_or("").trim();
        let parsed = match season {
            "JFM" => Season::Jfm,
            "AMJ" => Season::Amj,
            "JAS" => Season::Jas,
            "OND" => Season::Ond,
            other => {
                return Err(Error::Format(format!(
                    "{}: line {}: unknown season '{other}'",
                    path.display(),
                    ln + 1
                )))
            }
        };
        out.push(parsed);
    }
    Ok(out)
}
