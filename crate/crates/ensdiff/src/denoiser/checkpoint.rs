//! Versioned binary model checkpoint.
//!
//! Layout (little-endian): magic "VDMW", format version u16, architecture
//! dims (h, w, width, blocks, t_max as u32), schedule clamps and λ (f64),
//! target/conditioning standardizer stats (f64), then every weight buffer in
//! the net's defined order as f32.

use crate::denoiser::net::{NetConfig, ToyDenoiser};
use crate::error::{Error, Result};
use crate::fields::Standardizer;
use crate::schedule::Schedule;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"VDMW";
const VERSION: u16 = 1;

/// Everything needed to sample: trained weights, the schedule they were
/// trained under, and the standardizers for both field roles.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub net: ToyDenoiser,
    pub schedule: Schedule,
    pub std_hi: Standardizer,
    pub std_lo: Standardizer,
}

pub fn save_model(path: &Path, bundle: &ModelBundle) -> Result<()> {
    let cfg = bundle.net.config();
    if cfg.t_max != bundle.schedule.t_max() {
        return Err(Error::Parameter(
            "net and schedule disagree on T; refusing to write an inconsistent checkpoint".into(),
        ));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u16::<LittleEndian>(VERSION)?;
    for dim in [cfg.h, cfg.w, cfg.width, cfg.blocks, cfg.t_max] {
        w.write_u32::<LittleEndian>(dim as u32)?;
    }
    for v in [
        bundle.schedule.sr_min(),
        bundle.schedule.sr_max(),
        bundle.schedule.lambda(),
        bundle.std_hi.mean,
        bundle.std_hi.std,
        bundle.std_lo.mean,
        bundle.std_lo.std,
    ] {
        w.write_f64::<LittleEndian>(v)?;
    }
    for buf in bundle.net.buffers() {
        for &x in buf {
            w.write_f32::<LittleEndian>(x as f32)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelBundle> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("checkpoint too short for header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad checkpoint magic {:?}, expected {:?}",
            magic, MAGIC
        )));
    }
    let version = r.read_u16::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}, this build reads {VERSION}"
        )));
    }
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = r.read_u32::<LittleEndian>()? as usize;
    }
    let cfg = NetConfig { h: dims[0], w: dims[1], width: dims[2], blocks: dims[3], t_max: dims[4] };
    let mut reals = [0f64; 7];
    for v in &mut reals {
        *v = r.read_f64::<LittleEndian>()?;
    }
    let schedule = Schedule::new(cfg.t_max, reals[0], reals[1], reals[2])?;
    let std_hi = Standardizer::new(reals[3], reals[4]);
    let std_lo = Standardizer::new(reals[5], reals[6]);

    let mut net = ToyDenoiser::init(cfg, &schedule, 0)?;
    for buf in net.buffers_mut() {
        for slot in buf.iter_mut() {
            *slot = r.read_f32::<LittleEndian>().map_err(|_| {
                Error::Format("checkpoint payload shorter than architecture requires".into())
            })? as f64;
        }
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("checkpoint has trailing bytes beyond the weight payload".into()));
    }
    Ok(ModelBundle { net, schedule, std_hi, std_lo })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn bundle() -> ModelBundle {
        let cfg = NetConfig { h: 4, w: 4, width: 12, blocks: 2, t_max: 8 };
        let schedule = Schedule::new(8, 0.05, 0.9, 2.0).unwrap();
        ModelBundle {
            net: ToyDenoiser::init(cfg, &schedule, 9).unwrap(),
            schedule,
            std_hi: Standardizer::new(1.5, 2.25),
            std_lo: Standardizer::new(-0.5, 0.75),
        }
    }

    #[test]
    fn round_trip_is_f32_faithful() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.vdmw");
        let b = bundle();
        save_model(&path, &b).unwrap();
        let loaded = load_model(&path).unwrap();

        assert_eq!(loaded.net.config(), b.net.config());
        assert_eq!(loaded.schedule.t_max(), 8);
        assert_eq!(loaded.schedule.lambda(), 2.0);
        assert_eq!(loaded.std_hi, b.std_hi);
        assert_eq!(loaded.std_lo, b.std_lo);
        for (lb, ob) in loaded.net.buffers().iter().zip(b.net.buffers()) {
            for (l, o) in lb.iter().zip(ob.iter()) {
                assert_eq!(*l, *o as f32 as f64);
            }
        }
    }

    #[test]
    fn second_save_is_byte_identical() {
        let dir = tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a"), dir.path().join("b"));
        let b = bundle();
        save_model(&p1, &b).unwrap();
        save_model(&p2, &b).unwrap();
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }

    #[test]
    fn rejects_bad_magic_version_and_truncation() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.vdmw");
        save_model(&path, &bundle()).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format(_))));

        let mut bad = bytes.clone();
        bad[4] = 99;
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format(_))));

        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format(_))));

        let mut long = bytes.clone();
        long.push(0);
        std::fs::write(&path, &long).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format(_))));
    }
}
