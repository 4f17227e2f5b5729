//! Binary snapshot format.
//!
//! Little-endian throughout. Header: magic `PE3D`, format version `u32`,
//! `L1, L2, L3` as `f64`, `n1, n2, n3` as `u32`, field count `u32`. Body:
//! per field a parity tag `u8` (0 even, 1 odd) followed by the full
//! coefficient array in storage order as interleaved `re, im` `f64` pairs.
//!
//! A checkpoint is a state snapshot plus a sidecar with magic `PE3C`
//! holding `t, dt, h_prev` (`f64`), an AB2 history flag (`u8`), and, when
//! the flag is set, the stored tendency as an embedded snapshot.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::field::{Parity, ScalarField, State, VelocityField};
use crate::integrator::Checkpoint;

pub const MAGIC: &[u8; 4] = b"PE3D";
pub const SIDECAR_MAGIC: &[u8; 4] = b"PE3C";
pub const VERSION: u32 = 1;

/// Decoded snapshot: a domain and its fields in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub domain: DomainSpec,
    pub fields: Vec<ScalarField>,
}

impl Snapshot {
    pub fn from_state(u: &State) -> Self {
        Self {
            domain: *u.domain(),
            fields: u.components().iter().map(|f| (*f).clone()).collect(),
        }
    }

    /// Interprets three fields `v1, v2, b` as a state.
    pub fn into_state(self) -> Result<State> {
        let [v1, v2, b]: [ScalarField; 3] = self.fields.try_into().map_err(|f: Vec<_>| {
            Error::Format(format!("a state needs 3 fields, the snapshot holds {}", f.len()))
        })?;
        State::new(VelocityField::new(v1, v2)?, b)
    }
}

fn put_u32<W: Write>(w: &mut W, x: u32) -> Result<()> {
    Ok(w.write_all(&x.to_le_bytes())?)
}

fn put_f64<W: Write>(w: &mut W, x: f64) -> Result<()> {
    Ok(w.write_all(&x.to_le_bytes())?)
}

fn get<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated snapshot".into()),
        _ => Error::Io(e),
    })?;
    Ok(b)
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(get::<4, _>(r)?))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(get::<8, _>(r)?))
}

pub fn write_snapshot<W: Write>(w: &mut W, snap: &Snapshot) -> Result<()> {
    w.write_all(MAGIC)?;
    put_u32(w, VERSION)?;
    for l in snap.domain.lengths() {
        put_f64(w, l)?;
    }
    for n in snap.domain.sizes() {
        put_u32(w, n as u32)?;
    }
    put_u32(w, snap.fields.len() as u32)?;
    for f in &snap.fields {
        if f.domain() != &snap.domain {
            return Err(Error::Format("field domain differs from snapshot domain".into()));
        }
        w.write_all(&[f.parity().tag()])?;
        for c in f.coeffs() {
            put_f64(w, c.re)?;
            put_f64(w, c.im)?;
        }
    }
    Ok(())
}

pub fn read_snapshot<R: Read>(r: &mut R) -> Result<Snapshot> {
    let magic = get::<4, _>(r)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let lengths = [get_f64(r)?, get_f64(r)?, get_f64(r)?];
    let sizes = [get_u32(r)? as usize, get_u32(r)? as usize, get_u32(r)? as usize];
    let domain = DomainSpec::new(lengths, sizes).map_err(|e| Error::Format(e.to_string()))?;
    let count = get_u32(r)?;
    let mut fields = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let tag = get::<1, _>(r)?[0];
        let parity = Parity::from_tag(tag)
            .ok_or_else(|| Error::Format(format!("unknown parity tag {tag}")))?;
        let mut coeffs = Vec::with_capacity(domain.len());
        for _ in 0..domain.len() {
            coeffs.push(Complex64::new(get_f64(r)?, get_f64(r)?));
        }
        fields.push(ScalarField::from_coeffs(domain, parity, coeffs)?);
    }
    Ok(Snapshot { domain, fields })
}

pub fn save_state(path: &Path, u: &State) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_snapshot(&mut w, &Snapshot::from_state(u))?;
    Ok(w.flush()?)
}

pub fn load_state(path: &Path) -> Result<State> {
    let mut r = BufReader::new(File::open(path)?);
    read_snapshot(&mut r)?.into_state()
}

pub fn write_checkpoint<W: Write>(w: &mut W, ck: &Checkpoint) -> Result<()> {
    w.write_all(SIDECAR_MAGIC)?;
    put_u32(w, VERSION)?;
    put_f64(w, ck.time)?;
    put_f64(w, ck.dt)?;
    put_f64(w, ck.h_prev)?;
    match &ck.previous {
        Some(n) => {
            w.write_all(&[1])?;
            write_snapshot(w, &Snapshot::from_state(n))
        }
        None => Ok(w.write_all(&[0])?),
    }
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Checkpoint> {
    let magic = get::<4, _>(r)?;
    if &magic != SIDECAR_MAGIC {
        return Err(Error::Format(format!("bad sidecar magic {magic:?}")));
    }
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported sidecar version {version}")));
    }
    let time = get_f64(r)?;
    let dt = get_f64(r)?;
    let h_prev = get_f64(r)?;
    let previous = match get::<1, _>(r)?[0] {
        0 => None,
        1 => Some(read_snapshot(r)?.into_state()?),
        t => return Err(Error::Format(format!("bad history flag {t}"))),
    };
    Ok(Checkpoint {
        time,
        dt,
        h_prev,
        previous,
    })
}

/// Writes `<base>.pe3d` and `<base>.ck`.
pub fn save_checkpoint(base: &Path, u: &State, ck: &Checkpoint) -> Result<()> {
    save_state(&base.with_extension("pe3d"), u)?;
    let mut w = BufWriter::new(File::create(base.with_extension("ck"))?);
    write_checkpoint(&mut w, ck)?;
    Ok(w.flush()?)
}

pub fn load_checkpoint(base: &Path) -> Result<(State, Checkpoint)> {
    let u = load_state(&base.with_extension("pe3d"))?;
    let mut r = BufReader::new(File::open(base.with_extension("ck"))?);
    Ok((u, read_checkpoint(&mut r)?))
}
