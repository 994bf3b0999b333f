//! Versioned little-endian model file.
//!
//! ```text
//! magic "VKAAM\0" | u32 version
//! config: u8 warp, u8 descriptor, u8 part, u8 color, u32 n_shape, u32 n_appearance,
//!         f64 diagonal, u32 patch, u32 n_scales, n_scales x (f64 scale, u32 iterations)
//! reference shape (vec) | u32 n_triangles, 3 x u32 each
//! per level: f64 scale, shape mean (vec), similarity basis (mat), components (mat),
//!            eigenvalues (vec), f64 kept; reference placement (vec);
//!            appearance mean (vec), components (mat), eigenvalues (vec), f64 total, f64 kept
//! ```
//! `vec` = u32 length + f64 values; `mat` = u32 rows, u32 cols + column-major f64 values.
//! Fitting precomputations are rebuilt on load.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;

use super::config::{AamConfig, ColorMode, Descriptor, Part, WarpKind};
use super::model::{build_cache, Aam, AamLevel, AppearanceModel, FitCache};
use crate::appearance::mesh::TriMesh;
use crate::appearance::warp::WarpMap;
use crate::error::{Error, Result};
use crate::shape::{LinearShapeModel, Shape};

const MAGIC: &[u8; 6] = b"VKAAM\0";
pub const AAM_FORMAT_VERSION: u32 = 1;

type W = Vec<u8>;

fn put_vec(w: &mut W, v: &[f64]) {
    w.write_u32::<LittleEndian>(v.len() as u32).unwrap();
    for x in v {
        w.write_f64::<LittleEndian>(*x).unwrap();
    }
}

fn put_mat(w: &mut W, m: &DMatrix<f64>) {
    w.write_u32::<LittleEndian>(m.nrows() as u32).unwrap();
    w.write_u32::<LittleEndian>(m.ncols() as u32).unwrap();
    for x in m.iter() {
        w.write_f64::<LittleEndian>(*x).unwrap();
    }
}

fn get_vec(r: &mut Cursor<&[u8]>) -> Result<Vec<f64>> {
    let n = r.read_u32::<LittleEndian>()? as usize;
    check_len(r, n * 8)?;
    (0..n).map(|_| Ok(r.read_f64::<LittleEndian>()?)).collect()
}

fn get_mat(r: &mut Cursor<&[u8]>) -> Result<DMatrix<f64>> {
    let rows = r.read_u32::<LittleEndian>()? as usize;
    let cols = r.read_u32::<LittleEndian>()? as usize;
    check_len(r, rows * cols * 8)?;
    let data: Vec<f64> = (0..rows * cols).map(|_| r.read_f64::<LittleEndian>()).collect::<std::io::Result<_>>()?;
    Ok(DMatrix::from_vec(rows, cols, data))
}

fn check_len(r: &Cursor<&[u8]>, need: usize) -> Result<()> {
    let left = r.get_ref().len() as u64 - r.position();
    if (need as u64) > left {
        return Err(Error::format("aam model", format!("truncated: need {need} bytes, {left} left")));
    }
    Ok(())
}

fn code<T: PartialEq + Copy>(v: T, all: &[T]) -> u8 {
    all.iter().position(|x| *x == v).unwrap() as u8
}

fn decode<T: Copy>(c: u8, all: &[T], what: &str) -> Result<T> {
    all.get(c as usize)
        .copied()
        .ok_or_else(|| Error::format("aam model", format!("bad {what} code {c}")))
}

const WARPS: [WarpKind; 2] = [WarpKind::Holistic, WarpKind::Patch];
const DESCRIPTORS: [Descriptor; 2] = [Descriptor::NoOp, Descriptor::Sift];
const PARTS: [Part; 3] = [Part::Face, Part::Chin, Part::Lips];
const COLORS: [ColorMode; 2] = [ColorMode::Rgb, ColorMode::Gray];

pub fn to_bytes(aam: &Aam) -> Vec<u8> {
    let mut w = Vec::new();
    w.extend_from_slice(MAGIC);
    w.write_u32::<LittleEndian>(AAM_FORMAT_VERSION).unwrap();
    let c = &aam.config;
    w.push(code(c.warp, &WARPS));
    w.push(code(c.descriptor, &DESCRIPTORS));
    w.push(code(c.part, &PARTS));
    w.push(code(c.color, &COLORS));
    w.write_u32::<LittleEndian>(c.n_shape as u32).unwrap();
    w.write_u32::<LittleEndian>(c.n_appearance as u32).unwrap();
    w.write_f64::<LittleEndian>(c.diagonal).unwrap();
    w.write_u32::<LittleEndian>(c.patch as u32).unwrap();
    w.write_u32::<LittleEndian>(c.scales.len() as u32).unwrap();
    for (s, i) in c.scales.iter().zip(&c.iterations) {
        w.write_f64::<LittleEndian>(*s).unwrap();
        w.write_u32::<LittleEndian>(*i as u32).unwrap();
    }
    put_vec(&mut w, aam.reference.coords());
    let tris = aam.mesh.as_ref().map(|m| m.triangles.as_slice()).unwrap_or(&[]);
    w.write_u32::<LittleEndian>(tris.len() as u32).unwrap();
    for t in tris {
        for &v in t {
            w.write_u32::<LittleEndian>(v as u32).unwrap();
        }
    }
    for l in &aam.levels {
        w.write_f64::<LittleEndian>(l.scale).unwrap();
        let sm = &l.shape_model;
        put_vec(&mut w, sm.mean.coords());
        put_mat(&mut w, &sm.similarity_basis);
        put_mat(&mut w, &sm.components);
        put_vec(&mut w, &sm.eigenvalues);
        w.write_f64::<LittleEndian>(sm.kept_variance_ratio).unwrap();
        put_vec(&mut w, l.reference.coords());
        let a = &l.appearance;
        put_vec(&mut w, &a.mean);
        put_mat(&mut w, &a.components);
        put_vec(&mut w, &a.eigenvalues);
        w.write_f64::<LittleEndian>(a.total_variance).unwrap();
        w.write_f64::<LittleEndian>(a.kept_variance_ratio).unwrap();
    }
    w
}

/// FNV-1a over the serialized model.
pub(crate) fn fingerprint(aam: &Aam) -> u64 {
    fnv1a(&to_bytes(aam))
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn from_bytes(bytes: &[u8]) -> Result<Aam> {
    let mut r = Cursor::new(bytes);
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format("aam model", "file too short"))?;
    if &magic != MAGIC {
        return Err(Error::format("aam model", "bad magic"));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != AAM_FORMAT_VERSION {
        return Err(Error::format("aam model", format!("unsupported version {version}")));
    }
    let warp = decode(r.read_u8()?, &WARPS, "warp")?;
    let descriptor = decode(r.read_u8()?, &DESCRIPTORS, "descriptor")?;
    let part = decode(r.read_u8()?, &PARTS, "part")?;
    let color = decode(r.read_u8()?, &COLORS, "color")?;
    let n_shape = r.read_u32::<LittleEndian>()? as usize;
    let n_appearance = r.read_u32::<LittleEndian>()? as usize;
    let diagonal = r.read_f64::<LittleEndian>()?;
    let patch = r.read_u32::<LittleEndian>()? as usize;
    let n_scales = r.read_u32::<LittleEndian>()? as usize;
    check_len(&r, n_scales * 12)?;
    let mut scales = Vec::with_capacity(n_scales);
    let mut iterations = Vec::with_capacity(n_scales);
    for _ in 0..n_scales {
        scales.push(r.read_f64::<LittleEndian>()?);
        iterations.push(r.read_u32::<LittleEndian>()? as usize);
    }
    let config = AamConfig {
        warp,
        descriptor,
        part,
        scales,
        iterations,
        n_shape,
        n_appearance,
        diagonal,
        patch,
        color,
    };
    config.validate()?;
    let reference = Shape::new(get_vec(&mut r)?)?;
    let n_tri = r.read_u32::<LittleEndian>()? as usize;
    check_len(&r, n_tri * 12)?;
    let mut triangles = Vec::with_capacity(n_tri);
    for _ in 0..n_tri {
        let mut t = [0usize; 3];
        for v in &mut t {
            *v = r.read_u32::<LittleEndian>()? as usize;
        }
        triangles.push(t);
    }
    let mesh = (warp == WarpKind::Holistic).then_some(TriMesh { triangles });
    let mut levels = Vec::with_capacity(n_scales);
    for _ in 0..n_scales {
        let scale = r.read_f64::<LittleEndian>()?;
        let shape_model = LinearShapeModel {
            mean: Shape::new(get_vec(&mut r)?)?,
            similarity_basis: get_mat(&mut r)?,
            components: get_mat(&mut r)?,
            eigenvalues: get_vec(&mut r)?,
            kept_variance_ratio: r.read_f64::<LittleEndian>()?,
        };
        let placed = Shape::new(get_vec(&mut r)?)?;
        let appearance = AppearanceModel {
            mean: get_vec(&mut r)?,
            components: get_mat(&mut r)?,
            eigenvalues: get_vec(&mut r)?,
            total_variance: r.read_f64::<LittleEndian>()?,
            kept_variance_ratio: r.read_f64::<LittleEndian>()?,
        };
        if appearance.components.nrows() != appearance.mean.len() {
            return Err(Error::format("aam model", "appearance basis does not match its mean"));
        }
        let warpmap = match &mesh {
            Some(m) => Some(WarpMap::build(&placed, m)?),
            None => None,
        };
        let mut level = AamLevel {
            scale,
            shape_model,
            reference: placed,
            warpmap,
            appearance,
            cache: FitCache {
                basis: DMatrix::zeros(0, 0),
                update: DMatrix::zeros(0, 0),
            },
        };
        let expect = super::model::appearance_dim(&config, level.reference.n_points(), level.warpmap.as_ref());
        if expect != level.appearance.dim() {
            return Err(Error::DimensionMismatch {
                expected: expect,
                actual: level.appearance.dim(),
            });
        }
        level.cache = build_cache(&config, &level, mesh.as_ref())?;
        levels.push(level);
    }
    if r.position() as usize != bytes.len() {
        return Err(Error::format("aam model", "trailing bytes"));
    }
    Ok(Aam {
        config,
        reference,
        mesh,
        levels,
        id: fnv1a(bytes),
    })
}

impl Aam {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, to_bytes(self)).map_err(|e| Error::from(e).at_path(path))
    }

    pub fn load(path: &Path) -> Result<Aam> {
        let bytes = fs::read(path).map_err(|e| Error::from(e).at_path(path))?;
        from_bytes(&bytes).map_err(|e| e.at_path(path))
    }
}
