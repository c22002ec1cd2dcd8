//! File-backed gridded velocity series with bilinear-in-space,
//! linear-in-time interpolation.
//!
//! On-disk layout (UVGRID), all little-endian:
//!
//! ```text
//! "UVG1"                      4 bytes
//! nx, ny, nt                  u32 ×3
//! x0, y0, dx, dy, dt          f64 ×5
//! u                           nt frames × ny rows × nx f32, row-major
//! v                           same layout as u
//! ```

use super::{FlowError, FlowField};
use crate::geom::{Rect, Vec2};
use std::fs;
use std::io;
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"UVG1";
const HEADER_LEN: usize = 4 + 3 * 4 + 5 * 8;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic at offset 0: expected \"UVG1\"")]
    BadMagic,
    #[error("truncated file at offset {offset}: need {needed} bytes, have {available}")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("trailing bytes after payload at offset {offset}")]
    TrailingBytes { offset: usize },
    #[error("non-finite sample at offset {offset}")]
    NonFinite { offset: usize },
    #[error("invalid header at offset {offset}: {msg}")]
    InvalidHeader { offset: usize, msg: String },
    #[error("invalid grid: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFieldSeries {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
    pub dt: f64,
    /// `nt × ny × nx`, row-major.
    pub u: Vec<f32>,
    pub v: Vec<f32>,
    max_speed: f64,
}

impl GridFieldSeries {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        (nx, ny, nt): (usize, usize, usize),
        (x0, y0): (f64, f64),
        (dx, dy, dt): (f64, f64, f64),
        u: Vec<f32>,
        v: Vec<f32>,
    ) -> Result<Self, GridError> {
        if nx < 2 || ny < 2 || nt < 2 {
            return Err(GridError::Invalid(format!(
                "need nx, ny, nt >= 2, got {nx}×{ny}×{nt}"
            )));
        }
        if !(dx > 0.0 && dy > 0.0 && dt > 0.0)
            || !dx.is_finite()
            || !dy.is_finite()
            || !dt.is_finite()
        {
            return Err(GridError::Invalid(
                "spacings must be positive and finite".into(),
            ));
        }
        if !x0.is_finite() || !y0.is_finite() {
            return Err(GridError::Invalid("origin must be finite".into()));
        }
        let n = nx * ny * nt;
        if u.len() != n || v.len() != n {
            return Err(GridError::Invalid(format!(
                "expected {n} samples per component, got u={} v={}",
                u.len(),
                v.len()
            )));
        }
        if let Some(i) = u.iter().chain(v.iter()).position(|x| !x.is_finite()) {
            return Err(GridError::NonFinite {
                offset: HEADER_LEN + 4 * i,
            });
        }
        let max_speed = u
            .iter()
            .zip(&v)
            .map(|(&a, &b)| (a as f64).hypot(b as f64))
            .fold(0.0, f64::max);
        Ok(Self {
            nx,
            ny,
            nt,
            x0,
            y0,
            dx,
            dy,
            dt,
            u,
            v,
            max_speed,
        })
    }

    /// Builds a series by evaluating `f(x, y, t)` at every node.
    pub fn from_fn(
        dims: (usize, usize, usize),
        origin: (f64, f64),
        spacing: (f64, f64, f64),
        mut f: impl FnMut(f64, f64, f64) -> Vec2,
    ) -> Result<Self, GridError> {
        let (nx, ny, nt) = dims;
        let mut u = Vec::with_capacity(nx * ny * nt);
        let mut v = Vec::with_capacity(nx * ny * nt);
        for k in 0..nt {
            let t = k as f64 * spacing.2;
            for j in 0..ny {
                let y = origin.1 + j as f64 * spacing.1;
                for i in 0..nx {
                    let x = origin.0 + i as f64 * spacing.0;
                    let w = f(x, y, t);
                    u.push(w.x as f32);
                    v.push(w.y as f32);
                }
            }
        }
        Self::new(dims, origin, spacing, u, v)
    }

    pub fn extent(&self) -> Rect {
        Rect::new(
            self.x0,
            self.x0 + (self.nx - 1) as f64 * self.dx,
            self.y0,
            self.y0 + (self.ny - 1) as f64 * self.dy,
        )
    }

    pub fn duration(&self) -> f64 {
        (self.nt - 1) as f64 * self.dt
    }

    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.ny + j) * self.nx + i
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> Vec2 {
        let n = self.index(i, j, k);
        Vec2::new(self.u[n] as f64, self.v[n] as f64)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.u.len());
        out.extend_from_slice(MAGIC);
        for n in [self.nx, self.ny, self.nt] {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        for x in [self.x0, self.y0, self.dx, self.dy, self.dt] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for x in self.u.iter().chain(&self.v) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GridError> {
        let need = |offset: usize, needed: usize| -> Result<(), GridError> {
            if bytes.len() < offset + needed {
                Err(GridError::Truncated {
                    offset,
                    needed,
                    available: bytes.len().saturating_sub(offset),
                })
            } else {
                Ok(())
            }
        };
        need(0, 4)?;
        if &bytes[..4] != MAGIC {
            return Err(GridError::BadMagic);
        }
        need(4, HEADER_LEN - 4)?;
        let rd_u32 = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let rd_f64 = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let (nx, ny, nt) = (rd_u32(4), rd_u32(8), rd_u32(12));
        for (o, n, name) in [(4, nx, "nx"), (8, ny, "ny"), (12, nt, "nt")] {
            if n < 2 {
                return Err(GridError::InvalidHeader {
                    offset: o,
                    msg: format!("{name} = {n}, need at least 2"),
                });
            }
        }
        let mut hdr = [0.0; 5];
        for (i, h) in hdr.iter_mut().enumerate() {
            let o = 16 + 8 * i;
            *h = rd_f64(o);
            let ok = h.is_finite() && (i < 2 || *h > 0.0);
            if !ok {
                return Err(GridError::InvalidHeader {
                    offset: o,
                    msg: format!("bad value {h}"),
                });
            }
        }
        let n = nx
            .checked_mul(ny)
            .and_then(|a| a.checked_mul(nt))
            .ok_or_else(|| GridError::InvalidHeader {
                offset: 4,
                msg: "dimension product overflows".into(),
            })?;
        let payload = n.checked_mul(8).ok_or_else(|| GridError::InvalidHeader {
            offset: 4,
            msg: "payload size overflows".into(),
        })?;
        need(HEADER_LEN, payload)?;
        if bytes.len() > HEADER_LEN + payload {
            return Err(GridError::TrailingBytes {
                offset: HEADER_LEN + payload,
            });
        }
        let read_block = |start: usize| -> Result<Vec<f32>, GridError> {
            (0..n)
                .map(|i| {
                    let o = start + 4 * i;
                    let x = f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
                    if x.is_finite() {
                        Ok(x)
                    } else {
                        Err(GridError::NonFinite { offset: o })
                    }
                })
                .collect()
        };
        let u = read_block(HEADER_LEN)?;
        let v = read_block(HEADER_LEN + 4 * n)?;
        Self::new(
            (nx, ny, nt),
            (hdr[0], hdr[1]),
            (hdr[2], hdr[3], hdr[4]),
            u,
            v,
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GridError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    /// Bilinear in space, then linear in time.
    pub fn sample(&self, pos: Vec2, t: f64) -> Result<Vec2, FlowError> {
        if !self.extent().contains(pos) {
            return Err(FlowError::OutOfDomain { pos, t });
        }
        let t_max = self.duration();
        if !(t >= 0.0 && t <= t_max) {
            return Err(FlowError::OutOfTime {
                t,
                t_min: 0.0,
                t_max,
            });
        }
        let (i, fx) = cell((pos.x - self.x0) / self.dx, self.nx);
        let (j, fy) = cell((pos.y - self.y0) / self.dy, self.ny);
        let (k, ft) = cell(t / self.dt, self.nt);
        let spatial = |k: usize| -> Vec2 {
            let a = self.node(i, j, k) * (1.0 - fx) + self.node(i + 1, j, k) * fx;
            let b = self.node(i, j + 1, k) * (1.0 - fx) + self.node(i + 1, j + 1, k) * fx;
            a * (1.0 - fy) + b * fy
        };
        if ft == 0.0 {
            return Ok(spatial(k));
        }
        Ok(spatial(k) * (1.0 - ft) + spatial(k + 1) * ft)
    }

    /// Subdivides every spatial and temporal interval into `factor` pieces.
    /// Original nodes keep their exact values.
    pub fn refine(&self, factor: usize) -> Result<Self, GridError> {
        if factor < 2 {
            return Err(GridError::Invalid(format!(
                "refine factor must be >= 2, got {factor}"
            )));
        }
        let nx = (self.nx - 1) * factor + 1;
        let ny = (self.ny - 1) * factor + 1;
        let nt = (self.nt - 1) * factor + 1;
        let f = factor as f64;
        let mut u = Vec::with_capacity(nx * ny * nt);
        let mut v = Vec::with_capacity(nx * ny * nt);
        for k in 0..nt {
            for j in 0..ny {
                for i in 0..nx {
                    if i % factor == 0 && j % factor == 0 && k % factor == 0 {
                        let n = self.index(i / factor, j / factor, k / factor);
                        u.push(self.u[n]);
                        v.push(self.v[n]);
                        continue;
                    }
                    let w = self.sample_fractional(i as f64 / f, j as f64 / f, k as f64 / f);
                    u.push(w.x as f32);
                    v.push(w.y as f32);
                }
            }
        }
        Self::new(
            (nx, ny, nt),
            (self.x0, self.y0),
            (self.dx / f, self.dy / f, self.dt / f),
            u,
            v,
        )
    }

    /// Interpolation at fractional node coordinates (no range checks).
    fn sample_fractional(&self, gi: f64, gj: f64, gk: f64) -> Vec2 {
        let (i, fx) = cell(gi, self.nx);
        let (j, fy) = cell(gj, self.ny);
        let (k, ft) = cell(gk, self.nt);
        let spatial = |k: usize| -> Vec2 {
            let a = self.node(i, j, k) * (1.0 - fx) + self.node(i + 1, j, k) * fx;
            let b = self.node(i, j + 1, k) * (1.0 - fx) + self.node(i + 1, j + 1, k) * fx;
            a * (1.0 - fy) + b * fy
        };
        spatial(k) * (1.0 - ft) + spatial(k + 1) * ft
    }
}

/// Splits a fractional node coordinate into a cell index in `[0, n-2]` and
/// the offset within that cell.
fn cell(g: f64, n: usize) -> (usize, f64) {
    let last = (n - 2) as f64;
    let i = g.floor().clamp(0.0, last);
    (i as usize, g - i)
}

pub fn load_grid_series(path: impl AsRef<Path>) -> Result<GridFieldSeries, GridError> {
    let bytes = fs::read(path)?;
    GridFieldSeries::from_bytes(&bytes)
}

pub fn sample_grid(series: &GridFieldSeries, pos: Vec2, t: f64) -> Result<Vec2, FlowError> {
    series.sample(pos, t)
}

pub fn refine_grid(series: &GridFieldSeries, factor: usize) -> Result<GridFieldSeries, GridError> {
    series.refine(factor)
}

impl FlowField for GridFieldSeries {
    fn velocity(&self, pos: Vec2, t: f64) -> Result<Vec2, FlowError> {
        self.sample(pos, t)
    }

    fn bounds(&self) -> Rect {
        self.extent()
    }

    /// Largest node speed; interpolated vectors are convex combinations of
    /// node vectors, so this bounds every query.
    fn max_speed(&self) -> f64 {
        self.max_speed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn constant(u: f32, v: f32) -> GridFieldSeries {
        GridFieldSeries::new(
            (2, 2, 2),
            (0.0, 0.0),
            (1.0, 1.0, 1.0),
            vec![u; 8],
            vec![v; 8],
        )
        .unwrap()
    }

    #[test]
    fn constant_field_from_handcrafted_bytes() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"UVG1");
        for n in [2u32, 2, 2] {
            bytes.extend_from_slice(&n.to_le_bytes());
        }
        for x in [0.0f64, 0.0, 1.0, 1.0, 1.0] {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        for _ in 0..8 {
            bytes.extend_from_slice(&1.0f32.to_le_bytes());
        }
        for _ in 0..8 {
            bytes.extend_from_slice(&0.0f32.to_le_bytes());
        }
        let s = GridFieldSeries::from_bytes(&bytes).unwrap();
        for (x, y, t) in [(0.0, 0.0, 0.0), (0.3, 0.9, 0.5), (1.0, 1.0, 1.0)] {
            assert_eq!(s.sample(Vec2::new(x, y), t).unwrap(), Vec2::new(1.0, 0.0));
        }
        assert_eq!(s.to_bytes(), bytes);
    }

    #[test]
    fn single_frame_rejected() {
        let mut bytes = constant(1.0, 0.0).to_bytes();
        bytes[12..16].copy_from_slice(&1u32.to_le_bytes());
        match GridFieldSeries::from_bytes(&bytes) {
            Err(GridError::InvalidHeader { offset: 12, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_inputs_name_offsets() {
        let good = constant(1.0, 0.0).to_bytes();
        assert!(matches!(
            GridFieldSeries::from_bytes(b"UVG2"),
            Err(GridError::BadMagic)
        ));
        match GridFieldSeries::from_bytes(&good[..good.len() - 3]) {
            Err(GridError::Truncated { offset, .. }) => assert_eq!(offset, HEADER_LEN),
            other => panic!("unexpected {other:?}"),
        }
        let mut nan = good.clone();
        let o = HEADER_LEN + 4 * 5;
        nan[o..o + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        match GridFieldSeries::from_bytes(&nan) {
            Err(GridError::NonFinite { offset }) => assert_eq!(offset, o),
            other => panic!("unexpected {other:?}"),
        }
        let mut neg_dx = good.clone();
        neg_dx[32..40].copy_from_slice(&(-1.0f64).to_le_bytes());
        assert!(matches!(
            GridFieldSeries::from_bytes(&neg_dx),
            Err(GridError::InvalidHeader { offset: 32, .. })
        ));
        let mut long = good;
        long.push(0);
        assert!(matches!(
            GridFieldSeries::from_bytes(&long),
            Err(GridError::TrailingBytes { .. })
        ));
    }

    #[test]
    fn exact_at_nodes_and_linear_reproduction() {
        let s = GridFieldSeries::from_fn((6, 4, 3), (10.0, -5.0), (2.0, 3.0, 4.0), |x, y, t| {
            Vec2::new(x, 0.5 * y - 0.1 * t)
        })
        .unwrap();
        for k in 0..3 {
            for j in 0..4 {
                for i in 0..6 {
                    let p = Vec2::new(10.0 + 2.0 * i as f64, -5.0 + 3.0 * j as f64);
                    assert_eq!(s.sample(p, 4.0 * k as f64).unwrap(), s.node(i, j, k));
                }
            }
        }
        for (x, y, t) in [(10.3, -4.0, 0.2), (19.9, 3.7, 7.9), (15.0, 0.0, 4.0)] {
            let w = s.sample(Vec2::new(x, y), t).unwrap();
            assert!((w.x - x).abs() < 1e-5);
            assert!((w.y - (0.5 * y - 0.1 * t)).abs() < 1e-5);
        }
    }

    #[test]
    fn temporal_midpoint() {
        let mut u = vec![0.0f32; 8];
        u[4..].fill(2.0);
        let s =
            GridFieldSeries::new((2, 2, 2), (0.0, 0.0), (1.0, 1.0, 10.0), u, vec![0.0; 8]).unwrap();
        assert_eq!(s.sample(Vec2::new(0.5, 0.5), 5.0).unwrap().x, 1.0);
    }

    #[test]
    fn out_of_range_queries() {
        let s = constant(1.0, 1.0);
        assert!(matches!(
            s.sample(Vec2::new(1.01, 0.5), 0.0),
            Err(FlowError::OutOfDomain { .. })
        ));
        assert!(matches!(
            s.sample(Vec2::new(0.5, 0.5), 1.5),
            Err(FlowError::OutOfTime { .. })
        ));
        assert!(s.sample(Vec2::new(0.5, 0.5), -0.1).is_err());
    }

    #[test]
    fn refine_dimensions_and_nodes() {
        let s = GridFieldSeries::from_fn((5, 4, 3), (0.0, 0.0), (1.0, 1.0, 1.0), |x, y, t| {
            Vec2::new((x * 0.7).sin() + t, (y * 1.3).cos())
        })
        .unwrap();
        let r = s.refine(2).unwrap();
        assert_eq!((r.nx, r.ny, r.nt), (9, 7, 5));
        assert_eq!(r.extent(), s.extent());
        assert_eq!(r.duration(), s.duration());
        for k in 0..3 {
            for j in 0..4 {
                for i in 0..5 {
                    assert_eq!(r.node(2 * i, 2 * j, 2 * k), s.node(i, j, k));
                }
            }
        }
        let c = constant(0.5, -0.25).refine(3).unwrap();
        assert!(c.u.iter().all(|&x| x == 0.5) && c.v.iter().all(|&x| x == -0.25));
        assert!(s.refine(1).is_err());
    }

    #[test]
    fn refine_noaa_shape() {
        let s = GridFieldSeries::from_fn((50, 50, 504), (0.0, 0.0), (2.0, 2.0, 2.0), |_, _, _| {
            Vec2::new(0.1, 0.0)
        })
        .unwrap();
        let r = s.refine(2).unwrap();
        assert_eq!((r.nx, r.ny, r.nt), (99, 99, 1007));
        assert_eq!(r.extent(), s.extent());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn save_load_round_trip(
            nx in 2usize..6, ny in 2usize..6, nt in 2usize..5,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = nx * ny * nt;
            let u: Vec<f32> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let v: Vec<f32> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let s = GridFieldSeries::new((nx, ny, nt), (rng.gen(), rng.gen()), (0.5, 1.5, 2.0), u, v).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("s.uvg");
            s.save(&path).unwrap();
            let back = load_grid_series(&path).unwrap();
            prop_assert_eq!(&back, &s);
            prop_assert_eq!(back.to_bytes(), std::fs::read(&path).unwrap());
        }

        #[test]
        fn refinement_commutes_with_sampling(
            seed in any::<u64>(),
            fx in 0.0f64..1.0, fy in 0.0f64..1.0, ft in 0.0f64..1.0,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let s = GridFieldSeries::from_fn((5, 4, 4), (3.0, -2.0), (2.0, 1.5, 3.0), |_, _, _| {
                Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            }).unwrap();
            let r = s.refine(2).unwrap();
            let e = s.extent();
            let p = Vec2::new(e.x_min + fx * e.width(), e.y_min + fy * e.height());
            let t = ft * s.duration();
            let a = s.sample(p, t).unwrap();
            let b = r.sample(p, t).unwrap();
            prop_assert!((a - b).norm() < 1e-6, "{} vs {}", a, b);
            prop_assert!(b.norm() <= r.max_speed() + 1e-12);
        }
    }
}
