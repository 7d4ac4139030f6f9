//! Regular space-time lattice with an optional boundary buffer.
//!
//! Spatial nodes sit at cell centres, time nodes at `t0 + j·dt`. Node
//! indices are time-major: `t·G + iy·NX + ix` with `NX = nx + 2·buffer`
//! and `G = NX·NY`. Spatial indices `ix`, `iy` used by this module always
//! refer to the buffered grid unless a method says otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest buffer chosen automatically.
pub const MAX_AUTO_BUFFER: usize = 8;

/// Domain extents: `[x0, x1] × [y0, y1]` and time span `[t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extents {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub t: (f64, f64),
}

impl Extents {
    pub fn unit_square(nt: usize) -> Self {
        Self {
            x: (0.0, 1.0),
            y: (0.0, 1.0),
            t: (0.0, nt as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
    pub t0: f64,
    pub dt: f64,
    pub buffer: usize,
}

impl LatticeSpec {
    pub fn build(nx: usize, ny: usize, nt: usize, extents: Extents, buffer: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || nt == 0 {
            return Err(Error::InvalidExtent(format!(
                "node counts must be positive, got {nx}×{ny}×{nt}"
            )));
        }
        let w = extents.x.1 - extents.x.0;
        let h = extents.y.1 - extents.y.0;
        let span = extents.t.1 - extents.t.0;
        if !(w > 0.0 && h > 0.0 && span > 0.0)
            || !(w.is_finite() && h.is_finite() && span.is_finite())
        {
            return Err(Error::InvalidExtent(format!(
                "extents must be finite and increasing, got width {w}, height {h}, span {span}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            nt,
            x0: extents.x.0,
            y0: extents.y.0,
            dx: w / nx as f64,
            dy: h / ny as f64,
            t0: extents.t.0,
            dt: span / nt as f64,
            buffer,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nt == 0 {
            return Err(Error::InvalidExtent("node counts must be positive".into()));
        }
        if !(self.dx > 0.0 && self.dy > 0.0 && self.dt > 0.0) {
            return Err(Error::InvalidExtent("spacings must be positive".into()));
        }
        Ok(())
    }

    /// Buffer of `ceil(range / dx)` cells, capped at [`MAX_AUTO_BUFFER`].
    pub fn auto_buffer(range_s: f64, dx: f64) -> usize {
        ((range_s / dx).ceil().max(0.0) as usize).min(MAX_AUTO_BUFFER)
    }

    pub fn with_buffer(mut self, buffer: usize) -> Self {
        self.buffer = buffer;
        self
    }

    pub fn full_nx(&self) -> usize {
        self.nx + 2 * self.buffer
    }

    pub fn full_ny(&self) -> usize {
        self.ny + 2 * self.buffer
    }

    /// Spatial nodes per time slice, buffer included.
    pub fn n_space(&self) -> usize {
        self.full_nx() * self.full_ny()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_space() * self.nt
    }

    pub fn n_interior(&self) -> usize {
        self.nx * self.ny * self.nt
    }

    pub fn width(&self) -> f64 {
        self.dx * self.nx as f64
    }

    pub fn height(&self) -> f64 {
        self.dy * self.ny as f64
    }

    pub fn span(&self) -> f64 {
        self.dt * self.nt as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn index(&self, ix: usize, iy: usize, it: usize) -> usize {
        it * self.n_space() + iy * self.full_nx() + ix
    }

    pub fn unravel(&self, index: usize) -> Result<(usize, usize, usize)> {
        if index >= self.n_nodes() {
            return Err(Error::IndexOutOfRange {
                index,
                len: self.n_nodes(),
            });
        }
        let g = self.n_space();
        let (it, s) = (index / g, index % g);
        Ok((s % self.full_nx(), s / self.full_nx(), it))
    }

    /// Index of an interior node given window-relative coordinates.
    pub fn interior_index(&self, ix: usize, iy: usize, it: usize) -> usize {
        self.index(ix + self.buffer, iy + self.buffer, it)
    }

    pub fn is_interior(&self, index: usize) -> bool {
        match self.unravel(index) {
            Ok((ix, iy, _)) => {
                let b = self.buffer;
                ix >= b && ix < b + self.nx && iy >= b && iy < b + self.ny
            }
            Err(_) => false,
        }
    }

    /// Interior node indices in interior time-major order.
    pub fn interior_nodes(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n_interior());
        for it in 0..self.nt {
            for iy in 0..self.ny {
                for ix in 0..self.nx {
                    out.push(self.interior_index(ix, iy, it));
                }
            }
        }
        out
    }

    pub fn x_coord(&self, ix: usize) -> f64 {
        self.x0 + (ix as f64 - self.buffer as f64 + 0.5) * self.dx
    }

    pub fn y_coord(&self, iy: usize) -> f64 {
        self.y0 + (iy as f64 - self.buffer as f64 + 0.5) * self.dy
    }

    pub fn t_coord(&self, it: usize) -> f64 {
        self.t0 + it as f64 * self.dt
    }

    /// Cell-centre coordinates of a node.
    pub fn node_coords(&self, index: usize) -> Result<(f64, f64, f64)> {
        let (ix, iy, it) = self.unravel(index)?;
        Ok((self.x_coord(ix), self.y_coord(iy), self.t_coord(it)))
    }

    /// Inverse of [`node_coords`](Self::node_coords): the node whose cell contains `(x, y)` at time `t`.
    pub fn node_at(&self, x: f64, y: f64, t: f64) -> Result<usize> {
        let fx = ((x - self.x0) / self.dx + self.buffer as f64).floor();
        let fy = ((y - self.y0) / self.dy + self.buffer as f64).floor();
        let ft = ((t - self.t0) / self.dt).round();
        let ok = |v: f64, n: usize| v >= 0.0 && v < n as f64;
        if !(ok(fx, self.full_nx()) && ok(fy, self.full_ny()) && ok(ft, self.nt)) {
            return Err(Error::InvalidParameter(format!(
                "point ({x}, {y}, {t}) lies outside the lattice"
            )));
        }
        Ok(self.index(fx as usize, fy as usize, ft as usize))
    }

    /// Grid index of the spatial node nearest the window centre.
    pub fn mid_space_node(&self) -> usize {
        (self.buffer + self.ny / 2) * self.full_nx() + self.buffer + self.nx / 2
    }
}

/// Values on every node of a lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub spec: LatticeSpec,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(spec: LatticeSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.n_nodes() {
            return Err(Error::DimensionMismatch {
                expected: spec.n_nodes(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite field value at node {i}"
            )));
        }
        Ok(Self { spec, values })
    }

    pub fn constant(spec: LatticeSpec, c: f64) -> Self {
        Self {
            values: vec![c; spec.n_nodes()],
            spec,
        }
    }

    /// Drop buffer nodes, giving a field on the unbuffered lattice.
    pub fn crop_interior(&self) -> Field {
        let values = self
            .spec
            .interior_nodes()
            .into_iter()
            .map(|i| self.values[i])
            .collect();
        Field {
            spec: self.spec.with_buffer(0),
            values,
        }
    }

    /// Place an unbuffered field into a buffered lattice, filling the buffer with `fill`.
    pub fn embed(&self, buffer: usize, fill: f64) -> Result<Field> {
        if self.spec.buffer != 0 {
            return Err(Error::InvalidParameter(
                "embed expects an unbuffered field".into(),
            ));
        }
        let spec = self.spec.with_buffer(buffer);
        let mut values = vec![fill; spec.n_nodes()];
        for (k, i) in spec.interior_nodes().into_iter().enumerate() {
            values[i] = self.values[k];
        }
        Ok(Field { spec, values })
    }
}
