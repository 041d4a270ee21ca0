//! Voxel grids, label maps and the sampling primitives everything else is
//! built on.
//!
//! Index `(i, j, k)` addresses the voxel whose **center** sits at
//! `origin + (i, j, k) * spacing` (componentwise, millimetres). Storage is
//! x-fastest: `index = i + dims[0] * (j + dims[1] * k)`.

mod metaimage;

pub use metaimage::{load_image, load_labels, load_volume, save_labels, save_volume, Volume};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    data: Vec<f32>,
}

impl VoxelGrid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3], data: Vec<f32>) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::InvalidGrid(format!("dims must be >= 2 on every axis, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {spacing:?}")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidGrid(format!("origin must be finite, got {origin:?}")));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(Error::InvalidGrid(format!(
                "data length {} does not match dims {dims:?} ({expected})",
                data.len()
            )));
        }
        Ok(Self { dims, spacing, origin, data })
    }

    pub fn zeros(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(dims, spacing, origin, vec![0.0; n])
    }

    /// Fills a grid by evaluating `f` at every voxel center.
    pub fn from_fn(
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: [f64; 3],
        mut f: impl FnMut([f64; 3]) -> f32,
    ) -> Result<Self> {
        let mut grid = Self::zeros(dims, spacing, origin)?;
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let p = grid.point_of(i, j, k);
                    let idx = grid.index(i, j, k);
                    grid.data[idx] = f(p);
                }
            }
        }
        Ok(grid)
    }

    /// A grid with the same geometry and new data.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Self> {
        Self::new(self.dims, self.spacing, self.origin, data)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords_of(&self, index: usize) -> [usize; 3] {
        let i = index % self.dims[0];
        let rest = index / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[self.index(i, j, k)]
    }

    #[inline]
    pub fn point_of(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }

    /// Physical centers of the first and last voxel.
    pub fn extent(&self) -> ([f64; 3], [f64; 3]) {
        let lo = self.origin;
        let hi = self.point_of(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1);
        (lo, hi)
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let (lo, hi) = self.extent();
        (0..3).all(|a| p[a] >= lo[a] && p[a] <= hi[a])
    }

    pub fn same_geometry(&self, other: &VoxelGrid) -> bool {
        self.dims == other.dims && self.spacing == other.spacing && self.origin == other.origin
    }

    /// Trilinear interpolation of the voxel-center lattice at a physical
    /// point. Points outside the lattice clamp to the nearest edge.
    pub fn sample_trilinear(&self, p: [f64; 3]) -> f64 {
        let (base, t) = self.cell(p);
        self.interp(base, t)
    }

    /// Interpolated value and its exact spatial gradient (per mm). The
    /// gradient component is zero along axes where the point was clamped.
    pub fn sample_with_gradient(&self, p: [f64; 3]) -> (f64, [f64; 3]) {
        let mut base = [0usize; 3];
        let mut t = [0.0f64; 3];
        let mut inside = [true; 3];
        for a in 0..3 {
            let c = self.continuous_index(a, p[a]);
            let max = (self.dims[a] - 1) as f64;
            let cc = if c < 0.0 {
                inside[a] = false;
                0.0
            } else if c > max {
                inside[a] = false;
                max
            } else {
                c
            };
            let i0 = (cc.floor() as usize).min(self.dims[a] - 2);
            base[a] = i0;
            t[a] = cc - i0 as f64;
        }
        let v = self.corners(base);
        let [tx, ty, tz] = t;
        let lerp = |a: f64, b: f64, s: f64| a + (b - a) * s;
        // v index bits: x = 1, y = 2, z = 4
        let c00 = lerp(v[0], v[1], tx);
        let c10 = lerp(v[2], v[3], tx);
        let c01 = lerp(v[4], v[5], tx);
        let c11 = lerp(v[6], v[7], tx);
        let c0 = lerp(c00, c10, ty);
        let c1 = lerp(c01, c11, ty);
        let value = lerp(c0, c1, tz);

        let dx = {
            let d00 = v[1] - v[0];
            let d10 = v[3] - v[2];
            let d01 = v[5] - v[4];
            let d11 = v[7] - v[6];
            lerp(lerp(d00, d10, ty), lerp(d01, d11, ty), tz)
        };
        let dy = lerp(c10 - c00, c11 - c01, tz);
        let dz = c1 - c0;
        let mut grad = [
            dx / self.spacing[0],
            dy / self.spacing[1],
            dz / self.spacing[2],
        ];
        for a in 0..3 {
            if !inside[a] {
                grad[a] = 0.0;
            }
        }
        (value, grad)
    }

    /// Continuous index along `axis`, snapped to the nearest integer when
    /// within rounding distance so voxel centers sample exactly.
    #[inline]
    fn continuous_index(&self, axis: usize, x: f64) -> f64 {
        let c = (x - self.origin[axis]) / self.spacing[axis];
        let r = c.round();
        if (c - r).abs() <= 1e-9 {
            r
        } else {
            c
        }
    }

    fn cell(&self, p: [f64; 3]) -> ([usize; 3], [f64; 3]) {
        let mut base = [0usize; 3];
        let mut t = [0.0f64; 3];
        for a in 0..3 {
            let c = self.continuous_index(a, p[a]).clamp(0.0, (self.dims[a] - 1) as f64);
            let i0 = (c.floor() as usize).min(self.dims[a] - 2);
            base[a] = i0;
            t[a] = c - i0 as f64;
        }
        (base, t)
    }

    #[inline]
    fn corners(&self, base: [usize; 3]) -> [f64; 8] {
        let [i, j, k] = base;
        let sx = 1;
        let sy = self.dims[0];
        let sz = self.dims[0] * self.dims[1];
        let o = self.index(i, j, k);
        let d = &self.data;
        [
            d[o] as f64,
            d[o + sx] as f64,
            d[o + sy] as f64,
            d[o + sx + sy] as f64,
            d[o + sz] as f64,
            d[o + sx + sz] as f64,
            d[o + sy + sz] as f64,
            d[o + sx + sy + sz] as f64,
        ]
    }

    #[inline]
    fn interp(&self, base: [usize; 3], t: [f64; 3]) -> f64 {
        let v = self.corners(base);
        let [tx, ty, tz] = t;
        let lerp = |a: f64, b: f64, s: f64| a + (b - a) * s;
        let c00 = lerp(v[0], v[1], tx);
        let c10 = lerp(v[2], v[3], tx);
        let c01 = lerp(v[4], v[5], tx);
        let c11 = lerp(v[6], v[7], tx);
        lerp(lerp(c00, c10, ty), lerp(c01, c11, ty), tz)
    }

    /// Separable Gaussian filter with per-axis sigma in voxels, kernel
    /// truncated at 3 sigma, clamped (replicate) boundaries.
    pub fn gaussian_smooth(&self, sigma_voxels: [f64; 3]) -> VoxelGrid {
        let mut buf: Vec<f64> = self.data.iter().map(|&v| v as f64).collect();
        for axis in 0..3 {
            if sigma_voxels[axis] > 0.0 {
                buf = smooth_axis(&buf, self.dims, axis, sigma_voxels[axis]);
            }
        }
        VoxelGrid {
            dims: self.dims,
            spacing: self.spacing,
            origin: self.origin,
            data: buf.into_iter().map(|v| v as f32).collect(),
        }
    }

}

pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-0.5 * x * x / (sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

fn smooth_axis(src: &[f64], dims: [usize; 3], axis: usize, sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let n = dims[axis] as isize;
    let mut out = vec![0.0; src.len()];
    let mut line = vec![0.0; dims[axis]];
    for start in 0..src.len() {
        // visit each line once, from its first element
        let coord = (start / stride) % dims[axis];
        if coord != 0 {
            continue;
        }
        for (c, l) in line.iter_mut().enumerate() {
            *l = src[start + c * stride];
        }
        for c in 0..n {
            let mut acc = 0.0;
            for (ki, w) in kernel.iter().enumerate() {
                let src_c = (c + ki as isize - radius).clamp(0, n - 1) as usize;
                acc += w * line[src_c];
            }
            out[start + c as usize * stride] = acc;
        }
    }
    out
}

/// Label codes used throughout the pipeline.
pub const BACKGROUND: u8 = 0;
pub const WALL: u8 = 1;
pub const LUMEN: u8 = 2;

/// Voxel grid restricted to the codes {0 background, 1 wall, 2 lumen}.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    grid: VoxelGrid,
}

impl LabelMap {
    pub fn new(grid: VoxelGrid) -> Result<Self> {
        for (index, &v) in grid.data.iter().enumerate() {
            if !(v == 0.0 || v == 1.0 || v == 2.0) {
                return Err(Error::InvalidLabel { code: v, index });
            }
        }
        Ok(Self { grid })
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn into_grid(self) -> VoxelGrid {
        self.grid
    }

    #[inline]
    pub fn code(&self, index: usize) -> u8 {
        self.grid.data[index] as u8
    }

    pub fn count(&self, code: u8) -> usize {
        self.grid.data.iter().filter(|&&v| v as u8 == code).count()
    }

    /// 1.0 where the label is one of `codes`, 0.0 elsewhere.
    pub fn indicator(&self, codes: &[u8]) -> VoxelGrid {
        let data = self
            .grid
            .data
            .iter()
            .map(|&v| if codes.contains(&(v as u8)) { 1.0 } else { 0.0 })
            .collect();
        VoxelGrid {
            dims: self.grid.dims,
            spacing: self.grid.spacing,
            origin: self.grid.origin,
            data,
        }
    }

    /// True when a 6-connected flood fill of background voxels, seeded on
    /// the grid boundary, never touches a lumen voxel.
    pub fn lumen_enclosed(&self) -> bool {
        let [nx, ny, nz] = self.grid.dims;
        let g = &self.grid;
        let mut seen = vec![false; g.len()];
        let mut stack = Vec::new();
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let on_border = i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1;
                    let idx = g.index(i, j, k);
                    if on_border && self.code(idx) == BACKGROUND {
                        seen[idx] = true;
                        stack.push(idx);
                    }
                }
            }
        }
        while let Some(idx) = stack.pop() {
            let [i, j, k] = g.coords_of(idx);
            let mut neighbours = [usize::MAX; 6];
            if i > 0 {
                neighbours[0] = idx - 1;
            }
            if i + 1 < nx {
                neighbours[1] = idx + 1;
            }
            if j > 0 {
                neighbours[2] = idx - nx;
            }
            if j + 1 < ny {
                neighbours[3] = idx + nx;
            }
            if k > 0 {
                neighbours[4] = idx - nx * ny;
            }
            if k + 1 < nz {
                neighbours[5] = idx + nx * ny;
            }
            for n in neighbours.into_iter().filter(|&n| n != usize::MAX) {
                match self.code(n) {
                    LUMEN => return false,
                    BACKGROUND if !seen[n] => {
                        seen[n] = true;
                        stack.push(n);
                    }
                    _ => {}
                }
            }
        }
        true
    }
}
