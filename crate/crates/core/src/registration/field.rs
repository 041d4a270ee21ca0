use crate::error::{Error, Result};
use crate::volume::VoxelGrid;

/// Dense per-voxel displacement (mm) on the fixed image lattice. A fixed
/// point `x` corresponds to the moving point `x + u(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    vectors: Vec<[f64; 3]>,
}

impl DisplacementField {
    pub fn zeros_like(grid: &VoxelGrid) -> Self {
        Self {
            dims: grid.dims(),
            spacing: grid.spacing(),
            origin: grid.origin(),
            vectors: vec![[0.0; 3]; grid.len()],
        }
    }

    pub fn from_fn(grid: &VoxelGrid, mut f: impl FnMut([f64; 3]) -> [f64; 3]) -> Self {
        let mut field = Self::zeros_like(grid);
        for (idx, v) in field.vectors.iter_mut().enumerate() {
            let [i, j, k] = grid.coords_of(idx);
            *v = f(grid.point_of(i, j, k));
        }
        field
    }

    pub fn from_vectors(grid: &VoxelGrid, vectors: Vec<[f64; 3]>) -> Result<Self> {
        if vectors.len() != grid.len() {
            return Err(Error::GeometryMismatch(format!(
                "{} vectors for a grid of {} voxels",
                vectors.len(),
                grid.len()
            )));
        }
        if vectors.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("displacement components must be finite".into()));
        }
        Ok(Self {
            dims: grid.dims(),
            spacing: grid.spacing(),
            origin: grid.origin(),
            vectors,
        })
    }

    /// Builds a field from three scalar component volumes sharing geometry.
    pub fn from_components(components: &[VoxelGrid; 3]) -> Result<Self> {
        let [x, y, z] = components;
        if !x.same_geometry(y) || !x.same_geometry(z) {
            return Err(Error::GeometryMismatch("component volumes differ in geometry".into()));
        }
        let vectors = (0..x.len())
            .map(|i| [x.data()[i] as f64, y.data()[i] as f64, z.data()[i] as f64])
            .collect();
        Self::from_vectors(x, vectors)
    }

    /// Splits into three `f32` scalar volumes (x, y, z components).
    pub fn to_components(&self) -> [VoxelGrid; 3] {
        let make = |c: usize| {
            let data = self.vectors.iter().map(|v| v[c] as f32).collect();
            VoxelGrid::new(self.dims, self.spacing, self.origin, data).expect("field geometry is valid")
        };
        [make(0), make(1), make(2)]
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

    pub fn vectors(&self) -> &[[f64; 3]] {
        &self.vectors
    }

    pub fn vectors_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn matches(&self, grid: &VoxelGrid) -> bool {
        self.dims == grid.dims() && self.spacing == grid.spacing() && self.origin == grid.origin()
    }

    pub fn point_of(&self, index: usize) -> [f64; 3] {
        let i = index % self.dims[0];
        let rest = index / self.dims[0];
        let (j, k) = (rest % self.dims[1], rest / self.dims[1]);
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }

    /// Root-mean-square vector magnitude (mm).
    pub fn rms_magnitude(&self) -> f64 {
        let sum: f64 = self.vectors.iter().map(|v| v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sum();
        (sum / self.vectors.len() as f64).sqrt()
    }

    /// Trilinear interpolation of each component; out-of-extent points clamp
    /// to the nearest edge. The flag is `true` when clamping happened.
    pub fn sample(&self, p: [f64; 3]) -> ([f64; 3], bool) {
        let mut base = [0usize; 3];
        let mut t = [0.0; 3];
        let mut clamped = false;
        for a in 0..3 {
            let c = (p[a] - self.origin[a]) / self.spacing[a];
            let max = (self.dims[a] - 1) as f64;
            if c < 0.0 || c > max {
                clamped = true;
            }
            let c = c.clamp(0.0, max);
            let i0 = (c.floor() as usize).min(self.dims[a] - 2);
            base[a] = i0;
            t[a] = c - i0 as f64;
        }
        let sx = 1;
        let sy = self.dims[0];
        let sz = self.dims[0] * self.dims[1];
        let o = base[0] + self.dims[0] * (base[1] + self.dims[1] * base[2]);
        let idx = [o, o + sx, o + sy, o + sx + sy, o + sz, o + sx + sz, o + sy + sz, o + sx + sy + sz];
        let [tx, ty, tz] = t;
        let w = [
            (1.0 - tx) * (1.0 - ty) * (1.0 - tz),
            tx * (1.0 - ty) * (1.0 - tz),
            (1.0 - tx) * ty * (1.0 - tz),
            tx * ty * (1.0 - tz),
            (1.0 - tx) * (1.0 - ty) * tz,
            tx * (1.0 - ty) * tz,
            (1.0 - tx) * ty * tz,
            tx * ty * tz,
        ];
        let mut out = [0.0; 3];
        for (wi, &ii) in w.iter().zip(idx.iter()) {
            let v = self.vectors[ii];
            out[0] += wi * v[0];
            out[1] += wi * v[1];
            out[2] += wi * v[2];
        }
        (out, clamped)
    }

    /// Resamples onto another lattice (used between pyramid levels).
    pub(crate) fn resample_to(&self, target: &VoxelGrid) -> DisplacementField {
        DisplacementField::from_fn(target, |p| self.sample(p).0)
    }
}

/// `output(x) = moving(x + u(x))`, on the field's lattice.
pub fn warp(moving: &VoxelGrid, field: &DisplacementField) -> Result<VoxelGrid> {
    let data = field
        .vectors
        .iter()
        .enumerate()
        .map(|(idx, u)| {
            let p = field.point_of(idx);
            moving.sample_trilinear([p[0] + u[0], p[1] + u[1], p[2] + u[2]]) as f32
        })
        .collect();
    VoxelGrid::new(field.dims, field.spacing, field.origin, data)
}
