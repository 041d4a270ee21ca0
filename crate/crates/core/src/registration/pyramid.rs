use crate::volume::VoxelGrid;

/// Halves the resolution: Gaussian prefilter (sigma = 1 voxel), then
/// resampling at the centers of voxel pairs. Physical extent is preserved
/// up to half a fine voxel.
pub fn downsample(grid: &VoxelGrid) -> VoxelGrid {
    let smooth = grid.gaussian_smooth([1.0, 1.0, 1.0]);
    let dims = grid.dims();
    let spacing = grid.spacing();
    let origin = grid.origin();
    let mut new_dims = [0usize; 3];
    let mut new_spacing = [0.0; 3];
    let mut new_origin = [0.0; 3];
    for a in 0..3 {
        new_dims[a] = (dims[a] / 2).max(2);
        new_spacing[a] = spacing[a] * 2.0;
        new_origin[a] = origin[a] + 0.5 * spacing[a];
    }
    VoxelGrid::from_fn(new_dims, new_spacing, new_origin, |p| smooth.sample_trilinear(p) as f32)
        .expect("downsampled geometry is valid")
}

pub(crate) fn build(grid: &VoxelGrid, levels: usize) -> Vec<VoxelGrid> {
    let mut out = vec![grid.clone()];
    for _ in 1..levels {
        let last = out.last().unwrap();
        if last.dims().iter().any(|&d| d < 8) {
            break;
        }
        out.push(downsample(last));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_constant_and_extent() {
        let g = VoxelGrid::new([16, 12, 10], [0.5, 0.5, 1.0], [1.0, 2.0, 3.0], vec![4.0; 1920]).unwrap();
        let d = downsample(&g);
        assert_eq!(d.dims(), [8, 6, 5]);
        assert_eq!(d.spacing(), [1.0, 1.0, 2.0]);
        assert!(d.data().iter().all(|&v| (v - 4.0).abs() < 1e-5));
        let (lo, hi) = g.extent();
        let (dlo, dhi) = d.extent();
        for a in 0..3 {
            assert!((dlo[a] - lo[a]).abs() <= g.spacing()[a]);
            assert!((dhi[a] - hi[a]).abs() <= g.spacing()[a]);
        }
    }
}
