//! Synthetic pixel tables: two Gaussian blobs in band space, laid out in
//! patches like a real scene export.

use rand_distr::{Distribution, Normal};

use crate::data::PixelRecord;
use crate::seed;

/// Shape of a generated scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobScene {
    /// Patches with full fill and 50% cloud; all pass the default filter.
    pub balanced_patches: usize,
    pub pixels_per_patch: usize,
    /// Also add one patch with scene margins and one mostly-cloudy patch,
    /// both rejected by the default filter.
    pub with_rejects: bool,
    /// Mean band intensities of clear and cloud pixels.
    pub clear_mean: [f64; 4],
    pub cloud_mean: [f64; 4],
    /// Per-band standard deviation.
    pub spread: f64,
    pub seed: u64,
}

impl Default for BlobScene {
    fn default() -> Self {
        Self {
            balanced_patches: 10,
            pixels_per_patch: 120,
            with_rejects: true,
            clear_mean: [1400.0, 1250.0, 1100.0, 2300.0],
            cloud_mean: [3600.0, 3500.0, 3550.0, 3900.0],
            spread: 300.0,
            seed: 2023,
        }
    }
}

impl BlobScene {
    /// The small scene bundled for quick CLI runs: 2 patches, 200 pixels.
    pub fn tiny() -> Self {
        Self {
            balanced_patches: 2,
            pixels_per_patch: 100,
            with_rejects: false,
            seed: 7,
            ..Self::default()
        }
    }

    pub fn generate(&self) -> Vec<PixelRecord> {
        let mut rng = seed::rng(self.seed);
        let noise = Normal::new(0.0, self.spread).expect("finite spread");
        let mut draw = |label: i8, margin: bool, patch: &str| -> PixelRecord {
            if margin {
                return PixelRecord {
                    patch_id: patch.to_string(),
                    blue: 0.0,
                    green: 0.0,
                    red: 0.0,
                    nir: 0.0,
                    label: -1,
                    is_margin: true,
                };
            }
            let mean = if label > 0 {
                self.cloud_mean
            } else {
                self.clear_mean
            };
            let mut v = [0.0; 4];
            for (b, m) in v.iter_mut().zip(mean) {
                *b = (m + noise.sample(&mut rng)).max(0.0).round();
            }
            PixelRecord {
                patch_id: patch.to_string(),
                blue: v[0],
                green: v[1],
                red: v[2],
                nir: v[3],
                label,
                is_margin: false,
            }
        };
        let mut out = Vec::new();
        let n = self.pixels_per_patch;
        for p in 0..self.balanced_patches {
            let id = format!("patch_{p:03}");
            for i in 0..n {
                out.push(draw(if i < n / 2 { 1 } else { -1 }, false, &id));
            }
        }
        if self.with_rejects {
            for i in 0..n {
                // A quarter of the patch is scene margin.
                out.push(draw(
                    if i % 2 == 0 { 1 } else { -1 },
                    i < n / 4,
                    "edge_patch",
                ));
            }
            for i in 0..n {
                out.push(draw(
                    if i < n * 9 / 10 { 1 } else { -1 },
                    false,
                    "overcast_patch",
                ));
            }
        }
        out
    }
}
