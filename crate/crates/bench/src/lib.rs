//! Fixtures shared by the benchmarks.

use pcfpr_core::cloud::{Candidate, CloudPoint, PointCloud};
use pcfpr_core::phantom::{detector_stub, gen_phantom, DetectorStubConfig, PhantomConfig};
use pcfpr_core::rng::seeded;
use pcfpr_core::Volume;
use rand::Rng;

/// A default phantom with its detector candidates.
pub fn phantom_scene(seed: u64) -> (Volume, Vec<Candidate>) {
    let ph = gen_phantom(&PhantomConfig::default(), &mut seeded(seed)).expect("default phantom fits");
    let cands = detector_stub("bench", &ph.volume, &ph.truths, &DetectorStubConfig::default(), &mut seeded(seed))
        .expect("default stub config is valid");
    (ph.volume, cands)
}

/// `n` random points in a 20 mm cube with every eighth point on the mask.
pub fn random_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = seeded(seed);
    let points = (0..n)
        .map(|i| CloudPoint {
            x: rng.random_range(-10.0..10.0),
            y: rng.random_range(-10.0..10.0),
            z: rng.random_range(-10.0..10.0),
            hu: rng.random_range(-1.0..1.0),
            p: 0.5,
            is_mask: i % 8 == 0,
        })
        .collect();
    PointCloud::new(points, "bench", 4.0).expect("n > 0")
}
