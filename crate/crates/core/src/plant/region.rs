//! Open output-space regions of interest and their Euclidean jump balls.
//!
//! A region is an intersection of blocks `‖y[idx] − c‖_n < r` over subsets
//! of the output coordinates; coordinates not named by any block are
//! unconstrained.

use std::fmt;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::automaton::ObsId;
use crate::plant::PlantError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "inf")]
    Inf,
}

impl Norm {
    pub fn eval(self, v: impl IntoIterator<Item = f64>) -> f64 {
        let it = v.into_iter();
        match self {
            Norm::One => it.map(f64::abs).sum(),
            Norm::Two => it.map(|x| x * x).sum::<f64>().sqrt(),
            Norm::Inf => it.map(f64::abs).fold(0.0, f64::max),
        }
    }

    /// `max ‖u‖_n / ‖u‖_2` over nonzero `u` in dimension `k`.
    pub fn over_euclidean(self, k: usize) -> f64 {
        match self {
            Norm::One => (k as f64).sqrt(),
            Norm::Two | Norm::Inf => 1.0,
        }
    }

    /// `max ‖u‖_2 / ‖u‖_n` over nonzero `u` in dimension `k`.
    pub fn euclidean_over(self, k: usize) -> f64 {
        match self {
            Norm::Inf => (k as f64).sqrt(),
            Norm::One | Norm::Two => 1.0,
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::One => "1",
            Norm::Two => "2",
            Norm::Inf => "inf",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionBlock {
    pub outputs: Vec<usize>,
    pub center: Vec<f64>,
    pub norm: Norm,
    pub radius: f64,
}

impl RegionBlock {
    /// `‖y[idx] − c‖_n`.
    pub fn distance(&self, y: &DVector<f64>) -> f64 {
        self.norm
            .eval(self.outputs.iter().zip(&self.center).map(|(&i, &c)| y[i] - c))
    }

    pub fn contains(&self, y: &DVector<f64>) -> bool {
        self.distance(y) < self.radius
    }

    /// Largest Euclidean radius of a ball around `y` inside this block.
    pub fn inscribed_radius(&self, y: &DVector<f64>) -> f64 {
        (self.radius - self.distance(y)) / self.norm.over_euclidean(self.outputs.len())
    }

    /// Uniform-ish point of the open block by rejection from its bounding cube.
    fn sample<R: Rng>(&self, rng: &mut R) -> Option<Vec<f64>> {
        for _ in 0..1000 {
            let u: Vec<f64> = self
                .center
                .iter()
                .map(|&c| c + self.radius * rng.random_range(-1.0..1.0))
                .collect();
            let d = self.norm.eval(u.iter().zip(&self.center).map(|(a, b)| a - b));
            if d < self.radius {
                return Some(u);
            }
        }
        None
    }
}

/// Region `Y_o` with its jump ball `𝔹(y_o, ρ_o)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub observation: ObsId,
    pub blocks: Vec<RegionBlock>,
    pub jump_center: DVector<f64>,
    pub jump_radius: f64,
}

impl Region {
    /// Validates the blocks against the output dimension `p`, defaults the
    /// jump center to the block centers (zero elsewhere) and the jump radius
    /// to `margin` times the inscribed radius.
    pub fn new(
        observation: ObsId,
        blocks: Vec<RegionBlock>,
        p: usize,
        jump_center: Option<DVector<f64>>,
        jump_radius: Option<f64>,
        margin: f64,
    ) -> Result<Self, PlantError> {
        let bad = |msg: String| PlantError::InvalidRegion { observation, message: msg };
        if blocks.is_empty() {
            return Err(bad("region has no blocks".into()));
        }
        for b in &blocks {
            if b.outputs.is_empty() || b.outputs.len() != b.center.len() {
                return Err(bad("block outputs and center differ in length".into()));
            }
            if let Some(&i) = b.outputs.iter().find(|&&i| i >= p) {
                return Err(bad(format!("output index {i} out of range (p = {p})")));
            }
            if !(b.radius > 0.0 && b.radius.is_finite()) {
                return Err(bad(format!("block radius {} must be positive", b.radius)));
            }
        }
        let center = jump_center.unwrap_or_else(|| {
            let mut y = DVector::zeros(p);
            for b in &blocks {
                for (&i, &c) in b.outputs.iter().zip(&b.center) {
                    y[i] = c;
                }
            }
            y
        });
        if center.len() != p {
            return Err(bad(format!("jump center has length {}, expected {p}", center.len())));
        }
        let mut region = Self { observation, blocks, jump_center: center, jump_radius: 0.0 };
        let rho_max = region.inscribed_jump_radius(&region.jump_center)?;
        region.jump_radius = match jump_radius {
            None => margin * rho_max,
            Some(rho) if rho > 0.0 && rho < rho_max => rho,
            Some(rho) => {
                return Err(PlantError::JumpBallNotContained { observation, rho, rho_max });
            }
        };
        Ok(region)
    }

    /// Open-region membership `y ∈ Y_o`.
    pub fn contains(&self, y: &DVector<f64>) -> bool {
        self.blocks.iter().all(|b| b.contains(y))
    }

    /// Supremum of Euclidean radii `ρ` with `𝔹(y, ρ) ⊂ Y_o`: the per-block
    /// minimum of `(r − ‖y − c‖_n) / κ_n`. Errors unless `y ∈ Y_o`.
    pub fn inscribed_jump_radius(&self, y: &DVector<f64>) -> Result<f64, PlantError> {
        if !self.contains(y) {
            return Err(PlantError::CenterOutsideRegion { observation: self.observation });
        }
        Ok(self
            .blocks
            .iter()
            .map(|b| b.inscribed_radius(y))
            .fold(f64::INFINITY, f64::min))
    }

    /// `‖y − y_o‖₂ − ρ_o`: negative strictly inside the jump ball.
    pub fn jump_gap(&self, y: &DVector<f64>) -> f64 {
        (y - &self.jump_center).norm() - self.jump_radius
    }

    /// A point of `Y_o`, taking unconstrained coordinates from `fill`.
    pub fn sample<R: Rng>(&self, fill: &DVector<f64>, rng: &mut R) -> Option<DVector<f64>> {
        let mut y = fill.clone();
        for b in &self.blocks {
            let u = b.sample(rng)?;
            for (&i, v) in b.outputs.iter().zip(u) {
                y[i] = v;
            }
        }
        self.contains(&y).then_some(y)
    }
}

/// How a pair of regions was shown disjoint, or why it could not be.
#[derive(Debug, Clone, PartialEq)]
pub enum Disjointness {
    /// Blocks over identical coordinates whose centers are farther apart
    /// than their bounding radii in the named norm.
    Certified { block_a: usize, block_b: usize, norm: Norm },
    /// A point lying in both regions.
    Overlapping { witness: DVector<f64> },
    /// No certificate and no shared point found by sampling.
    Unverified,
}

/// Sufficient certificate for `Y_a ∩ Y_b = ∅`, with random-sampling
/// falsification as the fallback diagnostic.
pub fn check_disjoint<R: Rng>(a: &Region, b: &Region, samples: usize, rng: &mut R) -> Disjointness {
    for (ia, ba) in a.blocks.iter().enumerate() {
        for (ib, bb) in b.blocks.iter().enumerate() {
            if ba.outputs != bb.outputs {
                continue;
            }
            let k = ba.outputs.len();
            let diff = || ba.center.iter().zip(&bb.center).map(|(x, y)| x - y);
            // Every p-norm ball of radius r sits inside the ∞-ball of radius r.
            if Norm::Inf.eval(diff()) >= ba.radius + bb.radius {
                return Disjointness::Certified { block_a: ia, block_b: ib, norm: Norm::Inf };
            }
            let ra = ba.radius * ba.norm.euclidean_over(k);
            let rb = bb.radius * bb.norm.euclidean_over(k);
            if Norm::Two.eval(diff()) >= ra + rb {
                return Disjointness::Certified { block_a: ia, block_b: ib, norm: Norm::Two };
            }
        }
    }
    for _ in 0..samples {
        if let Some(y) = a.sample(&b.jump_center, rng) {
            if b.contains(&y) {
                return Disjointness::Overlapping { witness: y };
            }
        }
    }
    Disjointness::Unverified
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn block(norm: Norm, r: f64, center: [f64; 2]) -> RegionBlock {
        RegionBlock { outputs: vec![0, 1], center: center.to_vec(), norm, radius: r }
    }

    fn region(norm: Norm, r: f64, center: [f64; 2]) -> Region {
        Region::new(1, vec![block(norm, r, center)], 2, None, None, 0.9).unwrap()
    }

    #[test]
    fn inscribed_radius_per_norm() {
        let c = DVector::from_vec(vec![0.0, 0.0]);
        assert!((region(Norm::Two, 0.3, [0.0, 0.0]).jump_radius - 0.27).abs() < 1e-15);
        let r = region(Norm::Inf, 0.2, [0.0, 0.0]);
        assert!((r.inscribed_jump_radius(&c).unwrap() - 0.2).abs() < 1e-15);
        let r = region(Norm::One, 0.1, [0.0, 0.0]);
        let expect = 0.1 / 2f64.sqrt();
        assert!((r.inscribed_jump_radius(&c).unwrap() - expect).abs() < 1e-15);
        assert!((expect - 0.0707).abs() < 1e-4);
    }

    #[test]
    fn offset_center_shrinks_radius() {
        let r = region(Norm::Two, 0.3, [0.0, 0.0]);
        let y = DVector::from_vec(vec![0.1, 0.0]);
        assert!((r.inscribed_jump_radius(&y).unwrap() - 0.2).abs() < 1e-15);
        let outside = DVector::from_vec(vec![0.3, 0.0]);
        assert!(matches!(
            r.inscribed_jump_radius(&outside),
            Err(PlantError::CenterOutsideRegion { .. })
        ));
    }

    #[test]
    fn user_radius_must_fit() {
        let b = vec![block(Norm::One, 0.1, [0.0, 0.0])];
        let err = Region::new(1, b.clone(), 2, None, Some(0.09), 0.9).unwrap_err();
        assert!(matches!(err, PlantError::JumpBallNotContained { .. }));
        assert!(Region::new(1, b, 2, None, Some(0.07), 0.9).is_ok());
    }

    #[test]
    fn boundary_is_outside_open_region() {
        let r = region(Norm::One, 0.1, [0.0, 0.0]);
        assert!(!r.contains(&DVector::from_vec(vec![0.05, 0.05])));
        assert!(r.contains(&DVector::from_vec(vec![0.05, 0.049])));
        let r = region(Norm::Inf, 0.25, [1.0, 1.0]);
        assert!(!r.contains(&DVector::from_vec(vec![1.25, 1.0])));
        assert!(r.contains(&DVector::from_vec(vec![1.2, 1.0])));
    }

    #[test]
    fn disjointness_certificates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = region(Norm::Inf, 0.2, [0.0, 0.0]);
        let b = region(Norm::Two, 0.3, [0.55, 0.0]);
        assert!(matches!(check_disjoint(&a, &b, 100, &mut rng), Disjointness::Certified { .. }));
        let c = region(Norm::Two, 0.3, [0.3, 0.0]);
        assert!(matches!(check_disjoint(&a, &c, 10_000, &mut rng), Disjointness::Overlapping { .. }));
    }
}
