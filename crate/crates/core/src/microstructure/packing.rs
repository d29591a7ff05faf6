//! Monodisperse hard-sphere packs in the periodic unit cube.
//!
//! Random sequential addition places spheres until insertion stalls; the pack
//! is then shaken with hard-core Monte-Carlo displacement sweeps and
//! insertion resumes. The random stream is a ChaCha8 generator seeded from
//! the user seed, drawn in a fixed order, so a seed reproduces the same pack
//! on every platform.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::wrap_delta;
use crate::error::{Error, Result};

/// Consecutive failed insertions before a relaxation sweep.
const STALL_LIMIT: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PackingParams {
    pub count: usize,
    pub radius: f64,
    /// Minimal surface-to-surface gap.
    pub gap: f64,
    pub seed: u64,
    /// Total budget of insertion attempts plus displacement moves.
    pub max_steps: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpherePack {
    centers: Vec<[f64; 3]>,
    radius: f64,
    gap: f64,
    seed: u64,
}

impl SpherePack {
    /// Validates a pack given explicitly.
    pub fn from_centers(centers: Vec<[f64; 3]>, radius: f64, gap: f64, seed: u64) -> Result<Self> {
        if !(radius > 0.0 && radius < 0.5) || !(gap >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "radius {radius} / gap {gap} out of range"
            )));
        }
        if centers.iter().flatten().any(|&x| !(0.0..1.0).contains(&x)) {
            return Err(Error::InvalidArgument(
                "sphere center outside [0,1)^3".into(),
            ));
        }
        let pack = SpherePack {
            centers,
            radius,
            gap,
            seed,
        };
        let min = 2.0 * radius + gap;
        for (i, a) in pack.centers.iter().enumerate() {
            for b in &pack.centers[i + 1..] {
                if periodic_distance(a, b) < min {
                    return Err(Error::InvalidArgument("overlapping spheres".into()));
                }
            }
        }
        Ok(pack)
    }

    pub fn centers(&self) -> &[[f64; 3]] {
        &self.centers
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn gap(&self) -> f64 {
        self.gap
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Analytic volume fraction `n (4/3) pi r^3`.
    pub fn volume_fraction(&self) -> f64 {
        self.centers.len() as f64 * 4.0 / 3.0 * PI * self.radius.powi(3)
    }

    /// Smallest periodic center distance, `None` with fewer than two spheres.
    pub fn min_distance(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for (i, a) in self.centers.iter().enumerate() {
            for b in &self.centers[i + 1..] {
                let d = periodic_distance(a, b);
                best = Some(best.map_or(d, |x| x.min(d)));
            }
        }
        best
    }

    /// Plain-text table: `#`-prefixed `key=value` metadata, then `x y z` rows.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# lippmann sphere pack");
        let _ = writeln!(s, "# radius={:e}", self.radius);
        let _ = writeln!(s, "# gap={:e}", self.gap);
        let _ = writeln!(s, "# seed={}", self.seed);
        let _ = writeln!(s, "# count={}", self.centers.len());
        for c in &self.centers {
            let _ = writeln!(s, "{:.17e} {:.17e} {:.17e}", c[0], c[1], c[2]);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (mut radius, mut gap, mut seed, mut count) = (None, 0.0, 0u64, None);
        let mut centers = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.trim().split_once('=') {
                    let bad =
                        || Error::Format(format!("pack line {}: bad value for {k}", lineno + 1));
                    let v = v.trim();
                    match k.trim() {
                        "radius" => radius = Some(v.parse::<f64>().map_err(|_| bad())?),
                        "gap" => gap = v.parse::<f64>().map_err(|_| bad())?,
                        "seed" => seed = v.parse::<u64>().map_err(|_| bad())?,
                        "count" => count = Some(v.parse::<usize>().map_err(|_| bad())?),
                        _ => {}
                    }
                }
                continue;
            }
            let xs: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| {
                    Error::Format(format!("pack line {}: expected three numbers", lineno + 1))
                })?;
            if xs.len() != 3 {
                return Err(Error::Format(format!(
                    "pack line {}: expected three numbers",
                    lineno + 1
                )));
            }
            centers.push([xs[0], xs[1], xs[2]]);
        }
        let radius = radius.ok_or_else(|| Error::Format("pack file missing radius".into()))?;
        if let Some(c) = count {
            if c != centers.len() {
                return Err(Error::Format(format!(
                    "pack declares {c} spheres, found {}",
                    centers.len()
                )));
            }
        }
        Self::from_centers(centers, radius, gap, seed)
    }
}

/// Minimum-image distance in the unit cube.
pub fn periodic_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3)
        .map(|i| wrap_delta(a[i] - b[i]).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn overlaps(centers: &[[f64; 3]], p: &[f64; 3], skip: Option<usize>, min2: f64) -> bool {
    centers.iter().enumerate().any(|(i, c)| {
        Some(i) != skip && (0..3).map(|a| wrap_delta(p[a] - c[a]).powi(2)).sum::<f64>() < min2
    })
}

/// Places `count` non-overlapping spheres; see the module docs.
pub fn generate_hard_spheres(params: &PackingParams) -> Result<SpherePack> {
    let PackingParams {
        count,
        radius,
        gap,
        seed,
        max_steps,
    } = *params;
    if !(radius > 0.0 && radius < 0.5) {
        return Err(Error::InfeasiblePacking(format!(
            "radius {radius} must lie in (0, 0.5)"
        )));
    }
    if !(gap >= 0.0) {
        return Err(Error::InfeasiblePacking(format!(
            "gap {gap} must be non-negative"
        )));
    }
    let fraction = count as f64 * 4.0 / 3.0 * PI * radius.powi(3);
    if fraction >= 0.5 {
        return Err(Error::InfeasiblePacking(format!(
            "volume fraction {fraction:.3} of {count} spheres of radius {radius} is not below 0.5"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let min = 2.0 * radius + gap;
    let min2 = min * min;
    let mut centers: Vec<[f64; 3]> = Vec::with_capacity(count);
    let mut steps = 0u64;
    let mut fails = 0usize;
    let step = 0.5 * radius;
    while centers.len() < count {
        if steps >= max_steps {
            return Err(Error::PackingBudget {
                achieved: centers.len(),
                requested: count,
            });
        }
        if fails >= STALL_LIMIT {
            for _ in 0..centers.len() {
                if steps >= max_steps {
                    break;
                }
                steps += 1;
                let i = rng.gen_range(0..centers.len());
                let mut p = centers[i];
                for x in p.iter_mut() {
                    *x = (*x + rng.gen_range(-step..step)).rem_euclid(1.0);
                    if *x >= 1.0 {
                        *x = 0.0;
                    }
                }
                if !overlaps(&centers, &p, Some(i), min2) {
                    centers[i] = p;
                }
            }
            fails = 0;
            continue;
        }
        steps += 1;
        let p = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
        if overlaps(&centers, &p, None, min2) {
            fails += 1;
        } else {
            centers.push(p);
            fails = 0;
        }
    }
    Ok(SpherePack {
        centers,
        radius,
        gap,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sphere() {
        let p = PackingParams {
            count: 1,
            radius: 0.1,
            gap: 0.0,
            seed: 7,
            max_steps: 10,
        };
        let pack = generate_hard_spheres(&p).unwrap();
        assert_eq!(pack.centers().len(), 1);
        assert!(pack.min_distance().is_none());
    }

    #[test]
    fn infeasible_request_rejected() {
        let p = PackingParams {
            count: 2,
            radius: 0.4,
            gap: 0.0,
            seed: 0,
            max_steps: 1000,
        };
        assert!(matches!(
            generate_hard_spheres(&p),
            Err(Error::InfeasiblePacking(_))
        ));
    }

    #[test]
    fn budget_exhaustion_reports_count() {
        let p = PackingParams {
            count: 200,
            radius: 0.07,
            gap: 0.0,
            seed: 3,
            max_steps: 50,
        };
        match generate_hard_spheres(&p) {
            Err(Error::PackingBudget {
                achieved,
                requested,
            }) => {
                assert!(achieved <= 50);
                assert_eq!(requested, 200);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn deterministic_and_non_overlapping() {
        let p = PackingParams {
            count: 60,
            radius: 0.08,
            gap: 0.01,
            seed: 11,
            max_steps: 5_000_000,
        };
        let a = generate_hard_spheres(&p).unwrap();
        let b = generate_hard_spheres(&p).unwrap();
        assert_eq!(a, b);
        assert!(a.min_distance().unwrap() >= 2.0 * 0.08 + 0.01);
    }

    #[test]
    fn text_roundtrip() {
        let p = PackingParams {
            count: 5,
            radius: 0.05,
            gap: 0.0,
            seed: 1,
            max_steps: 1000,
        };
        let pack = generate_hard_spheres(&p).unwrap();
        let back = SpherePack::from_text(&pack.to_text()).unwrap();
        assert_eq!(pack, back);
    }
}
