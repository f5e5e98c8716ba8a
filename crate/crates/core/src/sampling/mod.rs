//! Collocation point sets and adaptive resampling of the movable subset.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Domain, PdeModel};
use crate::points::PointSet;

/// How the movable points are redistributed between rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    /// Points never move.
    Static,
    /// Density proportional to `|r|^k`.
    Residual,
    /// Density proportional to `(1 + ‖∇U‖²)^{k/2}`.
    Monitor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub k: f64,
    pub candidate_pool_size: usize,
    pub density: DensityKind,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn validate(&self, movable: usize) -> Result<()> {
        if !(self.k >= 0.0) || !self.k.is_finite() {
            return Err(Error::Config(format!("power k must be a finite non-negative number, got {}", self.k)));
        }
        if self.candidate_pool_size < movable {
            return Err(Error::Config(format!(
                "candidate pool of {} cannot supply {movable} movable points",
                self.candidate_pool_size
            )));
        }
        Ok(())
    }
}

/// Probability weights over a candidate pool, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDensity {
    weights: Vec<f64>,
    uniform_fallback: bool,
}

impl DiscreteDensity {
    pub fn uniform(n: usize) -> Self {
        Self { weights: vec![1.0 / n as f64; n], uniform_fallback: false }
    }

    /// Normalizes non-negative scores; all-zero scores give the uniform law.
    pub fn from_scores(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Shape("density over an empty candidate pool".into()));
        }
        if scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::Numeric("density scores must be finite and non-negative".into()));
        }
        let total: f64 = scores.iter().sum();
        if total == 0.0 {
            let mut d = Self::uniform(scores.len());
            d.uniform_fallback = true;
            return Ok(d);
        }
        Ok(Self { weights: scores.into_iter().map(|s| s / total).collect(), uniform_fallback: false })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// True when every score was zero and the uniform law was substituted.
    pub fn used_uniform_fallback(&self) -> bool {
        self.uniform_fallback
    }
}

/// `n` i.i.d. uniform points in the box.
pub fn sample_uniform(domain: &Domain, n: usize, seed: u64) -> Result<PointSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_uniform_with(domain, n, &mut rng)
}

pub fn sample_uniform_with<R: Rng>(domain: &Domain, n: usize, rng: &mut R) -> Result<PointSet> {
    domain.validate()?;
    let d = domain.dim();
    let mut out = PointSet::with_capacity(d, n);
    let mut x = vec![0.0; d];
    for _ in 0..n {
        for (k, xk) in x.iter_mut().enumerate() {
            *xk = rng.random_range(domain.lower[k]..=domain.upper[k]);
        }
        out.push(&x);
    }
    Ok(out)
}

/// `|r_i|^k / Σ_j |r_j|^k`.
pub fn residual_density(residuals: &[f64], k: f64) -> Result<DiscreteDensity> {
    if residuals.iter().any(|r| !r.is_finite()) {
        return Err(Error::Numeric("residual density weights".into()));
    }
    if k == 0.0 {
        return Ok(DiscreteDensity::uniform(residuals.len()));
    }
    // scale by the largest magnitude so large k cannot overflow
    let top = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    if top == 0.0 {
        return DiscreteDensity::from_scores(vec![0.0; residuals.len()]);
    }
    DiscreteDensity::from_scores(residuals.iter().map(|r| (r.abs() / top).powf(k)).collect())
}

/// `m_i^k / Σ_j m_j^k` with `m = sqrt(1 + ‖∇U‖²)`.
pub fn monitor_density(gradient_norms: &[f64], k: f64) -> Result<DiscreteDensity> {
    if gradient_norms.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("monitor density weights".into()));
    }
    let logs: Vec<f64> = gradient_norms.iter().map(|g| 0.5 * k * (g * g).ln_1p()).collect();
    let top = logs.iter().fold(f64::NEG_INFINITY, |m, &l| m.max(l));
    DiscreteDensity::from_scores(logs.iter().map(|l| (l - top).exp()).collect())
}

/// Draws `m` distinct candidates with probability proportional to the
/// density, equivalent to repeatedly picking one point by weight and
/// removing it. Implemented with exponential keys `ln(u)/w` and a top-`m`
/// selection. When fewer than `m` candidates carry positive weight the rest
/// are drawn uniformly from the unused candidates.
pub fn weighted_subset<R: Rng>(density: &DiscreteDensity, m: usize, rng: &mut R) -> Result<Vec<usize>> {
    let n = density.len();
    if m > n {
        return Err(Error::Config(format!("cannot draw {m} distinct points from {n} candidates")));
    }
    let mut keyed: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut zero: Vec<usize> = Vec::new();
    for (i, &w) in density.weights().iter().enumerate() {
        if w > 0.0 {
            let u: f64 = rng.random::<f64>();
            let u = if u == 0.0 { f64::MIN_POSITIVE } else { u };
            keyed.push((u.ln() / w, i));
        } else {
            zero.push(i);
        }
    }
    let mut chosen: Vec<usize>;
    if keyed.len() > m {
        keyed.select_nth_unstable_by(m, |a, b| b.0.total_cmp(&a.0));
        keyed.truncate(m);
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0));
        chosen = keyed.into_iter().map(|(_, i)| i).collect();
    } else {
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0));
        chosen = keyed.into_iter().map(|(_, i)| i).collect();
        let need = m - chosen.len();
        for j in 0..need {
            let pick = rng.random_range(j..zero.len());
            zero.swap(j, pick);
            chosen.push(zero[j]);
        }
    }
    Ok(chosen)
}

/// Partitioned collocation points.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationState {
    fixed: PointSet,
    movable: PointSet,
    initial: PointSet,
    boundary: PointSet,
}

/// Sizes of the four point sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointCounts {
    pub fixed: usize,
    pub movable: usize,
    pub initial: usize,
    pub boundary: usize,
}

impl CollocationState {
    pub fn new(fixed: PointSet, movable: PointSet, initial: PointSet, boundary: PointSet) -> Result<Self> {
        let d = fixed.dim();
        if [movable.dim(), initial.dim(), boundary.dim()].iter().any(|&k| k != d) {
            return Err(Error::Shape("collocation sets of different dimension".into()));
        }
        Ok(Self { fixed, movable, initial, boundary })
    }

    /// Algorithm start: every set drawn uniformly on its part of the domain.
    pub fn initialize(model: &PdeModel, counts: PointCounts, seed: u64) -> Result<Self> {
        let domain = model.domain();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fixed = sample_uniform_with(&domain, counts.fixed, &mut rng)?;
        let movable = sample_uniform_with(&domain, counts.movable, &mut rng)?;
        let initial = model.sample_initial(counts.initial, &mut rng);
        let boundary = model.sample_boundary(counts.boundary, &mut rng);
        Self::new(fixed, movable, initial, boundary)
    }

    pub fn fixed(&self) -> &PointSet {
        &self.fixed
    }

    pub fn movable(&self) -> &PointSet {
        &self.movable
    }

    pub fn initial(&self) -> &PointSet {
        &self.initial
    }

    pub fn boundary(&self) -> &PointSet {
        &self.boundary
    }

    pub fn counts(&self) -> PointCounts {
        PointCounts {
            fixed: self.fixed.len(),
            movable: self.movable.len(),
            initial: self.initial.len(),
            boundary: self.boundary.len(),
        }
    }

    pub fn dim(&self) -> usize {
        self.fixed.dim()
    }

    /// Interior residual points: fixed followed by movable.
    pub fn residual_points(&self) -> PointSet {
        let mut all = self.fixed.clone();
        all.extend(&self.movable);
        all
    }

    /// Replaces the movable set by a weighted subset of `candidates`.
    pub fn resample_movable<R: Rng>(
        &self,
        candidates: &PointSet,
        density: &DiscreteDensity,
        rng: &mut R,
    ) -> Result<Self> {
        if candidates.len() != density.len() {
            return Err(Error::Shape(format!("{} candidates but density over {}", candidates.len(), density.len())));
        }
        if candidates.dim() != self.dim() {
            return Err(Error::Shape("candidate dimension differs from the collocation sets".into()));
        }
        let m = self.movable.len();
        let picks = weighted_subset(density, m, rng)?;
        let mut movable = PointSet::with_capacity(self.dim(), m);
        for i in picks {
            movable.push(candidates.get(i));
        }
        Ok(Self { movable, ..self.clone() })
    }

    /// CSV rows `round,set,x0,x1,...` for every point.
    pub fn write_csv<W: Write>(&self, round: usize, out: &mut W, header: bool) -> Result<()> {
        if header {
            let cols: Vec<String> = (0..self.dim()).map(|k| format!("x{k}")).collect();
            writeln!(out, "round,set,{}", cols.join(","))?;
        }
        for (name, set) in [
            ("fixed", &self.fixed),
            ("movable", &self.movable),
            ("initial", &self.initial),
            ("boundary", &self.boundary),
        ] {
            for p in set.iter() {
                let coords: Vec<String> = p.iter().map(|v| format!("{v:.16e}")).collect();
                writeln!(out, "{round},{name},{}", coords.join(","))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Domain {
        Domain::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn uniform_sampling() {
        assert!(sample_uniform(&unit_square(), 0, 1).unwrap().is_empty());
        let a = sample_uniform(&unit_square(), 10_000, 7).unwrap();
        let b = sample_uniform(&unit_square(), 10_000, 7).unwrap();
        assert_eq!(a, b);
        for k in 0..2 {
            let mean = a.iter().map(|p| p[k]).sum::<f64>() / a.len() as f64;
            assert!((mean - 0.5).abs() < 0.015, "{mean}");
        }
        let bad = Domain { lower: vec![0.0], upper: vec![0.0] };
        assert!(sample_uniform(&bad, 3, 1).is_err());
    }

    #[test]
    fn residual_density_examples() {
        let d = residual_density(&[1.0, 1.0, 1.0, 1.0], 2.0).unwrap();
        assert!(d.weights().iter().all(|w| (w - 0.25).abs() < 1e-15));
        let d = residual_density(&[1.0, 2.0], 2.0).unwrap();
        assert!((d.weights()[0] - 0.2).abs() < 1e-15 && (d.weights()[1] - 0.8).abs() < 1e-15);
        let d = residual_density(&[1.0, 7.0, 0.0], 0.0).unwrap();
        assert!(d.weights().iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-15));
        let d = residual_density(&[0.0, 0.0], 2.0).unwrap();
        assert!(d.used_uniform_fallback());
        assert!(residual_density(&[f64::NAN], 2.0).is_err());
    }

    #[test]
    fn monitor_density_examples() {
        let d = monitor_density(&[0.0, 0.0, 0.0], 2.0).unwrap();
        assert!(d.weights().iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-15));
        let d = monitor_density(&[0.0, 3f64.sqrt()], 2.0).unwrap();
        assert!((d.weights()[0] - 0.2).abs() < 1e-14 && (d.weights()[1] - 0.8).abs() < 1e-14);
    }

    #[test]
    fn exhaustion_and_point_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = DiscreteDensity::from_scores(vec![1.0, 2.0, 3.0]).unwrap();
        let mut all = weighted_subset(&d, 3, &mut rng).unwrap();
        all.sort();
        assert_eq!(all, vec![0, 1, 2]);
        let mass = DiscreteDensity::from_scores(vec![0.0, 0.0, 5.0, 0.0]).unwrap();
        assert_eq!(weighted_subset(&mass, 1, &mut rng).unwrap(), vec![2]);
        let mut padded = weighted_subset(&mass, 3, &mut rng).unwrap();
        assert_eq!(padded[0], 2);
        padded.sort();
        padded.dedup();
        assert_eq!(padded.len(), 3);
        assert!(weighted_subset(&mass, 5, &mut rng).is_err());
    }

    #[test]
    fn state_resampling_keeps_fixed_sets() {
        let m = PdeModel::Gbs(Default::default());
        let counts = PointCounts { fixed: 30, movable: 10, initial: 5, boundary: 8 };
        let s = CollocationState::initialize(&m, counts, 3).unwrap();
        let cand = sample_uniform(&m.domain(), 100, 4).unwrap();
        let dens = DiscreteDensity::uniform(100);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = s.resample_movable(&cand, &dens, &mut rng).unwrap();
        assert_eq!(t.fixed(), s.fixed());
        assert_eq!(t.initial(), s.initial());
        assert_eq!(t.boundary(), s.boundary());
        assert_eq!(t.counts(), counts);
        assert_eq!(t.residual_points().len(), 40);
        let mut buf = Vec::new();
        t.write_csv(2, &mut buf, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 53);
        assert!(text.starts_with("round,set,x0,x1\n2,fixed,"));
    }
}
