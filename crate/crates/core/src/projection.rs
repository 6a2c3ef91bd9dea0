//! Random directions, projection coefficients, and spread-maximizing
//! direction selection.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{dot, Dataset};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Unit vector in the data space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Direction(Vec<f64>);

impl Direction {
    /// Normalize `v` to unit length. Fails on zero or non-finite input.
    pub fn from_vec(mut v: Vec<f64>) -> Result<Self> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if v.is_empty() || !norm.is_finite() || norm == 0.0 {
            return Err(Error::param("direction must be a finite nonzero vector"));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(Direction(v))
    }

    /// The `axis`-th standard basis vector of `dim` dimensions.
    pub fn axis(dim: usize, axis: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        Direction(v)
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Projection coefficient `r . x`.
    #[inline]
    pub fn coefficient(&self, x: &[f64]) -> f64 {
        dot(&self.0, x)
    }
}

/// Projection coefficients of a node's points along one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionCoeffs {
    /// One value per input point, in input order.
    pub values: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

impl ProjectionCoeffs {
    fn from_values(values: Vec<f64>) -> Self {
        let (min, max) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        ProjectionCoeffs { values, min, max }
    }

    /// `max - min`.
    pub fn extent(&self) -> f64 {
        self.max - self.min
    }
}

/// Direction drawn uniformly from the unit sphere by normalizing an
/// i.i.d. standard Gaussian vector.
pub fn random_direction(dim: usize, rng: &mut RngStream) -> Direction {
    assert!(dim >= 1, "direction dimension must be at least 1");
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        // A zero Gaussian vector has probability zero; redraw if it happens.
        if let Ok(d) = Direction::from_vec(v) {
            return d;
        }
    }
}

/// Project the points at `indices` onto `dir`.
pub fn project(indices: &[usize], data: &Dataset, dir: &Direction) -> Result<ProjectionCoeffs> {
    if indices.is_empty() {
        return Err(Error::param("cannot project an empty index set"));
    }
    if dir.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            found: dir.dim(),
        });
    }
    let values = indices
        .iter()
        .map(|&i| dir.coefficient(data.point(i)))
        .collect();
    Ok(ProjectionCoeffs::from_values(values))
}

/// Sample standard deviation of the coefficients (divisor `n - 1`, zero
/// for a single value).
pub fn spread(coeffs: &ProjectionCoeffs) -> f64 {
    sample_sd(&coeffs.values)
}

pub(crate) fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Outcome of [`select_direction_traced`].
#[derive(Debug, Clone)]
pub struct Selection {
    pub direction: Direction,
    pub coeffs: ProjectionCoeffs,
    /// Spread of the chosen direction.
    pub spread: f64,
    /// Spread of every candidate, in draw order.
    pub candidate_spreads: Vec<f64>,
}

/// Draw `n_try` random directions and keep the one whose projections have
/// the largest spread. The first candidate wins ties; with `n_try = 1` the
/// single draw is returned unconditionally.
pub fn select_direction(
    indices: &[usize],
    data: &Dataset,
    n_try: usize,
    rng: &mut RngStream,
) -> Result<(Direction, ProjectionCoeffs)> {
    let (direction, coeffs, _) = select_inner(indices, data, n_try, rng, None)?;
    Ok((direction, coeffs))
}

/// Same as [`select_direction`], also reporting every candidate's spread.
/// Consumes the random stream identically.
pub fn select_direction_traced(
    indices: &[usize],
    data: &Dataset,
    n_try: usize,
    rng: &mut RngStream,
) -> Result<Selection> {
    let mut spreads = Vec::with_capacity(n_try);
    let (direction, coeffs, spread) = select_inner(indices, data, n_try, rng, Some(&mut spreads))?;
    Ok(Selection {
        direction,
        coeffs,
        spread,
        candidate_spreads: spreads,
    })
}

fn select_inner(
    indices: &[usize],
    data: &Dataset,
    n_try: usize,
    rng: &mut RngStream,
    trace: Option<&mut Vec<f64>>,
) -> Result<(Direction, ProjectionCoeffs, f64)> {
    if indices.is_empty() {
        return Err(Error::param("cannot select a direction for an empty node"));
    }
    select_with(data.dim(), n_try, rng, trace, |dir| {
        project(indices, data, dir)
    })
}

/// Direction selection over a contiguous row-major block of points, as kept
/// by the tree builder.
pub(crate) fn select_direction_block(
    block: &[f64],
    dim: usize,
    n_try: usize,
    rng: &mut RngStream,
) -> Result<(Direction, ProjectionCoeffs)> {
    if block.is_empty() {
        return Err(Error::param("cannot select a direction for an empty node"));
    }
    let (direction, coeffs, _) = select_with(dim, n_try, rng, None, |dir| {
        Ok(ProjectionCoeffs::from_values(
            block
                .chunks_exact(dim)
                .map(|x| dir.coefficient(x))
                .collect(),
        ))
    })?;
    Ok((direction, coeffs))
}

fn select_with(
    dim: usize,
    n_try: usize,
    rng: &mut RngStream,
    mut trace: Option<&mut Vec<f64>>,
    mut project_fn: impl FnMut(&Direction) -> Result<ProjectionCoeffs>,
) -> Result<(Direction, ProjectionCoeffs, f64)> {
    if n_try == 0 {
        return Err(Error::param("nTry must be at least 1"));
    }
    let mut best: Option<(Direction, ProjectionCoeffs, f64)> = None;
    for _ in 0..n_try {
        let dir = random_direction(dim, rng);
        let coeffs = project_fn(&dir)?;
        let s = spread(&coeffs);
        if let Some(t) = trace.as_deref_mut() {
            t.push(s);
        }
        match &best {
            Some((_, _, best_spread)) if s <= *best_spread => {}
            _ => best = Some((dir, coeffs, s)),
        }
    }
    Ok(best.expect("n_try >= 1"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_gaussian;
    use proptest::prelude::*;

    #[test]
    fn one_dimensional_direction_is_plus_minus_one() {
        let mut rng = RngStream::new(1);
        for _ in 0..20 {
            let d = random_direction(1, &mut rng);
            assert_eq!(d.components()[0].abs(), 1.0);
        }
    }

    #[test]
    fn directions_have_unit_norm() {
        let mut rng = RngStream::new(2);
        for dim in [2, 3, 17, 300] {
            let d = random_direction(dim, &mut rng);
            let norm = d.components().iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn directions_are_centered() {
        let mut rng = RngStream::new(3);
        let mut mean = [0.0; 3];
        let draws = 10_000;
        for _ in 0..draws {
            let d = random_direction(3, &mut rng);
            for (m, c) in mean.iter_mut().zip(d.components()) {
                *m += c / draws as f64;
            }
        }
        let norm = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm < 0.05, "mean direction norm {norm}");
    }

    #[test]
    fn axis_projection_and_orthogonality() {
        let data = Dataset::from_rows(&[[3.0, 4.0], [0.0, 5.0]]).unwrap();
        let c = project(&[0, 1], &data, &Direction::axis(2, 0)).unwrap();
        assert_eq!(c.values, vec![3.0, 0.0]);
        assert_eq!((c.min, c.max), (0.0, 3.0));
    }

    #[test]
    fn project_matches_dot_recomputation() {
        let data = gen_gaussian(50, 20, &[1.0; 20], 4).unwrap();
        let dir = random_direction(20, &mut RngStream::new(5));
        let idx: Vec<usize> = (0..50).step_by(3).collect();
        let c = project(&idx, &data, &dir).unwrap();
        for (k, &i) in idx.iter().enumerate() {
            let mut s = 0.0;
            for j in 0..20 {
                s += dir.components()[j] * data.point(i)[j];
            }
            assert!((c.values[k] - s).abs() <= 1e-12 * (1.0 + s.abs()));
        }
    }

    #[test]
    fn project_errors() {
        let data = Dataset::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(project(&[], &data, &Direction::axis(2, 0)).is_err());
        assert!(matches!(
            project(&[0], &data, &Direction::axis(3, 0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn spread_examples() {
        let c = |v: Vec<f64>| ProjectionCoeffs::from_values(v);
        assert_eq!(spread(&c(vec![2.5; 3])), 0.0);
        assert_eq!(spread(&c(vec![7.0])), 0.0);
        assert!((spread(&c(vec![0.0, 2.0])) - 2f64.sqrt()).abs() < 1e-15);
        let base = vec![1.0, 4.0, -2.0, 8.0];
        let shifted: Vec<f64> = base.iter().map(|v| v + 100.0).collect();
        assert!((spread(&c(base)) - spread(&c(shifted))).abs() < 1e-12);
    }

    #[test]
    fn single_try_returns_first_draw() {
        let data = gen_gaussian(30, 4, &[1.0; 4], 6).unwrap();
        let idx: Vec<usize> = (0..30).collect();
        let mut a = RngStream::new(9);
        let mut b = a.clone();
        let (dir, _) = select_direction(&idx, &data, 1, &mut a).unwrap();
        assert_eq!(dir, random_direction(4, &mut b));
    }

    #[test]
    fn identical_points_give_zero_spread() {
        let data = Dataset::from_rows(&vec![[1.0, 2.0, 3.0]; 10]).unwrap();
        let idx: Vec<usize> = (0..10).collect();
        let sel = select_direction_traced(&idx, &data, 5, &mut RngStream::new(1)).unwrap();
        assert!(sel.spread.abs() < 1e-12);
        assert!(sel.coeffs.extent().abs() < 1e-12);
    }

    #[test]
    fn zero_tries_rejected() {
        let data = Dataset::from_rows(&[[1.0]]).unwrap();
        assert!(select_direction(&[0], &data, 0, &mut RngStream::new(1)).is_err());
    }

    #[test]
    fn more_tries_align_with_the_long_axis() {
        let mut scales = vec![1.0; 8];
        scales[0] = 10.0;
        let data = gen_gaussian(300, 8, &scales, 12).unwrap();
        let idx: Vec<usize> = (0..300).collect();
        let mut rng = RngStream::new(13);
        let (mut single, mut many) = (0.0, 0.0);
        let repeats = 100;
        for _ in 0..repeats {
            let (d1, _) = select_direction(&idx, &data, 1, &mut rng).unwrap();
            let (d20, _) = select_direction(&idx, &data, 20, &mut rng).unwrap();
            single += d1.components()[0].abs() / repeats as f64;
            many += d20.components()[0].abs() / repeats as f64;
        }
        assert!(many > single, "nTry=20 {many} vs nTry=1 {single}");
    }

    proptest! {
        #[test]
        fn chosen_spread_dominates_candidates(seed in any::<u64>(), n_try in 1usize..12) {
            let data = gen_gaussian(40, 5, &[3.0, 1.0, 1.0, 0.5, 0.1], seed).unwrap();
            let idx: Vec<usize> = (0..40).collect();
            let mut rng = RngStream::new(seed ^ 0xABCD);
            let mut replay = rng.clone();
            let sel = select_direction_traced(&idx, &data, n_try, &mut rng).unwrap();
            prop_assert_eq!(sel.candidate_spreads.len(), n_try);
            for s in &sel.candidate_spreads {
                prop_assert!(sel.spread >= *s);
            }
            let first_max = sel.candidate_spreads.iter().position(|s| *s == sel.spread).unwrap();
            prop_assert!(sel.candidate_spreads[..first_max].iter().all(|s| *s < sel.spread));
            let (dir, coeffs) = select_direction(&idx, &data, n_try, &mut replay).unwrap();
            prop_assert_eq!(dir, sel.direction);
            prop_assert_eq!(coeffs, sel.coeffs);
        }

        #[test]
        fn projection_is_linear(seed in any::<u64>(), alpha in -50.0f64..50.0) {
            let data = gen_gaussian(10, 3, &[1.0; 3], seed).unwrap();
            let scaled = Dataset::new(data.coords().iter().map(|v| v * alpha).collect(), 3).unwrap();
            let dir = random_direction(3, &mut RngStream::new(seed));
            let idx: Vec<usize> = (0..10).collect();
            let a = project(&idx, &data, &dir).unwrap();
            let b = project(&idx, &scaled, &dir).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x * alpha - y).abs() <= 1e-9 * (1.0 + y.abs()));
            }
        }
    }
}
