//! Measured quantities over configurations and score time series.

use std::f64::consts::{PI, SQRT_2};

use serde::Serialize;

use crate::error::{arg, Error, Result};
use crate::model::{check_unit, dot, Configuration};

const UNIT_TOL: f64 = 1e-10;

/// Default tail grid spacing.
pub const TAIL_STEP: f64 = 0.05 / SQRT_2;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShapeStats {
    pub t: f64,
    pub diam: f64,
    pub diam_perp: f64,
    /// Direction of the leading particle, `None` when it sits at the origin.
    pub direction: Option<Vec<f64>>,
}

/// Empirical tail seen from the minimum: the fraction of particles at least
/// `x` above the lowest one, on a fixed grid starting at 0.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailProfile {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

/// Which order statistic of the scores to follow.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    #[default]
    Min,
    Max,
    Median,
}

impl Statistic {
    pub fn of(self, scores: &[f64]) -> Result<f64> {
        if scores.is_empty() {
            return arg("no scores");
        }
        Ok(match self {
            Statistic::Min => scores.iter().copied().fold(f64::INFINITY, f64::min),
            Statistic::Max => scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Statistic::Median => {
                let mut v = scores.to_vec();
                v.sort_by(f64::total_cmp);
                let m = v.len() / 2;
                if v.len() % 2 == 1 {
                    v[m]
                } else {
                    0.5 * (v[m - 1] + v[m])
                }
            }
        })
    }
}

fn extent(config: &Configuration, dir: &[f64]) -> f64 {
    let (lo, hi) = config
        .positions()
        .map(|x| dot(x, dir))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p), hi.max(p)));
    if lo.is_finite() {
        hi - lo
    } else {
        0.0
    }
}

/// Extents of the cloud along `lambda` and along `lambda_perp`.
pub fn diameters(config: &Configuration, lambda: &[f64], lambda_perp: &[f64]) -> Result<(f64, f64)> {
    if lambda.len() != config.d || lambda_perp.len() != config.d {
        return arg("direction dimension does not match the configuration");
    }
    check_unit(lambda, UNIT_TOL, "lambda")?;
    check_unit(lambda_perp, UNIT_TOL, "lambda_perp")?;
    if dot(lambda, lambda_perp).abs() > UNIT_TOL {
        return arg("lambda and lambda_perp are not orthogonal");
    }
    Ok((extent(config, lambda), extent(config, lambda_perp)))
}

pub fn shape_stats(config: &Configuration, lambda: &[f64], lambda_perp: &[f64]) -> Result<ShapeStats> {
    let (diam, diam_perp) = diameters(config, lambda, lambda_perp)?;
    let direction = if config.is_empty() { None } else { config.direction(config.order()[0]) };
    Ok(ShapeStats {
        t: config.time,
        diam,
        diam_perp,
        direction,
    })
}

/// Great-circle distance between two unit vectors.
pub fn spherical_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return arg("vectors differ in dimension");
    }
    check_unit(u, UNIT_TOL, "u")?;
    check_unit(v, UNIT_TOL, "v")?;
    Ok(dot(u, v).clamp(-1.0, 1.0).acos())
}

/// Largest spherical distance between the directions of two particles.
pub fn angular_spread(config: &Configuration) -> Result<f64> {
    let mut dirs = Vec::with_capacity(config.len());
    for i in 0..config.len() {
        match config.direction(i) {
            Some(u) => dirs.push(u),
            None => return Err(Error::Query(format!("particle {} is at the origin", config.ids()[i]))),
        }
    }
    if dirs.len() < 2 {
        return Ok(0.0);
    }
    if config.d == 2 {
        return Ok(planar_spread(&dirs));
    }
    let mut best = 0.0f64;
    for i in 0..dirs.len() {
        for j in i + 1..dirs.len() {
            best = best.max(dot(&dirs[i], &dirs[j]).clamp(-1.0, 1.0).acos());
        }
    }
    Ok(best)
}

fn planar_spread(dirs: &[Vec<f64>]) -> f64 {
    let mut ang: Vec<f64> = dirs.iter().map(|u| u[1].atan2(u[0])).collect();
    ang.sort_by(f64::total_cmp);
    let circ = |a: f64, b: f64| {
        let d = (b - a).abs() % (2.0 * PI);
        d.min(2.0 * PI - d)
    };
    let mut best = 0.0f64;
    for &a in &ang {
        let mut target = a + PI;
        if target > PI {
            target -= 2.0 * PI;
        }
        let j = ang.partition_point(|&b| b < target);
        for k in [j, j + ang.len() - 1] {
            best = best.max(circ(a, ang[k % ang.len()]));
        }
    }
    best
}

/// Slope of a score statistic between `t0` and `t1`, interpolating the
/// series linearly between sample times.
pub fn speed_estimate(times: &[f64], values: &[f64], t0: f64, t1: f64) -> Result<f64> {
    if times.len() != values.len() || times.len() < 2 {
        return arg("need at least two samples with matching times");
    }
    if !(t1 > t0) {
        return arg(format!("empty window [{t0}, {t1}]"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return arg("sample times must increase");
    }
    let at = |t: f64| -> Result<f64> {
        if t < times[0] || t > times[times.len() - 1] {
            return arg(format!("time {t} is outside the sampled range"));
        }
        let j = times.partition_point(|&s| s < t);
        if times[j] == t {
            return Ok(values[j]);
        }
        let w = (t - times[j - 1]) / (times[j] - times[j - 1]);
        Ok(values[j - 1] + w * (values[j] - values[j - 1]))
    };
    Ok((at(t1)? - at(t0)?) / (t1 - t0))
}

/// Tail profile of 1-d scores on `[0, x_max]` with the default spacing.
pub fn centered_tail(scores: &[f64], x_max: f64) -> Result<TailProfile> {
    centered_tail_with(scores, x_max, TAIL_STEP)
}

pub fn centered_tail_with(scores: &[f64], x_max: f64, step: f64) -> Result<TailProfile> {
    if scores.is_empty() {
        return arg("no scores");
    }
    if !(step > 0.0) || !(x_max >= 0.0) {
        return arg("grid needs a positive step and a nonnegative range");
    }
    let m = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let mut rel: Vec<f64> = scores.iter().map(|x| x - m).collect();
    rel.sort_by(f64::total_cmp);
    let n = rel.len() as f64;
    let k = (x_max / step + 1e-9).floor() as usize;
    let grid: Vec<f64> = (0..=k).map(|i| i as f64 * step).collect();
    let values = grid
        .iter()
        .map(|&x| {
            let below = rel.partition_point(|&r| r < x);
            (rel.len() - below) as f64 / n
        })
        .collect();
    Ok(TailProfile { grid, values })
}

impl TailProfile {
    /// Pointwise mean of profiles sharing a grid.
    pub fn average(profiles: &[TailProfile]) -> Result<TailProfile> {
        let first = profiles.first().ok_or_else(|| Error::Argument("no profiles".into()))?;
        let mut values = vec![0.0; first.values.len()];
        for p in profiles {
            if p.grid != first.grid {
                return arg("profiles use different grids");
            }
            for (v, x) in values.iter_mut().zip(&p.values) {
                *v += x;
            }
        }
        for v in &mut values {
            *v /= profiles.len() as f64;
        }
        Ok(TailProfile {
            grid: first.grid.clone(),
            values,
        })
    }

    pub fn sup_distance(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.grid
            .iter()
            .zip(&self.values)
            .map(|(&x, &v)| (v - f(x)).abs())
            .fold(0.0, f64::max)
    }
}

/// Travelling-wave tail `(sqrt(2) x + 1) exp(-sqrt(2) x)`.
pub fn wstar(x: f64) -> f64 {
    (SQRT_2 * x + 1.0) * (-SQRT_2 * x).exp()
}

/// Cumulative trapezoid integral of `R(s)^-2`, starting at 0.
pub fn time_change(times: &[f64], radii: &[f64]) -> Result<Vec<f64>> {
    if times.len() != radii.len() || times.is_empty() {
        return arg("times and radii must be nonempty and of equal length");
    }
    if let Some(i) = radii.iter().position(|r| !(*r > 0.0)) {
        return Err(Error::Query(format!("radius at sample {i} is not positive")));
    }
    if times.windows(2).any(|w| !(w[1] >= w[0])) {
        return arg("skeleton times must be nondecreasing");
    }
    let mut h = Vec::with_capacity(times.len());
    h.push(0.0);
    for i in 1..times.len() {
        let inc = 0.5 * (times[i] - times[i - 1]) * (radii[i].powi(-2) + radii[i - 1].powi(-2));
        h.push(h[i - 1] + inc);
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::RngStream;
    use crate::model::ScoreFunction;

    fn cfg(points: &[Vec<f64>]) -> Configuration {
        Configuration::from_points(0.0, points, &ScoreFunction::Euclidean).unwrap()
    }

    #[test]
    fn diameter_examples() {
        let c = cfg(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(diameters(&c, &[1.0, 0.0], &[0.0, 1.0]).unwrap(), (0.0, 0.0));
        let c = cfg(&[vec![0.0, 0.0], vec![3.0, 4.0]]);
        assert_eq!(diameters(&c, &[1.0, 0.0], &[0.0, 1.0]).unwrap(), (3.0, 4.0));
        assert!(diameters(&c, &[1.0, 0.0], &[0.6, 0.8]).is_err());
        assert!(diameters(&c, &[1.0, 0.1], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn spherical_examples() {
        assert_eq!(spherical_distance(&[0.6, 0.8], &[0.6, 0.8]).unwrap(), 0.0);
        assert!((spherical_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((spherical_distance(&[1.0, 0.0], &[-1.0, 0.0]).unwrap() - PI).abs() < 1e-15);
        assert!(spherical_distance(&[2.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn spread_examples() {
        let c = cfg(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![0.5, 0.5]]);
        assert!(angular_spread(&c).unwrap() < 1e-12);
        let c = cfg(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!((angular_spread(&c).unwrap() - PI / 2.0).abs() < 1e-12);
        let c = cfg(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert!(matches!(angular_spread(&c), Err(Error::Query(_))));
    }

    #[test]
    fn planar_spread_matches_pairwise() {
        let mut rng = RngStream::new(17, 0);
        for _ in 0..200 {
            let n = 2 + rng.index(12);
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.normal() + 0.5, rng.normal()])
                .collect();
            let c = cfg(&pts);
            let fast = angular_spread(&c).unwrap();
            let dirs: Vec<Vec<f64>> = (0..n).map(|i| c.direction(i).unwrap()).collect();
            let mut slow = 0.0f64;
            for a in &dirs {
                for b in &dirs {
                    slow = slow.max(dot(a, b).clamp(-1.0, 1.0).acos());
                }
            }
            assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
        }
    }

    #[test]
    fn spread_bounded_by_twice_leader_distance() {
        let mut rng = RngStream::new(4, 2);
        for _ in 0..100 {
            let pts: Vec<Vec<f64>> = (0..6)
                .map(|_| vec![rng.normal(), rng.normal(), rng.normal()])
                .collect();
            let c = cfg(&pts);
            let spread = angular_spread(&c).unwrap();
            let lead = c.direction(c.order()[0]).unwrap();
            let far = (0..6)
                .map(|i| spherical_distance(&c.direction(i).unwrap(), &lead).unwrap())
                .fold(0.0, f64::max);
            assert!(spread <= 2.0 * far + 1e-12);
        }
    }

    #[test]
    fn chord_angle_bound() {
        let mut rng = RngStream::new(8, 3);
        for _ in 0..2000 {
            let y = [rng.normal(), rng.normal(), rng.normal()];
            let ny = crate::model::norm(&y);
            let r = ny * rng.uniform();
            let dir = crate::kernels::gauss_vec(&mut rng, 3, 1.0).unwrap();
            let nd = crate::model::norm(&dir);
            let x: Vec<f64> = y.iter().zip(&dir).map(|(a, b)| a + r * b / nd).collect();
            let nx = crate::model::norm(&x);
            let ux: Vec<f64> = x.iter().map(|v| v / nx).collect();
            let uy: Vec<f64> = y.iter().map(|v| v / ny).collect();
            let dd = spherical_distance(&ux, &uy).unwrap();
            let bound = (r / ny).min(1.0).asin();
            assert!(dd <= bound + 1e-9);
            assert!(bound <= PI / 2.0 * r / ny + 1e-12);
        }
    }

    #[test]
    fn speed_examples() {
        let t: Vec<f64> = (0..11).map(|i| i as f64).collect();
        let v: Vec<f64> = t.iter().map(|s| 1.5 * s + 2.0).collect();
        assert_eq!(speed_estimate(&t, &v, 2.0, 8.0).unwrap(), 1.5);
        assert!((speed_estimate(&t, &v, 2.5, 7.25).unwrap() - 1.5).abs() < 1e-14);
        assert!(speed_estimate(&t, &v, 3.0, 3.0).is_err());
        assert!(speed_estimate(&t, &v, 3.0, 30.0).is_err());
    }

    #[test]
    fn statistics() {
        let s = [3.0, -1.0, 2.0, 0.0];
        assert_eq!(Statistic::Min.of(&s).unwrap(), -1.0);
        assert_eq!(Statistic::Max.of(&s).unwrap(), 3.0);
        assert_eq!(Statistic::Median.of(&s).unwrap(), 1.0);
    }

    #[test]
    fn tail_examples() {
        let p = centered_tail(&[2.0, 2.0, 2.0], 1.0).unwrap();
        assert_eq!(p.values[0], 1.0);
        assert!(p.values[1..].iter().all(|&v| v == 0.0));
        let p = centered_tail_with(&[0.0, 1.0], 2.0, 0.25).unwrap();
        assert_eq!(p.values, vec![1.0, 0.5, 0.5, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn tail_is_monotone_and_bounded() {
        let mut rng = RngStream::new(2, 0);
        let s: Vec<f64> = (0..500).map(|_| rng.normal()).collect();
        let p = centered_tail(&s, 5.0).unwrap();
        assert_eq!(p.values[0], 1.0);
        assert!(p.values.windows(2).all(|w| w[1] <= w[0]));
        assert!(p.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn wstar_value() {
        assert!((wstar(1.0 / SQRT_2) - 2.0 / std::f64::consts::E).abs() < 1e-15);
        assert!((wstar(1.0 / SQRT_2) - 0.73576).abs() < 1e-5);
        assert_eq!(wstar(0.0), 1.0);
    }

    #[test]
    fn time_change_examples() {
        let h = time_change(&[0.0, 1.0, 2.5], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(h, vec![0.0, 1.0, 2.5]);
        let n = 2000;
        let t: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let r: Vec<f64> = t.iter().map(|s| 1.0 + s).collect();
        let h = time_change(&t, &r).unwrap();
        assert!((h[n] - 0.5).abs() < 1e-3);
        assert!(h.windows(2).all(|w| w[1] >= w[0]));
        assert!(matches!(time_change(&[0.0, 1.0], &[1.0, 0.0]), Err(Error::Query(_))));
    }
}
