//! Gradient flowlines `ẋ = ∇V(x)` and the geometric checks that radial
//! potentials pass: straight lines, level-set transport by `V̇ = F(V)`,
//! and a common center.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::curve::{fmt_f64, Curve};
use crate::error::{Error, Result};
use crate::par;
use crate::potentials::{sublevel_centroid, AnalyticPotential};

/// `|∇V|` below this at the start point is rejected.
pub const START_GRADIENT: f64 = 1e-8;
/// `|∇V|` below this during the flow is a stagnation.
pub const STAGNATION_GRADIENT: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    /// `|ẋ| = |∇V|` at each sample.
    pub speeds: Vec<f64>,
    /// `V` at each sample.
    pub levels: Vec<f64>,
    pub s0: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| dist(&w[0], &w[1])).sum()
    }

    /// `t,x_1..x_n,V` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let n = self.points.first().map_or(0, |p| p.len());
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.push("V".into());
        w.write_record(&header)?;
        for k in 0..self.len() {
            let mut row = vec![fmt_f64(self.times[k])];
            row.extend(self.points[k].iter().map(|x| fmt_f64(*x)));
            row.push(fmt_f64(self.levels[k]));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Classical fourth-order Runge–Kutta with fixed step `dt` up to `t_end`.
/// The flow stops before the first sample with `V >= lambda0` or outside
/// the evaluation box.
pub fn integrate_flowline(p: &AnalyticPotential, x0: &[f64], t_end: f64, dt: f64) -> Result<Trajectory> {
    if !(dt > 0.0 && t_end > 0.0 && dt.is_finite() && t_end.is_finite()) {
        return Err(Error::InvalidInput(format!("need t_end > 0 and dt > 0, got {t_end}, {dt}")));
    }
    let n = p.dimension();
    let s0 = p.eval(x0)?;
    let g0 = norm(&p.grad(x0)?);
    if !(g0 > START_GRADIENT) {
        return Err(Error::InvalidInput(format!("|grad V| = {g0:e} at the start point is too small")));
    }
    let steps = (t_end / dt).round().max(1.0) as usize;
    let mut traj =
        Trajectory { times: vec![0.0], points: vec![x0.to_vec()], speeds: vec![g0], levels: vec![s0], s0 };
    let mut x = x0.to_vec();
    let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut y = vec![0.0; n];
    let mut g = vec![0.0; n];
    for step in 1..=steps {
        p.grad_into(&x, &mut k[0]);
        for (stage, frac) in [(1, 0.5), (2, 0.5), (3, 1.0)] {
            for d in 0..n {
                y[d] = x[d] + frac * dt * k[stage - 1][d];
            }
            let (head, tail) = k.split_at_mut(stage);
            let _ = head;
            p.grad_into(&y, &mut tail[0]);
        }
        for d in 0..n {
            y[d] = x[d] + dt / 6.0 * (k[0][d] + 2.0 * k[1][d] + 2.0 * k[2][d] + k[3][d]);
        }
        if !p.in_box(&y) {
            break;
        }
        let v = p.value_unchecked(&y);
        if v >= p.lambda0() {
            break;
        }
        let prev = *traj.levels.last().unwrap();
        if !(v > prev) {
            return Err(Error::Stagnation(format!("V stopped increasing at t = {}", step as f64 * dt)));
        }
        p.grad_into(&y, &mut g);
        let speed = norm(&g);
        if speed < STAGNATION_GRADIENT {
            return Err(Error::Stagnation(format!("|grad V| = {speed:e} at t = {}", step as f64 * dt)));
        }
        x.copy_from_slice(&y);
        traj.times.push(step as f64 * dt);
        traj.points.push(x.clone());
        traj.speeds.push(speed);
        traj.levels.push(v);
    }
    Ok(traj)
}

/// Centroid and unit principal direction of the trajectory's points.
pub fn fit_line(traj: &Trajectory) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = traj.points.len();
    if m == 0 {
        return Err(Error::DegenerateTrajectory);
    }
    let n = traj.points[0].len();
    let mut c = vec![0.0; n];
    for pt in &traj.points {
        for d in 0..n {
            c[d] += pt[d] / m as f64;
        }
    }
    let mut cov = DMatrix::zeros(n, n);
    for pt in &traj.points {
        let dv = DVector::from_iterator(n, pt.iter().zip(&c).map(|(a, b)| a - b));
        cov += &dv * dv.transpose();
    }
    if cov.iter().all(|&x| x == 0.0) {
        return Err(Error::DegenerateTrajectory);
    }
    let eig = SymmetricEigen::new(cov);
    let imax = eig.eigenvalues.imax();
    let dir = eig.eigenvectors.column(imax).iter().copied().collect();
    Ok((c, dir))
}

fn line_distance(x: &[f64], c: &[f64], d: &[f64]) -> f64 {
    let diff: Vec<f64> = x.iter().zip(c).map(|(a, b)| a - b).collect();
    let along: f64 = diff.iter().zip(d).map(|(a, b)| a * b).sum();
    (diff.iter().map(|a| a * a).sum::<f64>() - along * along).max(0.0).sqrt()
}

/// Largest distance from a sample to the best-fit line, over the arc
/// length. Zero for fewer than three samples.
pub fn line_deviation(traj: &Trajectory) -> Result<f64> {
    if traj.points.len() >= 2 && traj.arc_length() == 0.0 {
        return Err(Error::DegenerateTrajectory);
    }
    if traj.points.len() < 3 {
        return Ok(0.0);
    }
    let (c, d) = fit_line(traj)?;
    let worst = traj.points.iter().map(|x| line_distance(x, &c, &d)).fold(0.0, f64::max);
    Ok(worst / traj.arc_length())
}

/// The level predicted by `V̇ = F(V)`, i.e. `I^{-1}(t)` with
/// `I(V) = ∫_{s0}^V du / F(u)`. `F` is taken piecewise linear between its
/// grid points and constant beyond them, and `I` is inverted exactly.
struct LevelClock {
    nodes: Vec<f64>,
    f: Vec<f64>,
    clock: Vec<f64>,
}

impl LevelClock {
    fn new(f: &Curve, s0: f64, top: f64) -> Result<Self> {
        let mut nodes = vec![s0];
        nodes.extend(f.grid().nodes().into_iter().filter(|&s| s > s0 && s < top));
        nodes.push(top.max(s0));
        let fv: Vec<f64> = nodes.iter().map(|&s| f.value_at(s)).collect();
        if let Some(k) = fv.iter().position(|&x| !(x > 0.0)) {
            return Err(Error::InvalidProfile(format!("F = {} <= 0 at s = {}", fv[k], nodes[k])));
        }
        let mut clock = vec![0.0];
        for k in 0..nodes.len() - 1 {
            let (a, b, h) = (fv[k], fv[k + 1], nodes[k + 1] - nodes[k]);
            let dt = if (b - a).abs() <= 1e-14 * a { h / a } else { h * (b / a).ln() / (b - a) };
            clock.push(clock[k] + dt);
        }
        Ok(Self { nodes, f: fv, clock })
    }

    fn level_at(&self, t: f64) -> f64 {
        let last = self.nodes.len() - 1;
        let k = self.clock.partition_point(|&c| c <= t).saturating_sub(1).min(last);
        let (s, a, tau) = (self.nodes[k], self.f[k], t - self.clock[k]);
        if k == last {
            return s + a * tau;
        }
        let m = (self.f[k + 1] - a) / (self.nodes[k + 1] - s);
        if m.abs() * tau <= 1e-14 {
            s + a * tau
        } else {
            // F(u) = a exp(m tau) along the segment
            s + a * (m * tau).exp_m1() / m
        }
    }
}

/// `max_k |V(x(t_k)) - I^{-1}(t_k)|`.
pub fn level_transport_check(traj: &Trajectory, f: &Curve, s0: f64) -> Result<f64> {
    let top = traj.levels.iter().cloned().fold(s0, f64::max);
    let clock = LevelClock::new(f, s0, top)?;
    Ok(traj.times.iter().zip(&traj.levels).map(|(t, v)| (v - clock.level_at(*t)).abs()).fold(0.0, f64::max))
}

/// Least-squares meeting point of the trajectories' fitted lines, and the
/// RMS distance from it to the lines.
pub fn common_center_estimate(trajs: &[Trajectory]) -> Result<(Vec<f64>, f64)> {
    let n = trajs.first().and_then(|t| t.points.first()).map_or(0, |p| p.len());
    if n == 0 || trajs.len() < n {
        return Err(Error::InvalidInput(format!(
            "a common center in {n} dimensions needs at least {n} trajectories, got {}",
            trajs.len()
        )));
    }
    let lines = trajs.iter().map(fit_line).collect::<Result<Vec<_>>>()?;
    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    for (c, d) in &lines {
        let dv = DVector::from_column_slice(d);
        let proj = DMatrix::identity(n, n) - &dv * dv.transpose();
        b += &proj * DVector::from_column_slice(c);
        a += proj;
    }
    let eig = SymmetricEigen::new(a.clone());
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if !(lo > 1e-8 * hi) {
        return Err(Error::IllConditioned(format!("fitted lines are nearly parallel (eigenvalue ratio {:e})", lo / hi)));
    }
    let x = a.cholesky().ok_or_else(|| Error::IllConditioned("line normal matrix is singular".into()))?.solve(&b);
    let x: Vec<f64> = x.iter().copied().collect();
    let spread =
        (lines.iter().map(|(c, d)| line_distance(&x, c, d).powi(2)).sum::<f64>() / lines.len() as f64).sqrt();
    Ok((x, spread))
}

/// `count` points on `{V = s0}` along rays from the sublevel centroid.
/// In the plane the rays are equally spaced and start half a step off the
/// axes; in higher dimensions they follow a golden-angle spiral over the
/// sphere in the first three coordinates.
pub fn seed_starts(p: &AnalyticPotential, s0: f64, count: usize) -> Result<Vec<Vec<f64>>> {
    let n = p.dimension();
    let center = sublevel_centroid(p, s0, 48)?;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|k| {
            let mut d = vec![0.0; n];
            if n == 2 {
                let th = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / count as f64;
                d[0] = th.cos();
                d[1] = th.sin();
            } else {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                let rxy = (1.0 - z * z).sqrt();
                let th = golden * k as f64 + 0.3;
                d[0] = rxy * th.cos();
                d[1] = rxy * th.sin();
                d[2] = z;
            }
            ray_to_level(p, &center, &d, s0)
        })
        .collect()
}

fn ray_to_level(p: &AnalyticPotential, center: &[f64], d: &[f64], s: f64) -> Result<Vec<f64>> {
    let at = |t: f64| -> Vec<f64> { center.iter().zip(d).map(|(c, u)| c + t * u).collect() };
    let mut hi = p.half_width() * 1e-3;
    while p.value_unchecked(&at(hi)) < s {
        hi *= 2.0;
        if !p.in_box(&at(hi)) {
            return Err(Error::Coverage(format!("{{V = {s}}} not reached inside the box")));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if p.value_unchecked(&at(mid)) < s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(at(0.5 * (lo + hi)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CertificateThresholds {
    pub line_deviation: f64,
    pub spread: f64,
    pub transport_deviation: f64,
}

impl Default for CertificateThresholds {
    fn default() -> Self {
        Self { line_deviation: 1e-5, spread: 1e-4, transport_deviation: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowCertificate {
    pub center: Vec<f64>,
    pub spread: f64,
    pub max_line_deviation: f64,
    pub max_transport_deviation: f64,
    pub accepted: bool,
    pub thresholds: CertificateThresholds,
}

impl FlowCertificate {
    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        Ok(())
    }
}

/// Flows from every start, then checks straightness, transport under `F`
/// and concurrency of the fitted lines. A near-parallel bundle rejects with
/// infinite spread rather than failing.
pub fn certify(
    p: &AnalyticPotential,
    starts: &[Vec<f64>],
    f: &Curve,
    t_end: f64,
    dt: f64,
    thresholds: CertificateThresholds,
) -> Result<(Vec<Trajectory>, FlowCertificate)> {
    let trajs = par::try_map_range(starts.len(), |i| integrate_flowline(p, &starts[i], t_end, dt))?;
    let mut max_line = 0.0f64;
    let mut max_transport = 0.0f64;
    for t in &trajs {
        max_line = max_line.max(line_deviation(t)?);
        max_transport = max_transport.max(level_transport_check(t, f, t.s0)?);
    }
    let (center, spread) = match common_center_estimate(&trajs) {
        Ok(r) => r,
        Err(Error::IllConditioned(_)) => (vec![f64::NAN; p.dimension()], f64::INFINITY),
        Err(e) => return Err(e),
    };
    let accepted = max_line < thresholds.line_deviation
        && spread < thresholds.spread
        && max_transport < thresholds.transport_deviation;
    Ok((trajs, FlowCertificate { center, spread, max_line_deviation: max_line, max_transport_deviation: max_transport, accepted, thresholds }))
}
