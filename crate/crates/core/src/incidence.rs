//! Tube incidences by the high-low method.
//!
//! A family of unit-weight tubes `R^{1/2} x ... x R^{1/2} x R` (one lattice
//! of translates per canonical cap, in the cap's orthonormal frame) is
//! rasterized into the counting function `K` on the window
//! `[-R/2, R/2)^n`. `K` is split by sharp Fourier multipliers on the
//! shells of the anisotropic gauge attached to `B(alpha)`, and the level
//! sets and `L^2`, `L^infty` bounds are measured against their
//! predictions. Counting and volume estimates for `theta - theta` come with
//! exhaustive and monte-carlo oracles.

use std::collections::BTreeSet;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::caps::{normal_at, tangent_frame, AlphaVector, Cap, CapFamily, Scale};
use crate::packets::{cube_census, slab_census, CubeCensus, CubeGrid, SlabCensus};
use crate::rng::stream;
use crate::sum::{pairwise, CHUNK};
use crate::tubes::{Tube, TubeShape};
use crate::{Error, Result};

/// Cube enlargement used by the incidence audit.
pub const CUBE_ENLARGEMENT: f64 = 4.0;

/// Fraction of the field energy the ladder may fail to place.
pub const ALIASING_THRESHOLD: f64 = 1e-3;

/// Fewest monte-carlo samples before a volume estimate is flagged.
pub const MIN_VOLUME_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub enum Placement {
    /// Random lattice translates meeting the window.
    Uniform,
    /// All tubes of a cap inside one `(R^alpha, R)`-slab.
    Clustered,
    /// One tube per cap, all centred at the given point.
    Bush(Vec<f64>),
    /// Parallel tubes side by side in the cap at the origin corner.
    Brush,
}

impl Placement {
    pub fn as_str(&self) -> &'static str {
        match self {
            Placement::Uniform => "uniform",
            Placement::Clustered => "clustered",
            Placement::Bush(_) => "bush",
            Placement::Brush => "brush",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTubeFamily {
    pub alpha: AlphaVector,
    pub scale: Scale,
    pub placement: Placement,
    pub seed: u64,
    /// Corners of the caps carrying tubes, in cap order.
    pub thetas: Vec<Vec<i64>>,
    pub tubes: Vec<Tube>,
    pub slabs: SlabCensus,
    /// Largest number of tubes in one slab.
    pub n_i: usize,
}

impl SyntheticTubeFamily {
    pub fn dimension(&self) -> usize {
        self.alpha.dimension()
    }

    pub fn len(&self) -> usize {
        self.tubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tubes.is_empty()
    }

    /// Window `[-R/2, R/2)^n` as `(lo, hi)`.
    pub fn window(&self) -> (Vec<f64>, Vec<f64>) {
        let h = self.scale.as_f64() / 2.0;
        (vec![-h; self.dimension()], vec![h; self.dimension()])
    }
}

fn frame_tube(theta: &Cap, frame: &[Vec<f64>], cells: Vec<i64>, y: Vec<f64>) -> Tube {
    let n = y.len();
    let center: Vec<f64> = (0..n).map(|j| (0..n).map(|i| frame[i][j] * y[i]).sum()).collect();
    Tube {
        theta: theta.corner.clone(),
        translate: cells,
        weight: Complex64::new(1.0, 0.0),
        direction: normal_at(&theta.center()),
        center,
        local: y,
    }
}

fn meets_window(tube: &Tube, r: f64) -> bool {
    let n = tube.center.len();
    tube.shape(r, 1.0).intersects_box(&vec![0.0; n], &vec![r / 2.0; n])
}

pub fn build_family(
    alpha: &AlphaVector,
    scale: Scale,
    thetas_frac: f64,
    tubes_per_theta: usize,
    placement: Placement,
    seed: u64,
) -> Result<SyntheticTubeFamily> {
    let n = alpha.dimension();
    if !(thetas_frac > 0.0 && thetas_frac <= 1.0) {
        return Err(Error::Parameter(format!("theta fraction {thetas_frac} outside (0, 1]")));
    }
    if tubes_per_theta == 0 {
        return Err(Error::Parameter("tubes_per_theta must be positive".into()));
    }
    let canon = CapFamily::canonical(n, scale)?;
    let r = scale.as_f64();
    let side = r.sqrt();
    let m = (r / side).round() as i64;
    let thetas: Vec<Cap> = match placement {
        Placement::Brush => vec![canon.cap(vec![0; n - 1])],
        _ if thetas_frac >= 1.0 => canon.caps(),
        _ => {
            let mut rng = stream(seed, "family_select", 0);
            canon.caps().into_iter().filter(|_| rng.random::<f64>() < thetas_frac).collect()
        }
    };
    match &placement {
        Placement::Bush(p) if p.len() != n => return Err(Error::DimensionMismatch { expected: n, got: p.len() }),
        Placement::Bush(_) if tubes_per_theta > 1 => {
            return Err(Error::Parameter("a bush holds one tube per cap".into()))
        }
        Placement::Clustered => {
            let room: f64 = alpha.entries().iter().map(|&a| (scale.pow(a) / side).round()).product();
            if tubes_per_theta as f64 > room {
                return Err(Error::Parameter(format!("a slab holds at most {room} tubes")));
            }
        }
        Placement::Brush if tubes_per_theta as i64 > m => {
            return Err(Error::Parameter(format!("a brush holds at most {m} tubes")));
        }
        Placement::Uniform if tubes_per_theta as i64 > 2 * m.pow(n as u32 - 1) => {
            return Err(Error::Parameter("more tubes than lattice cells".into()));
        }
        _ => {}
    }
    let per_theta: Vec<Vec<Tube>> = thetas
        .par_iter()
        .map(|theta| -> Result<Vec<Tube>> {
            let frame = tangent_frame(&theta.center());
            let idx = canon.linear_index(&theta.corner) as u64;
            let mut rng = stream(seed, "family", idx);
            let mut out = Vec::with_capacity(tubes_per_theta);
            match &placement {
                Placement::Bush(p) => {
                    let mut t = frame_tube(theta, &frame, vec![0; n], vec![0.0; n]);
                    t.local = (0..n).map(|i| frame[i].iter().zip(p).map(|(a, b)| a * b).sum()).collect();
                    t.center = p.clone();
                    out.push(t);
                }
                Placement::Brush => {
                    for k in 0..tubes_per_theta as i64 {
                        let mut cells = vec![0i64; n];
                        cells[0] = k - tubes_per_theta as i64 / 2;
                        cells[n - 1] = -1;
                        let y: Vec<f64> = cells
                            .iter()
                            .enumerate()
                            .map(|(i, &c)| (c as f64 + 0.5) * if i + 1 < n { side } else { r })
                            .collect();
                        out.push(frame_tube(theta, &frame, cells, y));
                    }
                }
                Placement::Clustered => {
                    let widths: Vec<i64> =
                        alpha.entries().iter().map(|&a| (scale.pow(a) / side).round() as i64).collect();
                    let room: usize = widths.iter().product::<i64>() as usize;
                    for slot in rand::seq::index::sample(&mut rng, room, tubes_per_theta).into_iter() {
                        let mut rest = slot as i64;
                        let mut cells: Vec<i64> = widths
                            .iter()
                            .map(|&w| {
                                let k = rest % w;
                                rest /= w;
                                k
                            })
                            .collect();
                        cells.push(-1);
                        let y: Vec<f64> = cells
                            .iter()
                            .enumerate()
                            .map(|(i, &c)| (c as f64 + 0.5) * if i + 1 < n { side } else { r })
                            .collect();
                        out.push(frame_tube(theta, &frame, cells, y));
                    }
                }
                Placement::Uniform => {
                    let mut used = BTreeSet::new();
                    let mut attempts = 0usize;
                    while out.len() < tubes_per_theta {
                        attempts += 1;
                        if attempts > 1000 * tubes_per_theta {
                            return Err(Error::Parameter(format!(
                                "could not place {tubes_per_theta} tubes in the window"
                            )));
                        }
                        let mut cells: Vec<i64> = (0..n - 1).map(|_| rng.random_range(-m / 2..m / 2)).collect();
                        cells.push(rng.random_range(-1..1));
                        if used.contains(&cells) {
                            continue;
                        }
                        let y: Vec<f64> = cells
                            .iter()
                            .enumerate()
                            .map(|(i, &c)| (c as f64 + 0.5) * if i + 1 < n { side } else { r })
                            .collect();
                        let t = frame_tube(theta, &frame, cells.clone(), y);
                        if !meets_window(&t, r) {
                            continue;
                        }
                        used.insert(cells);
                        out.push(t);
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let tubes: Vec<Tube> = per_theta.into_iter().flatten().collect();
    let slabs = slab_census(&tubes, alpha, scale);
    Ok(SyntheticTubeFamily {
        alpha: alpha.clone(),
        scale,
        n_i: slabs.max_count,
        slabs,
        placement,
        seed,
        thetas: thetas.into_iter().map(|c| c.corner).collect(),
        tubes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffCount {
    pub count: usize,
    /// `R^{(n-3)/2} / |xi|`.
    pub predicted: f64,
    pub out_of_range: bool,
}

/// Whether `xi` lies in `theta - theta`, `theta` the `1/R` neighborhood
/// over the half-open cell `[corner, corner + w)`.
pub fn in_theta_difference(xi: &[f64], corner: &[f64], w: f64, r: f64) -> bool {
    let d = corner.len();
    let v = xi[d];
    let mut lo_sum = 0.0;
    let mut hi_sum = 0.0;
    for i in 0..d {
        let u = xi[i];
        if u.abs() >= w {
            return false;
        }
        // b ranges over [c, c + w) intersected with [c - u, c + w - u)
        let lo = corner[i] + (-u).max(0.0);
        let hi = corner[i] + w - u.max(0.0);
        let a = u * (2.0 * lo + u);
        let b = u * (2.0 * hi + u);
        lo_sum += a.min(b);
        hi_sum += a.max(b);
    }
    v >= lo_sum - 2.0 / r && v <= hi_sum + 2.0 / r
}

/// Number of canonical caps `theta` with `xi` in `theta - theta`.
pub fn theta_diff_count(xi: &[f64], scale: Scale) -> Result<DiffCount> {
    let n = xi.len();
    let canon = CapFamily::canonical(n, scale)?;
    let r = scale.as_f64();
    let w = 1.0 / canon.cells()[0] as f64;
    let count = canon
        .caps()
        .par_iter()
        .filter(|c| {
            let corner: Vec<f64> = (0..n - 1).map(|i| c.lower(i)).collect();
            in_theta_difference(xi, &corner, w, r)
        })
        .count();
    let norm = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
    let out_of_range = !(norm >= 1.0 / r * (1.0 - 1e-12) && norm <= r.powf(-0.5) * (1.0 + 1e-12));
    Ok(DiffCount { count, predicted: r.powf((n as f64 - 3.0) / 2.0) / norm, out_of_range })
}

/// Mean count over `draws` seeded uniformly random directions at radius `t`.
pub fn theta_diff_average(n: usize, scale: Scale, t: f64, draws: usize, seed: u64) -> Result<(f64, f64)> {
    let mut total = 0usize;
    let mut predicted = 0.0;
    for k in 0..draws {
        let mut rng = stream(seed, "diff_direction", k as u64);
        let dir = loop {
            let g: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-9 {
                break g.into_iter().map(|x| x / norm).collect::<Vec<_>>();
            }
        };
        let xi: Vec<f64> = dir.iter().map(|d| d * t).collect();
        let c = theta_diff_count(&xi, scale)?;
        total += c.count;
        predicted = c.predicted;
    }
    Ok((total as f64 / draws as f64, predicted))
}

fn gaussian<G: Rng>(rng: &mut G) -> f64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    let v: f64 = rng.random();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

/// Largest dyadic `t0` with `1/t0 <= R^{alpha_1}`.
pub fn base_level(alpha: &AlphaVector, scale: Scale) -> f64 {
    let top = scale.pow(alpha.max_entry());
    2f64.powi(-((top.log2() + 1e-9).floor() as i32))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapVolumeRecord {
    pub t: f64,
    pub t0: f64,
    /// `(1/R) prod_i min(R^{-1/2}, (t/t0) R^{alpha_1 - alpha_i})`.
    pub formula: f64,
    pub monte_carlo: f64,
    /// `(4/R) prod_i min(2 R^{-1/2}, 4 (t/t0) R^{-alpha_i})`, with the
    /// constants of the actual geometry.
    pub explicit: f64,
    pub samples: usize,
    pub few_samples: bool,
}

/// `|(theta - theta) cap (2t/t0) B(alpha)|` by rejection sampling in a
/// box containing the intersection.
pub fn theta_cap_volume(
    theta: &Cap,
    t: f64,
    alpha: &AlphaVector,
    scale: Scale,
    mc_samples: usize,
    seed: u64,
) -> Result<CapVolumeRecord> {
    let d = alpha.dimension() - 1;
    if theta.horizontal_dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: theta.horizontal_dim() });
    }
    let r = scale.as_f64();
    let t0 = base_level(alpha, scale);
    if !(t >= t0 * (1.0 - 1e-12) && t <= r.powf(-0.5) * (1.0 + 1e-12)) {
        return Err(Error::Parameter(format!("t = {t} outside [{t0}, R^-1/2]")));
    }
    if mc_samples == 0 {
        return Err(Error::Parameter("no monte-carlo samples".into()));
    }
    let a1 = alpha.max_entry();
    let k = t / t0;
    let formula = alpha.entries().iter().map(|&a| (r.powf(-0.5)).min(k * r.powf(a1 - a))).product::<f64>() / r;
    let explicit =
        4.0 / r * alpha.entries().iter().map(|&a| (2.0 * r.powf(-0.5)).min(4.0 * k * r.powf(-a))).product::<f64>();
    let mut half: Vec<f64> = alpha.entries().iter().map(|&a| 2.0 * k * r.powf(-a)).collect();
    half.push(2.0 * k * r.powf(-0.5));
    let corner: Vec<f64> = (0..d).map(|i| theta.lower(i)).collect();
    let w = theta.width(0);
    let hb: Vec<f64> = (0..d).map(|i| half[i].min(w)).collect();
    let reach: f64 = (0..d).map(|i| hb[i] * (2.0 * corner[i].abs() + 2.0 * w + hb[i])).sum::<f64>() + 2.0 / r;
    let mut bound = hb.clone();
    bound.push(half[d].min(reach));
    let chunks = mc_samples.div_ceil(CHUNK);
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, "cap_volume", c as u64);
            let len = CHUNK.min(mc_samples - c * CHUNK);
            let mut x = vec![0.0; d + 1];
            let mut hit = 0usize;
            for _ in 0..len {
                for (xi, b) in x.iter_mut().zip(&bound) {
                    *xi = (2.0 * rng.random::<f64>() - 1.0) * b;
                }
                if x.iter().zip(&half).all(|(v, h)| v.abs() <= *h) && in_theta_difference(&x, &corner, w, r) {
                    hit += 1;
                }
            }
            hit
        })
        .sum();
    let volume: f64 = bound.iter().map(|b| 2.0 * b).product();
    Ok(CapVolumeRecord {
        t,
        t0,
        formula,
        monte_carlo: hits as f64 / mc_samples as f64 * volume,
        explicit,
        samples: mc_samples,
        few_samples: mc_samples < MIN_VOLUME_SAMPLES,
    })
}

/// Dyadic levels `t` between the base level `t0` and `R^{-1/2}`.
pub fn dyadic_levels(alpha: &AlphaVector, scale: Scale) -> Vec<f64> {
    let top = scale.as_f64().powf(-0.5) * (1.0 + 1e-12);
    let mut t = base_level(alpha, scale);
    let mut out = Vec::new();
    while t <= top {
        out.push(t);
        t *= 2.0;
    }
    out
}

/// Frequency bands for the high-low split. The gauge of `xi` is
/// `max(|xi_i| R^{alpha_i}, |xi_n| R^{1/2})`; the low band is gauge `<= 2`
/// (the doubled `B(alpha)` box) and level `t` is the shell
/// `(t/t0, 2t/t0]`, the top level absorbing everything above.
#[derive(Debug, Clone, PartialEq)]
pub struct HighLowLadder {
    pub alpha: AlphaVector,
    pub scale: Scale,
    pub t0: f64,
    pub t_max: f64,
    /// High levels `2 t0, 4 t0, ..., t_max`.
    pub levels: Vec<f64>,
    /// Half sides `R^{-alpha_i}`, `R^{-1/2}` of `B(alpha)`.
    pub box_half: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Band {
    Low,
    Level(usize),
}

impl HighLowLadder {
    pub fn new(alpha: &AlphaVector, scale: Scale) -> Self {
        let t0 = base_level(alpha, scale);
        let all = dyadic_levels(alpha, scale);
        let t_max = *all.last().expect("t0 <= R^-1/2");
        let mut box_half: Vec<f64> = alpha.entries().iter().map(|&a| scale.pow(-a)).collect();
        box_half.push(scale.pow(-0.5));
        Self { alpha: alpha.clone(), scale, t0, t_max, levels: all[1..].to_vec(), box_half }
    }

    /// Number of bands, the low band included.
    pub fn band_count(&self) -> usize {
        self.levels.len() + 1
    }

    pub fn gauge(&self, xi: &[f64]) -> f64 {
        xi.iter().zip(&self.box_half).map(|(x, h)| x.abs() / h).fold(0.0, f64::max)
    }

    pub fn band(&self, xi: &[f64]) -> Band {
        let s = self.gauge(xi);
        if s <= 2.0 {
            return Band::Low;
        }
        for (i, t) in self.levels.iter().enumerate() {
            if s <= 2.0 * t / self.t0 {
                return Band::Level(i);
            }
        }
        Band::Level(self.levels.len().saturating_sub(1))
    }

    /// Gauge beyond the top shell: frequencies the ladder does not resolve.
    pub fn above_ladder(&self, xi: &[f64]) -> bool {
        self.gauge(xi) > 2.0 * self.t_max / self.t0
    }

    /// Largest `|sum of band multipliers - 1|` over the frequencies.
    pub fn partition_defect(&self, freqs: &[Vec<f64>]) -> f64 {
        freqs
            .iter()
            .map(|xi| {
                let b = self.band(xi);
                let sum: f64 = std::iter::once(Band::Low)
                    .chain((0..self.levels.len()).map(Band::Level))
                    .map(|c| if c == b { 1.0 } else { 0.0 })
                    .sum();
                (sum - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Samples of `K` at the midpoints of a cubic grid over `[-R/2, R/2)^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub n: usize,
    pub scale: Scale,
    /// Grid spacing.
    pub h: f64,
    /// Points per axis.
    pub m: usize,
    /// Row-major, last axis fastest.
    pub values: Vec<f64>,
}

impl DensityField {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.n as i32)
    }

    pub fn point(&self, mut index: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        let half = self.scale.as_f64() / 2.0;
        for i in (0..self.n).rev() {
            x[i] = (index % self.m) as f64 * self.h + 0.5 * self.h - half;
            index /= self.m;
        }
        x
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Spatial frequency of each sample index in FFT order.
    pub fn frequency(&self, mut index: usize) -> Vec<f64> {
        let mut xi = vec![0.0; self.n];
        let span = self.h * self.m as f64;
        for i in (0..self.n).rev() {
            let k = (index % self.m) as i64;
            let signed = if k >= self.m.div_ceil(2) as i64 { k - self.m as i64 } else { k };
            xi[i] = signed as f64 / span;
            index /= self.m;
        }
        xi
    }
}

fn raster(shape: &TubeShape, n: usize, m: usize, h: f64, half: f64) -> Vec<usize> {
    let reach = shape.bounding_half();
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for i in 0..n {
        let a = ((shape.center[i] - reach[i] + half) / h - 0.5).ceil().max(0.0) as i64;
        let b = ((shape.center[i] + reach[i] + half) / h - 0.5).floor().min(m as f64 - 1.0) as i64;
        if a > b {
            return Vec::new();
        }
        lo.push(a);
        hi.push(b);
    }
    let mut out = Vec::new();
    let mut k = lo.clone();
    let mut x = vec![0.0; n];
    'outer: loop {
        let mut idx = 0usize;
        for i in 0..n {
            x[i] = k[i] as f64 * h + 0.5 * h - half;
            idx = idx * m + k[i] as usize;
        }
        if shape.contains(&x) {
            out.push(idx);
        }
        for i in (0..n).rev() {
            if k[i] < hi[i] {
                k[i] += 1;
                continue 'outer;
            }
            k[i] = lo[i];
        }
        break;
    }
    out
}

/// `K = sum_T 1_T` on the grid of spacing `R^{1/2}/4`.
pub fn density_field(tubes: &[Tube], n: usize, scale: Scale) -> DensityField {
    let r = scale.as_f64();
    let h = r.sqrt() / 4.0;
    let m = (r / h).round() as usize;
    let per: Vec<Vec<usize>> = tubes.par_iter().map(|t| raster(&t.shape(r, 1.0), n, m, h, r / 2.0)).collect();
    let mut counts = vec![0u32; m.pow(n as u32)];
    for hits in &per {
        for &i in hits {
            counts[i] += 1;
        }
    }
    DensityField { n, scale, h, m, values: counts.into_iter().map(f64::from).collect() }
}

fn fft_axis(data: &mut [Complex64], m: usize, n: usize, axis: usize, fft: &Arc<dyn Fft<f64>>) {
    let stride = m.pow((n - 1 - axis) as u32);
    let block = stride * m;
    data.par_chunks_mut(block).for_each(|chunk| {
        let mut line = vec![Complex64::new(0.0, 0.0); m];
        for s in 0..stride {
            for (k, v) in line.iter_mut().enumerate() {
                *v = chunk[k * stride + s];
            }
            fft.process(&mut line);
            for (k, v) in line.iter().enumerate() {
                chunk[k * stride + s] = *v;
            }
        }
    });
}

fn fftn(data: &mut [Complex64], m: usize, n: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(m) } else { planner.plan_fft_forward(m) };
    for axis in 0..n {
        fft_axis(data, m, n, axis, &fft);
    }
    if inverse {
        let scale = 1.0 / data.len() as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighLowSplit {
    /// `K * eta_{t0}`.
    pub low: Vec<f64>,
    /// `(t, K * eta_t)` for the high levels.
    pub levels: Vec<(f64, Vec<f64>)>,
    /// `||K - sum of parts||_2 / ||K||_2`.
    pub reconstruction_error: f64,
    /// Share of the spectral energy the ladder does not resolve.
    pub aliasing: f64,
}

impl HighLowSplit {
    pub fn level(&self, t: f64) -> Option<&[f64]> {
        self.levels.iter().find(|(s, _)| (s / t - 1.0).abs() < 1e-9).map(|(_, v)| v.as_slice())
    }
}

pub fn highlow_split(field: &DensityField, ladder: &HighLowLadder) -> Result<HighLowSplit> {
    if ladder.alpha.dimension() != field.n {
        return Err(Error::DimensionMismatch { expected: field.n, got: ladder.alpha.dimension() });
    }
    let (n, m) = (field.n, field.m);
    let mut spec: Vec<Complex64> = field.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fftn(&mut spec, m, n, false);
    let bands: Vec<Band> = (0..spec.len()).into_par_iter().map(|i| ladder.band(&field.frequency(i))).collect();
    let energy: Vec<f64> = spec.iter().map(|v| v.norm_sqr()).collect();
    let lost: Vec<f64> =
        (0..spec.len()).map(|i| if ladder.above_ladder(&field.frequency(i)) { energy[i] } else { 0.0 }).collect();
    let total = pairwise(&energy);
    let aliasing = if total > 0.0 { pairwise(&lost) / total } else { 0.0 };
    if aliasing > ALIASING_THRESHOLD {
        return Err(Error::Aliasing { fraction: aliasing, threshold: ALIASING_THRESHOLD });
    }
    let filtered = |band: Band| -> Vec<f64> {
        let mut part: Vec<Complex64> =
            spec.iter().zip(&bands).map(|(v, b)| if *b == band { *v } else { Complex64::new(0.0, 0.0) }).collect();
        fftn(&mut part, m, n, true);
        part.into_iter().map(|v| v.re).collect()
    };
    let low = filtered(Band::Low);
    let levels: Vec<(f64, Vec<f64>)> =
        ladder.levels.iter().enumerate().map(|(i, &t)| (t, filtered(Band::Level(i)))).collect();
    let diff: Vec<f64> = (0..field.len())
        .map(|i| {
            let s = low[i] + levels.iter().map(|(_, v)| v[i]).sum::<f64>();
            (s - field.values[i]).powi(2)
        })
        .collect();
    let norm: Vec<f64> = field.values.iter().map(|v| v * v).collect();
    let denom = pairwise(&norm);
    Ok(HighLowSplit {
        reconstruction_error: if denom > 0.0 { (pairwise(&diff) / denom).sqrt() } else { pairwise(&diff).sqrt() },
        aliasing,
        low,
        levels,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetRecord {
    pub r: f64,
    /// `c_L (log2 R) r = r / #bands`.
    pub threshold: f64,
    pub u_measure: f64,
    pub omega: Vec<(f64, f64)>,
    pub l_measure: f64,
    pub u_samples: usize,
}

/// Measures of `U_r = {r <= K < 2r}`, `Omega_t = {|K * eta_t| >= thr}`
/// and `L = {|K * eta_{t0}| >= thr}`, checking `U_r` inside the union.
pub fn level_sets(
    field: &DensityField,
    split: &HighLowSplit,
    ladder: &HighLowLadder,
    r: f64,
) -> Result<LevelSetRecord> {
    if !(r >= 1.0) {
        return Err(Error::Parameter(format!("level r = {r} below 1")));
    }
    let threshold = r / ladder.band_count() as f64;
    let cut = threshold * (1.0 - 1e-9);
    let cell = field.cell_volume();
    let mut u = 0usize;
    let mut l = 0usize;
    let mut omega = vec![0usize; split.levels.len()];
    for i in 0..field.len() {
        let k = field.values[i];
        let in_l = split.low[i].abs() >= cut;
        l += in_l as usize;
        let mut covered = in_l;
        for (j, (_, v)) in split.levels.iter().enumerate() {
            if v[i].abs() >= cut {
                omega[j] += 1;
                covered = true;
            }
        }
        if k >= r && k < 2.0 * r {
            u += 1;
            if !covered {
                return Err(Error::Containment { index: i, value: k });
            }
        }
    }
    Ok(LevelSetRecord {
        r,
        threshold,
        u_measure: u as f64 * cell,
        omega: split.levels.iter().zip(omega).map(|((t, _), c)| (*t, c as f64 * cell)).collect(),
        l_measure: l as f64 * cell,
        u_samples: u,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditRatio {
    pub measured: f64,
    pub bound: f64,
    pub ratio: f64,
}

/// `||K * eta_t||_2^2 / (N_i #T R^{n - 1/2})` over the window.
pub fn highfreq_l2_audit(
    family: &SyntheticTubeFamily,
    field: &DensityField,
    split: &HighLowSplit,
    t: f64,
) -> Result<AuditRatio> {
    let part = split.level(t).ok_or_else(|| Error::Parameter(format!("t = {t} is not a high level")))?;
    let squares: Vec<f64> = part.iter().map(|v| v * v).collect();
    let measured = pairwise(&squares) * field.cell_volume();
    let n = family.dimension() as f64;
    let bound = family.n_i as f64 * family.len() as f64 * family.scale.pow(n - 0.5);
    Ok(AuditRatio { measured, bound, ratio: measured / bound })
}

/// `max K * eta_{t0} / (N_i R^{n - 1 - |alpha|})`.
pub fn lowfreq_density_audit(family: &SyntheticTubeFamily, split: &HighLowSplit) -> AuditRatio {
    let measured = split.low.iter().copied().fold(0.0, f64::max);
    let n = family.dimension() as f64;
    let bound = family.n_i as f64 * family.scale.pow(n - 1.0 - family.alpha.weight());
    AuditRatio { measured, bound, ratio: measured / bound }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceRecord {
    pub r: usize,
    /// `#Q_r`.
    pub measured: usize,
    /// `#T (R^{(n-1)/2} N_i / r^{2|alpha| - n + 2})^{1/(2|alpha| - n + 1)}`.
    pub bound: f64,
    pub ratio: f64,
}

/// Cube census of the family on the window with enlargement `c`.
pub fn family_census(family: &SyntheticTubeFamily, enlargement: f64) -> CubeCensus {
    let (lo, hi) = family.window();
    let grid = CubeGrid::new(lo, &hi, family.scale);
    cube_census(&family.tubes, family.scale, grid, enlargement, 1.0)
}

fn incidence_exponent(family: &SyntheticTubeFamily) -> Result<f64> {
    let n = family.dimension() as f64;
    let w = family.alpha.weight();
    let e = 2.0 * w - n + 1.0;
    if e.abs() < 1e-12 {
        return Err(Error::SingularExponent(w));
    }
    if !(e > 0.0 && w <= n / 2.0 + 1e-12) {
        return Err(Error::Hypothesis(format!("|alpha| = {w} outside ((n-1)/2, n/2]")));
    }
    Ok(e)
}

/// Incidence audit at level `r` against a precomputed census.
pub fn incidence_record(family: &SyntheticTubeFamily, census: &CubeCensus, r: usize) -> Result<IncidenceRecord> {
    let e = incidence_exponent(family)?;
    if r == 0 {
        return Err(Error::Parameter("r must be positive".into()));
    }
    let n = family.dimension() as f64;
    let measured = census.counts.values().filter(|&&c| c >= r && c < 2 * r).count();
    let inner = family.scale.pow((n - 1.0) / 2.0) * family.n_i as f64 / (r as f64).powf(e + 1.0);
    let bound = family.len() as f64 * inner.powf(1.0 / e);
    Ok(IncidenceRecord { r, measured, bound, ratio: measured as f64 / bound })
}

pub fn incidence_audit(family: &SyntheticTubeFamily, r: usize) -> Result<IncidenceRecord> {
    incidence_exponent(family)?;
    incidence_record(family, &family_census(family, CUBE_ENLARGEMENT), r)
}

/// Records for every dyadic `r` up to the largest cube count.
pub fn incidence_sweep(family: &SyntheticTubeFamily, enlargement: f64) -> Result<Vec<IncidenceRecord>> {
    incidence_exponent(family)?;
    let census = family_census(family, enlargement);
    let top = census.max_count();
    let mut out = Vec::new();
    let mut r = 1usize;
    while r <= top.max(1) {
        out.push(incidence_record(family, &census, r)?);
        r *= 2;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn alpha(v: &[f64]) -> AlphaVector {
        AlphaVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn family_sizes_and_determinism() {
        let a = alpha(&[1.0]);
        let r = Scale::new(256).unwrap();
        let f = build_family(&a, r, 1.0, 1, Placement::Uniform, 3).unwrap();
        assert_eq!(f.len(), 32);
        let g = build_family(&a, r, 1.0, 1, Placement::Uniform, 3).unwrap();
        assert_eq!(f, g);
        let part = build_family(&a, r, 0.5, 4, Placement::Uniform, 3).unwrap();
        assert_eq!(part.len(), 4 * part.thetas.len());
        assert!(part.tubes.iter().all(|t| meets_window(t, 256.0)));
    }

    #[test]
    fn clustered_family_fills_one_slab() {
        let r = Scale::new(256).unwrap();
        let f = build_family(&alpha(&[1.0]), r, 0.25, 5, Placement::Clustered, 1).unwrap();
        assert_eq!(f.n_i, 5);
        let f = build_family(&alpha(&[0.75, 1.0]), r, 0.02, 6, Placement::Clustered, 1).unwrap();
        assert_eq!(f.n_i, 6);
        assert!(build_family(&alpha(&[0.5]), r, 1.0, 2, Placement::Clustered, 1).is_err());
    }

    #[test]
    fn diff_count_at_zero_is_everything() {
        for n in [2, 3] {
            let r = Scale::new(256).unwrap();
            let c = theta_diff_count(&vec![0.0; n], r).unwrap();
            assert_eq!(c.count, CapFamily::canonical(n, r).unwrap().len());
            assert!(c.out_of_range);
        }
    }

    #[test]
    fn diff_membership_matches_sampling() {
        // draw pairs of neighborhood points from one cell and check their differences
        let r = 64.0;
        let w = 0.125;
        let corner = [0.25, -0.5];
        let mut rng = stream(0, "test_diff", 0);
        for _ in 0..2000 {
            let b1: Vec<f64> = corner.iter().map(|c| c + w * rng.random::<f64>()).collect();
            let b2: Vec<f64> = corner.iter().map(|c| c + w * rng.random::<f64>()).collect();
            let h = |b: &[f64], d: f64| b.iter().map(|x| x * x).sum::<f64>() + d;
            let xi = [
                b1[0] - b2[0],
                b1[1] - b2[1],
                h(&b1, (2.0 * rng.random::<f64>() - 1.0) / r) - h(&b2, (2.0 * rng.random::<f64>() - 1.0) / r),
            ];
            assert!(in_theta_difference(&xi, &corner, w, r));
        }
        assert!(!in_theta_difference(&[0.2, 0.0, 0.0], &corner, w, r));
        assert!(!in_theta_difference(&[0.0, 0.0, 0.1], &corner, w, r));
    }

    #[test]
    fn diff_count_top_scale_two_dimensions() {
        let r = Scale::new(256).unwrap();
        let c = theta_diff_count(&[1.0 / 16.0 * 0.999, 0.0], r).unwrap();
        assert!(!c.out_of_range);
        let ratio = c.count as f64 / c.predicted;
        assert!((1.0 / 8.0..=8.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn cap_volume_closed_forms() {
        let r = Scale::new(256).unwrap();
        let canon = CapFamily::canonical(3, r).unwrap();
        let theta = canon.cap(vec![0, 0]);
        let a = alpha(&[0.75, 0.75]);
        let t0 = base_level(&a, r);
        let rec = theta_cap_volume(&theta, t0, &a, r, 20_000, 1).unwrap();
        assert_relative_eq!(rec.formula, 256f64.powf(-2.0), max_relative = 1e-12);
        let b = alpha(&[1.0, 0.5]);
        let rec = theta_cap_volume(&theta, base_level(&b, r), &b, r, 20_000, 1).unwrap();
        assert_relative_eq!(rec.formula, 256f64.powf(-2.0), max_relative = 1e-12);
        assert!(rec.monte_carlo > 0.0);
        assert!(theta_cap_volume(&theta, 1.0, &b, r, 100, 1).is_err());
        assert!(theta_cap_volume(&theta, t0, &a, r, 100, 1).unwrap().few_samples);
    }

    #[test]
    fn ladder_partition_is_exact() {
        let a = alpha(&[1.0]);
        let r = Scale::new(256).unwrap();
        let ladder = HighLowLadder::new(&a, r);
        assert_relative_eq!(ladder.t0, 1.0 / 256.0);
        assert_eq!(ladder.levels.len(), 4);
        let freqs: Vec<Vec<f64>> = (0..400).map(|k| vec![(k as f64 - 200.0) / 1600.0, k as f64 / 3200.0]).collect();
        assert_eq!(ladder.partition_defect(&freqs), 0.0);
    }

    #[test]
    fn constant_field_is_all_low() {
        let a = alpha(&[1.0]);
        let r = Scale::new(256).unwrap();
        let field = DensityField { n: 2, scale: r, h: 4.0, m: 64, values: vec![3.0; 64 * 64] };
        let split = highlow_split(&field, &HighLowLadder::new(&a, r)).unwrap();
        assert!(split.low.iter().all(|v| (v - 3.0).abs() < 1e-9));
        assert!(split.levels.iter().all(|(_, v)| v.iter().all(|x| x.abs() < 1e-9)));
    }

    #[test]
    fn pure_oscillation_lands_in_one_level() {
        let a = alpha(&[1.0]);
        let r = Scale::new(256).unwrap();
        let ladder = HighLowLadder::new(&a, r);
        // frequency 8/R along axis 0: gauge 8, the level (4, 8]
        let mut field = DensityField { n: 2, scale: r, h: 4.0, m: 64, values: vec![0.0; 64 * 64] };
        for i in 0..field.len() {
            let x = field.point(i);
            field.values[i] = (2.0 * std::f64::consts::PI * 8.0 * x[0] / 256.0).cos();
        }
        let split = highlow_split(&field, &ladder).unwrap();
        let t = 4.0 * ladder.t0;
        for (s, v) in &split.levels {
            let own = (s / t - 1.0).abs() < 1e-9;
            for (x, k) in v.iter().zip(&field.values) {
                assert!((x - if own { *k } else { 0.0 }).abs() < 1e-9);
            }
        }
        assert!(split.low.iter().all(|x| x.abs() < 1e-9));
    }

    #[test]
    fn random_family_split_and_levels() {
        let a = alpha(&[1.0]);
        let r = Scale::new(256).unwrap();
        let fam = build_family(&a, r, 0.5, 4, Placement::Uniform, 9).unwrap();
        let field = density_field(&fam.tubes, 2, r);
        assert!(field.max() <= fam.len() as f64);
        let ladder = HighLowLadder::new(&a, r);
        let split = highlow_split(&field, &ladder).unwrap();
        assert!(split.reconstruction_error <= 1e-6);
        let mut cumulative = f64::INFINITY;
        let mut rr = 1.0;
        while rr <= field.max() {
            let rec = level_sets(&field, &split, &ladder, rr).unwrap();
            let above: f64 = field.values.iter().filter(|&&k| k >= rr).count() as f64 * field.cell_volume();
            assert!(above <= cumulative);
            cumulative = above;
            assert!(rec.u_measure <= above);
            rr *= 2.0;
        }
        let top = level_sets(&field, &split, &ladder, 2.0 * fam.len() as f64).unwrap();
        assert_eq!(top.u_samples, 0);
    }

    #[test]
    fn single_tube_level_set_is_its_volume() {
        let r = Scale::new(256).unwrap();
        let mut fam = build_family(&alpha(&[1.0]), r, 1.0, 1, Placement::Bush(vec![0.0, 0.0]), 0).unwrap();
        fam.tubes.truncate(1);
        fam.n_i = 1;
        let field = density_field(&fam.tubes, 2, r);
        let ladder = HighLowLadder::new(&fam.alpha, r);
        let split = highlow_split(&field, &ladder).unwrap();
        let rec = level_sets(&field, &split, &ladder, 1.0).unwrap();
        let volume = 256f64.powf(1.5);
        assert!((rec.u_measure / volume - 1.0).abs() <= 0.3, "{}", rec.u_measure);
        let low = lowfreq_density_audit(&fam, &split);
        assert!(low.ratio <= 2.0);
    }

    #[test]
    fn incidence_singular_and_trivial_cases() {
        let r = Scale::new(256).unwrap();
        let half = build_family(&alpha(&[0.5]), r, 0.25, 1, Placement::Uniform, 0).unwrap();
        assert!(matches!(incidence_audit(&half, 1), Err(Error::SingularExponent(_))));
        let fam = build_family(&alpha(&[1.0]), r, 1.0, 1, Placement::Uniform, 2).unwrap();
        let census = family_census(&fam, CUBE_ENLARGEMENT);
        let big = incidence_record(&fam, &census, 4 * fam.len()).unwrap();
        assert_eq!(big.measured, 0);
        assert_eq!(big.ratio, 0.0);
        let sweep = incidence_sweep(&fam, CUBE_ENLARGEMENT).unwrap();
        assert_eq!(sweep[0].r, 1);
        assert!(sweep[0].ratio <= 4.0);
    }
}
