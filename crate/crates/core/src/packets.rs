//! Wave packets at scale `R`.
//!
//! Analysis: each canonical piece `P_theta F` is written in the sheared
//! frame `y' = x' + 2c x_n`, `y_n = x_n` (`c` the cap center), where its
//! spectrum lies in a box of half-widths `s`. Sampling the demodulated
//! piece on the lattice `(1/4s) Z^n` and interpolating with a separable
//! raised-cosine kernel whose transform is 1 on the box reproduces it; the
//! samples are the tube weights.
//!
//! Synthesis: explicit packet signals whose packets are exactly orthogonal
//! on a period box, used by the refined decoupling audits.
//!
//! Censuses: tubes per `(R^alpha, R)`-slab and per `R^{1/2}`-cube.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::caps::{caps_in_theta, cells_per_unit, normal_at, AlphaVector, CapFamily, Scale};
use crate::decoupling::part_norms;
use crate::quadrature::{mean_powers, sample_layout, QuadratureSpec, Region, Samples};
use crate::signal::{unit_phase, AtomicSignal, FrequencyAtom, Spectrum};
use crate::sum::pairwise;
use crate::tubes::Tube;
use crate::{Error, Result};

/// Lattice steps kept on each side of a point when reconstructing.
pub const PACKET_MARGIN: usize = 8;

/// Fattening exponent for the refined decoupling incidence count.
pub const FAT_DELTA: f64 = 0.05;

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Raised-cosine kernel with transform equal to 1 on `[-s, s]` and
/// vanishing outside `[-2s, 2s]`.
pub fn window(y: f64, s: f64) -> f64 {
    let den = 1.0 - (2.0 * s * y).powi(2);
    if den.abs() < 1e-9 {
        0.25 * PI * sinc(1.5) * 3.0 * s
    } else {
        3.0 * s * sinc(3.0 * s * y) * (PI * s * y).cos() / den
    }
}

/// `(A, tau)`: the largest lattice L1 mass `sum_k D |phi(y - kD)|` over
/// positions, and the largest mass outside the `margin` nearest steps.
pub fn window_constants(margin: usize) -> (f64, f64) {
    const FAR: i64 = 20_000;
    let term = |u: f64| 0.25 * window(0.25 * u, 1.0).abs();
    let mut total = 0.0f64;
    let mut tail = 0.0f64;
    for step in 0..=32 {
        let off = -0.5 + step as f64 / 32.0;
        let mut all = Vec::with_capacity(2 * FAR as usize + 1);
        let mut outside = Vec::new();
        for j in -FAR..=FAR {
            let v = term(off + j as f64);
            all.push(v);
            if j.unsigned_abs() as usize > margin {
                outside.push(v);
            }
        }
        total = total.max(pairwise(&all));
        tail = tail.max(pairwise(&outside));
    }
    // terms beyond FAR decay like 4/(pi u^3)
    (total + 1e-8, tail + 1e-8)
}

#[derive(Debug, Clone, PartialEq)]
struct ThetaBlock {
    corner: Vec<i64>,
    center: Vec<f64>,
    /// Demodulated frequencies, `n` per atom.
    eta: Vec<f64>,
    amps: Vec<Complex64>,
}

impl ThetaBlock {
    fn h(&self, y: &[f64]) -> Complex64 {
        let n = y.len();
        self.amps
            .iter()
            .enumerate()
            .map(|(j, a)| {
                let t: f64 = self.eta[j * n..(j + 1) * n].iter().zip(y).map(|(e, v)| e * v).sum();
                a * unit_phase(t)
            })
            .sum()
    }

    fn sheared(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let mut y = x.to_vec();
        for i in 0..n - 1 {
            y[i] += 2.0 * self.center[i] * x[n - 1];
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacketDecomposition {
    scale: Scale,
    n: usize,
    window_lo: Vec<f64>,
    window_hi: Vec<f64>,
    margin: usize,
    /// Spectral half-widths per sheared axis.
    halves: Vec<f64>,
    steps: Vec<f64>,
    normal_center: f64,
    blocks: Vec<ThetaBlock>,
    energy: f64,
    abs_sum: f64,
    window_tail: f64,
}

/// Default working window: the cube of side `R/2` centred at the origin.
pub fn default_window(n: usize, scale: Scale) -> (Vec<f64>, Vec<f64>) {
    let h = scale.as_f64() / 4.0;
    (vec![-h; n], vec![h; n])
}

/// Wave packet decomposition of `F` over the canonical caps at `F`'s scale.
pub fn decompose(signal: &AtomicSignal, window_box: Option<(Vec<f64>, Vec<f64>)>) -> Result<PacketDecomposition> {
    let n = signal.dimension();
    let scale = signal.scale();
    let (lo, hi) = window_box.unwrap_or_else(|| default_window(n, scale));
    if lo.len() != n || hi.len() != n || lo.iter().zip(&hi).any(|(a, b)| !(b > a)) {
        return Err(Error::Parameter("degenerate packet window".into()));
    }
    let canon = CapFamily::canonical(n, scale)?;
    let (m, _) = cells_per_unit(scale, 0.5);
    let w = 1.0 / m as f64;
    let r = scale.as_f64();
    let normal_center = (n - 1) as f64 * w * w / 8.0;
    let mut halves = vec![0.5 * w; n];
    halves[n - 1] = normal_center + 1.0 / r;
    let steps: Vec<f64> = halves.iter().map(|s| 0.25 / s).collect();
    let mut groups: BTreeMap<usize, Vec<&FrequencyAtom>> = BTreeMap::new();
    for a in signal.atoms() {
        let corner = canon.locate(&a.xi[..n - 1]);
        groups.entry(canon.linear_index(&corner)).or_default().push(a);
    }
    let blocks = groups
        .into_iter()
        .map(|(idx, atoms)| {
            let cap = canon.cap(canon.corner_at(idx));
            let center = cap.center();
            let c2: f64 = center.iter().map(|c| c * c).sum();
            let mut eta = Vec::with_capacity(n * atoms.len());
            for a in &atoms {
                let mut cross = 0.0;
                for i in 0..n - 1 {
                    let e = a.xi[i] - center[i];
                    cross += 2.0 * center[i] * e;
                    eta.push(e);
                }
                eta.push(a.xi[n - 1] - cross - c2 - normal_center);
            }
            ThetaBlock { corner: cap.corner.clone(), center, eta, amps: atoms.iter().map(|a| a.amplitude).collect() }
        })
        .collect();
    let (_, tail) = window_constants(PACKET_MARGIN);
    Ok(PacketDecomposition {
        scale,
        n,
        window_lo: lo,
        window_hi: hi,
        margin: PACKET_MARGIN,
        halves,
        steps,
        normal_center,
        blocks,
        energy: signal.energy(),
        abs_sum: signal.atoms().iter().map(|a| a.amplitude.norm()).sum(),
        window_tail: tail,
    })
}

impl PacketDecomposition {
    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn window(&self) -> (&[f64], &[f64]) {
        (&self.window_lo, &self.window_hi)
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn halves(&self) -> &[f64] {
        &self.halves
    }

    pub fn margin(&self) -> usize {
        self.margin
    }

    /// Number of canonical caps carrying atoms.
    pub fn theta_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// `prod_i D_i phi_i(0)`: the weight of a tube whose sampled piece is 1.
    pub fn window_mass(&self) -> f64 {
        self.steps.iter().zip(&self.halves).map(|(d, s)| d * window(0.0, *s)).product()
    }

    /// Pointwise bound on `|reconstruct - F|` from truncating the kernel
    /// sums to the margin.
    pub fn error_bound(&self) -> f64 {
        let (a, tau) = window_constants(self.margin);
        let n = self.n as i32;
        self.abs_sum * (a.powi(n) - (a - tau).powi(n))
    }

    /// `error_bound / (sum |a_j|^2)^{1/2}`.
    pub fn relative_error_bound(&self) -> f64 {
        if self.energy > 0.0 {
            self.error_bound() / self.energy.sqrt()
        } else {
            0.0
        }
    }

    /// Kernel tail mass per axis at the decomposition's margin.
    pub fn window_tail(&self) -> f64 {
        self.window_tail
    }

    fn modulation(&self, block: &ThetaBlock, x: &[f64]) -> Complex64 {
        let n = self.n;
        let c2: f64 = block.center.iter().map(|c| c * c).sum();
        let t: f64 = block.center.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + (c2 + self.normal_center) * x[n - 1];
        unit_phase(t)
    }

    /// Visits the lattice points of one block whose tube centers lie in the
    /// window: `(translate, sheared center, spatial center)`.
    fn visit_window<F: FnMut(&[i64], &[f64], &[f64])>(&self, block: &ThetaBlock, mut f: F) {
        let n = self.n;
        let (lo, hi) = (&self.window_lo, &self.window_hi);
        let mut kmin = Vec::with_capacity(n);
        let mut kmax = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b) = if i + 1 < n {
                let s0 = 2.0 * block.center[i] * lo[n - 1];
                let s1 = 2.0 * block.center[i] * hi[n - 1];
                (lo[i] + s0.min(s1), hi[i] + s0.max(s1))
            } else {
                (lo[i], hi[i])
            };
            kmin.push((a / self.steps[i]).floor() as i64);
            kmax.push((b / self.steps[i]).ceil() as i64);
        }
        let mut k = kmin.clone();
        let mut y = vec![0.0; n];
        let mut x = vec![0.0; n];
        'outer: loop {
            for i in 0..n {
                y[i] = k[i] as f64 * self.steps[i];
            }
            x[n - 1] = y[n - 1];
            for i in 0..n - 1 {
                x[i] = y[i] - 2.0 * block.center[i] * y[n - 1];
            }
            if x.iter().zip(lo).zip(hi).all(|((v, a), b)| *v >= *a && *v < *b) {
                f(&k, &y, &x);
            }
            for i in 0..n {
                if k[i] < kmax[i] {
                    k[i] += 1;
                    continue 'outer;
                }
                k[i] = kmin[i];
            }
            break;
        }
    }

    /// Tubes centred in the window, grouped by cap in cap order.
    pub fn tubes(&self) -> Vec<Tube> {
        let mass = self.window_mass();
        self.blocks
            .par_iter()
            .map(|block| {
                let direction = normal_at(&block.center);
                let mut out = Vec::new();
                self.visit_window(block, |k, y, x| {
                    let demod = unit_phase(-self.normal_center * y[self.n - 1]);
                    out.push(Tube {
                        theta: block.corner.clone(),
                        translate: k.to_vec(),
                        weight: block.h(y) * demod * mass,
                        direction: direction.clone(),
                        center: x.to_vec(),
                        local: y.to_vec(),
                    });
                });
                out
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    }

    /// Mean of `|w_T / mass|^2` over the tubes centred in the window,
    /// divided by `sum_j |a_j|^2`, the mean of `|F|^2`.
    pub fn energy_ratio(&self) -> f64 {
        if self.energy == 0.0 {
            return 0.0;
        }
        let per_block: Vec<(f64, usize)> = self
            .blocks
            .par_iter()
            .map(|block| {
                let mut v = Vec::new();
                self.visit_window(block, |_, y, _| v.push(block.h(y).norm_sqr()));
                (pairwise(&v), v.len())
            })
            .collect();
        // every cap sees the same window, so the per-cap means add up
        let means: Vec<f64> = per_block.iter().map(|&(s, k)| if k > 0 { s / k as f64 } else { 0.0 }).collect();
        pairwise(&means) / self.energy
    }

    /// `sum_T w_T W_T(x)` at each point, with `W_T` the kernel translate
    /// normalised to modulus 1 at the tube center.
    pub fn reconstruct(&self, points: &[Vec<f64>]) -> Vec<Complex64> {
        let n = self.n;
        let m = self.margin as i64;
        let width = 2 * self.margin + 1;
        points
            .par_iter()
            .map(|x| {
                let mut total = Complex64::new(0.0, 0.0);
                let mut kernel = vec![0.0; n * width];
                let mut first = vec![0i64; n];
                for block in &self.blocks {
                    let y = block.sheared(x);
                    for i in 0..n {
                        let k0 = (y[i] / self.steps[i]).round() as i64;
                        first[i] = k0 - m;
                        for l in 0..width {
                            let yk = (k0 - m + l as i64) as f64 * self.steps[i];
                            kernel[i * width + l] = self.steps[i] * window(y[i] - yk, self.halves[i]);
                        }
                    }
                    let mut piece = Complex64::new(0.0, 0.0);
                    for (j, a) in block.amps.iter().enumerate() {
                        let mut prod = *a;
                        for i in 0..n {
                            let e = block.eta[j * n + i] * self.steps[i];
                            let mut z = unit_phase(e * first[i] as f64);
                            let rot = unit_phase(e);
                            let mut s = Complex64::new(0.0, 0.0);
                            for l in 0..width {
                                s += z * kernel[i * width + l];
                                z *= rot;
                            }
                            prod *= s;
                        }
                        piece += prod;
                    }
                    total += piece * self.modulation(block, x);
                }
                total
            })
            .collect()
    }
}

/// Relative `l^2` error of `approx` against `exact`.
pub fn relative_l2_error(approx: &[Complex64], exact: &[Complex64]) -> f64 {
    let num: Vec<f64> = approx.iter().zip(exact).map(|(a, b)| (a - b).norm_sqr()).collect();
    let den: Vec<f64> = exact.iter().map(|b| b.norm_sqr()).collect();
    (pairwise(&num) / pairwise(&den)).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightClass {
    /// `floor(log2 |w_T|)` shared by the members.
    pub level: i32,
    pub members: Vec<usize>,
    /// `sum |w_T|^2` over the members.
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightClasses {
    /// Ordered by decreasing mass.
    pub classes: Vec<WeightClass>,
    /// Tubes at or below `1e-12 max |w|`.
    pub below_floor: Vec<usize>,
    pub total_mass: f64,
}

impl WeightClasses {
    /// Mass share of the heaviest class.
    pub fn retained_fraction(&self) -> f64 {
        match self.classes.first() {
            Some(c) if self.total_mass > 0.0 => c.mass / self.total_mass,
            _ => 0.0,
        }
    }
}

pub fn pigeonhole_weights(tubes: &[Tube]) -> WeightClasses {
    let max = tubes.iter().map(|t| t.weight.norm()).fold(0.0, f64::max);
    let floor = 1e-12 * max;
    let mut by_level: BTreeMap<i32, WeightClass> = BTreeMap::new();
    let mut below = Vec::new();
    for (i, t) in tubes.iter().enumerate() {
        let a = t.weight.norm();
        if !(a > floor) {
            below.push(i);
            continue;
        }
        let level = a.log2().floor() as i32;
        let c = by_level.entry(level).or_insert(WeightClass { level, members: Vec::new(), mass: 0.0 });
        c.members.push(i);
        c.mass += a * a;
    }
    let mut classes: Vec<WeightClass> = by_level.into_values().collect();
    classes.sort_by(|a, b| b.mass.total_cmp(&a.mass).then(b.level.cmp(&a.level)));
    let total_mass = classes.iter().map(|c| c.mass).sum();
    WeightClasses { classes, below_floor: below, total_mass }
}

/// `(cap corner, slab translate)`.
pub type SlabKey = (Vec<i64>, Vec<i64>);

#[derive(Debug, Clone, PartialEq)]
pub struct SlabCensus {
    pub counts: BTreeMap<SlabKey, usize>,
    /// Largest count within the dyadic count class of largest mass.
    pub n_i: usize,
    pub max_count: usize,
    pub retained_fraction: f64,
    pub total: usize,
}

/// Slab of `(R^alpha, R)` boxes (tangential sides `R^{alpha_i}`, long side
/// `R`) in the tube's cap frame containing the tube center.
pub fn slab_of(tube: &Tube, alpha: &AlphaVector, scale: Scale) -> SlabKey {
    let n = tube.local.len();
    let mut t: Vec<i64> =
        alpha.entries().iter().zip(&tube.local).map(|(&a, &y)| (y / scale.pow(a)).floor() as i64).collect();
    t.push((tube.local[n - 1] / scale.as_f64()).floor() as i64);
    (tube.theta.clone(), t)
}

pub fn slab_census(tubes: &[Tube], alpha: &AlphaVector, scale: Scale) -> SlabCensus {
    let mut counts: BTreeMap<SlabKey, usize> = BTreeMap::new();
    let mut masses: BTreeMap<SlabKey, f64> = BTreeMap::new();
    let weighted = tubes.iter().any(|t| t.weight.norm_sqr() > 0.0);
    for t in tubes {
        let key = slab_of(t, alpha, scale);
        *counts.entry(key.clone()).or_default() += 1;
        *masses.entry(key).or_default() += if weighted { t.weight.norm_sqr() } else { 1.0 };
    }
    let mut classes: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for (key, &c) in &counts {
        let e = classes.entry(c.ilog2()).or_insert((0.0, 0));
        e.0 += masses[key];
        e.1 = e.1.max(c);
    }
    let total_mass: f64 = masses.values().sum();
    let best = classes.values().fold((0.0, 0), |acc, &(mass, top)| if mass > acc.0 { (mass, top) } else { acc });
    SlabCensus {
        n_i: best.1,
        max_count: counts.values().copied().max().unwrap_or(0),
        retained_fraction: if total_mass > 0.0 { best.0 / total_mass } else { 0.0 },
        total: tubes.len(),
        counts,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubeGrid {
    pub lo: Vec<f64>,
    pub side: f64,
    pub cells: Vec<usize>,
    /// Period of the window when tubes wrap around it.
    pub period: Option<f64>,
}

impl CubeGrid {
    /// Cubes of side `R^{1/2}` tiling `[lo, hi)`.
    pub fn new(lo: Vec<f64>, hi: &[f64], scale: Scale) -> Self {
        let side = scale.as_f64().sqrt();
        let cells = lo.iter().zip(hi).map(|(a, b)| (((b - a) / side).ceil() as usize).max(1)).collect();
        Self { lo, side, cells, period: None }
    }

    pub fn periodic(mut self, period: f64) -> Self {
        self.period = Some(period);
        self
    }

    pub fn len(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn center(&self, idx: &[i64]) -> Vec<f64> {
        idx.iter().zip(&self.lo).map(|(&k, a)| a + (k as f64 + 0.5) * self.side).collect()
    }

    pub fn index_of(&self, x: &[f64]) -> Option<Vec<i64>> {
        let idx: Vec<i64> = x.iter().zip(&self.lo).map(|(v, a)| ((v - a) / self.side).floor() as i64).collect();
        idx.iter().zip(&self.cells).all(|(&k, &c)| k >= 0 && (k as usize) < c).then_some(idx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubeCensus {
    pub grid: CubeGrid,
    pub enlargement: f64,
    pub fatten: f64,
    /// Cubes met by at least one tube.
    pub counts: BTreeMap<Vec<i64>, usize>,
    /// Number of cubes met by each tube.
    pub per_tube: Vec<usize>,
}

impl CubeCensus {
    /// Cubes with count in `[r, 2r)` keyed by dyadic `r`.
    pub fn classes(&self) -> BTreeMap<usize, Vec<Vec<i64>>> {
        let mut out: BTreeMap<usize, Vec<Vec<i64>>> = BTreeMap::new();
        for (idx, &c) in &self.counts {
            out.entry(1usize << c.ilog2()).or_default().push(idx.clone());
        }
        out
    }

    pub fn incidences(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn max_count(&self) -> usize {
        self.counts.values().copied().max().unwrap_or(0)
    }

    pub fn count(&self, idx: &[i64]) -> usize {
        self.counts.get(idx).copied().unwrap_or(0)
    }
}

fn cubes_met(shape: &crate::tubes::TubeShape, grid: &CubeGrid, enlargement: f64) -> Vec<Vec<i64>> {
    let n = shape.center.len();
    let reach = shape.bounding_half();
    let half = 0.5 * enlargement * grid.side;
    let qh = vec![half; n];
    let mut lo_i = Vec::with_capacity(n);
    let mut hi_i = Vec::with_capacity(n);
    for i in 0..n {
        let a = ((shape.center[i] - reach[i] - half - grid.lo[i]) / grid.side).floor() as i64;
        let b = ((shape.center[i] + reach[i] + half - grid.lo[i]) / grid.side).floor() as i64;
        let lo = a.max(0);
        let hi = b.min(grid.cells[i] as i64 - 1);
        if lo > hi {
            return Vec::new();
        }
        lo_i.push(lo);
        hi_i.push(hi);
    }
    let mut out = Vec::new();
    let mut k = lo_i.clone();
    'outer: loop {
        if shape.intersects_box(&grid.center(&k), &qh) {
            out.push(k.clone());
        }
        for i in 0..n {
            if k[i] < hi_i[i] {
                k[i] += 1;
                continue 'outer;
            }
            k[i] = lo_i[i];
        }
        break;
    }
    out
}

/// For each cube of `grid`, the number of tubes (sides times `fatten`)
/// meeting the cube enlarged `enlargement` times about its center.
pub fn cube_census(tubes: &[Tube], scale: Scale, grid: CubeGrid, enlargement: f64, fatten: f64) -> CubeCensus {
    let r = scale.as_f64();
    let n = grid.lo.len();
    let per: Vec<Vec<Vec<i64>>> = tubes
        .par_iter()
        .map(|t| {
            let shape = t.shape(r, fatten);
            let mut met = match grid.period {
                None => cubes_met(&shape, &grid, enlargement),
                Some(p) => {
                    let mut all = Vec::new();
                    for code in 0..3usize.pow(n as u32) {
                        let mut c = code;
                        let shift: Vec<f64> = (0..n)
                            .map(|_| {
                                let s = (c % 3) as f64 - 1.0;
                                c /= 3;
                                s * p
                            })
                            .collect();
                        all.extend(cubes_met(&shape.translated(&shift), &grid, enlargement));
                    }
                    all
                }
            };
            met.sort();
            met.dedup();
            met
        })
        .collect();
    let mut counts: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
    for met in &per {
        for q in met {
            *counts.entry(q.clone()).or_default() += 1;
        }
    }
    CubeCensus { per_tube: per.iter().map(Vec::len).collect(), grid, enlargement, fatten, counts }
}

/// A sum of explicit wave packets. For a canonical cap with center `c`
/// and side `1/m` the frequencies are `nu' = c + j/P` (`4m` values per
/// axis) and, above each, the four lattice heights nearest `|nu'|^2`, with
/// `P = 4R`. Translates on `(m Z)^{n-1} x R Z` inside `[0, P)^n` are then
/// mutually orthogonal over the period box.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketSignal {
    pub signal: AtomicSignal,
    pub tubes: Vec<Tube>,
    pub period: f64,
}

/// Tube placement `(cap corner, translate, weight)` for synthesis.
pub type Placement = (Vec<i64>, Vec<i64>, Complex64);

fn packet_frequencies(center: &[f64], m: usize, period: f64) -> Vec<Vec<f64>> {
    let d = center.len();
    let per_axis = 4 * m;
    let mut out = Vec::with_capacity(per_axis.pow(d as u32) * 4);
    for code in 0..per_axis.pow(d as u32) {
        let mut c = code;
        let h: Vec<f64> = center
            .iter()
            .map(|&ci| {
                let j = (c % per_axis) as f64 - 2.0 * m as f64;
                c /= per_axis;
                ((ci * period).round() + j) / period
            })
            .collect();
        let q = (h.iter().map(|v| v * v).sum::<f64>() * period).round();
        for l in -2..2 {
            let mut xi = h.clone();
            xi.push((q + l as f64) / period);
            out.push(xi);
        }
    }
    out
}

pub fn synthesize_packets(alpha: &AlphaVector, scale: Scale, placements: &[Placement]) -> Result<PacketSignal> {
    let n = alpha.dimension();
    let (m, exact) = cells_per_unit(scale, 0.5);
    if !exact {
        return Err(Error::Parameter(format!("R = {} has no integer square root", scale.value())));
    }
    let r = scale.as_f64();
    let period = 4.0 * r;
    let canon = CapFamily::canonical(n, scale)?;
    let mut by_theta: BTreeMap<usize, Vec<&Placement>> = BTreeMap::new();
    for pl in placements {
        if pl.0.len() != n - 1 || pl.1.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: pl.1.len() });
        }
        let ok = pl.0.iter().all(|&c| c >= -(m as i64) && c < m as i64)
            && pl.1[..n - 1].iter().all(|&k| k >= 0 && k < 4 * m as i64)
            && (0..4).contains(&pl.1[n - 1]);
        if !ok {
            return Err(Error::Parameter(format!("placement {:?} / {:?} outside the lattice", pl.0, pl.1)));
        }
        by_theta.entry(canon.linear_index(&pl.0)).or_default().push(pl);
    }
    let mut atoms = Vec::new();
    let mut tubes = Vec::with_capacity(placements.len());
    let mut per_theta = 0;
    for (idx, group) in by_theta {
        let cap = canon.cap(canon.corner_at(idx));
        let center = cap.center();
        let freqs = packet_frequencies(&center, m, period);
        per_theta = freqs.len();
        let scale_amp = 1.0 / freqs.len() as f64;
        let mut seen = std::collections::BTreeSet::new();
        let mut centers = Vec::with_capacity(group.len());
        for pl in &group {
            if !seen.insert(pl.1.clone()) {
                return Err(Error::Parameter(format!("duplicate translate {:?}", pl.1)));
            }
            let mut x: Vec<f64> = pl.1[..n - 1].iter().map(|&k| k as f64 * m as f64).collect();
            x.push(pl.1[n - 1] as f64 * r);
            centers.push(x);
        }
        for xi in freqs {
            let amplitude: Complex64 = group
                .iter()
                .zip(&centers)
                .map(|(pl, x)| {
                    let t: f64 = xi.iter().zip(x).map(|(a, b)| a * b).sum();
                    pl.2 * unit_phase(-t) * scale_amp
                })
                .sum();
            atoms.push(FrequencyAtom { xi, amplitude });
        }
        let direction = normal_at(&center);
        for (pl, x) in group.iter().zip(centers) {
            let mut local = x.clone();
            for i in 0..n - 1 {
                local[i] += 2.0 * center[i] * x[n - 1];
            }
            tubes.push(Tube {
                theta: pl.0.clone(),
                translate: pl.1.clone(),
                weight: pl.2,
                direction: direction.clone(),
                center: x,
                local,
            });
        }
    }
    let signal = AtomicSignal::with_cap_limit(alpha.clone(), scale, atoms, Some(period), per_theta.max(1))?;
    Ok(PacketSignal { signal, tubes, period })
}

impl PacketSignal {
    /// Unit-weight packet of one cap at the origin.
    pub fn unit_packet(&self, theta: &[i64]) -> Result<Spectrum> {
        let single = synthesize_packets(
            self.signal.alpha(),
            self.signal.scale(),
            &[(theta.to_vec(), vec![0; self.signal.dimension()], Complex64::new(1.0, 0.0))],
        )?;
        Ok(single.signal.spectrum())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinedFlatReport {
    /// Small caps inside the canonical cap.
    pub pieces: usize,
    pub n_i: usize,
    /// `(L^2 / N)^{1/2 - 1/p}`.
    pub factor: f64,
    pub lhs: f64,
    pub rhs_core: f64,
    /// `lhs / rhs_core`, the plain flat decoupling ratio.
    pub flat_ratio: f64,
    pub ratio: f64,
}

/// Refined flat decoupling for a packet signal living in one canonical cap.
pub fn refined_flat_check(packets: &PacketSignal, p: f64, quad: &QuadratureSpec) -> Result<RefinedFlatReport> {
    let tubes = &packets.tubes;
    let first = tubes.first().ok_or(Error::EmptySignal)?;
    if tubes.iter().any(|t| t.theta != first.theta) {
        return Err(Error::Hypothesis("tubes span several canonical caps".into()));
    }
    let (lo, hi) =
        tubes.iter().fold((f64::INFINITY, 0.0f64), |(a, b), t| (a.min(t.weight.norm()), b.max(t.weight.norm())));
    if !(hi <= 2.0 * lo) {
        return Err(Error::Hypothesis(format!("weights range over [{lo}, {hi}], not within a factor 2")));
    }
    let signal = &packets.signal;
    let census = slab_census(tubes, signal.alpha(), signal.scale());
    let n_i = census.n_i;
    if let Some((key, c)) = census.counts.iter().find(|(_, &c)| 2 * c < n_i || c > 2 * n_i) {
        return Err(Error::Hypothesis(format!("slab {:?} / {:?} holds {c} tubes, not ~{n_i}", key.0, key.1)));
    }
    let canon = CapFamily::canonical(signal.dimension(), signal.scale())?;
    let small = signal.cap_family();
    let pieces = caps_in_theta(&canon.cap(first.theta.clone()), &small)?.len();
    let full = signal.spectrum();
    let parts: Vec<Spectrum> = signal.projections().iter().map(|(_, s)| s.spectrum()).collect();
    let norms = part_norms(&full, &parts, p, quad)?;
    let rhs = norms.aggregate(p);
    let l = pieces as f64;
    let factor = (l * l / n_i as f64).powf(0.5 - 1.0 / p);
    Ok(RefinedFlatReport {
        pieces,
        n_i,
        factor,
        lhs: norms.full,
        rhs_core: rhs,
        flat_ratio: norms.full / rhs,
        ratio: norms.full / (factor * rhs),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinedDecouplingReport {
    pub m_bound: usize,
    pub cubes: usize,
    /// `||F||_{L^p(union of cubes)}`, un-normalised over the period box.
    pub lhs: f64,
    /// `(sum_T ||F_T||_p^p)^{1/p}`.
    pub rhs_core: f64,
    pub ratio: f64,
    pub out_of_range: bool,
}

/// Refined decoupling on the cubes of the period box met by at most
/// `m_bound` tubes fattened by `R^delta`.
pub fn refined_decoupling_check(
    packets: &PacketSignal,
    m_bound: usize,
    p: f64,
    quad: &QuadratureSpec,
) -> Result<RefinedDecouplingReport> {
    if packets.tubes.is_empty() {
        return Err(Error::EmptySignal);
    }
    let signal = &packets.signal;
    let n = signal.dimension();
    let scale = signal.scale();
    let big = packets.period;
    let grid = CubeGrid::new(vec![0.0; n], &vec![big; n], scale).periodic(big);
    let census = cube_census(&packets.tubes, scale, grid.clone(), 1.0, scale.pow(FAT_DELTA));
    let spectrum = signal.spectrum();
    let samples = sample_layout(&spectrum, p, quad)?;
    let selected = |x: &[f64]| -> bool {
        let idx: Vec<i64> = x.iter().map(|v| (v.rem_euclid(big) / grid.side).floor() as i64).collect();
        census.count(&idx) <= m_bound
    };
    let mean = masked_mean_power(&spectrum, &samples, &selected, p);
    let volume = big.powi(n as i32);
    let lhs = (mean * volume).powf(1.0 / p);
    let mut theta_norms: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
    let mut terms = Vec::with_capacity(packets.tubes.len());
    for t in &packets.tubes {
        if !theta_norms.contains_key(&t.theta) {
            let unit = packets.unit_packet(&t.theta)?;
            let v = part_norms(&unit, &[], p, quad)?.full;
            theta_norms.insert(t.theta.clone(), v.powf(p) * volume);
        }
        terms.push(t.weight.norm().powf(p) * theta_norms[&t.theta]);
    }
    let rhs = pairwise(&terms).powf(1.0 / p);
    let cubes = grid.len() - census.counts.values().filter(|&&c| c > m_bound).count();
    let top = 2.0 * (n as f64 + 1.0) / (n as f64 - 1.0);
    Ok(RefinedDecouplingReport {
        m_bound,
        cubes,
        lhs,
        rhs_core: rhs,
        ratio: lhs / ((m_bound.max(1) as f64).powf(0.5 - 1.0 / p) * rhs),
        out_of_range: !(2.0..=top + 1e-12).contains(&p),
    })
}

/// Mean over the samples of `1_S(x) |F(x)|^p`.
fn masked_mean_power(
    spectrum: &Spectrum,
    samples: &Samples,
    selected: &(dyn Fn(&[f64]) -> bool + Sync),
    p: f64,
) -> f64 {
    let kept = match samples {
        Samples::Grid(g) => (0..g.len()).into_par_iter().filter(|&i| selected(&g.point(i))).count(),
        Samples::Scattered(v) => v.par_iter().filter(|x| selected(x)).count(),
    };
    if kept == 0 {
        return 0.0;
    }
    let weight = |x: &[f64]| if selected(x) { 1.0 } else { 0.0 };
    // integrate divides by the kept count
    let inside = mean_powers(&[spectrum], samples, &Region::PeriodBox, Some(&weight), p)[0];
    inside * kept as f64 / samples.len() as f64
}

/// One canonical cap (corner 0) with `per_slab` tubes of weight in
/// `[1, 2)` in each of `slabs` alternate `(R^alpha, R)`-slabs, `n = 2`.
pub fn planted_flat_family(
    alpha: &AlphaVector,
    scale: Scale,
    per_slab: usize,
    slabs: usize,
    seed: u64,
) -> Result<PacketSignal> {
    use rand::seq::index::sample;
    use rand::Rng;
    if alpha.dimension() != 2 {
        return Err(Error::Parameter("planted families are two dimensional".into()));
    }
    let (m, _) = cells_per_unit(scale, 0.5);
    let width = (scale.pow(alpha.entries()[0]) / m as f64).round() as usize;
    if per_slab == 0 || per_slab > width || 2 * slabs > 4 * m / width.max(1) + 1 {
        return Err(Error::Parameter(format!("cannot plant {per_slab} tubes in {slabs} slabs")));
    }
    let mut rng = crate::rng::stream(seed, "planted_flat", 0);
    let mut pl = Vec::with_capacity(per_slab * slabs);
    for slab in 0..slabs {
        for k in sample(&mut rng, width, per_slab).into_iter() {
            let w = 1.0 + rng.random::<f64>();
            pl.push((vec![0], vec![(2 * slab * width + k) as i64, 0], unit_phase(rng.random::<f64>()) * w));
        }
    }
    synthesize_packets(alpha, scale, &pl)
}

/// `thetas` contiguous canonical caps starting at corner 0, each carrying
/// `per_theta` tubes at random translates with random complex weights of
/// modulus in `[1, 2)`, `n = 2`.
pub fn random_packet_family(
    alpha: &AlphaVector,
    scale: Scale,
    thetas: usize,
    per_theta: usize,
    seed: u64,
) -> Result<PacketSignal> {
    use rand::seq::index::sample;
    use rand::Rng;
    if alpha.dimension() != 2 {
        return Err(Error::Parameter("random packet families are two dimensional".into()));
    }
    let (m, _) = cells_per_unit(scale, 0.5);
    if thetas == 0 || thetas > m || per_theta > 16 * m {
        return Err(Error::Parameter(format!("{thetas} caps x {per_theta} tubes do not fit")));
    }
    let mut rng = crate::rng::stream(seed, "random_packets", 0);
    let mut pl = Vec::with_capacity(thetas * per_theta);
    for t in 0..thetas {
        for slot in sample(&mut rng, 16 * m, per_theta).into_iter() {
            let w = 1.0 + rng.random::<f64>();
            let translate = vec![(slot % (4 * m)) as i64, (slot / (4 * m)) as i64];
            pl.push((vec![t as i64], translate, unit_phase(rng.random::<f64>()) * w));
        }
    }
    synthesize_packets(alpha, scale, &pl)
}

/// Reconstruction test family: constant and random signals for
/// `n = 2` (`alpha = (1)`) and `n = 3` (canonical), `R` in `{2^6, 2^8}`.
pub fn standard_family(seed: u64) -> Result<Vec<(String, AtomicSignal)>> {
    let mut out = Vec::new();
    for (n, alpha) in [(2, AlphaVector::new(vec![1.0])?), (3, AlphaVector::canonical(3)?)] {
        for k in [6u32, 8] {
            let r = Scale::from_log2(k)?;
            for family in [crate::signal::Family::Constant, crate::signal::Family::Random] {
                let s = crate::signal::synth_family(&alpha, r, family, seed)?;
                out.push((format!("n={n} R={} {}", r.value(), family.as_str()), s));
            }
        }
    }
    Ok(out)
}

/// `count` seeded points uniform in the box.
pub fn sample_points(lo: &[f64], hi: &[f64], count: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::Rng;
    let mut rng = crate::rng::stream(seed, "packet_points", 0);
    (0..count).map(|_| lo.iter().zip(hi).map(|(a, b)| a + (b - a) * rng.random::<f64>()).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{evaluate, synth_constant};
    use approx::assert_relative_eq;

    fn one() -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    #[test]
    fn window_integrates_to_one_and_is_continuous() {
        let s = 0.7;
        let h = 1e-3;
        let vals: Vec<f64> = (-400_000..=400_000).map(|k| window(k as f64 * h, s) * h).collect();
        assert!((pairwise(&vals) - 1.0).abs() < 1e-3);
        let y0 = 1.0 / (2.0 * s);
        assert!((window(y0 + 1e-7, s) - window(y0, s)).abs() < 1e-5);
    }

    #[test]
    fn tail_constants_shrink_with_margin() {
        let (a, t8) = window_constants(8);
        let (_, t4) = window_constants(4);
        assert!(a > 1.0 && a < 2.0);
        assert!(t8 < t4 && t8 < 1e-2);
    }

    #[test]
    fn single_atom_at_cap_center() {
        let alpha = AlphaVector::new(vec![1.0]).unwrap();
        let r = Scale::new(64).unwrap();
        let c = 0.5 / 8.0;
        let sig =
            AtomicSignal::new(alpha, r, vec![FrequencyAtom { xi: vec![c, c * c], amplitude: one() }], None).unwrap();
        let d = decompose(&sig, None).unwrap();
        let tubes = d.tubes();
        assert!(!tubes.is_empty());
        let mass = d.window_mass();
        for t in &tubes {
            assert_relative_eq!(t.weight.norm(), mass, max_relative = 1e-12);
            let normal = normal_at(&[c]);
            assert!(t.direction.iter().zip(&normal).all(|(a, b)| (a - b).abs() < 1e-9));
        }
        let (lo, hi) = d.window();
        let pts = sample_points(lo, hi, 50, 1);
        let err = relative_l2_error(&d.reconstruct(&pts), &evaluate(&sig, &pts));
        assert!(err <= 1e-2, "{err}");
    }

    #[test]
    fn empty_signal_has_no_tubes() {
        let alpha = AlphaVector::new(vec![1.0]).unwrap();
        let sig = AtomicSignal::new(alpha, Scale::new(64).unwrap(), vec![], None).unwrap();
        let d = decompose(&sig, None).unwrap();
        assert!(d.tubes().is_empty());
        assert_eq!(d.reconstruct(&[vec![1.0, 2.0]])[0], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn error_bound_dominates_measured_error() {
        let alpha = AlphaVector::new(vec![1.0]).unwrap();
        let sig = synth_constant(&alpha, Scale::new(64).unwrap()).unwrap();
        let d = decompose(&sig, None).unwrap();
        let (lo, hi) = d.window();
        let pts = sample_points(lo, hi, 100, 3);
        let exact = evaluate(&sig, &pts);
        let rec = d.reconstruct(&pts);
        let worst = rec.iter().zip(&exact).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(worst <= d.error_bound(), "{worst} > {}", d.error_bound());
        let ratio = d.energy_ratio();
        assert!((0.5..=2.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn disjoint_thetas_split_the_tubes() {
        let alpha = AlphaVector::new(vec![1.0]).unwrap();
        let r = Scale::new(64).unwrap();
        let (a, b) = (0.5 / 8.0, -3.5 / 8.0);
        let atom = |c: f64| FrequencyAtom { xi: vec![c, c * c], amplitude: one() };
        let both = AtomicSignal::new(alpha.clone(), r, vec![atom(a), atom(b)], None).unwrap();
        let single = AtomicSignal::new(alpha, r, vec![atom(a)], None).unwrap();
        let tb = decompose(&both, None).unwrap().tubes();
        let ts = decompose(&single, None).unwrap().tubes();
        let mine: Vec<&Tube> = tb.iter().filter(|t| t.theta == ts[0].theta).collect();
        assert_eq!(mine.len(), ts.len());
        for (x, y) in mine.iter().zip(&ts) {
            assert_eq!(x.translate, y.translate);
            assert!((x.weight - y.weight).norm() < 1e-12);
        }
    }

    fn tube(theta: i64, translate: Vec<i64>, w: f64) -> Tube {
        Tube {
            theta: vec![theta],
            translate,
            weight: Complex64::new(w, 0.0),
            direction: vec![0.0, 1.0],
            center: vec![0.0, 0.0],
            local: vec![0.0, 0.0],
        }
    }

    #[test]
    fn pigeonhole_classes() {
        let equal: Vec<Tube> = (0..5).map(|k| tube(0, vec![k, 0], 1.5)).collect();
        assert_eq!(pigeonhole_weights(&equal).classes.len(), 1);
        let two = vec![tube(0, vec![0, 0], 1.0), tube(0, vec![1, 0], 3.0)];
        let c = pigeonhole_weights(&two);
        assert_eq!(c.classes.len(), 2);
        assert_eq!(c.classes[0].level, 1);
        let with_zero = vec![tube(0, vec![0, 0], 1.0), tube(0, vec![1, 0], 0.0)];
        let c = pigeonhole_weights(&with_zero);
        assert_eq!(c.below_floor, vec![1]);
        assert_eq!(c.classes.iter().map(|k| k.members.len()).sum::<usize>() + c.below_floor.len(), 2);
    }

    #[test]
    fn slab_census_recovers_planted_counts() {
        // alpha = (1) at R = 64: slabs are 64 x 64, tubes 8 x 64 on x' = 8k.
        let alpha = AlphaVector::new(vec![1.0]).unwrap();
        let r = Scale::new(64).unwrap();
        let mut tubes = Vec::new();
        for slab in 0..3i64 {
            for k in 0..5i64 {
                let mut t = tube(0, vec![slab * 8 + k, 0], 1.0);
                t.local = vec![(slab * 64 + k * 8) as f64 + 4.0, 10.0];
                tubes.push(t);
            }
        }
        let c = slab_census(&tubes, &alpha, r);
        assert_eq!(c.n_i, 5);
        assert_eq!(c.counts.values().sum::<usize>(), tubes.len());
        assert_relative_eq!(c.retained_fraction, 1.0);
        let half = AlphaVector::new(vec![0.5]).unwrap();
        let c = slab_census(&tubes, &half, r);
        assert_eq!(c.max_count, 1);
    }

    #[test]
    fn cube_census_single_vertical_tube() {
        let r = Scale::new(64).unwrap();
        let mut t = tube(0, vec![0, 0], 1.0);
        t.direction = normal_at(&[0.0]);
        t.center = vec![4.0, 0.0];
        let grid = CubeGrid::new(vec![-32.0, -32.0], &[32.0, 32.0], r);
        let c = cube_census(&[t], r, grid, 1.0, 1.0);
        // x in [0, 8] touches cube columns 4 and 5 at their boundary; y in [-32, 32]
        assert!(c.counts.values().all(|&v| v == 1));
        assert_eq!(c.per_tube[0], c.counts.len());
        assert_eq!(c.counts.len(), 3 * 8);
        let classes = c.classes();
        assert_eq!(classes.len(), 1);
    }

    #[test]
    fn cube_census_double_counting() {
        let alpha = AlphaVector::new(vec![1.0]).unwrap();
        let r = Scale::new(64).unwrap();
        let sig = crate::signal::synth_family(&alpha, r, crate::signal::Family::Random, 5).unwrap();
        let tubes = decompose(&sig, Some((vec![-16.0; 2], vec![16.0; 2]))).unwrap().tubes();
        let grid = CubeGrid::new(vec![-32.0; 2], &[32.0; 2], r);
        let c = cube_census(&tubes, r, grid, 4.0, 1.0);
        assert_eq!(c.incidences(), c.per_tube.iter().sum::<usize>());
        for (rr, cubes) in c.classes() {
            for q in cubes {
                let k = c.count(&q);
                assert!(k >= rr && k < 2 * rr);
            }
        }
    }

    #[test]
    fn tubes_sit_inside_dilated_small_slabs() {
        let alpha = AlphaVector::canonical(3).unwrap();
        let r = Scale::new(64).unwrap();
        let small = CapFamily::small(alpha.clone(), r).unwrap();
        let sig = crate::signal::synth_family(&alpha, r, crate::signal::Family::Random, 2).unwrap();
        let d = decompose(&sig, Some((vec![-8.0; 3], vec![8.0; 3]))).unwrap();
        let canon = CapFamily::canonical(3, r).unwrap();
        for t in d.tubes().iter().step_by(37) {
            let theta = canon.cap(t.theta.clone());
            let shape = t.shape(r.as_f64(), 1.0);
            for gamma in caps_in_theta(&theta, &small).unwrap() {
                let frame = crate::caps::tangent_frame(&gamma.center());
                let sides = vec![r.pow(0.5), r.pow(0.5), r.as_f64()];
                let slab =
                    crate::caps::dual_slab(&small, &gamma, crate::caps::Slab::translate_of(&frame, &sides, &t.center));
                for code in 0..8 {
                    let x: Vec<f64> = (0..3)
                        .map(|i| {
                            let sign = if code >> i & 1 == 1 { 1.0 } else { -1.0 };
                            shape.center[i] + (0..3).map(|a| sign * shape.axes[a][i] * shape.half[a]).sum::<f64>()
                        })
                        .collect();
                    assert!(slab.contains_dilated(&x, 100.0));
                }
            }
        }
    }

    fn flat_packets(r: u64, per_slab: i64, seed: u64) -> PacketSignal {
        use rand::Rng;
        let alpha = AlphaVector::new(vec![1.0]).unwrap();
        let scale = Scale::new(r).unwrap();
        let m = (r as f64).sqrt() as i64;
        let mut rng = crate::rng::stream(seed, "test_planted", 0);
        let mut pl = Vec::new();
        // slabs of width R = m tubes; plant per_slab tubes in every other slab
        for slab in [0i64, 2] {
            let mut ks: Vec<i64> = (0..m).collect();
            for i in 0..per_slab as usize {
                let j = rng.random_range(i..ks.len());
                ks.swap(i, j);
            }
            for &k in &ks[..per_slab as usize] {
                let w = 1.0 + rng.random::<f64>();
                pl.push((vec![0], vec![slab * m + k, 0], Complex64::new(w, 0.0)));
            }
        }
        synthesize_packets(&alpha, scale, &pl).unwrap()
    }

    #[test]
    fn synthesized_packets_are_orthogonal() {
        let pk = flat_packets(16, 3, 1);
        let full = pk.signal.spectrum();
        let energy = crate::quadrature::lattice_energy(&full).unwrap();
        let unit = pk.unit_packet(&[0]).unwrap();
        let unit_energy = crate::quadrature::lattice_energy(&unit).unwrap();
        let weights: f64 = pk.tubes.iter().map(|t| t.weight.norm_sqr()).sum();
        assert_relative_eq!(energy, weights * unit_energy, max_relative = 1e-10);
    }

    #[test]
    fn refined_flat_p2_is_orthogonal() {
        let pk = flat_packets(16, 2, 4);
        let rep = refined_flat_check(&pk, 2.0, &QuadratureSpec::lattice_exact()).unwrap();
        assert_eq!(rep.n_i, 2);
        assert_eq!(rep.pieces, 4);
        assert!(rep.ratio <= 1.0 + 1e-6);
        assert_relative_eq!(rep.factor, 1.0);
    }

    #[test]
    fn refined_flat_rejects_uneven_slabs() {
        let alpha = AlphaVector::new(vec![1.0]).unwrap();
        let scale = Scale::new(16).unwrap();
        let mut pl: Vec<Placement> = (0..4).map(|k| (vec![0], vec![k, 0], one())).collect();
        pl.push((vec![0], vec![8, 0], one()));
        let pk = synthesize_packets(&alpha, scale, &pl).unwrap();
        let err = refined_flat_check(&pk, 4.0, &QuadratureSpec::lattice_exact()).unwrap_err();
        assert!(matches!(err, Error::Hypothesis(_)));
        let two = vec![(vec![0], vec![0, 0], one()), (vec![1], vec![0, 0], one())];
        let pk = synthesize_packets(&alpha, scale, &two).unwrap();
        assert!(refined_flat_check(&pk, 4.0, &QuadratureSpec::lattice_exact()).is_err());
    }

    #[test]
    fn refined_decoupling_single_tube_and_p2() {
        let alpha = AlphaVector::new(vec![1.0]).unwrap();
        let scale = Scale::new(16).unwrap();
        let single = synthesize_packets(&alpha, scale, &[(vec![1], vec![2, 1], one())]).unwrap();
        for p in [2.0, 4.0, 6.0] {
            let rep = refined_decoupling_check(&single, 1, p, &QuadratureSpec::lattice_exact()).unwrap();
            assert!(rep.ratio <= 1.0 + 1e-6, "{p} {}", rep.ratio);
            assert!(!rep.out_of_range);
        }
        let pl: Vec<Placement> = (0..4).map(|k| (vec![k - 2], vec![k, k % 4], Complex64::new(1.0, k as f64))).collect();
        let pk = synthesize_packets(&alpha, scale, &pl).unwrap();
        let rep = refined_decoupling_check(&pk, 2, 2.0, &QuadratureSpec::lattice_exact()).unwrap();
        assert!(rep.ratio <= 1.0 + 1e-6);
        assert!(refined_decoupling_check(&pk, 2, 7.0, &QuadratureSpec::lattice_exact()).unwrap().out_of_range);
    }

    #[test]
    fn duplicate_translates_rejected() {
        let alpha = AlphaVector::new(vec![1.0]).unwrap();
        let scale = Scale::new(16).unwrap();
        let pl = vec![(vec![0], vec![1, 0], one()), (vec![0], vec![1, 0], one())];
        assert!(synthesize_packets(&alpha, scale, &pl).is_err());
    }
}
