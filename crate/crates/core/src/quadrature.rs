//! Averaged `L^p` norms of atomic signals under three quadrature regimes.
//!
//! * lattice-exact: one full period box of the frequency lattice. `p = 2`
//!   is evaluated by grouping equal frequencies, even `p` by the exact
//!   sum-set expansion of `F^{p/2}`, and any other `p` by the periodic
//!   trapezoid rule on a grid fine enough to be exact for even powers.
//! * uniform-grid: midpoint tensor grid over a box or a ball's bounding
//!   box with spacing at most `1 / (oversampling * diameter)`.
//! * monte-carlo: stratified uniform points, a fixed number per cell.
//!
//! Several signals can be integrated against identical points in one pass,
//! which is how decoupling constants compare `F` with its projections.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::rng::stream;
use crate::signal::{fold_grid, AtomicSignal, Grid, GridAxis, Spectrum};
use crate::sum::{pairwise, pairwise_columns};
use crate::{Error, Result};

pub const MIN_MONTE_CARLO: usize = 1000;
const GRID_BUDGET: u128 = 1 << 33;
const SUMSET_BUDGET: usize = 30_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    /// One period box `[0, Q_i)` of the frequency lattice.
    PeriodBox,
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
}

impl Region {
    pub fn cube(n: usize, side: f64) -> Self {
        Region::Box { lo: vec![0.0; n], hi: vec![side; n] }
    }

    pub fn label(&self) -> String {
        match self {
            Region::PeriodBox => "period-box".into(),
            Region::Box { lo, hi } => {
                let sides: Vec<String> = lo.iter().zip(hi).map(|(a, b)| format!("{}", b - a)).collect();
                format!("box[{}]", sides.join("x"))
            }
            Region::Ball { radius, .. } => format!("ball[{radius}]"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QuadratureMode {
    LatticeExact,
    UniformGrid,
    MonteCarlo,
}

impl QuadratureMode {
    pub fn as_str(self) -> &'static str {
        match self {
            QuadratureMode::LatticeExact => "lattice-exact",
            QuadratureMode::UniformGrid => "uniform-grid",
            QuadratureMode::MonteCarlo => "monte-carlo",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSpec {
    pub region: Region,
    pub mode: QuadratureMode,
    /// Requested sample count (monte-carlo only; grids report their own size).
    pub samples: usize,
    pub oversampling: f64,
    pub seed: u64,
    /// Monte-carlo stratum side; defaults to the square root of the largest region side.
    pub stratum: Option<f64>,
}

impl QuadratureSpec {
    pub fn lattice_exact() -> Self {
        Self {
            region: Region::PeriodBox,
            mode: QuadratureMode::LatticeExact,
            samples: 0,
            oversampling: 4.0,
            seed: 0,
            stratum: None,
        }
    }

    pub fn uniform(region: Region, oversampling: f64) -> Self {
        Self { region, mode: QuadratureMode::UniformGrid, samples: 0, oversampling, seed: 0, stratum: None }
    }

    pub fn monte_carlo(region: Region, samples: usize, seed: u64) -> Self {
        Self { region, mode: QuadratureMode::MonteCarlo, samples, oversampling: 4.0, seed, stratum: None }
    }

    pub fn validate(&self, reference: &Spectrum) -> Result<()> {
        if !(self.oversampling >= 2.0) {
            return Err(Error::Quadrature(format!("oversampling {} below 2", self.oversampling)));
        }
        match (&self.mode, &self.region) {
            (QuadratureMode::LatticeExact, Region::PeriodBox) => {
                if reference.period().is_none() {
                    return Err(Error::Quadrature("lattice-exact mode needs a lattice period".into()));
                }
                if (0..reference.len()).any(|j| reference.lattice_point(j).is_none()) {
                    return Err(Error::Quadrature("atoms are off the declared lattice".into()));
                }
            }
            (QuadratureMode::LatticeExact, _) => {
                return Err(Error::Quadrature("lattice-exact mode integrates over the period box".into()));
            }
            (_, Region::PeriodBox) if reference.period().is_none() => {
                return Err(Error::Quadrature("period box needs a lattice period".into()));
            }
            (_, Region::Box { lo, hi }) => {
                if lo.len() != reference.dim()
                    || hi.len() != reference.dim()
                    || lo.iter().zip(hi).any(|(a, b)| !(b > a))
                {
                    return Err(Error::Quadrature("degenerate box".into()));
                }
            }
            (_, Region::Ball { center, radius }) if (center.len() != reference.dim() || !(*radius > 0.0)) => {
                return Err(Error::Quadrature("degenerate ball".into()));
            }
            _ => {}
        }
        if self.mode == QuadratureMode::MonteCarlo && self.samples == 0 {
            return Err(Error::Quadrature("monte-carlo needs samples".into()));
        }
        Ok(())
    }
}

/// `(1 + |x - center| / width)^(-exponent)`, normalised to 1 at the center.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightProfile {
    pub center: Vec<f64>,
    pub width: f64,
    pub exponent: f64,
}

impl WeightProfile {
    /// The standard profile with exponent `100 n`.
    pub fn new(center: Vec<f64>, width: f64) -> Self {
        let exponent = 100.0 * center.len() as f64;
        Self { center, width, exponent }
    }

    /// Infinite width: the weight is identically 1.
    pub fn flat(n: usize) -> Self {
        Self { center: vec![0.0; n], width: f64::INFINITY, exponent: 100.0 * n as f64 }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        if self.width.is_infinite() {
            return 1.0;
        }
        let d = self.center.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        (1.0 + d / self.width).powf(-self.exponent)
    }
}

/// Flags attached to a quadrature result.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QuadratureFlags {
    pub few_samples: bool,
    pub algebraic: bool,
}

impl QuadratureFlags {
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.few_samples {
            parts.push("few-samples");
        }
        if self.algebraic {
            parts.push("algebraic");
        }
        parts.join("|")
    }
}

/// A normalised norm with its quadrature metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct NormValue {
    pub value: f64,
    pub p: f64,
    pub mode: QuadratureMode,
    pub samples: usize,
    pub region: String,
    pub flags: QuadratureFlags,
}

/// Sample layout shared by every signal integrated in one pass.
#[derive(Debug, Clone)]
pub enum Samples {
    Grid(Grid),
    Scattered(Vec<Vec<f64>>),
}

impl Samples {
    pub fn len(&self) -> usize {
        match self {
            Samples::Grid(g) => g.len(),
            Samples::Scattered(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn next_pow2(x: f64) -> usize {
    let v = x.ceil().max(1.0) as usize;
    v.next_power_of_two()
}

fn period_extents(reference: &Spectrum) -> Vec<f64> {
    (0..reference.dim()).map(|i| reference.axis_period(i).unwrap_or(1.0)).collect()
}

fn bounding_box(region: &Region, reference: &Spectrum) -> (Vec<f64>, Vec<f64>) {
    match region {
        Region::PeriodBox => (vec![0.0; reference.dim()], period_extents(reference)),
        Region::Box { lo, hi } => (lo.clone(), hi.clone()),
        Region::Ball { center, radius } => {
            (center.iter().map(|c| c - radius).collect(), center.iter().map(|c| c + radius).collect())
        }
    }
}

fn check_budget(points: u128) -> Result<()> {
    if points > GRID_BUDGET {
        return Err(Error::QuadratureTooLarge { points, budget: GRID_BUDGET });
    }
    Ok(())
}

/// Periodic trapezoid grid over one period box, exact for trigonometric
/// polynomials of degree below `M_i` per axis.
fn lattice_grid(reference: &Spectrum, p: f64, oversampling: f64) -> Result<Grid> {
    let q = reference.period().ok_or_else(|| Error::Quadrature("no lattice period".into()))?;
    let points: Vec<Vec<i64>> = (0..reference.len())
        .map(|j| reference.lattice_point(j).ok_or_else(|| Error::Quadrature("atom off lattice".into())))
        .collect::<Result<_>>()?;
    let factor = oversampling.max(p);
    let axes: Vec<GridAxis> = (0..reference.dim())
        .map(|i| {
            let qi = reference.axis_period(i).unwrap_or(q);
            let unit = q / qi;
            let (lo, hi) = points.iter().fold((i64::MAX, i64::MIN), |(lo, hi), k| (lo.min(k[i]), hi.max(k[i])));
            let span = if points.is_empty() { 0.0 } else { (hi - lo) as f64 / unit };
            let count = next_pow2(factor * span + 1.0);
            GridAxis { origin: 0.0, step: qi / count as f64, count }
        })
        .collect();
    check_budget(axes.iter().map(|a| a.count as u128).product())?;
    Ok(Grid { axes })
}

fn uniform_grid(region: &Region, reference: &Spectrum, oversampling: f64) -> Result<Grid> {
    let (lo, hi) = bounding_box(region, reference);
    let diam = reference.diameter();
    let longest = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
    let bandwidth = diam.max(1.0 / longest);
    let h = 1.0 / (oversampling * bandwidth);
    let mut axes = Vec::with_capacity(lo.len());
    for i in 0..lo.len() {
        let extent = hi[i] - lo[i];
        let (step, count) = match (i, reference.axis_period(0)) {
            (0, Some(q0)) => {
                let step = q0 / next_pow2(q0 / h) as f64;
                (step, ((extent / step).round() as usize).max(1))
            }
            _ => {
                let count = ((extent / h).ceil() as usize).max(1);
                (extent / count as f64, count)
            }
        };
        axes.push(GridAxis { origin: lo[i] + 0.5 * step, step, count });
    }
    check_budget(axes.iter().map(|a| a.count as u128).product())?;
    Ok(Grid { axes })
}

fn monte_carlo_points(spec: &QuadratureSpec, reference: &Spectrum) -> Vec<Vec<f64>> {
    let (lo, hi) = bounding_box(&spec.region, reference);
    let longest = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
    let side = spec.stratum.unwrap_or(longest.sqrt()).max(1e-12);
    let cells: Vec<usize> = lo.iter().zip(&hi).map(|(a, b)| (((b - a) / side).ceil() as usize).max(1)).collect();
    let total: usize = cells.iter().product();
    let per_cell = (spec.samples / total).max(1);
    (0..total)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = stream(spec.seed, "monte_carlo", c as u64);
            let mut rest = c;
            let cell_lo: Vec<f64> = cells
                .iter()
                .enumerate()
                .map(|(i, &m)| {
                    let k = rest % m;
                    rest /= m;
                    let w = (hi[i] - lo[i]) / m as f64;
                    (lo[i] + k as f64 * w, w)
                })
                .map(|(a, _)| a)
                .collect();
            let widths: Vec<f64> = cells.iter().enumerate().map(|(i, &m)| (hi[i] - lo[i]) / m as f64).collect();
            (0..per_cell)
                .map(|_| cell_lo.iter().zip(&widths).map(|(a, w)| a + w * rng.random::<f64>()).collect::<Vec<f64>>())
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Sample layout for `quad` relative to the reference spectrum (whose
/// support fixes the grid resolution).
pub fn sample_layout(reference: &Spectrum, p: f64, quad: &QuadratureSpec) -> Result<Samples> {
    quad.validate(reference)?;
    Ok(match quad.mode {
        QuadratureMode::LatticeExact => Samples::Grid(lattice_grid(reference, p, quad.oversampling)?),
        QuadratureMode::UniformGrid => Samples::Grid(uniform_grid(&quad.region, reference, quad.oversampling)?),
        QuadratureMode::MonteCarlo => Samples::Scattered(monte_carlo_points(quad, reference)),
    })
}

fn region_indicator(region: &Region) -> impl Fn(&[f64]) -> bool + Sync + '_ {
    move |x: &[f64]| match region {
        Region::Ball { center, radius } => {
            center.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= radius * radius
        }
        _ => true,
    }
}

/// Pointwise sample weight.
pub type PointWeight<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

/// Weighted means `sum w(x) g_k(x) / sum w(x)` over the shared samples,
/// where `g(values)` maps the signals' values at a point to `outputs`
/// numbers. The weight includes the ball indicator.
pub fn integrate<G>(
    spectra: &[&Spectrum],
    samples: &Samples,
    region: &Region,
    weight: Option<PointWeight>,
    outputs: usize,
    g: G,
) -> Vec<f64>
where
    G: Fn(&[Complex64], &mut [f64]) + Sync,
{
    let inside = region_indicator(region);
    let needs_point = weight.is_some() || matches!(region, Region::Ball { .. });
    let visit = |x: &[f64], values: &[Complex64], acc: &mut [f64], scratch: &mut [f64]| {
        let w = if needs_point {
            if !inside(x) {
                return;
            }
            weight.map_or(1.0, |wp| wp(x))
        } else {
            1.0
        };
        scratch.iter_mut().for_each(|s| *s = 0.0);
        g(values, scratch);
        for (a, s) in acc.iter_mut().zip(scratch.iter()) {
            *a += w * s;
        }
        acc[outputs] += w;
    };
    let sums = match samples {
        Samples::Grid(grid) => fold_grid(spectra, grid, outputs + 1, |x0, rest, values, acc| {
            let mut scratch = [0.0f64; 16];
            let mut point = [0.0f64; 8];
            if needs_point {
                point[0] = x0;
                point[1..=rest.len()].copy_from_slice(rest);
            }
            visit(&point[..=rest.len()], values, acc, &mut scratch[..outputs]);
        }),
        Samples::Scattered(points) => {
            let chunks: Vec<Vec<f64>> = points
                .par_chunks(crate::sum::CHUNK)
                .map(|chunk| {
                    let mut acc = vec![0.0; outputs + 1];
                    let mut scratch = vec![0.0; outputs];
                    for x in chunk {
                        let values: Vec<Complex64> = spectra.iter().map(|s| s.eval(x)).collect();
                        visit(x, &values, &mut acc, &mut scratch);
                    }
                    acc
                })
                .collect();
            pairwise_columns(&chunks)
        }
    };
    let total = sums[outputs];
    sums[..outputs].iter().map(|s| if total > 0.0 { s / total } else { 0.0 }).collect()
}

/// Means of `|F_k|^p` for several spectra against identical samples.
pub fn mean_powers(
    spectra: &[&Spectrum],
    samples: &Samples,
    region: &Region,
    weight: Option<PointWeight>,
    p: f64,
) -> Vec<f64> {
    let k = spectra.len();
    let mut out = Vec::with_capacity(k);
    for block in spectra.chunks(16) {
        out.extend(integrate(block, samples, region, weight, block.len(), |values, acc| {
            for (a, v) in acc.iter_mut().zip(values) {
                *a = v.norm().powf(p);
            }
        }));
    }
    out
}

/// `sum_xi |sum_{xi_j = xi} a_j|^2`: the period average of `|F|^2`.
pub fn lattice_energy(spectrum: &Spectrum) -> Result<f64> {
    let mut groups: BTreeMap<Vec<i64>, Complex64> = BTreeMap::new();
    for j in 0..spectrum.len() {
        let key = spectrum.lattice_point(j).ok_or_else(|| Error::Quadrature("atom off lattice".into()))?;
        *groups.entry(key).or_default() += spectrum.amplitudes()[j];
    }
    let terms: Vec<f64> = groups.values().map(|z| z.norm_sqr()).collect();
    Ok(pairwise(&terms))
}

/// Period average of `|F|^(2q)` through the exact expansion of `F^q`, or
/// `None` when the expansion would exceed the work budget.
pub fn lattice_even_power(spectrum: &Spectrum, q: usize) -> Result<Option<f64>> {
    let points: Vec<Vec<i64>> = (0..spectrum.len())
        .map(|j| spectrum.lattice_point(j).ok_or_else(|| Error::Quadrature("atom off lattice".into())))
        .collect::<Result<_>>()?;
    let mut current: BTreeMap<Vec<i64>, Complex64> = BTreeMap::new();
    current.insert(vec![0; spectrum.dim()], Complex64::new(1.0, 0.0));
    for _ in 0..q {
        if current.len().saturating_mul(points.len()) > SUMSET_BUDGET {
            return Ok(None);
        }
        let mut next: BTreeMap<Vec<i64>, Complex64> = BTreeMap::new();
        for (key, z) in &current {
            for (k, a) in points.iter().zip(spectrum.amplitudes()) {
                let sum: Vec<i64> = key.iter().zip(k).map(|(x, y)| x + y).collect();
                *next.entry(sum).or_default() += z * a;
            }
        }
        current = next;
    }
    let terms: Vec<f64> = current.values().map(|z| z.norm_sqr()).collect();
    Ok(Some(pairwise(&terms)))
}

pub(crate) fn even_half(p: f64) -> Option<usize> {
    let h = p / 2.0;
    (h.fract() == 0.0 && (1.0..=8.0).contains(&h)).then_some(h as usize)
}

/// Averaged norm `(|region|^{-1} int |F|^p)^{1/p}`.
pub fn lp_norm(signal: &AtomicSignal, p: f64, quad: &QuadratureSpec) -> Result<NormValue> {
    spectrum_lp_norm(&signal.spectrum(), p, quad)
}

pub fn spectrum_lp_norm(spectrum: &Spectrum, p: f64, quad: &QuadratureSpec) -> Result<NormValue> {
    if !(p >= 1.0) {
        return Err(Error::Parameter(format!("p = {p} is below 1")));
    }
    quad.validate(spectrum)?;
    let mut flags = QuadratureFlags {
        few_samples: quad.mode == QuadratureMode::MonteCarlo && quad.samples < MIN_MONTE_CARLO,
        algebraic: false,
    };
    let region = quad.region.label();
    if quad.mode == QuadratureMode::LatticeExact {
        let exact = if p == 2.0 {
            Some(lattice_energy(spectrum)?)
        } else if let Some(q) = even_half(p) {
            lattice_even_power(spectrum, q)?
        } else {
            None
        };
        if let Some(mean) = exact {
            flags.algebraic = true;
            return Ok(NormValue {
                value: mean.powf(1.0 / p),
                p,
                mode: quad.mode,
                samples: spectrum.len(),
                region,
                flags,
            });
        }
    }
    let samples = sample_layout(spectrum, p, quad)?;
    let mean = mean_powers(&[spectrum], &samples, &quad.region, None, p)[0];
    Ok(NormValue { value: mean.powf(1.0 / p), p, mode: quad.mode, samples: samples.len(), region, flags })
}

/// `(int |F|^p w / int w)^{1/p}` on the quadrature samples.
pub fn weighted_lp_norm(
    signal: &AtomicSignal,
    p: f64,
    weight: &WeightProfile,
    quad: &QuadratureSpec,
) -> Result<NormValue> {
    if !(p >= 1.0) {
        return Err(Error::Parameter(format!("p = {p} is below 1")));
    }
    let spectrum = signal.spectrum();
    let samples = sample_layout(&spectrum, p, quad)?;
    let w = |x: &[f64]| weight.value(x);
    let mean = mean_powers(&[&spectrum], &samples, &quad.region, Some(&w), p)[0];
    Ok(NormValue {
        value: mean.powf(1.0 / p),
        p,
        mode: quad.mode,
        samples: samples.len(),
        region: quad.region.label(),
        flags: QuadratureFlags {
            few_samples: quad.mode == QuadratureMode::MonteCarlo && quad.samples < MIN_MONTE_CARLO,
            algebraic: false,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caps::{lift, AlphaVector, Scale};
    use crate::signal::{synth_constant, synth_random, FrequencyAtom};
    use approx::assert_relative_eq;

    fn single(xi: f64) -> AtomicSignal {
        AtomicSignal::new(
            AlphaVector::new(vec![1.0]).unwrap(),
            Scale::new(16).unwrap(),
            vec![FrequencyAtom { xi: lift(&[xi]), amplitude: Complex64::new(0.0, 1.0) }],
            Some(256.0),
        )
        .unwrap()
    }

    #[test]
    fn single_atom_has_unit_norm() {
        let f = single(0.25);
        for p in [1.0, 2.0, 3.0, 4.0, 7.5] {
            let v = lp_norm(&f, p, &QuadratureSpec::lattice_exact()).unwrap();
            assert_relative_eq!(v.value, 1.0, epsilon = 1e-12);
            let u = lp_norm(&f, p, &QuadratureSpec::uniform(Region::cube(2, 16.0), 4.0)).unwrap();
            assert_relative_eq!(u.value, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn parseval_on_lattice() {
        let a = AlphaVector::new(vec![1.0, 0.5]).unwrap();
        let f = synth_random(&a, Scale::new(16).unwrap(), 9, 1).unwrap();
        let v = lp_norm(&f, 2.0, &QuadratureSpec::lattice_exact()).unwrap();
        assert_relative_eq!(v.value, (f.len() as f64).sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn two_symmetric_atoms() {
        let f = AtomicSignal::new(
            AlphaVector::new(vec![1.0]).unwrap(),
            Scale::new(16).unwrap(),
            vec![
                FrequencyAtom { xi: lift(&[0.5]), amplitude: Complex64::new(1.0, 0.0) },
                FrequencyAtom { xi: lift(&[-0.5]), amplitude: Complex64::new(1.0, 0.0) },
            ],
            Some(4.0),
        )
        .unwrap();
        let v = lp_norm(&f, 2.0, &QuadratureSpec::lattice_exact()).unwrap();
        assert_relative_eq!(v.value, 2f64.sqrt(), max_relative = 1e-12);
        let g = spectrum_lp_norm(&f.spectrum(), 2.0, &QuadratureSpec::uniform(Region::PeriodBox, 4.0)).unwrap();
        assert_relative_eq!(g.value, 2f64.sqrt(), max_relative = 1e-9);
    }

    #[test]
    fn even_power_paths_agree() {
        let f = synth_constant(&AlphaVector::new(vec![1.0]).unwrap(), Scale::new(8).unwrap()).unwrap();
        let exact = lattice_even_power(&f.spectrum(), 2).unwrap().unwrap();
        let grid = lattice_grid(&f.spectrum(), 4.0, 4.0).unwrap();
        let mean = mean_powers(&[&f.spectrum()], &Samples::Grid(grid), &Region::PeriodBox, None, 4.0)[0];
        assert_relative_eq!(exact, mean, max_relative = 1e-10);
    }

    #[test]
    fn monte_carlo_warns_on_few_samples() {
        let f = single(0.1);
        let q = QuadratureSpec::monte_carlo(Region::cube(2, 16.0), 100, 1);
        let v = lp_norm(&f, 3.0, &q).unwrap();
        assert!(v.flags.few_samples);
        assert_relative_eq!(v.value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_invalid_specs() {
        let f = single(0.1);
        let mut q = QuadratureSpec::uniform(Region::cube(2, 16.0), 1.5);
        assert!(lp_norm(&f, 2.0, &q).is_err());
        q.oversampling = 4.0;
        assert!(lp_norm(&f, 0.5, &q).is_err());
        let mut lat = QuadratureSpec::lattice_exact();
        lat.region = Region::cube(2, 4.0);
        assert!(lp_norm(&f, 2.0, &lat).is_err());
    }

    #[test]
    fn flat_weight_reduces_to_plain_norm() {
        let f = synth_random(&AlphaVector::new(vec![1.0]).unwrap(), Scale::new(8).unwrap(), 4, 1).unwrap();
        let q = QuadratureSpec::uniform(Region::cube(2, 8.0), 4.0);
        let plain = lp_norm(&f, 3.0, &q).unwrap().value;
        let weighted = weighted_lp_norm(&f, 3.0, &WeightProfile::flat(2), &q).unwrap().value;
        assert_relative_eq!(plain, weighted, max_relative = 1e-14);
    }

    #[test]
    fn weight_profile_shape() {
        let w = WeightProfile::new(vec![1.0, 1.0], 2.0);
        assert_eq!(w.exponent, 200.0);
        assert_eq!(w.value(&[1.0, 1.0]), 1.0);
        assert!(w.value(&[2.0, 1.0]) < w.value(&[1.5, 1.0]));
    }
}
