//! Test functions as finite atomic frequency measures
//! `F(x) = sum_j a_j e(xi_j . x)` with `e(t) = exp(2 pi i t)`.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::caps::{cap_of, in_neighborhood, lift, AlphaVector, Cap, CapFamily, Scale};
use crate::rng::stream;
use crate::sum::pairwise_columns;
use crate::{Error, Result};

/// Sub-positions per cap side used by [`synth_random`].
pub const RANDOM_SUBDIVISION: usize = 4;

/// `e(t) = exp(2 pi i t)` with the argument reduced mod 1 first.
#[inline]
pub fn unit_phase(t: f64) -> Complex64 {
    let f = t - t.floor();
    let (s, c) = (std::f64::consts::TAU * f).sin_cos();
    Complex64::new(c, s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyAtom {
    pub xi: Vec<f64>,
    pub amplitude: Complex64,
}

/// A bare exponential sum: frequencies (row-major, `dim` per atom) and
/// amplitudes, with an optional common lattice period `Q` meaning every
/// frequency lies in `(1/Q) Z^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    dim: usize,
    freqs: Vec<f64>,
    amps: Vec<Complex64>,
    period: Option<f64>,
    axis0: Option<f64>,
}

impl Spectrum {
    pub fn new(dim: usize, atoms: &[FrequencyAtom], period: Option<f64>) -> Result<Self> {
        let mut freqs = Vec::with_capacity(dim * atoms.len());
        for a in atoms {
            if a.xi.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: a.xi.len() });
            }
            freqs.extend_from_slice(&a.xi);
        }
        Ok(Self { dim, freqs, amps: atoms.iter().map(|a| a.amplitude).collect(), period, axis0: None })
    }

    /// Declares a period along axis 0 alone, for spectra without a common
    /// lattice whose first coordinates are still commensurate.
    pub fn with_axis0_period(mut self, q: f64) -> Self {
        self.axis0 = Some(q);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn frequency(&self, j: usize) -> &[f64] {
        &self.freqs[j * self.dim..(j + 1) * self.dim]
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn period(&self) -> Option<f64> {
        self.period
    }

    /// `min, max` of the frequencies along `axis`.
    pub fn extent(&self, axis: usize) -> (f64, f64) {
        (0..self.len()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), j| {
            let v = self.freqs[j * self.dim + axis];
            (lo.min(v), hi.max(v))
        })
    }

    /// Diameter of the bounding box of the frequencies.
    pub fn diameter(&self) -> f64 {
        (0..self.dim)
            .map(|i| {
                let (lo, hi) = self.extent(i);
                (hi - lo).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Integer lattice coordinates `xi * Q` of atom `j`, if the spectrum is periodic.
    pub fn lattice_point(&self, j: usize) -> Option<Vec<i64>> {
        let q = self.period?;
        self.frequency(j)
            .iter()
            .map(|&x| {
                let v = x * q;
                let r = v.round();
                ((v - r).abs() <= 1e-6 * v.abs().max(1.0)).then_some(r as i64)
            })
            .collect()
    }

    /// Smallest period of the spectrum along one axis, derived from `Q`.
    pub fn axis_period(&self, axis: usize) -> Option<f64> {
        if axis == 0 && self.axis0.is_some() {
            return self.axis0;
        }
        let q = self.period?;
        if q.fract() != 0.0 || q > 1e15 {
            return Some(q);
        }
        let mut g = q as u64;
        for j in 0..self.len() {
            let k = self.lattice_point(j)?[axis].unsigned_abs();
            g = gcd(g, k);
            if g == 1 {
                break;
            }
        }
        Some(q / g as f64)
    }

    /// Value at one point by direct summation.
    pub fn eval(&self, x: &[f64]) -> Complex64 {
        (0..self.len())
            .map(|j| {
                let t: f64 = self.frequency(j).iter().zip(x).map(|(a, b)| a * b).sum();
                self.amps[j] * unit_phase(t)
            })
            .sum()
    }

    /// Moves every frequency by `shift`; the lattice period is kept when
    /// the shift lies on the lattice.
    pub fn translated(&self, shift: &[f64]) -> Self {
        let mut out = self.clone();
        for (k, f) in out.freqs.iter_mut().enumerate() {
            *f += shift[k % self.dim];
        }
        out
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut freqs = Vec::with_capacity(indices.len() * self.dim);
        for &j in indices {
            freqs.extend_from_slice(self.frequency(j));
        }
        Self {
            dim: self.dim,
            freqs,
            amps: indices.iter().map(|&j| self.amps[j]).collect(),
            period: self.period,
            axis0: self.axis0,
        }
    }
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn lcm(a: u64, b: u64) -> u64 {
    if a == 0 || b == 0 {
        return a.max(b);
    }
    a / gcd(a, b) * b
}

/// Coefficient family used by the synthetic experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// One atom per cap at its lifted corner, amplitude 1.
    Constant,
    /// Random in-cap positions with random unimodular phases.
    Random,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Constant => "constant",
            Family::Random => "random",
        }
    }
}

/// An atomic signal whose atoms all sit in the `1/R` neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicSignal {
    alpha: AlphaVector,
    scale: Scale,
    atoms: Vec<FrequencyAtom>,
    lattice_period: Option<f64>,
    per_cap: usize,
}

impl AtomicSignal {
    /// Validates neighborhood membership and the default bound of one atom
    /// per small cap.
    pub fn new(
        alpha: AlphaVector,
        scale: Scale,
        atoms: Vec<FrequencyAtom>,
        lattice_period: Option<f64>,
    ) -> Result<Self> {
        Self::with_cap_limit(alpha, scale, atoms, lattice_period, 1)
    }

    pub fn with_cap_limit(
        alpha: AlphaVector,
        scale: Scale,
        atoms: Vec<FrequencyAtom>,
        lattice_period: Option<f64>,
        per_cap: usize,
    ) -> Result<Self> {
        let n = alpha.dimension();
        let family = CapFamily::small(alpha.clone(), scale)?;
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for a in &atoms {
            if a.xi.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: a.xi.len() });
            }
            let cap = cap_of(&a.xi, &family)?;
            let c = counts.entry(family.linear_index(&cap.corner)).or_default();
            *c += 1;
            if *c > per_cap {
                return Err(Error::CapOverfull { count: *c, limit: per_cap });
            }
        }
        Ok(Self { alpha, scale, atoms, lattice_period, per_cap })
    }

    pub fn dimension(&self) -> usize {
        self.alpha.dimension()
    }

    pub fn alpha(&self) -> &AlphaVector {
        &self.alpha
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn atoms(&self) -> &[FrequencyAtom] {
        &self.atoms
    }

    pub fn lattice_period(&self) -> Option<f64> {
        self.lattice_period
    }

    pub fn per_cap(&self) -> usize {
        self.per_cap
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `sum_j |a_j|^2`.
    pub fn energy(&self) -> f64 {
        self.atoms.iter().map(|a| a.amplitude.norm_sqr()).sum()
    }

    pub fn cap_family(&self) -> CapFamily {
        CapFamily::small(self.alpha.clone(), self.scale).expect("validated at construction")
    }

    pub fn spectrum(&self) -> Spectrum {
        Spectrum::new(self.dimension(), &self.atoms, self.lattice_period).expect("validated at construction")
    }

    fn with_atoms(&self, atoms: Vec<FrequencyAtom>) -> Self {
        Self {
            alpha: self.alpha.clone(),
            scale: self.scale,
            atoms,
            lattice_period: self.lattice_period,
            per_cap: self.per_cap,
        }
    }

    /// Multiplies every amplitude by `e(phase)`.
    pub fn with_global_phase(&self, phase: f64) -> Self {
        let z = unit_phase(phase);
        self.with_atoms(
            self.atoms.iter().map(|a| FrequencyAtom { xi: a.xi.clone(), amplitude: a.amplitude * z }).collect(),
        )
    }

    /// Atoms grouped by small cap, in cap order; empty caps are omitted.
    pub fn projections(&self) -> Vec<(Cap, AtomicSignal)> {
        let family = self.cap_family();
        let mut groups: BTreeMap<usize, Vec<FrequencyAtom>> = BTreeMap::new();
        for a in &self.atoms {
            let corner = family.locate(&a.xi[..a.xi.len() - 1]);
            groups.entry(family.linear_index(&corner)).or_default().push(a.clone());
        }
        groups.into_iter().map(|(idx, atoms)| (family.cap(family.corner_at(idx)), self.with_atoms(atoms))).collect()
    }

    /// Sum of the two signals' atoms (same geometry); the cap bound is the
    /// sum of both bounds.
    pub fn merged(&self, other: &AtomicSignal) -> Result<AtomicSignal> {
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        let period = match (self.lattice_period, other.lattice_period) {
            (Some(a), Some(b)) if a.fract() == 0.0 && b.fract() == 0.0 => Some(lcm(a as u64, b as u64) as f64),
            _ => None,
        };
        AtomicSignal::with_cap_limit(self.alpha.clone(), self.scale, atoms, period, self.per_cap + other.per_cap)
    }
}

/// Sub-signal of the atoms lying in `cap`.
pub fn project(signal: &AtomicSignal, cap: &Cap) -> AtomicSignal {
    signal
        .with_atoms(signal.atoms.iter().filter(|a| cap.contains_horizontal(&a.xi[..a.xi.len() - 1])).cloned().collect())
}

/// Sub-signal of the atoms whose horizontal part satisfies `keep`.
pub fn restrict<P: Fn(&[f64]) -> bool>(signal: &AtomicSignal, keep: P) -> AtomicSignal {
    signal.with_atoms(signal.atoms.iter().filter(|a| keep(&a.xi[..a.xi.len() - 1])).cloned().collect())
}

fn squared_lcm(cells: &[usize], sub: usize) -> u64 {
    cells.iter().fold(1u64, |acc, &m| {
        let d = (m * sub) as u64;
        lcm(acc, d * d)
    })
}

/// One atom per cap at the lift of its lower corner, amplitude 1.
pub fn synth_constant(alpha: &AlphaVector, scale: Scale) -> Result<AtomicSignal> {
    let family = CapFamily::small(alpha.clone(), scale)?;
    let atoms = family
        .caps()
        .into_iter()
        .map(|cap| {
            let corner: Vec<f64> = (0..cap.horizontal_dim()).map(|i| cap.lower(i)).collect();
            FrequencyAtom { xi: lift(&corner), amplitude: Complex64::new(1.0, 0.0) }
        })
        .collect();
    let period = squared_lcm(family.cells(), 1) as f64;
    AtomicSignal::new(alpha.clone(), scale, atoms, Some(period))
}

/// `per_cap` atoms per cap at distinct random sub-lattice positions
/// `(G c_i + u_i) / (G m_i)`, `u_i in 0..G`, lifted to the paraboloid,
/// with independent uniform phases.
pub fn synth_random(alpha: &AlphaVector, scale: Scale, seed: u64, per_cap: usize) -> Result<AtomicSignal> {
    if per_cap == 0 {
        return Err(Error::Parameter("per_cap must be at least 1".into()));
    }
    let family = CapFamily::small(alpha.clone(), scale)?;
    let g = RANDOM_SUBDIVISION;
    let d = family.cells().len();
    let slots = g.pow(d as u32);
    if per_cap > slots {
        return Err(Error::Parameter(format!("per_cap {per_cap} exceeds {slots} sub-positions")));
    }
    let atoms: Vec<FrequencyAtom> = (0..family.len())
        .into_par_iter()
        .flat_map_iter(|idx| {
            let corner = family.corner_at(idx);
            let mut rng = stream(seed, "synth_random", idx as u64);
            let picks = sample(&mut rng, slots, per_cap).into_vec();
            let cells = family.cells();
            picks
                .into_iter()
                .map(|slot| {
                    let mut rest = slot;
                    let horizontal: Vec<f64> = (0..d)
                        .map(|i| {
                            let u = rest % g;
                            rest /= g;
                            (corner[i] as f64 * g as f64 + u as f64) / (cells[i] * g) as f64
                        })
                        .collect();
                    let phase: f64 = rng.random();
                    FrequencyAtom { xi: lift(&horizontal), amplitude: unit_phase(phase) }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let period = squared_lcm(family.cells(), g) as f64;
    AtomicSignal::with_cap_limit(alpha.clone(), scale, atoms, Some(period), per_cap)
}

/// Synthesizes the requested family with one atom per cap.
pub fn synth_family(alpha: &AlphaVector, scale: Scale, family: Family, seed: u64) -> Result<AtomicSignal> {
    match family {
        Family::Constant => synth_constant(alpha, scale),
        Family::Random => synth_random(alpha, scale, seed, 1),
    }
}

/// `F(x)` at each point by direct summation.
pub fn evaluate(signal: &AtomicSignal, points: &[Vec<f64>]) -> Vec<Complex64> {
    let spectrum = signal.spectrum();
    points.par_iter().map(|x| spectrum.eval(x)).collect()
}

/// One axis of a tensor grid: `origin + k * step`, `k in 0..count`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridAxis {
    pub origin: f64,
    pub step: f64,
    pub count: usize,
}

impl GridAxis {
    pub fn coord(&self, k: usize) -> f64 {
        self.origin + k as f64 * self.step
    }
}

/// Tensor grid with axis 0 varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub axes: Vec<GridAxis>,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of axis-0 rows.
    pub fn rows(&self) -> usize {
        self.axes[1..].iter().map(|a| a.count).product()
    }

    /// Coordinates of axes `1..` for a row.
    pub fn row_coords(&self, mut row: usize) -> Vec<f64> {
        self.axes[1..]
            .iter()
            .map(|a| {
                let k = row % a.count;
                row /= a.count;
                a.coord(k)
            })
            .collect()
    }

    pub fn point(&self, index: usize) -> Vec<f64> {
        let a0 = &self.axes[0];
        let mut p = vec![a0.coord(index % a0.count)];
        p.extend(self.row_coords(index / a0.count));
        p
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.step).product()
    }
}

const MAX_FFT: usize = 1 << 22;

/// Evaluates one spectrum along axis-0 rows of a grid, by an inverse FFT
/// when the axis-0 frequencies and the step are commensurate, otherwise by
/// phase recurrence.
pub(crate) struct RowEvaluator<'a> {
    spectrum: &'a Spectrum,
    axis: GridAxis,
    fft: Option<(Arc<dyn Fft<f64>>, Vec<usize>)>,
}

impl<'a> RowEvaluator<'a> {
    pub(crate) fn new(spectrum: &'a Spectrum, axis: GridAxis, planner: &mut FftPlanner<f64>) -> Self {
        let fft = spectrum.axis_period(0).and_then(|q| {
            let l = q / axis.step;
            let len = l.round();
            if (l - len).abs() > 1e-9 * l || len < 1.0 || len as usize > MAX_FFT {
                return None;
            }
            let len = len as usize;
            let cost_fft = len as f64 * (len as f64).log2().max(1.0) * 2.0;
            let cost_direct = spectrum.len() as f64 * axis.count as f64;
            if cost_fft > cost_direct {
                return None;
            }
            let bins = (0..spectrum.len())
                .map(|j| {
                    let k = (spectrum.frequency(j)[0] * q).round() as i64;
                    k.rem_euclid(len as i64) as usize
                })
                .collect();
            Some((planner.plan_fft_inverse(len), bins))
        });
        Self { spectrum, axis, fft }
    }

    /// Fills `out` (length `axis.count`) with values on the row whose other
    /// coordinates are `rest`.
    pub(crate) fn row(&self, rest: &[f64], out: &mut [Complex64]) {
        let s = self.spectrum;
        let coeff = |j: usize| {
            let f = s.frequency(j);
            let t: f64 = f[0] * self.axis.origin + f[1..].iter().zip(rest).map(|(a, b)| a * b).sum::<f64>();
            s.amps[j] * unit_phase(t)
        };
        match &self.fft {
            Some((plan, bins)) => {
                let len = plan.len();
                let mut buf = vec![Complex64::new(0.0, 0.0); len];
                for (j, &b) in bins.iter().enumerate() {
                    buf[b] += coeff(j);
                }
                plan.process(&mut buf);
                for (k, o) in out.iter_mut().enumerate() {
                    *o = buf[k % len];
                }
            }
            None => {
                out.iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
                for j in 0..s.len() {
                    let c = coeff(j);
                    let xi0 = s.frequency(j)[0];
                    let w = unit_phase(xi0 * self.axis.step);
                    let mut z = c;
                    for (k, o) in out.iter_mut().enumerate() {
                        if k % 256 == 0 && k > 0 {
                            z = c * unit_phase(xi0 * self.axis.step * k as f64);
                        }
                        *o += z;
                        z *= w;
                    }
                }
            }
        }
    }
}

/// Values of the spectrum on every grid point (axis 0 fastest).
pub fn evaluate_grid(spectrum: &Spectrum, grid: &Grid) -> Vec<Complex64> {
    let mut planner = FftPlanner::new();
    let eval = RowEvaluator::new(spectrum, grid.axes[0], &mut planner);
    let width = grid.axes[0].count;
    (0..grid.rows())
        .into_par_iter()
        .flat_map_iter(|r| {
            let mut row = vec![Complex64::new(0.0, 0.0); width];
            eval.row(&grid.row_coords(r), &mut row);
            row
        })
        .collect()
}

/// Accumulates `visit(x0, rest, values, acc)` over all grid points, where
/// `values[s]` is spectrum `s` at the point. Per-row accumulators are
/// combined pairwise in row order.
pub(crate) fn fold_grid<V>(spectra: &[&Spectrum], grid: &Grid, width: usize, visit: V) -> Vec<f64>
where
    V: Fn(f64, &[f64], &[Complex64], &mut [f64]) + Sync,
{
    let mut planner = FftPlanner::new();
    let evals: Vec<RowEvaluator> = spectra.iter().map(|s| RowEvaluator::new(s, grid.axes[0], &mut planner)).collect();
    let a0 = grid.axes[0];
    let rows: Vec<Vec<f64>> = (0..grid.rows())
        .into_par_iter()
        .map(|r| {
            let rest = grid.row_coords(r);
            let buffers: Vec<Vec<Complex64>> = evals
                .iter()
                .map(|e| {
                    let mut b = vec![Complex64::new(0.0, 0.0); a0.count];
                    e.row(&rest, &mut b);
                    b
                })
                .collect();
            let mut acc = vec![0.0; width];
            let mut values = vec![Complex64::new(0.0, 0.0); spectra.len()];
            for k in 0..a0.count {
                for (v, b) in values.iter_mut().zip(&buffers) {
                    *v = b[k];
                }
                visit(a0.coord(k), &rest, &values, &mut acc);
            }
            acc
        })
        .collect();
    pairwise_columns(&rows)
}

/// Checks that every atom lies in the `1/R` neighborhood.
pub fn all_in_neighborhood(signal: &AtomicSignal) -> bool {
    let r = signal.scale().as_f64();
    signal.atoms().iter().all(|a| in_neighborhood(&a.xi, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn alpha(v: &[f64]) -> AlphaVector {
        AlphaVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn constant_family_example() {
        let f = synth_constant(&alpha(&[1.0]), Scale::new(4).unwrap()).unwrap();
        assert_eq!(f.len(), 8);
        for (a, k) in f.atoms().iter().zip(-4i32..4) {
            assert_eq!(a.xi, vec![f64::from(k) / 4.0, f64::from(k * k) / 16.0]);
            assert_eq!(a.amplitude, Complex64::new(1.0, 0.0));
        }
        assert!(all_in_neighborhood(&f));
        assert_eq!(f.lattice_period(), Some(16.0));
    }

    #[test]
    fn random_family_is_reproducible() {
        let a = alpha(&[0.75, 1.0]);
        let r = Scale::new(64).unwrap();
        let f = synth_random(&a, r, 11, 2).unwrap();
        let g = synth_random(&a, r, 11, 2).unwrap();
        assert_eq!(f, g);
        assert_eq!(f.len(), 2 * CapFamily::small(a, r).unwrap().len());
        assert!(all_in_neighborhood(&f));
    }

    #[test]
    fn random_phases_average_out() {
        let f = synth_random(&alpha(&[1.0]), Scale::new(4096).unwrap(), 3, 1).unwrap();
        assert!(f.len() >= 8192);
        let mean: Complex64 = f.atoms().iter().map(|a| a.amplitude).sum::<Complex64>() / f.len() as f64;
        assert!(mean.norm() <= 0.05);
    }

    #[test]
    fn cap_limit_is_enforced() {
        let a = alpha(&[1.0]);
        let r = Scale::new(8).unwrap();
        let atoms = vec![
            FrequencyAtom { xi: lift(&[0.01]), amplitude: Complex64::new(1.0, 0.0) },
            FrequencyAtom { xi: lift(&[0.02]), amplitude: Complex64::new(1.0, 0.0) },
        ];
        assert!(matches!(AtomicSignal::new(a.clone(), r, atoms.clone(), None), Err(Error::CapOverfull { .. })));
        assert!(AtomicSignal::with_cap_limit(a, r, atoms, None, 2).is_ok());
    }

    #[test]
    fn projections_partition_and_are_idempotent() {
        let a = alpha(&[1.0]);
        let f = synth_random(&a, Scale::new(64).unwrap(), 5, 3).unwrap();
        let parts = f.projections();
        assert_eq!(parts.iter().map(|(_, p)| p.len()).sum::<usize>(), f.len());
        for (cap, p) in &parts {
            assert_eq!(&project(p, cap), p);
            assert_eq!(&project(&f, cap), p);
        }
        let family = f.cap_family();
        let empty = project(&restrict(&f, |x| x[0] < 0.0), &family.cap(vec![10]));
        assert!(empty.is_empty());
    }

    #[test]
    fn evaluate_examples() {
        let f = synth_constant(&alpha(&[1.0]), Scale::new(16).unwrap()).unwrap();
        let v = evaluate(&f, &[vec![0.0, 0.0]]);
        assert_abs_diff_eq!(v[0].re, f.len() as f64, epsilon = 1e-12);
        let single = AtomicSignal::new(
            alpha(&[1.0]),
            Scale::new(16).unwrap(),
            vec![FrequencyAtom { xi: lift(&[0.3]), amplitude: Complex64::new(0.0, 2.0) }],
            None,
        )
        .unwrap();
        for x in [[1.3, -7.1], [100.5, 3.3]] {
            assert_abs_diff_eq!(evaluate(&single, &[x.to_vec()])[0].norm(), 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn grid_fast_path_matches_direct() {
        let f = synth_random(&alpha(&[1.0]), Scale::new(64).unwrap(), 2, 1).unwrap();
        let s = f.spectrum();
        let q0 = s.axis_period(0).unwrap();
        assert_eq!(q0, 256.0);
        let grid = Grid {
            axes: vec![
                GridAxis { origin: 0.25, step: q0 / 2048.0, count: 700 },
                GridAxis { origin: -3.0, step: 0.7, count: 5 },
            ],
        };
        let mut planner = FftPlanner::new();
        assert!(RowEvaluator::new(&s, grid.axes[0], &mut planner).fft.is_some());
        let fast = evaluate_grid(&s, &grid);
        for idx in (0..grid.len()).step_by(37) {
            let d = s.eval(&grid.point(idx));
            assert!((fast[idx] - d).norm() <= 1e-9 * (s.len() as f64));
        }
    }
}
