//! Empirical decoupling constants: the small-cap ratio, its multilinear and
//! flat variants, slope regression over scales, and the exponent arithmetic
//! used to pass from decoupling to restriction estimates.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use crate::caps::{abs_determinant, normal_at, AlphaVector, Scale};
use crate::quadrature::{
    even_half, integrate, lattice_energy, lattice_even_power, mean_powers, sample_layout, QuadratureFlags,
    QuadratureMode, QuadratureSpec, Region, MIN_MONTE_CARLO,
};
use crate::regression::{fit_exponent, ExponentFit};
use crate::rng::stream;
use crate::signal::{lcm, synth_family, AtomicSignal, Family, FrequencyAtom, Spectrum};
use crate::sum::pairwise;
use crate::{Error, Result};

/// Number of random n-tuples drawn by the transversality check.
pub const TRANSVERSALITY_DRAWS: usize = 1000;

/// Slope allowance standing in for the `R^epsilon` loss.
pub const SLOPE_TOLERANCE: f64 = 0.1;

pub fn critical_p(alpha: &AlphaVector) -> f64 {
    2.0 + 2.0 / alpha.weight()
}

/// `|alpha| (1/2 - 1/p)`.
pub fn predicted_exponent(weight: f64, p: f64) -> f64 {
    weight * (0.5 - 1.0 / p)
}

/// Averaged `L^p` norms of a function and of its pieces on shared samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PartNorms {
    pub full: f64,
    pub parts: Vec<f64>,
    pub samples: usize,
    pub flags: QuadratureFlags,
}

impl PartNorms {
    /// `(sum_k ||part_k||_p^p)^{1/p}`.
    pub fn aggregate(&self, p: f64) -> f64 {
        let powers: Vec<f64> = self.parts.iter().map(|v| v.powf(p)).collect();
        pairwise(&powers).powf(1.0 / p)
    }
}

fn single_atom_norm(s: &Spectrum) -> Option<f64> {
    (s.len() == 1).then(|| s.amplitudes()[0].norm())
}

/// Norms of `full` and of each of `parts` under one quadrature. Parts with a
/// single atom have constant modulus and are evaluated exactly.
pub fn part_norms(full: &Spectrum, parts: &[Spectrum], p: f64, quad: &QuadratureSpec) -> Result<PartNorms> {
    if !(p >= 1.0) {
        return Err(Error::Parameter(format!("p = {p} is below 1")));
    }
    if full.is_empty() {
        return Err(Error::EmptySignal);
    }
    quad.validate(full)?;
    let mut flags = QuadratureFlags {
        few_samples: quad.mode == QuadratureMode::MonteCarlo && quad.samples < MIN_MONTE_CARLO,
        algebraic: false,
    };
    if quad.mode == QuadratureMode::LatticeExact {
        let exact = |s: &Spectrum| -> Result<Option<f64>> {
            if p == 2.0 {
                lattice_energy(s).map(Some)
            } else if let Some(q) = even_half(p) {
                lattice_even_power(s, q)
            } else {
                Ok(None)
            }
        };
        if let Some(f) = exact(full)? {
            let each: Vec<Option<f64>> = parts.par_iter().map(exact).collect::<Result<_>>()?;
            if each.iter().all(Option::is_some) {
                flags.algebraic = true;
                return Ok(PartNorms {
                    full: f.powf(1.0 / p),
                    parts: each.into_iter().map(|v| v.unwrap_or(0.0).powf(1.0 / p)).collect(),
                    samples: full.len(),
                    flags,
                });
            }
        }
    }
    let samples = sample_layout(full, p, quad)?;
    let mut spectra: Vec<&Spectrum> = Vec::new();
    if single_atom_norm(full).is_none() {
        spectra.push(full);
    }
    let mut slots = Vec::with_capacity(parts.len());
    for part in parts {
        if single_atom_norm(part).is_some() || part == full {
            slots.push(None);
        } else {
            slots.push(Some(spectra.len()));
            spectra.push(part);
        }
    }
    let means = if spectra.is_empty() { Vec::new() } else { mean_powers(&spectra, &samples, &quad.region, None, p) };
    let full_norm = single_atom_norm(full).unwrap_or_else(|| means[0].powf(1.0 / p));
    let parts = parts
        .iter()
        .zip(slots)
        .map(|(part, slot)| match slot {
            Some(k) => means[k].powf(1.0 / p),
            None => single_atom_norm(part).unwrap_or(full_norm),
        })
        .collect();
    Ok(PartNorms { full: full_norm, parts, samples: samples.len(), flags })
}

fn region_diameter(region: &Region) -> f64 {
    match region {
        Region::PeriodBox => f64::INFINITY,
        Region::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt(),
        Region::Ball { radius, .. } => 2.0 * radius,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecouplingReport {
    pub alpha: AlphaVector,
    pub scale: Scale,
    pub p: f64,
    pub family: String,
    pub seed: u64,
    pub lhs: f64,
    pub rhs_core: f64,
    pub ratio: f64,
    pub predicted_exponent: f64,
    /// Number of nonempty small caps.
    pub caps: usize,
    pub mode: QuadratureMode,
    pub region: String,
    pub samples: usize,
    pub flags: QuadratureFlags,
    /// `2 <= p <= p_c` and `|alpha| <= n/2`.
    pub in_range: bool,
}

fn in_range(alpha: &AlphaVector, p: f64) -> bool {
    (2.0..=critical_p(alpha) + 1e-12).contains(&p) && alpha.is_admissible()
}

/// `D = ||F||_p / (sum_gamma ||P_gamma F||_p^p)^{1/p}` with every norm on the
/// same samples.
pub fn decoupling_ratio(signal: &AtomicSignal, p: f64, quad: &QuadratureSpec) -> Result<DecouplingReport> {
    if signal.is_empty() {
        return Err(Error::EmptySignal);
    }
    let r = signal.scale().as_f64();
    if region_diameter(&quad.region) < r * (1.0 - 1e-12) {
        return Err(Error::Quadrature(format!("region {} has diameter below R = {r}", quad.region.label())));
    }
    let full = signal.spectrum();
    let parts: Vec<Spectrum> = signal.projections().iter().map(|(_, s)| s.spectrum()).collect();
    let norms = part_norms(&full, &parts, p, quad)?;
    let rhs = norms.aggregate(p);
    Ok(DecouplingReport {
        alpha: signal.alpha().clone(),
        scale: signal.scale(),
        p,
        family: "custom".into(),
        seed: quad.seed,
        lhs: norms.full,
        rhs_core: rhs,
        ratio: norms.full / rhs,
        predicted_exponent: predicted_exponent(signal.alpha().weight(), p),
        caps: parts.len(),
        mode: quad.mode,
        region: quad.region.label(),
        samples: norms.samples,
        flags: norms.flags,
        in_range: in_range(signal.alpha(), p),
    })
}

/// How the quadrature is chosen at each scale of a curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuadraturePolicy {
    LatticeExact,
    /// Uniform grid on `[0, R)^n`.
    UniformBox {
        oversampling: f64,
    },
    /// Stratified monte-carlo on `[0, R)^n`.
    MonteCarloBox {
        samples: usize,
        seed: u64,
    },
}

impl QuadraturePolicy {
    pub fn spec(&self, n: usize, scale: Scale) -> QuadratureSpec {
        let cube = Region::cube(n, scale.as_f64());
        match *self {
            QuadraturePolicy::LatticeExact => QuadratureSpec::lattice_exact(),
            QuadraturePolicy::UniformBox { oversampling } => QuadratureSpec::uniform(cube, oversampling),
            QuadraturePolicy::MonteCarloBox { samples, seed } => QuadratureSpec::monte_carlo(cube, samples, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecouplingCurve {
    pub reports: Vec<DecouplingReport>,
    pub fit: ExponentFit,
    pub predicted: f64,
    /// `slope <= predicted + 0.1`.
    pub within_ceiling: bool,
}

pub fn decoupling_curve(
    alpha: &AlphaVector,
    p: f64,
    scales: &[Scale],
    family: Family,
    seed: u64,
    policy: QuadraturePolicy,
) -> Result<DecouplingCurve> {
    if scales.len() < 3 {
        return Err(Error::TooFewSamples(scales.len()));
    }
    let mut reports = Vec::with_capacity(scales.len());
    for &scale in scales {
        let signal = synth_family(alpha, scale, family, seed)?;
        let mut report = decoupling_ratio(&signal, p, &policy.spec(alpha.dimension(), scale))?;
        report.family = family.as_str().into();
        report.seed = seed;
        reports.push(report);
    }
    let fit = fit_exponent(&reports.iter().map(|r| (r.scale.as_f64(), r.ratio)).collect::<Vec<_>>())?;
    let predicted = predicted_exponent(alpha.weight(), p);
    Ok(DecouplingCurve { within_ceiling: fit.slope <= predicted + SLOPE_TOLERANCE, reports, fit, predicted })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultilinearReport {
    pub p: f64,
    pub lhs: f64,
    pub rhs_core: f64,
    pub ratio: f64,
    pub predicted_exponent: f64,
    /// `ratio / R^{predicted_exponent}`.
    pub normalized: f64,
    pub min_transversality: f64,
    pub samples: usize,
}

fn merged_spectrum(signals: &[AtomicSignal]) -> Result<Spectrum> {
    let n = signals[0].dimension();
    let atoms: Vec<FrequencyAtom> = signals.iter().flat_map(|s| s.atoms().iter().cloned()).collect();
    let period = signals.iter().try_fold(1u64, |acc, s| match s.lattice_period() {
        Some(q) if q.fract() == 0.0 && q < 1e15 => Some(lcm(acc, q as u64)),
        _ => None,
    });
    Spectrum::new(n, &atoms, period.map(|q| q as f64))
}

/// Smallest wedge of unit normals over seeded random n-tuples of atoms, one
/// from each signal, with the pair of the worst tuple that is closest to
/// parallel.
pub fn sampled_transversality(signals: &[AtomicSignal], seed: u64) -> (f64, usize, usize) {
    let n = signals.len();
    let mut rng = stream(seed, "transversality", 0);
    let mut worst = (f64::INFINITY, 0, 1);
    for _ in 0..TRANSVERSALITY_DRAWS {
        let normals: Vec<Vec<f64>> = signals
            .iter()
            .map(|s| {
                let a = &s.atoms()[rng.random_range(0..s.len())];
                normal_at(&a.xi[..n - 1])
            })
            .collect();
        let wedge = abs_determinant(normals.clone());
        if wedge < worst.0 {
            let mut pair = (0, 1, f64::INFINITY);
            for i in 0..n {
                for j in i + 1..n {
                    let dot: f64 = normals[i].iter().zip(&normals[j]).map(|(a, b)| a * b).sum();
                    let sin2 = 1.0 - dot * dot;
                    if sin2 < pair.2 {
                        pair = (i, j, sin2);
                    }
                }
            }
            worst = (wedge, pair.0, pair.1);
        }
    }
    worst
}

/// Ratio of `||prod |F_i|^{1/n}||_p` to the geometric mean of the small-cap
/// sums of the `n` signals.
pub fn multilinear_ratio(
    signals: &[AtomicSignal],
    a_min: f64,
    p: f64,
    quad: &QuadratureSpec,
) -> Result<MultilinearReport> {
    let n = signals.first().map_or(0, |s| s.dimension());
    if n < 2 || signals.len() != n {
        return Err(Error::PointCount { expected: n.max(2), got: signals.len() });
    }
    if signals.iter().any(|s| s.is_empty()) {
        return Err(Error::EmptySignal);
    }
    if signals.iter().any(|s| s.dimension() != n || s.scale() != signals[0].scale()) {
        return Err(Error::Parameter("signals must share dimension and scale".into()));
    }
    let (wedge, first, second) = sampled_transversality(signals, quad.seed);
    if wedge < a_min {
        return Err(Error::Transversality { first, second, measured: wedge, required: a_min });
    }
    let merged = merged_spectrum(signals)?;
    let spectra: Vec<Spectrum> = signals.iter().map(|s| s.spectrum()).collect();
    let refs: Vec<&Spectrum> = spectra.iter().collect();
    let samples = sample_layout(&merged, p * n as f64, quad)?;
    let inv = 1.0 / n as f64;
    let lhs = integrate(&refs, &samples, &quad.region, None, 1, |values, acc| {
        let g: f64 = values.iter().map(|v| v.norm().powf(inv)).product();
        acc[0] = g.powf(p);
    })[0]
        .powf(1.0 / p);
    let mut log_rhs = 0.0;
    for s in signals {
        let parts: Vec<Spectrum> = s.projections().iter().map(|(_, g)| g.spectrum()).collect();
        log_rhs += part_norms(&s.spectrum(), &parts, p, quad)?.aggregate(p).ln();
    }
    let rhs = (log_rhs * inv).exp();
    let weight = signals[0].alpha().weight();
    let predicted = predicted_exponent(weight, p);
    let ratio = lhs / rhs;
    Ok(MultilinearReport {
        p,
        lhs,
        rhs_core: rhs,
        ratio,
        predicted_exponent: predicted,
        normalized: ratio / signals[0].scale().pow(predicted),
        min_transversality: wedge,
        samples: samples.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatReport {
    pub pieces: usize,
    pub nonempty: usize,
    pub lhs: f64,
    pub rhs_core: f64,
    pub ratio: f64,
    /// `L^{1 - 2/p}`.
    pub bound: f64,
}

/// Flat decoupling of `F` over the box `[lo, hi)` cut into `divisions[i]`
/// congruent pieces per axis. The box may constrain the horizontal
/// coordinates only (`n - 1` sides) or all `n`.
pub fn flat_decoupling_ratio(
    signal: &AtomicSignal,
    lo: &[f64],
    hi: &[f64],
    divisions: &[usize],
    p: f64,
    quad: &QuadratureSpec,
) -> Result<FlatReport> {
    let n = signal.dimension();
    let d = lo.len();
    if !(d == n || d == n - 1) || hi.len() != d || divisions.len() != d || divisions.contains(&0) {
        return Err(Error::DimensionMismatch { expected: n - 1, got: d });
    }
    let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for (j, a) in signal.atoms().iter().enumerate() {
        let mut key = Vec::with_capacity(d);
        for i in 0..d {
            if !(a.xi[i] >= lo[i] && a.xi[i] < hi[i]) {
                return Err(Error::AtomOutsideBox(a.xi.clone()));
            }
            let w = (hi[i] - lo[i]) / divisions[i] as f64;
            key.push((((a.xi[i] - lo[i]) / w).floor() as usize).min(divisions[i] - 1));
        }
        groups.entry(key).or_default().push(j);
    }
    let full = signal.spectrum();
    let parts: Vec<Spectrum> = groups.values().map(|idx| full.subset(idx)).collect();
    let norms = part_norms(&full, &parts, p, quad)?;
    let rhs = norms.aggregate(p);
    let pieces: usize = divisions.iter().product();
    Ok(FlatReport {
        pieces,
        nonempty: parts.len(),
        lhs: norms.full,
        rhs_core: rhs,
        ratio: norms.full / rhs,
        bound: (pieces as f64).powf(1.0 - 2.0 / p),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentAuditRow {
    pub scale: u64,
    pub weight: f64,
    pub p: f64,
    /// `(|alpha| + 1)(1 - 2/p)`.
    pub left_exponent: f64,
    /// `|alpha|(1/2 - 1/p) + (1 - 1/p)`.
    pub right_exponent: f64,
    pub gap: f64,
    /// `|gamma|^{2(1/2 - 1/p)}` with `|gamma| = R^{-|alpha| - 1}`.
    pub left_value: f64,
    pub right_value: f64,
    pub pass: bool,
}

/// Left and right exponents of the volume comparison at `(|alpha|, p)`.
pub fn exponent_pair(weight: f64, p: f64) -> (f64, f64) {
    ((weight + 1.0) * (1.0 - 2.0 / p), weight * (0.5 - 1.0 / p) + (1.0 - 1.0 / p))
}

/// The audit at weight `|alpha|` and `p = 2 + 2/|alpha|` for each scale.
pub fn exponent_audit_at(weight: f64, scales: &[Scale]) -> Vec<ExponentAuditRow> {
    let p = 2.0 + 2.0 / weight;
    let (left, right) = exponent_pair(weight, p);
    scales
        .iter()
        .map(|&scale| {
            let r = scale.as_f64();
            let left_value = r.powf(-(weight + 1.0)).powf(2.0 * (0.5 - 1.0 / p));
            let right_value = r.powf(-weight * (0.5 - 1.0 / p)) * r.powf(-(1.0 - 1.0 / p));
            ExponentAuditRow {
                scale: scale.value(),
                weight,
                p,
                left_exponent: left,
                right_exponent: right,
                gap: left - right,
                left_value,
                right_value,
                pass: left - right >= -1e-12 && left_value <= right_value * (1.0 + 1e-12),
            }
        })
        .collect()
}

pub fn restriction_exponent_audit(alpha: &AlphaVector, scales: &[Scale]) -> Vec<ExponentAuditRow> {
    exponent_audit_at(alpha.weight(), scales)
}

/// Weights `|alpha|` from `(n-1)/2` to `n-1` in steps of 1/16.
pub fn weight_grid(n: usize) -> Vec<f64> {
    let lo = 8 * (n - 1);
    let hi = 16 * (n - 1);
    (lo..=hi).map(|k| k as f64 / 16.0).collect()
}
