//! One runner per experiment kind. Each fans its independent
//! `(R, seed, p)` cells out to the worker pool and merges the rows back in
//! config order.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use smallcap::decoupling::{
    critical_p, decoupling_ratio, exponent_audit_at, multilinear_ratio, predicted_exponent, restriction_exponent_audit,
    weight_grid, ExponentAuditRow,
};
use smallcap::incidence::{
    build_family, density_field, highfreq_l2_audit, highlow_split, incidence_sweep, level_sets, lowfreq_density_audit,
    HighLowLadder, SyntheticTubeFamily,
};
use smallcap::packets::{decompose, default_window, pigeonhole_weights, relative_l2_error, sample_points, slab_census};
use smallcap::quadrature::lp_norm;
use smallcap::regression::fit_exponent;
use smallcap::signal::{evaluate, restrict, synth_family, synth_random};
use smallcap::{AlphaVector, AtomicSignal, CapFamily, CapKind, Family, Scale};

use crate::config::{ExperimentConfig, IncidenceConfig, Kind, RegressConfig, Validated};
use crate::error::CliError;
use crate::formats::{to_compact_json, to_json, CapsDoc, FamilyDoc, SignalDoc, TubeDoc};
use crate::output::{content_hash, Cell, Check, FitSummary, Table};

/// Relative slack of the slope ceiling.
pub const SLOPE_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub table: Table,
    pub fits: Vec<FitSummary>,
    pub checks: Vec<Check>,
    pub artifacts: Vec<(String, String)>,
}

impl Outcome {
    fn new(table: Table) -> Self {
        Self { table, fits: Vec::new(), checks: Vec::new(), artifacts: Vec::new() }
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

fn alpha_of(v: &Validated) -> &AlphaVector {
    v.alpha.as_ref().expect("validated alpha")
}

fn family_of(c: &ExperimentConfig) -> Family {
    c.family.expect("validated family").into()
}

#[derive(Debug, Clone, Copy)]
struct CellKey {
    scale: Scale,
    seed: u64,
    p: f64,
}

fn cells(c: &ExperimentConfig, v: &Validated, with_p: bool) -> Vec<CellKey> {
    let ps: Vec<f64> = if with_p { c.p.clone() } else { vec![f64::NAN] };
    let mut out = Vec::new();
    for &scale in &v.scales {
        for &seed in &c.seeds {
            for &p in &ps {
                out.push(CellKey { scale, seed, p });
            }
        }
    }
    out
}

fn signal_for(c: &ExperimentConfig, alpha: &AlphaVector, scale: Scale, seed: u64) -> smallcap::Result<AtomicSignal> {
    match (family_of(c), c.per_cap) {
        (Family::Random, Some(k)) => synth_random(alpha, scale, seed, k),
        (f, _) => synth_family(alpha, scale, f, seed),
    }
}

/// Fits `value ~ R^slope` for each group with at least three scales.
fn group_fits(
    rows: &[(CellKey, Option<f64>)],
    label: impl Fn(&CellKey) -> String,
    predicted: impl Fn(&CellKey) -> Option<f64>,
    pass: impl Fn(f64, Option<f64>) -> bool,
) -> Vec<FitSummary> {
    let mut groups: BTreeMap<String, (CellKey, Vec<(f64, f64)>)> = BTreeMap::new();
    let mut order = Vec::new();
    for (key, value) in rows {
        let name = label(key);
        if !groups.contains_key(&name) {
            order.push(name.clone());
        }
        let entry = groups.entry(name).or_insert((*key, Vec::new()));
        if let Some(v) = value {
            entry.1.push((key.scale.as_f64(), *v));
        }
    }
    order
        .into_iter()
        .filter_map(|name| {
            let (key, pts) = &groups[&name];
            let fit = fit_exponent(pts).ok()?;
            let pred = predicted(key);
            Some(FitSummary {
                group: name,
                slope: fit.slope,
                intercept: fit.intercept,
                max_residual: fit.max_residual,
                predicted: pred,
                pass: pass(fit.slope, pred),
            })
        })
        .collect()
}

pub fn execute(c: &ExperimentConfig, v: &Validated) -> Result<Outcome, CliError> {
    Ok(match c.kind {
        Kind::Caps => caps(c, v),
        Kind::Synth => synth(c, v),
        Kind::Norm => norm(c, v),
        Kind::Decouple => decouple(c, v),
        Kind::Multilinear => multilinear(c, v),
        Kind::Packets => packets(c, v),
        Kind::Incidence => incidence(c, v),
        Kind::AuditExponents => audit_exponents(c, v),
        Kind::Regress => regress(v.regress.as_ref().expect("validated regress"))?,
    })
}

fn caps(c: &ExperimentConfig, v: &Validated) -> Outcome {
    let alpha = alpha_of(v);
    let kind: CapKind = c.cap_kind.map_or(CapKind::Small, Into::into);
    let mut t = Table::new(&["alpha", "R", "kind", "index", "corner", "center"]);
    let mut artifacts = Vec::new();
    let families: Vec<_> = v.scales.par_iter().map(|&r| (r, CapFamily::new(alpha.clone(), r, kind))).collect();
    for (r, f) in families {
        match f {
            Ok(f) => {
                for (i, cap) in f.caps().into_iter().enumerate() {
                    t.push(vec![
                        join(alpha.entries()).into(),
                        r.value().into(),
                        kind.as_str().into(),
                        i.into(),
                        join(&cap.corner).into(),
                        join(&cap.center()).into(),
                    ]);
                }
                artifacts.push((format!("caps_R{}.json", r.value()), to_json(&CapsDoc::new(&f))));
            }
            Err(e) => {
                t.push_error(vec![join(alpha.entries()).into(), r.value().into(), kind.as_str().into()], e.to_string())
            }
        }
    }
    Outcome { artifacts, ..Outcome::new(t) }
}

fn synth(c: &ExperimentConfig, v: &Validated) -> Outcome {
    let alpha = alpha_of(v);
    let family = family_of(c);
    let mut t = Table::new(&["alpha", "R", "family", "seed", "atoms", "energy", "lattice_period"]);
    let mut artifacts = Vec::new();
    let results: Vec<_> =
        cells(c, v, false).into_par_iter().map(|k| (k, signal_for(c, alpha, k.scale, k.seed))).collect();
    for (k, s) in results {
        let key = vec![join(alpha.entries()).into(), k.scale.value().into(), family.as_str().into(), k.seed.into()];
        match s {
            Ok(s) => {
                let mut row = key;
                row.extend([s.len().into(), s.energy().into(), s.lattice_period().map_or(Cell::Empty, Cell::Float)]);
                t.push(row);
                artifacts
                    .push((format!("signal_R{}_seed{}.json", k.scale.value(), k.seed), to_json(&SignalDoc::new(&s))));
            }
            Err(e) => t.push_error(key, e.to_string()),
        }
    }
    Outcome { artifacts, ..Outcome::new(t) }
}

fn norm(c: &ExperimentConfig, v: &Validated) -> Outcome {
    let alpha = alpha_of(v);
    let family = family_of(c);
    let mut t = Table::new(&["alpha", "R", "p", "family", "seed", "mode", "region", "samples", "value", "flags"]);
    let results: Vec<_> = cells(c, v, true)
        .into_par_iter()
        .map(|k| {
            let quad = c.quadrature.policy(k.seed).spec(alpha.dimension(), k.scale);
            (k, signal_for(c, alpha, k.scale, k.seed).and_then(|s| lp_norm(&s, k.p, &quad)))
        })
        .collect();
    let mut values = Vec::new();
    for (k, r) in results {
        let key = vec![
            join(alpha.entries()).into(),
            k.scale.value().into(),
            k.p.into(),
            family.as_str().into(),
            k.seed.into(),
        ];
        match r {
            Ok(nv) => {
                let mut row = key;
                row.extend([
                    nv.mode.as_str().into(),
                    nv.region.into(),
                    nv.samples.into(),
                    nv.value.into(),
                    nv.flags.label().into(),
                ]);
                t.push(row);
                values.push((k, Some(nv.value)));
            }
            Err(e) => {
                t.push_error(key, e.to_string());
                values.push((k, None));
            }
        }
    }
    let pc = critical_p(alpha);
    let weight = alpha.weight();
    // Only the constant family at p_c carries a sharp prediction.
    let fits = group_fits(
        &values,
        |k| format!("p={} seed={}", k.p, k.seed),
        |k| (family == Family::Constant && (k.p - pc).abs() < 1e-12).then_some(weight / 2.0),
        |slope, pred| pred.is_none_or(|p| (slope - p).abs() <= SLOPE_TOLERANCE),
    );
    Outcome { fits, ..Outcome::new(t) }
}

fn decouple(c: &ExperimentConfig, v: &Validated) -> Outcome {
    let alpha = alpha_of(v);
    let family = family_of(c);
    let mut t = Table::new(&[
        "alpha",
        "R",
        "p",
        "family",
        "seed",
        "lhs",
        "rhs_core",
        "ratio",
        "predicted_exponent",
        "caps",
        "mode",
        "region",
        "samples",
        "flags",
        "in_range",
    ]);
    let results: Vec<_> = cells(c, v, true)
        .into_par_iter()
        .map(|k| {
            let quad = c.quadrature.policy(k.seed).spec(alpha.dimension(), k.scale);
            (k, signal_for(c, alpha, k.scale, k.seed).and_then(|s| decoupling_ratio(&s, k.p, &quad)))
        })
        .collect();
    let mut values = Vec::new();
    for (k, r) in results {
        let key = vec![
            join(alpha.entries()).into(),
            k.scale.value().into(),
            k.p.into(),
            family.as_str().into(),
            k.seed.into(),
        ];
        match r {
            Ok(d) => {
                let mut row = key;
                row.extend([
                    d.lhs.into(),
                    d.rhs_core.into(),
                    d.ratio.into(),
                    d.predicted_exponent.into(),
                    d.caps.into(),
                    d.mode.as_str().into(),
                    d.region.into(),
                    d.samples.into(),
                    d.flags.label().into(),
                    d.in_range.into(),
                ]);
                t.push(row);
                values.push((k, Some(d.ratio)));
            }
            Err(e) => {
                t.push_error(key, e.to_string());
                values.push((k, None));
            }
        }
    }
    let weight = alpha.weight();
    let fits = group_fits(
        &values,
        |k| format!("p={} seed={}", k.p, k.seed),
        |k| Some(predicted_exponent(weight, k.p)),
        |slope, pred| slope <= pred.unwrap_or(0.0) + SLOPE_TOLERANCE,
    );
    Outcome { fits, ..Outcome::new(t) }
}

/// Disjoint, transverse base regions, one per signal.
fn multilinear_regions(n: usize) -> Vec<(Vec<f64>, f64)> {
    match n {
        2 => vec![(vec![-0.75], 0.25), (vec![0.75], 0.25)],
        _ => vec![(vec![-0.6, -0.6], 0.3), (vec![0.6, -0.6], 0.3), (vec![0.0, 0.6], 0.3)],
    }
}

fn multilinear(c: &ExperimentConfig, v: &Validated) -> Outcome {
    let alpha = alpha_of(v);
    let n = alpha.dimension();
    let family: Family = c.family.map_or(Family::Constant, Into::into);
    let a_min = c.multilinear.clone().unwrap_or_default().a_min;
    let mut t = Table::new(&[
        "alpha",
        "R",
        "p",
        "family",
        "seed",
        "lhs",
        "rhs_core",
        "ratio",
        "predicted_exponent",
        "normalized",
        "min_transversality",
        "samples",
    ]);
    let results: Vec<_> = cells(c, v, true)
        .into_par_iter()
        .map(|k| {
            let quad = c.quadrature.policy(k.seed).spec(n, k.scale);
            let r = synth_family(alpha, k.scale, family, k.seed).and_then(|s| {
                let parts: Vec<AtomicSignal> = multilinear_regions(n)
                    .into_iter()
                    .map(|(center, half)| restrict(&s, |x| x.iter().zip(&center).all(|(a, b)| (a - b).abs() < half)))
                    .collect();
                multilinear_ratio(&parts, a_min, k.p, &quad)
            });
            (k, r)
        })
        .collect();
    for (k, r) in results {
        let key = vec![
            join(alpha.entries()).into(),
            k.scale.value().into(),
            k.p.into(),
            family.as_str().into(),
            k.seed.into(),
        ];
        match r {
            Ok(m) => {
                let mut row = key;
                row.extend([
                    m.lhs.into(),
                    m.rhs_core.into(),
                    m.ratio.into(),
                    m.predicted_exponent.into(),
                    m.normalized.into(),
                    m.min_transversality.into(),
                    m.samples.into(),
                ]);
                t.push(row);
            }
            Err(e) => t.push_error(key, e.to_string()),
        }
    }
    Outcome::new(t)
}

/// Relative reconstruction error allowed on a packet run.
pub const PACKET_ERROR_LIMIT: f64 = 1e-2;

fn packets(c: &ExperimentConfig, v: &Validated) -> Outcome {
    let alpha = alpha_of(v);
    let family = family_of(c);
    let opts = c.packets.clone().unwrap_or_default();
    let mut t = Table::new(&[
        "alpha",
        "R",
        "family",
        "seed",
        "thetas",
        "tubes",
        "points",
        "relative_error",
        "error_bound",
        "energy_ratio",
        "weight_classes",
        "retained_fraction",
        "slab_max",
    ]);
    let mut artifacts = Vec::new();
    let mut checks = Vec::new();
    let results: Vec<_> = cells(c, v, false)
        .into_par_iter()
        .map(|k| {
            let r = signal_for(c, alpha, k.scale, k.seed).and_then(|s| {
                let d = decompose(&s, None)?;
                let (lo, hi) = default_window(alpha.dimension(), k.scale);
                let pts = sample_points(&lo, &hi, opts.points, k.seed);
                let err = relative_l2_error(&d.reconstruct(&pts), &evaluate(&s, &pts));
                let tubes = d.tubes();
                let classes = pigeonhole_weights(&tubes);
                let slabs = slab_census(&tubes, alpha, k.scale);
                Ok((d, tubes, err, classes, slabs))
            });
            (k, r)
        })
        .collect();
    for (k, r) in results {
        let key = vec![join(alpha.entries()).into(), k.scale.value().into(), family.as_str().into(), k.seed.into()];
        match r {
            Ok((d, tubes, err, classes, slabs)) => {
                let energy = d.energy_ratio();
                let mut row = key;
                row.extend([
                    d.theta_count().into(),
                    tubes.len().into(),
                    opts.points.into(),
                    err.into(),
                    d.relative_error_bound().into(),
                    energy.into(),
                    classes.classes.len().into(),
                    classes.retained_fraction().into(),
                    slabs.max_count.into(),
                ]);
                t.push(row);
                let tag = format!("R={} seed={}", k.scale.value(), k.seed);
                checks.push(Check::at_most(format!("relative_error {tag}"), err, PACKET_ERROR_LIMIT));
                checks.push(Check::within(format!("energy_ratio {tag}"), energy, 0.5, 2.0));
                if opts.emit_tubes {
                    let docs: Vec<TubeDoc> = tubes.iter().map(TubeDoc::new).collect();
                    artifacts.push((format!("tubes_R{}_seed{}.json", k.scale.value(), k.seed), to_json(&docs)));
                }
            }
            Err(e) => t.push_error(key, e.to_string()),
        }
    }
    Outcome { checks, artifacts, ..Outcome::new(t) }
}

pub const INCIDENCE_RATIO_LIMIT: f64 = 32.0;
pub const HIGHFREQ_RATIO_LIMIT: f64 = 16.0;
pub const LOWFREQ_RATIO_LIMIT: f64 = 8.0;
pub const RECONSTRUCTION_LIMIT: f64 = 1e-6;

/// Rows of one incidence family: `(quantity, level, measured, bound, ratio)`.
type AuditRows = Vec<(&'static str, f64, f64, f64, f64)>;

fn incidence_rows(family: &SyntheticTubeFamily, opts: &IncidenceConfig) -> smallcap::Result<AuditRows> {
    let mut rows: AuditRows = Vec::new();
    for rec in incidence_sweep(family, opts.enlargement)? {
        rows.push(("incidence", rec.r as f64, rec.measured as f64, rec.bound, rec.ratio));
    }
    if opts.highlow {
        let n = family.dimension();
        let field = density_field(&family.tubes, n, family.scale);
        let ladder = HighLowLadder::new(&family.alpha, family.scale);
        let split = highlow_split(&field, &ladder)?;
        rows.push((
            "reconstruction",
            0.0,
            split.reconstruction_error,
            RECONSTRUCTION_LIMIT,
            split.reconstruction_error / RECONSTRUCTION_LIMIT,
        ));
        for &t in &ladder.levels {
            let a = highfreq_l2_audit(family, &field, &split, t)?;
            rows.push(("highfreq-l2", t, a.measured, a.bound, a.ratio));
        }
        let a = lowfreq_density_audit(family, &split);
        rows.push(("lowfreq-density", ladder.t0, a.measured, a.bound, a.ratio));
        let mut r = 1.0;
        while r <= field.max() {
            let ls = level_sets(&field, &split, &ladder, r)?;
            let cover = ls.l_measure + ls.omega.iter().map(|o| o.1).sum::<f64>();
            let ratio = if cover > 0.0 { ls.u_measure / cover } else { 0.0 };
            rows.push(("level-set", r, ls.u_measure, cover, ratio));
            r *= 2.0;
        }
    }
    Ok(rows)
}

fn incidence(c: &ExperimentConfig, v: &Validated) -> Outcome {
    let alpha = alpha_of(v);
    let n = alpha.dimension();
    let opts = c.incidence.clone().unwrap_or_default();
    let placement = opts.placement.placement(n);
    let mut t = Table::new(&[
        "family_hash",
        "alpha",
        "R",
        "seed",
        "placement",
        "thetas_frac",
        "tubes_per_theta",
        "enlargement",
        "tubes",
        "n_i",
        "quantity",
        "level",
        "measured",
        "bound",
        "ratio",
    ]);
    let results: Vec<_> = cells(c, v, false)
        .into_par_iter()
        .map(|k| {
            let r = build_family(alpha, k.scale, opts.thetas_frac, opts.tubes_per_theta, placement.clone(), k.seed)
                .map(|f| {
                    let rows = incidence_rows(&f, &opts);
                    (f, rows)
                });
            (k, r)
        })
        .collect();
    let mut artifacts = Vec::new();
    let mut worst: BTreeMap<&'static str, f64> = BTreeMap::new();
    for (k, r) in results {
        let params = |hash: String| -> Vec<Cell> {
            vec![
                hash.into(),
                join(alpha.entries()).into(),
                k.scale.value().into(),
                k.seed.into(),
                placement.as_str().into(),
                opts.thetas_frac.into(),
                opts.tubes_per_theta.into(),
                opts.enlargement.into(),
            ]
        };
        match r {
            Ok((f, rows)) => {
                let doc = FamilyDoc::new(&f);
                let hash = content_hash(to_compact_json(&doc).as_bytes())[..16].to_string();
                if opts.emit_families {
                    artifacts.push((format!("family_R{}_seed{}.json", k.scale.value(), k.seed), to_json(&doc)));
                }
                let mut key = params(hash);
                key.extend([f.len().into(), f.n_i.into()]);
                match rows {
                    Ok(rows) => {
                        for (q, level, measured, bound, ratio) in rows {
                            let w = worst.entry(q).or_insert(0.0);
                            *w = w.max(if q == "reconstruction" { measured } else { ratio });
                            let mut row = key.clone();
                            row.extend([q.into(), level.into(), measured.into(), bound.into(), ratio.into()]);
                            t.push(row);
                        }
                    }
                    Err(e) => t.push_error(key, e.to_string()),
                }
            }
            Err(e) => t.push_error(params(String::new()), e.to_string()),
        }
    }
    let mut checks = Vec::new();
    for (q, limit) in [
        ("incidence", INCIDENCE_RATIO_LIMIT),
        ("highfreq-l2", HIGHFREQ_RATIO_LIMIT),
        ("lowfreq-density", LOWFREQ_RATIO_LIMIT),
        ("reconstruction", RECONSTRUCTION_LIMIT),
    ] {
        if let Some(&w) = worst.get(q) {
            checks.push(Check::at_most(format!("max {q}"), w, limit));
        }
    }
    Outcome { checks, artifacts, ..Outcome::new(t) }
}

fn audit_exponents(c: &ExperimentConfig, v: &Validated) -> Outcome {
    let rows: Vec<ExponentAuditRow> = match (&c.alpha, c.n) {
        (Some(_), _) => restriction_exponent_audit(alpha_of(v), &v.scales),
        (None, _) => {
            let n = alpha_of(v).dimension();
            weight_grid(n).into_iter().flat_map(|w| exponent_audit_at(w, &v.scales)).collect()
        }
    };
    let mut t = Table::new(&[
        "R",
        "weight",
        "p",
        "left_exponent",
        "right_exponent",
        "gap",
        "left_value",
        "right_value",
        "pass",
    ]);
    let mut all = true;
    for r in &rows {
        all &= r.pass;
        t.push(vec![
            r.scale.into(),
            r.weight.into(),
            r.p.into(),
            r.left_exponent.into(),
            r.right_exponent.into(),
            r.gap.into(),
            r.left_value.into(),
            r.right_value.into(),
            r.pass.into(),
        ]);
    }
    let min_gap = rows.iter().map(|r| r.gap).fold(f64::INFINITY, f64::min);
    let mut out = Outcome::new(t);
    out.checks.push(Check { name: "all rows pass".into(), value: min_gap, limit: ">= 0".into(), pass: all });
    out
}

/// Reads two numeric columns of a results CSV, skipping error rows.
pub fn read_columns(path: &Path, x: &str, y: &str) -> Result<Vec<(f64, f64)>, CliError> {
    let label = path.display().to_string();
    let bad = |message: String| CliError::Csv { path: label.clone(), message };
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => CliError::io(path, std::io::Error::other(e.to_string())),
        _ => bad(e.to_string()),
    })?;
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| bad(format!("no column {name:?}")));
    let (ix, iy) = (find(x)?, find(y)?);
    let ie = headers.iter().position(|h| h == "error");
    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if ie.and_then(|i| rec.get(i)).is_some_and(|s| !s.is_empty()) {
            continue;
        }
        let parse = |i: usize, name: &str| -> Result<f64, CliError> {
            let s = rec.get(i).unwrap_or("");
            s.trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("row {}: column {name:?} is not a number: {s:?}", line + 2)))
        };
        out.push((parse(ix, x)?, parse(iy, y)?));
    }
    Ok(out)
}

#[derive(Debug, serde::Serialize)]
struct RegressDoc<'a> {
    csv: String,
    x: &'a str,
    y: &'a str,
    slope: f64,
    intercept: f64,
    max_residual: f64,
    residuals: Vec<f64>,
}

fn regress(r: &RegressConfig) -> Result<Outcome, CliError> {
    let pts = read_columns(&r.csv, &r.x, &r.y)?;
    let fit = fit_exponent(&pts)?;
    let mut t = Table::new(&["x", "y", "log2_x", "log2_y", "fitted", "residual"]);
    let mut residuals = Vec::with_capacity(pts.len());
    for &(x, y) in &pts {
        let fitted = fit.slope * x.log2() + fit.intercept;
        let res = y.log2() - fitted;
        residuals.push(res);
        t.push(vec![x.into(), y.into(), x.log2().into(), y.log2().into(), fitted.into(), res.into()]);
    }
    let doc = RegressDoc {
        csv: r.csv.display().to_string(),
        x: &r.x,
        y: &r.y,
        slope: fit.slope,
        intercept: fit.intercept,
        max_residual: fit.max_residual,
        residuals,
    };
    let mut out = Outcome::new(t);
    out.fits.push(FitSummary {
        group: format!("{} vs {}", r.y, r.x),
        slope: fit.slope,
        intercept: fit.intercept,
        max_residual: fit.max_residual,
        predicted: None,
        pass: true,
    });
    out.artifacts.push(("regress.json".into(), to_json(&doc)));
    Ok(out)
}
