//! Measurement harness: Monte Carlo and exhaustive per-symbol redundancy of
//! the coding schemes against a family, convergence experiments combining
//! the measured curves with game values and lower bounds, and CSV/SVG
//! emission.
//!
//! Determinism contract: a run is a pure function of (config, seed). Trial
//! `t` of member `k` draws from stream `k·trials + t` of a counter-based
//! generator seeded once, so parallel and serial runs agree byte for byte.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::codec::{self, CodecError, Scheme};
use crate::families::{parse_family_spec, Family, FamilyError};
use crate::minimax::{
    bayes_redundancy, hellinger_lower_bound, packing_lower_bound, tail_minimax, MinimaxError,
    Prior,
};
use crate::pmf::{Pmf, Symbol};

#[derive(Debug)]
pub enum HarnessError {
    /// Exhaustive enumeration would exceed the guard.
    GuardExceeded { needed: f64, guard: f64 },
    /// A member's residual tail is too heavy to sample at the requested
    /// length without biasing the expectation.
    Unsampleable { label: String, residual: f64 },
    BadConfig(String),
    Codec(CodecError),
    Family(FamilyError),
    Minimax(MinimaxError),
    Io(std::io::Error),
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::GuardExceeded { needed, guard } => {
                write!(f, "enumeration needs {needed:.3e} sequences, guard is {guard:.3e}")
            }
            HarnessError::Unsampleable { label, residual } => {
                write!(f, "member {label} keeps {residual:.3e} unresolved tail mass")
            }
            HarnessError::BadConfig(msg) => write!(f, "bad config: {msg}"),
            HarnessError::Codec(e) => write!(f, "{e}"),
            HarnessError::Family(e) => write!(f, "{e}"),
            HarnessError::Minimax(e) => write!(f, "{e}"),
            HarnessError::Io(e) => write!(f, "io: {e}"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<CodecError> for HarnessError {
    fn from(e: CodecError) -> Self {
        HarnessError::Codec(e)
    }
}
impl From<FamilyError> for HarnessError {
    fn from(e: FamilyError) -> Self {
        HarnessError::Family(e)
    }
}
impl From<MinimaxError> for HarnessError {
    fn from(e: MinimaxError) -> Self {
        HarnessError::Minimax(e)
    }
}
impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e)
    }
}

/// Measurement-level scheme: the wire schemes plus two measurement-only
/// members — the threshold schedule `m = √n` and self-coding (each member
/// against its own law, the zero-redundancy control).
#[derive(Debug, Clone, PartialEq)]
pub enum SchemeSpec {
    Censoring { m: u64 },
    CensoringSqrtN,
    Mixture { max_m: u64 },
    Direct,
}

impl SchemeSpec {
    /// Parse `censor:<m>`, `censor:sqrt`, `mixture:<max_m>`, or `direct`.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let text = text.trim();
        if text == "direct" {
            return Ok(SchemeSpec::Direct);
        }
        if let Some(rest) = text.strip_prefix("censor:") {
            if rest == "sqrt" {
                return Ok(SchemeSpec::CensoringSqrtN);
            }
            let m = rest
                .parse()
                .map_err(|_| HarnessError::BadConfig(format!("bad threshold `{rest}`")))?;
            return Ok(SchemeSpec::Censoring { m });
        }
        if let Some(rest) = text.strip_prefix("mixture:") {
            let max_m = rest
                .parse()
                .map_err(|_| HarnessError::BadConfig(format!("bad threshold `{rest}`")))?;
            return Ok(SchemeSpec::Mixture { max_m });
        }
        Err(HarnessError::BadConfig(format!("unknown scheme `{text}`")))
    }

    /// Threshold actually used at length `n` (0 for self-coding).
    pub fn threshold_at(&self, n: usize) -> u64 {
        match self {
            SchemeSpec::Censoring { m } => *m,
            SchemeSpec::CensoringSqrtN => ((n as f64).sqrt().round() as u64).max(2),
            SchemeSpec::Mixture { max_m } => *max_m,
            SchemeSpec::Direct => 0,
        }
    }

    fn wire_scheme(&self, n: usize) -> Option<Scheme> {
        match self {
            SchemeSpec::Censoring { .. } | SchemeSpec::CensoringSqrtN => Some(Scheme::Censoring {
                m: self.threshold_at(n),
            }),
            SchemeSpec::Mixture { max_m } => Some(Scheme::Mixture { max_m: *max_m }),
            SchemeSpec::Direct => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            SchemeSpec::Censoring { m } => format!("censor:{m}"),
            SchemeSpec::CensoringSqrtN => "censor:sqrt".into(),
            SchemeSpec::Mixture { max_m } => format!("mixture:{max_m}"),
            SchemeSpec::Direct => "direct".into(),
        }
    }
}

impl fmt::Display for SchemeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Per-member measurement statistics (per-symbol bits).
#[derive(Debug, Clone, serde::Serialize)]
pub struct MemberStats {
    pub label: String,
    pub mean: f64,
    pub stderr: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
    /// Worst single trial.
    pub worst: f64,
}

/// Monte Carlo redundancy measurement for one (family, scheme, n).
#[derive(Debug, Clone, serde::Serialize)]
pub struct RedundancyReport {
    pub family_id: String,
    pub scheme_id: String,
    pub n: usize,
    pub m: u64,
    pub trials: usize,
    pub seed: u64,
    pub per_member: Vec<MemberStats>,
    /// Stats of the member with the largest mean (the sup curve).
    pub sup: MemberStats,
}

struct SampleTable {
    symbols: Vec<Symbol>,
    cum: Vec<f64>,
    log2p: Vec<f64>,
}

impl SampleTable {
    fn build(p: &Pmf<f64>, label: &str, n: usize) -> Result<Self, HarnessError> {
        // Residual mass must be negligible against the n draws for the
        // sampled expectation to be exact at reporting precision.
        if p.residual_tail_mass() > 1e-12 / n as f64 {
            return Err(HarnessError::Unsampleable {
                label: label.to_string(),
                residual: p.residual_tail_mass(),
            });
        }
        let mut cum = Vec::with_capacity(p.atoms().len());
        let mut acc = 0.0;
        for &(_, px) in p.atoms() {
            acc += px;
            cum.push(acc);
        }
        Ok(SampleTable {
            symbols: p.atoms().iter().map(|&(x, _)| x).collect(),
            cum,
            log2p: p.atoms().iter().map(|&(_, px)| px.log2()).collect(),
        })
    }

    #[inline]
    fn draw(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.gen();
        self.cum
            .partition_point(|&c| c < u)
            .min(self.symbols.len() - 1)
    }
}

fn ideal_bits(
    xs: &[Symbol],
    scheme: &SchemeSpec,
    n: usize,
    member: &Pmf<f64>,
) -> Result<f64, HarnessError> {
    match scheme.wire_scheme(n) {
        Some(ws) => Ok(codec::codelength_ideal(xs, ws)?),
        None => {
            // Self-coding: the member's own law.
            let mut bits = 0.0;
            for &x in xs {
                bits -= member.prob(x).unwrap_or(0.0).log2();
            }
            Ok(bits)
        }
    }
}

/// Monte Carlo estimate of per-symbol redundancy
/// `E_p[log₂(p(Xⁿ)/q(Xⁿ))]/n` for every member.
pub fn measure_redundancy(
    family: &Family<f64>,
    scheme: &SchemeSpec,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<RedundancyReport, HarnessError> {
    if n == 0 || trials == 0 {
        return Err(HarnessError::BadConfig("n and trials must be ≥ 1".into()));
    }
    let tables: Vec<SampleTable> = family
        .iter()
        .map(|(label, p)| SampleTable::build(p, label, n))
        .collect::<Result<_, _>>()?;

    let mut per_member = Vec::with_capacity(family.len());
    for (k, (label, member)) in family.iter().enumerate() {
        let table = &tables[k];
        let values: Vec<f64> = (0..trials)
            .into_par_iter()
            .map(|t| {
                // Counter-based: one seed, a distinct stream per (member,
                // trial), so parallel and serial runs draw identically.
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((k * trials + t) as u64);
                let mut xs = Vec::with_capacity(n);
                let mut log2p = 0.0;
                for _ in 0..n {
                    let i = table.draw(&mut rng);
                    xs.push(table.symbols[i]);
                    log2p += table.log2p[i];
                }
                let ideal = ideal_bits(&xs, scheme, n, member)
                    .expect("samplable member stays encodable");
                (ideal + log2p) / n as f64
            })
            .collect();
        per_member.push(stats_of(label, &values));
    }
    let sup = per_member
        .iter()
        .max_by(|a, b| a.mean.partial_cmp(&b.mean).unwrap())
        .unwrap()
        .clone();
    Ok(RedundancyReport {
        family_id: family_id(family),
        scheme_id: scheme.label(),
        n,
        m: scheme.threshold_at(n),
        trials,
        seed,
        per_member,
        sup,
    })
}

fn stats_of(label: &str, values: &[f64]) -> MemberStats {
    let trials = values.len();
    let mean = values.iter().sum::<f64>() / trials as f64;
    let var = if trials > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials as f64 - 1.0)
    } else {
        0.0
    };
    let stderr = (var / trials as f64).sqrt();
    let worst = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    MemberStats {
        label: label.to_string(),
        mean,
        stderr,
        ci95_lo: mean - 1.96 * stderr,
        ci95_hi: mean + 1.96 * stderr,
        worst,
    }
}

fn family_id(family: &Family<f64>) -> String {
    format!("{}[{}]", family.construction(), family.len())
}

/// Exact per-member `R_n/n` by enumerating every sequence in the member's
/// support — the brute-force oracle the Monte Carlo path is checked against.
/// Guarded by `|support|ⁿ ≤ 10⁷` per member.
pub fn exhaustive_redundancy(
    family: &Family<f64>,
    scheme: &SchemeSpec,
    n: usize,
) -> Result<Vec<(String, f64)>, HarnessError> {
    const GUARD: f64 = 1e7;
    if n == 0 {
        return Err(HarnessError::BadConfig("n must be ≥ 1".into()));
    }
    let mut out = Vec::with_capacity(family.len());
    for (label, member) in family.iter() {
        if !member.is_fully_resolved() {
            return Err(HarnessError::Unsampleable {
                label: label.to_string(),
                residual: member.residual_tail_mass(),
            });
        }
        let s = member.atoms().len();
        let needed = (s as f64).powi(n as i32);
        if needed > GUARD {
            return Err(HarnessError::GuardExceeded {
                needed,
                guard: GUARD,
            });
        }
        let atoms = member.atoms();
        let n_seqs = s.pow(n as u32);
        let mut expect = crate::num::KahanSum::<f64>::new();
        let mut xs = vec![0 as Symbol; n];
        for seq in 0..n_seqs {
            let mut q = seq;
            let mut prob = 1.0f64;
            for slot in xs.iter_mut() {
                let (x, px) = atoms[q % s];
                *slot = x;
                prob *= px;
                q /= s;
            }
            if prob <= 0.0 {
                continue;
            }
            let ideal = ideal_bits(&xs, scheme, n, member)?;
            expect.add(prob * (ideal + prob.log2()));
        }
        out.push((label.to_string(), expect.value() / n as f64));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Convergence experiment
// ---------------------------------------------------------------------------

/// Parsed experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub family_label: String,
    pub family: Family<f64>,
    pub scheme: SchemeSpec,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    /// Threshold grid for the tail-game estimate column.
    pub m_grid: Vec<Symbol>,
    pub out_csv: Option<PathBuf>,
    pub out_svg: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parse the `key = value` experiment format. `family` is a path to a
    /// family spec file, resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, HarnessError> {
        let mut kv = std::collections::BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                HarnessError::BadConfig(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let family_path = kv
            .get("family")
            .ok_or_else(|| HarnessError::BadConfig("missing `family = <path>`".into()))?;
        let path = base_dir.join(family_path);
        let family_text = std::fs::read_to_string(&path)?;
        let family = parse_family_spec(&family_text)?;
        let scheme = SchemeSpec::parse(
            kv.get("scheme")
                .ok_or_else(|| HarnessError::BadConfig("missing `scheme`".into()))?,
        )?;
        let parse_list = |key: &str| -> Result<Vec<u64>, HarnessError> {
            kv.get(key)
                .map(|v| {
                    v.split(',')
                        .map(|item| {
                            item.trim().parse::<u64>().map_err(|_| {
                                HarnessError::BadConfig(format!("bad `{key}` entry `{item}`"))
                            })
                        })
                        .collect()
                })
                .unwrap_or(Ok(Vec::new()))
        };
        let n_grid: Vec<usize> = parse_list("n_grid")?.iter().map(|&v| v as usize).collect();
        if n_grid.is_empty() || n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::BadConfig(
                "`n_grid` must be a nonempty increasing list".into(),
            ));
        }
        let trials = kv
            .get("trials")
            .map(|v| v.parse::<usize>())
            .transpose()
            .map_err(|_| HarnessError::BadConfig("bad `trials`".into()))?
            .unwrap_or(1000);
        if trials < 1 {
            return Err(HarnessError::BadConfig("`trials` must be ≥ 1".into()));
        }
        let seed = kv
            .get("seed")
            .map(|v| v.parse::<u64>())
            .transpose()
            .map_err(|_| HarnessError::BadConfig("bad `seed`".into()))?
            .unwrap_or(0);
        let m_grid: Vec<Symbol> = parse_list("m_grid")?.iter().map(|&v| v as Symbol).collect();
        Ok(ExperimentConfig {
            family_label: family_path.clone(),
            family,
            scheme,
            n_grid,
            trials,
            seed,
            m_grid,
            out_csv: kv.get("out_csv").map(PathBuf::from),
            out_svg: kv.get("out_svg").map(PathBuf::from),
        })
    }
}

/// One row of the convergence summary.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SummaryRow {
    pub n: usize,
    pub m: u64,
    pub sup_redundancy: f64,
    pub sup_ci95_hi: f64,
    /// Tail-game value at the largest grid threshold (constant per run).
    pub t_estimate: Option<f64>,
    pub bayes_lb: Option<f64>,
    pub hellinger_lb: Option<f64>,
    pub packing_lb: Option<f64>,
}

#[derive(Debug)]
pub struct ExperimentResult {
    pub measurements: Vec<RedundancyReport>,
    pub summary: Vec<SummaryRow>,
}

/// Run the full convergence picture: measured sup redundancy per `n`, the
/// tail-game estimate at the largest threshold, and whichever lower bounds
/// are exactly computable at each `n`.
pub fn convergence_experiment(config: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    let family = &config.family;
    let t_estimate = match config.m_grid.last() {
        Some(&m) => Some(tail_minimax(family, m)?.value),
        None => None,
    };
    let prior = Prior::uniform(family.len());
    let mut measurements = Vec::with_capacity(config.n_grid.len());
    let mut summary = Vec::with_capacity(config.n_grid.len());
    for &n in &config.n_grid {
        let report = measure_redundancy(family, &config.scheme, n, config.trials, config.seed)?;
        let bayes_lb = match bayes_redundancy(family, &prior, n) {
            Ok(b) => Some(b.value / n as f64),
            Err(MinimaxError::GuardExceeded { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        let hellinger_lb = match hellinger_lower_bound(family, &prior, n) {
            Ok(v) => Some(v / n as f64),
            Err(_) => None,
        };
        let packing_lb = packing_events(family, n)
            .map(|(probs, count)| packing_lower_bound(&probs, count).map(|v| v / n as f64))
            .transpose()?;
        summary.push(SummaryRow {
            n,
            m: report.m,
            sup_redundancy: report.sup.mean,
            sup_ci95_hi: report.sup.ci95_hi,
            t_estimate,
            bayes_lb,
            hellinger_lb,
            packing_lb,
        });
        measurements.push(report);
    }
    Ok(ExperimentResult {
        measurements,
        summary,
    })
}

/// Disjoint high-probability events from member signature symbols: for each
/// member owning a symbol no other member supports, the event "every draw
/// stays in the member's support and the signature shows up at least once"
/// has probability `1 − (1 − p(sig))ⁿ`, and the events are pairwise disjoint
/// across members. Returns `None` when fewer than two members have
/// signatures.
pub fn packing_events(family: &Family<f64>, n: usize) -> Option<(Vec<f64>, usize)> {
    use std::collections::BTreeMap;
    let mut owner: BTreeMap<Symbol, (usize, usize)> = BTreeMap::new(); // symbol -> (count, member)
    for (k, p) in family.members().iter().enumerate() {
        for &(x, _) in p.atoms() {
            owner
                .entry(x)
                .and_modify(|e| e.0 += 1)
                .or_insert((1, k));
        }
    }
    let mut best_sig: Vec<Option<f64>> = vec![None; family.len()];
    for (&x, &(count, k)) in &owner {
        if count == 1 {
            let px = family.members()[k].prob(x).unwrap();
            if best_sig[k].map_or(true, |cur| px > cur) {
                best_sig[k] = Some(px);
            }
        }
    }
    let probs: Vec<f64> = best_sig
        .iter()
        .flatten()
        .map(|&p| 1.0 - (1.0 - p).powi(n as i32))
        .collect();
    if probs.len() >= 2 {
        let count = probs.len();
        Some((probs, count))
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// CSV / SVG emission
// ---------------------------------------------------------------------------

pub const MEASUREMENT_CSV_HEADER: &str =
    "family,scheme,n,m,trials,member,redundancy_per_symbol,stderr,ci95_lo,ci95_hi";

pub const SUMMARY_CSV_HEADER: &str =
    "n,m,sup_redundancy_per_symbol,sup_ci95_hi,t_estimate,bayes_lb_per_symbol,hellinger_lb_per_symbol,packing_lb_per_symbol";

/// Measurement rows, one line per member plus a `__sup__` aggregate row.
pub fn measurement_csv(reports: &[RedundancyReport]) -> String {
    let mut out = String::from(MEASUREMENT_CSV_HEADER);
    out.push('\n');
    for r in reports {
        for m in &r.per_member {
            push_measurement_row(&mut out, r, &m.label, m);
        }
        let sup = r.sup.clone();
        push_measurement_row(&mut out, r, "__sup__", &sup);
    }
    out
}

fn push_measurement_row(out: &mut String, r: &RedundancyReport, label: &str, m: &MemberStats) {
    out.push_str(&format!(
        "{},{},{},{},{},{},{},{},{},{}\n",
        r.family_id, r.scheme_id, r.n, r.m, r.trials, label, m.mean, m.stderr, m.ci95_lo, m.ci95_hi
    ));
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.n,
            r.m,
            r.sup_redundancy,
            r.sup_ci95_hi,
            opt(r.t_estimate),
            opt(r.bayes_lb),
            opt(r.hellinger_lb),
            opt(r.packing_lb),
        ));
    }
    out
}

pub fn emit_csv(reports: &[RedundancyReport], path: &Path) -> Result<(), HarnessError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(measurement_csv(reports).as_bytes())?;
    Ok(())
}

pub fn emit_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<(), HarnessError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(summary_csv(rows).as_bytes())?;
    Ok(())
}

/// Static line chart of per-symbol redundancy against `n`: one polyline per
/// series, the tail-game estimate as a horizontal rule. No scripts.
pub fn emit_svg(rows: &[SummaryRow], path: &Path) -> Result<(), HarnessError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(summary_svg(rows).as_bytes())?;
    Ok(())
}

pub fn summary_svg(rows: &[SummaryRow]) -> String {
    const W: f64 = 800.0;
    const H: f64 = 500.0;
    const ML: f64 = 70.0;
    const MR: f64 = 30.0;
    const MT: f64 = 30.0;
    const MB: f64 = 60.0;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    if rows.is_empty() {
        svg.push_str("<text x=\"20\" y=\"40\">no data</text>\n</svg>\n");
        return svg;
    }
    let series: Vec<(&str, &str, Vec<Option<f64>>)> = vec![
        (
            "sup redundancy",
            "#d62728",
            rows.iter().map(|r| Some(r.sup_redundancy)).collect(),
        ),
        (
            "t estimate",
            "#1f77b4",
            rows.iter().map(|r| r.t_estimate).collect(),
        ),
        ("bayes lb", "#2ca02c", rows.iter().map(|r| r.bayes_lb).collect()),
        (
            "hellinger lb",
            "#9467bd",
            rows.iter().map(|r| r.hellinger_lb).collect(),
        ),
        (
            "packing lb",
            "#8c564b",
            rows.iter().map(|r| r.packing_lb).collect(),
        ),
    ];
    let ymax = series
        .iter()
        .flat_map(|(_, _, vs)| vs.iter().flatten())
        .fold(0.0f64, |a, &b| a.max(b))
        .max(1e-9)
        * 1.1;
    let ymin = series
        .iter()
        .flat_map(|(_, _, vs)| vs.iter().flatten())
        .fold(0.0f64, |a, &b| a.min(b));
    let xs: Vec<f64> = (0..rows.len())
        .map(|i| ML + (W - ML - MR) * i as f64 / (rows.len().max(2) - 1) as f64)
        .collect();
    let y_of = |v: f64| MT + (H - MT - MB) * (1.0 - (v - ymin) / (ymax - ymin));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MB
    ));
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MB,
        W - MR,
        H - MB
    ));
    for (i, r) in rows.iter().enumerate() {
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">n={}</text>\n",
            xs[i],
            H - MB + 20.0,
            r.n
        ));
    }
    for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let v = ymin + (ymax - ymin) * frac;
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"end\">{v:.3}</text>\n",
            ML - 8.0,
            y_of(v) + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\">bits per symbol</text>\n",
        18.0,
        (MT + H - MB) / 2.0
    ));
    for (si, (name, color, values)) in series.iter().enumerate() {
        let pts: Vec<String> = values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| format!("{:.2},{:.2}", xs[i], y_of(v))))
            .collect();
        if pts.is_empty() {
            continue;
        }
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" fill=\"{color}\">{name}</text>\n",
            W - MR - 140.0,
            MT + 16.0 * (si as f64 + 1.0)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
