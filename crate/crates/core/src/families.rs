//! Constructors for the distribution families the redundancy games are
//! played over, plus a small text format for describing finite sub-families.
//!
//! Every construction materializes members on a finite parameter grid. Two
//! coding laws — the dyadic block law ([`Prop1Law`]) and the heavy-tailed law
//! ([`HeavyLaw`]) — additionally exist in closed form over all of the
//! naturals, because divergences against them are needed at symbols far too
//! deep to materialize (two-point spike members place mass at `2^64` and
//! beyond).

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use serde::Serialize;

use crate::num::{KahanSum, Real};
use crate::pmf::{quantile, MassFn, Pmf, PmfError, Symbol};

/// Materialization guard for the block law: `2^(i_max+1)` atoms.
const PROP1_MAX_LEVEL: u32 = 20;
/// Materialization guard for the totally-bounded construction: `2^(k²)` atoms.
const TOTALLY_BOUNDED_MAX_K: u32 = 5;
/// Guard on the log-moment bound: members are uniforms up to `2^√h`.
const LOGMOMENT_MAX_H: f64 = 100.0;
/// Guard on uniform ranges.
const UNIFORM_MAX_SPAN: u128 = 1 << 22;
/// Cap on `j = all` expansion per epsilon in the spec-file parser.
const BLOCK_EXPANSION_CAP: u128 = 4096;

#[derive(Debug, Clone, PartialEq)]
pub enum FamilyError {
    /// Spike index outside the dyadic block for the given epsilon.
    IndexOutOfRange { j: Symbol, max: Symbol },
    /// Staircase offset does not fit its level.
    OffsetOutOfRange { level: u32, offset: Symbol },
    BadParameter(String),
    BadRange { lo: Symbol, hi: Symbol },
    /// Construction would materialize more atoms than the guard allows.
    TooLarge(String),
    UnknownConstruction(String),
    /// Spec-file parse failure, anchored to a 1-based line number.
    Parse { line: usize, msg: String },
    Pmf(PmfError),
}

impl fmt::Display for FamilyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilyError::IndexOutOfRange { j, max } => {
                write!(f, "spike index {j} outside block (max {max})")
            }
            FamilyError::OffsetOutOfRange { level, offset } => {
                write!(f, "offset {offset} does not fit level {level}")
            }
            FamilyError::BadParameter(msg) => write!(f, "bad parameter: {msg}"),
            FamilyError::BadRange { lo, hi } => write!(f, "bad range [{lo}, {hi}]"),
            FamilyError::TooLarge(msg) => write!(f, "construction too large: {msg}"),
            FamilyError::UnknownConstruction(name) => {
                write!(f, "unknown construction `{name}`")
            }
            FamilyError::Parse { line, msg } => write!(f, "line {line}: {msg}"),
            FamilyError::Pmf(e) => write!(f, "invalid member: {e}"),
        }
    }
}

impl std::error::Error for FamilyError {}

impl From<PmfError> for FamilyError {
    fn from(e: PmfError) -> Self {
        FamilyError::Pmf(e)
    }
}

/// Which recipe produced a family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Construction {
    BinaryTail,
    StaircaseI,
    WorstCaseHeavy,
    UniformRange,
    TotallyBoundedU,
    BoundedLogMoment,
    Custom,
}

impl fmt::Display for Construction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Construction::BinaryTail => "binary_tail",
            Construction::StaircaseI => "staircase",
            Construction::WorstCaseHeavy => "worstcase",
            Construction::UniformRange => "uniform_range",
            Construction::TotallyBoundedU => "totally_bounded",
            Construction::BoundedLogMoment => "bounded_logmoment",
            Construction::Custom => "custom",
        };
        f.write_str(name)
    }
}

/// A finite, indexed collection of distributions with provenance metadata.
#[derive(Debug, Clone)]
pub struct Family<T> {
    members: Vec<Pmf<T>>,
    labels: Vec<String>,
    construction: Construction,
    params: BTreeMap<String, String>,
}

impl<T: Real> Family<T> {
    pub fn new(
        members: Vec<Pmf<T>>,
        labels: Vec<String>,
        construction: Construction,
        params: BTreeMap<String, String>,
    ) -> Result<Self, FamilyError> {
        if members.is_empty() {
            return Err(FamilyError::BadParameter("family must be nonempty".into()));
        }
        if members.len() != labels.len() {
            return Err(FamilyError::BadParameter(
                "one label per member required".into(),
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for label in &labels {
            if !seen.insert(label.clone()) {
                return Err(FamilyError::BadParameter(format!(
                    "duplicate label `{label}`"
                )));
            }
        }
        Ok(Family {
            members,
            labels,
            construction,
            params,
        })
    }

    /// Single-member family with a generated label.
    pub fn singleton(member: Pmf<T>, label: impl Into<String>) -> Self {
        Family {
            members: vec![member],
            labels: vec![label.into()],
            construction: Construction::Custom,
            params: BTreeMap::new(),
        }
    }

    /// Custom family from members and labels.
    pub fn custom(members: Vec<Pmf<T>>, labels: Vec<String>) -> Result<Self, FamilyError> {
        Family::new(members, labels, Construction::Custom, BTreeMap::new())
    }

    /// Members of both families side by side, labels prefixed to stay unique.
    pub fn union(a: &Family<T>, b: &Family<T>) -> Result<Self, FamilyError> {
        let mut members = a.members.clone();
        members.extend(b.members.iter().cloned());
        let mut labels: Vec<String> = a.labels.iter().map(|l| format!("a:{l}")).collect();
        labels.extend(b.labels.iter().map(|l| format!("b:{l}")));
        Family::new(members, labels, Construction::Custom, BTreeMap::new())
    }

    pub fn members(&self) -> &[Pmf<T>] {
        &self.members
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn construction(&self) -> Construction {
        self.construction
    }

    pub fn params(&self) -> &BTreeMap<String, String> {
        &self.params
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Pmf<T>)> {
        self.labels
            .iter()
            .map(String::as_str)
            .zip(self.members.iter())
    }
}

// ---------------------------------------------------------------------------
// Two-point spike members
// ---------------------------------------------------------------------------

/// Block index grid: `T_i = {2^i, …, 2^(i+1)−1}`.
pub fn block_of(x: Symbol) -> u32 {
    debug_assert!(x >= 1);
    127 - x.leading_zeros()
}

/// Two-point member: mass `1−ε` at 1 and `ε` at the `j`-th element of the
/// dyadic block `T_n` with `n = ⌊1/ε⌋`.
///
/// The `ε = 1` endpoint degenerates to a point mass at 2 (the zero-mass atom
/// at 1 is dropped).
pub fn binary_tail<T: Real>(epsilon: f64, j: Symbol) -> Result<Pmf<T>, FamilyError> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(FamilyError::BadParameter(format!(
            "epsilon {epsilon} outside (0, 1]"
        )));
    }
    let n = binary_tail_level(epsilon);
    if n > 120 {
        return Err(FamilyError::TooLarge(format!(
            "epsilon {epsilon} puts the spike past 2^120"
        )));
    }
    let block = 1u128 << n;
    if j == 0 || j > block {
        return Err(FamilyError::IndexOutOfRange { j, max: block });
    }
    let spike = block + j - 1;
    let eps = T::of(epsilon);
    Ok(Pmf::from_atoms([(1, T::one() - eps), (spike, eps)])?)
}

/// `⌊1/ε⌋` with a nudge so that `ε = 1/k` lands exactly on `k` despite
/// floating-point division.
pub fn binary_tail_level(epsilon: f64) -> u32 {
    (1.0 / epsilon + 1e-9).floor() as u32
}

// ---------------------------------------------------------------------------
// Dyadic block law and the staircase class
// ---------------------------------------------------------------------------

/// Block law truncated at level `i_max`: mass `1/((i+1)(i+2))` on block
/// `T_i`, spread uniformly over its `2^i` symbols, with the exact residual
/// `1/(i_max+2)` recorded analytically from `2^(i_max+1)` on.
pub fn prop1_q<T: Real>(i_max: u32) -> Result<Pmf<T>, FamilyError> {
    if i_max < 1 {
        return Err(FamilyError::BadParameter("i_max must be ≥ 1".into()));
    }
    if i_max > PROP1_MAX_LEVEL {
        return Err(FamilyError::TooLarge(format!(
            "block law to level {i_max} needs 2^{} atoms",
            i_max + 1
        )));
    }
    let mut atoms = Vec::with_capacity(((1u128 << (i_max + 1)) - 1) as usize);
    for i in 0..=i_max {
        let per_symbol = T::of(1.0 / (((i + 1) as f64) * ((i + 2) as f64))) / T::of((1u64 << i) as f64);
        let base = 1u128 << i;
        for off in 0..(1u128 << i) {
            atoms.push((base + off, per_symbol));
        }
    }
    let residual = T::of(1.0 / ((i_max + 2) as f64));
    Ok(Pmf::with_residual_tail(atoms, residual, 1u128 << (i_max + 1))?)
}

/// The untruncated block law, evaluated pointwise:
/// `q(x) = 1/((i+1)(i+2)·2^i)` for `x ∈ T_i`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Prop1Law;

impl Prop1Law {
    /// Ideal codelength `log₂(1/q(x)) = log₂((i+1)(i+2)) + i` bits.
    pub fn codelength(&self, x: Symbol) -> f64 {
        debug_assert!(x >= 1);
        let i = block_of(x);
        (((i + 1) as f64) * ((i + 2) as f64)).log2() + i as f64
    }

    /// Mass at or above `m`: exact telescoping plus the partial block below.
    pub fn tail_mass_from(&self, m: Symbol) -> f64 {
        if m <= 1 {
            return 1.0;
        }
        let b = block_of(m);
        // Full blocks strictly above b contribute 1/(b+2); the partial block
        // keeps its symbols at and beyond m.
        let per_symbol = 1.0 / (((b + 1) as f64) * ((b + 2) as f64) * (1u128 << b) as f64);
        let remaining = ((1u128 << (b + 1)) - m) as f64;
        1.0 / ((b + 2) as f64) + remaining * per_symbol
    }
}

impl<T: Real> MassFn<T> for Prop1Law {
    fn prob_at(&self, x: Symbol) -> T {
        if x < 1 {
            return T::zero();
        }
        let i = block_of(x);
        T::of(1.0 / (((i + 1) as f64) * ((i + 2) as f64)))
            / T::of((1u128 << i.min(126)) as f64)
    }
}

/// Staircase member: one atom per block, `1/((i+1)(i+2))` at `2^i + offset`,
/// truncated at `i_max` with the exact residual `1/(i_max+2)`.
///
/// Levels missing from `offsets` default to offset 0.
pub fn staircase_member<T: Real>(
    offsets: &BTreeMap<u32, Symbol>,
    i_max: u32,
) -> Result<Pmf<T>, FamilyError> {
    if i_max < 1 || i_max > 120 {
        return Err(FamilyError::BadParameter(format!("i_max {i_max} outside [1, 120]")));
    }
    for (&level, &offset) in offsets {
        if level > i_max {
            return Err(FamilyError::BadParameter(format!(
                "offset given for level {level} beyond i_max {i_max}"
            )));
        }
        if offset >= (1u128 << level) {
            return Err(FamilyError::OffsetOutOfRange { level, offset });
        }
    }
    let mut atoms = Vec::with_capacity(i_max as usize + 1);
    for i in 0..=i_max {
        let offset = offsets.get(&i).copied().unwrap_or(0);
        atoms.push((
            (1u128 << i) + offset,
            T::of(1.0 / (((i + 1) as f64) * ((i + 2) as f64))),
        ));
    }
    let residual = T::of(1.0 / ((i_max + 2) as f64));
    Ok(Pmf::with_residual_tail(atoms, residual, 1u128 << (i_max + 1))?)
}

// ---------------------------------------------------------------------------
// Worst-case example: {p_k} vs the heavy-tailed law
// ---------------------------------------------------------------------------

/// `p_k`: mass `1 − 1/log₂k` at 2 and `1/(k·log₂k)` on each of `{k,…,2k−1}`.
///
/// At `k = 2` the bulk atom has zero mass and the block starts at 2, so the
/// contributions at symbol 2 merge (keeping total mass 1).
pub fn worstcase_pk<T: Real>(k: u64) -> Result<Pmf<T>, FamilyError> {
    if k < 2 {
        return Err(FamilyError::BadParameter(format!("k = {k} must be ≥ 2")));
    }
    let logk = (k as f64).log2();
    let mut acc: BTreeMap<Symbol, T> = BTreeMap::new();
    *acc.entry(2).or_insert_with(T::zero) =
        *acc.get(&2).unwrap_or(&T::zero()) + T::of(1.0 - 1.0 / logk);
    let per = T::of(1.0 / (k as f64 * logk));
    for x in k..(2 * k) {
        let e = acc.entry(x as Symbol).or_insert_with(T::zero);
        *e = *e + per;
    }
    Ok(Pmf::from_atoms(acc)?)
}

/// Normalizer `a = Σ_{x≥2} 1/(x·log₂²x)`, computed once by partial summation
/// with an integral bracket on the remainder (absolute error below 1e-8).
pub fn heavy_normalizer() -> f64 {
    static A: OnceLock<f64> = OnceLock::new();
    *A.get_or_init(|| {
        let n = 2_000_000u64;
        let mut acc = KahanSum::<f64>::new();
        for x in 2..=n {
            let l = (x as f64).log2();
            acc.add(1.0 / (x as f64 * l * l));
        }
        // Remainder in natural-log form: ∫ dx/(x ln²x) = −1/ln x, so the tail
        // past n is bracketed by [1/ln(n+1), 1/ln n] times ln²2.
        let ln2 = std::f64::consts::LN_2;
        let lo = ln2 * ln2 / ((n as f64 + 1.0).ln());
        let hi = ln2 * ln2 / ((n as f64).ln());
        acc.value() + 0.5 * (lo + hi)
    })
}

/// Heavy-tailed coding law truncated at `x_max`:
/// `q(x) = (1/a)/(x·log₂²x)` for `2 ≤ x ≤ x_max`, residual from the series
/// remainder.
pub fn heavy_q<T: Real>(x_max: u64) -> Result<Pmf<T>, FamilyError> {
    if x_max < 3 {
        return Err(FamilyError::BadParameter("x_max must be ≥ 3".into()));
    }
    if x_max as u128 > UNIFORM_MAX_SPAN {
        return Err(FamilyError::TooLarge(format!("x_max {x_max} atoms")));
    }
    let a = heavy_normalizer();
    let mut atoms = Vec::with_capacity(x_max as usize - 1);
    let mut partial = KahanSum::<f64>::new();
    for x in 2..=x_max {
        let l = (x as f64).log2();
        let v = 1.0 / (x as f64 * l * l);
        partial.add(v);
        atoms.push((x as Symbol, T::of(v / a)));
    }
    let residual = T::of(((a - partial.value()) / a).max(0.0));
    Ok(Pmf::with_residual_tail(atoms, residual, x_max as Symbol + 1)?)
}

/// The untruncated heavy-tailed law, evaluated pointwise.
#[derive(Debug, Clone, Copy)]
pub struct HeavyLaw {
    a: f64,
}

impl Default for HeavyLaw {
    fn default() -> Self {
        HeavyLaw {
            a: heavy_normalizer(),
        }
    }
}

impl<T: Real> MassFn<T> for HeavyLaw {
    fn prob_at(&self, x: Symbol) -> T {
        if x < 2 {
            return T::zero();
        }
        let xf = x as f64;
        let l = xf.log2();
        T::of(1.0 / (self.a * xf * l * l))
    }
}

// ---------------------------------------------------------------------------
// Uniform ranges and the totally-bounded collection
// ---------------------------------------------------------------------------

/// Uniform distribution on `{m, …, M}`.
pub fn uniform_range<T: Real>(m: Symbol, big_m: Symbol) -> Result<Pmf<T>, FamilyError> {
    if m == 0 || m > big_m {
        return Err(FamilyError::BadRange { lo: m, hi: big_m });
    }
    let span = big_m - m + 1;
    if span > UNIFORM_MAX_SPAN {
        return Err(FamilyError::TooLarge(format!("uniform span {span}")));
    }
    let p = T::of(1.0 / span as f64);
    Ok(Pmf::from_atoms((m..=big_m).map(|x| (x, p)))?)
}

/// `u_k`: mass `1 − 1/k²` at 0 and `1/(k²·2^(k²))` on each of `{1,…,2^(k²)}`.
///
/// Guarded at `k ≤ 5` (2^25 atoms); pairwise Hellinger distances for larger
/// indices are available in closed form via [`totally_bounded_hellinger`].
pub fn totally_bounded_uk<T: Real>(k: u32) -> Result<Pmf<T>, FamilyError> {
    if k == 0 {
        return Err(FamilyError::BadParameter("k must be ≥ 1".into()));
    }
    if k > TOTALLY_BOUNDED_MAX_K {
        return Err(FamilyError::TooLarge(format!(
            "u_{k} has 2^{} atoms",
            k * k
        )));
    }
    let ksq = (k * k) as u64;
    let head = 1.0 - 1.0 / ((k * k) as f64);
    let per = T::of(1.0 / ((k * k) as f64 * (1u64 << ksq) as f64));
    let mut atoms = Vec::with_capacity((1u64 << ksq) as usize + 1);
    if head > 0.0 {
        atoms.push((0, T::of(head)));
    }
    for x in 1..=(1u128 << ksq) {
        atoms.push((x, per));
    }
    Ok(Pmf::from_atoms(atoms)?)
}

/// Squared Hellinger distance between `u_i` and `u_j` in closed form,
/// numerically stable for arbitrary indices (no `2^(k²)` blowup).
pub fn totally_bounded_hellinger(i: u32, j: u32) -> f64 {
    if i == j {
        return 0.0;
    }
    let (i, j) = (i.min(j) as f64, i.max(j) as f64);
    let head = ((1.0 - 1.0 / (i * i)).sqrt() - (1.0 - 1.0 / (j * j)).sqrt()).powi(2);
    // 2^(i²)·(√(1/(i²2^(i²))) − √(1/(j²2^(j²))))² rewritten scale-free.
    let shared = (1.0 / i - 2.0f64.powf((i * i - j * j) / 2.0) / j).powi(2);
    let rest = (1.0 - 2.0f64.powf(i * i - j * j)) / (j * j);
    head + shared + rest
}

/// Uniforms over initial segments `{1,…,M}` for every `M` with
/// `(log₂M)² < h` — exactly the members whose squared log-loss moment stays
/// below `h`.
pub fn bounded_logmoment_family<T: Real>(h: f64) -> Result<Family<T>, FamilyError> {
    if h <= 0.0 {
        return Err(FamilyError::BadParameter("h must be positive".into()));
    }
    if h > LOGMOMENT_MAX_H {
        return Err(FamilyError::TooLarge(format!("h = {h}")));
    }
    let mut members = Vec::new();
    let mut labels = Vec::new();
    let mut m: Symbol = 1;
    loop {
        let l = (m as f64).log2();
        if l * l >= h {
            break;
        }
        members.push(uniform_range(1, m)?);
        labels.push(format!("M={m}"));
        m += 1;
    }
    let mut params = BTreeMap::new();
    params.insert("h".into(), format!("{h}"));
    Family::new(members, labels, Construction::BoundedLogMoment, params)
}

// ---------------------------------------------------------------------------
// Tightness scan
// ---------------------------------------------------------------------------

/// Result of scanning a family's `1−γ` quantiles.
#[derive(Debug, Clone, Serialize)]
pub struct TightnessReport {
    pub gamma: f64,
    /// Largest quantile over the family.
    pub sup_quantile: String,
    /// Member achieving it.
    pub witness_member: String,
    /// Quantile per member, in family order (symbols as decimal strings).
    pub per_member: Vec<(String, String)>,
    /// For uniform-range grids: members ordered by quantile, exhibiting the
    /// unbounded growth that certifies non-tightness of the full class.
    pub divergence_witness: Option<Vec<(String, String)>>,
}

/// Sup of `1−γ` quantiles over the family with the achieving member.
pub fn tightness_scan<T: Real>(
    family: &Family<T>,
    gamma: f64,
) -> Result<TightnessReport, FamilyError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(FamilyError::BadParameter(format!(
            "gamma {gamma} outside (0, 1)"
        )));
    }
    let level = T::of(1.0 - gamma);
    let mut per_member = Vec::with_capacity(family.len());
    let mut best: Option<(Symbol, usize)> = None;
    for (idx, (label, p)) in family.iter().enumerate() {
        let q = quantile(p, level)?;
        per_member.push((label.to_string(), q.to_string()));
        if best.map_or(true, |(b, _)| q > b) {
            best = Some((q, idx));
        }
    }
    let (sup, widx) = best.expect("family is nonempty");
    let divergence_witness = if family.construction() == Construction::UniformRange {
        let mut ordered: Vec<(String, Symbol)> = family
            .iter()
            .map(|(label, p)| (label.to_string(), quantile(p, level).unwrap()))
            .collect();
        ordered.sort_by_key(|&(_, q)| q);
        Some(
            ordered
                .into_iter()
                .map(|(l, q)| (l, q.to_string()))
                .collect(),
        )
    } else {
        None
    };
    Ok(TightnessReport {
        gamma,
        sup_quantile: sup.to_string(),
        witness_member: family.labels()[widx].clone(),
        per_member,
        divergence_witness,
    })
}

// ---------------------------------------------------------------------------
// Spec-file parser
// ---------------------------------------------------------------------------

/// Parse the line-oriented `key = value` family description format.
///
/// ```text
/// # two spike members
/// construction = binary_tail
/// epsilon = 0.5, 0.25
/// j = 1
/// ```
///
/// Grids are comma-separated; `epsilon` accepts decimals or fractions
/// (`1/64`). See the repository README for the full grammar.
pub fn parse_family_spec<T: Real>(text: &str) -> Result<Family<T>, FamilyError> {
    let mut construction: Option<(Construction, usize)> = None;
    let mut grids: BTreeMap<String, Vec<(usize, String)>> = BTreeMap::new();
    let mut line_items: Vec<(usize, String, String)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = lineno + 1;
        let (key, value) = line.split_once('=').ok_or_else(|| FamilyError::Parse {
            line: lineno,
            msg: "expected `key = value`".into(),
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if value.is_empty() {
            return Err(FamilyError::Parse {
                line: lineno,
                msg: format!("empty value for `{key}`"),
            });
        }
        if key == "construction" {
            if construction.is_some() {
                return Err(FamilyError::Parse {
                    line: lineno,
                    msg: "construction given twice".into(),
                });
            }
            let c = match value.as_str() {
                "binary_tail" => Construction::BinaryTail,
                "staircase" => Construction::StaircaseI,
                "worstcase" => Construction::WorstCaseHeavy,
                "uniform_range" => Construction::UniformRange,
                "totally_bounded" => Construction::TotallyBoundedU,
                "bounded_logmoment" => Construction::BoundedLogMoment,
                "custom" => Construction::Custom,
                other => return Err(FamilyError::UnknownConstruction(other.to_string())),
            };
            construction = Some((c, lineno));
        } else if key == "offsets" || key == "member" {
            line_items.push((lineno, key, value));
        } else {
            grids.entry(key).or_default().push((lineno, value));
        }
    }

    let (construction, _) = construction.ok_or(FamilyError::Parse {
        line: 1,
        msg: "missing `construction = ...`".into(),
    })?;

    let single = |key: &str| -> Result<Option<(usize, String)>, FamilyError> {
        match grids.get(key) {
            None => Ok(None),
            Some(v) if v.len() == 1 => Ok(Some(v[0].clone())),
            Some(v) => Err(FamilyError::Parse {
                line: v[1].0,
                msg: format!("`{key}` given more than once"),
            }),
        }
    };
    let require = |key: &str| -> Result<(usize, String), FamilyError> {
        single(key)?.ok_or_else(|| FamilyError::Parse {
            line: 1,
            msg: format!("construction requires `{key} = ...`"),
        })
    };

    let mut members: Vec<Pmf<T>> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut params = BTreeMap::new();

    match construction {
        Construction::BinaryTail => {
            let (eline, evals) = require("epsilon")?;
            let epsilons = parse_fraction_list(&evals, eline)?;
            let jspec = single("j")?.unwrap_or((eline, "1".into()));
            params.insert("epsilon".into(), evals);
            params.insert("j".into(), jspec.1.clone());
            for &eps in &epsilons {
                let level = binary_tail_level(eps);
                let block = 1u128 << level.min(120);
                let js: Vec<Symbol> = if jspec.1.trim() == "all" {
                    if block > BLOCK_EXPANSION_CAP {
                        return Err(FamilyError::Parse {
                            line: jspec.0,
                            msg: format!(
                                "`j = all` would expand to {block} members (cap {BLOCK_EXPANSION_CAP})"
                            ),
                        });
                    }
                    (1..=block).collect()
                } else {
                    parse_symbol_list(&jspec.1, jspec.0)?
                };
                for j in js {
                    members.push(binary_tail(eps, j)?);
                    labels.push(format!("eps={eps},j={j}"));
                }
            }
        }
        Construction::StaircaseI => {
            let (iline, ival) = require("i_max")?;
            let i_max: u32 = ival.parse().map_err(|_| FamilyError::Parse {
                line: iline,
                msg: format!("bad i_max `{ival}`"),
            })?;
            params.insert("i_max".into(), ival);
            let offset_lines: Vec<_> = line_items
                .iter()
                .filter(|(_, k, _)| k == "offsets")
                .collect();
            if offset_lines.is_empty() {
                members.push(staircase_member(&BTreeMap::new(), i_max)?);
                labels.push("offsets=0".into());
            }
            for (lineno, _, value) in offset_lines {
                let offs = parse_symbol_list(value, *lineno)?;
                let map: BTreeMap<u32, Symbol> = offs
                    .iter()
                    .enumerate()
                    .map(|(i, &o)| (i as u32, o))
                    .collect();
                members.push(staircase_member(&map, i_max)?);
                labels.push(format!(
                    "offsets={}",
                    offs.iter()
                        .map(|o| o.to_string())
                        .collect::<Vec<_>>()
                        .join(",")
                ));
            }
        }
        Construction::WorstCaseHeavy => {
            let (kline, kvals) = require("k")?;
            params.insert("k".into(), kvals.clone());
            for k in parse_symbol_list(&kvals, kline)? {
                if k > u64::MAX as u128 {
                    return Err(FamilyError::Parse {
                        line: kline,
                        msg: format!("k = {k} too large"),
                    });
                }
                members.push(worstcase_pk(k as u64)?);
                labels.push(format!("k={k}"));
            }
        }
        Construction::UniformRange => {
            let (rline, rvals) = require("ranges")?;
            params.insert("ranges".into(), rvals.clone());
            for pair in rvals.split(',') {
                let (lo, hi) = pair.trim().split_once(':').ok_or(FamilyError::Parse {
                    line: rline,
                    msg: format!("range `{pair}` must be `m:M`"),
                })?;
                let lo: Symbol = lo.trim().parse().map_err(|_| FamilyError::Parse {
                    line: rline,
                    msg: format!("bad range start `{lo}`"),
                })?;
                let hi: Symbol = hi.trim().parse().map_err(|_| FamilyError::Parse {
                    line: rline,
                    msg: format!("bad range end `{hi}`"),
                })?;
                members.push(uniform_range(lo, hi)?);
                labels.push(format!("{lo}:{hi}"));
            }
        }
        Construction::TotallyBoundedU => {
            let (kline, kvals) = require("k")?;
            params.insert("k".into(), kvals.clone());
            for k in parse_symbol_list(&kvals, kline)? {
                members.push(totally_bounded_uk(k as u32)?);
                labels.push(format!("k={k}"));
            }
        }
        Construction::BoundedLogMoment => {
            let (hline, hval) = require("h")?;
            let h: f64 = hval.parse().map_err(|_| FamilyError::Parse {
                line: hline,
                msg: format!("bad h `{hval}`"),
            })?;
            params.insert("h".into(), hval);
            let fam = bounded_logmoment_family::<T>(h)?;
            members = fam.members.clone();
            labels = fam.labels.clone();
        }
        Construction::Custom => {
            for (lineno, key, value) in &line_items {
                if key != "member" {
                    continue;
                }
                let mut atoms = Vec::new();
                for pair in value.split(',') {
                    let (sym, prob) = pair.trim().split_once(':').ok_or(FamilyError::Parse {
                        line: *lineno,
                        msg: format!("atom `{pair}` must be `symbol:prob`"),
                    })?;
                    let sym: Symbol = sym.trim().parse().map_err(|_| FamilyError::Parse {
                        line: *lineno,
                        msg: format!("bad symbol `{sym}`"),
                    })?;
                    let prob = parse_fraction(prob.trim()).ok_or(FamilyError::Parse {
                        line: *lineno,
                        msg: format!("bad probability `{prob}`"),
                    })?;
                    atoms.push((sym, T::of(prob)));
                }
                members.push(Pmf::from_atoms(atoms)?);
                labels.push(format!("custom-{}", labels.len()));
            }
            if members.is_empty() {
                return Err(FamilyError::Parse {
                    line: 1,
                    msg: "custom construction needs at least one `member = ...`".into(),
                });
            }
        }
    }

    Family::new(members, labels, construction, params)
}

fn parse_fraction(s: &str) -> Option<f64> {
    if let Some((num, den)) = s.split_once('/') {
        let num: f64 = num.trim().parse().ok()?;
        let den: f64 = den.trim().parse().ok()?;
        if den == 0.0 {
            return None;
        }
        Some(num / den)
    } else {
        s.trim().parse().ok()
    }
}

fn parse_fraction_list(s: &str, line: usize) -> Result<Vec<f64>, FamilyError> {
    s.split(',')
        .map(|item| {
            parse_fraction(item.trim()).ok_or_else(|| FamilyError::Parse {
                line,
                msg: format!("bad number `{}`", item.trim()),
            })
        })
        .collect()
}

fn parse_symbol_list(s: &str, line: usize) -> Result<Vec<Symbol>, FamilyError> {
    s.split(',')
        .map(|item| {
            item.trim().parse().map_err(|_| FamilyError::Parse {
                line,
                msg: format!("bad integer `{}`", item.trim()),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pmf::{entropy, hellinger, kl_divergence_vs_law, tail_mass};

    #[test]
    fn binary_tail_examples() {
        let p = binary_tail::<f64>(0.5, 1).unwrap();
        assert_eq!(p.atoms(), &[(1, 0.5), (4, 0.5)]);
        let p = binary_tail::<f64>(0.3, 1).unwrap();
        assert_eq!(p.atoms(), &[(1, 0.7), (8, 0.3)]);
        let p = binary_tail::<f64>(1.0, 1).unwrap();
        assert_eq!(p.atoms(), &[(2, 1.0)]);
        assert!(matches!(
            binary_tail::<f64>(0.5, 5),
            Err(FamilyError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn binary_tail_spike_lands_in_its_block() {
        for k in 2..=64u32 {
            let eps = 1.0 / k as f64;
            for j in [1u128, 1u128 << k] {
                let p = binary_tail::<f64>(eps, j).unwrap();
                let spike = p.atoms().last().unwrap().0;
                assert!(spike >= (1u128 << k) && spike < (1u128 << (k + 1)));
            }
        }
    }

    #[test]
    fn prop1_q_block_values() {
        let q = prop1_q::<f64>(4).unwrap();
        assert!((q.prob(1).unwrap() - 0.5).abs() < 1e-15);
        assert!((q.prob(4).unwrap() - 1.0 / 48.0).abs() < 1e-15);
        assert!((q.residual_tail_mass() - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(q.residual_tail_start(), Some(32));
    }

    #[test]
    fn prop1_law_matches_truncation() {
        let q = prop1_q::<f64>(6).unwrap();
        let law = Prop1Law;
        for x in [1u128, 2, 3, 4, 9, 100, 127] {
            let lhs: f64 = law.prob_at(x);
            assert!((lhs - q.prob(x).unwrap()).abs() < 1e-15, "x = {x}");
        }
        // Deep blocks only the law can reach.
        let deep: f64 = law.prob_at(1u128 << 64);
        assert!((deep - 1.0 / (65.0 * 66.0 * 2f64.powi(64))).abs() < 1e-30);
    }

    #[test]
    fn prop1_block_masses_telescope() {
        let q = prop1_q::<f64>(8).unwrap();
        let total: f64 = q.atoms().iter().map(|&(_, p)| p).sum::<f64>() + q.residual_tail_mass();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn staircase_examples() {
        let p = staircase_member::<f64>(&BTreeMap::new(), 3).unwrap();
        let expect = [(1u128, 0.5), (2, 1.0 / 6.0), (4, 1.0 / 12.0), (8, 1.0 / 20.0)];
        for (got, want) in p.atoms().iter().zip(expect.iter()) {
            assert_eq!(got.0, want.0);
            assert!((got.1 - want.1).abs() < 1e-15);
        }
        assert!((p.residual_tail_mass() - 0.2).abs() < 1e-15);
        for k in 1..=3u32 {
            let tm = tail_mass(&p, 1 << k).unwrap();
            assert!((tm - 1.0 / (k as f64 + 1.0)).abs() < 1e-12);
        }
        let bad: BTreeMap<u32, Symbol> = [(1u32, 3u128)].into_iter().collect();
        assert!(matches!(
            staircase_member::<f64>(&bad, 3),
            Err(FamilyError::OffsetOutOfRange { level: 1, offset: 3 })
        ));
    }

    #[test]
    fn worstcase_pk_examples() {
        let p = worstcase_pk::<f64>(4).unwrap();
        assert_eq!(p.atoms().len(), 5);
        assert!((p.prob(2).unwrap() - 0.5).abs() < 1e-15);
        for x in 4..8u128 {
            assert!((p.prob(x).unwrap() - 0.125).abs() < 1e-15);
        }
        // k = 2 merges the bulk atom (mass 0) with the block start.
        let p2 = worstcase_pk::<f64>(2).unwrap();
        assert_eq!(p2.atoms(), &[(2, 0.5), (3, 0.5)]);
        for k in [2u64, 3, 10, 100, 999] {
            let p = worstcase_pk::<f64>(k).unwrap();
            let total: f64 = p.atoms().iter().map(|&(_, v)| v).sum();
            assert!((total - 1.0).abs() < 1e-9, "k = {k}");
        }
        assert!(matches!(
            worstcase_pk::<f64>(1),
            Err(FamilyError::BadParameter(_))
        ));
    }

    #[test]
    fn heavy_law_ratio_eliminates_normalizer() {
        let law = HeavyLaw::default();
        let q2: f64 = law.prob_at(2);
        let q4: f64 = law.prob_at(4);
        assert!((q2 / q4 - 8.0).abs() < 1e-12);
    }

    #[test]
    fn heavy_q_normalizes() {
        let q = heavy_q::<f64>(100_000).unwrap();
        let atom_sum: f64 = q.atoms().iter().map(|&(_, p)| p).sum();
        assert!((atom_sum + q.residual_tail_mass() - 1.0).abs() < 1e-6);
        assert!(q.residual_tail_mass() > 0.0);
    }

    #[test]
    fn uniform_range_examples() {
        let p = uniform_range::<f64>(3, 6).unwrap();
        assert_eq!(p.atoms().len(), 4);
        assert!((p.prob(5).unwrap() - 0.25).abs() < 1e-15);
        let point = uniform_range::<f64>(1, 1).unwrap();
        assert_eq!(point.atoms(), &[(1, 1.0)]);
        for k in 1..=6u32 {
            let u = uniform_range::<f64>(1, 1 << k).unwrap();
            assert!((entropy(&u).unwrap() - k as f64).abs() < 1e-9);
        }
        assert!(matches!(
            uniform_range::<f64>(5, 3),
            Err(FamilyError::BadRange { .. })
        ));
    }

    #[test]
    fn totally_bounded_members() {
        let u2 = totally_bounded_uk::<f64>(2).unwrap();
        assert!((u2.prob(0).unwrap() - 0.75).abs() < 1e-15);
        assert!((u2.prob(16).unwrap() - 1.0 / 64.0).abs() < 1e-15);
        assert_eq!(u2.atoms().len(), 17);
        let u1 = totally_bounded_uk::<f64>(1).unwrap();
        assert_eq!(u1.atoms(), &[(1, 0.5), (2, 0.5)]);
        assert!(matches!(
            totally_bounded_uk::<f64>(6),
            Err(FamilyError::TooLarge(_))
        ));
    }

    #[test]
    fn totally_bounded_hellinger_matches_materialized() {
        let u1 = totally_bounded_uk::<f64>(1).unwrap();
        let u2 = totally_bounded_uk::<f64>(2).unwrap();
        let u3 = totally_bounded_uk::<f64>(3).unwrap();
        let direct12 = hellinger(&u1, &u2).unwrap();
        assert!((direct12 - totally_bounded_hellinger(1, 2)).abs() < 1e-12);
        assert!((direct12 - 1.6465).abs() < 1e-4);
        let direct23 = hellinger(&u2, &u3).unwrap();
        assert!((direct23 - totally_bounded_hellinger(2, 3)).abs() < 1e-12);
        // The closed form obeys the 3/i² envelope for i < j.
        for i in 1..20u32 {
            for j in (i + 1)..24u32 {
                let h = totally_bounded_hellinger(i, j);
                assert!(h <= 3.0 / (i as f64 * i as f64) + 1e-12, "i={i} j={j}");
            }
        }
    }

    #[test]
    fn logmoment_family_boundaries() {
        let f9 = bounded_logmoment_family::<f64>(9.0).unwrap();
        assert_eq!(f9.len(), 7);
        assert_eq!(f9.labels().last().unwrap(), "M=7");
        let f11 = bounded_logmoment_family::<f64>(1.1).unwrap();
        assert_eq!(f11.len(), 2);
        // Every member satisfies E(log₂ 1/p(X))² < h by construction.
        for (_, p) in f9.iter() {
            let moment: f64 = p
                .atoms()
                .iter()
                .map(|&(_, px)| px * (1.0 / px).log2().powi(2))
                .sum();
            assert!(moment < 9.0);
        }
    }

    #[test]
    fn spec_parser_round_trips() {
        let fam: Family<f64> =
            parse_family_spec("construction=binary_tail\nepsilon=0.5,0.25\nj=1").unwrap();
        assert_eq!(fam.len(), 2);
        assert_eq!(fam.construction(), Construction::BinaryTail);

        let err = parse_family_spec::<f64>("construction=nope").unwrap_err();
        assert!(matches!(err, FamilyError::UnknownConstruction(_)));

        let err = parse_family_spec::<f64>("").unwrap_err();
        assert!(matches!(err, FamilyError::Parse { .. }));

        let fam: Family<f64> = parse_family_spec(
            "# two custom members\nconstruction = custom\nmember = 1:0.5, 4:0.5\nmember = 2:1/2, 3:1/2\n",
        )
        .unwrap();
        assert_eq!(fam.len(), 2);

        let fam: Family<f64> =
            parse_family_spec("construction=uniform_range\nranges=1:2, 2:4, 4:8").unwrap();
        assert_eq!(fam.len(), 3);

        let fam: Family<f64> = parse_family_spec("construction=binary_tail\nepsilon=1/8\nj=all")
            .unwrap();
        assert_eq!(fam.len(), 256);
    }

    #[test]
    fn spec_parser_reports_line_numbers() {
        let err =
            parse_family_spec::<f64>("construction=binary_tail\nepsilon=zork\n").unwrap_err();
        assert!(matches!(err, FamilyError::Parse { line: 2, .. }));
    }

    #[test]
    fn tightness_scan_spike_grid() {
        let fam: Family<f64> =
            parse_family_spec("construction=binary_tail\nepsilon=0.5,1/3,0.25\nj=1").unwrap();
        let report = tightness_scan(&fam, 0.25).unwrap();
        // Spikes sit below 2^(⌊1/γ⌋+1) whenever ε ≥ γ.
        let bound = 1u128 << (binary_tail_level(0.25) + 1);
        assert!(report.sup_quantile.parse::<u128>().unwrap() <= bound);
        assert!(report.divergence_witness.is_none());
    }

    #[test]
    fn tightness_scan_staircase_quantile_bound() {
        let member = staircase_member::<f64>(&BTreeMap::new(), 8).unwrap();
        let fam = Family::singleton(member, "stairs");
        let report = tightness_scan(&fam, 0.25).unwrap();
        assert!(report.sup_quantile.parse::<u128>().unwrap() <= 16);
    }

    #[test]
    fn tightness_scan_uniform_grid_witness() {
        let fam: Family<f64> =
            parse_family_spec("construction=uniform_range\nranges=1:2,2:4,4:8,8:16,16:32")
                .unwrap();
        let report = tightness_scan(&fam, 0.25).unwrap();
        let witness = report.divergence_witness.unwrap();
        let qs: Vec<u128> = witness.iter().map(|(_, q)| q.parse().unwrap()).collect();
        assert!(qs.windows(2).all(|w| w[0] <= w[1]));
        assert!(*qs.last().unwrap() > *qs.first().unwrap());
    }

    #[test]
    fn kl_against_prop1_law_spot_value() {
        // Two-point member at ε = 1/2 against the block law: ½·log₂24.
        let p = binary_tail::<f64>(0.5, 1).unwrap();
        let v = kl_divergence_vs_law(&p, &Prop1Law).unwrap();
        assert!((v - 0.5 * 24f64.log2()).abs() < 1e-12);
        assert!((v - 2.2925).abs() < 1e-4);
    }
}
