//! `tailcode` — command-line driver: family inspection, divergences, game
//! values, redundancy bounds, the censoring codec, and Monte Carlo
//! experiments. See `tailcode <subcommand> --help` and the repository README
//! for formats.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tailcode::codec::{self, Bitstream, Scheme};
use tailcode::families::{
    heavy_q, parse_family_spec, prop1_q, tightness_scan, HeavyLaw, Prop1Law,
};
use tailcode::harness::{
    convergence_experiment, emit_summary_csv, emit_svg, measurement_csv, summary_csv,
    ExperimentConfig, SchemeSpec,
};
use tailcode::minimax::{
    bayes_redundancy, hellinger_lower_bound, minimax_redundancy, packing_lower_bound,
    tail_redundancy_curve, Prior,
};
use tailcode::pmf::{entropy, kl_divergence, kl_divergence_vs_law, Symbol};
use tailcode::Family64;

#[derive(Parser)]
#[command(name = "tailcode", version, about = "Tail-redundancy toolkit", max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a family spec and report its 1−γ quantile scan.
    Family(FamilyArgs),
    /// KL divergence of every member against a coding law.
    Kl(KlArgs),
    /// Single-letter minimax redundancy of a family.
    Minimax(MinimaxArgs),
    /// Tail-game values along a threshold grid.
    #[command(name = "tail-redundancy")]
    TailRedundancy(TailArgs),
    /// Bayes / Hellinger / packing lower bounds along a length grid.
    Bounds(BoundsArgs),
    /// Compress a file of naturals.
    Encode(EncodeArgs),
    /// Decompress a container produced by `encode`.
    Decode(DecodeArgs),
    /// Run a convergence experiment from a config file.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Args)]
struct FamilyArgs {
    /// Family spec file.
    #[arg(long)]
    family: PathBuf,
    /// Quantile level parameter γ in (0, 1).
    #[arg(long, default_value_t = 0.25)]
    gamma: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct KlArgs {
    #[arg(long)]
    family: PathBuf,
    /// Coding law: `prop1`, `heavy`, or a path to a single-member family.
    #[arg(long, default_value = "prop1")]
    against: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct MinimaxArgs {
    #[arg(long)]
    family: PathBuf,
    /// Duality-gap target in bits.
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct TailArgs {
    #[arg(long)]
    family: PathBuf,
    /// Increasing thresholds, e.g. `4,16,64`.
    #[arg(long, value_delimiter = ',')]
    m_grid: Vec<u128>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    family: PathBuf,
    /// Increasing string lengths, e.g. `1,2,4`.
    #[arg(long, value_delimiter = ',')]
    n_grid: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct EncodeArgs {
    /// `censor` or `mixture`.
    #[arg(long)]
    scheme: String,
    /// Censoring threshold (censor) or largest dyadic threshold (mixture).
    #[arg(long)]
    m: u64,
    /// Input file: whitespace-separated naturals, or varints with --binary.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Treat the input as little-endian base-128 varints.
    #[arg(long)]
    binary: bool,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Emit little-endian base-128 varints instead of text.
    #[arg(long)]
    binary: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config file (`key = value` format).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output base path: writes `<out>.csv`, `<out>_summary.csv` and, with
    /// `--format svg`, `<out>.svg`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

fn main() -> std::process::ExitCode {
    if let Ok(v) = std::env::var("TAILCODE_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Family(a) => cmd_family(a),
        Command::Kl(a) => cmd_kl(a),
        Command::Minimax(a) => cmd_minimax(a),
        Command::TailRedundancy(a) => cmd_tail(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Encode(a) => cmd_encode(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Experiment(a) => cmd_experiment(a),
    }
}

fn fnv64(data: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in data {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn repro_line(seed: u64, config: &str) {
    eprintln!(
        "tailcode {} seed={seed} config={:016x}",
        env!("CARGO_PKG_VERSION"),
        fnv64(config.as_bytes())
    );
}

fn load_family(path: &Path) -> Result<Family64> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading family spec {}", path.display()))?;
    Ok(parse_family_spec(&text)?)
}

fn write_output(text: &str, out: &Option<PathBuf>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_family(a: FamilyArgs) -> Result<()> {
    repro_line(0, &format!("family {} gamma={}", a.family.display(), a.gamma));
    let family = load_family(&a.family)?;
    let report = tightness_scan(&family, a.gamma)?;
    let text = match a.format {
        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
        _ => {
            let mut t = String::from("member,quantile\n");
            for (label, q) in &report.per_member {
                t.push_str(&format!("{label},{q}\n"));
            }
            t.push_str(&format!("__sup__[{}],{}\n", report.witness_member, report.sup_quantile));
            t
        }
    };
    write_output(&text, &a.out)
}

fn cmd_kl(a: KlArgs) -> Result<()> {
    repro_line(0, &format!("kl {} against={}", a.family.display(), a.against));
    let family = load_family(&a.family)?;
    enum Law {
        Prop1,
        Heavy,
        Member(tailcode::Pmf64),
    }
    let law = match a.against.as_str() {
        "prop1" => Law::Prop1,
        "heavy" => Law::Heavy,
        path => {
            let q_family = load_family(Path::new(path))?;
            Law::Member(q_family.members()[0].clone())
        }
    };
    let mut rows = Vec::new();
    for (label, p) in family.iter() {
        let kl = match &law {
            Law::Prop1 => kl_divergence_vs_law(p, &Prop1Law)?,
            Law::Heavy => kl_divergence_vs_law(p, &HeavyLaw::default())?,
            Law::Member(q) => kl_divergence(p, q)?,
        };
        let h = entropy(p)?;
        rows.push((label.to_string(), kl, h));
    }
    let text = match a.format {
        Format::Json => {
            let objs: Vec<serde_json::Value> = rows
                .iter()
                .map(|(l, kl, h)| {
                    serde_json::json!({"member": l, "kl_bits": kl, "entropy_bits": h})
                })
                .collect();
            serde_json::to_string_pretty(&objs)? + "\n"
        }
        _ => {
            let mut t = String::from("member,kl_bits,entropy_bits\n");
            for (l, kl, h) in &rows {
                t.push_str(&format!("{l},{kl},{h}\n"));
            }
            t
        }
    };
    write_output(&text, &a.out)
}

fn cmd_minimax(a: MinimaxArgs) -> Result<()> {
    repro_line(0, &format!("minimax {} tol={}", a.family.display(), a.tolerance));
    let family = load_family(&a.family)?;
    let opts = tailcode::minimax::SolverOptions {
        tolerance: a.tolerance,
        ..Default::default()
    };
    let sol = tailcode::minimax::minimax_redundancy_with(&family, &opts)?;
    let text = match a.format {
        Format::Json => serde_json::to_string_pretty(&sol)? + "\n",
        _ => format!(
            "value_bits,duality_gap,iterations,converged\n{},{},{},{}\n",
            sol.value, sol.duality_gap, sol.iterations, sol.converged
        ),
    };
    write_output(&text, &a.out)
}

fn cmd_tail(a: TailArgs) -> Result<()> {
    repro_line(0, &format!("tail-redundancy {} m_grid={:?}", a.family.display(), a.m_grid));
    if a.m_grid.is_empty() {
        bail!("--m-grid must list at least one threshold");
    }
    let family = load_family(&a.family)?;
    let curve = tail_redundancy_curve(&family, &a.m_grid)?;
    let text = match a.format {
        Format::Json => serde_json::to_string_pretty(&curve)? + "\n",
        _ => {
            let mut t = String::from("m,t_m,t_m_converged,tilde_t_m,tilde_converged\n");
            for p in &curve {
                t.push_str(&format!(
                    "{},{},{},{},{}\n",
                    p.m, p.t_m, p.t_m_converged, p.tilde_t_m, p.tilde_converged
                ));
            }
            t
        }
    };
    write_output(&text, &a.out)
}

fn cmd_bounds(a: BoundsArgs) -> Result<()> {
    repro_line(0, &format!("bounds {} n_grid={:?}", a.family.display(), a.n_grid));
    if a.n_grid.is_empty() {
        bail!("--n-grid must list at least one length");
    }
    let family = load_family(&a.family)?;
    let prior = Prior::uniform(family.len());
    let mut rows = Vec::new();
    for &n in &a.n_grid {
        let bayes = match bayes_redundancy(&family, &prior, n) {
            Ok(b) => Some(b.value),
            Err(tailcode::minimax::MinimaxError::GuardExceeded { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        let hellinger = hellinger_lower_bound(&family, &prior, n).ok();
        let packing = tailcode::harness::packing_events(&family, n)
            .map(|(probs, count)| packing_lower_bound(&probs, count))
            .transpose()?;
        rows.push((n, bayes, hellinger, packing));
    }
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let text = match a.format {
        Format::Json => {
            let objs: Vec<serde_json::Value> = rows
                .iter()
                .map(|&(n, b, h, p)| {
                    serde_json::json!({"n": n, "bayes_lb_bits": b, "hellinger_lb_bits": h, "packing_lb_bits": p})
                })
                .collect();
            serde_json::to_string_pretty(&objs)? + "\n"
        }
        _ => {
            let mut t = String::from("n,bayes_lb_bits,hellinger_lb_bits,packing_lb_bits\n");
            for &(n, b, h, p) in &rows {
                t.push_str(&format!("{n},{},{},{}\n", opt(b), opt(h), opt(p)));
            }
            t
        }
    };
    write_output(&text, &a.out)
}

fn read_symbols(path: &Path, binary: bool) -> Result<Vec<Symbol>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .read_to_end(&mut bytes)?;
    if binary {
        let mut out = Vec::new();
        let mut pos = 0usize;
        while pos < bytes.len() {
            let mut v: u128 = 0;
            let mut shift = 0u32;
            loop {
                let b = *bytes
                    .get(pos)
                    .ok_or_else(|| anyhow!("truncated varint at byte {pos}"))?;
                pos += 1;
                v |= ((b & 0x7f) as u128) << shift;
                if b & 0x80 == 0 {
                    break;
                }
                shift += 7;
                if shift > 126 {
                    bail!("varint overflow at byte {pos}");
                }
            }
            out.push(v);
        }
        Ok(out)
    } else {
        String::from_utf8(bytes)
            .context("input is not UTF-8 text; did you mean --binary?")?
            .split_whitespace()
            .map(|tok| tok.parse::<Symbol>().with_context(|| format!("bad symbol `{tok}`")))
            .collect()
    }
}

fn write_symbols(path: &Path, xs: &[Symbol], binary: bool) -> Result<()> {
    let mut f = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    if binary {
        let mut buf = Vec::new();
        for &x in xs {
            let mut v = x;
            loop {
                let byte = (v & 0x7f) as u8;
                v >>= 7;
                if v == 0 {
                    buf.push(byte);
                    break;
                }
                buf.push(byte | 0x80);
            }
        }
        f.write_all(&buf)?;
    } else {
        let text: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
        f.write_all(text.join("\n").as_bytes())?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

fn cmd_encode(a: EncodeArgs) -> Result<()> {
    repro_line(0, &format!("encode scheme={} m={}", a.scheme, a.m));
    let scheme = match a.scheme.as_str() {
        "censor" => Scheme::Censoring { m: a.m },
        "mixture" => Scheme::Mixture { max_m: a.m },
        other => bail!("unknown scheme `{other}` (expected censor|mixture)"),
    };
    let xs = read_symbols(&a.input, a.binary)?;
    let stream = codec::encode(&xs, scheme)?;
    std::fs::write(&a.out, stream.to_bytes())
        .with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!(
        "encoded {} symbols into {} payload bits (ideal {:.3})",
        xs.len(),
        stream.payload_bits,
        codec::codelength_ideal(&xs, scheme)?
    );
    Ok(())
}

fn cmd_decode(a: DecodeArgs) -> Result<()> {
    repro_line(0, &format!("decode {}", a.input.display()));
    let bytes = std::fs::read(&a.input)
        .with_context(|| format!("reading {}", a.input.display()))?;
    let stream = Bitstream::from_bytes(&bytes)?;
    let xs = codec::decode(&stream)?;
    write_symbols(&a.out, &xs, a.binary)?;
    eprintln!("decoded {} symbols", xs.len());
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.config)
        .with_context(|| format!("reading config {}", a.config.display()))?;
    let base = a
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let mut config = ExperimentConfig::parse(&text, &base)?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    repro_line(
        config.seed,
        &format!(
            "experiment family={} scheme={} n_grid={:?} trials={} m_grid={:?}",
            config.family_label, config.scheme, config.n_grid, config.trials, config.m_grid
        ),
    );
    let result = convergence_experiment(&config)?;

    let meas = measurement_csv(&result.measurements);
    let summ = summary_csv(&result.summary);
    let mut wrote = false;
    if let Some(base) = &a.out {
        let csv_path = base.with_extension("csv");
        std::fs::write(&csv_path, &meas)?;
        let mut sname = base
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "experiment".into());
        sname.push_str("_summary.csv");
        let spath = base.with_file_name(sname);
        std::fs::write(&spath, &summ)?;
        if a.format == Format::Svg {
            emit_svg(&result.summary, &base.with_extension("svg"))?;
        }
        wrote = true;
    }
    if let Some(path) = &config.out_csv {
        std::fs::write(base.join(path), &meas)?;
        wrote = true;
    }
    if let Some(path) = &config.out_svg {
        emit_svg(&result.summary, &base.join(path))?;
        wrote = true;
    }
    if !wrote || a.out.is_none() {
        match a.format {
            Format::Json => {
                let v = serde_json::json!({
                    "summary": result.summary,
                    "measurements": result.measurements,
                });
                println!("{}", serde_json::to_string_pretty(&v)?);
            }
            _ => print!("{summ}"),
        }
    }
    // Written above from config paths when present; stay quiet otherwise.
    let _ = emit_summary_csv;
    Ok(())
}
