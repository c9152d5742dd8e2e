//! Experiment configs, runners and run manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::audit::{self, AuditError, AuditReport};
use crate::gibbs::{
    derive_seed, pooled_summaries, run_chains, ChainRng, EnergyModel, GibbsError, HeatBath, HeightConfig,
    LevelDirection, Observable, SamplerConfig,
};
use crate::lattice::{build_ball, build_torus, line_graph, LatticeError, LatticeFamily, LatticeSpec, PlanarPatch};
use crate::percolation::{
    clusters, edge_spin_field, level_set, odd_carrier_graph, odd_spin_field, trifurcation_count, Carrier,
    PercolationError, PercolationReport, ScanRow,
};
use crate::potentials::{EdgePotentials, HalfInt, Potential, PotentialError, PotentialSpec};

pub const SCHEMA_VERSION: u32 = 1;
pub const CODE_VERSION: &str = concat!("heightlab ", env!("CARGO_PKG_VERSION"));
pub const BOUNDARY_NOTE: &str =
    "zero boundary (parity-adjusted to {0, 1} for parity potentials); tori pin the root at 0";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("config is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Gibbs(#[from] GibbsError),
    #[error(transparent)]
    Percolation(#[from] PercolationError),
    #[error(transparent)]
    Audit(#[from] AuditError),
}

impl ExperimentError {
    /// 2 for usage and configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_)
            | ExperimentError::Json(_)
            | ExperimentError::Io { .. }
            | ExperimentError::Lattice(_)
            | ExperimentError::Potential(_)
            | ExperimentError::Audit(AuditError::FixtureMissing(_)) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    VarianceGrowth,
    PhaseContrast,
    PercolationScan,
    EnrichmentAudit,
    FkgAudit,
    ExplorationAudit,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::VarianceGrowth => "variance_growth",
            ExperimentKind::PhaseContrast => "phase_contrast",
            ExperimentKind::PercolationScan => "percolation_scan",
            ExperimentKind::EnrichmentAudit => "enrichment_audit",
            ExperimentKind::FkgAudit => "fkg_audit",
            ExperimentKind::ExplorationAudit => "exploration_audit",
        }
    }
}

/// Ball radius or torus dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Size {
    Radius(usize),
    Torus([usize; 2]),
}

impl Size {
    fn key(self) -> usize {
        match self {
            Size::Radius(n) => n,
            Size::Torus([w, h]) => w * h,
        }
    }

    pub fn label(self) -> String {
        match self {
            Size::Radius(n) => n.to_string(),
            Size::Torus([w, h]) => format!("{w}x{h}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    #[serde(default = "default_lattice")]
    pub lattice: LatticeFamily,
    #[serde(default = "default_potential")]
    pub potential: PotentialSpec,
    /// Second potential for `phase_contrast`.
    #[serde(default)]
    pub contrast_potential: Option<PotentialSpec>,
    #[serde(default)]
    pub sizes: Vec<Size>,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default)]
    pub levels: Vec<i64>,
    /// Configurations recorded per size in a percolation scan.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub box_radius: Option<usize>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_lattice() -> LatticeFamily {
    LatticeFamily::Honeycomb
}

fn default_potential() -> PotentialSpec {
    PotentialSpec::Homomorphism { window: None }
}

fn default_chains() -> usize {
    4
}

fn default_samples() -> usize {
    100
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} is not {SCHEMA_VERSION}", self.schema_version));
        }
        let needs_sizes = matches!(
            self.experiment,
            ExperimentKind::VarianceGrowth | ExperimentKind::PhaseContrast | ExperimentKind::PercolationScan
        );
        if needs_sizes {
            if self.sizes.is_empty() {
                return bad("sizes must be nonempty".into());
            }
            if self.sizes.windows(2).any(|w| w[0].key() >= w[1].key()) {
                return bad("sizes must be strictly increasing".into());
            }
            let torus = self.experiment == ExperimentKind::PercolationScan;
            if self.sizes.iter().any(|s| matches!(s, Size::Torus(_)) != torus) {
                let want = if torus { "[w, h] torus sizes" } else { "ball radii" };
                return bad(format!("{} needs {want}", self.experiment.name()));
            }
            if self.sampler.sweeps == 0 || self.sampler.thinning == 0 {
                return bad("sampler sweeps and thinning must be positive".into());
            }
            if self.chains == 0 || self.samples == 0 {
                return bad("chains and samples must be positive".into());
            }
        }
        if self.experiment == ExperimentKind::PhaseContrast && self.contrast_potential.is_none() {
            return bad("phase_contrast needs contrast_potential".into());
        }
        if self.experiment == ExperimentKind::PercolationScan && self.levels.is_empty() {
            return bad("percolation_scan needs levels".into());
        }
        self.potential.build()?;
        if let Some(c) = &self.contrast_potential {
            c.build()?;
        }
        self.lattice.spec()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub n: usize,
    pub var_root: f64,
    pub stderr: f64,
    pub mean: f64,
    pub mean_stderr: f64,
    pub n_samples: usize,
}

/// Var(φ(r)) on the ball of radius `n` with zero (parity-adjusted) boundary,
/// pooled over `chains` chains.
pub fn variance_at_radius(
    lattice: &LatticeSpec,
    potential: &Potential,
    n: usize,
    sampler: &SamplerConfig,
    chains: usize,
    label: &str,
) -> Result<VarianceRow, ExperimentError> {
    let patch = build_ball(lattice, n, 0)?;
    let pots = EdgePotentials::uniform(&patch, potential.clone());
    let config = HeightConfig::zero_boundary(&patch, potential.classify().parity)?;
    let model = EnergyModel::from_patch(&patch, &pots, &config);
    let observables = [Observable::Height { vertex: patch.root }];
    let series = run_chains(&model, &config, sampler, &observables, chains, label)?;
    let s = &pooled_summaries(&series, sampler.seed)[0];
    Ok(VarianceRow {
        n,
        var_root: s.variance,
        stderr: s.variance_stderr,
        mean: s.mean,
        mean_stderr: s.stderr,
        n_samples: s.n_samples,
    })
}

pub const VARIANCE_HEADER: &str = "n,var_root,stderr";

pub fn variance_csv(rows: &[VarianceRow]) -> String {
    let mut s = format!("{VARIANCE_HEADER}\n");
    for r in rows {
        writeln!(s, "{},{:.16e},{:.16e}", r.n, r.var_root, r.stderr).unwrap();
    }
    s
}

/// Consecutive rows whose variance gap exceeds `k` joint standard errors.
pub fn strictly_increasing(rows: &[VarianceRow], k: f64) -> bool {
    rows.windows(2).all(|w| {
        let joint = (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
        w[1].var_root - w[0].var_root > k * joint
    })
}

/// Last two rows agree within `k` joint standard errors.
pub fn saturated(rows: &[VarianceRow], k: f64) -> bool {
    match rows {
        [.., a, b] => (b.var_root - a.var_root).abs() <= k * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt(),
        _ => true,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanStat {
    pub level: i64,
    pub direction: LevelDirection,
    pub carrier: Carrier,
    pub wrap_frequency: f64,
    pub mean_largest_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub size: Size,
    pub samples: usize,
    pub stats: Vec<ScanStat>,
    /// Frequency of both spin signs having a wrapping cluster, when a spin
    /// field applies to the potential.
    pub spin_carrier: Option<Carrier>,
    pub both_spins_wrap_frequency: Option<f64>,
    pub trifurcation_size_threshold: Option<usize>,
}

/// Samples a torus and records the census of `{φ ≥ a}`, `{φ ≤ a - 1}` for
/// each level and, where defined, of both signs of the spin field (odd-vertex
/// spins for parity potentials, edge spins with fresh coins for excited ones).
#[allow(clippy::too_many_arguments)]
pub fn percolation_scan_torus(
    lattice: &LatticeSpec,
    potential: &Potential,
    w: usize,
    h: usize,
    levels: &[i64],
    samples: usize,
    sampler: &SamplerConfig,
    box_radius: Option<usize>,
) -> Result<(Vec<ScanRow>, ScanSummary), ExperimentError> {
    let patch = build_torus(lattice, w, h)?;
    let pots = EdgePotentials::uniform(&patch, potential.clone());
    let class = potential.classify();
    let config = HeightConfig::zero_boundary(&patch, class.parity)?;
    let model = EnergyModel::from_patch(&patch, &pots, &config);
    let window = sampler.resolve_window(model.potentials())?;
    let mut heights = model.initial_heights(&config)?;
    let mut rng = ChainRng::seed_from_u64(sampler.seed);
    let mut coin_rng = ChainRng::seed_from_u64(derive_seed(sampler.seed, "coins", &[]));
    let mut bath = HeatBath::new(&model, window);
    let spin_graph = if class.parity {
        Some((Carrier::OddVertices, odd_carrier_graph(&config, &patch)?))
    } else if class.excited {
        Some((Carrier::Edges, line_graph(&patch)?))
    } else {
        None
    };
    for _ in 0..sampler.burn_in {
        bath.sweep(&mut heights, &mut rng)?;
    }
    let mut rows = Vec::new();
    let mut both_wrap = 0usize;
    let mut current = config.clone();
    for sample in 0..samples {
        for _ in 0..sampler.thinning {
            bath.sweep(&mut heights, &mut rng)?;
        }
        current.heights.copy_from_slice(&heights);
        for &a in levels {
            for (level, direction) in [(a, LevelDirection::Geq), (a - 1, LevelDirection::Leq)] {
                let subset = level_set(&current, level, direction);
                let mut report = clusters(&patch, &subset);
                report.trifurcation_boxes = box_radius.map(|r| trifurcation_count(&subset, &patch, r));
                rows.push(ScanRow::new(sample, level, direction, Carrier::Vertices, &report));
            }
        }
        if let Some((carrier, graph)) = &spin_graph {
            let field = match carrier {
                Carrier::OddVertices => odd_spin_field(&current, &patch)?,
                _ => {
                    let coins: Vec<HalfInt> = (0..patch.n_edges())
                        .map(|_| if coin_rng.gen::<bool>() { HalfInt::PLUS_HALF } else { HalfInt::MINUS_HALF })
                        .collect();
                    edge_spin_field(&current, &patch, &coins)
                }
            };
            let (lp, lm) = if *carrier == Carrier::OddVertices { (1, -1) } else { (0, 0) };
            let plus: PercolationReport = clusters(graph, &field.subset(1));
            let minus = clusters(graph, &field.subset(-1));
            both_wrap += (plus.any_wrap() && minus.any_wrap()) as usize;
            rows.push(ScanRow::new(sample, lp, LevelDirection::Geq, *carrier, &plus));
            rows.push(ScanRow::new(sample, lm, LevelDirection::Leq, *carrier, &minus));
        }
    }
    let mut groups: BTreeMap<(i64, u8, u8), (LevelDirection, Carrier, usize, f64, usize)> = BTreeMap::new();
    for r in &rows {
        let key = (r.level, r.direction as u8, r.carrier as u8);
        let g = groups.entry(key).or_insert((r.direction, r.carrier, 0, 0.0, 0));
        g.2 += (r.wraps_h || r.wraps_v) as usize;
        g.3 += r.largest_fraction;
        g.4 += 1;
    }
    let stats = groups
        .into_iter()
        .map(|((level, _, _), (direction, carrier, wraps, frac, count))| ScanStat {
            level,
            direction,
            carrier,
            wrap_frequency: wraps as f64 / count as f64,
            mean_largest_fraction: frac / count as f64,
        })
        .collect();
    let summary = ScanSummary {
        size: Size::Torus([w, h]),
        samples,
        stats,
        spin_carrier: spin_graph.as_ref().map(|(c, _)| *c),
        both_spins_wrap_frequency: spin_graph.as_ref().map(|_| both_wrap as f64 / samples as f64),
        trifurcation_size_threshold: box_radius.map(|_| crate::percolation::torus_size_threshold(&patch)),
    };
    Ok((rows, summary))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeDiagnostics {
    pub series: String,
    pub size: Size,
    pub status: SizeStatus,
    pub error: Option<String>,
    pub seed: u64,
    pub chains: usize,
    pub n_samples: usize,
    pub mean_root: Option<f64>,
    pub mean_root_stderr: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub master_seed: u64,
    pub code_version: String,
    pub boundary_condition: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub sizes: Vec<SizeDiagnostics>,
    pub outputs: Vec<OutputRecord>,
    pub checks_passed: bool,
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Collects output files in one directory, hashing each as it is written.
struct OutputDir {
    dir: PathBuf,
    records: Vec<OutputRecord>,
}

impl OutputDir {
    fn create(dir: &Path) -> Result<Self, ExperimentError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(OutputDir { dir: dir.to_path_buf(), records: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &[u8]) -> Result<(), ExperimentError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(io_err(&path))?;
        self.records.push(OutputRecord {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(contents)),
            bytes: contents.len(),
        });
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), ExperimentError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastVerdict {
    pub primary_increasing: bool,
    pub contrast_saturated: bool,
    pub contrast_below_one: bool,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub output_dir: PathBuf,
    pub passed: bool,
}

fn variance_series(
    cfg: &ExperimentConfig,
    lattice: &LatticeSpec,
    potential: &Potential,
    series: &str,
    master_seed: u64,
    diagnostics: &mut Vec<SizeDiagnostics>,
) -> Vec<VarianceRow> {
    let mut rows = Vec::new();
    for &size in &cfg.sizes {
        let Size::Radius(n) = size else { continue };
        let seed = derive_seed(master_seed, series, &[n as u64]);
        let sampler = SamplerConfig { seed, ..cfg.sampler.clone() };
        let start = Instant::now();
        let result = variance_at_radius(lattice, potential, n, &sampler, cfg.chains, series);
        let seconds = start.elapsed().as_secs_f64();
        let mut d = SizeDiagnostics {
            series: series.to_string(),
            size,
            status: SizeStatus::Ok,
            error: None,
            seed,
            chains: cfg.chains,
            n_samples: 0,
            mean_root: None,
            mean_root_stderr: None,
            seconds,
        };
        match result {
            Ok(row) => {
                d.n_samples = row.n_samples;
                d.mean_root = Some(row.mean);
                d.mean_root_stderr = Some(row.mean_stderr);
                rows.push(row);
            }
            Err(e) => {
                d.status = SizeStatus::Failed;
                d.error = Some(e.to_string());
            }
        }
        diagnostics.push(d);
    }
    rows
}

/// Runs `cfg` and writes its outputs and `manifest.json` into `out_dir`. A
/// size that fails is recorded in the manifest and the run continues.
pub fn run_experiment(cfg: &ExperimentConfig, master_seed: u64, out_dir: &Path) -> Result<RunOutcome, ExperimentError> {
    cfg.validate()?;
    let started_unix = unix_now();
    let mut out = OutputDir::create(out_dir)?;
    let lattice = cfg.lattice.spec()?;
    let potential = cfg.potential.build()?;
    let mut sizes = Vec::new();
    let mut passed;
    match cfg.experiment {
        ExperimentKind::VarianceGrowth => {
            let rows = variance_series(cfg, &lattice, &potential, "variance_growth", master_seed, &mut sizes);
            out.write("variance_growth.csv", variance_csv(&rows).as_bytes())?;
            passed = true;
        }
        ExperimentKind::PhaseContrast => {
            let contrast = cfg.contrast_potential.as_ref().expect("validated").build()?;
            let primary = variance_series(cfg, &lattice, &potential, "primary", master_seed, &mut sizes);
            let second = variance_series(cfg, &lattice, &contrast, "contrast", master_seed, &mut sizes);
            let mut csv = format!("potential,{VARIANCE_HEADER}\n");
            for (label, rows) in [("primary", &primary), ("contrast", &second)] {
                for r in rows.iter() {
                    writeln!(csv, "{label},{},{:.16e},{:.16e}", r.n, r.var_root, r.stderr).unwrap();
                }
            }
            out.write("phase_contrast.csv", csv.as_bytes())?;
            let verdict = ContrastVerdict {
                primary_increasing: strictly_increasing(&primary, 2.0),
                contrast_saturated: saturated(&second, 2.0),
                contrast_below_one: second.iter().all(|r| r.var_root < 1.0),
            };
            passed = verdict.primary_increasing && verdict.contrast_saturated && verdict.contrast_below_one;
            out.write_json("phase_contrast.json", &verdict)?;
        }
        ExperimentKind::PercolationScan => {
            let mut summaries = Vec::new();
            for &size in &cfg.sizes {
                let Size::Torus([w, h]) = size else { continue };
                let seed = derive_seed(master_seed, "percolation_scan", &[w as u64, h as u64]);
                let sampler = SamplerConfig { seed, ..cfg.sampler.clone() };
                let start = Instant::now();
                let result = percolation_scan_torus(
                    &lattice,
                    &potential,
                    w,
                    h,
                    &cfg.levels,
                    cfg.samples,
                    &sampler,
                    cfg.box_radius,
                );
                let mut d = SizeDiagnostics {
                    series: "percolation_scan".into(),
                    size,
                    status: SizeStatus::Ok,
                    error: None,
                    seed,
                    chains: 1,
                    n_samples: cfg.samples,
                    mean_root: None,
                    mean_root_stderr: None,
                    seconds: start.elapsed().as_secs_f64(),
                };
                match result {
                    Ok((rows, summary)) => {
                        let mut csv = format!("{}\n", ScanRow::HEADER);
                        for r in &rows {
                            csv.push_str(&r.to_csv());
                            csv.push('\n');
                        }
                        out.write(&format!("percolation_scan_{}.csv", size.label()), csv.as_bytes())?;
                        summaries.push(summary);
                    }
                    Err(e) => {
                        d.status = SizeStatus::Failed;
                        d.error = Some(e.to_string());
                    }
                }
                sizes.push(d);
            }
            out.write_json("percolation_summary.json", &summaries)?;
            passed = true;
        }
        ExperimentKind::FkgAudit | ExperimentKind::EnrichmentAudit | ExperimentKind::ExplorationAudit => {
            let suite = match cfg.experiment {
                ExperimentKind::FkgAudit => "fkg",
                ExperimentKind::EnrichmentAudit => "enrichment",
                _ => "exploration",
            };
            let report: AuditReport = audit::run_suite(suite, master_seed)?;
            passed = report.passed;
            out.write_json(&format!("audit_{suite}.json"), &report)?;
        }
    }
    passed &= sizes.iter().all(|s| s.status == SizeStatus::Ok);
    let manifest = RunManifest {
        config: cfg.clone(),
        master_seed,
        code_version: CODE_VERSION.to_string(),
        boundary_condition: BOUNDARY_NOTE.to_string(),
        started_unix,
        finished_unix: unix_now(),
        sizes,
        outputs: out.records.clone(),
        checks_passed: passed,
    };
    let path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(RunOutcome { manifest, output_dir: out_dir.to_path_buf(), passed })
}

/// Patch description for the `patch` subcommand:
/// `<family>:ball=<n>` or `<family>:torus=<w>x<h>`, where the family is
/// `honeycomb`, `truncated_square`, or either followed by `+series=<N>`.
pub fn parse_patch_spec(spec: &str) -> Result<PlanarPatch, ExperimentError> {
    let bad = || ExperimentError::Config(format!("cannot parse patch spec {spec:?}"));
    let (family, shape) = spec.split_once(':').ok_or_else(bad)?;
    let (base, series) = match family.split_once("+series=") {
        Some((b, n)) => (b, Some(n.parse::<u32>().map_err(|_| bad())?)),
        None => (family, None),
    };
    let base = match base {
        "honeycomb" => LatticeFamily::Honeycomb,
        "truncated_square" => LatticeFamily::TruncatedSquare,
        _ => return Err(bad()),
    };
    let family = match series {
        Some(n_series) => LatticeFamily::SeriesExpanded { base: Box::new(base), n_series },
        None => base,
    };
    let lattice = family.spec()?;
    let (kind, arg) = shape.split_once('=').ok_or_else(bad)?;
    match kind {
        "ball" => Ok(build_ball(&lattice, arg.parse().map_err(|_| bad())?, 0)?),
        "torus" => {
            let (w, h) = arg.split_once('x').ok_or_else(bad)?;
            Ok(build_torus(&lattice, w.parse().map_err(|_| bad())?, h.parse().map_err(|_| bad())?)?)
        }
        _ => Err(bad()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(json: &str) -> Result<ExperimentConfig, ExperimentError> {
        let cfg: ExperimentConfig = serde_json::from_str(json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[test]
    fn config_validation() {
        let ok = config(r#"{"schema_version": 1, "experiment": "variance_growth", "sizes": [2, 3]}"#).unwrap();
        assert_eq!(ok.lattice, LatticeFamily::Honeycomb);
        assert_eq!(ok.chains, 4);
        for bad in [
            r#"{"schema_version": 2, "experiment": "variance_growth", "sizes": [2]}"#,
            r#"{"schema_version": 1, "experiment": "variance_growth", "sizes": []}"#,
            r#"{"schema_version": 1, "experiment": "variance_growth", "sizes": [3, 2]}"#,
            r#"{"schema_version": 1, "experiment": "variance_growth", "sizes": [[4, 4]]}"#,
            r#"{"schema_version": 1, "experiment": "percolation_scan", "sizes": [[4, 4]]}"#,
            r#"{"schema_version": 1, "experiment": "phase_contrast", "sizes": [2]}"#,
            r#"{"schema_version": 1, "experiment": "fkg_audit", "bogus": 1}"#,
        ] {
            let e = config(bad).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{bad}: {e}");
        }
    }

    #[test]
    fn patch_specs() {
        assert_eq!(parse_patch_spec("honeycomb:ball=1").unwrap().interior.len(), 4);
        assert_eq!(parse_patch_spec("truncated_square:torus=2x2").unwrap().n_vertices(), 16);
        assert_eq!(parse_patch_spec("honeycomb+series=2:torus=2x2").unwrap().n_vertices(), 8 + 12);
        for bad in ["hex:ball=1", "honeycomb", "honeycomb:ball=x", "honeycomb:torus=3"] {
            assert_eq!(parse_patch_spec(bad).unwrap_err().exit_code(), 2);
        }
    }

    #[test]
    fn variance_run_is_reproducible() {
        let cfg = config(
            r#"{"schema_version": 1, "experiment": "variance_growth", "sizes": [1, 2],
                "sampler": {"sweeps": 300, "burn_in": 30, "seed": 5}, "chains": 2}"#,
        )
        .unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ra = run_experiment(&cfg, 5, a.path()).unwrap();
        let rb = run_experiment(&cfg, 5, b.path()).unwrap();
        assert!(ra.passed);
        let csv = fs::read(a.path().join("variance_growth.csv")).unwrap();
        assert_eq!(csv, fs::read(b.path().join("variance_growth.csv")).unwrap());
        assert_eq!(ra.manifest.outputs, rb.manifest.outputs);
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 3);
    }

    #[test]
    fn percolation_scan_far_below_window() {
        let (rows, summary) = percolation_scan_torus(
            &LatticeSpec::honeycomb(),
            &Potential::homomorphism(),
            4,
            4,
            &[-100],
            5,
            &SamplerConfig { sweeps: 1, burn_in: 5, ..SamplerConfig::default() },
            None,
        )
        .unwrap();
        let geq: Vec<_> = rows.iter().filter(|r| r.direction == LevelDirection::Geq && r.level == -100).collect();
        assert_eq!(geq.len(), 5);
        assert!(geq.iter().all(|r| r.clusters == 1 && r.wraps_h && r.wraps_v));
        assert_eq!(summary.spin_carrier, Some(Carrier::OddVertices));
    }
}
