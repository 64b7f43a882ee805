//! The batch commands behind the `hotcake` binary, independent of argument
//! parsing. Every command maps failures onto a fixed exit code.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convsim::{conv2d, forward_decomposed, im2col, FeatureMap};
use crate::error::Error;
use crate::fixtures;
use crate::hotcake::{
    compress_network, factorize_channels, reshape_kernel, CompressionReport, ConvSpec, HotcakeRanks, LayerStatus,
};
use crate::io::{self, Dtype, LayerEntry, Manifest, ManifestConfig};
use crate::rng::{derive_seed, CounterRng};
use crate::vbmf::{estimate_tucker_ranks, VbmfOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_TOLERANCE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_CHAIN: i32 = 4;

/// Relative max-abs deviation allowed for full-rank layers in `verify`.
pub const FULL_RANK_TOLERANCE: f64 = 1e-6;
/// Multiplicative slack on the truncation bound in `verify`.
pub const BOUND_SLACK: f64 = 1.01;

pub const REPORT_FILE: &str = "report.json";
pub const THREADS_ENV: &str = "HOTCAKE_THREADS";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandError {
    pub code: i32,
    pub message: String,
}

impl CommandError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        CommandError { code, message: message.into() }
    }
}

impl fmt::Display for CommandError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CommandError {}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_) => EXIT_IO,
            _ => EXIT_INVALID,
        };
        CommandError::new(code, e.to_string())
    }
}

fn with_path(path: &Path) -> impl FnOnce(Error) -> CommandError + '_ {
    move |e| {
        let mut ce = CommandError::from(e);
        ce.message = format!("{}: {}", path.display(), ce.message);
        ce
    }
}

pub type CommandResult<T> = std::result::Result<T, CommandError>;

/// Runs `f` on a pool capped by `HOTCAKE_THREADS` when it is set.
pub fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> CommandResult<T> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(f());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CommandError::new(EXIT_INVALID, format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| CommandError::new(EXIT_INVALID, e.to_string()))?;
    Ok(pool.install(f))
}

fn pretty_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("value serializes");
    s.push('\n');
    s
}

fn manifest_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

// ---------------------------------------------------------------- ranks

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RanksArgs {
    pub tensor: PathBuf,
    pub branches: usize,
    pub use_rsvd: bool,
    pub seed: u64,
}

/// VBMF centre ranks of a 4-way kernel after splitting its input channels
/// into `branches` sub-modes. Returns `{"input_ranks":[..],"output_rank":n}`.
pub fn ranks(args: &RanksArgs) -> CommandResult<String> {
    let t = io::read_tensor(&args.tensor).map_err(with_path(&args.tensor))?;
    if t.ndim() != 4 {
        return Err(CommandError::new(
            EXIT_INVALID,
            format!("expected a 4-way [D_h, D_w, K1, K2] kernel, got {:?}", t.shape()),
        ));
    }
    let s = t.shape().to_vec();
    let spec = ConvSpec::new((s[0], s[1]), (1, 1), (0, 0))?;
    let k = crate::hotcake::KernelTensor::new(t, spec)?;
    let cf = factorize_channels(k.in_channels(), args.branches)?;
    let k_new = reshape_kernel(&k, &cf)?;
    let modes: Vec<usize> = (2..k_new.ndim()).collect();
    let opts = VbmfOptions { use_rsvd: args.use_rsvd, seed: args.seed, candidate_max: None };
    let flat = estimate_tucker_ranks(&k_new, &modes, &opts)?;
    let r = HotcakeRanks::from_flat(&flat)?;
    Ok(serde_json::to_string(&r).expect("ranks serialize") + "\n")
}

// ------------------------------------------------------------ decompose

/// Command-line overrides of the manifest's `config` block.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigOverrides {
    pub branches: Option<usize>,
    pub diameter: Option<usize>,
    pub seed: Option<u64>,
    pub use_rsvd: bool,
    pub budget: Option<usize>,
}

impl ConfigOverrides {
    pub fn apply(&self, cfg: &mut ManifestConfig) {
        if let Some(b) = self.branches {
            cfg.branches_l = b;
        }
        if let Some(d) = self.diameter {
            cfg.search_diameter = d;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.use_rsvd {
            cfg.use_rsvd = true;
        }
        if let Some(b) = self.budget {
            cfg.param_budget = Some(b);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecomposeArgs {
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    pub overrides: ConfigOverrides,
}

/// Compresses every manifest layer, writing `out_dir/<id>/…` stage files for
/// compressed layers and `out_dir/report.json`.
pub fn decompose(args: &DecomposeArgs) -> CommandResult<CompressionReport> {
    let mut manifest = Manifest::load(&args.manifest).map_err(with_path(&args.manifest))?;
    args.overrides.apply(&mut manifest.config);
    let layers = manifest.load_layers(manifest_dir(&args.manifest))?;
    let cfg = manifest.config.to_compress_config();
    let result = compress_network(&layers, &cfg);
    std::fs::create_dir_all(&args.out_dir).map_err(|e| with_path(&args.out_dir)(e.into()))?;
    result
        .layers
        .par_iter()
        .try_for_each(|(id, dl)| io::write_decomposed(&args.out_dir.join(id), id, dl))?;
    io::write_atomic(&args.out_dir.join(REPORT_FILE), pretty_json(&result.report).as_bytes())?;
    Ok(result.report)
}

// --------------------------------------------------------------- verify

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyArgs {
    pub manifest: PathBuf,
    pub decomposed_dir: PathBuf,
    pub trials: usize,
    pub seed: u64,
    /// Side of the square random inputs; raised to the kernel extent if
    /// smaller.
    pub input_size: usize,
}

impl Default for VerifyArgs {
    fn default() -> Self {
        VerifyArgs {
            manifest: PathBuf::new(),
            decomposed_dir: PathBuf::new(),
            trials: 4,
            seed: 0,
            input_size: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerVerification {
    pub id: String,
    pub full_rank: bool,
    /// `max |y_dec − y| / max |y|` over all trials.
    pub max_rel_deviation: f64,
    /// Largest `‖y_dec − y‖_F / (‖K − K̂‖_F · ‖im2col(x)‖_F)` over trials.
    pub max_bound_ratio: f64,
    pub within_bound: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub trials: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub layers: Vec<LayerVerification>,
    /// Manifest layers without a stage directory.
    pub not_decomposed: Vec<String>,
    pub all_full_rank_passed: bool,
}

impl VerifyReport {
    pub fn exit_code(&self) -> i32 {
        if self.all_full_rank_passed {
            EXIT_OK
        } else {
            EXIT_TOLERANCE
        }
    }

    pub fn to_json(&self) -> String {
        pretty_json(self)
    }
}

fn chain_error(id: &str) -> impl FnOnce(Error) -> CommandError + '_ {
    move |e| CommandError::new(EXIT_CHAIN, format!("layer {id}: {e}"))
}

fn verify_layer(entry: &LayerEntry, base: &Path, dir: &Path, args: &VerifyArgs, stream: u64) -> CommandResult<LayerVerification> {
    let k = entry.load_kernel(base)?;
    let (_, dl) = io::read_decomposed(dir).map_err(chain_error(&entry.id))?;
    if dl.in_channels() != k.in_channels() || dl.out_channels() != k.out_channels() || dl.core.spec() != k.spec() {
        return Err(CommandError::new(
            EXIT_CHAIN,
            format!("layer {}: stages do not match the manifest kernel", entry.id),
        ));
    }
    let k_hat = dl.reconstruct_kernel().map_err(chain_error(&entry.id))?;
    let kernel_gap = k_hat.tensor().sub(k.tensor())?.frobenius_norm();
    let spec = k.spec();
    let h = args.input_size.max(spec.spatial.0);
    let w = args.input_size.max(spec.spatial.1);
    let mut max_rel = 0.0f64;
    let mut max_ratio = 0.0f64;
    let mut within = true;
    for trial in 0..args.trials {
        let mut rng = CounterRng::new(derive_seed(derive_seed(args.seed, stream), trial as u64));
        let x = FeatureMap::random(h, w, k.in_channels(), &mut rng)?;
        let y = conv2d(&x, &k)?;
        let y_dec = forward_decomposed(&x, &dl).map_err(chain_error(&entry.id))?;
        let diff = y_dec.tensor().sub(y.tensor())?;
        let scale = y.tensor().max_abs();
        let rel = if scale > 0.0 { diff.max_abs() / scale } else { diff.max_abs() };
        max_rel = max_rel.max(rel);
        let bound = kernel_gap * im2col(&x, spec)?.frobenius_norm();
        let gap = diff.frobenius_norm();
        // rounding floor for the full-rank case where the bound is ~0
        let floor = 1e-12 * y.tensor().frobenius_norm().max(1.0);
        if gap > BOUND_SLACK * bound + floor {
            within = false;
        }
        if bound > 0.0 {
            max_ratio = max_ratio.max(gap / bound);
        }
    }
    let full_rank = dl.is_full_rank();
    let passed = within && (!full_rank || max_rel <= FULL_RANK_TOLERANCE);
    Ok(LayerVerification {
        id: entry.id.clone(),
        full_rank,
        max_rel_deviation: max_rel,
        max_bound_ratio: max_ratio,
        within_bound: within,
        passed,
    })
}

/// Replays every decomposed layer against the direct convolution on seeded
/// random inputs.
pub fn verify(args: &VerifyArgs) -> CommandResult<VerifyReport> {
    let manifest = Manifest::load(&args.manifest).map_err(with_path(&args.manifest))?;
    let base = manifest_dir(&args.manifest);
    let mut present = Vec::new();
    let mut not_decomposed = Vec::new();
    for (i, e) in manifest.layers.iter().enumerate() {
        let dir = args.decomposed_dir.join(&e.id);
        if dir.join(io::LAYER_FILE).is_file() {
            present.push((i, e, dir));
        } else {
            not_decomposed.push(e.id.clone());
        }
    }
    let layers: Vec<LayerVerification> = present
        .par_iter()
        .map(|(i, e, dir)| verify_layer(e, base, dir, args, *i as u64))
        .collect::<CommandResult<_>>()?;
    let all = layers.iter().all(|l| !l.full_rank || l.passed);
    Ok(VerifyReport {
        trials: args.trials,
        seed: args.seed,
        tolerance: FULL_RANK_TOLERANCE,
        layers,
        not_decomposed,
        all_full_rank_passed: all,
    })
}

// --------------------------------------------------------------- report

/// `1234567` → `1,234,567`.
pub fn group_digits(n: u64) -> String {
    let s = n.to_string();
    let mut out = String::with_capacity(s.len() + s.len() / 3);
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

pub fn load_report(path: &Path) -> CommandResult<CompressionReport> {
    let text = std::fs::read_to_string(path).map_err(|e| with_path(path)(e.into()))?;
    serde_json::from_str(&text).map_err(|e| CommandError::new(EXIT_INVALID, format!("{}: malformed report: {e}", path.display())))
}

fn status_name(s: LayerStatus) -> &'static str {
    match s {
        LayerStatus::Compressed => "compressed",
        LayerStatus::Skipped => "skipped",
        LayerStatus::Failed => "failed",
    }
}

/// Fixed-width table followed by the compression order.
pub fn format_report(r: &CompressionReport) -> String {
    let width = r.layers.iter().map(|l| l.id.len()).chain([5]).max().unwrap_or(5);
    let mut out = String::new();
    let row = |out: &mut String, id: &str, status: &str, before: &str, after: &str, ratio: &str, err: &str| {
        let line = format!("{id:<width$}  {status:<10}  {before:>13}  {after:>13}  {ratio:>8}  {err:>10}");
        let _ = writeln!(out, "{}", line.trim_end());
    };
    row(&mut out, "layer", "status", "params before", "params after", "ratio", "error");
    for l in &r.layers {
        row(
            &mut out,
            &l.id,
            status_name(l.status),
            &group_digits(l.original_params as u64),
            &group_digits(l.compressed_params as u64),
            &format!("{:.2}x", l.compression_ratio),
            &format!("{:.3e}", l.approx_error),
        );
    }
    row(
        &mut out,
        "total",
        "",
        &group_digits(r.totals.original_params as u64),
        &group_digits(r.totals.compressed_params as u64),
        &format!("{:.2}x", r.totals.compression_ratio),
        "",
    );
    let _ = writeln!(out, "\ncompression order: {}", r.order.join(", "));
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One header line and one row per layer.
pub fn report_csv(r: &CompressionReport) -> String {
    let mut out = String::from(
        "id,status,original_params,compressed_params,compression_ratio,approx_error,flop_original,flop_compressed\n",
    );
    for l in &r.layers {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:e},{},{}",
            csv_field(&l.id),
            status_name(l.status),
            l.original_params,
            l.compressed_params,
            l.compression_ratio,
            l.approx_error,
            l.flop_original,
            l.flop_compressed
        );
    }
    out
}

/// Renders `report.json`; also writes CSV when `csv` is given.
pub fn report(path: &Path, csv: Option<&Path>) -> CommandResult<String> {
    let r = load_report(path)?;
    if let Some(c) = csv {
        io::write_atomic(c, report_csv(&r).as_bytes()).map_err(with_path(c))?;
    }
    Ok(format_report(&r))
}

// -------------------------------------------------------------- fixture

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureKind {
    PlantedTucker,
    NoiseMatrix,
    Example2,
}

impl FromStr for FixtureKind {
    type Err = CommandError;
    fn from_str(s: &str) -> CommandResult<Self> {
        match s {
            "planted-tucker" => Ok(FixtureKind::PlantedTucker),
            "noise-matrix" => Ok(FixtureKind::NoiseMatrix),
            "example2" => Ok(FixtureKind::Example2),
            other => Err(CommandError::new(
                EXIT_INVALID,
                format!("unknown fixture kind {other:?}; expected planted-tucker, noise-matrix or example2"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureArgs {
    pub kind: FixtureKind,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// planted-tucker only; defaults to `[10, 12, 14]`.
    pub dims: Option<Vec<usize>>,
    /// planted-tucker only; defaults to `[2, 3, 4]`.
    pub ranks: Option<Vec<usize>>,
    /// Relative noise level for planted tensors, absolute std for
    /// noise-matrix (where it defaults to 1).
    pub noise: Option<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl Default for FixtureArgs {
    fn default() -> Self {
        FixtureArgs {
            kind: FixtureKind::PlantedTucker,
            out_dir: PathBuf::from("."),
            seed: 0,
            dims: None,
            ranks: None,
            noise: None,
            rows: 100,
            cols: 60,
        }
    }
}

pub const EXAMPLE2_DIMS: [usize; 5] = [3, 3, 8, 16, 256];
pub const EXAMPLE2_RANKS: [usize; 5] = [3, 3, 5, 7, 107];

fn single_layer_manifest(id: &str, file: &str, shape: &[usize]) -> Manifest {
    Manifest {
        layers: vec![LayerEntry {
            id: id.into(),
            kernel_path: file.into(),
            spatial: [shape[0], shape[1]],
            stride: [1, 1],
            padding: [shape[0] / 2, shape[1] / 2],
            in_channels: shape[2],
            out_channels: shape[3],
            ranks: None,
            branches: None,
            input_size: None,
        }],
        config: ManifestConfig::default(),
    }
}

/// Writes the fixture files and returns their paths. A 4-way tensor also
/// gets a single-layer `manifest.json`.
pub fn fixture(args: &FixtureArgs) -> CommandResult<Vec<PathBuf>> {
    let out = &args.out_dir;
    let mut written = Vec::new();
    let mut put = |name: &str, t: &crate::tensor::DenseTensor| -> CommandResult<()> {
        let p = out.join(name);
        io::write_tensor(&p, t, Dtype::F64).map_err(with_path(&p))?;
        written.push(p);
        Ok(())
    };
    let mut manifest = None;
    match args.kind {
        FixtureKind::PlantedTucker => {
            let dims = args.dims.clone().unwrap_or_else(|| vec![10, 12, 14]);
            let ranks = args.ranks.clone().unwrap_or_else(|| vec![2, 3, 4]);
            let t = fixtures::planted_tucker(&dims, &ranks, args.seed)?;
            let t = fixtures::add_relative_noise(&t, args.noise.unwrap_or(0.0), args.seed)?;
            put("tensor.tnsr", &t)?;
            if dims.len() == 4 {
                manifest = Some(single_layer_manifest("planted", "tensor.tnsr", &dims));
            }
        }
        FixtureKind::NoiseMatrix => {
            let m = fixtures::noise_matrix(args.rows, args.cols, args.noise.unwrap_or(1.0), args.seed)?;
            let t = crate::tensor::DenseTensor::new(vec![m.rows(), m.cols()], m.into_data())?;
            put("matrix.tnsr", &t)?;
        }
        FixtureKind::Example2 => {
            let t = fixtures::planted_tucker(&EXAMPLE2_DIMS, &EXAMPLE2_RANKS, args.seed)?;
            let t = fixtures::add_relative_noise(&t, args.noise.unwrap_or(0.0), args.seed)?;
            let shape = [3, 3, 128, 256];
            put("kernel.tnsr", &t.into_reshaped(&shape)?)?;
            let mut m = single_layer_manifest("example2", "kernel.tnsr", &shape);
            m.layers[0].branches = Some(vec![8, 16]);
            manifest = Some(m);
        }
    }
    if let Some(m) = manifest {
        let p = out.join("manifest.json");
        m.save(&p).map_err(with_path(&p))?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digit_grouping() {
        assert_eq!(group_digits(0), "0");
        assert_eq!(group_digits(999), "999");
        assert_eq!(group_digits(36_864), "36,864");
        assert_eq!(group_digits(2_359_296), "2,359,296");
    }

    #[test]
    fn error_codes() {
        let io: CommandError = Error::Io(std::io::Error::other("x")).into();
        assert_eq!(io.code, EXIT_IO);
        let shape: CommandError = Error::SizeMismatch("x".into()).into();
        assert_eq!(shape.code, EXIT_INVALID);
        assert_eq!("bogus".parse::<FixtureKind>().unwrap_err().code, EXIT_INVALID);
        assert_eq!("example2".parse::<FixtureKind>().unwrap(), FixtureKind::Example2);
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("q\""), "\"q\"\"\"");
        assert_eq!(csv_field("conv1"), "conv1");
    }
}
