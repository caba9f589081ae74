//! Experiment harness: train one model, benchmark method grids over
//! datasets with seeded 50/25 splits, or dump sampled split sets.
//!
//! Every cell of a benchmark is self-contained (dataset, depth, seed,
//! method), so cells can run concurrently; per-cell results are
//! deterministic for a fixed seed no matter how they are scheduled.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use crate::cart::{self, CartParams};
use crate::dataset::{self, Dataset, LoadOptions, SplitPartition};
use crate::driver::{self, CghConfig, CghResult};
use crate::error::{Error, Result};
use crate::sampling::{self, RestrictedSplits, SamplingParams};
use crate::tree::{DecisionTree, RowSet, Split};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Cart,
    CartStar,
    Cgh,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cart" => Ok(Method::Cart),
            "cart_star" | "cart-star" => Ok(Method::CartStar),
            "cgh" => Ok(Method::Cgh),
            other => Err(Error::Invalid(format!(
                "unknown method {other:?} (expected cart, cart_star or cgh)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Cart => write!(f, "cart"),
            Method::CartStar => write!(f, "cart_star"),
            Method::Cgh => write!(f, "cgh"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainArgs {
    pub data: PathBuf,
    pub schema: Option<PathBuf>,
    pub depth: usize,
    pub method: Method,
    pub seed: u64,
    pub time_limit: Duration,
    pub big_data: bool,
    pub out_dir: PathBuf,
    pub no_header: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model_path: PathBuf,
    pub metrics_path: PathBuf,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub wall_time: Duration,
    pub termination: String,
}

const METRICS_HEADER: &str =
    "dataset,depth,seed,method,train_accuracy,test_accuracy,wall_time_secs,termination,lp_integral";

fn load_with_schema(data: &Path, schema: Option<&Path>, no_header: bool) -> Result<Dataset> {
    let mut opts = match schema {
        Some(p) => LoadOptions::from_sidecar(p)?,
        None => {
            // a sidecar next to the data file is picked up automatically
            let implicit = data.with_extension("schema");
            if implicit.is_file() {
                LoadOptions::from_sidecar(&implicit)?
            } else {
                LoadOptions::new()
            }
        }
    };
    if no_header {
        opts.has_header = false;
    }
    dataset::load_csv(data, &opts)
}

fn dataset_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Padding candidates so a possibly-shallow CART tree can be embedded in
/// the full topology for serialization.
fn restriction_around_cart(
    d: &Dataset,
    train: &RowSet,
    cart: &cart::CartTree,
    depth: usize,
) -> Result<RestrictedSplits> {
    let topo = crate::tree::Topology::new(depth);
    let cart_splits = cart.splits_by_heap_pos();
    let mut observed: Vec<Split> = Vec::new();
    'scan: for f in 0..d.n_features() {
        let mut values: Vec<f64> = train.iter().map(|r| d.value(r, f)).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for v in values {
            observed.push(Split::new(f, v));
            if observed.len() > depth + 1 {
                break 'scan;
            }
        }
    }
    let per_node = topo
        .internal_ids()
        .map(|j| {
            let mut s: Vec<Split> = cart_splits.get(&j).copied().into_iter().collect();
            s.extend(observed.iter().copied());
            s
        })
        .collect();
    RestrictedSplits::new(depth, per_node)
}

/// One training cell. Returns accuracies, timing and (for column
/// generation) the integrality flag of the final LP.
struct CellOutcome {
    tree: DecisionTree,
    train_accuracy: f64,
    test_accuracy: f64,
    wall_time: Duration,
    termination: String,
    lp_integral: Option<bool>,
    log: Vec<String>,
}

fn run_cell(
    d: &Dataset,
    split: &SplitPartition,
    depth: usize,
    method: Method,
    seed: u64,
    time_limit: Duration,
    big_data: bool,
) -> Result<CellOutcome> {
    let train = split.train_set(d.n_rows());
    let test = split.test_set(d.n_rows());
    let started = Instant::now();
    match method {
        Method::Cart | Method::CartStar => {
            let (tree, wall) = {
                let t = match method {
                    Method::Cart => cart::build(d, &train, &CartParams::with_depth(depth))?,
                    _ => cart::tune_cart_star(d, &train, depth)?.1,
                };
                (t, started.elapsed())
            };
            let restricted = restriction_around_cart(d, &train, &tree, depth)?;
            let aligned = sampling::align_cart_to_topology(&tree, depth, &restricted)?;
            Ok(CellOutcome {
                train_accuracy: aligned.accuracy(d, &train)?,
                test_accuracy: aligned.accuracy(d, &test)?,
                tree: aligned,
                wall_time: wall,
                termination: "complete".into(),
                lp_integral: None,
                log: Vec::new(),
            })
        }
        Method::Cgh => {
            let mut cfg = CghConfig::new(depth, seed);
            cfg.time_limit = time_limit;
            if big_data {
                cfg.big_data = Some(true);
            }
            let result: CghResult = driver::run_cgh(d, &train, &cfg)?;
            Ok(CellOutcome {
                train_accuracy: result.train_accuracy,
                test_accuracy: result.tree.accuracy(d, &test)?,
                tree: result.tree,
                wall_time: result.wall_time,
                termination: result.termination.to_string(),
                lp_integral: Some(result.lp_was_integral),
                log: result.log,
            })
        }
    }
}

/// Train one model, write it and a one-row metrics file.
pub fn cmd_train(args: &TrainArgs) -> Result<TrainOutcome> {
    if !(1..=6).contains(&args.depth) {
        return Err(Error::Invalid(format!(
            "depth must be in 1..=6, got {}",
            args.depth
        )));
    }
    let d = load_with_schema(&args.data, args.schema.as_deref(), args.no_header)?;
    let split = dataset::split_train_test(&d, args.seed)?;
    let cell = run_cell(
        &d,
        &split,
        args.depth,
        args.method,
        args.seed,
        args.time_limit,
        args.big_data,
    )?;
    std::fs::create_dir_all(&args.out_dir)?;
    let model_path = args.out_dir.join("model.json");
    std::fs::write(&model_path, cell.tree.to_model_json())?;
    let metrics_path = args.out_dir.join("metrics.csv");
    let row = format!(
        "{},{},{},{},{:.6},{:.6},{:.3},{},{}\n",
        dataset_label(&args.data),
        args.depth,
        args.seed,
        args.method,
        cell.train_accuracy,
        cell.test_accuracy,
        cell.wall_time.as_secs_f64(),
        cell.termination,
        cell.lp_integral.map_or(String::new(), |b| b.to_string()),
    );
    std::fs::write(&metrics_path, format!("{METRICS_HEADER}\n{row}"))?;
    if !cell.log.is_empty() {
        std::fs::write(args.out_dir.join("run.log"), cell.log.join("\n") + "\n")?;
    }
    Ok(TrainOutcome {
        model_path,
        metrics_path,
        train_accuracy: cell.train_accuracy,
        test_accuracy: cell.test_accuracy,
        wall_time: cell.wall_time,
        termination: cell.termination,
    })
}

#[derive(Clone, Debug)]
pub struct BenchmarkArgs {
    pub datasets: Vec<PathBuf>,
    pub depths: Vec<usize>,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub time_limit: Duration,
    pub jobs: usize,
    pub out_dir: PathBuf,
    pub no_header: bool,
    pub big_data: bool,
}

impl Default for BenchmarkArgs {
    fn default() -> Self {
        BenchmarkArgs {
            datasets: Vec::new(),
            depths: vec![2, 3, 4],
            seeds: (1..=5).collect(),
            methods: vec![Method::Cart, Method::Cgh],
            time_limit: Duration::from_secs(600),
            jobs: 1,
            out_dir: PathBuf::from("out"),
            no_header: false,
            big_data: false,
        }
    }
}

/// One line of the benchmark report. `seed` is `None` on average rows.
#[derive(Clone, Debug)]
pub struct ReportRow {
    pub dataset: String,
    pub depth: usize,
    pub seed: Option<u64>,
    pub method: Method,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub wall_time_secs: f64,
    pub termination: String,
    pub lp_integral: Option<bool>,
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub averages: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for row in self.rows.iter().chain(&self.averages) {
            out.push_str(&format!(
                "{},{},{},{},{:.6},{:.6},{:.3},{},{}\n",
                row.dataset,
                row.depth,
                row.seed.map_or("avg".into(), |s| s.to_string()),
                row.method,
                row.train_accuracy,
                row.test_accuracy,
                row.wall_time_secs,
                row.termination,
                row.lp_integral.map_or(String::new(), |b| b.to_string()),
            ));
        }
        out
    }

    /// Fraction of successful column-generation cells whose final LP was
    /// integral.
    pub fn integrality_ratio(&self) -> Option<f64> {
        let flags: Vec<bool> = self
            .rows
            .iter()
            .filter(|r| r.method == Method::Cgh)
            .filter_map(|r| r.lp_integral)
            .collect();
        if flags.is_empty() {
            None
        } else {
            Some(flags.iter().filter(|&&b| b).count() as f64 / flags.len() as f64)
        }
    }

    /// Mean over the seed rows of one (dataset, depth, method) cell group.
    pub fn average_for(&self, dataset: &str, depth: usize, method: Method) -> Option<&ReportRow> {
        self.averages
            .iter()
            .find(|r| r.dataset == dataset && r.depth == depth && r.method == method)
    }
}

/// Run the full grid: per (dataset, depth) five seeded 50/25 splits per
/// method by default. Per-cell failures are recorded in the report and the
/// run continues. Returns the report and whether every cell completed.
pub fn cmd_benchmark(args: &BenchmarkArgs) -> Result<(ExperimentReport, bool)> {
    if args.datasets.is_empty() {
        return Err(Error::Invalid("no datasets given".into()));
    }
    let mut report = ExperimentReport::default();
    let mut all_ok = true;

    for data_path in &args.datasets {
        let label = dataset_label(data_path);
        let d = load_with_schema(data_path, None, args.no_header)?;
        // cells of this dataset, in deterministic order
        let mut cells: Vec<(usize, u64, Method)> = Vec::new();
        for &depth in &args.depths {
            for &seed in &args.seeds {
                for &method in &args.methods {
                    cells.push((depth, seed, method));
                }
            }
        }
        let results: Vec<Option<ReportRow>> = {
            let slots: Vec<Mutex<Option<ReportRow>>> =
                cells.iter().map(|_| Mutex::new(None)).collect();
            let next = std::sync::atomic::AtomicUsize::new(0);
            let workers = args.jobs.max(1).min(cells.len().max(1));
            std::thread::scope(|scope| {
                for _ in 0..workers {
                    scope.spawn(|| loop {
                        let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                        if i >= cells.len() {
                            break;
                        }
                        let (depth, seed, method) = cells[i];
                        let row = match dataset::split_train_test(&d, seed).and_then(|split| {
                            run_cell(&d, &split, depth, method, seed, args.time_limit, args.big_data)
                        }) {
                            Ok(cell) => ReportRow {
                                dataset: label.clone(),
                                depth,
                                seed: Some(seed),
                                method,
                                train_accuracy: cell.train_accuracy,
                                test_accuracy: cell.test_accuracy,
                                wall_time_secs: cell.wall_time.as_secs_f64(),
                                termination: cell.termination,
                                lp_integral: cell.lp_integral,
                            },
                            Err(e) => ReportRow {
                                dataset: label.clone(),
                                depth,
                                seed: Some(seed),
                                method,
                                train_accuracy: f64::NAN,
                                test_accuracy: f64::NAN,
                                wall_time_secs: 0.0,
                                termination: format!("error: {e}").replace(',', ";"),
                                lp_integral: None,
                            },
                        };
                        *slots[i].lock().unwrap() = Some(row);
                    });
                }
            });
            slots.into_iter().map(|m| m.into_inner().unwrap()).collect()
        };
        for row in results.into_iter().flatten() {
            if row.termination.starts_with("error") {
                all_ok = false;
            }
            report.rows.push(row);
        }
        // averages per (depth, method) over the seeds that succeeded
        for &depth in &args.depths {
            for &method in &args.methods {
                let group: Vec<&ReportRow> = report
                    .rows
                    .iter()
                    .filter(|r| {
                        r.dataset == label
                            && r.depth == depth
                            && r.method == method
                            && !r.termination.starts_with("error")
                    })
                    .collect();
                if group.is_empty() {
                    continue;
                }
                let n = group.len() as f64;
                report.averages.push(ReportRow {
                    dataset: label.clone(),
                    depth,
                    seed: None,
                    method,
                    train_accuracy: group.iter().map(|r| r.train_accuracy).sum::<f64>() / n,
                    test_accuracy: group.iter().map(|r| r.test_accuracy).sum::<f64>() / n,
                    wall_time_secs: group.iter().map(|r| r.wall_time_secs).sum::<f64>() / n,
                    termination: format!("avg_of_{}", group.len()),
                    lp_integral: None,
                });
            }
        }
    }

    std::fs::create_dir_all(&args.out_dir)?;
    std::fs::write(args.out_dir.join("report.csv"), report.to_csv())?;
    Ok((report, all_ok))
}

#[derive(Clone, Debug)]
pub struct SampleSplitsArgs {
    pub data: PathBuf,
    pub schema: Option<PathBuf>,
    pub depth: usize,
    pub seed: u64,
    pub alpha: f64,
    pub tau: usize,
    pub out_dir: PathBuf,
    pub no_header: bool,
}

/// Run threshold sampling only and dump the restricted split sets with
/// their observation frequencies.
pub fn cmd_sample_splits(args: &SampleSplitsArgs) -> Result<(PathBuf, sampling::SamplingOutput)> {
    let d = load_with_schema(&args.data, args.schema.as_deref(), args.no_header)?;
    let split = dataset::split_train_test(&d, args.seed)?;
    let train = split.train_set(d.n_rows());
    let params = SamplingParams {
        alpha: args.alpha,
        tau: args.tau,
        q: sampling::default_q(args.depth),
        seed: args.seed,
    };
    let out = sampling::run_threshold_sampling(&d, &train, args.depth, &params)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let path = args.out_dir.join("splits.txt");
    std::fs::write(&path, out.dump_splits())?;
    Ok((path, out))
}
