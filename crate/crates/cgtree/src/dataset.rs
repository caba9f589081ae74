//! Tabular classification data: CSV loading, encoding to the numeric form
//! the tree model assumes, and seeded train/test splitting.
//!
//! Categorical features expand to one 0/1 feature per category (one-hot),
//! ordinal features map to `0,1,2,...` in declared order, and targets map
//! to dense class ids in first-appearance order.

use std::collections::HashMap;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tree::RowSet;

/// Declared kind of one raw input column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    Numeric,
    /// Levels in ascending declared order; encoded as `0,1,2,...`.
    Ordinal(Vec<String>),
    Categorical,
}

/// Resolved schema of a loaded dataset, in terms of the raw CSV columns.
#[derive(Clone, Debug)]
pub struct Schema {
    pub feature_names: Vec<String>,
    pub feature_kinds: Vec<FeatureKind>,
    pub target_column: usize,
}

/// Loading options: what a sidecar schema file may supply. Anything left
/// unspecified is inferred (all-parseable-as-number -> numeric, else
/// categorical; target defaults to the last column).
#[derive(Clone, Debug, Default)]
pub struct LoadOptions {
    pub target_column: Option<usize>,
    pub has_header: bool,
    pub kinds: HashMap<usize, FeatureKind>,
}

impl LoadOptions {
    pub fn new() -> Self {
        LoadOptions {
            target_column: None,
            has_header: true,
            kinds: HashMap::new(),
        }
    }

    /// Parse a sidecar schema file: `key = value` lines, `#` comments.
    ///
    /// ```text
    /// target_column = 4
    /// has_header = true
    /// kind.2 = ordinal:low,medium,high
    /// kind.3 = categorical
    /// ```
    pub fn from_sidecar(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut opts = LoadOptions::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Schema(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "target_column" => {
                    opts.target_column = Some(value.parse().map_err(|_| {
                        Error::Schema(format!("line {}: bad target_column", lineno + 1))
                    })?)
                }
                "has_header" => {
                    opts.has_header = value.parse().map_err(|_| {
                        Error::Schema(format!("line {}: bad has_header", lineno + 1))
                    })?
                }
                k if k.starts_with("kind.") => {
                    let col: usize = k[5..]
                        .parse()
                        .map_err(|_| Error::Schema(format!("line {}: bad column index", lineno + 1)))?;
                    let kind = match value {
                        "numeric" => FeatureKind::Numeric,
                        "categorical" => FeatureKind::Categorical,
                        v if v.starts_with("ordinal:") => FeatureKind::Ordinal(
                            v[8..].split(',').map(|s| s.trim().to_string()).collect(),
                        ),
                        other => {
                            return Err(Error::Schema(format!(
                                "line {}: unknown kind {other:?}",
                                lineno + 1
                            )))
                        }
                    };
                    opts.kinds.insert(col, kind);
                }
                other => return Err(Error::Schema(format!("line {}: unknown key {other:?}", lineno + 1))),
            }
        }
        Ok(opts)
    }
}

/// How one raw column is turned into encoded features.
#[derive(Clone, Debug)]
enum ColumnEncoder {
    Numeric,
    Ordinal(Vec<String>),
    /// Categories in first-appearance order; one encoded feature each.
    OneHot(Vec<String>),
}

/// Encoded numeric dataset: row-major value matrix plus dense class ids.
#[derive(Clone, Debug)]
pub struct Dataset {
    values: Vec<f64>,
    n_rows: usize,
    n_features: usize,
    targets: Vec<usize>,
    n_classes: usize,
    feature_names: Vec<String>,
    class_names: Vec<String>,
    schema: Schema,
    encoders: Vec<ColumnEncoder>,
}

impl Dataset {
    /// Build directly from already-encoded numeric values (tests, synthetic
    /// data). Class count is the max target + 1, but never below 2.
    pub fn from_parts(values: Vec<Vec<f64>>, targets: Vec<usize>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyFile("<memory>".into()));
        }
        if values.len() != targets.len() {
            return Err(Error::Dimension("values/targets length mismatch".into()));
        }
        let n_features = values[0].len();
        if n_features == 0 {
            return Err(Error::Schema("at least one feature required".into()));
        }
        let mut flat = Vec::with_capacity(values.len() * n_features);
        for (i, row) in values.iter().enumerate() {
            if row.len() != n_features {
                return Err(Error::MalformedRow {
                    line: i + 1,
                    message: format!("expected {} values, got {}", n_features, row.len()),
                });
            }
            flat.extend_from_slice(row);
        }
        let n_classes = targets.iter().copied().max().unwrap_or(0).max(1) + 1;
        let feature_names: Vec<String> = (0..n_features).map(|f| format!("c{f}")).collect();
        Ok(Dataset {
            schema: Schema {
                feature_names: feature_names.clone(),
                feature_kinds: vec![FeatureKind::Numeric; n_features],
                target_column: n_features,
            },
            values: flat,
            n_rows: targets.len(),
            n_features,
            targets,
            n_classes,
            feature_names,
            class_names: (0..n_classes).map(|c| format!("{c}")).collect(),
            encoders: vec![ColumnEncoder::Numeric; n_features],
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.values[row * self.n_features + feature]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.n_features..(row + 1) * self.n_features]
    }

    pub fn target(&self, row: usize) -> usize {
        self.targets[row]
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn all_rows(&self) -> RowSet {
        RowSet::full(self.n_rows)
    }

    /// Per-class counts over the given rows; counts sum to `rows.len()`.
    pub fn class_histogram(&self, rows: &RowSet) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes];
        for r in rows.iter() {
            counts[self.targets[r]] += 1;
        }
        counts
    }

    /// Majority class over the rows, ties to the lowest class id.
    pub fn majority_class(&self, rows: &RowSet) -> usize {
        let counts = self.class_histogram(rows);
        let mut best = 0;
        for (c, &n) in counts.iter().enumerate() {
            if n > counts[best] {
                best = c;
            }
        }
        best
    }

    /// Encode one raw record with this dataset's fitted encoders (for
    /// prediction on unseen data). Errors on unknown categories or levels.
    pub fn encode_row(&self, raw: &[&str]) -> Result<Vec<f64>> {
        let expected = self.encoders.len();
        if raw.len() != expected {
            return Err(Error::Dimension(format!(
                "expected {} raw feature columns, got {}",
                expected,
                raw.len()
            )));
        }
        let mut out = Vec::with_capacity(self.n_features);
        for (col, enc) in self.encoders.iter().enumerate() {
            let cell = raw[col].trim();
            match enc {
                ColumnEncoder::Numeric => out.push(cell.parse::<f64>().map_err(|_| {
                    Error::MalformedRow {
                        line: 0,
                        message: format!("column {col}: {cell:?} is not numeric"),
                    }
                })?),
                ColumnEncoder::Ordinal(levels) => {
                    let pos = levels.iter().position(|l| l == cell).ok_or_else(|| {
                        Error::UnknownCategory {
                            feature: self.schema.feature_names[col].clone(),
                            value: cell.to_string(),
                        }
                    })?;
                    out.push(pos as f64);
                }
                ColumnEncoder::OneHot(cats) => {
                    if !cats.iter().any(|c| c == cell) {
                        return Err(Error::UnknownCategory {
                            feature: self.schema.feature_names[col].clone(),
                            value: cell.to_string(),
                        });
                    }
                    for c in cats {
                        out.push(if c == cell { 1.0 } else { 0.0 });
                    }
                }
            }
        }
        Ok(out)
    }

    /// Decode the one-hot block of an encoded row back to its category.
    pub fn decode_one_hot(&self, encoded: &[f64], raw_column: usize) -> Option<&str> {
        let mut offset = 0usize;
        for (col, enc) in self.encoders.iter().enumerate() {
            let width = match enc {
                ColumnEncoder::Numeric | ColumnEncoder::Ordinal(_) => 1,
                ColumnEncoder::OneHot(cats) => cats.len(),
            };
            if col == raw_column {
                if let ColumnEncoder::OneHot(cats) = enc {
                    return (0..cats.len())
                        .find(|&i| encoded[offset + i] == 1.0)
                        .map(|i| cats[i].as_str());
                }
                return None;
            }
            offset += width;
        }
        None
    }
}

/// Load and encode a CSV file. Comma-delimited, decimal point `.`, UTF-8.
pub fn load_csv(path: &Path, opts: &LoadOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut records: Vec<csv::StringRecord> = Vec::new();
    for rec in reader.records() {
        records.push(rec?);
    }
    load_records(path, &records, opts)
}

fn load_records(path: &Path, records: &[csv::StringRecord], opts: &LoadOptions) -> Result<Dataset> {
    if records.is_empty() {
        return Err(Error::EmptyFile(path.display().to_string()));
    }
    let n_columns = records[0].len();
    let header: Option<Vec<String>> = if opts.has_header {
        Some(records[0].iter().map(|s| s.trim().to_string()).collect())
    } else {
        None
    };
    let data_start = usize::from(opts.has_header);
    let rows = &records[data_start..];
    if rows.is_empty() {
        return Err(Error::EmptyFile(path.display().to_string()));
    }
    for (i, rec) in rows.iter().enumerate() {
        let line = i + data_start + 1;
        if rec.len() != n_columns {
            return Err(Error::MalformedRow {
                line,
                message: format!("expected {} columns, got {}", n_columns, rec.len()),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            if cell.trim().is_empty() {
                return Err(Error::MissingValue { line, column: c });
            }
        }
    }

    let target_column = opts.target_column.unwrap_or(n_columns - 1);
    if target_column >= n_columns {
        return Err(Error::Schema(format!(
            "target_column {target_column} out of bounds for {n_columns} columns"
        )));
    }
    let feature_columns: Vec<usize> = (0..n_columns).filter(|&c| c != target_column).collect();
    if feature_columns.is_empty() {
        return Err(Error::Schema("at least one feature required".into()));
    }

    // resolve kinds: declared, else inferred
    let mut kinds: Vec<FeatureKind> = Vec::new();
    for &col in &feature_columns {
        let kind = match opts.kinds.get(&col) {
            Some(k) => k.clone(),
            None => {
                let numeric = rows.iter().all(|r| r[col].trim().parse::<f64>().is_ok());
                if numeric {
                    FeatureKind::Numeric
                } else {
                    FeatureKind::Categorical
                }
            }
        };
        kinds.push(kind);
    }

    let raw_names: Vec<String> = feature_columns
        .iter()
        .map(|&c| match &header {
            Some(h) => h[c].clone(),
            None => format!("c{c}"),
        })
        .collect();
    {
        let mut sorted = raw_names.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != raw_names.len() {
            return Err(Error::Schema("feature names must be unique".into()));
        }
    }

    // fit encoders
    let mut encoders: Vec<ColumnEncoder> = Vec::new();
    for (fi, &col) in feature_columns.iter().enumerate() {
        match &kinds[fi] {
            FeatureKind::Numeric => encoders.push(ColumnEncoder::Numeric),
            FeatureKind::Ordinal(levels) => encoders.push(ColumnEncoder::Ordinal(levels.clone())),
            FeatureKind::Categorical => {
                let mut cats: Vec<String> = Vec::new();
                for r in rows {
                    let cell = r[col].trim();
                    if !cats.iter().any(|c| c == cell) {
                        cats.push(cell.to_string());
                    }
                }
                encoders.push(ColumnEncoder::OneHot(cats));
            }
        }
    }

    // encoded feature names
    let mut feature_names: Vec<String> = Vec::new();
    for (fi, enc) in encoders.iter().enumerate() {
        match enc {
            ColumnEncoder::Numeric | ColumnEncoder::Ordinal(_) => {
                feature_names.push(raw_names[fi].clone())
            }
            ColumnEncoder::OneHot(cats) => {
                for c in cats {
                    feature_names.push(format!("{}={}", raw_names[fi], c));
                }
            }
        }
    }

    // encode values and targets
    let mut class_names: Vec<String> = Vec::new();
    let mut targets = Vec::with_capacity(rows.len());
    let mut values: Vec<f64> = Vec::new();
    for (i, rec) in rows.iter().enumerate() {
        let line = i + data_start + 1;
        for (fi, &col) in feature_columns.iter().enumerate() {
            let cell = rec[col].trim();
            match &encoders[fi] {
                ColumnEncoder::Numeric => {
                    values.push(cell.parse::<f64>().map_err(|_| Error::MalformedRow {
                        line,
                        message: format!("column {col}: {cell:?} is not numeric"),
                    })?)
                }
                ColumnEncoder::Ordinal(levels) => {
                    let pos = levels.iter().position(|l| l == cell).ok_or_else(|| {
                        Error::MalformedRow {
                            line,
                            message: format!("column {col}: {cell:?} is not a declared ordinal level"),
                        }
                    })?;
                    values.push(pos as f64);
                }
                ColumnEncoder::OneHot(cats) => {
                    for c in cats {
                        values.push(if c == cell { 1.0 } else { 0.0 });
                    }
                }
            }
        }
        let cell = rec[target_column].trim();
        let class = match class_names.iter().position(|c| c == cell) {
            Some(p) => p,
            None => {
                class_names.push(cell.to_string());
                class_names.len() - 1
            }
        };
        targets.push(class);
    }

    let n_classes = class_names.len();
    if n_classes < 2 {
        return Err(Error::Schema("at least two target classes required".into()));
    }
    let n_features = feature_names.len();
    Ok(Dataset {
        schema: Schema {
            feature_names: raw_names,
            feature_kinds: kinds,
            target_column,
        },
        n_rows: targets.len(),
        n_features,
        values,
        targets,
        n_classes,
        feature_names,
        class_names,
        encoders,
    })
}

/// Disjoint train/test/unused row-index lists for one seeded split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitPartition {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub unused_indices: Vec<usize>,
    pub seed: u64,
}

impl SplitPartition {
    pub fn train_set(&self, n_rows: usize) -> RowSet {
        RowSet::from_indices(n_rows, &self.train_indices)
    }

    pub fn test_set(&self, n_rows: usize) -> RowSet {
        RowSet::from_indices(n_rows, &self.test_indices)
    }
}

/// Uniformly random permutation under the seed; the first 50% of rows
/// train, the next 25% test, the remainder unused.
pub fn split_train_test(d: &Dataset, seed: u64) -> Result<SplitPartition> {
    let n = d.n_rows();
    if n < 4 {
        return Err(Error::Invalid(format!("need at least 4 rows to split, have {n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);
    let n_train = n / 2;
    let n_test = n / 4;
    Ok(SplitPartition {
        train_indices: perm[..n_train].to_vec(),
        test_indices: perm[n_train..n_train + n_test].to_vec(),
        unused_indices: perm[n_train + n_test..].to_vec(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_small_numeric_file() {
        let f = write_temp("1.0,2.0,a\n3.0,4.0,b\n5.0,6.0,a\n7.0,8.0,b\n");
        let opts = LoadOptions {
            has_header: false,
            ..LoadOptions::new()
        };
        let d = load_csv(f.path(), &opts).unwrap();
        assert_eq!(d.n_rows(), 4);
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.n_classes(), 2);
        assert_eq!(d.target(0), 0);
        assert_eq!(d.target(1), 1);
        assert_eq!(d.value(2, 0), 5.0);
    }

    #[test]
    fn ordinal_levels_map_to_consecutive_integers() {
        let f = write_temp("low,x\nmedium,y\nhigh,x\nlow,y\n");
        let mut opts = LoadOptions {
            has_header: false,
            ..LoadOptions::new()
        };
        opts.kinds.insert(
            0,
            FeatureKind::Ordinal(vec!["low".into(), "medium".into(), "high".into()]),
        );
        let d = load_csv(f.path(), &opts).unwrap();
        assert_eq!(d.n_features(), 1);
        assert_eq!(
            (0..4).map(|r| d.value(r, 0)).collect::<Vec<_>>(),
            vec![0.0, 1.0, 2.0, 0.0]
        );
    }

    #[test]
    fn one_hot_roundtrip_recovers_category() {
        let f = write_temp("red,1,a\nblue,2,b\ngreen,3,a\nred,4,b\n");
        let opts = LoadOptions {
            has_header: false,
            ..LoadOptions::new()
        };
        let d = load_csv(f.path(), &opts).unwrap();
        // column 0 expands to 3 one-hot features plus 1 numeric = 4
        assert_eq!(d.n_features(), 4);
        for (r, want) in [(0, "red"), (1, "blue"), (2, "green"), (3, "red")] {
            assert_eq!(d.decode_one_hot(d.row(r), 0), Some(want));
        }
        // unknown category at predict time
        match d.encode_row(&["purple", "9"]) {
            Err(Error::UnknownCategory { .. }) => {}
            other => panic!("expected UnknownCategory, got {other:?}"),
        }
    }

    #[test]
    fn iris_file_shape() {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/iris.csv");
        let d = load_csv(&path, &LoadOptions::new()).unwrap();
        assert_eq!(d.n_rows(), 150);
        assert_eq!(d.n_features(), 4);
        assert_eq!(d.class_histogram(&d.all_rows()).iter().sum::<usize>(), 150);
    }

    #[test]
    fn malformed_row_reports_line() {
        let f = write_temp("1,2,a\n3,b\n5,6,a\n7,8,b\n");
        let opts = LoadOptions {
            has_header: false,
            ..LoadOptions::new()
        };
        match load_csv(f.path(), &opts) {
            Err(Error::MalformedRow { line: 2, .. }) => {}
            other => panic!("expected MalformedRow at line 2, got {other:?}"),
        }
    }

    #[test]
    fn empty_and_missing_rejected() {
        let f = write_temp("");
        assert!(matches!(
            load_csv(f.path(), &LoadOptions::new()),
            Err(Error::EmptyFile(_))
        ));
        let f = write_temp("1,,a\n2,3,b\n1,2,a\n3,4,b\n");
        let opts = LoadOptions {
            has_header: false,
            ..LoadOptions::new()
        };
        assert!(matches!(
            load_csv(f.path(), &opts),
            Err(Error::MissingValue { line: 1, column: 1 })
        ));
    }

    #[test]
    fn sidecar_schema_parses() {
        let f = write_temp("target_column = 0\nhas_header = false\nkind.1 = ordinal:a,b\n# comment\n");
        let opts = LoadOptions::from_sidecar(f.path()).unwrap();
        assert_eq!(opts.target_column, Some(0));
        assert!(!opts.has_header);
        assert_eq!(
            opts.kinds.get(&1),
            Some(&FeatureKind::Ordinal(vec!["a".into(), "b".into()]))
        );
    }

    #[test]
    fn split_sizes_and_determinism() {
        let values: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let targets: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let d = Dataset::from_parts(values, targets).unwrap();
        let s1 = split_train_test(&d, 17).unwrap();
        assert_eq!(s1.train_indices.len(), 50);
        assert_eq!(s1.test_indices.len(), 25);
        assert_eq!(s1.unused_indices.len(), 25);
        let s2 = split_train_test(&d, 17).unwrap();
        assert_eq!(s1, s2);

        // disjointness
        let mut all: Vec<usize> = s1
            .train_indices
            .iter()
            .chain(&s1.test_indices)
            .chain(&s1.unused_indices)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn distinct_seeds_differ() {
        let values: Vec<Vec<f64>> = (0..1000).map(|i| vec![i as f64]).collect();
        let targets: Vec<usize> = (0..1000).map(|i| i % 3).collect();
        let d = Dataset::from_parts(values, targets).unwrap();
        let a = split_train_test(&d, 1).unwrap();
        let b = split_train_test(&d, 2).unwrap();
        assert_ne!(a.train_indices, b.train_indices);
    }

    #[test]
    fn histogram_sums_and_partitions() {
        let values: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
        let targets: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let d = Dataset::from_parts(values, targets).unwrap();
        let all = d.all_rows();
        let total = d.class_histogram(&all);
        assert_eq!(total.iter().sum::<usize>(), 30);

        let part = split_train_test(&d, 5).unwrap();
        let h_train = d.class_histogram(&part.train_set(30));
        let h_test = d.class_histogram(&part.test_set(30));
        let h_unused = d.class_histogram(&RowSet::from_indices(30, &part.unused_indices));
        for c in 0..3 {
            assert_eq!(h_train[c] + h_test[c] + h_unused[c], total[c]);
        }
        assert_eq!(
            d.class_histogram(&RowSet::empty(30)),
            vec![0, 0, 0]
        );
    }

    #[test]
    fn targets_mapped_by_first_appearance() {
        let f = write_temp("1,zebra\n2,apple\n3,zebra\n4,mango\n");
        let opts = LoadOptions {
            has_header: false,
            ..LoadOptions::new()
        };
        let d = load_csv(f.path(), &opts).unwrap();
        assert_eq!(d.class_names(), &["zebra", "apple", "mango"]);
        assert_eq!(d.target(0), 0);
        assert_eq!(d.target(1), 1);
        assert_eq!(d.target(3), 2);
    }
}
