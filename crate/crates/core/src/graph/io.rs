//! File ingestion: transaction CSVs and pre-built generic graphs.
//!
//! Generic graph layout (all comma-separated, header rows optional):
//! - features: one row per node, `d_in` numeric columns;
//! - labels: `node_id,label`, values outside `{0,1}` read as unlabeled, nodes
//!   absent from the file are unlabeled;
//! - one edge file per relation: `src,dst`, symmetrized on load.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Adjacency, Label, MultiRelationGraph, NodeId, Relation, TransactionRecord};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Header names of the transaction CSV columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMapping {
    /// When absent, the 0-based data row number is the transaction id.
    pub txn_id: Option<String>,
    pub time: String,
    pub source: String,
    pub target: String,
    pub amount: String,
    pub location: String,
    pub txn_type: String,
    pub label: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            txn_id: None,
            time: "time".into(),
            source: "source".into(),
            target: "target".into(),
            amount: "amount".into(),
            location: "location".into(),
            txn_type: "type".into(),
            label: "label".into(),
        }
    }
}

pub fn load_transactions_csv(path: impl AsRef<Path>, schema: &ColumnMapping) -> Result<Vec<TransactionRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| csv_error(0, e))?
        .clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::SchemaError(name.to_string()))
    };
    let id_col = schema.txn_id.as_deref().map(column).transpose()?;
    let time_col = column(&schema.time)?;
    let source_col = column(&schema.source)?;
    let target_col = column(&schema.target)?;
    let amount_col = column(&schema.amount)?;
    let location_col = column(&schema.location)?;
    let type_col = column(&schema.txn_type)?;
    let label_col = column(&schema.label)?;

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 1;
        let row = row.map_err(|e| csv_error(line, e))?;
        let field = |c: usize| row.get(c).unwrap_or("");
        let txn_id = match id_col {
            Some(c) => field(c).parse::<u64>().map_err(|e| Error::ParseError {
                row: line,
                message: format!("txn_id `{}`: {e}", field(c)),
            })?,
            None => i as u64,
        };
        let time = parse_time(field(time_col)).ok_or_else(|| Error::ParseError {
            row: line,
            message: format!("time `{}`", field(time_col)),
        })?;
        let amount = field(amount_col).parse::<f64>().map_err(|e| Error::ParseError {
            row: line,
            message: format!("amount `{}`: {e}", field(amount_col)),
        })?;
        let label = field(label_col)
            .parse::<f64>()
            .ok()
            .filter(|v| v.fract() == 0.0)
            .map_or(Label::Unlabeled, |v| Label::from_code(v as i64));
        records.push(TransactionRecord {
            txn_id,
            time,
            source: field(source_col).to_string(),
            target: field(target_col).to_string(),
            amount,
            location: field(location_col).to_string(),
            txn_type: field(type_col).to_string(),
            label,
        });
    }
    Ok(records)
}

fn parse_time(raw: &str) -> Option<i64> {
    raw.parse::<i64>().ok().or_else(|| {
        raw.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite() && v.fract() == 0.0)
            .map(|v| v as i64)
    })
}

fn csv_error(row: usize, e: csv::Error) -> Error {
    Error::ParseError {
        row,
        message: e.to_string(),
    }
}

pub fn load_generic_graph(
    feature_path: impl AsRef<Path>,
    label_path: impl AsRef<Path>,
    edge_paths: &[PathBuf],
) -> Result<MultiRelationGraph> {
    if edge_paths.is_empty() {
        return Err(Error::InvalidInput("at least one edge file is required".into()));
    }
    let features = read_features(feature_path.as_ref())?;
    let n = features.rows();
    let labels = read_labels(label_path.as_ref(), n)?;
    let mut relations = Vec::with_capacity(edge_paths.len());
    for path in edge_paths {
        let edges = read_edges(path, n)?;
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("relation")
            .to_string();
        relations.push(Relation {
            name,
            adjacency: Adjacency::from_edges(n, &edges, true)?,
            symmetric: true,
        });
    }
    MultiRelationGraph::new(features, labels, relations)
}

fn open_headerless(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file))
}

/// A first row with any non-numeric field is treated as a header.
fn is_header(record: &csv::StringRecord) -> bool {
    record.iter().any(|f| f.parse::<f64>().is_err())
}

fn read_features(path: &Path) -> Result<Tensor> {
    let mut reader = open_headerless(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, rec) in reader.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| csv_error(line, e))?;
        if i == 0 && is_header(&rec) {
            continue;
        }
        let width = *cols.get_or_insert(rec.len());
        if rec.len() != width {
            return Err(Error::ParseError {
                row: line,
                message: format!("{} feature columns, expected {width}", rec.len()),
            });
        }
        for f in rec.iter() {
            data.push(f.parse::<f64>().map_err(|e| Error::ParseError {
                row: line,
                message: format!("feature `{f}`: {e}"),
            })?);
        }
        rows += 1;
    }
    Tensor::from_vec(rows, cols.unwrap_or(0), data)
}

fn read_labels(path: &Path, n: usize) -> Result<Vec<Label>> {
    let mut reader = open_headerless(path)?;
    let mut labels = vec![Label::Unlabeled; n];
    for (i, rec) in reader.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| csv_error(line, e))?;
        if i == 0 && rec.get(0).is_some_and(|f| f.parse::<u64>().is_err()) {
            continue;
        }
        let node = parse_node(rec.get(0), line, n, path)?;
        let label = rec
            .get(1)
            .and_then(|f| f.parse::<i64>().ok())
            .map_or(Label::Unlabeled, Label::from_code);
        labels[node] = label;
    }
    Ok(labels)
}

fn read_edges(path: &Path, n: usize) -> Result<Vec<(NodeId, NodeId)>> {
    let mut reader = open_headerless(path)?;
    let mut edges = Vec::new();
    let mut record = csv::StringRecord::new();
    let mut line = 0;
    while reader.read_record(&mut record).map_err(|e| csv_error(line + 1, e))? {
        line += 1;
        if line == 1 && record.get(0).is_some_and(|f| f.parse::<u64>().is_err()) {
            continue;
        }
        let a = parse_node(record.get(0), line, n, path)?;
        let b = parse_node(record.get(1), line, n, path)?;
        edges.push((a, b));
    }
    Ok(edges)
}

fn parse_node(field: Option<&str>, line: usize, n: usize, path: &Path) -> Result<NodeId> {
    let raw = field.unwrap_or("");
    let id = raw.parse::<usize>().map_err(|e| Error::ParseError {
        row: line,
        message: format!("node id `{raw}` in {}: {e}", path.display()),
    })?;
    if id >= n {
        return Err(Error::IndexError(format!(
            "{}:{line}: node {id} out of range for {n} nodes",
            path.display()
        )));
    }
    Ok(id)
}

/// Paths written by [`write_generic_graph`].
#[derive(Clone, Debug)]
pub struct GenericGraphFiles {
    pub features: PathBuf,
    pub labels: PathBuf,
    pub edges: Vec<PathBuf>,
}

/// Writes `features.csv`, `labels.csv` and one `<relation>.csv` per relation.
/// Only undirected relations round-trip exactly.
pub fn write_generic_graph(graph: &MultiRelationGraph, dir: impl AsRef<Path>) -> Result<GenericGraphFiles> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let features = dir.join("features.csv");
    write_with(&features, |w| {
        for r in 0..graph.num_nodes() {
            let row = graph.features().row(r);
            for (c, v) in row.iter().enumerate() {
                if c > 0 {
                    w.write_all(b",")?;
                }
                write!(w, "{v}")?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    })?;

    let labels = dir.join("labels.csv");
    write_with(&labels, |w| {
        writeln!(w, "node_id,label")?;
        for (v, l) in graph.labels().iter().enumerate() {
            let code = match l {
                Label::Benign => 0,
                Label::Fraud => 1,
                Label::Unlabeled => 2,
            };
            writeln!(w, "{v},{code}")?;
        }
        Ok(())
    })?;

    let mut edges = Vec::new();
    for rel in graph.relations() {
        let path = dir.join(format!("{}.csv", rel.name));
        write_with(&path, |w| {
            writeln!(w, "src,dst")?;
            for v in 0..graph.num_nodes() {
                for &u in rel.adjacency.neighbors(v) {
                    let u = u as usize;
                    if !rel.symmetric || v < u {
                        writeln!(w, "{v},{u}")?;
                    }
                }
            }
            Ok(())
        })?;
        edges.push(path);
    }
    Ok(GenericGraphFiles {
        features,
        labels,
        edges,
    })
}

fn write_with(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn transactions_round_trip_fields() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "t.csv",
            "time,source,target,amount,location,type,label\n\
             10,c1,m1,5.5,L1,pos,0\n\
             20,c2,m1,7,L2,web,1\n\
             30,c1,m2,0,L1,pos,2\n",
        );
        let recs = load_transactions_csv(&p, &ColumnMapping::default()).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].txn_id, 0);
        assert_eq!(recs[0].time, 10);
        assert_eq!(recs[0].source, "c1");
        assert_eq!(recs[0].target, "m1");
        assert_eq!(recs[0].amount, 5.5);
        assert_eq!(recs[0].location, "L1");
        assert_eq!(recs[0].txn_type, "pos");
        assert_eq!(recs[0].label, Label::Benign);
        assert_eq!(recs[1].label, Label::Fraud);
        assert_eq!(recs[2].label, Label::Unlabeled);
    }

    #[test]
    fn missing_column_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "t.csv", "time,source,target,location,type,label\n1,a,b,c,d,0\n");
        match load_transactions_csv(&p, &ColumnMapping::default()) {
            Err(Error::SchemaError(c)) => assert_eq!(c, "amount"),
            other => panic!("expected SchemaError, got {other:?}"),
        }
    }

    #[test]
    fn bad_number_reports_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "t.csv",
            "time,source,target,amount,location,type,label\n1,a,b,1,c,d,0\n2,a,b,abc,c,d,0\n",
        );
        match load_transactions_csv(&p, &ColumnMapping::default()) {
            Err(Error::ParseError { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected ParseError, got {other:?}"),
        }
    }

    #[test]
    fn generic_graph_symmetrizes_edges() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "f.csv", "1,0\n0,1\n1,1\n0,0\n");
        let l = write(dir.path(), "l.csv", "node_id,label\n0,0\n1,1\n2,5\n");
        let e = write(dir.path(), "rel.csv", "0,1\n1,2\n");
        let g = load_generic_graph(&f, &l, &[e]).unwrap();
        assert_eq!(g.num_nodes(), 4);
        assert_eq!(g.relations()[0].adjacency.neighbors(1), &[0, 2]);
        assert_eq!(g.relations()[0].name, "rel");
        assert_eq!(
            g.labels(),
            &[Label::Benign, Label::Fraud, Label::Unlabeled, Label::Unlabeled]
        );
    }

    #[test]
    fn dangling_endpoint_is_index_error() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "f.csv", "1\n0\n1\n0\n");
        let l = write(dir.path(), "l.csv", "0,0\n");
        let e = write(dir.path(), "rel.csv", "0,1\n0,9\n");
        match load_generic_graph(&f, &l, &[e]) {
            Err(Error::IndexError(msg)) => assert!(msg.contains(":2:"), "{msg}"),
            other => panic!("expected IndexError, got {other:?}"),
        }
    }
}
