//! CSV persistence.
//!
//! Trace files start with `dt=<s>,n=<int>,m=<int>,k=<int>` followed by one
//! row per sample, `t,x0..,u0..,d0..`. A row with `t = 0` starts a new trace.
//! Snapshot files start with the column header `y,x0..,d0..,weight`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Label, Sample, Snapshot, Trace, TraceError};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TraceSchema {
    pub dt: f64,
    pub n: usize,
    pub m: usize,
    pub k: usize,
}

impl TraceSchema {
    fn header(&self) -> String {
        format!("dt={},n={},m={},k={}", self.dt, self.n, self.m, self.k)
    }

    fn parse_header(line: &str) -> Result<Self, TraceError> {
        let mut dt = None;
        let (mut n, mut m, mut k) = (None, None, None);
        for field in line.trim().split(',') {
            let (key, value) = field.split_once('=').ok_or(TraceError::MissingHeader)?;
            let bad = || TraceError::Schema(format!("bad header field `{field}`"));
            match key.trim() {
                "dt" => dt = Some(value.trim().parse::<f64>().map_err(|_| bad())?),
                "n" => n = Some(value.trim().parse::<usize>().map_err(|_| bad())?),
                "m" => m = Some(value.trim().parse::<usize>().map_err(|_| bad())?),
                "k" => k = Some(value.trim().parse::<usize>().map_err(|_| bad())?),
                _ => return Err(bad()),
            }
        }
        match (dt, n, m, k) {
            (Some(dt), Some(n), Some(m), Some(k)) if dt > 0.0 => Ok(Self { dt, n, m, k }),
            _ => Err(TraceError::MissingHeader),
        }
    }

    fn columns(&self) -> usize {
        1 + self.n + self.m + self.k
    }
}

/// Reads every trace in `path`, checking that the file's header agrees with
/// `expected` when given.
pub fn load_traces(path: &Path, expected: Option<TraceSchema>) -> Result<Vec<Trace>, TraceError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let schema = match lines.next() {
        Some((_, line)) if line.starts_with("dt=") => TraceSchema::parse_header(line)?,
        _ => return Err(TraceError::MissingHeader),
    };
    if let Some(exp) = expected {
        if (exp.n, exp.m, exp.k) != (schema.n, schema.m, schema.k) {
            return Err(TraceError::Schema(format!(
                "file declares n={},m={},k={}, expected n={},m={},k={}",
                schema.n, schema.m, schema.k, exp.n, exp.m, exp.k
            )));
        }
    }
    let mut traces = Vec::new();
    let mut current: Vec<Sample> = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let values = parse_row(line, idx + 1)?;
        if values.len() != schema.columns() {
            return Err(TraceError::Schema(format!(
                "line {} has {} columns, expected {}",
                idx + 1,
                values.len(),
                schema.columns()
            )));
        }
        if values[0] == 0.0 && !current.is_empty() {
            traces.push(Trace::new(schema.dt, std::mem::take(&mut current))?);
        }
        let (n, m) = (schema.n, schema.m);
        current.push(Sample {
            x: values[1..1 + n].to_vec(),
            u: values[1 + n..1 + n + m].to_vec(),
            d: values[1 + n + m..].to_vec(),
        });
    }
    if !current.is_empty() {
        traces.push(Trace::new(schema.dt, current)?);
    }
    Ok(traces)
}

pub fn save_traces(traces: &[Trace], schema: TraceSchema, path: &Path) -> Result<(), TraceError> {
    let mut out = schema.header();
    out.push('\n');
    for (ti, trace) in traces.iter().enumerate() {
        if trace.dims() != (schema.n, schema.m, schema.k) || trace.dt() != schema.dt {
            return Err(TraceError::Schema(format!("trace {ti} does not match the schema")));
        }
        for (si, s) in trace.samples().iter().enumerate() {
            let t = si as f64 * trace.dt();
            write!(out, "{t}").unwrap();
            for &v in s.x.iter().chain(&s.u).chain(&s.d) {
                if !v.is_finite() {
                    return Err(TraceError::NonFiniteWrite { trace: ti, sample: si, value: v });
                }
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn save_snapshots(snapshots: &[Snapshot], n: usize, k: usize, path: &Path) -> Result<(), TraceError> {
    let mut out = String::from("y");
    for i in 0..n {
        write!(out, ",x{i}").unwrap();
    }
    for i in 0..k {
        write!(out, ",d{i}").unwrap();
    }
    out.push_str(",weight\n");
    for (si, s) in snapshots.iter().enumerate() {
        if s.x.len() != n || s.d.len() != k {
            return Err(TraceError::Schema(format!("snapshot {si} does not match n={n}, k={k}")));
        }
        write!(out, "{}", s.y.sign() as i32).unwrap();
        for &v in s.x.iter().chain(&s.d).chain(std::iter::once(&s.weight)) {
            if !v.is_finite() {
                return Err(TraceError::NonFiniteWrite { trace: 0, sample: si, value: v });
            }
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_snapshots(path: &Path) -> Result<Vec<Snapshot>, TraceError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let header = match lines.next() {
        Some((_, h)) if h.starts_with("y,") => h,
        _ => return Err(TraceError::MissingHeader),
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let n = cols.iter().filter(|c| c.starts_with('x')).count();
    let k = cols.iter().filter(|c| c.starts_with('d')).count();
    if cols.len() != n + k + 2 || cols.last() != Some(&"weight") {
        return Err(TraceError::Schema(format!("unexpected snapshot header `{header}`")));
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let values = parse_row(line, idx + 1)?;
        if values.len() != cols.len() {
            return Err(TraceError::Schema(format!(
                "line {} has {} columns, expected {}",
                idx + 1,
                values.len(),
                cols.len()
            )));
        }
        let y = Label::from_sign(values[0]).ok_or_else(|| TraceError::MalformedRow {
            line: idx + 1,
            message: format!("label must be 1 or -1, got {}", values[0]),
        })?;
        let weight = values[n + k + 1];
        if !(weight > 0.0) {
            return Err(TraceError::MalformedRow {
                line: idx + 1,
                message: "weight must be positive".into(),
            });
        }
        out.push(Snapshot {
            x: values[1..1 + n].to_vec(),
            d: values[1 + n..1 + n + k].to_vec(),
            y,
            weight,
        });
    }
    Ok(out)
}

fn parse_row(line: &str, line_no: usize) -> Result<Vec<f64>, TraceError> {
    line.split(',')
        .map(|f| {
            f.trim().parse::<f64>().map_err(|e| TraceError::MalformedRow {
                line: line_no,
                message: format!("`{f}`: {e}"),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_trace(offset: f64) -> Trace {
        let samples = (0..3)
            .map(|i| Sample {
                x: vec![offset + i as f64 * 0.1],
                u: vec![-0.25],
                d: vec![1.0 / 3.0],
            })
            .collect();
        Trace::new(0.1, samples).unwrap()
    }

    const SCHEMA: TraceSchema = TraceSchema { dt: 0.1, n: 1, m: 1, k: 1 };

    #[test]
    fn three_row_file_gives_one_trace() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        fs::write(&p, "dt=0.1,n=1,m=1,k=1\n0,1,2,3\n0.1,1.5,2,3\n0.2,2,2,3\n").unwrap();
        let traces = load_traces(&p, Some(SCHEMA)).unwrap();
        assert_eq!(traces.len(), 1);
        assert_eq!(traces[0].len(), 3);
        assert_eq!(traces[0].sample(1).x, vec![1.5]);
    }

    #[test]
    fn wrong_column_count_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        fs::write(&p, "dt=0.1,n=1,m=1,k=1\n0,1,2\n").unwrap();
        assert!(matches!(load_traces(&p, None), Err(TraceError::Schema(_))));
    }

    #[test]
    fn missing_header_and_bad_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        fs::write(&p, "0,1,2,3\n").unwrap();
        assert!(matches!(load_traces(&p, None), Err(TraceError::MissingHeader)));
        fs::write(&p, "dt=0.1,n=1,m=1,k=1\n0,1,zz,3\n").unwrap();
        assert!(matches!(load_traces(&p, None), Err(TraceError::MalformedRow { .. })));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let traces = vec![tiny_trace(0.1), tiny_trace(-7.3e-5)];
        save_traces(&traces, SCHEMA, &p).unwrap();
        let back = load_traces(&p, Some(SCHEMA)).unwrap();
        assert_eq!(back, traces);
    }

    #[test]
    fn empty_list_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        save_traces(&[], SCHEMA, &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "dt=0.1,n=1,m=1,k=1\n");
        assert!(load_traces(&p, None).unwrap().is_empty());
    }

    #[test]
    fn non_finite_value_refuses_to_write() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let bad = Trace::new(
            0.1,
            vec![Sample { x: vec![f64::INFINITY], u: vec![0.0], d: vec![0.0] }],
        )
        .unwrap();
        assert!(matches!(
            save_traces(&[bad], SCHEMA, &p),
            Err(TraceError::NonFiniteWrite { .. })
        ));
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let snaps = vec![
            Snapshot { x: vec![1.0, 2.0], d: vec![0.5], y: Label::Positive, weight: 1.0 },
            Snapshot { x: vec![-1.0, 0.1], d: vec![-0.5], y: Label::Negative, weight: 2.5 },
        ];
        save_snapshots(&snaps, 2, 1, &p).unwrap();
        assert_eq!(load_snapshots(&p).unwrap(), snaps);
    }
}
