//! Evaluation reports: a schema-stable JSON emission (17 significant digits,
//! infinities as strings), a sectioned CSV variant, parsing for round-trips
//! and merging, and the multi-method comparison table.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::Value;
use thiserror::Error;

pub const SCHEMA: &str = "lstp-report/1";

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub method: String,
    /// Depth the method was evaluated at (iterations or layers).
    pub depth: usize,
    /// Pooled over the whole test set.
    pub nmse_mixed_db: f64,
    /// `(snr_db, nmse_db)` in the dataset's level order.
    pub nmse_per_snr: Vec<(f64, f64)>,
    /// 1-based layer index of each convergence/histogram entry.
    pub curve_layers: Vec<usize>,
    /// Per-layer NMSE; stop models blank out layers with negligible mass.
    pub convergence: Vec<Option<f64>>,
    /// Test-averaged stop distribution (stop models only).
    pub stop_histogram: Option<Vec<f64>>,
    /// Threshold-stopping NMSE (stop models only).
    pub det_stop_nmse_db: Option<f64>,
    /// Mean layers computed under threshold stopping (stop models only).
    pub mean_layers_computed: Option<f64>,
    pub runtime_secs: f64,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed report: {0}")]
    Malformed(String),
}

/// 17 significant digits; non-finite values as quoted strings.
fn json_f64(x: f64) -> String {
    if x.is_nan() {
        "\"nan\"".into()
    } else if x == f64::INFINITY {
        "\"inf\"".into()
    } else if x == f64::NEG_INFINITY {
        "\"-inf\"".into()
    } else {
        format!("{x:.16e}")
    }
}

fn json_opt_f64(x: Option<f64>) -> String {
    match x {
        Some(v) => json_f64(v),
        None => "null".into(),
    }
}

fn snr_key(snr: f64) -> String {
    format!("{snr}")
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = String::new();
        s.push_str("{\n");
        let _ = writeln!(s, "  \"schema\": \"{SCHEMA}\",");
        let _ = writeln!(s, "  \"method\": \"{}\",", self.method);
        let _ = writeln!(s, "  \"depth\": {},", self.depth);
        let _ = writeln!(s, "  \"nmse_mixed_db\": {},", json_f64(self.nmse_mixed_db));
        s.push_str("  \"nmse_per_snr\": {");
        for (i, (snr, v)) in self.nmse_per_snr.iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            let _ = write!(s, "\"{}\": {}", snr_key(*snr), json_f64(*v));
        }
        s.push_str("},\n");
        s.push_str("  \"curve_layers\": [");
        for (i, l) in self.curve_layers.iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            let _ = write!(s, "{l}");
        }
        s.push_str("],\n");
        s.push_str("  \"convergence\": [");
        for (i, v) in self.convergence.iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            s.push_str(&json_opt_f64(*v));
        }
        s.push_str("],\n");
        match &self.stop_histogram {
            Some(h) => {
                s.push_str("  \"stop_histogram\": [");
                for (i, v) in h.iter().enumerate() {
                    if i > 0 {
                        s.push_str(", ");
                    }
                    s.push_str(&json_f64(*v));
                }
                s.push_str("],\n");
            }
            None => s.push_str("  \"stop_histogram\": null,\n"),
        }
        let _ = writeln!(
            s,
            "  \"det_stop_nmse_db\": {},",
            json_opt_f64(self.det_stop_nmse_db)
        );
        let _ = writeln!(
            s,
            "  \"mean_layers_computed\": {},",
            json_opt_f64(self.mean_layers_computed)
        );
        let _ = writeln!(s, "  \"runtime_secs\": {}", json_f64(self.runtime_secs));
        s.push_str("}\n");
        s
    }

    pub fn write_json(&self, path: &Path) -> Result<(), ReportError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str("section,summary\n");
        s.push_str("field,value\n");
        let _ = writeln!(s, "schema,{}", csv_quote(SCHEMA));
        let _ = writeln!(s, "method,{}", csv_quote(&self.method));
        let _ = writeln!(s, "depth,{}", self.depth);
        let _ = writeln!(s, "nmse_mixed_db,{}", csv_f64(Some(self.nmse_mixed_db)));
        let _ = writeln!(s, "det_stop_nmse_db,{}", csv_f64(self.det_stop_nmse_db));
        let _ = writeln!(
            s,
            "mean_layers_computed,{}",
            csv_f64(self.mean_layers_computed)
        );
        let _ = writeln!(s, "runtime_secs,{}", csv_f64(Some(self.runtime_secs)));
        s.push('\n');
        s.push_str("section,per_snr\n");
        s.push_str("snr_db,nmse_db\n");
        for (snr, v) in &self.nmse_per_snr {
            let _ = writeln!(s, "{},{}", snr_key(*snr), csv_f64(Some(*v)));
        }
        s.push('\n');
        s.push_str("section,convergence\n");
        s.push_str("layer,nmse_db\n");
        for (l, v) in self.curve_layers.iter().zip(self.convergence.iter()) {
            let _ = writeln!(s, "{l},{}", csv_f64(*v));
        }
        if let Some(h) = &self.stop_histogram {
            s.push('\n');
            s.push_str("section,stop_histogram\n");
            s.push_str("layer,mass\n");
            for (l, v) in self.curve_layers.iter().zip(h.iter()) {
                let _ = writeln!(s, "{l},{}", csv_f64(Some(*v)));
            }
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), ReportError> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn parse_json(text: &str) -> Result<EvalReport, ReportError> {
        let v: Value = serde_json::from_str(text)?;
        let obj = v
            .as_object()
            .ok_or_else(|| ReportError::Malformed("not an object".into()))?;
        let schema = obj
            .get("schema")
            .and_then(Value::as_str)
            .ok_or_else(|| ReportError::Malformed("missing schema".into()))?;
        if schema != SCHEMA {
            return Err(ReportError::Malformed(format!(
                "unsupported schema {schema}"
            )));
        }
        let method = obj
            .get("method")
            .and_then(Value::as_str)
            .ok_or_else(|| ReportError::Malformed("missing method".into()))?
            .to_string();
        let depth = obj
            .get("depth")
            .and_then(Value::as_u64)
            .ok_or_else(|| ReportError::Malformed("missing depth".into()))?
            as usize;
        let nmse_mixed_db = value_f64(
            obj.get("nmse_mixed_db")
                .ok_or_else(|| ReportError::Malformed("missing nmse_mixed_db".into()))?,
        )?;
        let mut nmse_per_snr = Vec::new();
        if let Some(map) = obj.get("nmse_per_snr").and_then(Value::as_object) {
            for (k, v) in map {
                let snr: f64 = k
                    .parse()
                    .map_err(|_| ReportError::Malformed(format!("bad snr key {k}")))?;
                nmse_per_snr.push((snr, value_f64(v)?));
            }
        }
        nmse_per_snr.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let curve_layers: Vec<usize> = obj
            .get("curve_layers")
            .and_then(Value::as_array)
            .map(|a| {
                a.iter()
                    .filter_map(Value::as_u64)
                    .map(|x| x as usize)
                    .collect()
            })
            .unwrap_or_default();
        let convergence: Vec<Option<f64>> = obj
            .get("convergence")
            .and_then(Value::as_array)
            .map(|a| {
                a.iter()
                    .map(|v| {
                        if v.is_null() {
                            Ok(None)
                        } else {
                            value_f64(v).map(Some)
                        }
                    })
                    .collect::<Result<_, _>>()
            })
            .transpose()?
            .unwrap_or_default();
        let stop_histogram = match obj.get("stop_histogram") {
            Some(Value::Null) | None => None,
            Some(Value::Array(a)) => Some(
                a.iter()
                    .map(value_f64)
                    .collect::<Result<Vec<f64>, _>>()?,
            ),
            Some(other) => {
                return Err(ReportError::Malformed(format!(
                    "bad stop_histogram: {other}"
                )))
            }
        };
        let det_stop_nmse_db = opt_value_f64(obj.get("det_stop_nmse_db"))?;
        let mean_layers_computed = opt_value_f64(obj.get("mean_layers_computed"))?;
        let runtime_secs = value_f64(
            obj.get("runtime_secs")
                .ok_or_else(|| ReportError::Malformed("missing runtime_secs".into()))?,
        )?;
        Ok(EvalReport {
            method,
            depth,
            nmse_mixed_db,
            nmse_per_snr,
            curve_layers,
            convergence,
            stop_histogram,
            det_stop_nmse_db,
            mean_layers_computed,
            runtime_secs,
        })
    }

    pub fn read_json(path: &Path) -> Result<EvalReport, ReportError> {
        Self::parse_json(&fs::read_to_string(path)?)
    }
}

fn value_f64(v: &Value) -> Result<f64, ReportError> {
    match v {
        Value::Number(n) => n
            .as_f64()
            .ok_or_else(|| ReportError::Malformed(format!("bad number {n}"))),
        Value::String(s) => match s.as_str() {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            "nan" => Ok(f64::NAN),
            other => Err(ReportError::Malformed(format!("bad real \"{other}\""))),
        },
        other => Err(ReportError::Malformed(format!("bad real {other}"))),
    }
}

fn opt_value_f64(v: Option<&Value>) -> Result<Option<f64>, ReportError> {
    match v {
        None | Some(Value::Null) => Ok(None),
        Some(v) => value_f64(v).map(Some),
    }
}

fn csv_f64(x: Option<f64>) -> String {
    match x {
        None => String::new(),
        Some(v) if v.is_nan() => "nan".into(),
        Some(v) if v == f64::INFINITY => "inf".into(),
        Some(v) if v == f64::NEG_INFINITY => "-inf".into(),
        Some(v) => format!("{v:.16e}"),
    }
}

/// RFC-style quoting: wrap fields containing commas, quotes, or newlines.
fn csv_quote(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Side-by-side comparison of several reports (one row per method).
pub fn comparison_csv(reports: &[EvalReport]) -> String {
    let mut levels: Vec<f64> = Vec::new();
    for r in reports {
        for (snr, _) in &r.nmse_per_snr {
            if !levels.iter().any(|l| l == snr) {
                levels.push(*snr);
            }
        }
    }
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut s = String::new();
    s.push_str("method,depth,nmse_mixed_db");
    for l in &levels {
        let _ = write!(s, ",nmse_snr{}_db", snr_key(*l));
    }
    s.push_str(",det_stop_nmse_db,mean_layers_computed,runtime_secs\n");
    for r in reports {
        let _ = write!(
            s,
            "{},{},{}",
            csv_quote(&r.method),
            r.depth,
            csv_f64(Some(r.nmse_mixed_db))
        );
        for l in &levels {
            let v = r
                .nmse_per_snr
                .iter()
                .find(|(snr, _)| snr == l)
                .map(|(_, v)| *v);
            let _ = write!(s, ",{}", csv_f64(v));
        }
        let _ = writeln!(
            s,
            ",{},{},{}",
            csv_f64(r.det_stop_nmse_db),
            csv_f64(r.mean_layers_computed),
            csv_f64(Some(r.runtime_secs))
        );
    }
    s
}

/// JSON array of the merged reports.
pub fn comparison_json(reports: &[EvalReport]) -> String {
    let mut s = String::from("[\n");
    for (i, r) in reports.iter().enumerate() {
        if i > 0 {
            s.push_str(",\n");
        }
        for line in r.to_json().trim_end().lines() {
            s.push_str("  ");
            s.push_str(line);
            s.push('\n');
        }
        s.pop();
    }
    s.push_str("\n]\n");
    s
}
