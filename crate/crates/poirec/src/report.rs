//! Line-delimited JSON records written by the commands.

use serde_json::{json, Map, Value};

use poirec_core::eval::MetricsReport;
use poirec_core::gradcheck::{GradcheckReport, TensorCheck};
use poirec_core::training::EpochRecord;

pub fn epoch_line(r: &EpochRecord) -> String {
    json!({
        "epoch": r.epoch,
        "l_f": r.loss.l_f,
        "l_c": r.loss.l_c,
        "l_ind_g": r.loss.l_ind_g,
        "l_ind_f": r.loss.l_ind_f,
        "total": r.loss.total,
        "val_recall20": r.val_recall,
        "wall_secs": r.wall_secs,
    })
    .to_string()
}

/// Evaluation outcome plus the context needed to reproduce it.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub variant: String,
    pub config_hash: String,
    pub report: MetricsReport,
    pub functional_ndcg20: Option<f64>,
    pub val_recall20: f64,
}

impl MetricsRecord {
    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("variant".into(), json!(self.variant));
        m.insert("scorer".into(), json!(self.report.scorer));
        m.insert("seed".into(), json!(self.report.seed));
        m.insert("config_hash".into(), json!(self.config_hash));
        m.insert("n_users_evaluated".into(), json!(self.report.n_users_evaluated));
        for (k, v) in &self.report.recall {
            m.insert(format!("recall@{k}"), json!(v));
        }
        for (k, v) in &self.report.ndcg {
            m.insert(format!("ndcg@{k}"), json!(v));
        }
        m.insert("auc".into(), json!(self.report.auc));
        m.insert("val_recall@20".into(), json!(self.val_recall20));
        if let Some(f) = self.functional_ndcg20 {
            m.insert("functional_ndcg@20".into(), json!(f));
        }
        Value::Object(m)
    }

    pub fn line(&self) -> String {
        self.to_json().to_string()
    }
}

fn tensor_json(t: &TensorCheck) -> Value {
    json!({
        "tensor": t.name,
        "max_rel_err": t.max_rel_err,
        "worst_row": t.worst_row,
        "worst_col": t.worst_col,
        "analytic": t.analytic,
        "numeric": t.numeric,
    })
}

/// One line per tensor, then a summary line.
pub fn gradcheck_lines(r: &GradcheckReport) -> String {
    let mut out = String::new();
    for t in &r.tensors {
        out.push_str(&tensor_json(t).to_string());
        out.push('\n');
    }
    let summary = json!({
        "result": if r.passed { "PASS" } else { "FAIL" },
        "max_rel_err": r.max_rel_err,
        "worst_tensor": r.worst().name,
        "tolerance": r.tolerance,
        "step": r.step,
    });
    out.push_str(&summary.to_string());
    out.push('\n');
    out
}
