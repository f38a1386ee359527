//! Line-delimited run records and reports.

use std::fmt::Write as _;

use plangraph_core::ablation::AblationRow;
use plangraph_core::metrics::MetricReport;
use plangraph_core::train::{EpochRecord, RunRecord};
use plangraph_core::whatif::{WhatIfOutcome, WhatIfReport};
use serde_json::{json, Value};

pub fn epoch_json(e: &EpochRecord) -> Value {
    json!({
        "epoch": e.epoch,
        "loss": e.mean_loss,
        "lr": e.learning_rate,
        "seconds": e.seconds,
    })
}

/// One `{"epoch","loss","lr","seconds"}` line per epoch.
pub fn run_record_jsonl(record: &RunRecord) -> String {
    let mut out = String::new();
    for e in &record.epochs {
        out.push_str(&epoch_json(e).to_string());
        out.push('\n');
    }
    out
}

pub fn metric_json(r: &MetricReport) -> Value {
    let per_category: serde_json::Map<String, Value> = r
        .per_category
        .iter()
        .map(|c| {
            (
                c.category.as_str().to_string(),
                json!({ "ade": c.ade, "fde": c.fde, "agents": c.agents }),
            )
        })
        .collect();
    let fde_at: serde_json::Map<String, Value> =
        r.fde_at_seconds.iter().map(|(s, v)| (format!("{s}s"), json!(v))).collect();
    json!({
        "ade": r.ade,
        "fde": r.fde,
        "wsade": r.wsade,
        "wsfde": r.wsfde,
        "per_category": per_category,
        "fde_at": fde_at,
        "samples": r.samples,
        "agents": r.agents,
        "excluded_agents": r.excluded_agents,
    })
}

pub fn metric_table(r: &MetricReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<12} {:>8} {:>8} {:>7}", "category", "ADE", "FDE", "agents");
    for c in &r.per_category {
        let _ = writeln!(s, "{:<12} {:>8.4} {:>8.4} {:>7}", c.category.as_str(), c.ade, c.fde, c.agents);
    }
    let _ = writeln!(s, "{:<12} {:>8.4} {:>8.4} {:>7}", "all", r.ade, r.fde, r.agents);
    if let (Some(a), Some(f)) = (r.wsade, r.wsfde) {
        let _ = writeln!(s, "{:<12} {:>8.4} {:>8.4}", "weighted", a, f);
    }
    for (sec, v) in &r.fde_at_seconds {
        let _ = writeln!(s, "FDE@{sec}s      {v:>8.4}");
    }
    let _ = writeln!(s, "samples {}  excluded agents {}", r.samples, r.excluded_agents);
    s
}

pub fn ablation_json(row: &AblationRow) -> Value {
    let c = row.components;
    let mut v = json!({
        "row": row.name,
        "distance": c.distance,
        "visibility": c.visibility,
        "planning": c.planning,
        "category": c.category,
        "plan_fusion": c.plan_fusion,
        "category_decoders": c.category_decoders,
        "audit_ok": row.audit_matches(),
    });
    match &row.outcome {
        Ok(r) => {
            v["wsade"] = json!(r.wsade);
            v["ade"] = json!(r.ade);
        }
        Err(e) => v["error"] = json!(e),
    }
    v
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mark = |b: bool| if b { "x" } else { "-" };
    let mut s = String::from("row  G_D G_V G_P G_C PGP CS   WSADE\n");
    for r in rows {
        let c = r.components;
        let score = match &r.outcome {
            Ok(m) => m.wsade.map_or_else(|| format!("ADE {:.4}", m.ade), |w| format!("{w:.4}")),
            Err(e) => format!("failed: {e}"),
        };
        let _ = writeln!(
            s,
            "{:<4} {:^3} {:^3} {:^3} {:^3} {:^3} {:^3}  {score}",
            r.name,
            mark(c.distance),
            mark(c.visibility),
            mark(c.planning),
            mark(c.category),
            mark(c.plan_fusion),
            mark(c.category_decoders),
        );
    }
    s
}

fn outcome_json(o: &WhatIfOutcome) -> Value {
    let preds: Vec<Value> = o
        .predictions
        .trajectories
        .iter()
        .map(|t| match t {
            Some(t) => json!(t.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>()),
            None => Value::Null,
        })
        .collect();
    json!({
        "plan": o.name,
        "planning_column": o.planning_column,
        "divergence": o.divergence,
        "max_abs_diff": o.max_abs_diff,
        "predictions": preds,
    })
}

pub fn whatif_jsonl(r: &WhatIfReport) -> String {
    std::iter::once(&r.base)
        .chain(&r.alternatives)
        .map(|o| outcome_json(o).to_string() + "\n")
        .collect()
}

pub fn whatif_table(r: &WhatIfReport) -> String {
    let mut s = String::new();
    let fmt_col = |c: &[f64]| c.iter().map(|v| format!("{v:.0}")).collect::<Vec<_>>().join(" ");
    let _ = writeln!(s, "{:<16} {:<24} {:>12}", "plan", "planning column", "max |diff|");
    for o in std::iter::once(&r.base).chain(&r.alternatives) {
        let _ = writeln!(s, "{:<16} {:<24} {:>12.6}", o.name, fmt_col(&o.planning_column), o.max_abs_diff);
    }
    s
}
