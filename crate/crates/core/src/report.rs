//! Text and CSV renderings of evaluation reports.

use crate::eval::{ConfusionMatrix, EvalReport, MetricSet, Weighting};

pub const CSV_HEADER: &str =
    "scheme,weighting,classifier,acc,prec_pos,rec_pos,f1_pos,prec_macro,rec_macro,f1_macro";

fn weighting_label(r: &EvalReport) -> &'static str {
    r.weighting.map_or("singular", Weighting::as_str)
}

fn metric_fields(m: &MetricSet) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        m.accuracy,
        m.precision_pos,
        m.recall_pos,
        m.f1_pos,
        m.precision_macro,
        m.recall_macro,
        m.f1_macro
    )
}

/// Machine-readable table, one row per arm.
pub fn reports_csv(reports: &[EvalReport]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.scheme_name,
            weighting_label(r),
            r.classifier,
            metric_fields(&r.metrics)
        ));
    }
    out
}

/// Row label such as `CNN+Stat (4 mod.)`.
pub fn arm_label(r: &EvalReport) -> String {
    let suffix = match r.weighting {
        None => String::new(),
        Some(Weighting::Statistical) => "+Stat".to_string(),
        Some(Weighting::Average) => "+Avg".to_string(),
    };
    format!(
        "{}{} ({} mod.)",
        r.classifier.display_name(),
        suffix,
        r.n_modalities
    )
}

/// Fixed-width table with positive-class and macro columns.
pub fn reports_table(reports: &[EvalReport]) -> String {
    let mut out = format!(
        "{:<22} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
        "Model", "Acc", "P(pos)", "R(pos)", "F1(pos)", "P(mac)", "R(mac)", "F1(mac)"
    );
    for r in reports {
        out.push_str(&table_row(&arm_label(r), &r.metrics));
    }
    out
}

fn table_row(label: &str, m: &MetricSet) -> String {
    format!(
        "{:<22} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3}\n",
        label,
        m.accuracy,
        m.precision_pos,
        m.recall_pos,
        m.f1_pos,
        m.precision_macro,
        m.recall_macro,
        m.f1_macro
    )
}

pub const FOLDS_CSV_HEADER: &str =
    "fold,held_out,n_test,tp,fp,fn,tn,acc,prec_pos,rec_pos,f1_pos,prec_macro,rec_macro,f1_macro";

/// Per-fold rows followed by one `pooled` row.
pub fn folds_csv(report: &EvalReport) -> String {
    let mut out = format!("{FOLDS_CSV_HEADER}\n");
    let row = |fold: &str, id: &str, n: u64, cm: &ConfusionMatrix, m: &MetricSet| {
        format!(
            "{fold},{id},{n},{},{},{},{},{}\n",
            cm.tp,
            cm.fp,
            cm.fn_,
            cm.tn,
            metric_fields(m)
        )
    };
    for (i, f) in report.folds.iter().enumerate() {
        out.push_str(&row(
            &i.to_string(),
            &f.held_out,
            f.n_test as u64,
            &f.confusion,
            &f.metrics,
        ));
    }
    out.push_str(&row(
        "pooled",
        "all",
        report.confusion.total(),
        &report.confusion,
        &report.metrics,
    ));
    out
}

pub fn folds_table(report: &EvalReport) -> String {
    let mut out = format!(
        "{:<22} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
        "Fold", "Acc", "P(pos)", "R(pos)", "F1(pos)", "P(mac)", "R(mac)", "F1(mac)"
    );
    for f in &report.folds {
        out.push_str(&table_row(&f.held_out, &f.metrics));
    }
    out.push_str(&table_row("pooled", &report.metrics));
    out
}

/// Key/value summary holding the config, weights, confusion counts and metrics.
pub fn report_text(r: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("arm = {}\n", arm_label(r)));
    out.push_str(&format!("scheme = {}\n", r.scheme_name));
    out.push_str(&format!("weighting = {}\n", weighting_label(r)));
    out.push_str(&format!("classifier = {}\n", r.classifier));
    out.push_str(&format!("threshold = {}\n", r.threshold));
    out.push_str(&format!("vote = {}\n", r.vote));
    out.push_str(&format!("seed = {}\n", r.seed));
    if let Some(w) = &r.weights {
        out.push_str(&format!("weights.provenance = {}\n", w.provenance));
        for (m, v) in &w.weights {
            out.push_str(&format!("weights.{m} = {v}\n"));
        }
    }
    let cm = &r.confusion;
    out.push_str(&format!(
        "tp = {}\nfp = {}\nfn = {}\ntn = {}\n",
        cm.tp, cm.fp, cm.fn_, cm.tn
    ));
    let m = &r.metrics;
    for (k, v) in [
        ("accuracy", m.accuracy),
        ("precision_pos", m.precision_pos),
        ("recall_pos", m.recall_pos),
        ("f1_pos", m.f1_pos),
        ("precision_macro", m.precision_macro),
        ("recall_macro", m.recall_macro),
        ("f1_macro", m.f1_macro),
    ] {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out.push_str(&format!("degenerate = {}\n", m.degenerate.join(" ")));
    if !r.single_class_modalities.is_empty() {
        out.push_str(&format!(
            "single_class_modalities = {}\n",
            r.single_class_modalities.join(" ")
        ));
    }
    if !r.folds.is_empty() {
        out.push_str(&format!("folds = {}\n", r.folds.len()));
    }
    out
}

/// Reads the confusion counts back out of [`report_text`] output.
pub fn parse_confusion(text: &str) -> Option<ConfusionMatrix> {
    let get = |key: &str| -> Option<u64> {
        text.lines()
            .filter_map(|l| l.split_once('='))
            .find(|(k, _)| k.trim() == key)
            .and_then(|(_, v)| v.trim().parse().ok())
    };
    Some(ConfusionMatrix {
        tp: get("tp")?,
        fp: get("fp")?,
        fn_: get("fn")?,
        tn: get("tn")?,
    })
}
