//! Bounded-geometry audit, optionally swept over one fixture parameter.

use super::{builtin_name, point_label, SuiteOutput, SuiteResult, Tolerances};
use crate::report::{CheckRow, Table};
use crate::scenario::Scenario;
use foliab::audit::{run_audit, AuditReport, InjectivityKind, Verdict};
use foliab::fixtures::Fixture;
use serde_json::json;
use std::collections::BTreeMap;
use std::f64::consts::PI;

pub(super) const TOLERANCES: &[(&str, f64, &str)] = &[
    ("sup_oracle", 1e-3, "closed-form sup of a tensor norm"),
    ("vanishing", 1e-6, "sup of a tensor that vanishes identically"),
    ("blowup_relative", 0.05, "relative error of a sup against its closed-form blowup"),
    ("blowup_ratio", 0.1, "relative error of the ratio of sups across the sweep"),
    ("injectivity_relative", 0.1, "relative error of an injectivity estimate"),
    ("chart_uniformity", 0.1, "relative spread of chart coefficient sups across centers"),
];

fn kind_name(k: InjectivityKind) -> &'static str {
    match k {
        InjectivityKind::Leafwise => "leafwise",
        InjectivityKind::Transverse => "transverse",
        InjectivityKind::Ambient => "ambient",
    }
}

fn enum_text<T: serde::Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

fn sup_of(r: &AuditReport, tensor: &str, order: usize) -> f64 {
    r.norms.sup(tensor, order).map(|row| row.sup_operator).unwrap_or(f64::NAN)
}

pub fn run(sc: &Scenario, base: &Fixture, _seed: u64, tol: &Tolerances) -> SuiteResult<SuiteOutput> {
    let oracle = builtin_name(sc, base);
    let runs: Vec<(String, Option<(String, f64)>)> = match sc.sweep.iter().next() {
        None => vec![(String::new(), None)],
        Some((k, vals)) => vals.iter().map(|v| (format!("@{k}={v}"), Some((k.clone(), *v)))).collect(),
    };

    let mut checks = Vec::new();
    let mut reports = Vec::new();
    let mut norms = Table::new("norms", &["sweep", "tensor", "order", "scale", "sup_operator", "sup_frobenius", "witness"]);
    let mut inj = Table::new("injectivity", &["sweep", "kind", "point", "floor", "cap", "limited_by", "inconclusive", "chart_inversion_ok"]);
    let mut singular_sups: Vec<(f64, f64)> = Vec::new();

    for (suffix, param) in &runs {
        let extra: BTreeMap<String, f64> = param.iter().cloned().collect();
        let fx = sc.load_fixture(&extra)?;
        log::info!("auditing {}{suffix}", fx.name);
        let report = run_audit(&fx, &sc.audit, sc.audit_charts)?;
        let label = suffix.trim_start_matches('@').to_string();

        for row in &report.norms.rows {
            norms.push(vec![
                label.clone().into(),
                row.tensor.clone().into(),
                row.order.into(),
                row.scale.into(),
                row.sup_operator.into(),
                row.sup_frobenius.into(),
                point_label(&row.witness).into(),
            ]);
        }
        for e in &report.injectivity {
            inj.push(vec![
                label.clone().into(),
                kind_name(e.kind).into(),
                point_label(&e.point).into(),
                e.floor.into(),
                e.cap.into(),
                enum_text(&e.limited_by).into(),
                e.inconclusive.to_string().into(),
                e.chart_inversion_ok.map(|b| b.to_string()).unwrap_or_default().into(),
            ]);
        }

        let bounded = report.verdict == Verdict::BoundedUpToSampledOrder;
        checks.push(CheckRow::new(
            format!("verdict{suffix}"),
            "covariant derivatives of T, A and curvature bounded up to the sampled order",
            if bounded { 0.0 } else { 1.0 },
            0.0,
        ));
        let failed_inversions = report.injectivity.iter().filter(|e| e.chart_inversion_ok == Some(false)).count();
        checks.push(CheckRow::new(
            format!("injectivity_ball_in_chart{suffix}"),
            "geodesic ball of the estimated radius lies in the normal chart",
            failed_inversions as f64,
            0.0,
        ));
        if let Some(cb) = &report.charts {
            if report.norms.verdict == Verdict::BoundedUpToSampledOrder {
                let spread = cb.spread_metric.iter().chain(&cb.spread_inverse).copied().fold(0.0, f64::max);
                checks.push(CheckRow::new(
                    format!("chart_bound_uniformity{suffix}"),
                    "chart coefficient sups uniform across centers",
                    spread,
                    tol.get("chart_uniformity"),
                ));
            }
        }

        match oracle {
            Some("FIX-WARP") => {
                checks.push(CheckRow::new(format!("warp_sup_t{suffix}"), "|T| = 1 on the horocycle foliation", (sup_of(&report, "T", 0) - 1.0).abs(), tol.get("sup_oracle")));
                checks.push(CheckRow::new(format!("warp_sup_a{suffix}"), "A = 0 on the horocycle foliation", sup_of(&report, "A", 0), tol.get("vanishing")));
            }
            Some("FIX-WARP-SINGULAR") => {
                let eps = fx.params.get("eps").copied().unwrap_or(f64::NAN);
                let s = sup_of(&report, "T", 0);
                checks.push(CheckRow::new(format!("singular_sup_t{suffix}"), "|T| = 1/x blows up at the edge", (s * eps - 1.0).abs(), tol.get("blowup_relative")));
                singular_sups.push((eps, s));
            }
            Some("FIX-HOPF") => {
                for e in &report.injectivity {
                    let expected = match e.kind {
                        InjectivityKind::Leafwise | InjectivityKind::Ambient => PI,
                        InjectivityKind::Transverse => PI / 2.0,
                    };
                    checks.push(CheckRow::new(
                        format!("hopf_{}_injectivity{suffix}", kind_name(e.kind)),
                        "injectivity radii of the round 3-sphere, its fibers and its base",
                        (e.floor / expected - 1.0).abs(),
                        tol.get("injectivity_relative"),
                    ));
                }
            }
            Some("FIX-PRODUCT") => {
                for e in report.injectivity.iter().filter(|e| e.kind == InjectivityKind::Ambient) {
                    checks.push(CheckRow::new(format!("product_injectivity_reaches_cap{suffix}"), "flat space has no injectivity limit", (e.cap - e.floor).abs(), 1e-12));
                }
            }
            _ => {}
        }
        reports.push(json!({ "sweep": label, "params": fx.params, "report": report }));
    }

    for w in singular_sups.windows(2) {
        let ((e0, s0), (e1, s1)) = (w[0], w[1]);
        let expected = e0 / e1;
        checks.push(CheckRow::new(
            format!("singular_blowup_ratio@eps={e0}->{e1}"),
            "sup |T| scales like 1/eps",
            (s1 / s0 / expected - 1.0).abs(),
            tol.get("blowup_ratio"),
        ));
    }

    Ok(SuiteOutput { fixture: base.name.clone(), checks, details: json!({ "runs": reports }), tables: vec![norms, inj] })
}
