//! Cover by normal chart neighbourhoods and its partition of unity.

use super::{builtin_name, point_label, random_point, SuiteOutput, SuiteResult, Tolerances};
use crate::report::{CheckRow, Table};
use crate::scenario::{Scenario, ScenarioError};
use foliab::audit::{build_cover, partition_of_unity};
use foliab::fixtures::Fixture;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub(super) const TOLERANCES: &[(&str, f64, &str)] = &[
    ("partition_sum", 1e-9, "weights sum to one"),
    ("support", 1e-12, "weight outside the double neighbourhood"),
    ("gradient_ratio", 10.0, "max/min ratio of per-chart weight gradient bounds"),
    ("packing_multiplicity", 9.0, "multiplicity bound expected for a grid-like packing of the plane"),
];

const GRADIENT_STEP: f64 = 1e-4;

pub fn run(sc: &Scenario, fx: &Fixture, seed: u64, tol: &Tolerances) -> SuiteResult<SuiteOutput> {
    let m = &fx.field;
    let region = match (&sc.cover.region, &sc.region) {
        (Some(r), _) | (None, Some(r)) => r.clone(),
        (None, None) => sc.sampling_region(fx),
    };
    if region.dim() != m.dim {
        return Err(ScenarioError::Parse { key: "cover.region".into(), message: format!("box has dimension {} but the fixture has {}", region.dim(), m.dim) }.into());
    }
    let region = region.intersect(&m.domain);
    let r1 = sc.cover.packing_radius;
    log::info!("building cover of {} with r1 = {r1}", fx.name);
    let cover = build_cover(m, &region, r1, &sc.cover.config)?;
    let pu = partition_of_unity(&cover);
    let (rt2, rl2) = (2.0 * cover.r_transverse, 2.0 * cover.r_leafwise);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum_err = 0.0f64;
    let mut support = 0.0f64;
    let mut excess = 0usize;
    let mut observed = 0usize;
    let mut uncovered = 0usize;
    for _ in 0..sc.cover.partition_points {
        let y = random_point(&mut rng, &region);
        let inside: Vec<bool> = cover.charts.iter().map(|t| t.contains(&y, rt2, rl2)).collect();
        let count = inside.iter().filter(|b| **b).count();
        observed = observed.max(count);
        excess = excess.max(count.saturating_sub(cover.multiplicity));
        match pu.weights(&y) {
            Ok(w) => {
                sum_err = sum_err.max((w.iter().sum::<f64>() - 1.0).abs());
                for (wi, ins) in w.iter().zip(&inside) {
                    if !ins {
                        support = support.max(wi.abs());
                    }
                }
            }
            Err(foliab::Error::Uncovered { .. }) => uncovered += 1,
            Err(e) => return Err(e.into()),
        }
    }

    let grads = pu.gradient_bounds(m, &region.lattice(&[sc.cover.gradient_lattice]), GRADIENT_STEP)?;
    let active: Vec<f64> = grads.iter().copied().filter(|g| *g > 0.0).collect();
    let gmax = active.iter().copied().fold(0.0, f64::max);
    let gmin = active.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio = if active.is_empty() { f64::NAN } else { gmax / gmin };

    let mut checks = vec![
        CheckRow::new("cover_coverage", "neighbourhoods of a maximal packing cover the region", 1.0 - cover.coverage, 0.0),
        CheckRow::new("partition_uncovered_points", "every query point lies in some double neighbourhood", uncovered as f64, 0.0),
        CheckRow::new("partition_sum", "weights form a partition of unity", sum_err, tol.get("partition_sum")),
        CheckRow::new("partition_support", "each weight supported in its double neighbourhood", support, tol.get("support")),
        CheckRow::new("multiplicity_bound", "overlap count of double neighbourhoods bounded by N", excess as f64, 0.0),
        CheckRow::new(
            "multiplicity_volume_bound",
            "N within the ball-volume ratio bound",
            (cover.multiplicity as f64 - cover.volume_ratio).max(0.0),
            0.0,
        ),
        CheckRow::new("gradient_uniformity", "weight derivatives uniformly bounded across charts", ratio, tol.get("gradient_ratio")),
    ];
    if builtin_name(sc, fx) == Some("FIX-PRODUCT") {
        checks.push(CheckRow::new(
            "product_packing_multiplicity",
            "Euclidean packing bound on the multiplicity of the flat cover",
            cover.multiplicity as f64,
            tol.get("packing_multiplicity"),
        ));
    }

    let mut centers = Table::new("centers", &["index", "center", "gradient_bound"]);
    for (i, (c, g)) in cover.centers.iter().zip(&grads).enumerate() {
        centers.push(vec![i.into(), point_label(c).into(), (*g).into()]);
    }

    Ok(SuiteOutput {
        fixture: fx.name.clone(),
        checks,
        details: json!({
            "region": region,
            "cover": cover,
            "partition_points": sc.cover.partition_points,
            "observed_multiplicity_at_queries": observed,
            "gradient_bounds": { "max": gmax, "min": gmin },
        }),
        tables: vec![centers],
    })
}
