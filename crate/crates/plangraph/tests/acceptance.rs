//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use plangraph::canonical::{decode_sample, encode_sample, read_canonical, write_canonical};
use plangraph::table::{parse_table, TableFormat};
use plangraph::{prepare_all, prepare_samples};
use plangraph_core::ablation::{ablation_configs, audit_components, run_ablation};
use plangraph_core::gradcheck::check_model;
use plangraph_core::graphs::{normalize_adjacency, AdjacencySet, GraphKind};
use plangraph_core::metrics::{evaluate, weighted_sum};
use plangraph_core::model::parameter_layout;
use plangraph_core::scene::{EgoSelection, Neighborhood};
use plangraph_core::synthetic::synthetic_dataset;
use plangraph_core::train::{lr_at, Trainer};
use plangraph_core::whatif::{what_if, WhatIfScenario};
use plangraph_core::{Category, DatasetConfig, Model, ModelConfig, PreparedSample, Sample, Tensor, TrainConfig, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned tolerances.
const WS_TOL: f64 = 0.005;
const GRAPH_WEIGHT_TOL: f64 = 1e-12;
const COLUMN_SUM_TOL: f64 = 1e-12;
const ROTATION_TOL: f64 = 1e-9;
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_EPS: f64 = 3e-4;
const OVERFIT_ADE: f64 = 0.05;
const PLAN_DIFF: f64 = 1e-6;
const FEET_TOL: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn weighted_scores_row() -> Outcome {
    let ade = weighted_sum(&[
        (Category::Vehicle, 1.58),
        (Category::Pedestrian, 0.62),
        (Category::Bicyclist, 1.29),
    ])
    .unwrap();
    let fde = weighted_sum(&[
        (Category::Vehicle, 2.65),
        (Category::Pedestrian, 1.01),
        (Category::Bicyclist, 2.09),
    ])
    .unwrap();
    outcome(
        (ade - 0.96).abs() <= WS_TOL && (fde - 1.58).abs() <= WS_TOL,
        format!("WSADE {ade:.4} (0.96), WSFDE {fde:.4} (1.58)"),
    )
}

fn graph_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (mut worst_d, mut worst_v) = (0.0f64, 0.0f64);
    let mut plan_bad = 0;
    let mut cat_bad = 0;
    let mut plan_edges = 0;
    for _ in 0..1000 {
        let scene = random_scene(&mut rng, 20, false);
        let g = AdjacencySet::build(&scene.to_sample(), D_THRESHOLD, BETA_DEG);
        worst_d = worst_d.max(max_abs_diff(&g.distance, &oracle_distance(&scene)));
        worst_v = worst_v.max(max_abs_diff(&g.visibility, &oracle_visibility(&scene)));
        let p = oracle_planning(&scene);
        plan_edges += p.iter().filter(|&&b| b).count();
        plan_bad += usize::from(!planning_matches(&g.planning, &p));
        cat_bad += usize::from(!exact_match(&g.category, &oracle_category(&scene)));
    }
    outcome(
        worst_d <= GRAPH_WEIGHT_TOL && worst_v <= GRAPH_WEIGHT_TOL && plan_bad == 0 && cat_bad == 0 && plan_edges > 0,
        format!(
            "distance {worst_d:.1e}, visibility {worst_v:.1e}, planning mismatches {plan_bad} ({plan_edges} edges), category mismatches {cat_bad}"
        ),
    )
}

fn normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=20);
        let data = (0..n * n)
            .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..50.0) })
            .collect();
        let m = normalize_adjacency(&Tensor::new(vec![n, n], data).unwrap());
        for j in 0..n {
            let s: f64 = (0..n).map(|i| m.at(&[i, j])).sum();
            worst = worst.max((s - 1.0).abs());
        }
    }
    let zero_ok = (1..=8).all(|n| normalize_adjacency(&Tensor::zeros(&[n, n])) == Tensor::identity(n));
    outcome(
        worst <= COLUMN_SUM_TOL && zero_ok,
        format!("max |column sum - 1| {worst:.1e}, zero matrix -> identity: {zero_ok}"),
    )
}

fn geometric_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let mut translation_exact = true;
    let mut worst_rot = 0.0f64;
    let mut discrete_ok = true;
    for _ in 0..100 {
        let s = random_scene(&mut rng, 20, true).to_sample();
        let base = AdjacencySet::build(&s, D_THRESHOLD, BETA_DEG);
        let t = Vec2::new(rng.random_range(-1000..1000) as f64 / 1024.0 * 97.0, rng.random_range(-1000..1000) as f64 / 8.0);
        let moved = AdjacencySet::build(&s.map_positions(|p| p + t), D_THRESHOLD, BETA_DEG);
        translation_exact &= GraphKind::ALL.iter().all(|&k| base.get(k) == moved.get(k));
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let rot = AdjacencySet::build(&s.map_positions(|p| p.rotated(angle)), D_THRESHOLD, BETA_DEG);
        worst_rot = worst_rot
            .max(base.distance.max_abs_diff(&rot.distance))
            .max(base.visibility.max_abs_diff(&rot.visibility));
        discrete_ok &= base.planning == rot.planning && base.category == rot.category;
    }
    outcome(
        translation_exact && worst_rot <= ROTATION_TOL && discrete_ok,
        format!(
            "translation bitwise equal: {translation_exact}, rotation max diff {worst_rot:.1e}, discrete graphs equal: {discrete_ok}"
        ),
    )
}

fn gradient_sample() -> Sample {
    let pts = |x: f64, y: f64, vx: f64, vy: f64, from: usize, n: usize| -> Vec<Vec2> {
        (from..from + n)
            .map(|t| {
                let t = t as f64;
                Vec2::new(x + vx * t + 0.03 * t * t, y + vy * t)
            })
            .collect()
    };
    let agents = [(0.0, 0.0, 1.0, 0.1), (3.0, 1.5, 0.8, -0.2), (-1.0, 2.0, 0.2, 0.4)];
    Sample {
        agent_ids: vec![0, 1, 2],
        categories: vec![Category::Vehicle, Category::Vehicle, Category::Pedestrian],
        observed: agents.iter().map(|a| pts(a.0, a.1, a.2, a.3, 0, 6)).collect(),
        obs_mask: vec![vec![true; 6]; 3],
        future: agents.iter().map(|a| pts(a.0, a.1, a.2, a.3, 6, 4)).collect(),
        fut_mask: vec![vec![true; 4]; 3],
        ego_plan: pts(0.0, 0.0, 1.0, 0.1, 6, 4),
        frame_rate: 2.0,
        origin: Vec2::ZERO,
    }
}

fn gradient_check() -> Outcome {
    let mut cfg = ModelConfig::full(6, 4);
    cfg.channels = 8;
    cfg.categories_decoded = vec![Category::Vehicle, Category::Pedestrian];
    let model = Model::new(cfg, 1).unwrap();
    let prep = PreparedSample::new(&gradient_sample(), D_THRESHOLD, BETA_DEG).unwrap();
    let report = check_model(&model, &[&prep], GRAD_EPS, GRAD_REL_TOL).unwrap();
    let worst = report
        .params
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .unwrap();
    outcome(
        report.passed() && report.params.len() == model.params.len(),
        format!(
            "{} tensors, max rel error {:.2e} ({})",
            report.params.len(),
            report.max_rel_error(),
            worst.name
        ),
    )
}

fn synthetic_prepared() -> Vec<PreparedSample> {
    prepare_all(&synthetic_dataset(), &DatasetConfig::apollo()).unwrap()
}

fn overfit() -> (Outcome, Model) {
    let data = synthetic_prepared();
    let train = TrainConfig {
        batch_size: 1,
        max_epochs: 500,
        ..TrainConfig::apollo()
    };
    let (model, record) =
        plangraph_core::train::train(&data, ModelConfig::full(6, 6), train, &mut plangraph::wall_clock()).unwrap();
    let report = evaluate(&model, &data).unwrap();
    let last = record.epochs.last().unwrap().mean_loss;
    (
        outcome(
            report.ade < OVERFIT_ADE,
            format!("training ADE {:.4} m after 500 epochs (final loss {last:.2e})", report.ade),
        ),
        model,
    )
}

/// Moves the plan rigidly so that its endpoint enters (or leaves) the cone of
/// agent `i`. Returns the plan and whether the oracle sees a flip.
fn flipped_plan(sample: &Sample, i: usize) -> Option<Vec<Vec2>> {
    let t = sample.obs_points() - 1;
    let now = sample.observed[i][t];
    let h = now - sample.observed[i][t - 1];
    if h.norm() < 1e-3 {
        return None;
    }
    let unit = h * (1.0 / h.norm());
    let end = *sample.ego_plan.last().unwrap();
    let cone = |e: Vec2| {
        let d = e - now;
        (d.y.atan2(d.x) - h.y.atan2(h.x) + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI
    };
    let inside = |e: Vec2| cone(e).abs() <= BETA_DEG.to_radians();
    let target = if inside(end) { now - unit * 6.0 } else { now + unit * 6.0 };
    (inside(end) != inside(target)).then(|| sample.ego_plan.iter().map(|&p| p + (target - end)).collect())
}

fn plan_sensitivity(model: &Model) -> Outcome {
    let data = synthetic_dataset();
    let mut best: Option<(usize, usize, f64)> = None;
    let mut column_ok = true;
    for (k, s) in data.iter().enumerate() {
        for i in 1..s.agent_count() {
            let Some(plan) = flipped_plan(s, i) else { continue };
            let scenario = WhatIfScenario {
                sample: s.clone(),
                plans: vec![("flip".into(), plan)],
            };
            let r = what_if(&scenario, model, D_THRESHOLD, BETA_DEG).unwrap();
            let alt = &r.alternatives[0];
            column_ok &= r.base.planning_column[i] != alt.planning_column[i];
            let a = r.base.predictions.trajectories[i].as_ref().unwrap();
            let b = alt.predictions.trajectories[i].as_ref().unwrap();
            let d = a
                .iter()
                .zip(b)
                .map(|(p, q)| (p.x - q.x).abs().max((p.y - q.y).abs()))
                .fold(0.0, f64::max);
            if best.is_none_or(|(_, _, m)| d > m) {
                best = Some((k, i, d));
            }
        }
    }
    let Some((k, i, diff)) = best else {
        return outcome(false, "no agent admits a cone flip".into());
    };

    // Same scenes with the planning graph and plan fusion switched off.
    let mut cfg = ModelConfig::full(6, 6);
    cfg.enabled_graphs = vec![GraphKind::Distance, GraphKind::Visibility, GraphKind::Category];
    cfg.planning_fusion = false;
    cfg.channels = 16;
    let blind = Model::new(cfg, 5).unwrap();
    let mut blind_max = 0.0f64;
    for s in &data {
        for i in 1..s.agent_count() {
            let Some(plan) = flipped_plan(s, i) else { continue };
            let scenario = WhatIfScenario {
                sample: s.clone(),
                plans: vec![("flip".into(), plan)],
            };
            let r = what_if(&scenario, &blind, D_THRESHOLD, BETA_DEG).unwrap();
            blind_max = blind_max.max(r.alternatives[0].max_abs_diff);
            blind_max = blind_max.max(r.alternatives[0].divergence.iter().flatten().fold(0.0, |a, &b| a.max(b)));
        }
    }
    outcome(
        diff > PLAN_DIFF && column_ok && blind_max == 0.0,
        format!(
            "largest flipped-agent change {diff:.3e} m (sample {k}, agent {i}), planning column flips: {column_ok}, disabled divergence {blind_max:e}"
        ),
    )
}

fn ablation() -> Outcome {
    // Expected components per row: distance, visibility, planning, category, plan fusion, per-type decoders.
    const TABLE: [[bool; 6]; 6] = [
        [true, false, false, false, false, false],
        [true, true, false, false, false, false],
        [true, true, true, false, false, false],
        [true, true, true, true, false, false],
        [true, true, true, true, true, false],
        [true, true, true, true, true, true],
    ];
    let data = synthetic_prepared();
    let mut base = ModelConfig::full(6, 6);
    base.channels = 16;
    let train = TrainConfig {
        batch_size: 8,
        max_epochs: 60,
        ..TrainConfig::apollo()
    };
    let rows = run_ablation(&data, &data, &base, &train, &mut plangraph::wall_clock());
    let mut audit_ok = rows.len() == 6;
    for ((_, _, cfg), want) in ablation_configs(&base).iter().zip(TABLE) {
        let c = audit_components(&parameter_layout(cfg).unwrap());
        audit_ok &= [c.distance, c.visibility, c.planning, c.category, c.plan_fusion, c.category_decoders] == want;
    }
    audit_ok &= rows.iter().all(|r| r.audit_matches());
    let scores: Vec<Option<f64>> = rows.iter().map(|r| r.wsade()).collect();
    let finite = scores.iter().all(|s| s.is_some_and(f64::is_finite));
    let shown: Vec<String> = rows
        .iter()
        .zip(&scores)
        .map(|(r, s)| format!("{} {}", r.name, s.map_or("failed".to_string(), |v| format!("{v:.3}"))))
        .collect();
    outcome(
        rows.len() == 6 && finite && audit_ok,
        format!("{}; audit ok: {audit_ok}", shown.join(", ")),
    )
}

fn determinism() -> Outcome {
    let data = synthetic_prepared();
    let trace = || {
        let mut cfg = ModelConfig::full(6, 6);
        cfg.channels = 8;
        let train = TrainConfig {
            batch_size: 2,
            seed: 9,
            ..TrainConfig::apollo()
        };
        let mut t = Trainer::new(cfg, train).unwrap();
        let mut losses = Vec::new();
        while losses.len() < 10 {
            losses.extend(t.run_epoch(&data).unwrap().batch_losses);
        }
        losses.truncate(10);
        losses.iter().map(|l| l.to_bits()).collect::<Vec<u64>>()
    };
    let same = trace() == trace();
    let (a, n) = (TrainConfig::apollo(), TrainConfig::ngsim());
    let close = |x: f64, y: f64| ((x - y) / y).abs() < 1e-12;
    let schedule = close(lr_at(199, &a), 1e-3)
        && close(lr_at(200, &a), 1e-4)
        && close(lr_at(4, &n), 1e-3)
        && close(lr_at(5, &n), 1e-4);
    outcome(
        same && schedule,
        format!(
            "10-step traces bitwise equal: {same}; lr apollo 199/200: {:e}/{:e}, ngsim 4/5: {:e}/{:e}",
            lr_at(199, &a),
            lr_at(200, &a),
            lr_at(4, &n),
            lr_at(5, &n)
        ),
    )
}

/// NGSIM-style rows for a straight multi-lane road: ego in lane 2 and five
/// neighbours at fixed longitudinal offsets (feet).
fn ngsim_fixture() -> (String, Vec<(i64, f64, i32)>) {
    let vehicles: Vec<(i64, f64, i32)> = vec![
        (10, 0.0, 2),    // ego
        (11, 50.0, 3),   // adjacent lane, ahead
        (12, -89.0, 1),  // adjacent lane, just inside the band
        (13, 20.0, 4),   // two lanes away
        (14, -120.0, 2), // same lane, too far behind
        (15, 91.0, 2),   // same lane, just outside the band
    ];
    let mut text = String::from("# vehicle frame x y lane\n");
    for f in 0..100i64 {
        for &(id, offset, lane) in &vehicles {
            let x = 12.0 * lane as f64;
            let y = 500.0 + offset + 4.4 * f as f64;
            text.push_str(&format!("{id} {f} {x} {y} {lane}\n"));
        }
    }
    (text, vehicles)
}

fn data_pipeline() -> Outcome {
    // Hand conversion: 1 ft = 0.3048 m.
    let hand = "1 0 10 100 1\n1 2 10.5 104.4 1\n1 4 11 108.8 1\n2 0 -3 250 2\n2 2 -3 0.25 2\n";
    let expect = [
        (3.048, 30.48),
        (3.2004, 31.82112),
        (3.3528, 33.16224),
        (-0.9144, 76.2),
        (-0.9144, 0.0762),
    ];
    let rec = parse_table(hand, TableFormat::NgsimLike, Path::new("hand.txt")).unwrap();
    let got: Vec<Vec2> = rec.tracks.iter().flat_map(|t| t.states.iter().map(|s| s.position)).collect();
    let feet_ok = got.len() == 5
        && got
            .iter()
            .zip(expect)
            .all(|(p, (x, y))| (p.x - x).abs() <= FEET_TOL && (p.y - y).abs() <= FEET_TOL);

    let (text, vehicles) = ngsim_fixture();
    let rec = parse_table(&text, TableFormat::NgsimLike, Path::new("road.txt")).unwrap();
    let frames_ok = rec.tracks.iter().all(|t| {
        t.states.iter().map(|s| s.frame).collect::<Vec<_>>() == (0..100).step_by(2).collect::<Vec<i64>>()
    });

    let config = DatasetConfig {
        window_stride: 5,
        ..DatasetConfig::ngsim()
    };
    let samples = prepare_samples(std::slice::from_ref(&rec), &config, EgoSelection::EveryCompleteAgent).unwrap();
    // Brute-force neighbourhood in source units (feet, lane ids).
    let mut hood_ok = !samples.is_empty();
    for s in &samples {
        let ego = vehicles.iter().find(|v| v.0 == s.agent_ids[0]).unwrap();
        let mut want: Vec<i64> = vehicles
            .iter()
            .filter(|v| v.0 != ego.0 && (v.1 - ego.1).abs() <= 90.0 && (v.2 - ego.2).abs() <= 1)
            .map(|v| v.0)
            .collect();
        want.insert(0, ego.0);
        hood_ok &= s.agent_ids == want && s.frame_rate == 5.0;
    }
    let band_ok = matches!(config.neighborhood, Neighborhood::HighwayBand { lanes: 1, .. });

    let mut buf = Vec::new();
    write_canonical(&samples, &mut buf).unwrap();
    let back = read_canonical(&buf[..], Path::new("mem")).unwrap();
    let mut again = Vec::new();
    write_canonical(&back, &mut again).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let random_ok = (0..100).all(|_| {
        let mut s = random_scene(&mut rng, 8, false).to_sample();
        for row in s.observed.iter_mut().chain(s.future.iter_mut()) {
            for p in row.iter_mut().filter(|p| **p != Vec2::ZERO) {
                *p = Vec2::new(p.x * rng.random_range(1e-6..1e6), f64::from_bits(p.y.to_bits() ^ 1));
            }
        }
        let line = encode_sample(&s);
        let d = decode_sample(&line).unwrap();
        d == s && encode_sample(&d) == line
    });
    let canonical_ok = back == samples && again == buf && random_ok;

    outcome(
        feet_ok && frames_ok && hood_ok && band_ok && canonical_ok,
        format!(
            "feet->m: {feet_ok}, every 2nd frame: {frames_ok}, neighbourhood ({} samples): {hood_ok}, canonical round trip: {canonical_ok}",
            samples.len()
        ),
    )
}

fn report(id: usize, name: &str, limit: Duration, run: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = run();
    let took = start.elapsed();
    let pass = o.pass && took <= limit;
    println!(
        "[{}] {id:>2} {name}: {} ({:.1}s, limit {}s)",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        took.as_secs_f64(),
        limit.as_secs()
    );
    pass
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let mut ok = true;
    ok &= report(1, "weighted-score reproduction", secs(1), weighted_scores_row);
    ok &= report(2, "graph-builder oracle equivalence", secs(30), graph_oracles);
    ok &= report(3, "adjacency normalization", secs(5), normalization);
    ok &= report(4, "geometric invariance", secs(10), geometric_invariance);
    ok &= report(5, "end-to-end gradient check", secs(120), gradient_check);
    let mut trained = None;
    ok &= report(6, "overfit convergence", secs(300), || {
        let (o, m) = overfit();
        trained = Some(m);
        o
    });
    ok &= report(7, "plan sensitivity", secs(30), || plan_sensitivity(trained.as_ref().unwrap()));
    ok &= report(8, "ablation harness", secs(1800), ablation);
    ok &= report(9, "determinism and schedule", secs(120), determinism);
    ok &= report(10, "data pipeline", secs(10), data_pipeline);
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
