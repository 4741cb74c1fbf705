//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero on any failure.
//!
//! ```text
//! cargo test -p sidewalk-core --test acceptance            # everything (the campaign takes ~40 min on one core)
//! cargo test -p sidewalk-core --test acceptance -- geo     # criteria whose name contains "geo"
//! ```

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use sidewalk::active::campaign::fresh_model;
use sidewalk::active::{run_campaign, select_by_uncertainty, BudgetSchedule, CampaignConfig, CampaignRun, Strategy};
use sidewalk::evaluation::{compute_metrics, mean_iou, ConfusionMatrix};
use sidewalk::geo::sphere::{haversine_m, EARTH_RADIUS_M};
use sidewalk::geo::{
    bearing_and_headings, export_geojson, CameraParams, plan_captures, sample_points, write_geojson, CameraVariation, ExportStyle,
    SegmentSummary, StreetSegment,
};
use sidewalk::imagery::{generate_synthetic_pool, ClassMix, SplitFractions, SyntheticPool, SyntheticSceneSpec};
use sidewalk::model::{fuse_backward, fuse_pair, fuse_values, AttentionMap, Backbone, FusedScoreMap, ModelConfig, ScoreMap, SegmentationModel};
use sidewalk::pool::MaskSlot;
use sidewalk::review::{EnqueueItem, ManualClock, ReviewConfig, ReviewQueue, TaskStatus};
use sidewalk::training::{evaluate_split, train_stage, DefaultModel, ImageSource, MemoryImages, TrainConfig};
use sidewalk::active::UncertaintyMap;
use sidewalk::{CaptureSide, ClassId, DatasetPool, ImageRecord, LabelTaxonomy, MaskImage, Provenance, Split, Tensor3};

/// Outcome of one criterion: `Ok(detail)` passes, `Err(detail)` fails.
type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------------------------
// Table-1 aggregation

fn table_aggregation() -> Outcome {
    let published = [
        ("concrete", 88.69),
        ("brick", 91.79),
        ("granite/bluestone", 81.09),
        ("asphalt", 92.58),
        ("mixed", 86.11),
        ("granite block/stone", 82.92),
        ("hexagonal asphalt paver", 92.81),
        ("cobblestone", 90.95),
        ("road", 99.01),
        ("background", 99.16),
    ];
    let taxonomy = LabelTaxonomy::canonical();
    let mut per_class = vec![None; taxonomy.len()];
    for (name, iou) in published {
        let id = taxonomy.id_of(name).ok_or(format!("{name} missing from canonical taxonomy"))?;
        per_class[id.index()] = Some(iou);
    }
    let (all, materials) = mean_iou(&per_class, &taxonomy);
    let (all, materials) = (all.unwrap_or(f64::NAN), materials.unwrap_or(f64::NAN));
    check(
        (all - 90.51).abs() <= 0.01 && (materials - 88.37).abs() <= 0.01,
        format!("mIoU {all:.4} (want 90.51 ± 0.01), materials {materials:.4} (want 88.37 ± 0.01)"),
    )
}

// ---------------------------------------------------------------------------------------------
// Metric oracle

fn metric_oracle() -> Outcome {
    let taxonomy = LabelTaxonomy::canonical();
    let k = taxonomy.len();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for trial in 0..1000 {
        let (w, h) = (rng.random_range(1..=8), rng.random_range(1..=8));
        // Few classes per trial so absent classes and empty denominators come up often.
        let used = rng.random_range(1..=k);
        let draw = |rng: &mut ChaCha8Rng| (0..w * h).map(|_| rng.random_range(0..used) as u8).collect::<Vec<_>>();
        let (p, t) = (draw(&mut rng), draw(&mut rng));
        let pred = MaskImage::from_pixels(w, h, p.clone(), Provenance::ModelPrediction).map_err(|e| e.to_string())?;
        let truth = MaskImage::from_pixels(w, h, t.clone(), Provenance::HumanRefined).map_err(|e| e.to_string())?;
        let mut cm = ConfusionMatrix::new(k);
        cm.accumulate(&pred, &truth).map_err(|e| e.to_string())?;
        let report = compute_metrics(&cm, &taxonomy).map_err(|e| e.to_string())?;

        let mut counts = vec![vec![0u64; k]; k];
        for (&pp, &tt) in p.iter().zip(&t) {
            counts[tt as usize][pp as usize] += 1;
        }
        if cm.rows() != counts {
            return Err(format!("trial {trial}: confusion counts differ"));
        }
        let mut ious = Vec::new();
        for c in 0..k {
            let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
            for (&pp, &tt) in p.iter().zip(&t) {
                let (pc, tc) = (pp as usize == c, tt as usize == c);
                tp += (pc && tc) as u64;
                fp += (pc && !tc) as u64;
                fn_ += (!pc && tc) as u64;
            }
            let frac = |n: u64, d: u64| (d > 0).then(|| n as f64 / d as f64);
            let want = [frac(tp, tp + fp + fn_), frac(tp, tp + fp), frac(tp, tp + fn_)];
            let m = &report.per_class[c];
            for (got, want) in [m.iou, m.precision, m.recall].into_iter().zip(want) {
                match (got, want) {
                    (None, None) => {}
                    (Some(g), Some(w)) => worst = worst.max((g - w).abs()),
                    _ => return Err(format!("trial {trial} class {c}: defined/undefined mismatch")),
                }
            }
            if m.truth_pixels != tp + fn_ || m.predicted_pixels != tp + fp {
                return Err(format!("trial {trial} class {c}: pixel counts differ"));
            }
            ious.push(want[0]);
        }
        let present: Vec<f64> = ious.iter().flatten().copied().collect();
        let want_all = present.iter().sum::<f64>() / present.len() as f64;
        let mats: Vec<f64> = (0..k)
            .filter(|&c| taxonomy.is_material(ClassId(c as u8)))
            .filter_map(|c| ious[c])
            .collect();
        let want_mat = (!mats.is_empty()).then(|| mats.iter().sum::<f64>() / mats.len() as f64);
        worst = worst.max((report.miou_all - want_all).abs());
        match (report.miou_materials, want_mat) {
            (None, None) => {}
            (Some(g), Some(w)) => worst = worst.max((g - w).abs()),
            _ => return Err(format!("trial {trial}: materials mIoU defined/undefined mismatch")),
        }
    }
    check(worst <= 1e-12, format!("1000 pairs, exact counts, max metric error {worst:.1e}"))
}

// ---------------------------------------------------------------------------------------------
// Fusion

fn random_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize, lo: f32, hi: f32) -> Tensor3 {
    let data = (0..c * h * w).map(|_| rng.random_range(lo..hi)).collect();
    Tensor3::from_vec(c, h, w, data).unwrap()
}

/// `Σ w·g` in f64 for a fixed random weighting `w` of the fused output.
fn weighted_sum(h_low: &Tensor3, a: &Tensor3, h_high: &Tensor3, w: &Tensor3) -> f64 {
    let g = fuse_values(h_low, a, h_high).unwrap();
    g.data.iter().zip(&w.data).map(|(g, w)| f64::from(*g) * f64::from(*w)).sum()
}

fn fusion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut notes = Vec::new();

    // Identities.
    for _ in 0..20 {
        let (c, h, w) = (rng.random_range(1..6), rng.random_range(1..9), rng.random_range(1..9));
        let low = ScoreMap {
            values: random_tensor(&mut rng, c, h, w, -5.0, 5.0),
            scale: 0.5,
        };
        let high = ScoreMap {
            values: random_tensor(&mut rng, c, h, w, -5.0, 5.0),
            scale: 1.0,
        };
        for (fill, want) in [(1.0, &low.values), (0.0, &high.values)] {
            let a = AttentionMap {
                weights: Tensor3::filled(1, h, w, fill),
                scale: 0.5,
            };
            let g = fuse_pair(&low, &a, &high).map_err(|e| e.to_string())?;
            let bitwise = g.values.data.iter().zip(&want.data).all(|(x, y)| x.to_bits() == y.to_bits());
            if !bitwise {
                return Err(format!("a ≡ {fill} does not reproduce its head bit for bit"));
            }
        }
    }
    notes.push("a≡1/a≡0 bitwise".to_string());

    // Three-scale predict against nested pairwise fusion.
    let materials = ["concrete", "brick", "asphalt", "mixed"];
    let taxonomy = LabelTaxonomy::with_materials(&materials).unwrap();
    let syn = generate_synthetic_pool(&SyntheticSceneSpec::new(3, taxonomy.clone()), 30, &ClassMix::uniform(&materials))
        .map_err(|e| e.to_string())?;
    let scales = [0.5, 1.0, 2.0];
    let mut config = ModelConfig::new(taxonomy.len());
    config.inference_scales = scales.to_vec();
    let model: SegmentationModel = SegmentationModel::new(config).map_err(|e| e.to_string())?;
    let mut nested_err = 0.0f32;
    for id in syn.pool.ids_in(Split::Test).iter().take(5) {
        let image = syn.images.image(id).map_err(|e| e.to_string())?;
        let out: Vec<_> = scales.iter().map(|&s| model.forward_single_scale(&image, s).unwrap()).collect();
        let inner: FusedScoreMap = fuse_pair(&out[1].scores, &out[1].attention, &out[2].scores).unwrap();
        let inner = ScoreMap {
            values: inner.values,
            scale: 1.0,
        };
        let outer = fuse_pair(&out[0].scores, &out[0].attention, &inner).unwrap();
        let p = model.predict(&image, &scales).map_err(|e| e.to_string())?;
        for (x, y) in outer.values.data.iter().zip(&p.fused.values.data) {
            nested_err = nested_err.max((x - y).abs());
        }
    }
    if nested_err > 1e-6 {
        return Err(format!("3-scale predict differs from nested fusion by {nested_err:.2e}"));
    }
    notes.push(format!("3-scale nested |Δ| {nested_err:.1e}"));

    // Gradients against central differences. Relative error uses max(|analytic|, |numeric|, 1)
    // as the denominator so vanishing gradients are judged on an absolute scale.
    let eps = 1e-2f32;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (c, h, w) = (rng.random_range(1..4), rng.random_range(1..5), rng.random_range(1..5));
        let a_channels = if rng.random_bool(0.5) { 1 } else { c };
        let h_low = random_tensor(&mut rng, c, h, w, -2.0, 2.0);
        let h_high = random_tensor(&mut rng, c, h, w, -2.0, 2.0);
        let a = random_tensor(&mut rng, a_channels, h, w, 0.05, 0.95);
        let weight = random_tensor(&mut rng, c, h, w, -1.0, 1.0);
        let grads = fuse_backward(&h_low, &a, &h_high, &weight).map_err(|e| e.to_string())?;
        let inputs = [(&h_low, &grads.h_low), (&a, &grads.attention), (&h_high, &grads.h_high)];
        for (which, (input, analytic)) in inputs.into_iter().enumerate() {
            for i in 0..input.data.len() {
                let eval = |delta: f32| {
                    let mut t = [h_low.clone(), a.clone(), h_high.clone()];
                    t[which].data[i] += delta;
                    weighted_sum(&t[0], &t[1], &t[2], &weight)
                };
                let numeric = (eval(eps) - eval(-eps)) / (2.0 * f64::from(eps));
                let an = f64::from(analytic.data[i]);
                let rel = (an - numeric).abs() / an.abs().max(numeric.abs()).max(1.0);
                worst = worst.max(rel);
            }
        }
    }
    notes.push(format!("50 gradient checks, max rel err {worst:.1e}"));
    check(worst <= 1e-4, notes.join("; "))
}

// ---------------------------------------------------------------------------------------------
// Margin-sampling oracle

fn margin_oracle() -> Outcome {
    let materials = ["concrete", "brick", "asphalt", "mixed"];
    let taxonomy = LabelTaxonomy::with_materials(&materials).unwrap();
    let spec = SyntheticSceneSpec {
        splits: SplitFractions {
            train: 0.2,
            validation: 0.1,
            test: 0.1,
        },
        ..SyntheticSceneSpec::new(4, taxonomy.clone())
    };
    let syn = generate_synthetic_pool(&spec, 165, &ClassMix::uniform(&materials)).map_err(|e| e.to_string())?;
    let n = syn.pool.count(Split::Unlabeled);
    let mut model: SegmentationModel = SegmentationModel::new(ModelConfig::new(taxonomy.len())).unwrap();
    let config = TrainConfig {
        epochs_per_stage: 2,
        ..TrainConfig::desk()
    };
    train_stage(&mut model, &syn.pool, &syn.images, &config, 1, 0).map_err(|e| e.to_string())?;
    let scales = model.config().inference_scales.clone();
    let ranked = select_by_uncertainty(&model, &syn.pool, &syn.images, n, &scales).map_err(|e| e.to_string())?;

    // Oracle: full softmax per pixel in f64, sort the probabilities, take the top-two gap,
    // minimum over the image, `1 − min`; rank by value descending, ties by id ascending.
    let mut oracle = Vec::new();
    let mut max_dev = 0.0f64;
    for id in syn.pool.ids_in(Split::Unlabeled) {
        let image = syn.images.image(&id).unwrap();
        let scores = model.predict(&image, &scales).unwrap().fused.values;
        let plane = scores.plane_len();
        let mut min_margin = f64::INFINITY;
        for i in 0..plane {
            let logits: Vec<f64> = (0..scores.channels).map(|c| f64::from(scores.data[c * plane + i])).collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
            let mut p: Vec<f64> = logits.iter().map(|l| (l - max).exp() / z).collect();
            p.sort_by(|a, b| b.total_cmp(a));
            min_margin = min_margin.min(p[0] - p[1]);
        }
        oracle.push((id, 1.0 - min_margin));
    }
    oracle.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let got: HashMap<&str, f64> = ranked.iter().map(|s| (s.image_id.as_str(), s.uncertainty)).collect();
    for (id, u) in &oracle {
        max_dev = max_dev.max((got[id.as_str()] - u).abs());
    }
    let min_gap = oracle.windows(2).map(|w| w[0].1 - w[1].1).fold(f64::INFINITY, f64::min);
    let same_order = ranked.iter().map(|s| &s.image_id).eq(oracle.iter().map(|(id, _)| id));
    check(
        same_order && n == 100,
        format!("{n} images, identical order: {same_order}, max |Δu| {max_dev:.1e}, smallest gap {min_gap:.1e}"),
    )
}

// ---------------------------------------------------------------------------------------------
// Budget schedule

fn budget() -> Outcome {
    let mut seen = Vec::new();
    for stage in 1..=10 {
        let q = BudgetSchedule::new(stage, 300).map_err(|e| e.to_string())?.quotas();
        let u = (30 * stage).min(300);
        if q != (u, 300 - u) {
            return Err(format!("stage {stage}: got {q:?}, want ({u}, {})", 300 - u));
        }
        seen.push(format!("{q:?}"));
    }
    Ok(seen.join(" "))
}

// ---------------------------------------------------------------------------------------------
// End-to-end campaign

struct SeedResult {
    full: CampaignRun<sidewalk::model::EncoderDecoder>,
    random_final: f64,
}

fn final_test(run: &CampaignRun<sidewalk::model::EncoderDecoder>) -> f64 {
    run.stages
        .last()
        .and_then(|s| s.test.as_ref())
        .and_then(|t| t.miou_materials)
        .unwrap_or(0.0)
}

fn campaign_seed(seed: u64) -> sidewalk::Result<SeedResult> {
    let materials = ["concrete", "brick", "asphalt", "mixed"];
    let taxonomy = LabelTaxonomy::with_materials(&materials)?;
    let spec = SyntheticSceneSpec {
        splits: SplitFractions {
            train: 0.12,
            validation: 0.12,
            test: 0.16,
        },
        ..SyntheticSceneSpec::new(100 + seed, taxonomy.clone())
    };
    let mix = ClassMix::weighted(&[("concrete", 6.0), ("brick", 1.0), ("asphalt", 2.0), ("mixed", 1.0)]);
    let syn = generate_synthetic_pool(&spec, 250, &mix)?;
    let mut runs = Vec::new();
    for strategy in [Strategy::Full, Strategy::Random] {
        let config = CampaignConfig {
            max_stages: 3,
            sample_size: 25,
            strategy,
            seed,
            train: TrainConfig::desk(),
            scales: Some(vec![0.5, 1.0]),
            ..CampaignConfig::default()
        };
        let clock = Arc::new(ManualClock::new(0));
        let queue = ReviewQueue::in_memory(taxonomy.clone(), ReviewConfig::default(), clock);
        let mut oracle = sidewalk::review::OracleReviewer::new("oracle", syn.truth.clone());
        let model: DefaultModel = fresh_model(&config, &syn.pool)?;
        runs.push(run_campaign(&config, syn.pool.clone(), model, &syn.images, &queue, &mut oracle, None)?);
    }
    let random = runs.pop().unwrap();
    Ok(SeedResult {
        full: runs.pop().unwrap(),
        random_final: final_test(&random),
    })
}

fn campaign() -> Outcome {
    let mut a_fail = Vec::new();
    let mut b_fail = Vec::new();
    let (mut full_sum, mut random_sum) = (0.0, 0.0);
    let seeds = 5;
    for seed in 0..seeds {
        let start = Instant::now();
        let r = campaign_seed(seed).map_err(|e| format!("seed {seed}: {e}"))?;
        let full_final = final_test(&r.full);
        let best: Vec<f64> = r.full.stages.iter().map(|s| s.best_material_miou()).collect();
        println!(
            "    seed {seed}: stages {}, full {full_final:.4}, random {:.4}, validation best per stage {:?} ({:.0?})",
            r.full.stages.len(),
            r.random_final,
            best.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
            start.elapsed()
        );
        if r.full.stages.len() != 3 || full_final < 0.80 {
            a_fail.push(seed);
        }
        if best.windows(2).any(|w| w[1] < w[0] - 0.01) {
            b_fail.push(seed);
        }
        full_sum += full_final;
        random_sum += r.random_final;
    }
    let (full_mean, random_mean) = (full_sum / seeds as f64, random_sum / seeds as f64);
    let detail = format!(
        "(a) final ≥ 0.80 failed for seeds {a_fail:?}; (b) monotone within 1 pt failed for seeds {b_fail:?}; \
         (c) mean full {full_mean:.4} vs random {random_mean:.4}"
    );
    check(a_fail.is_empty() && b_fail.is_empty() && full_mean >= random_mean, detail)
}

// ---------------------------------------------------------------------------------------------
// Class extension

const OLD: [&str; 5] = ["concrete", "brick", "granite/bluestone", "asphalt", "mixed"];
const NEW: [&str; 3] = ["granite block/stone", "hexagonal asphalt paver", "cobblestone"];

fn extension_pool(seed: u64, taxonomy: &LabelTaxonomy, mix: &[&str]) -> SyntheticPool {
    let spec = SyntheticSceneSpec {
        splits: SplitFractions {
            train: 0.5,
            validation: 0.2,
            test: 0.3,
        },
        ..SyntheticSceneSpec::new(seed, taxonomy.clone())
    };
    generate_synthetic_pool(&spec, 240, &ClassMix::uniform(mix)).unwrap()
}

fn union(parts: &[(&str, &SyntheticPool)], taxonomy: &LabelTaxonomy) -> (DatasetPool, MemoryImages) {
    let mut pool = DatasetPool::new(taxonomy.clone());
    let mut images = MemoryImages::new();
    for (prefix, part) in parts {
        for r in part.pool.records() {
            let mut r = r.clone();
            let id = std::mem::take(&mut r.image_id);
            r.image_id = format!("{prefix}{id}");
            images.insert(r.image_id.clone(), (*part.images.image(&id).unwrap()).clone());
            let mask = part.pool.mask_slot(&id).map(|_| MaskSlot::Memory(part.pool.mask(&id).unwrap()));
            pool.insert(r, mask).unwrap();
        }
    }
    (pool, images)
}

fn class_extension() -> Outcome {
    let base = LabelTaxonomy::base();
    let extended = base.extend(&NEW).map_err(|e| e.to_string())?;
    let old = extension_pool(1, &base, &OLD);
    let new = extension_pool(2, &extended, &NEW);
    let config = TrainConfig::desk();

    let mut model: SegmentationModel = SegmentationModel::new(ModelConfig::new(base.len())).unwrap();
    train_stage(&mut model, &old.pool, &old.images, &config, 1, 0).map_err(|e| e.to_string())?;
    let scales = model.config().inference_scales.clone();
    let (_, old_before) = evaluate_split(&model, &old.pool, &old.images, Split::Test, &scales).map_err(|e| e.to_string())?;

    let mut wide = model.replace_classifier_head(extended.len(), 11).map_err(|e| e.to_string())?;
    let identical = old.pool.ids_in(Split::Test).iter().take(8).all(|id| {
        let x = old.images.image(id).unwrap();
        model.backbone().forward(x.tensor()).0 == wide.backbone().forward(x.tensor()).0
    });
    let (_, new_before) = evaluate_split(&wide, &new.pool, &new.images, Split::Test, &scales).map_err(|e| e.to_string())?;

    let (train, images) = union(&[("a", &old), ("b", &new)], &extended);
    train_stage(&mut wide, &train, &images, &config, 2, 0).map_err(|e| e.to_string())?;
    let (_, new_after) = evaluate_split(&wide, &new.pool, &new.images, Split::Test, &scales).map_err(|e| e.to_string())?;
    let mut old_eval = old.pool.clone();
    old_eval.set_taxonomy(extended.clone()).map_err(|e| e.to_string())?;
    let (_, old_after) = evaluate_split(&wide, &old_eval, &old.images, Split::Test, &scales).map_err(|e| e.to_string())?;

    let id = |n: &str| extended.id_of(n).unwrap();
    let new_rows: Vec<String> = NEW
        .iter()
        .map(|n| format!("{n} {:.3}→{:.3}", new_before.iou(id(n)).unwrap_or(0.0), new_after.iou(id(n)).unwrap_or(0.0)))
        .collect();
    let new_ok = NEW.iter().all(|n| new_after.iou(id(n)).unwrap_or(0.0) >= 0.6);
    let worst_drop = OLD
        .iter()
        .map(|n| old_before.iou(id(n)).unwrap_or(0.0) - old_after.iou(id(n)).unwrap_or(0.0))
        .fold(f64::NEG_INFINITY, f64::max);
    check(
        identical && new_ok && worst_drop <= 0.05,
        format!(
            "backbone identical: {identical}; {}; largest old-class drop {:.2} pts",
            new_rows.join(", "),
            100.0 * worst_drop
        ),
    )
}

// ---------------------------------------------------------------------------------------------
// Geo pipeline

/// Position at arc length `d` on a polyline densified into ≤ 0.5 m chords.
fn fine_oracle(polyline: &[(f64, f64)], d: f64) -> (f64, f64) {
    let mut walked = 0.0;
    for e in polyline.windows(2) {
        let edge = haversine_m(e[0], e[1]);
        let steps = (edge / 0.5).ceil().max(1.0) as usize;
        let at = |f: f64| (e[0].0 + f * (e[1].0 - e[0].0), e[0].1 + f * (e[1].1 - e[0].1));
        for s in 0..steps {
            let (p, q) = (at(s as f64 / steps as f64), at((s + 1) as f64 / steps as f64));
            let step = haversine_m(p, q);
            if walked + step >= d {
                let f = if step > 0.0 { (d - walked) / step } else { 0.0 };
                return (p.0 + f * (q.0 - p.0), p.1 + f * (q.1 - p.1));
            }
            walked += step;
        }
    }
    *polyline.last().unwrap()
}

fn geo() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    let mut segments = Vec::new();
    let mut pairs = 0usize;
    for k in 0..100 {
        let n = rng.random_range(2..7);
        let mut pts = vec![(rng.random_range(-60.0..60.0), rng.random_range(-179.0..179.0))];
        for _ in 1..n {
            let &(lat, lon): &(f64, f64) = pts.last().unwrap();
            // Edges up to roughly 150 m.
            let (dy, dx) = (rng.random_range(-1.0..1.0) * 1.3e-3, rng.random_range(-1.0..1.0) * 1.3e-3);
            pts.push((lat + dy, lon + dx / lat.to_radians().cos()));
        }
        let seg = StreetSegment::new(format!("s{k}"), pts.clone(), "residential").map_err(|e| e.to_string())?;
        let interval = rng.random_range(2.0..12.0);
        let samples = sample_points(&seg, interval).map_err(|e| e.to_string())?;
        let total: f64 = pts.windows(2).map(|e| haversine_m(e[0], e[1])).sum();
        let regular = (total / interval + 1e-9).floor() as usize + 1;
        let mut want: Vec<f64> = (0..regular).map(|i| i as f64 * interval).collect();
        if total >= interval && total - want.last().unwrap() >= interval / 2.0 {
            want.push(total);
        }
        if samples.len() != want.len() {
            return Err(format!("polyline {k}: {} samples, want {}", samples.len(), want.len()));
        }
        for (s, d) in samples.iter().zip(&want) {
            worst = worst.max(haversine_m((s.lat, s.lon), fine_oracle(&pts, *d)));
            let h = bearing_and_headings(&seg, s.distance_along).map_err(|e| e.to_string())?;
            if (h.heading_left - h.heading_right).abs() != 180.0 {
                return Err(format!("polyline {k}: headings {} / {}", h.heading_left, h.heading_right));
            }
            pairs += 1;
        }
        segments.push(seg);
    }
    if worst >= 0.01 {
        return Err(format!("sample position error {:.2} cm", 100.0 * worst));
    }
    let captures = plan_captures(&segments, 5.0, &CameraVariation::default()).map_err(|e| e.to_string())?;
    let mut by_point: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for c in &captures {
        by_point.entry(c.image_id[..c.image_id.len() - 1].to_string()).or_default().push(c.camera.heading_deg);
    }
    if by_point.values().any(|h| h.len() != 2 || (h[0] - h[1]).abs() != 180.0) {
        return Err("a capture pair is not exactly opposite".into());
    }

    // GeoJSON round trip and stroke widths.
    let taxonomy = LabelTaxonomy::canonical();
    let style = ExportStyle::default();
    let summaries: Vec<SegmentSummary> = segments
        .iter()
        .take(20)
        .enumerate()
        .map(|(k, s)| {
            let dominant = taxonomy.material_ids()[k % 4];
            SegmentSummary {
                segment_id: s.segment_id.clone(),
                material_histogram: [(dominant, 100)].into(),
                dominant: Some(dominant),
                image_count: 2,
                distribution: [(dominant, 1.0)].into(),
            }
        })
        .collect();
    let export = export_geojson(&summaries, &segments, &taxonomy, &style);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("map.geojson");
    write_geojson(&export, &path).map_err(|e| e.to_string())?;
    let back: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    if back != export.collection {
        return Err("GeoJSON changed on disk round trip".into());
    }
    for (f, s) in back["features"].as_array().unwrap().iter().zip(&summaries) {
        let coords: Vec<(f64, f64)> = f["geometry"]["coordinates"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| (c[1].as_f64().unwrap(), c[0].as_f64().unwrap()))
            .collect();
        let seg = segments.iter().find(|g| g.segment_id == s.segment_id).unwrap();
        if coords != seg.polyline {
            return Err(format!("{}: coordinates do not round-trip", s.segment_id));
        }
        let concrete = taxonomy.get(s.dominant.unwrap()).unwrap().name == "concrete";
        let want = if concrete { style.stroke_width } else { style.stroke_width * style.emphasis_factor };
        if f["properties"]["stroke-width"].as_f64() != Some(want) {
            return Err(format!("{}: stroke width {}", s.segment_id, f["properties"]["stroke-width"]));
        }
    }
    Ok(format!(
        "max spacing error {:.3} mm (R = {EARTH_RADIUS_M} m), {pairs} heading pairs at 180°, {} features round-trip",
        1000.0 * worst,
        summaries.len()
    ))
}

// ---------------------------------------------------------------------------------------------
// Review state machine

fn legal(from: TaskStatus, to: TaskStatus) -> bool {
    use TaskStatus::*;
    from == to
        || matches!(
            (from, to),
            (Pending, Claimed) | (Claimed, Submitted) | (Claimed, Pending) | (Submitted, Accepted) | (Submitted, Rejected) | (Rejected, Pending)
        )
}

fn tiny_items(taxonomy: &LabelTaxonomy, n: usize) -> Vec<EnqueueItem> {
    (0..n)
        .map(|k| EnqueueItem {
            image_id: format!("img{k}"),
            predicted: MaskImage::filled(2, 2, taxonomy.background(), Provenance::ModelPrediction),
            uncertainty: UncertaintyMap::from_margins(2, 2, vec![0.5; 4]).unwrap(),
        })
        .collect()
}

fn tiny_pool(taxonomy: &LabelTaxonomy, n: usize) -> DatasetPool {
    let mut pool = DatasetPool::new(taxonomy.clone());
    for k in 0..n {
        let record = ImageRecord {
            image_id: format!("img{k}"),
            lat: 0.0,
            lon: 0.0,
            segment_id: "s".into(),
            camera: CameraParams::default(),
            side: CaptureSide::Left,
            split: Split::Unlabeled,
            occlusion_fraction: 0.0,
            inventory_label: None,
            image_path: format!("img{k}.png"),
        };
        pool.insert(record, None).unwrap();
    }
    pool
}

fn review() -> Outcome {
    let taxonomy = LabelTaxonomy::with_materials(&["concrete", "brick"]).unwrap();
    let config = ReviewConfig {
        claim_timeout_ms: 1_000,
        ..ReviewConfig::default()
    };
    let pool = tiny_pool(&taxonomy, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut steps = 0usize;
    for seq in 0..10_000 {
        let clock = Arc::new(ManualClock::new(0));
        let queue = ReviewQueue::in_memory(taxonomy.clone(), config, clock.clone());
        let ids: Vec<String> = queue
            .enqueue_stage(1, tiny_items(&taxonomy, 3))
            .unwrap()
            .into_iter()
            .map(|t| t.task_id)
            .collect();
        let mut tokens: HashMap<String, String> = HashMap::new();
        let mut before = queue.statuses();
        for _ in 0..rng.random_range(5..40) {
            let id = ids[rng.random_range(0..ids.len())].clone();
            let reviewer = ["ana", "ben"][rng.random_range(0..2)];
            match rng.random_range(0..8) {
                0 => {
                    if let Ok(c) = queue.claim(&id, reviewer) {
                        tokens.insert(id, c.token);
                    }
                }
                1 | 2 => {
                    let token = if rng.random_bool(0.8) {
                        tokens.get(&id).cloned().unwrap_or_default()
                    } else {
                        "forged".into()
                    };
                    let mask = MaskImage::filled(2, 2, ClassId(rng.random_range(0..taxonomy.len()) as u8), Provenance::HumanRefined);
                    let _ = queue.submit_refinement(&id, &token, reviewer, mask);
                }
                3 => {
                    let _ = queue.accept(&id);
                }
                4 => {
                    let _ = queue.reject(&id, "fix edges");
                }
                5 => {
                    let _ = queue.requeue(&id);
                }
                6 => {
                    let _ = queue.accept_and_promote(&ids[..rng.random_range(1..=ids.len())], &pool);
                }
                _ => {
                    clock.advance(rng.random_range(0..2_000));
                    let _ = queue.expire_claims();
                }
            }
            let after = queue.statuses();
            for (task, &to) in &after {
                let from = before[task];
                if !legal(from, to) {
                    return Err(format!("sequence {seq}: {task} went {from:?} → {to:?}"));
                }
            }
            before = after;
            steps += 1;
        }
    }

    // Concurrent duplicate promotion, in memory and on disk.
    for trial in 0..40 {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(ManualClock::new(0));
        let queue = if trial % 2 == 0 {
            ReviewQueue::in_memory(taxonomy.clone(), config, clock)
        } else {
            ReviewQueue::open(dir.path(), taxonomy.clone(), config, clock).unwrap()
        };
        let ids: Vec<String> = queue
            .enqueue_stage(1, tiny_items(&taxonomy, 3))
            .unwrap()
            .into_iter()
            .map(|t| t.task_id)
            .collect();
        for id in &ids {
            let c = queue.claim(id, "ana").unwrap();
            queue
                .submit_refinement(id, &c.token, "ana", MaskImage::filled(2, 2, ClassId(0), Provenance::HumanRefined))
                .unwrap();
        }
        let queue = Arc::new(queue);
        let barrier = Arc::new(std::sync::Barrier::new(8));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let (queue, ids, pool, barrier) = (queue.clone(), ids.clone(), pool.clone(), barrier.clone());
                std::thread::spawn(move || {
                    barrier.wait();
                    queue.accept_and_promote(&ids, &pool)
                })
            })
            .collect();
        let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        let promoted: Vec<_> = results.iter().filter_map(|r| r.as_ref().ok()?.record.as_ref()).collect();
        let errors = results.iter().filter(|r| r.is_err()).count();
        let grown = results
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .filter(|p| p.record.is_some())
            .map(|p| p.pool.count(Split::Train))
            .collect::<Vec<_>>();
        if promoted.len() != 1 || errors != 0 || grown != [3] || queue.promoted().len() != 3 {
            return Err(format!(
                "trial {trial}: {} promoting calls, {errors} errors, promoted set {}",
                promoted.len(),
                queue.promoted().len()
            ));
        }
        if trial % 2 == 1 {
            drop(queue);
            let reopened = ReviewQueue::open(dir.path(), taxonomy.clone(), config, Arc::new(ManualClock::new(0))).unwrap();
            if reopened.state().promotions.len() != 1 {
                return Err(format!("trial {trial}: {} promotions after reopen", reopened.state().promotions.len()));
            }
        }
    }
    Ok(format!(
        "10000 sequences ({steps} operations) without an illegal transition; 40 races of 8 duplicate accepts, one promotion each"
    ))
}

// ---------------------------------------------------------------------------------------------

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("table_aggregation", table_aggregation),
        ("metric_oracle", metric_oracle),
        ("fusion_identities_and_gradients", fusion),
        ("margin_sampling_oracle", margin_oracle),
        ("budget_schedule", budget),
        ("geo_pipeline", geo),
        ("review_state_machine", review),
        ("class_extension", class_extension),
        ("end_to_end_campaign", campaign),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
