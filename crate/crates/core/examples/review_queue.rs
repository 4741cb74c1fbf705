//! Walks a stage of model predictions through the review queue.
//!
//! Shows claim expiry, a rejected and requeued task, and two threads racing to promote the
//! same accepted tasks into the training split. Only one of them moves any image.
//!
//! ```text
//! cargo run -p sidewalk-core --example review_queue -- [queue_dir]
//! ```

use std::sync::Arc;

use sidewalk::active::UncertaintyMap;
use sidewalk::imagery::{generate_synthetic_pool, ClassMix, SyntheticSceneSpec};
use sidewalk::review::{EnqueueItem, ManualClock, ReviewConfig, ReviewQueue, TaskStatus};
use sidewalk::{LabelTaxonomy, Provenance, Split};

fn main() -> sidewalk::Result<()> {
    let dir = std::env::args().nth(1);
    let materials = ["concrete", "brick", "asphalt", "mixed"];
    let taxonomy = LabelTaxonomy::with_materials(&materials)?;
    let syn = generate_synthetic_pool(&SyntheticSceneSpec::new(5, taxonomy.clone()), 30, &ClassMix::uniform(&materials))?;

    let clock = Arc::new(ManualClock::new(0));
    let config = ReviewConfig {
        claim_timeout_ms: 60_000,
        ..ReviewConfig::default()
    };
    let queue = match &dir {
        Some(d) => ReviewQueue::open(std::path::Path::new(d), taxonomy.clone(), config, clock.clone())?,
        None => ReviewQueue::in_memory(taxonomy.clone(), config, clock.clone()),
    };

    // Stand-in predictions: the true mask with the bottom rows, where the sidewalk is, called road.
    let items: Vec<EnqueueItem> = syn
        .pool
        .ids_in(Split::Unlabeled)
        .into_iter()
        .take(4)
        .map(|id| {
            let mut predicted = syn.truth[&id].clone().with_provenance(Provenance::ModelPrediction);
            let (w, h) = predicted.dims();
            for y in h - 8..h {
                for x in 0..w {
                    predicted.set(x, y, taxonomy.road());
                }
            }
            let margins = (0..w * h).map(|i| if i >= (h - 8) * w { 0.1 } else { 0.9 }).collect();
            Ok(EnqueueItem {
                image_id: id,
                predicted,
                uncertainty: UncertaintyMap::from_margins(w, h, margins)?,
            })
        })
        .collect::<sidewalk::Result<_>>()?;
    let tasks = queue.enqueue_stage(1, items)?;
    println!("enqueued {} tasks", tasks.len());

    // One reviewer walks away; the claim lapses and the task returns to the pool.
    let idle = queue.claim(&tasks[0].task_id, "idle")?;
    clock.advance(61_000);
    println!("{} after timeout: {:?}", idle.task_id, queue.get(&idle.task_id)?.status);

    for task in &tasks {
        let claim = queue.claim(&task.task_id, "ana")?;
        clock.advance(20_000);
        let refined = syn.truth[&task.image_id].clone().with_provenance(Provenance::HumanRefined);
        let submitted = queue.submit_refinement(&task.task_id, &claim.token, "ana", refined)?;
        let stats = submitted.stats.expect("stats recorded on submit");
        println!(
            "{}: {:.1}% of pixels changed in {:.0}s",
            task.task_id,
            100.0 * stats.fraction_changed,
            stats.edit_seconds
        );
    }

    // A second look finds a problem with the last one.
    let last = &tasks[3].task_id;
    queue.reject(last, "missed a curb cut")?;
    queue.requeue(last)?;
    let again = queue.claim(last, "ben")?;
    queue.submit_refinement(last, &again.token, "ben", syn.truth[&tasks[3].image_id].clone())?;

    let ids: Vec<String> = tasks.iter().map(|t| t.task_id.clone()).collect();
    let queue = Arc::new(queue);
    let racers: Vec<_> = (0..2)
        .map(|_| {
            let (queue, ids, pool) = (queue.clone(), ids.clone(), syn.pool.clone());
            std::thread::spawn(move || queue.accept_and_promote(&ids, &pool))
        })
        .collect();
    for (k, r) in racers.into_iter().enumerate() {
        let promotion = r.join().expect("thread")?;
        match promotion.record {
            Some(rec) => println!(
                "thread {k}: promoted {} images, train split now {}",
                rec.image_ids.len(),
                promotion.pool.count(Split::Train)
            ),
            None => println!("thread {k}: nothing left to promote"),
        }
    }

    let summary = queue.stage_summary(1)?;
    println!(
        "stage 1: {} accepted, mean edit {:.0}s",
        summary.counts[&TaskStatus::Accepted],
        summary.mean_edit_seconds.unwrap_or(0.0)
    );
    Ok(())
}
