use std::path::Path;
use std::sync::Arc;

use sidewalk::active::campaign::{fresh_model, ExternalReviewers};
use sidewalk::active::{resume_campaign, run_campaign, CampaignConfig, CampaignStatus, SelectionReason, Strategy};
use sidewalk::imagery::{generate_synthetic_pool, ClassMix, SplitFractions, SyntheticPool, SyntheticSceneSpec};
use sidewalk::project::{self, PoolSource, ProjectFile, ReviewerMode};
use sidewalk::review::{OracleReviewer, ReviewConfig, ReviewQueue, SystemClock, TaskStatus};
use sidewalk::training::{DefaultModel, TrainConfig};
use sidewalk::{LabelTaxonomy, Split};

const MATERIALS: [&str; 4] = ["concrete", "brick", "asphalt", "mixed"];

fn spec(seed: u64) -> SyntheticSceneSpec {
    SyntheticSceneSpec {
        width: 32,
        height: 32,
        splits: SplitFractions {
            train: 0.2,
            validation: 0.15,
            test: 0.15,
        },
        ..SyntheticSceneSpec::new(seed, LabelTaxonomy::with_materials(&MATERIALS).unwrap())
    }
}

fn small_pool() -> SyntheticPool {
    generate_synthetic_pool(&spec(21), 60, &ClassMix::uniform(&MATERIALS)).unwrap()
}

fn quick_config(max_stages: usize) -> CampaignConfig {
    CampaignConfig {
        max_stages,
        sample_size: 6,
        train: TrainConfig {
            epochs_per_stage: 1,
            crops_per_epoch: Some(8),
            crop_size: 32,
            ..TrainConfig::desk()
        },
        analysis: sidewalk::active::AnalysisConfig {
            k_clusters: 2,
            ..Default::default()
        },
        scales: Some(vec![1.0]),
        ..CampaignConfig::default()
    }
}

fn queue(taxonomy: &LabelTaxonomy) -> ReviewQueue {
    ReviewQueue::in_memory(taxonomy.clone(), ReviewConfig::default(), Arc::new(SystemClock))
}

#[test]
fn oracle_campaign_grows_the_training_split_and_writes_stage_files() {
    let syn = small_pool();
    let config = quick_config(3);
    let dir = tempfile::tempdir().unwrap();
    let q = queue(syn.pool.taxonomy());
    let mut oracle = OracleReviewer::new("oracle", syn.truth.clone());
    let model: DefaultModel = fresh_model(&config, &syn.pool).unwrap();
    let run = run_campaign(&config, syn.pool.clone(), model, &syn.images, &q, &mut oracle, Some(dir.path())).unwrap();

    assert_eq!(run.status, CampaignStatus::Completed);
    assert!(!run.stages.is_empty() && run.stages.len() <= 3);
    let start = syn.pool.count(Split::Train);
    for (k, s) in run.stages.iter().enumerate() {
        assert_eq!(s.stage, k + 1);
        assert_eq!(s.train_count, start + 6 * k, "each stage adds the previous acquisition");
        let stage_dir = dir.path().join(format!("stage_{}", k + 1));
        for f in ["checkpoint.json", "metrics.jsonl"] {
            assert!(stage_dir.join(f).exists(), "{f} missing for stage {}", k + 1);
        }
    }
    // Acquisitions never repeat an image and never pick a labeled one.
    let picked: Vec<&str> = run.stages.iter().flat_map(|s| s.acquisition.iter().map(|a| a.image_id.as_str())).collect();
    let unique: std::collections::BTreeSet<_> = picked.iter().collect();
    assert_eq!(unique.len(), picked.len());
    for id in picked {
        assert_eq!(syn.pool.record(id).unwrap().split, Split::Unlabeled);
    }
    assert!(dir.path().join("campaign.json").exists());
}

#[test]
fn stage_one_mixes_uncertainty_and_similarity_picks() {
    let syn = small_pool();
    let config = quick_config(1);
    let q = queue(syn.pool.taxonomy());
    let mut oracle = OracleReviewer::new("oracle", syn.truth.clone());
    let model: DefaultModel = fresh_model(&config, &syn.pool).unwrap();
    let config = CampaignConfig { max_stages: 2, ..config };
    let run = run_campaign(&config, syn.pool.clone(), model, &syn.images, &q, &mut oracle, None).unwrap();
    let first = &run.stages[0].acquisition;
    assert_eq!(first.len(), 6);
    // 10% of 6 rounds up to one uncertainty pick.
    assert_eq!(first.iter().filter(|a| a.reason == SelectionReason::Uncertainty).count(), 1);
    assert!(first.iter().all(|a| matches!(a.reason, SelectionReason::Uncertainty | SelectionReason::Similarity)));
}

#[test]
fn random_strategy_is_seeded() {
    let syn = small_pool();
    let config = CampaignConfig {
        strategy: Strategy::Random,
        seed: 5,
        ..quick_config(2)
    };
    let picks = || {
        let q = queue(syn.pool.taxonomy());
        let mut oracle = OracleReviewer::new("oracle", syn.truth.clone());
        let model: DefaultModel = fresh_model(&config, &syn.pool).unwrap();
        let run = run_campaign(&config, syn.pool.clone(), model, &syn.images, &q, &mut oracle, None).unwrap();
        run.stages[0].acquisition.iter().map(|a| a.image_id.clone()).collect::<Vec<_>>()
    };
    assert_eq!(picks(), picks());
}

#[test]
fn external_review_pauses_and_resume_promotes_the_refined_masks() {
    let syn = small_pool();
    let config = quick_config(2);
    let dir = tempfile::tempdir().unwrap();
    let review_dir = dir.path().join("review");
    let taxonomy = syn.pool.taxonomy().clone();
    let open = || ReviewQueue::open(&review_dir, taxonomy.clone(), ReviewConfig::default(), Arc::new(SystemClock)).unwrap();

    let model: DefaultModel = fresh_model(&config, &syn.pool).unwrap();
    let run = run_campaign(&config, syn.pool.clone(), model, &syn.images, &open(), &mut ExternalReviewers, Some(dir.path())).unwrap();
    assert_eq!(run.status, CampaignStatus::Paused { stage: 1 });
    assert!(
        run_campaign(&config, syn.pool.clone(), fresh_model::<sidewalk::model::EncoderDecoder>(&config, &syn.pool).unwrap(), &syn.images, &open(), &mut ExternalReviewers, Some(dir.path()))
            .is_err(),
        "a second run in the same directory is refused"
    );

    // Reviewers work through the queue in a later process.
    let q = open();
    let tasks = q.tasks(1, Some(TaskStatus::Pending)).unwrap();
    assert_eq!(tasks.len(), 6);
    for t in &tasks {
        let c = q.claim(&t.task_id, "ana").unwrap();
        q.submit_refinement(&t.task_id, &c.token, "ana", syn.truth[&t.image_id].clone()).unwrap();
        q.accept(&t.task_id).unwrap();
    }
    drop(q);

    let resumed = resume_campaign::<sidewalk::model::EncoderDecoder>(dir.path(), syn.pool.clone(), &syn.images, &open(), &mut ExternalReviewers).unwrap();
    assert_eq!(resumed.stages.len(), 2);
    assert_eq!(resumed.stages[1].train_count, syn.pool.count(Split::Train) + 6);
    for t in &tasks {
        assert_eq!(resumed.pool.record(&t.image_id).unwrap().split, Split::Train);
        assert_eq!(*resumed.pool.mask(&t.image_id).unwrap(), syn.truth[&t.image_id]);
    }
    // Stage 2 is the last stage, so nothing more is queued and the run is complete.
    assert_eq!(resumed.status, CampaignStatus::Completed);

    // Resuming a finished campaign changes nothing.
    let again = resume_campaign::<sidewalk::model::EncoderDecoder>(dir.path(), syn.pool.clone(), &syn.images, &open(), &mut ExternalReviewers).unwrap();
    assert_eq!(again.stages.len(), 2);
    assert_eq!(again.status, CampaignStatus::Completed);
}

fn write_project(path: &Path, reviewer: ReviewerMode) -> ProjectFile {
    let p = ProjectFile {
        dir: "run".into(),
        source: PoolSource::Synthetic {
            spec: spec(22),
            images: 60,
            mix: ClassMix::uniform(&MATERIALS),
        },
        campaign: quick_config(2),
        review: ReviewConfig::default(),
        reviewer,
    };
    sidewalk::io::write_json(path, &p).unwrap();
    p
}

#[test]
fn project_file_runs_in_its_own_directory() {
    let base = tempfile::tempdir().unwrap();
    let path = base.path().join("project.json");
    write_project(&path, ReviewerMode::Oracle);
    let project = ProjectFile::load(&path).unwrap();
    let run = project.run(base.path()).unwrap();
    assert_eq!(run.status, CampaignStatus::Completed);
    let dir = base.path().join("run");
    for f in ["campaign.json", "project.json", "taxonomy.json", "stage_1/checkpoint.json"] {
        assert!(dir.join(f).exists(), "{f} missing");
    }
    let stored = ProjectFile::load(&dir.join("project.json")).unwrap();
    assert!(stored.dir.is_absolute());
    let resumed = project::resume(&dir).unwrap();
    assert_eq!(resumed.stages.len(), run.stages.len());
}

#[test]
fn project_file_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    let mut json = serde_json::to_value(write_project(&path, ReviewerMode::Oracle)).unwrap();
    json["campaign"]["max_stage"] = 3.into();
    std::fs::write(&path, json.to_string()).unwrap();
    assert!(ProjectFile::load(&path).is_err());
}

#[test]
fn external_project_pauses_and_serves_its_queue() {
    let base = tempfile::tempdir().unwrap();
    let path = base.path().join("project.json");
    let project = write_project(&path, ReviewerMode::External);
    let run = project.run(base.path()).unwrap();
    assert_eq!(run.status, CampaignStatus::Paused { stage: 1 });
    let q = project::open_queue(&base.path().join("run")).unwrap();
    assert_eq!(q.tasks(1, None).unwrap().len(), 6);
}
