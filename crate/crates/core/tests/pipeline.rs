use std::time::{Duration, Instant};

use linksteal::attack::AttackId;
use linksteal::data::{generate_planted_partition, load_dataset, save_dataset, PlantedPartition};
use linksteal::defense::{DefenseConfig, DefenseKind};
use linksteal::experiment::{run_defense_sweep, run_experiment, run_transfer, DatasetSource, ExperimentConfig};
use linksteal::gnn::{Arch, GnnTrainConfig};

fn quick(dataset: &str) -> ExperimentConfig {
    ExperimentConfig {
        dataset: dataset.parse().unwrap(),
        runs: 1,
        ..ExperimentConfig::default()
    }
}

fn short_training() -> GnnTrainConfig {
    GnnTrainConfig {
        epochs: 60,
        ..GnnTrainConfig::default()
    }
}

#[test]
fn single_desk_run_recovers_links() {
    let cfg = ExperimentConfig {
        attacks: vec![AttackId::Attack1],
        ..quick("planted:nodes=400,communities=4,p_in=0.1,p_out=0.005,dim=32,noise=3")
    };
    let start = Instant::now();
    let report = run_experiment(&cfg).unwrap();
    assert!(start.elapsed() < Duration::from_secs(60), "{:?}", start.elapsed());
    let auc = report.mean_auc(AttackId::Attack1).unwrap();
    assert!(auc > 0.75, "Attack-1 AUC {auc}");
}

#[test]
fn directory_and_generated_datasets_agree() {
    let params = PlantedPartition {
        nodes: 120,
        communities: 3,
        feature_dim: 8,
        seed: 5,
        ..PlantedPartition::default()
    };
    let g = generate_planted_partition(&params).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&g, dir.path()).unwrap();
    assert_eq!(load_dataset(dir.path()).unwrap().graph, g);

    let base = ExperimentConfig {
        attacks: vec![AttackId::Baseline1, AttackId::Attack0],
        gnn: short_training(),
        ..ExperimentConfig::default()
    };
    let from_dir = run_experiment(&ExperimentConfig {
        dataset: DatasetSource::Directory(dir.path().to_path_buf()),
        ..base.clone()
    })
    .unwrap();
    let generated = run_experiment(&ExperimentConfig {
        dataset: DatasetSource::Planted {
            params: params.clone(),
            seed: Some(params.seed),
        },
        ..base
    })
    .unwrap();
    for id in [AttackId::Baseline1, AttackId::Attack0] {
        assert_eq!(from_dir.aucs(id), generated.aucs(id));
    }
}

#[test]
fn transfer_across_class_counts() {
    let target = "planted:nodes=400,communities=4,p_in=0.1,p_out=0.005,dim=32,noise=3";
    let cross = run_transfer(&ExperimentConfig {
        shadow_dataset: Some(
            "planted:nodes=400,communities=3,p_in=0.1,p_out=0.005,dim=32,noise=3"
                .parse()
                .unwrap(),
        ),
        ..quick(target)
    })
    .unwrap();
    let same = run_transfer(&quick(target)).unwrap();
    assert_eq!(cross.attacks(), vec![AttackId::Attack1]);
    let (c, s) = (
        cross.mean_auc(AttackId::Attack1).unwrap(),
        same.mean_auc(AttackId::Attack1).unwrap(),
    );
    assert!(c > 0.6, "cross-distribution AUC {c}");
    assert!((c - s).abs() < 0.15, "cross {c} vs same-distribution {s}");
}

#[test]
fn single_budget_sweep_and_weak_perturbation() {
    let cfg = ExperimentConfig {
        defense: DefenseConfig::of(DefenseKind::EdgeRand),
        runs: 2,
        ..quick("planted:nodes=400,communities=4,p_in=0.1,p_out=0.005,dim=32,noise=3")
    };
    let sweep = run_defense_sweep(&cfg, &[10.0]).unwrap();
    assert_eq!(sweep.attack, AttackId::Attack1);
    let means = sweep.means();
    let budgets: Vec<Option<f64>> = means.iter().map(|m| m.0).collect();
    assert_eq!(budgets, [None, Some(10.0)]);
    let (undefended, weak) = (means[0].1, means[1].1);
    assert!(
        (undefended - weak).abs() <= 0.05,
        "accuracy {undefended} vs {weak} at epsilon 10"
    );
}

#[test]
fn architectures_train_through_the_pipeline() {
    for arch in Arch::ALL {
        let cfg = ExperimentConfig {
            target_arch: arch,
            shadow_arch: Arch::Gcn,
            attacks: vec![AttackId::Attack1],
            gnn: short_training(),
            ..quick("planted:nodes=100,communities=2,p_in=0.2,p_out=0.01,dim=8,noise=1")
        };
        let report = run_experiment(&cfg).unwrap();
        let auc = report.mean_auc(AttackId::Attack1).unwrap();
        assert!((0.0..=1.0).contains(&auc), "{arch}: {auc}");
        assert!(report.mean_target_accuracy() > 0.5, "{arch}");
    }
}
