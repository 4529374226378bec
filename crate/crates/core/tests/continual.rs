use cqlab_core::continual::{
    count_forgetting_events, forgetting_events, forgetting_stats, label_dispersion, run_continual,
    run_plain, summarize, CorrectnessTimeline, TrainConfig,
};
use cqlab_core::data::{synthetic_task, DatasetSpec, SyntheticSpec, TaskDataset};
use cqlab_core::models::{HeadKind, Network, NetworkConfig};
use cqlab_core::quantum::QuantumHead;
use cqlab_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_events(c: &[bool]) -> usize {
    let mut n = 0;
    for t in 1..c.len() {
        if c[t - 1] && !c[t] {
            n += 1;
        }
    }
    n
}

fn brute_unforgettable(c: &[bool]) -> bool {
    match c.iter().position(|&x| x) {
        None => false,
        Some(first) => c[first..].iter().all(|&x| x),
    }
}

fn brute_dispersion(p: &[usize]) -> f64 {
    let mut best = 0;
    for &label in p {
        best = best.max(p.iter().filter(|&&q| q == label).count());
    }
    1.0 - best as f64 / p.len() as f64
}

#[test]
fn forgetting_matches_brute_force_on_random_timelines() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..1000 {
        let len = rng.random_range(1..=50);
        let labels = [rng.random_range(0..2usize)];
        let mut tl = CorrectnessTimeline::new(1);
        let mut predicted = Vec::new();
        for e in 0..len {
            let p = rng.random_range(0..2usize);
            predicted.push(p);
            tl.push(e + 1, &[p], &labels);
        }
        let correct: Vec<bool> = predicted.iter().map(|&p| p == labels[0]).collect();
        let got = count_forgetting_events(&tl)[0];
        assert_eq!(got.events, brute_events(&correct));
        assert_eq!(got.unforgettable, brute_unforgettable(&correct));
        assert_eq!(label_dispersion(&predicted), brute_dispersion(&predicted));
    }
}

#[test]
fn stats_report_epochs_not_indices() {
    let mut tl = CorrectnessTimeline::new(2);
    for (e, p) in [(5, [1, 0]), (10, [0, 0]), (15, [0, 1])] {
        tl.push(e, &p, &[0, 1]);
    }
    let stats = forgetting_stats(&tl, &[0.2, 0.9], &[0, 1]);
    assert_eq!(stats[0].first_learned_epoch, Some(10));
    assert_eq!(stats[1].first_learned_epoch, Some(15));
    assert!((stats[1].final_margin - 0.8).abs() < 1e-12);
    let s = summarize(&stats);
    assert_eq!((s.examples, s.total_events, s.unforgettable), (2, 0, 2));
}

proptest! {
    #[test]
    fn events_bounded_by_half_length(c in proptest::collection::vec(any::<bool>(), 0..60)) {
        let f = forgetting_events(&c);
        prop_assert!(f.events <= c.len() / 2);
        prop_assert!(!(f.unforgettable && f.first_learned.is_none()));
    }

    #[test]
    fn dispersion_in_unit_interval(p in proptest::collection::vec(0usize..4, 1..40)) {
        let d = label_dispersion(&p);
        prop_assert!((0.0..1.0).contains(&d));
    }
}

fn tiny_task(seed: u64) -> TaskDataset {
    let mut spec = SyntheticSpec {
        height: 8,
        width: 8,
        dataset: DatasetSpec { samples_per_class: 20, seed, ..DatasetSpec::default() },
        ..SyntheticSpec::default()
    };
    spec.dataset.name = "tiny".into();
    let mut task = synthetic_task(&spec).unwrap();
    task.standardize().unwrap();
    task
}

fn tiny_net(head: HeadKind, seed: u64) -> Network {
    Network::new(NetworkConfig {
        input: [1, 8, 8],
        conv1: 2,
        conv2: 3,
        kernel: 3,
        fc4: 6,
        head,
        seed,
        ..NetworkConfig::default()
    })
    .unwrap()
}

fn tiny_cfg(seed: u64) -> TrainConfig {
    TrainConfig { epochs: 4, injection_epoch: 3, lr: 0.01, seed, ..TrainConfig::default() }
}

#[test]
fn zero_ratio_equals_plain_run() {
    let task = tiny_task(1);
    let cfg = TrainConfig { injection_ratio: 0.0, ..tiny_cfg(1) };
    let a = run_continual(tiny_net(HeadKind::Softmax, 1), &cfg, &task).unwrap();
    let b = run_plain(tiny_net(HeadKind::Softmax, 1), &cfg, &task).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.injected, 0);
    let bits = |r: &cqlab_core::continual::ContinualRun| r.losses().iter().map(|l| l.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn runs_are_deterministic() {
    let task = tiny_task(2);
    let head = HeadKind::Hybrid(QuantumHead::default());
    let a = run_continual(tiny_net(head, 3), &tiny_cfg(3), &task).unwrap();
    let b = run_continual(tiny_net(head, 3), &tiny_cfg(3), &task).unwrap();
    assert_eq!(a, b);
}

#[test]
fn injection_grows_train_set_by_half() {
    let task = tiny_task(3);
    assert_eq!(task.train.len(), 32);
    let run = run_continual(tiny_net(HeadKind::Softmax, 0), &tiny_cfg(0), &task).unwrap();
    let sizes: Vec<usize> = run.records.iter().map(|r| r.train_size).collect();
    assert_eq!(sizes, vec![32, 32, 48, 48]);
    assert_eq!(run.injected, 16);
    assert_eq!(run.timeline.examples(), 32);
    assert_eq!(run.timeline.epochs, vec![1, 2, 3, 4]);
    let l = run.losses();
    assert_eq!(run.spike, Some(l[2] - l[1]));
}

#[test]
fn injection_at_first_epoch_has_no_spike() {
    let task = tiny_task(4);
    let cfg = TrainConfig { injection_epoch: 1, epochs: 1, ..tiny_cfg(0) };
    let run = run_continual(tiny_net(HeadKind::Softmax, 0), &cfg, &task).unwrap();
    assert_eq!(run.spike, None);
    assert_eq!(run.records[0].train_size, 48);
}

#[test]
fn exhausted_pool_is_a_data_error() {
    let mut task = tiny_task(5);
    task.injection_pool.truncate(3);
    let err = run_continual(tiny_net(HeadKind::Softmax, 0), &tiny_cfg(0), &task).unwrap_err();
    assert!(matches!(err, Error::Data(ref m) if m.contains("injection pool exhausted")), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn non_finite_loss_names_epoch_and_batch() {
    let mut task = tiny_task(6);
    task.train.iter_mut().for_each(|im| im.pixels[0] = f64::NAN);
    let err = run_plain(tiny_net(HeadKind::Softmax, 0), &tiny_cfg(0), &task).unwrap_err();
    assert!(matches!(err, Error::Numeric(ref m) if m.contains("epoch 1, batch 0")), "{err}");
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn bad_injection_epoch_is_config_error() {
    let task = tiny_task(7);
    let cfg = TrainConfig { injection_epoch: 9, ..tiny_cfg(0) };
    let err = run_continual(tiny_net(HeadKind::Softmax, 0), &cfg, &task).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn replay_run_stays_finite_and_learns() {
    let task = tiny_task(8);
    let mut cfg = tiny_cfg(8);
    cfg.replay.enabled = true;
    cfg.replay.capacity = 4;
    let run = run_continual(tiny_net(HeadKind::Softmax, 8), &cfg, &task).unwrap();
    assert!(run.losses().iter().all(|l| l.is_finite()));
    assert!(run.final_record().train_accuracy > 0.5);
}
