//! Desk-scale fixtures shared by the CLI tests: a trained blob classifier,
//! its datasets, a far-cluster NewWorld set, and a run configuration.

#![allow(dead_code)]

pub mod oracles;

use std::path::PathBuf;

use oodmon_core::data::{save_dataset, synth_blobs, LabeledDataset};
use oodmon_core::nn::{forward, init_mlp, save_network, train_classifier, Network};

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub config: PathBuf,
    pub net: Network,
    pub id_dataset: LabeledDataset,
    pub far_dataset: LabeledDataset,
}

pub const FIXTURE_SEED: u64 = 7;

/// Build a fixture directory: trained MLP (`net.json`), blob ID data
/// (`id.mnzd`), a far-cluster NewWorld dataset (`far.mnzd`), and a config
/// file combining them with `extra_config` lines appended.
pub fn desk_fixture(per_class: usize, hidden: &[usize], extra_config: &str) -> Fixture {
    let dir = tempfile::tempdir().expect("tempdir");
    let image = [1usize, 8, 8];
    let id_dataset = synth_blobs(3, per_class, &image, FIXTURE_SEED, 0.8).expect("blobs");
    let arch = init_mlp(&image, hidden, 3, FIXTURE_SEED);
    let net = train_classifier(&id_dataset, &arch, 12, 0.3, 16, FIXTURE_SEED).expect("train");
    let far_dataset = synth_blobs(3, per_class.max(40), &image, FIXTURE_SEED + 7000, 2.5).expect("far blobs");

    save_network(&net, dir.path().join("net.json")).expect("save net");
    save_dataset(&id_dataset, dir.path().join("id.mnzd")).expect("save id");
    save_dataset(&far_dataset, dir.path().join("far.mnzd")).expect("save far");

    let config = dir.path().join("run.conf");
    let text = format!(
        "network = \"net.json\"\n\
         dataset.path = \"id.mnzd\"\n\
         collected.\"NewWorld/far\" = \"far.mnzd\"\n\
         seed = {FIXTURE_SEED}\n\
         out = \"out\"\n\
         {extra_config}\n"
    );
    std::fs::write(&config, text).expect("write config");
    Fixture {
        dir,
        config,
        net,
        id_dataset,
        far_dataset,
    }
}

/// Classifier accuracy of a network on a dataset.
pub fn network_accuracy(net: &Network, ds: &LabeledDataset) -> f64 {
    let mut hits = 0usize;
    for i in 0..ds.len() {
        let tr = forward(net, &ds.image(i).unwrap()).unwrap();
        if tr.predicted_class == ds.label(i) as usize {
            hits += 1;
        }
    }
    hits as f64 / ds.len() as f64
}
