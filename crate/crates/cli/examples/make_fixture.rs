//! Generate a ready-to-run demo: a trained blob classifier, its dataset,
//! a far-cluster NewWorld dataset, and a run configuration.
//!
//! ```text
//! cargo run -p oodmon-cli --example make_fixture -- demo/
//! cargo run -p oodmon-cli -- evaluate --config demo/run.conf
//! cargo run -p oodmon-cli -- optimize --config demo/run.conf
//! ```

use std::path::PathBuf;

use oodmon_core::data::{save_dataset, synth_blobs};
use oodmon_core::nn::{forward, init_mlp, save_network, train_classifier};

fn main() {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("demo"));
    std::fs::create_dir_all(&dir).expect("create output directory");

    let seed = 7u64;
    let image = [1usize, 8, 8];
    let dataset = synth_blobs(3, 200, &image, seed, 0.8).expect("blobs");
    let arch = init_mlp(&image, &[32, 32], 3, seed);
    let net = train_classifier(&dataset, &arch, 12, 0.3, 16, seed).expect("train");
    let far = synth_blobs(3, 200, &image, seed + 7000, 2.5).expect("far blobs");

    let mut hits = 0usize;
    for i in 0..dataset.len() {
        let tr = forward(&net, &dataset.image(i).unwrap()).unwrap();
        if tr.predicted_class == dataset.label(i) as usize {
            hits += 1;
        }
    }
    eprintln!(
        "trained fixture classifier: {:.1}% training accuracy",
        100.0 * hits as f64 / dataset.len() as f64
    );

    save_network(&net, dir.join("net.json")).expect("write net.json");
    save_dataset(&dataset, dir.join("id.mnzd")).expect("write id.mnzd");
    save_dataset(&far, dir.join("far.mnzd")).expect("write far.mnzd");
    let config = format!(
        "# demo configuration for the oodmon pipeline\n\
         network = \"net.json\"\n\
         dataset.path = \"id.mnzd\"\n\
         collected.\"NewWorld/far\" = \"far.mnzd\"\n\
         monitors = \"all\"\n\
         optimize.method = \"random\"\n\
         optimize.trials = 100\n\
         optimize.objective = [\"NewWorld/far\"]\n\
         optimize.min_id_accuracy = 0.7\n\
         seed = {seed}\n\
         out = \"out\"\n"
    );
    std::fs::write(dir.join("run.conf"), config).expect("write run.conf");
    eprintln!("fixture written to {}", dir.display());
}
