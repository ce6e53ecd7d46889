//! Overfits both subnets on one synthetic 4 s phrase and reports the loss
//! ratio and top-band errors.
//!
//! cargo run --release --example overfit -- [steps] [full]

use std::time::Instant;

use perfnet::dsp::StftGeometry;
use perfnet::train::synthetic::synthetic_pair;
use perfnet::train::{band_log_mse, build_pair, Dataset, DatasetOptions, TrainConfig, Trainer};
use perfnet::{band_partition, ModelConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let full = args.get(2).is_some_and(|s| s == "full");

    let geometry = StftGeometry::default();
    let (pitch_min, pitch_max) = if full { (0, 127) } else { (36, 99) };
    let mut config = ModelConfig::new(geometry, pitch_min, pitch_max, 1);
    let mut train = TrainConfig { steps, seed: 1, ..TrainConfig::default() };
    if !full {
        config.contour.encoder_widths = vec![64, 96, 128, 128];
        config.texture.hidden = 16;
        train.batch_size = 1;
    }
    let pair = synthetic_pair(4.0, 4, geometry.sample_rate, 0);
    let options = DatasetOptions { geometry, pitch_min, pitch_max };
    let dataset = Dataset {
        labels: vec!["synth".into()],
        pairs: vec![build_pair("synthetic", &pair.midi, &pair.wav, 0, &options).expect("aligned pair")],
    };
    let mut trainer = Trainer::new(&dataset, config, train).expect("trainer");
    let start = Instant::now();
    let mut first = None;
    let mut last = None;
    for i in 0..steps {
        let row = trainer.step().expect("step");
        first.get_or_insert(row.loss.total);
        last = Some(row.loss.total);
        if i % 100 == 0 || i + 1 == steps {
            println!("step {:5} loss {:.5} ({:.1} s)", row.step, row.loss.total, start.elapsed().as_secs_f64());
        }
    }
    let target = &dataset.pairs[0].target;
    let pred = trainer.model().predict(&dataset.pairs[0].roll, 0).expect("predict");
    let top = band_partition(geometry.bins(), 4).unwrap().bands()[3].clone();
    println!(
        "loss ratio {:.4}; top band coarse {:.5} refined {:.5}",
        last.unwrap_or(0.0) / first.unwrap_or(1.0),
        band_log_mse(&pred.coarse, target, top.clone()),
        band_log_mse(&pred.refined, target, top)
    );
}
