use normlab::data::{generate_shortcut_dataset, ShortcutDatasetConfig};
use normlab::metrics::error_rate;
use normlab::model::{appendix_cnn, strip_batchnorm};
use normlab::rng::derive_seed;
use normlab::train::{train_baseline, Optimizer, Schedule, TrainConfig};

#[test]
fn nobn_stability_scan() {
    let spec = strip_batchnorm(&appendix_cnn(3, 28, 28, 2));
    for (lr, momentum) in [(0.02, 0.9), (0.01, 0.9), (0.005, 0.9), (0.05, 0.0)] {
        for seed in 0..3u64 {
            let mut dcfg = ShortcutDatasetConfig::synthetic(derive_seed(seed, "data"), 128, 128);
            dcfg.noise_sigma = 0.8;
            dcfg.square_contrast = 0.3;
            let data = generate_shortcut_dataset(&dcfg).unwrap();
            let cfg = TrainConfig {
                optimizer: Optimizer::Sgd {
                    lr,
                    momentum,
                    nesterov: momentum > 0.0,
                },
                schedule: Schedule::Constant,
                batch_size: 64,
                epochs: 20,
                l2_coefficient: 0.0,
                seed: derive_seed(seed, "student"),
            };
            let (model, trace) = train_baseline(&spec, &data.train, &[], &cfg).unwrap();
            let both = error_rate(&model, &data.both).unwrap();
            let none = error_rate(&model, &data.none).unwrap();
            println!(
                "lr {lr} m {momentum} seed {seed}: final loss {:.4} both {:.2} none {:.2}",
                trace.loss.last().unwrap(),
                both * 100.0,
                none * 100.0
            );
        }
    }
}
