// Scratch harness for calibrating desk-scale defaults. Not part of the API.
use autokd::diffengine::engine::evaluate;
use autokd::diffengine::{KdLossConfig, TrainConfig, TrainData, Trainer};
use autokd::graphgen::{assemble, GeneratorHyperparams, GraphGenSpec};
use autokd::harness::dataset::{make_synthetic, DatasetKind};
use autokd::netbuilder::{scale_to_budget, BudgetConstraint, InputMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let samples: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(512);
    let params: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(200_000);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(120);
    let level_n: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(4);
    let lr: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let noise: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(0.08);

    let ds = make_synthetic(
        DatasetKind::Spirals,
        InputMode::Vector { dims: 2 },
        samples,
        2,
        noise,
        42,
        0.2,
    )
    .unwrap();
    let theta = GeneratorHyperparams {
        top: GraphGenSpec::er(level_n, 0.6),
        mid: GraphGenSpec::er(level_n, 0.6),
        bottom: GraphGenSpec::er(level_n, 0.6),
        kd_temperature: 1.0,
        kd_weight: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let graph = assemble(&theta, theta.unit_count(), &mut rng).unwrap();
    let model = scale_to_budget(&graph, ds.mode, BudgetConstraint::new(params), 2, &mut rng).unwrap();
    println!(
        "units={} params={} width={}",
        graph.unit_count(),
        model.param_count(),
        model.base_width
    );

    let (tr_in, tr_lb) = ds.gather(&ds.train_idx);
    let (va_in, va_lb) = ds.gather(&ds.val_idx);
    let data = TrainData { inputs: &tr_in, labels: &tr_lb, teacher_logits: None, n: tr_lb.len() };
    let cfg = TrainConfig {
        base_lr: lr,
        momentum: 0.9,
        batch_size: 32,
        kd: KdLossConfig::cross_entropy_only(),
    };
    let t0 = std::time::Instant::now();
    let mut trainer = Trainer::new(model, cfg, epochs, 3).unwrap();
    for e in 0..epochs {
        let m = trainer.step_epoch(&data).unwrap();
        if e % 10 == 0 || e + 1 == epochs {
            let (va, _) = evaluate(
                trainer.model(),
                &va_in,
                &va_lb,
                None,
                &KdLossConfig::cross_entropy_only(),
            )
            .unwrap();
            println!(
                "epoch {e:3} loss {:.4} train_acc {:.3} val_acc {:.3}",
                m.train_loss, m.train_accuracy, va
            );
        }
    }
    println!("elapsed: {:?}", t0.elapsed());
}
