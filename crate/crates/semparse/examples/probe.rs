use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use semparse::data::Corpus;
use semparse::harness::PreparedCorpus;
use semparse::model::{ModelConfig, Seq2Seq};
use semparse::train::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let beam: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(40);
    let hidden: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(32);
    let frac: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(0.0);
    let domain = args.get(6).cloned().unwrap_or_else(|| "recipes".to_string());
    let seed: u64 = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(11);
    let reward: RewardMode = args.get(8).map(|s| s.parse().unwrap()).unwrap_or(RewardMode::Denotation);
    let sup_only: bool = args.get(9).map(|s| s == "sup").unwrap_or(false);
    let patience: usize = args.get(10).and_then(|s| s.parse().ok()).unwrap_or(epochs);
    let pre_lr: Option<f64> = args.get(11).and_then(|s| s.parse().ok());
    let corpus = Corpus::load_dir(std::path::Path::new("/tmp/c300")).unwrap();
    let prep = PreparedCorpus::prepare(corpus).unwrap();
    let pick = |set: &[TrainInstance]| -> Vec<TrainInstance> {
        if domain == "all" { set.to_vec() }
        else { set.iter().filter(|i| i.domain == domain).cloned().collect() }
    };
    let (train, dev, test) = (pick(&prep.train), pick(&prep.dev), pick(&prep.test));
    let cfg = TrainConfig {
        batch_size: 16,
        max_epochs: epochs,
        patience,
        beam_width: beam,
        reward_mode: reward,
        optim: OptimConfig { lr, ..Default::default() },
        seed: 1,
        pretrain_optim: pre_lr.map(|l| OptimConfig { lr: l, ..Default::default() }),
        ..TrainConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Seq2Seq::<f64>::new(
        ModelConfig::new(1, hidden, 24, prep.src_vocab.len(), prep.tgt_vocab.len()),
        &mut rng,
    ).unwrap();
    let t0 = std::time::Instant::now();
    if sup_only {
        // Pretraining phase in isolation: supervised on a `frac` subset.
        let k = (frac * train.len() as f64).round() as usize;
        use rand::seq::SliceRandom;
        let mut idx: Vec<usize> = (0..train.len()).collect();
        let mut srng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xA5A5_5A5A);
        idx.shuffle(&mut srng);
        let subset: Vec<TrainInstance> = idx[..k].iter().map(|&i| train[i].clone()).collect();
        train_supervised(&mut model, &subset, &dev, &cfg).unwrap();
        let dev_acc = denotation_accuracy(&model, &dev, &prep.corpus.kbs, &prep.tgt_vocab).unwrap();
        println!("SUP k={k} dev_hard={dev_acc:.3}");
    } else {
        let log = pretrain_then(
            &mut model, ContinueWith::Weak, frac, &train, &dev,
            &prep.corpus.kbs, &prep.tgt_vocab, &cfg,
        ).unwrap();
        let rewards: Vec<f64> = log.rows.iter().filter(|r| r.metric == "expected_reward").map(|r| r.value).collect();
        let accs: Vec<f64> = log.rows.iter().filter(|r| r.metric == "denotation_acc").map(|r| r.value).collect();
        print!("reward:");
        for (i, r) in rewards.iter().enumerate() { if i % 5 == 0 || i + 1 == rewards.len() { print!(" {i}:{r:.3}"); } }
        println!();
        print!("devacc:");
        for (i, a) in accs.iter().enumerate() { if i % 5 == 0 || i + 1 == accs.len() { print!(" {i}:{a:.3}"); } }
        println!();
    }
    let secs = t0.elapsed().as_secs_f64();
    let acc = denotation_accuracy(&model, &test, &prep.corpus.kbs, &prep.tgt_vocab).unwrap();
    println!("TEST {acc:.4}  ({secs:.1}s)");
}
