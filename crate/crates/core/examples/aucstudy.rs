use std::sync::Arc;
use std::time::Instant;

use rotscore::eval::{labeled_pairs, schema_split, scorer_auc, SplitConfig};
use rotscore::fixtures::toy_schemas;
use rotscore::gmn::*;
use rotscore::reward::{RewardConfig, Scorer};

fn main() {
    let schemas = toy_schemas();
    let split = schema_split(&schemas, &SplitConfig::default()).unwrap();
    println!("held {:?}", split.held_out_schemas);
    for s in [Scorer::Relpm, Scorer::Astpm, Scorer::Ex] {
        println!("{s:?} auc {:.4}", scorer_auc(&split.held_out, &schemas, &RewardConfig::new(s)).unwrap());
    }
    let epochs: usize = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(0);
    if epochs == 0 {
        return;
    }
    let train_set = labeled_pairs(&split.train, &schemas, 16).unwrap();
    let ho_set = labeled_pairs(&split.held_out, &schemas, 16).unwrap();
    let cfg = TrainConfig { epochs, schedule: Schedule::Cosine { lr: 1e-3, min_lr: 5e-5 }, ..Default::default() };
    let t = Instant::now();
    let out = train(&GmnModel::<f32>::new(Hyperparams::default(), 0), &train_set, Some(&ho_set), &cfg).unwrap();
    println!("train {:.1}s raw {:?}", t.elapsed().as_secs_f64(), out.history.epochs.last().unwrap().held_out_auc);
    let mut c = RewardConfig::new(Scorer::Gmn);
    c.model = Some(Arc::new(AnyModel::F32(out.model)));
    println!("gmn auc {:.4}", scorer_auc(&split.held_out, &schemas, &c).unwrap());
}
