use sita_core::corpus::{load_corpus, Gender, Split, Token};
use sita_core::encoder::load_checkpoint;
use sita_core::eval::{retrieval_topk, LabeledEmbedding};
use sita_core::math::PoolingMode;

fn main() {
    let tokens = load_corpus(std::path::Path::new("/tmp/run1/corpus")).unwrap();
    let stack = load_checkpoint(std::path::Path::new("/tmp/run1/stage1.sitc")).unwrap();
    let layer = stack.cfg.feature_layer;
    for (name, mode) in [
        ("mean", PoolingMode::Mean),
        ("max", PoolingMode::Max),
        ("max_mean", PoolingMode::MaxMean),
    ] {
        let emb = |filter: fn(&&Token) -> bool| -> Vec<LabeledEmbedding> {
            tokens
                .iter()
                .filter(|t| t.split == Split::Test)
                .filter(filter)
                .map(|t| LabeledEmbedding {
                    id: t.id.clone(),
                    word: t.word.clone(),
                    embedding: stack.extract_embedding(&t.features, layer, mode).unwrap(),
                })
                .collect()
        };
        let f = emb(|t| t.gender == Gender::F);
        let m = emb(|t| t.gender == Gender::M);
        let fm = retrieval_topk(&f, &m, 5).unwrap();
        let mf = retrieval_topk(&m, &f, 5).unwrap();
        println!(
            "{name}: avg_top1={:.4} avg_top5={:.4}",
            (fm.top1 + mf.top1) / 2.0,
            (fm.top5 + mf.top5) / 2.0
        );
    }
}
