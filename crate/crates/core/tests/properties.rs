use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use titlepress::config::ModelConfig;
use titlepress::corpus::{encode_tokens, tokenize, Vocabulary, PAD};
use titlepress::embedder::build_word_table;
use titlepress::nn::ModelRng;
use titlepress::pretrain::{select_replacement, SkipGramConfig, SkipGramModel};
use titlepress::train_eval::{exact_match, rouge1_f1};
use titlepress::{LossWeights, TitleModel};

fn words() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!["oz", "13", "fruit", "cake", ","]), 0..8).prop_map(|w| w.join(" "))
}

fn small_model() -> (Vocabulary, TitleModel, ModelConfig) {
    let config = ModelConfig { max_len: 8, max_word_len: 6, word_dim: 6, char_in_dim: 3, char_dim: 4, conv_width: 2, hidden: 4, ..ModelConfig::default() };
    let vocab = Vocabulary::build([tokenize("greek yogurt , 13 oz fruit cake plain")]).unwrap();
    let (table, _) = build_word_table(&vocab, None, config.word_dim, &mut ModelRng::seed_from_u64(0)).unwrap();
    let model = TitleModel::new(config.clone(), Arc::new(table), vocab.char_count(), 4).unwrap();
    (vocab, model, config)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_match_implies_full_rouge(a in words(), pad in "[ ]{0,3}") {
        let b = format!("{pad}{}{pad}", a.replace(' ', "  "));
        prop_assert!(exact_match(&a, &b));
        prop_assert_eq!(rouge1_f1(&a, &b), 1.0);
    }

    #[test]
    fn padding_contents_do_not_change_predictions_or_loss(
        len in 1usize..8,
        junk in prop::collection::vec(0usize..10, 8),
        labels in prop::collection::vec(0u8..2, 8),
    ) {
        let (vocab, model, config) = small_model();
        let tokens: Vec<&str> = ["greek", "yogurt", ",", "13", "oz", "fruit", "cake", "plain"][..len].to_vec();
        let clean = encode_tokens(&tokens, Some(&labels[..len]), &vocab, &config).unwrap();
        let mut dirty = clean.clone();
        let mut dirty_labels = dirty.labels.clone().unwrap();
        for i in len..config.max_len {
            dirty.x_w[i] = junk[i] % vocab.word_count();
            dirty.x_c.row_mut(i).fill(junk[i] % vocab.char_count());
            dirty_labels[i] = labels[i];
        }
        dirty.labels = Some(dirty_labels);
        prop_assume!(dirty.x_w[len..].iter().any(|&w| w != PAD) || len == config.max_len);
        let (p, q) = (model.predict(&clean).unwrap(), model.predict(&dirty).unwrap());
        prop_assert_eq!(&p[..len], &q[..len]);
        let w = LossWeights::FINE_TUNE;
        prop_assert_eq!(model.loss(&clean, w, None).unwrap(), model.loss(&dirty, w, None).unwrap());
    }
}

#[test]
fn replacement_is_deterministic_across_model_reloads() {
    let titles: Vec<Vec<String>> = ["greek yogurt , 13 oz", "fruit cake , 12 oz", "plain greek yogurt , 32 oz"]
        .iter()
        .cycle()
        .take(60)
        .map(|t| tokenize(t))
        .collect();
    let model = SkipGramModel::train(&titles, &SkipGramConfig { dim: 8, epochs: 2, ..Default::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sg.json");
    model.save(&path).unwrap();
    let reloaded = SkipGramModel::load(&path).unwrap();
    for title in &titles[..3] {
        for i in 0..title.len() {
            let a = select_replacement(&model, title, i, None).unwrap();
            assert_eq!(a, select_replacement(&model, title, i, None).unwrap());
            assert_eq!(a, select_replacement(&reloaded, title, i, None).unwrap());
        }
    }
}
