use std::collections::BTreeMap;

use comfygi_core::defaults::{default_workflow, KsamplerDomain, SAMPLERS, SCHEDULERS};
use comfygi_core::llm::{PromptSide, ScriptedLlm};
use comfygi_core::mutation::{
    apply_mutation, sample_checkpoint_mutation, sample_ksampler_mutation, sample_prompt_llm_mutation,
    sample_prompt_statement_mutation, sample_prompt_word_mutation, KsamplerProperty, KsamplerSetting,
};
use comfygi_core::rng::SearchRng;
use comfygi_core::text::{split_statements, split_words, StatementEdit, WordEdit};
use comfygi_core::{InputValue, MutationConfig, MutationOp, Workflow};
use proptest::prelude::*;

fn with_text(node: &str, text: &str) -> Workflow {
    default_workflow().set_field(node, "text", InputValue::Text(text.into())).unwrap()
}

fn prompt_of(w: &Workflow, node: &str) -> String {
    w.prompt_text(node).unwrap().to_string()
}

fn multiset(words: &[String]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for w in words {
        *m.entry(w.clone()).or_insert(0) += 1;
    }
    m
}

fn words() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[a-z]{1,7}", 1..12)
}

fn statements() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[a-z]{1,6}( [a-z]{1,6}){0,2}", 1..8)
}

fn draw(property: KsamplerProperty, seed: u64) -> KsamplerSetting {
    KsamplerSetting::sample(property, &KsamplerDomain::default(), &mut SearchRng::from_seed(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn seed_in_domain(seed in any::<u64>()) {
        let KsamplerSetting::Seed(v) = draw(KsamplerProperty::Seed, seed) else { panic!() };
        prop_assert!(v <= 100_000);
    }

    #[test]
    fn steps_in_domain(seed in any::<u64>()) {
        let KsamplerSetting::Steps(v) = draw(KsamplerProperty::Steps, seed) else { panic!() };
        prop_assert!((1..200).contains(&v));
    }

    #[test]
    fn cfg_in_domain(seed in any::<u64>()) {
        let KsamplerSetting::Cfg(v) = draw(KsamplerProperty::Cfg, seed) else { panic!() };
        prop_assert!((0.0..25.0).contains(&v), "{}", v);
    }

    #[test]
    fn sampler_in_list(seed in any::<u64>()) {
        let KsamplerSetting::SamplerName(v) = draw(KsamplerProperty::SamplerName, seed) else { panic!() };
        prop_assert!(SAMPLERS.contains(&v.as_str()));
    }

    #[test]
    fn scheduler_in_list(seed in any::<u64>()) {
        let KsamplerSetting::Scheduler(v) = draw(KsamplerProperty::Scheduler, seed) else { panic!() };
        prop_assert!(SCHEDULERS.contains(&v.as_str()));
    }

    #[test]
    fn denoise_in_domain(seed in any::<u64>()) {
        let KsamplerSetting::Denoise(v) = draw(KsamplerProperty::Denoise, seed) else { panic!() };
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!(((v * 100.0).round() - v * 100.0).abs() < 1e-9);
    }

    #[test]
    fn sampled_ksampler_mutation_applies(seed in any::<u64>()) {
        let w = default_workflow();
        let roles = w.resolve_roles().unwrap();
        let m = sample_ksampler_mutation(&w, &roles, &MutationConfig::default(), &mut SearchRng::from_seed(seed)).unwrap();
        let out = apply_mutation(&w, &m).unwrap();
        prop_assert!(out.validate().is_empty());
    }

    #[test]
    fn checkpoint_never_incumbent(seed in any::<u64>(), start in 0usize..9) {
        let cfg = MutationConfig::default();
        let w = default_workflow()
            .set_field("4", "ckpt_name", InputValue::Text(cfg.checkpoint_pool[start].clone()))
            .unwrap();
        let roles = w.resolve_roles().unwrap();
        let m = sample_checkpoint_mutation(&w, &roles, &cfg, &mut SearchRng::from_seed(seed)).unwrap();
        let MutationOp::Checkpoint { ckpt_name } = &m.op else { panic!() };
        prop_assert_ne!(ckpt_name, &cfg.checkpoint_pool[start]);
        prop_assert!(cfg.checkpoint_pool.contains(ckpt_name));
    }

    #[test]
    fn word_edits_preserve_or_shift(ws in words(), seed in any::<u64>()) {
        let w = with_text("6", &ws.join(" "));
        let roles = w.resolve_roles().unwrap();
        let m = sample_prompt_word_mutation(&w, &roles, PromptSide::Positive, &mut SearchRng::from_seed(seed)).unwrap();
        let before = split_words(&prompt_of(&w, "6"));
        let after = split_words(&prompt_of(&apply_mutation(&w, &m).unwrap(), "6"));
        let MutationOp::PromptWord(edit) = &m.op else { panic!() };
        match edit {
            WordEdit::Switch { .. } => {
                prop_assert_eq!(multiset(&after), multiset(&before));
            }
            WordEdit::Remove { index } => {
                prop_assert_eq!(after.len() + 1, before.len());
                let mut expected = multiset(&before);
                *expected.get_mut(&before[*index]).unwrap() -= 1;
                expected.retain(|_, n| *n > 0);
                prop_assert_eq!(multiset(&after), expected);
            }
            WordEdit::Copy { from, .. } => {
                prop_assert_eq!(after.len(), before.len() + 1);
                let mut expected = multiset(&before);
                *expected.get_mut(&before[*from]).unwrap() += 1;
                prop_assert_eq!(multiset(&after), expected);
            }
        }
    }

    #[test]
    fn statement_edits_shift_counts(ss in statements(), seed in any::<u64>(), negative in any::<bool>()) {
        let (side, node) = if negative { (PromptSide::Negative, "7") } else { (PromptSide::Positive, "6") };
        let w = with_text(node, &ss.join(", "));
        let roles = w.resolve_roles().unwrap();
        let cfg = MutationConfig::default();
        let m = sample_prompt_statement_mutation(&w, &roles, side, &cfg, &mut SearchRng::from_seed(seed)).unwrap();
        prop_assert_eq!(&m.target, node);
        let before = split_statements(&prompt_of(&w, node));
        let after = split_statements(&prompt_of(&apply_mutation(&w, &m).unwrap(), node));
        let MutationOp::PromptStatement(edit) = &m.op else { panic!() };
        match edit {
            StatementEdit::Remove { .. } => prop_assert_eq!(after.len() + 1, before.len()),
            StatementEdit::Copy { .. } | StatementEdit::Add { .. } => prop_assert_eq!(after.len(), before.len() + 1),
            StatementEdit::Switch { .. } => prop_assert_eq!(multiset(&after), multiset(&before)),
            StatementEdit::Replace { index, statement } => {
                prop_assert_eq!(after.len(), before.len());
                prop_assert_eq!(&after[*index], statement);
            }
        }
        if let StatementEdit::Add { statement, .. } | StatementEdit::Replace { statement, .. } = edit {
            prop_assert!(cfg.statement_pool(side).contains(statement));
        }
    }

    #[test]
    fn mutation_touches_one_node(seed in any::<u64>(), op in 0usize..5) {
        let w = default_workflow();
        let roles = w.resolve_roles().unwrap();
        let cfg = MutationConfig::default();
        let llm = ScriptedLlm::new(cfg.positive_statement_pool.clone(), cfg.negative_statement_pool.clone());
        let rng = &mut SearchRng::from_seed(seed);
        let m = match op {
            0 => sample_checkpoint_mutation(&w, &roles, &cfg, rng),
            1 => sample_ksampler_mutation(&w, &roles, &cfg, rng),
            2 => sample_prompt_word_mutation(&w, &roles, PromptSide::Negative, rng),
            3 => sample_prompt_statement_mutation(&w, &roles, PromptSide::Positive, &cfg, rng),
            _ => sample_prompt_llm_mutation(&w, &roles, PromptSide::Positive, &cfg, rng, &llm),
        }
        .unwrap();
        let out = apply_mutation(&w, &m).unwrap();
        for (id, node) in w.nodes() {
            if id != m.target {
                prop_assert_eq!(Some(node), out.node(id));
            }
        }
        prop_assert_eq!(out.len(), w.len());
    }
}

#[test]
fn same_seed_same_mutation() {
    let w = default_workflow();
    let roles = w.resolve_roles().unwrap();
    let cfg = MutationConfig::default();
    for seed in 0..200u64 {
        let a =
            sample_prompt_statement_mutation(&w, &roles, PromptSide::Positive, &cfg, &mut SearchRng::from_seed(seed));
        let b =
            sample_prompt_statement_mutation(&w, &roles, PromptSide::Positive, &cfg, &mut SearchRng::from_seed(seed));
        assert_eq!(a, b);
        let a = sample_ksampler_mutation(&w, &roles, &cfg, &mut SearchRng::from_seed(seed));
        let b = sample_ksampler_mutation(&w, &roles, &cfg, &mut SearchRng::from_seed(seed));
        assert_eq!(a, b);
    }
}

/// Checkpoint choice is uniform over the 8 non-incumbent entries: every
/// count lies within 5 standard deviations of n/8, and the chi-square
/// statistic (7 degrees of freedom) stays below the 0.999 quantile 24.32.
#[test]
fn checkpoint_choice_is_uniform() {
    let w = default_workflow();
    let roles = w.resolve_roles().unwrap();
    let cfg = MutationConfig::default();
    let n = 10_000u64;
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for seed in 0..n {
        let m = sample_checkpoint_mutation(&w, &roles, &cfg, &mut SearchRng::from_seed(seed)).unwrap();
        let MutationOp::Checkpoint { ckpt_name } = m.op else { unreachable!() };
        *counts.entry(ckpt_name).or_insert(0) += 1;
    }
    assert_eq!(counts.len(), 8);
    let p = 1.0 / 8.0;
    let expected = n as f64 * p;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    let mut chi2 = 0.0;
    for (name, c) in &counts {
        let c = *c as f64;
        assert!((c - expected).abs() < 5.0 * sd, "{name}: {c}");
        chi2 += (c - expected).powi(2) / expected;
    }
    assert!(chi2 < 24.32, "chi2 {chi2}");
}
