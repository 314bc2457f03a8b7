use std::collections::HashMap;

use proptest::prelude::*;

use stepsql::corruption::{gen_pairs, verify_pair, CorruptionFeature};
use stepsql::dataset::{generate_corpus, read_examples, Example, GenerateConfig, Split};
use stepsql::grader::{grade, grade_batch, GoldRecord, Weights};
use stepsql::seed::stream;
use stepsql::sql::render_create_table;
use stepsql::{gen_instruction, gen_query, gen_schema, parse_sql, render_sql};
use stepsql::{Level, LevelRecipe, Variant, VocabPool};

fn level() -> impl Strategy<Value = Level> {
    prop::sample::select(Level::ALL.to_vec())
}

fn variant() -> impl Strategy<Value = Variant> {
    prop::sample::select(vec![Variant::Base, Variant::Syn])
}

fn candidate(pool: &VocabPool, level: Level, variant: Variant, seed: u64) -> Example {
    let mut rng = stream(seed);
    let schema = gen_schema(pool, level, &mut rng);
    let query = gen_query(&schema, &LevelRecipe::for_level(level), &mut rng);
    let ins = gen_instruction(&query, &schema, variant, pool, &mut rng);
    Example {
        id: seed,
        instruction: ins.text,
        context: render_create_table(&schema),
        response: render_sql(&query),
        level,
        variant,
        substitutions: ins.record,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn render_parse_round_trip(level in level(), seed in any::<u64>()) {
        let pool = VocabPool::builtin();
        let mut rng = stream(seed);
        let schema = gen_schema(&pool, level, &mut rng);
        let q = gen_query(&schema, &LevelRecipe::for_level(level), &mut rng);
        let text = render_sql(&q);
        let back = parse_sql(&text).unwrap();
        prop_assert_eq!(&back, &q);
        prop_assert_eq!(render_sql(&back), text);
        prop_assert!(q.validate(&schema).is_ok());
    }

    #[test]
    fn generated_examples_validate(level in level(), variant in variant(), seed in any::<u64>()) {
        let pool = VocabPool::builtin();
        let e = candidate(&pool, level, variant, seed);
        prop_assert_eq!(e.validate(), Ok(()));
    }

    #[test]
    fn gold_grades_perfect(level in level(), seed in any::<u64>()) {
        let pool = VocabPool::builtin();
        let e = candidate(&pool, level, Variant::Base, seed);
        let r = grade(&e.response, &e.query().unwrap());
        prop_assert!(r.exact_match);
        prop_assert_eq!(r.total, 1.0);
        let lower = grade(&e.response.to_lowercase(), &e.query().unwrap());
        prop_assert!((0.0..=1.0).contains(&lower.total));
    }

    #[test]
    fn grader_scores_stay_in_range(text in ".{0,80}", seed in any::<u64>()) {
        let pool = VocabPool::builtin();
        let e = candidate(&pool, Level::Cs5, Variant::Base, seed);
        let r = grade(&text, &e.query().unwrap());
        for s in [r.structural, r.semantic, r.implementation, r.total] {
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn parser_never_panics(text in "(SELECT|FROM|JOIN|ON|WHERE|ORDER|BY|ASC|DESC|AS|COUNT|\\(|\\)|,|=|<|'x'|1\\.5|a|b| ){0,24}") {
        let _ = parse_sql(&text);
    }

    #[test]
    fn weights_parse(a in 0u32..=100, b in 0u32..=100) {
        prop_assume!(a + b <= 100);
        let c = 100 - a - b;
        let w: Weights = format!("{},{},{}", a as f64 / 100.0, b as f64 / 100.0, c as f64 / 100.0).parse().unwrap();
        prop_assert!((w.structural + w.semantic + w.implementation - 1.0).abs() < 1e-9);
    }
}

/// An (instruction, context) pair never maps to two different responses.
#[test]
fn instruction_and_context_determine_the_query() {
    let pool = VocabPool::builtin();
    for variant in [Variant::Base, Variant::Syn] {
        for level in Level::ALL {
            let mut seen: HashMap<(String, String), String> = HashMap::new();
            for seed in 0..6_000u64 {
                let e = candidate(&pool, level, variant, seed);
                // Small schemas repeat often at CS1, which is what makes this a real check.
                if let Some(prev) = seen.insert((e.instruction.clone(), e.context.clone()), e.response.clone()) {
                    assert_eq!(prev, e.response, "{level} {variant}: {:?}", e.instruction);
                }
            }
        }
    }
}

#[test]
fn corpus_round_trips_through_files() {
    let pool = VocabPool::builtin();
    let corpus = generate_corpus(&pool, &GenerateConfig::new(Level::Cs5, Variant::Syn, 1_000, 3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    corpus.write_to(dir.path()).unwrap();
    let mut all = Vec::new();
    for split in Split::ALL {
        let text = std::fs::read_to_string(dir.path().join(split.file_name())).unwrap();
        assert!(text.ends_with('\n') && !text.contains('\r'));
        let examples = read_examples(text.as_bytes()).unwrap();
        assert_eq!(examples, corpus.split(split));
        all.extend(examples);
    }
    assert!(all.iter().enumerate().all(|(i, e)| e.id == i as u64));
}

#[test]
fn batch_grading_matches_single_grades() {
    let pool = VocabPool::builtin();
    let corpus = generate_corpus(&pool, &GenerateConfig::new(Level::Cs4, Variant::Base, 200, 9)).unwrap();
    let gold: Vec<GoldRecord> = corpus
        .examples
        .iter()
        .map(|e| GoldRecord {
            id: e.id,
            level: e.level,
            query: e.query().unwrap(),
        })
        .collect();
    // Every other prediction points at the neighbouring example's query.
    let preds: Vec<(u64, String)> = corpus
        .examples
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let src = if i % 2 == 0 { e } else { &corpus.examples[i - 1] };
            (e.id, src.response.clone())
        })
        .collect();
    let summary = grade_batch(&preds, &gold, &Weights::default()).unwrap();
    let mut total = 0.0;
    for ((id, text), g) in preds.iter().zip(&gold) {
        let r = grade(text, &g.query);
        assert_eq!(summary.reports.iter().find(|(i, _)| i == id).unwrap().1, r);
        total += r.total;
    }
    assert!((summary.mean_total - total / gold.len() as f64).abs() < 1e-12);
    assert!(summary.exact_match_accuracy >= 0.5 && summary.exact_match_accuracy < 1.0);
}

#[test]
fn corruption_pairs_verify_at_every_level() {
    let pool = VocabPool::builtin();
    for level in Level::ALL {
        let corpus = generate_corpus(&pool, &GenerateConfig::new(level, Variant::Syn, 400, 2)).unwrap();
        for feature in CorruptionFeature::ALL.into_iter().filter(|f| f.supported_at(level)) {
            let batches = gen_pairs(&corpus.examples, &pool, feature, 25, 2, level.number() as u64).unwrap();
            for p in batches.iter().flatten() {
                assert!(verify_pair(p), "{level} {feature}: {p:#?}");
            }
        }
    }
}
