mod common;

use proptest::prelude::*;

use layoutbench::prompt::{
    compose_complex, extract_objects, instantiate_template, ComposeOptions, TemplateSpec,
};
use layoutbench::Scenario;

fn arb_template_cell() -> impl Strategy<Value = (Scenario, usize)> {
    let cells: Vec<(Scenario, usize)> = Scenario::CLOSED
        .iter()
        .filter(|&&s| s != Scenario::ComplexCompositions)
        .flat_map(|&s| s.object_counts().iter().map(move |&n| (s, n)))
        .collect();
    prop::sample::select(cells)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn extraction_recovers_template_heads((scenario, n) in arb_template_cell(), seed in any::<u64>()) {
        let vocab = common::vocab();
        let spec = TemplateSpec::for_scenario(scenario, n).unwrap();
        let c = instantiate_template(&spec, &vocab, seed).unwrap();
        let found = extract_objects(&c.prompt, &vocab).unwrap();
        prop_assert_eq!(found, c.objects);
    }

    #[test]
    fn templates_are_deterministic((scenario, n) in arb_template_cell(), seed in any::<u64>()) {
        let vocab = common::vocab();
        let spec = TemplateSpec::for_scenario(scenario, n).unwrap();
        prop_assert_eq!(
            instantiate_template(&spec, &vocab, seed).unwrap(),
            instantiate_template(&spec, &vocab, seed).unwrap()
        );
    }

    #[test]
    fn fallback_compositions_mention_exactly_n_objects(n in 1usize..=4, seed in any::<u64>()) {
        let vocab = common::vocab();
        let c = compose_complex(&vocab, n, None, seed, &ComposeOptions::default()).unwrap();
        prop_assert_eq!(c.objects.len(), n);
        let heads: Vec<String> = extract_objects(&c.prompt, &vocab).unwrap().into_iter().map(|o| o.head).collect();
        let expected: Vec<String> = c.objects.iter().map(|o| o.head.clone()).collect();
        prop_assert_eq!(heads, expected);
    }
}
