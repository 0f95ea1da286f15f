use mcmpst::ctxlts::{reach, safe_in, step, step_active};
use mcmpst::generate::Gen;
use mcmpst::reduce::{explore, normalize};
use mcmpst::surface::{parse_context, parse_process, parse_type, print_context, print_process, print_type};
use mcmpst::typemeta::{is_well_formed, merge_similar, pre, unfold};
use mcmpst::{compose_contexts, erase_end, ActiveContext, GlobalEnv, Rational, SessionType};
use proptest::prelude::*;

fn roles(rs: &[&str]) -> Vec<String> {
    rs.iter().map(|r| r.to_string()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printed_types_parse_back(seed in any::<u64>()) {
        let mut g = Gen::new(seed);
        let t = g.ty(&roles(&["a", "b"]), &roles(&["c", "d"]), 4);
        prop_assert_eq!(parse_type(&print_type(&t)).unwrap(), t);
    }

    #[test]
    fn printed_contexts_parse_back(seed in any::<u64>()) {
        let d = Gen::new(seed).context(3, 3);
        prop_assert_eq!(parse_context(&print_context(&d)).unwrap(), d);
    }

    #[test]
    fn printed_processes_parse_back(seed in any::<u64>()) {
        let mut g = Gen::new(seed);
        let p = g.process(4);
        prop_assert_eq!(parse_process(&print_process(&p)).unwrap(), p.clone());
        let q = g.system(5).process;
        prop_assert_eq!(parse_process(&print_process(&q)).unwrap(), q);
    }

    #[test]
    fn parsing_arbitrary_text_never_panics(text in "[a-z0-9 .:;,()\\[\\]{}+<>?!|-]{0,60}") {
        let _ = parse_type(&text);
        let _ = parse_process(&text);
        let _ = parse_context(&text);
    }

    #[test]
    fn rational_arithmetic_is_exact(a in 1i64..1000, b in 1i64..1000, c in 1i64..1000, d in 1i64..1000) {
        let x = Rational::new(a, b);
        let y = Rational::new(c, d);
        prop_assert_eq!(&(&x + &y) - &y, x.clone());
        prop_assert_eq!(&(&x * &y) * &Rational::new(d, c), x);
    }

    #[test]
    fn erase_end_is_idempotent(seed in any::<u64>()) {
        let mut d = Gen::new(seed).context(3, 2);
        d.set(mcmpst::Channel::single("t", "z"), SessionType::end());
        let once = erase_end(&d);
        prop_assert_eq!(erase_end(&once), once);
    }

    #[test]
    fn composition_commutes(s1 in any::<u64>(), s2 in any::<u64>()) {
        let d1 = Gen::new(s1).context(2, 2);
        let d2 = Gen::new(s2).context(2, 2);
        let d2: mcmpst::LocalContext = d2.iter().map(|(c, t)| (mcmpst::Channel::new("u", c.roles.iter().cloned()), t.clone())).collect();
        let ab = compose_contexts(&d1, &d2).unwrap();
        let ba = compose_contexts(&d2, &d1).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!(compose_contexts(&d1, &d1).is_err() || d1.is_empty());
    }

    #[test]
    fn merge_keeps_prefixes(seed in any::<u64>()) {
        let t = Gen::new(seed).ty(&roles(&["a"]), &roles(&["b", "c"]), 4);
        prop_assert_eq!(pre(&merge_similar(&t)), pre(&t));
    }

    #[test]
    fn unfolding_keeps_well_formedness_and_prefixes(seed in any::<u64>()) {
        let mut g = Gen::new(seed);
        let t = g.ty(&roles(&["a"]), &roles(&["b"]), 4);
        if let SessionType::Rec(..) = &*t {
            let u = unfold(&t).unwrap();
            prop_assert_eq!(is_well_formed(&u), is_well_formed(&t));
            prop_assert_eq!(pre(&u), pre(&t));
        }
    }

    #[test]
    fn context_steps_are_distributions(seed in any::<u64>()) {
        let d = Gen::new(seed).context(3, 3);
        let ts = step(&d).unwrap();
        prop_assert_eq!(step_active(&ActiveContext::Plain(d.clone())).unwrap(), ts.clone());
        let g1 = reach(&d).unwrap();
        prop_assert_eq!(g1, reach(&d).unwrap());
    }

    #[test]
    fn normalize_is_idempotent(seed in any::<u64>()) {
        let mut g = Gen::new(seed);
        for p in [g.process(4), g.system(5).process] {
            let n = normalize(&p);
            prop_assert_eq!(normalize(&n), n);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn safety_is_preserved_by_reduction(seed in any::<u64>()) {
        let env = GlobalEnv::new();
        let p = Gen::new(seed).system(5).process;
        let d = mcmpst::check::synth(&env, &p).unwrap();
        let g = reach(&d).unwrap();
        prop_assert!(safe_in(&g).holds);
        for e in &g.edges {
            prop_assert!(mcmpst::ctxlts::safe(&g.states[e.to]).unwrap().holds);
        }
    }

    #[test]
    fn exhaustive_outcomes_total_one(seed in any::<u64>()) {
        let p = Gen::new(seed).system(5).process;
        let ex = explore(&p, 12).unwrap();
        prop_assert!(!ex.truncated);
        let total: Rational = ex.outcomes.iter().map(|o| &o.mass).sum();
        prop_assert_eq!(total, Rational::one());
    }
}
