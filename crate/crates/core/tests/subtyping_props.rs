use mcmpst::ctxlts::{dfree, safe};
use mcmpst::generate::Gen;
use mcmpst::subtype::{
    check_derivation, check_std_derivation, sub_multi, sub_single, sub_standard, Derivation, Goal,
};
use mcmpst::{ActiveContext, Channel, GlobalEnv, LocalContext};
use proptest::prelude::*;

fn roles(rs: &[&str]) -> Vec<String> {
    rs.iter().map(|r| r.to_string()).collect()
}

fn empty_goals_absorb(d: &Derivation<Goal>) -> bool {
    let here = match (&d.goal.lhs, d.goal.rhs.is_empty()) {
        (ActiveContext::Plain(l), true) => l.is_empty() && d.goal.prob.is_one(),
        _ => true,
    };
    here && d.children.iter().all(empty_goals_absorb)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reflexive(seed in any::<u64>()) {
        let d = Gen::new(seed).context(3, 4);
        let der = sub_multi(&d, &d).unwrap().expect("reflexivity");
        prop_assert!(check_derivation(&der));
        prop_assert!(empty_goals_absorb(&der));
    }

    #[test]
    fn transitive(seed in any::<u64>()) {
        let mut g = Gen::new(seed);
        let d3 = g.context(3, 3);
        let d2 = g.weaken_context(&d3);
        let d1 = g.weaken_context(&d2);
        if let (Some(a), Some(b)) = (sub_multi(&d1, &d2).unwrap(), sub_multi(&d2, &d3).unwrap()) {
            prop_assert!(check_derivation(&a) && check_derivation(&b));
            let c = sub_multi(&d1, &d3).unwrap();
            prop_assert!(c.map(|c| check_derivation(&c)).unwrap_or(false));
        }
    }

    #[test]
    fn standard_included_in_single(seed in any::<u64>()) {
        let mut g = Gen::new(seed);
        let t = g.ty(&roles(&["a"]), &roles(&["b", "c"]), 4);
        let t1 = g.weaken_std(&t);
        if let Some(der) = sub_standard(&t1, &t).unwrap() {
            prop_assert!(check_std_derivation(&der));
            let c = Channel::single("s", "a");
            let lhs = LocalContext::singleton(c.clone(), t1);
            let rhs = LocalContext::singleton(c, t);
            let single = sub_single(&lhs, &rhs).unwrap().expect("single accepts");
            prop_assert!(check_derivation(&single));
        }
    }

    #[test]
    fn single_included_in_multi(seed in any::<u64>()) {
        let mut g = Gen::new(seed);
        let d = g.context(3, 3);
        let d1 = g.weaken_context(&d);
        if let Some(der) = sub_single(&d1, &d).unwrap() {
            prop_assert!(check_derivation(&der));
            let multi = sub_multi(&d1, &d).unwrap().expect("multi accepts");
            prop_assert!(check_derivation(&multi));
        }
    }

    #[test]
    fn subtypes_inherit_safety_and_deadlock_freedom(seed in any::<u64>()) {
        let mut g = Gen::new(seed);
        let p = g.system(4).process;
        let d = mcmpst::check::synth(&GlobalEnv::new(), &p).unwrap();
        let d1 = g.weaken_context(&d);
        if sub_multi(&d1, &d).unwrap().is_some() {
            prop_assert!(safe(&d1).unwrap().holds);
            prop_assert!(dfree(&d1).unwrap().holds);
        }
    }
}
