use mcmpst::check::{canonical, check, synth};
use mcmpst::ctxlts::{dfree, safe};
use mcmpst::generate::{error_and_deadlock_free, subject_reduction, Gen};
use mcmpst::subtype::{check_derivation, sub_multi};
use mcmpst::synth::synthesize_interface;
use mcmpst::typemeta::is_well_formed;
use mcmpst::GlobalEnv;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn generated_systems_are_well_typed(seed in any::<u64>()) {
        let env = GlobalEnv::new();
        let p = Gen::new(seed).system(6).process;
        let d = synth(&env, &p).unwrap();
        prop_assert!(check(&env, &p, &d).verdict);
        prop_assert!(canonical(&env, &p, &d).holds);
        prop_assert!(safe(&d).unwrap().holds);
        prop_assert!(dfree(&d).unwrap().holds);
    }

    #[test]
    fn subject_reduction_on_first_steps(seed in any::<u64>()) {
        let env = GlobalEnv::new();
        let p = Gen::new(seed).system(6).process;
        let d = synth(&env, &p).unwrap();
        prop_assert!(subject_reduction(&env, &p, &d).is_ok());
    }

    #[test]
    fn typed_systems_neither_fail_nor_stick(seed in any::<u64>()) {
        let p = Gen::new(seed).system(6).process;
        prop_assert_eq!(error_and_deadlock_free(&p, 12), Ok(()));
    }

    #[test]
    fn interfaces_are_sound(seed in any::<u64>()) {
        let env = GlobalEnv::new();
        let p = Gen::new(seed).system(5).process;
        let d = synth(&env, &p).unwrap();
        let i = synthesize_interface(&d).unwrap();
        prop_assert!(is_well_formed(&i.ty));
        prop_assert!(check_derivation(&i.derivation));
        prop_assert!(i.roles.iter().all(|r| d.has_role("s", r)));
        let again = synthesize_interface(&i.context()).unwrap();
        prop_assert!(sub_multi(&i.context(), &again.context()).unwrap().is_some());
    }
}
