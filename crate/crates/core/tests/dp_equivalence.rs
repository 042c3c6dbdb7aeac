use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tousim_core::oracle::{certify_against_dp, DiscretizedInstance};

#[test]
fn analytic_policy_matches_dp_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..60 {
        let inst = DiscretizedInstance::random(&mut rng, 1, 6, 4);
        let check = certify_against_dp(&inst, 1e-9).unwrap();
        assert!(check.passed, "case {case}: {check:?} on {inst:?}");
    }
}

#[test]
fn multi_firm_instances_are_solved_as_one_pool() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..10 {
        let inst = DiscretizedInstance::random(&mut rng, 2, 3, 3);
        let check = certify_against_dp(&inst, 1e-9).unwrap();
        assert!(check.passed, "case {case}: {check:?}");
    }
}
