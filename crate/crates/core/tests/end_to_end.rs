use conjset_core::field::{load_field_stack, save_field_stack};
use conjset_core::simharness::{generate_noise, SimulationSpec};
use conjset_core::{
    analyze, check_inclusion, BootstrapConfig, CombineMode, CombineSpec, DesignSpec, FieldStack,
    Lattice, ScalarField, Sign, Truth,
};
use proptest::prelude::*;

fn disk(lat: Lattice, centre: (f64, f64), radius: f64, amp: f64) -> ScalarField {
    ScalarField::from_fn(lat, |r, c| {
        let (dy, dx) = (r as f64 - centre.0, c as f64 - centre.1);
        if dx * dx + dy * dy <= radius * radius {
            amp
        } else {
            0.0
        }
    })
}

fn bump(lat: Lattice, centre: (f64, f64), width: f64, amp: f64) -> ScalarField {
    ScalarField::from_fn(lat, |r, c| {
        let (dy, dx) = (r as f64 - centre.0, c as f64 - centre.1);
        amp * (-(dx * dx + dy * dy) / (2.0 * width * width)).exp()
    })
}

fn noisy(means: &[ScalarField], n: usize, seed: u64) -> Vec<FieldStack> {
    let lat = means[0].lattice();
    let spec = SimulationSpec {
        width: lat.width(),
        height: lat.height(),
        n,
        conditions: means.len(),
        ..SimulationSpec::default()
    };
    let mut stacks = generate_noise(&spec, seed).unwrap();
    for (s, mu) in stacks.iter_mut().zip(means) {
        s.add_field(mu).unwrap();
    }
    stacks
}

fn with_designs(stacks: Vec<FieldStack>) -> Vec<(FieldStack, DesignSpec)> {
    stacks
        .into_iter()
        .map(|s| {
            let d = DesignSpec::intercept_only(s.n()).unwrap();
            (s, d)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn analysis_is_nested_and_calibrated(
        seed in any::<u64>(),
        shift in -3.0f64..3.0,
        amp in 1.0f64..3.0,
        disjunction in any::<bool>(),
        negate in any::<bool>(),
    ) {
        let lat = Lattice::new(18, 16).unwrap();
        let means = [disk(lat, (7.5, 8.5 - shift), 5.0, amp), disk(lat, (7.5, 8.5 + shift), 5.0, amp)];
        let mode = if disjunction { CombineMode::Disjunction } else { CombineMode::Conjunction };
        let second = if negate { Sign::Negative } else { Sign::Positive };
        let c = if negate { vec![0.8, 0.5 * amp] } else { vec![0.8, 0.8] };
        let spec = CombineSpec::new(c, vec![Sign::Positive, second], mode).unwrap();
        let boot = BootstrapConfig::new(150, 0.1, seed).unwrap();
        let result = analyze(&with_designs(noisy(&means, 15, seed)), &spec, &boot, None);
        let analysis = match result {
            Ok(a) => a,
            Err(conjset_core::Error::EmptyEstimate) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert!(analysis.regions.is_nested());
        prop_assert_eq!(analysis.regions.alpha, Some(0.1));

        let mut sorted = analysis.quantile.h_tilde.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assert_eq!(analysis.quantile.index, 135);
        prop_assert_eq!(analysis.regions.a, sorted[134]);

        // a smaller alpha widens the bracket
        let wide = analysis.regions_at(0.01, &spec).unwrap();
        prop_assert!(wide.upper.is_subset_of(&analysis.regions.upper));
        prop_assert!(analysis.regions.lower.is_subset_of(&wide.lower));
        prop_assert_eq!(&wide.point, &analysis.regions.point);
    }
}

#[test]
fn stacks_survive_a_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let lat = Lattice::new(14, 12).unwrap();
    let means = [disk(lat, (6.0, 7.0), 4.0, 2.0)];
    let stacks = noisy(&means, 10, 3);
    let path = dir.path().join("y.json");
    save_field_stack(&path, &stacks[0]).unwrap();
    let loaded = load_field_stack(&path).unwrap();
    assert_eq!(loaded, stacks[0]);

    let spec = CombineSpec::conjunction(1.0, 1).unwrap();
    let boot = BootstrapConfig::new(100, 0.05, 8).unwrap();
    let a = analyze(&with_designs(stacks), &spec, &boot, None).unwrap();
    let b = analyze(&with_designs(vec![loaded]), &spec, &boot, None).unwrap();
    assert_eq!(a.quantile, b.quantile);
    assert_eq!(a.regions, b.regions);
}

#[test]
fn regions_usually_bracket_the_true_set() {
    let lat = Lattice::new(24, 24).unwrap();
    let means = [
        bump(lat, (11.5, 10.0), 5.0, 3.0),
        bump(lat, (11.5, 13.0), 5.0, 3.0),
    ];
    let spec = CombineSpec::conjunction(1.5, 2).unwrap();
    let truth = Truth::new(&means, &spec).unwrap();
    let mut covered = 0;
    for seed in 0..20 {
        let boot = BootstrapConfig::new(300, 0.05, seed).unwrap();
        let a = analyze(
            &with_designs(noisy(&means, 40, 100 + seed)),
            &spec,
            &boot,
            None,
        )
        .unwrap();
        if check_inclusion(&truth, &a.regions, &a.fields, a.regions.a).unwrap() {
            covered += 1;
        }
    }
    // nominal 19 of 20; a binomial lower tail well below that still flags a broken calibration
    assert!(covered >= 16, "covered {covered} of 20");
}
