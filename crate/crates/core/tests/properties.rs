use marginforge::attack::{pgd_batch, AttackConfig, InnerObjective};
use marginforge::cli::ExperimentConfig;
use marginforge::data::idx::{parse_idx, serialize_idx, IdxArray, IdxData};
use marginforge::data::{gen_synthetic, split_semisup, SyntheticKind};
use marginforge::interpolate::{interpolate, search_alpha};
use marginforge::model::{Mlp, SoftLabel};
use marginforge::schedule::{EpsSchedule, RhoSchedule, ScheduleSpec};
use marginforge::semisup::{awr_weight, LossVariant};
use marginforge::tensor::Tensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn distribution(classes: usize) -> impl Strategy<Value = SoftLabel> {
    prop::collection::vec(0.0f64..1.0, classes).prop_map(|mut v| {
        v[0] += 1e-3;
        let s: f64 = v.iter().sum();
        let mut p: Vec<f64> = v.iter().map(|x| x / s).collect();
        let rest: f64 = p[1..].iter().sum();
        p[0] = 1.0 - rest;
        SoftLabel::new(p).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pgd_output_in_ball_and_domain(
        seed in any::<u64>(),
        d in 1usize..5,
        rows in 1usize..6,
        eps in 0.0f64..0.5,
        steps in 1usize..8,
        clamp in any::<bool>(),
        objective in prop::sample::select(vec![InnerObjective::CeHard, InnerObjective::CeSoft, InnerObjective::Kl]),
    ) {
        let model = Mlp::init(&[d, 8, 3], seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::matrix(rows, d, (0..rows * d).map(|i| ((i as f64 * 0.37 + seed as f64 * 1e-9).sin() + 1.0) / 2.0).collect()).unwrap();
        let targets: Vec<SoftLabel> = (0..rows).map(|i| SoftLabel::one_hot(i % 3, 3).unwrap()).collect();
        let bounds = clamp.then_some((0.0, 1.0));
        let cfg = AttackConfig { domain_bounds: bounds, ..AttackConfig::new(eps, steps).with_objective(objective) };
        let adv = pgd_batch(&model, &x, &targets, &cfg, &mut rng).unwrap().x_adv;
        for (a, b) in x.data().iter().zip(adv.data()) {
            prop_assert!((a - b).abs() <= eps + 1e-12);
            if let Some((lo, hi)) = bounds {
                prop_assert!((lo..=hi).contains(b));
            }
        }
    }

    #[test]
    fn awr_weight_is_a_probability(
        (p, q, y) in (2usize..6).prop_flat_map(|c| (distribution(c), distribution(c), distribution(c))),
    ) {
        let w = awr_weight(&p, &q, &y).unwrap();
        prop_assert!((0.0..=1.0).contains(&w));
    }

    #[test]
    fn bisection_within_one_cell_of_grid_oracle(
        k in 1usize..10,
        rho in 0.01f64..0.99,
        power in 0.2f64..5.0,
        scale in 0.5f64..3.0,
    ) {
        // strictly increasing surrogate d(α) = scale * α^power
        let d = |a: f64| scale * a.powf(power);
        let hat = search_alpha(d, rho, k);
        let cells = 1usize << k;
        let oracle = (1..=cells).map(|i| i as f64 / cells as f64).find(|&a| d(a) >= rho).unwrap_or(1.0);
        prop_assert!((hat - oracle).abs() <= 1.0 / cells as f64);
    }

    #[test]
    fn curious_gamma_one_is_linear(t in 1usize..80, extra in 0usize..40, base in 0.0f64..1.0) {
        let total = t + extra;
        let a = ScheduleSpec::new(EpsSchedule::Curious { gamma: 1.0, ramp_epochs: t }, base, total).unwrap();
        let b = ScheduleSpec::new(EpsSchedule::Linear { ramp_epochs: t }, base, total).unwrap();
        for e in 1..=total {
            prop_assert_eq!(a.eps_at(e).unwrap(), b.eps_at(e).unwrap());
        }
    }

    #[test]
    fn rho_doubles_exactly_once(rho in 0.001f64..1.0, at in 1usize..50, total in 50usize..80) {
        let s = RhoSchedule { rho_initial: rho, double_at_epoch: Some(at) };
        for e in 1..=total {
            prop_assert_eq!(s.rho_at(e), if e >= at { 2.0 * rho } else { rho });
        }
    }

    #[test]
    fn interpolation_endpoints_and_segment(seed in any::<u64>(), alpha in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let x = Tensor::vector((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let p = Tensor::vector((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect());
        prop_assert_eq!(interpolate(&x, &p, 0.0).unwrap(), x.clone());
        prop_assert_eq!(interpolate(&x, &p, 1.0).unwrap(), p.clone());
        let m = interpolate(&x, &p, alpha).unwrap();
        for ((a, b), v) in x.data().iter().zip(p.data()).zip(m.data()) {
            prop_assert!(*v >= a.min(*b) - 1e-12 && *v <= a.max(*b) + 1e-12);
        }
    }

    #[test]
    fn split_partitions_and_stratifies(seed in any::<u64>(), n in 40usize..300, fraction in 0.05f64..1.0) {
        let ds = gen_synthetic(SyntheticKind::TwoMoons, n, 0.05, seed).unwrap();
        let s = split_semisup(&ds, fraction, seed).unwrap();
        let mut all: Vec<usize> = s.labeled_rows.iter().chain(&s.unlabeled_rows).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let labels = ds.labels.as_ref().unwrap();
        let per: Vec<usize> = (0..2).map(|c| s.labeled_rows.iter().filter(|&&r| labels[r] == c).count()).collect();
        if fraction < 1.0 {
            prop_assert!(per[0].abs_diff(per[1]) <= 1);
        }
        if let Some(u) = &s.unlabeled {
            prop_assert!(u.labels.is_none());
        }
    }

    #[test]
    fn idx_round_trip(dims in prop::collection::vec(1usize..5, 1..4), kind in 0usize..6, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = dims.iter().product();
        let data = match kind {
            0 => IdxData::U8((0..n).map(|_| rng.gen()).collect()),
            1 => IdxData::I8((0..n).map(|_| rng.gen()).collect()),
            2 => IdxData::I16((0..n).map(|_| rng.gen()).collect()),
            3 => IdxData::I32((0..n).map(|_| rng.gen()).collect()),
            4 => IdxData::F32((0..n).map(|_| f32::from_bits(rng.gen::<u32>() & 0x7f7f_ffff)).collect()),
            _ => IdxData::F64((0..n).map(|_| rng.gen_range(-1e6..1e6)).collect()),
        };
        let a = IdxArray::new(dims, data).unwrap();
        let bytes = serialize_idx(&a).unwrap();
        prop_assert_eq!(parse_idx(&bytes).unwrap(), a);
    }

    #[test]
    fn config_round_trip(
        seed in any::<u64>(),
        epochs in 2usize..200,
        lr in 1e-4f64..1.0,
        beta in 0.0f64..=1.0,
        lambda in 0.0f64..20.0,
        hidden in prop::collection::vec(1usize..128, 1..4),
        variant in prop::sample::select(LossVariant::ALL.to_vec()),
        kind in 0usize..3,
        gamma in 1.0f64..2.0,
    ) {
        let mut c = ExperimentConfig::default();
        let t = &mut c.train;
        t.seed = seed;
        t.epochs = epochs;
        t.optimizer.lr = lr;
        t.hidden = hidden;
        t.loss.variant = variant;
        t.loss.beta = beta;
        t.loss.lambda = lambda;
        t.loss.awr = variant.is_awr().then(|| c.awr.clone());
        let ramp = (epochs * 7 / 10).max(1);
        t.schedule.total_epochs = epochs;
        t.schedule.variant = match kind {
            0 => EpsSchedule::Const,
            1 => EpsSchedule::Linear { ramp_epochs: ramp },
            _ => EpsSchedule::Curious { gamma, ramp_epochs: ramp },
        };
        t.rho_schedule.double_at_epoch = Some((epochs * 3 / 4).max(1));
        let text = c.serialize();
        let back = ExperimentConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.serialize(), text);
    }
}
