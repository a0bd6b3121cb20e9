use super::*;
use crate::channel::generate_seeded;
use crate::equalizer::noise_covariance;
use crate::spectral::DftPlan;
use nalgebra::Complex;

fn small_config(receiver: ReceiverMode, criterion: Criterion) -> ExperimentConfig {
    ExperimentConfig {
        n_c: 16,
        taps: (4, 4),
        cp: CyclicPrefix { source: 4, relay: 4 },
        n_fb: 3,
        design: Design { scheme: Scheme::Jsr, criterion, receiver },
        trials: 6,
        seed: 11,
        ..Default::default()
    }
}

fn link_for(config: &ExperimentConfig, seed: u64, relay_db: f64) -> (LinkDesign<f64>, LinkBudget) {
    let budget = config.link_budget(relay_db);
    let ch = generate_seeded::<f64>(seed, config.dims, config.profiles(), config.n_c).unwrap();
    (design_link(ch, config, &budget).unwrap(), budget)
}

#[test]
fn snr_mapping_examples() {
    let dims = LinkDims::new(2, 2, 2);
    let b = snr_to_variance(0.0, 0.0, dims, 64, 2);
    assert!((b.p_s - 256.0).abs() < 1e-12);
    assert_eq!((b.sigma_v2, b.sigma_u2, b.sigma_s2), (1.0, 1.0, 1.0));
    let b10 = snr_to_variance(10.0, 0.0, dims, 64, 2);
    assert!((b10.p_s / b.p_s - 10.0).abs() < 1e-12);
    for db in [-7.5, 0.0, 3.0, 16.0, 41.2] {
        assert!((linear_to_db(db_to_linear(db)) - db).abs() < 1e-12);
    }
}

#[test]
fn relay_budget_counts_relay_antennas() {
    let b = snr_to_variance(0.0, 0.0, LinkDims::new(2, 3, 2), 64, 2);
    assert!((b.p_r - 384.0).abs() < 1e-12);
}

#[test]
fn qpsk_constants() {
    let s = qpsk_map::<f64>(&[0, 0, 0, 1, 1, 0, 1, 1]).unwrap();
    let a = std::f64::consts::FRAC_1_SQRT_2;
    assert_eq!(s, vec![Complex::new(a, a), Complex::new(a, -a), Complex::new(-a, a), Complex::new(-a, -a)]);
    for z in &s {
        assert!((z.norm_sqr() - 1.0).abs() < 1e-15);
    }
    assert_eq!(qpsk_slice(&s), vec![0, 0, 0, 1, 1, 0, 1, 1]);
    assert!(qpsk_map::<f64>(&[0, 1, 1]).is_err());
}

#[test]
fn qpsk_decide_ties_go_negative() {
    let a = std::f64::consts::FRAC_1_SQRT_2;
    assert_eq!(qpsk_decide(Complex::new(0.0, 0.0)), Complex::new(-a, -a));
    assert_eq!(qpsk_decide(Complex::new(0.3, -2.0)), Complex::new(a, -a));
}

#[test]
fn identity_link_passes_symbols() {
    let config = ExperimentConfig {
        dims: LinkDims::new(1, 1, 1),
        streams: 1,
        n_c: 8,
        taps: (1, 1),
        cp: CyclicPrefix { source: 1, relay: 1 },
        design: Design { scheme: Scheme::Jsr, criterion: Criterion::Amse, receiver: ReceiverMode::Linear },
        ..Default::default()
    };
    let one = CMat::<f64>::identity(1, 1);
    let ch = ChannelRealization::flat(config.dims, 8, one.clone(), one.clone()).unwrap();
    let budget = config.link_budget(10.0);
    let mut link = design_link(ch, &config, &budget).unwrap();
    link.precoders.source_tones = vec![one.clone(); 8];
    link.precoders.relay_tones = vec![one; 8];
    let s = CMat::from_fn(1, 8, |_, c| Complex::new(c as f64, -(c as f64)));
    let zero = BlockNoise::zero(1, 1, 8);
    for path in [TransmitPath::Frequency, TransmitPath::Time] {
        let y = transmit_block(&s, &link.precoders, &link.channel, &zero, path, config.cp).unwrap();
        assert!((&y - &s).norm() < 1e-12);
    }
}

#[test]
fn time_and_frequency_paths_agree() {
    let mut config = small_config(ReceiverMode::Linear, Criterion::Gmse);
    config.dims = LinkDims::new(3, 2, 3);
    let (link, budget) = link_for(&config, 5, 10.0);
    let mut rng = trial_rng(3, 0);
    for _ in 0..5 {
        let s = link::complex_gaussian::<f64, _>(&mut rng, 2, config.n_c, 1.0);
        let w = BlockNoise::draw(&mut rng, 2, 3, config.n_c, &budget.noise());
        let a = transmit_block(&s, &link.precoders, &link.channel, &w, TransmitPath::Frequency, config.cp).unwrap();
        let b = transmit_block(&s, &link.precoders, &link.channel, &w, TransmitPath::Time, config.cp).unwrap();
        let worst = (&a - &b).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(worst < 1e-9, "paths differ by {worst}");
    }
}

#[test]
fn transmit_rejects_bad_shapes() {
    let config = small_config(ReceiverMode::Linear, Criterion::Amse);
    let (link, _) = link_for(&config, 1, 10.0);
    let s = CMat::<f64>::zeros(2, config.n_c + 1);
    let w = BlockNoise::zero(2, 2, config.n_c);
    assert!(transmit_block(&s, &link.precoders, &link.channel, &w, TransmitPath::Frequency, config.cp).is_err());
    let short = CyclicPrefix { source: 1, relay: 4 };
    let s = CMat::<f64>::zeros(2, config.n_c);
    assert!(transmit_block(&s, &link.precoders, &link.channel, &w, TransmitPath::Time, short).is_err());
}

#[test]
fn noise_only_output_matches_destination_covariance() {
    let config = small_config(ReceiverMode::Linear, Criterion::Amse);
    let (link, budget) = link_for(&config, 8, 6.0);
    let noise = budget.noise::<f64>();
    let kf = noise_covariance(&link.channel.rd_tones, &link.precoders.relay_tones, &noise).unwrap();
    let plan = DftPlan::<f64>::new(config.n_c).unwrap();
    let s = CMat::<f64>::zeros(2, config.n_c);
    let mut rng = trial_rng(22, 0);
    let blocks = 4000;
    let tones = [0, config.n_c / 2];
    let mut samples = vec![Vec::with_capacity(blocks); tones.len() * 4];
    for _ in 0..blocks {
        let w = BlockNoise::draw(&mut rng, 2, 2, config.n_c, &noise);
        let yf = plan.forward(&transmit_block(&s, &link.precoders, &link.channel, &w, config.path, config.cp).unwrap());
        for (t, &k) in tones.iter().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    samples[t * 4 + i * 2 + j].push(yf[(i, k)] * yf[(j, k)].conj());
                }
            }
        }
    }
    for (t, &k) in tones.iter().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                let xs = &samples[t * 4 + i * 2 + j];
                let n = xs.len() as f64;
                let mean: Complex<f64> = xs.iter().sum::<Complex<f64>>() / n;
                let var = xs.iter().map(|x| (x - mean).norm_sqr()).sum::<f64>() / (n - 1.0);
                let se = (var / n).sqrt();
                let err = (mean - kf[k][(i, j)]).norm();
                assert!(err < 3.0 * se, "tone {k} ({i},{j}): {err} vs se {se}");
            }
        }
    }
}

#[test]
fn noise_calibration() {
    let mut rng = trial_rng(99, 4);
    let noise = NoiseLevels { sigma_v2: 0.7, sigma_u2: 2.5, sigma_s2: 1.0 };
    let (mut sv, mut su, mut n) = (0.0, 0.0, 0usize);
    while n < 1_000_000 {
        let w = BlockNoise::<f64>::draw(&mut rng, 2, 2, 250, &noise);
        sv += w.relay.iter().map(|z| z.norm_sqr()).sum::<f64>();
        su += w.dest.iter().map(|z| z.norm_sqr()).sum::<f64>();
        n += 500;
    }
    assert!((sv / n as f64 / 0.7 - 1.0).abs() < 0.01);
    assert!((su / n as f64 / 2.5 - 1.0).abs() < 0.01);
}

fn assert_mse_matches(config: &ExperimentConfig, seed: u64, blocks: usize) -> EmpiricalMse {
    let (link, budget) = link_for(config, seed, 12.0);
    let mut rng = trial_rng(seed, 77);
    let emp = measure_mse(&mut rng, &link, config, &budget.noise(), blocks).unwrap();
    for (s, (&e, &a)) in emp.mean.iter().zip(&link.equalizer.error_diag).enumerate() {
        let se = emp.std_err[s];
        assert!((e - a).abs() < 4.0 * se, "stream {s}: empirical {e} analytic {a} se {se}");
    }
    emp
}

#[test]
fn empirical_mse_matches_linear_design() {
    assert_mse_matches(&small_config(ReceiverMode::Linear, Criterion::Amse), 2, 3000);
}

#[test]
fn empirical_mse_matches_dfe_design_with_genie_feedback() {
    assert_mse_matches(&small_config(ReceiverMode::DecisionFeedback, Criterion::Gmse), 3, 3000);
}

fn overlapping(emp: &EmpiricalMse) -> bool {
    let lo = emp.mean.iter().zip(&emp.std_err).map(|(m, s)| m - 3.0 * s).fold(f64::MIN, f64::max);
    let hi = emp.mean.iter().zip(&emp.std_err).map(|(m, s)| m + 3.0 * s).fold(f64::MAX, f64::min);
    lo <= hi
}

#[test]
fn equal_mse_designs_have_indistinguishable_streams() {
    let emp = assert_mse_matches(&small_config(ReceiverMode::Linear, Criterion::MaxMse), 4, 3000);
    assert!(overlapping(&emp), "{emp:?}");
    let emp = assert_mse_matches(&small_config(ReceiverMode::DecisionFeedback, Criterion::Gmse), 6, 3000);
    assert!(overlapping(&emp), "{emp:?}");
}

#[test]
fn dfe_error_is_block_circular() {
    let config = ExperimentConfig { n_c: 8, taps: (3, 3), cp: CyclicPrefix { source: 3, relay: 3 }, ..small_config(ReceiverMode::DecisionFeedback, Criterion::Gmse) };
    let (link, budget) = link_for(&config, 9, 10.0);
    let noise = budget.noise::<f64>();
    let n_c = config.n_c;
    let positions = [0, n_c / 2, n_c - 1];
    let mut rng = trial_rng(9, 1);
    let blocks = 100_000;
    let mut sums = [[0.0f64; 2]; 3];
    let mut sq = [[0.0f64; 2]; 3];
    for _ in 0..blocks {
        let bits = random_bits(&mut rng, 2 * n_c * 2);
        let syms = qpsk_map::<f64>(&bits).unwrap();
        let s = CMat::from_fn(2, n_c, |r, c| syms[c * 2 + r]);
        let w = BlockNoise::draw(&mut rng, 2, 2, n_c, &noise);
        let y = transmit_block(&s, &link.precoders, &link.channel, &w, config.path, config.cp).unwrap();
        let out = apply_fddfe(&y, &link.equalizer, qpsk_decide, Feedback::Genie { symbols: &s }).unwrap();
        for (p, &n) in positions.iter().enumerate() {
            for m in 0..2 {
                let e = (out.soft[(m, n)] - s[(m, n)]).norm_sqr();
                sums[p][m] += e;
                sq[p][m] += e * e;
            }
        }
    }
    let b = blocks as f64;
    for p in 0..3 {
        for m in 0..2 {
            let mean = sums[p][m] / b;
            let se = ((sq[p][m] / b - mean * mean) / b).sqrt();
            let a = link.equalizer.error_diag[m];
            assert!((mean - a).abs() < 4.0 * se, "position {} stream {m}: {mean} vs {a}", positions[p]);
        }
    }
}

#[test]
fn noiseless_limit_has_no_errors() {
    let config = ExperimentConfig {
        source_snr_db: 70.0,
        trials: 4,
        ..small_config(ReceiverMode::Linear, Criterion::Amse)
    };
    let rec = run_point::<f64>(&config, 70.0).unwrap();
    assert_eq!(rec.bit_errors, 0);
    assert_eq!(rec.ber, 0.0);
}

#[test]
fn run_point_is_deterministic() {
    let config = small_config(ReceiverMode::DecisionFeedback, Criterion::Gmse);
    let a = run_point::<f64>(&config, 8.0).unwrap();
    let b = run_point::<f64>(&config, 8.0).unwrap();
    assert_eq!(a, b);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let c = pool.install(|| run_point::<f64>(&config, 8.0).unwrap());
    assert_eq!(a, c);
}

#[test]
fn record_counters_are_consistent() {
    let config = small_config(ReceiverMode::DecisionFeedback, Criterion::Gmse);
    let rec = run_point::<f64>(&config, 4.0).unwrap();
    assert_eq!(rec.realizations + rec.skipped, config.trials);
    assert_eq!(rec.blocks, rec.realizations * config.blocks_per_trial);
    let data_cols = (config.n_c - config.n_fb) as u64;
    assert_eq!(rec.symbols, rec.blocks as u64 * data_cols * 2);
    assert_eq!(rec.bits, rec.symbols * 2);
    assert!(rec.symbol_errors <= rec.symbols && rec.bit_errors <= rec.bits);
    assert!((0.0..=1.0).contains(&rec.ber));
    assert!(!rec.objective_trace.is_empty());
}

#[test]
fn capacity_is_negated_gmse_objective() {
    let config = small_config(ReceiverMode::Linear, Criterion::Amse);
    let rec = run_point::<f64>(&config, 10.0).unwrap();
    assert!((rec.capacity + rec.gmse_objective).abs() < 1e-9);
    let budget = config.link_budget(10.0);
    let mut total = 0.0;
    for t in 0..config.trials as u64 {
        let mut rng = trial_rng(config.seed, t);
        let ch = generate_channel::<f64, _>(&mut rng, config.dims, config.profiles(), config.n_c).unwrap();
        let link = design_link(ch, &config, &budget).unwrap();
        let phi = &link.precoders.phi;
        for m in 0..config.streams {
            let mse = (0..config.n_c).map(|k| 1.0 / phi[(k, m)]).sum::<f64>() / config.n_c as f64;
            total += (1.0 + (1.0 / mse - 1.0)).log2();
        }
    }
    let expected = total / config.trials as f64;
    assert!((rec.capacity - expected).abs() < 1e-9 * expected.abs().max(1.0));
}

#[test]
fn validation_names_the_field() {
    let mut c = ExperimentConfig::default();
    c.cp.source = 8;
    assert!(matches!(c.validate(), Err(Error::Configuration(m)) if m.starts_with("cp_source")));
    let c = ExperimentConfig { n_fb: 64, ..Default::default() };
    assert!(matches!(c.validate(), Err(Error::Configuration(m)) if m.starts_with("n_fb")));
    let c = ExperimentConfig { streams: 3, ..Default::default() };
    assert!(matches!(c.validate(), Err(Error::Configuration(m)) if m.starts_with("streams")));
    assert!(ExperimentConfig::default().validate().is_ok());
}

#[test]
fn generic_scalar_runs_in_single_precision() {
    let config = ExperimentConfig { trials: 2, ..small_config(ReceiverMode::Linear, Criterion::Amse) };
    let rec = run_point::<f32>(&config, 10.0).unwrap();
    assert_eq!(rec.realizations + rec.skipped, 2);
    assert!(rec.ber.is_finite() || rec.realizations == 0);
}

