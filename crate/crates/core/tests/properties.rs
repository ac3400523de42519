//! Property tests over the PBV encoding, splits, discriminator heads,
//! losses and metrics.

use std::collections::HashSet;
use std::net::Ipv4Addr;
use std::sync::Arc;

use proptest::prelude::*;

use bytesgan::dataset::{batches, make_splits, ClassSchema, SamplePool, SplitSpec, TrafficDataset, UnlabeledCount};
use bytesgan::eval::ConfusionMatrix;
use bytesgan::losses::{cnn_loss_from_logits, feature_matching_loss, labeled_loss, optimal_discriminator_check, unlabeled_fake_loss, unlabeled_loss, unlabeled_real_loss};
use bytesgan::models::{DiscriminatorOutput, Generator, GeneratorConfig, NoisePrior, NoiseVector};
use bytesgan::pbv::{denormalize, filter_packet, frames, normalize_octet, to_pbv, FilterPolicy, RawPacket, Timestamp, LINKTYPE_ETHERNET, LINKTYPE_RAW, PBV_LEN};
use bytesgan::rng::stream;

fn raw(link_type: u32, bytes: Vec<u8>) -> RawPacket {
    RawPacket {
        link_type,
        timestamp: Timestamp { secs: 0, nanos: 0 },
        orig_len: bytes.len() as u32,
        bytes,
    }
}

fn logits(k: std::ops::RangeInclusive<usize>, mag: f64) -> impl Strategy<Value = Vec<f64>> {
    k.prop_flat_map(move |k| prop::collection::vec(-mag..mag, k))
}

#[test]
fn every_octet_survives_the_round_trip() {
    for b in 0..=255u8 {
        let v = normalize_octet(b);
        assert!((-1.0..=1.0).contains(&v));
        assert_eq!(denormalize(v), b);
    }
}

#[test]
fn vector_length_is_fixed_for_any_payload_length() {
    let policy = FilterPolicy::default();
    for n in [0usize, 1, 739, 1480, 1481, 65535 - 28] {
        let frame = frames::udp_ipv4_frame(Ipv4Addr::new(10, 0, 0, 1), Ipv4Addr::new(10, 0, 0, 2), 4000, 443, &vec![0xAB; n]);
        let v = to_pbv(&raw(LINKTYPE_ETHERNET, frame), &policy).unwrap();
        assert_eq!(v.values().len(), PBV_LEN, "payload {n}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn filter_is_total_and_deterministic(bytes in prop::collection::vec(any::<u8>(), 0..200), link in prop_oneof![Just(LINKTYPE_ETHERNET), Just(LINKTYPE_RAW), any::<u32>()]) {
        let pkt = raw(link, bytes);
        let policy = FilterPolicy::default();
        prop_assert_eq!(filter_packet(&pkt, &policy), filter_packet(&pkt, &policy));
        if let Ok(v) = to_pbv(&pkt, &policy) {
            prop_assert_eq!(v.values().len(), PBV_LEN);
            prop_assert!(v.values().iter().all(|x| (-1.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn ip_headers_with_garbage_never_panic(tail in prop::collection::vec(any::<u8>(), 0..80), version in 0u8..16, ihl in 0u8..16) {
        let mut bytes = vec![(version << 4) | ihl];
        bytes.extend(tail);
        let _ = filter_packet(&raw(LINKTYPE_RAW, bytes.clone()), &FilterPolicy::default());
        let mut eth = vec![0u8; 12];
        eth.extend([0x08, 0x00]);
        eth.extend(bytes);
        let _ = to_pbv(&raw(LINKTYPE_ETHERNET, eth), &FilterPolicy::default());
    }
}

fn toy_dataset(counts: &[usize], unlabeled_extra: usize, seed: u64) -> Arc<TrafficDataset> {
    let names = (0..counts.len()).map(|c| format!("c{c}")).collect();
    let mut ds = TrafficDataset::new(ClassSchema::new(names).unwrap());
    let mut rng = stream(seed, &[1]);
    for (c, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            let mut o = [0u8; PBV_LEN];
            rand::Rng::fill(&mut rng, &mut o[..16]);
            ds.push(Some(c as u16), &o).unwrap();
        }
    }
    for _ in 0..unlabeled_extra {
        ds.push(None, &[7u8; PBV_LEN]).unwrap();
    }
    Arc::new(ds)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn splits_are_disjoint_stratified_and_label_free(
        counts in prop::collection::vec(12usize..40, 2..5),
        extra in 0usize..10,
        labeled in 1usize..5,
        unl in prop_oneof![Just(UnlabeledCount::All), (0usize..4).prop_map(UnlabeledCount::PerClass)],
        seed in any::<u64>(),
    ) {
        let data = toy_dataset(&counts, extra, seed);
        let s = make_splits(data, &SplitSpec { labeled_per_class: labeled, unlabeled_per_class: unl, test_fraction: 0.2, seed }).unwrap();
        let mut seen = HashSet::new();
        for id in s.labeled.ids().iter().chain(s.unlabeled.ids()).chain(s.test.ids()) {
            prop_assert!(seen.insert(*id), "sample {} in two pools", id);
        }
        prop_assert!(s.labeled.class_counts().iter().all(|&c| c == labeled));
        for i in 0..s.unlabeled.len() {
            prop_assert_eq!(s.unlabeled.member_label(i), None);
        }
        for b in batches(&s.unlabeled, 3, seed, 0) {
            prop_assert!(b.labels.iter().all(Option::is_none));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn heads_agree_with_an_implicit_zero_fake_logit(l in prop_oneof![logits(2..=2, 30.0), logits(7..=7, 30.0), logits(15..=15, 30.0)]) {
        let out = DiscriminatorOutput::from_logits(l.clone(), vec![]);
        // softmax over K real logits plus a fixed zero logit for "generated"
        let m = l.iter().copied().fold(0.0f64, f64::max);
        let ez: Vec<f64> = l.iter().map(|v| (v - m).exp()).collect();
        let denom: f64 = ez.iter().sum::<f64>() + (-m).exp();
        let p_fake = (-m).exp() / denom;
        prop_assert!((out.realness - (1.0 - p_fake)).abs() < 1e-9);
        let z: f64 = ez.iter().sum();
        let sup_sum: f64 = out.supervised_probs.iter().sum();
        prop_assert!((sup_sum - 1.0).abs() < 1e-6);
        for (j, e) in ez.iter().enumerate() {
            let p_full = e / denom;
            prop_assert!((out.supervised_probs[j] - e / z).abs() < 1e-9);
            prop_assert!((p_full - out.supervised_probs[j] * out.realness).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn realness_rises_with_every_logit(l in logits(2..=15, 10.0), idx in any::<prop::sample::Index>(), delta in 1e-3f64..5.0) {
        let i = idx.index(l.len());
        let before = DiscriminatorOutput::from_logits(l.clone(), vec![]).realness;
        let mut up = l.clone();
        up[i] += delta;
        prop_assert!(DiscriminatorOutput::from_logits(up, vec![]).realness > before);
    }

    #[test]
    fn shifting_all_logits_changes_realness(l in logits(2..=15, 10.0), c in 1e-2f64..5.0) {
        // the unlabeled objective is not shift invariant
        let base = DiscriminatorOutput::from_logits(l.clone(), vec![]);
        let shifted = DiscriminatorOutput::from_logits(l.iter().map(|v| v + c).collect(), vec![]);
        prop_assert!(shifted.realness > base.realness);
        let k = l.len();
        let shifted_logits: Vec<f64> = l.iter().map(|v| v + c).collect();
        let a = unlabeled_real_loss(&l, k).unwrap().value;
        let b = unlabeled_real_loss(&shifted_logits, k).unwrap().value;
        prop_assert!(b < a);
        for (p, q) in base.supervised_probs.iter().zip(&shifted.supervised_probs) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn losses_are_finite_and_non_negative_at_extreme_logits(rows in 1usize..5, k in 2usize..16, seed in any::<u64>()) {
        let mut rng = stream(seed, &[2]);
        let l: Vec<f64> = (0..rows * k).map(|_| rand::Rng::random_range(&mut rng, -1e4..=1e4)).collect();
        let labels: Vec<usize> = (0..rows).map(|_| rand::Rng::random_range(&mut rng, 0..k)).collect();
        for v in [
            labeled_loss(&l, k, &labels).unwrap().value,
            unlabeled_real_loss(&l, k).unwrap().value,
            unlabeled_fake_loss(&l, k).unwrap().value,
            unlabeled_loss(&l, &l, k).unwrap().value,
            cnn_loss_from_logits(&l, k, &labels).unwrap().value,
            feature_matching_loss(&l, &l.iter().map(|v| -v).collect::<Vec<_>>(), k).unwrap().value,
        ] {
            prop_assert!(v.is_finite() && v >= 0.0, "{}", v);
        }
        for g in labeled_loss(&l, k, &labels).unwrap().grad.iter().chain(&unlabeled_fake_loss(&l, k).unwrap().grad) {
            prop_assert!(g.is_finite());
        }
    }

    #[test]
    fn labeled_loss_is_k_way_cross_entropy(l in logits(2..=15, 20.0), idx in any::<prop::sample::Index>()) {
        let k = l.len();
        let y = idx.index(k);
        let out = DiscriminatorOutput::from_logits(l.clone(), vec![]);
        let v = labeled_loss(&l, k, &[y]).unwrap().value;
        prop_assert!((v + out.supervised_probs[y].ln()).abs() < 1e-9);
    }
}

fn random_dist(rng: &mut impl rand::Rng, n: usize, zeros: bool) -> Vec<f64> {
    let mut p: Vec<f64> = (0..n).map(|_| if zeros && rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..1.0) }).collect();
    let s: f64 = p.iter().sum();
    if s == 0.0 {
        p[0] = 1.0;
        return p;
    }
    p.iter_mut().for_each(|v| *v /= s);
    p
}

#[test]
fn optimal_discriminator_is_one_half_exactly_when_distributions_match() {
    let mut rng = stream(9, &[3]);
    for trial in 0..1000 {
        let n = 2 + trial % 30;
        let p = random_dist(&mut rng, n, true);
        let same = optimal_discriminator_check(&p, &p).unwrap();
        assert!(same.iter().all(|&d| (d - 0.5).abs() <= 1e-12));
        let q = random_dist(&mut rng, n, true);
        let differ = p.iter().zip(&q).any(|(a, b)| a != b);
        let d = optimal_discriminator_check(&p, &q).unwrap();
        let all_half = d.iter().all(|&v| (v - 0.5).abs() <= 1e-12);
        assert_eq!(all_half, !differ, "trial {trial}");
    }
}

#[test]
fn generated_samples_are_valid_vectors() {
    let g = Generator::<f32>::init(GeneratorConfig::standard(), 5);
    let mut rng = stream(5, &[4]);
    for prior in [NoisePrior::Uniform, NoisePrior::Gaussian] {
        let z: Vec<f32> = (0..3).flat_map(|_| NoiseVector::sample(prior, 100, &mut rng).values().to_vec()).collect();
        let a = g.forward(&z, 3).output;
        assert_eq!(a.len(), 3 * 20 * 74);
        assert!(a.iter().all(|v| *v > -1.0 && *v < 1.0));
        assert_eq!(a, g.forward(&z, 3).output);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn metrics_match_a_per_sample_recount(n in 2usize..8, pairs in prop::collection::vec((0usize..8, 0usize..8), 0..200)) {
        let truth: Vec<usize> = pairs.iter().map(|p| p.0 % n).collect();
        let pred: Vec<usize> = pairs.iter().map(|p| p.1 % n).collect();
        let m = ConfusionMatrix::from_predictions(n, &truth, &pred).unwrap();
        prop_assert_eq!(m.total() as usize, truth.len());
        prop_assert_eq!(m.micro_recall(), m.accuracy());
        for c in 0..n {
            let tp = truth.iter().zip(&pred).filter(|&(&t, &p)| t == c && p == c).count() as f64;
            let actual = truth.iter().filter(|&&t| t == c).count() as f64;
            let predicted = pred.iter().filter(|&&p| p == c).count() as f64;
            let cm = m.class_metrics(c);
            let precision = if predicted == 0.0 { 0.0 } else { tp / predicted };
            let recall = if actual == 0.0 { 0.0 } else { tp / actual };
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            prop_assert!((cm.precision - precision).abs() < 1e-12);
            prop_assert!((cm.recall - recall).abs() < 1e-12);
            prop_assert!((cm.f1 - f1).abs() < 1e-12);
            prop_assert_eq!(cm.precision_undefined, predicted == 0.0);
            prop_assert_eq!(cm.recall_undefined, actual == 0.0);
        }
        let hits = truth.iter().zip(&pred).filter(|(t, p)| t == p).count();
        let acc = if truth.is_empty() { 0.0 } else { hits as f64 / truth.len() as f64 };
        prop_assert!((m.accuracy() - acc).abs() < 1e-12);
    }
}
