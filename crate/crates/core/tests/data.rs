use std::collections::{BTreeMap, HashMap};

use chrono::{Duration, NaiveDate};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rational_attention::data::{
    aggregate_events, dataset_fingerprint, generate_dataset, read_dataset, split, write_dataset, Episode, ScenarioConfig,
    SensorChannel, CHANNELS, HOURS,
};

fn to_bytes(data: &[Episode]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_dataset(&mut buf, data).unwrap();
    buf
}

#[test]
fn prevalence_tracks_positive_fraction() {
    for (seed, fraction) in [(1, 0.25), (2, 0.1), (3, 0.5), (4, 0.33)] {
        let cfg = ScenarioConfig {
            n_episodes: 250,
            positive_fraction: fraction,
            seed,
            ..Default::default()
        };
        let data = generate_dataset(&cfg).unwrap();
        let rate = data.iter().filter(|e| e.is_positive()).count() as f64 / data.len() as f64;
        assert!((rate - fraction).abs() <= 0.02, "{rate} vs {fraction}");
    }
}

#[test]
fn night_bathroom_signal_is_present() {
    let cfg = ScenarioConfig::default();
    let data = generate_dataset(&cfg).unwrap();
    let night_bathroom = |e: &Episode| (0..6).map(|h| e.count(h, SensorChannel::Bathroom)).sum::<f64>();
    let (pos, neg): (Vec<&Episode>, Vec<&Episode>) = data.iter().partition(|e| e.is_positive());
    let stats = |v: &[&Episode]| {
        let x: Vec<f64> = v.iter().map(|e| night_bathroom(e)).collect();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
        (mean, var, x.len() as f64)
    };
    let (mp, vp, np) = stats(&pos);
    let (mn, vn, nn) = stats(&neg);
    let t = (mp - mn) / (vp / np + vn / nn).sqrt();
    assert!(t > 3.0, "welch t = {t}");
    let ratio = mp / mn;
    assert!((ratio - cfg.night_bathroom_multiplier).abs() < 0.5, "ratio {ratio}");
}

#[test]
fn dataset_file_round_trips() {
    let data = generate_dataset(&ScenarioConfig {
        n_episodes: 40,
        ..Default::default()
    })
    .unwrap();
    let bytes = to_bytes(&data);
    let header = String::from_utf8(bytes.clone()).unwrap();
    let header = header.lines().next().unwrap();
    assert!(header.starts_with("id,label,h00_bathroom,h00_hallway"));
    assert!(header.ends_with("h23_microwave,meta"));
    assert_eq!(read_dataset(bytes.as_slice()).unwrap(), data);
}

#[test]
fn same_seed_gives_identical_bytes() {
    let cfg = ScenarioConfig {
        n_episodes: 60,
        seed: 11,
        ..Default::default()
    };
    let a = generate_dataset(&cfg).unwrap();
    let b = generate_dataset(&cfg).unwrap();
    assert_eq!(to_bytes(&a), to_bytes(&b));
    assert_eq!(dataset_fingerprint(&a), dataset_fingerprint(&b));
    let c = generate_dataset(&ScenarioConfig { seed: 12, ..cfg }).unwrap();
    assert_ne!(dataset_fingerprint(&a), dataset_fingerprint(&c));
}

#[test]
fn malformed_records_are_rejected() {
    let data = generate_dataset(&ScenarioConfig {
        n_episodes: 3,
        ..Default::default()
    })
    .unwrap();
    let text = String::from_utf8(to_bytes(&data)).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let bad_label = lines[1].replacen(",0,", ",2,", 1).replacen(",1,", ",2,", 1);
    let bad_count = {
        let mut fields: Vec<&str> = lines[2].split(',').collect();
        fields[5] = "1.5";
        fields.join(",")
    };
    for (i, bad) in [(1, bad_label), (2, bad_count)] {
        let original = std::mem::replace(&mut lines[i], bad);
        assert!(read_dataset(lines.join("\n").as_bytes()).is_err());
        lines[i] = original;
    }
    assert!(read_dataset("id,label\nx,0\n".as_bytes()).is_err());
}

#[test]
fn aggregation_matches_hash_map_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let start = NaiveDate::from_ymd_opt(2024, 1, 30).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let mut oracle: HashMap<(NaiveDate, usize, usize), usize> = HashMap::new();
    let mut log = String::from("timestamp,channel\n");
    for _ in 0..1000 {
        let t = start + Duration::seconds(rng.gen_range(0..5 * 86_400));
        let c = SensorChannel::ALL[rng.gen_range(0..CHANNELS)];
        let sep = if rng.gen() { 'T' } else { ' ' };
        log.push_str(&format!("{}{sep}{},{}\n", t.date(), t.time(), c.name()));
        *oracle.entry((t.date(), t.time().format("%H").to_string().parse().unwrap(), c.index())).or_default() += 1;
    }
    let labels = BTreeMap::from([(NaiveDate::from_ymd_opt(2024, 2, 1).unwrap(), 1u8)]);
    let report = aggregate_events(log.as_bytes(), &labels).unwrap();
    assert!(report.errors.is_empty());
    assert_eq!(report.episodes.len(), 5);
    let mut total = 0.0;
    for e in &report.episodes {
        let date: NaiveDate = e.id.parse().unwrap();
        for h in 0..HOURS {
            for c in SensorChannel::ALL {
                let expect = oracle.get(&(date, h, c.index())).copied().unwrap_or(0) as f64;
                assert_eq!(e.count(h, c), expect);
                total += expect;
            }
        }
        assert_eq!(e.label, u8::from(labels.contains_key(&date)));
    }
    assert_eq!(total, 1000.0);
    assert!(report.warnings.iter().any(|w| w.contains("no label")));
}

#[test]
fn aggregated_days_read_back_as_dataset() {
    let log = "2024-05-02T02:10:00,bathroom\n2024-05-02T02:40:00,bathroom\n2024-05-02T02:59:00,bathroom\n";
    let report = aggregate_events(log.as_bytes(), &BTreeMap::new()).unwrap();
    let back = read_dataset(to_bytes(&report.episodes).as_slice()).unwrap();
    assert_eq!(back[0].count(2, SensorChannel::Bathroom), 3.0);
}

#[test]
fn default_split_is_209_103_and_stratified() {
    let data = generate_dataset(&ScenarioConfig::default()).unwrap();
    let (train, test) = split(&data, 209.0 / 312.0, 0).unwrap();
    assert_eq!((train.len(), test.len()), (209, 103));
    let rate = |s: &[Episode]| s.iter().filter(|e| e.is_positive()).count() as f64 / s.len() as f64;
    assert!((rate(&train) - rate(&test)).abs() <= 1.0 / 103.0);
    let mut ids: Vec<&str> = train.iter().chain(&test).map(|e| e.id.as_str()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 312);
    assert!(split(&data, 0.001, 0).is_err());
    assert!(split(&data, 1.0, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generated_counts_are_nonnegative_integers(seed in any::<u64>(), n in 10usize..60, frac in 0.05f64..0.95) {
        let cfg = ScenarioConfig { n_episodes: n, positive_fraction: frac, seed, ..Default::default() };
        let data = generate_dataset(&cfg).unwrap();
        prop_assert_eq!(data.len(), n);
        prop_assert_eq!(data.iter().filter(|e| e.is_positive()).count(), cfg.n_positive());
        for e in &data {
            prop_assert_eq!(e.matrix.len(), HOURS * CHANNELS);
            prop_assert!(e.matrix.iter().all(|&c| c >= 0.0 && c.fract() == 0.0));
        }
    }

    #[test]
    fn split_preserves_every_episode(seed in any::<u64>(), frac in 0.2f64..0.8) {
        let data = generate_dataset(&ScenarioConfig { n_episodes: 50, seed, ..Default::default() }).unwrap();
        let (a, b) = split(&data, frac, seed).unwrap();
        prop_assert_eq!(a.len() + b.len(), 50);
        let pos = |s: &[Episode]| s.iter().filter(|e| e.is_positive()).count();
        prop_assert_eq!(pos(&a) + pos(&b), pos(&data));
    }
}
