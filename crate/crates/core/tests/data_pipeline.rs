use std::fs;

use tdanet::data::{
    add_gaussian_noise, bearing_class_period, channel_power, fault_cases, load_cwru_format,
    minmax_normalize, synth_bearing_dataset, synth_flight_dataset, train_test_split, write_dataset,
    LoadOptions,
};
use tdanet::spectral::dft_amplitudes;
use tdanet::Error;

#[test]
fn written_datasets_load_back_bitwise() {
    let ds = synth_bearing_dataset(10, 3, 64, 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&ds, dir.path()).unwrap();
    let back = load_cwru_format(dir.path(), LoadOptions::default()).unwrap();
    assert_eq!(back.n_classes, 10);
    assert_eq!(back.class_counts(), vec![3; 10]);
    for (a, b) in ds.records.iter().zip(&back.records) {
        assert_eq!(a.label, b.label);
        let bits = |r: &tdanet::data::SignalRecord| {
            r.samples
                .data()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(a), bits(b));
    }
}

#[test]
fn long_files_are_segmented() {
    let dir = tempfile::tempdir().unwrap();
    let text: String = (0..100).map(|i| format!("{i} {}\n", -i)).collect();
    fs::write(dir.path().join("a.txt"), &text).unwrap();
    let half: String = text.lines().take(50).map(|l| format!("{l}\n")).collect();
    fs::write(dir.path().join("b.txt"), half).unwrap();
    fs::write(
        dir.path().join("manifest.csv"),
        "file,label\na.txt,0\nb.txt,1\n",
    )
    .unwrap();
    let opts = LoadOptions {
        window: Some(32),
        stride: Some(16),
    };
    let ds = load_cwru_format(dir.path(), opts).unwrap();
    // a: 100 samples → 5 windows; b: 50 samples → 2 windows.
    assert_eq!(ds.class_counts(), vec![5, 2]);
    assert_eq!(ds.records[1].samples.at(&[0, 1]), -16.0);
    let whole = load_cwru_format(
        dir.path(),
        LoadOptions {
            window: None,
            stride: None,
        },
    )
    .unwrap();
    assert_eq!(whole.records[0].length(), 100);
}

#[test]
fn loader_reports_bad_input_precisely() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.txt"), "1\n2\n3\n4\n").unwrap();
    fs::write(
        dir.path().join("manifest.csv"),
        "file,label\na.txt,0\na.txt,2\n",
    )
    .unwrap();
    let err = load_cwru_format(dir.path(), LoadOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Data(_)));
    assert!(err.to_string().contains("manifest.csv:3"), "{err}");

    fs::write(dir.path().join("manifest.csv"), "file,label\na.txt,outer\n").unwrap();
    assert!(load_cwru_format(dir.path(), LoadOptions::default())
        .unwrap_err()
        .to_string()
        .contains("unknown label"));

    fs::write(dir.path().join("a.txt"), "1\n2\nx\n4\n").unwrap();
    fs::write(dir.path().join("manifest.csv"), "file,label\na.txt,0\n").unwrap();
    assert!(load_cwru_format(dir.path(), LoadOptions::default())
        .unwrap_err()
        .to_string()
        .contains("a.txt:3"));

    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(
        load_cwru_format(empty.path(), LoadOptions::default()),
        Err(Error::Data(_))
    ));
}

#[test]
fn bearing_records_peak_at_their_class_frequency() {
    let t = 256;
    let ds = synth_bearing_dataset(4, 50, t, 3).unwrap();
    let hits = ds
        .records
        .iter()
        .filter(|r| {
            let dominant = dft_amplitudes(&r.samples).unwrap().dominant_frequency() as f64;
            let expected = t as f64 / bearing_class_period(r.label) as f64;
            (dominant - expected).abs() <= 1.0
        })
        .count();
    assert!(hits as f64 >= 0.95 * ds.len() as f64, "{hits}/{}", ds.len());
}

#[test]
fn generators_are_deterministic() {
    assert_eq!(
        synth_bearing_dataset(3, 4, 32, 9).unwrap(),
        synth_bearing_dataset(3, 4, 32, 9).unwrap()
    );
    assert_ne!(
        synth_bearing_dataset(3, 4, 32, 9).unwrap(),
        synth_bearing_dataset(3, 4, 32, 10).unwrap()
    );
    assert_eq!(
        synth_flight_dataset(2, 64, 1).unwrap(),
        synth_flight_dataset(2, 64, 1).unwrap()
    );
}

#[test]
fn flight_faults_touch_only_their_sensor() {
    let ds = synth_flight_dataset(20, 128, 5).unwrap();
    assert_eq!(ds.n_classes, 6);
    assert_eq!(ds.channels(), Some(3));
    let cases = fault_cases();
    // Per channel, mean absolute deviation from the fault-free class average.
    let roughness = |label: usize, ch: usize| -> f64 {
        let recs: Vec<_> = ds.records.iter().filter(|r| r.label == label).collect();
        let mut total = 0.0;
        for r in &recs {
            let x: Vec<f64> = (0..128).map(|i| r.samples.at(&[i, ch])).collect();
            total += x.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / 127.0;
        }
        total / recs.len() as f64
    };
    // Extra-noise cases roughen exactly their own channel.
    for case in [3, 5] {
        let ch = cases[case].sensor.channel().unwrap();
        for other in 0..3 {
            let ratio = roughness(case, other) / roughness(0, other);
            if other == ch {
                assert!(ratio > 5.0, "case {case} channel {other}: {ratio}");
            } else {
                assert!(ratio < 1.5, "case {case} channel {other}: {ratio}");
            }
        }
    }
    // Airspeed loss scales V down by at least half over part of the window.
    let v_min = |label: usize| {
        ds.records
            .iter()
            .filter(|r| r.label == label)
            .map(|r| {
                (0..128)
                    .map(|i| r.samples.at(&[i, 0]))
                    .fold(f64::MAX, f64::min)
            })
            .fold(f64::MAX, f64::min)
    };
    assert!(v_min(1) < 0.6 * v_min(0));
}

#[test]
fn normalise_noise_pipeline_is_reproducible() {
    let ds = synth_bearing_dataset(2, 1, 128, 1).unwrap();
    let x = &ds.records[0].samples;
    let a = minmax_normalize(&add_gaussian_noise(x, -4.0, 7).unwrap()).unwrap();
    let b = minmax_normalize(&add_gaussian_noise(x, -4.0, 7).unwrap()).unwrap();
    assert_eq!(a, b);
    assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    let long = &synth_bearing_dataset(2, 1, 8192, 1).unwrap().records[0].samples;
    let noisy = add_gaussian_noise(long, 10.0, 8).unwrap();
    let diff = noisy.map_indexed(|i, v| v - long.data()[i]);
    let ratio = channel_power(long)[0] / channel_power(&diff)[0];
    assert!((10.0 * ratio.log10() - 10.0).abs() < 0.2);
}

#[test]
fn split_is_stratified_and_seeded() {
    let ds = synth_bearing_dataset(3, 10, 32, 2).unwrap();
    let (train, test) = train_test_split(&ds, 0.8, 4).unwrap();
    assert_eq!(train.class_counts(), vec![8; 3]);
    assert_eq!(test.class_counts(), vec![2; 3]);
    assert_eq!(train_test_split(&ds, 0.8, 4).unwrap().0, train);
    assert_ne!(train_test_split(&ds, 0.8, 5).unwrap().0, train);
}
