//! Design hyetographs and rain-event resampling.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Number of 5-minute intervals in the one-hour representation.
pub const N_BINS: usize = 12;
pub const BIN_MINUTES: f64 = 5.0;
/// Default normalisation intensity in mm/h, above every Table-style design peak.
pub const DEFAULT_R_REF: f64 = 200.0;

/// The shipped design-storm table.
pub const TABLE1_CSV: &str = include_str!("../data/hyetographs_table1.csv");

/// A one-hour hyetograph: mm/h held constant over each 5-minute bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyetograph {
    pub name: String,
    pub return_period: f64,
    pub is_test: bool,
    pub intensities: [f64; N_BINS],
}

impl Hyetograph {
    pub fn new(name: impl Into<String>, return_period: f64, is_test: bool, intensities: [f64; N_BINS]) -> Result<Self> {
        if let Some(v) = intensities.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return invalid(format!("intensity {v} is not a finite non-negative rate"));
        }
        Ok(Hyetograph { name: name.into(), return_period, is_test, intensities })
    }

    /// Intensity active at `t` seconds after the start, 0 past the hour.
    pub fn intensity_at(&self, t_seconds: f64) -> f64 {
        let bin = (t_seconds / (BIN_MINUTES * 60.0)).floor();
        if bin < 0.0 || bin >= N_BINS as f64 {
            0.0
        } else {
            self.intensities[bin as usize]
        }
    }
}

/// Total rainfall depth in mm; each bin lasts 1/12 h.
pub fn total_depth_mm(h: &Hyetograph) -> f64 {
    h.intensities.iter().sum::<f64>() / N_BINS as f64
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "yes" | "y" | "true" | "1" => Some(true),
        "no" | "n" | "false" | "0" => Some(false),
        _ => None,
    }
}

/// Parses `name, test(yes/no), return_period, 12 intensities` rows.
///
/// A first row whose return period is not numeric is taken as the header.
pub fn parse_hyetograph_csv(text: &str) -> Result<Vec<Hyetograph>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(k + 1, |p| p.line() as usize);
        let err = |msg: String| Error::Parse { line, msg };
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if k == 0 && rec.get(2).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if rec.len() != 3 + N_BINS {
            return Err(err(format!("expected {} columns, found {}", 3 + N_BINS, rec.len())));
        }
        let name = rec[0].to_string();
        if name.is_empty() {
            return Err(err("empty hyetograph name".into()));
        }
        let is_test = parse_flag(&rec[1]).ok_or_else(|| err(format!("test flag `{}` is not yes/no", &rec[1])))?;
        let return_period: f64 =
            rec[2].parse().map_err(|_| err(format!("bad return period `{}`", &rec[2])))?;
        let mut intensities = [0.0; N_BINS];
        for (j, slot) in intensities.iter_mut().enumerate() {
            let tok = &rec[3 + j];
            let v: f64 = tok.parse().map_err(|_| err(format!("bad intensity `{tok}`")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(err(format!("intensity `{tok}` must be finite and non-negative")));
            }
            *slot = v;
        }
        out.push(Hyetograph { name, return_period, is_test, intensities });
    }
    Ok(out)
}

pub fn table1() -> Vec<Hyetograph> {
    parse_hyetograph_csv(TABLE1_CSV).expect("shipped table parses")
}

pub fn load_hyetographs(path: impl AsRef<Path>) -> Result<Vec<Hyetograph>> {
    parse_hyetograph_csv(&std::fs::read_to_string(path)?)
}

pub fn find<'a>(list: &'a [Hyetograph], name: &str) -> Result<&'a Hyetograph> {
    list.iter()
        .find(|h| h.name == name)
        .ok_or_else(|| Error::Invalid(format!("no hyetograph named `{name}`")))
}

/// A recorded rain event: (minutes since start, mm/h) samples, each
/// intensity holding until the next sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RainEvent {
    samples: Vec<(f64, f64)>,
}

impl RainEvent {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return invalid("rain event times must be strictly increasing");
            }
        }
        for &(t, i) in &samples {
            if !t.is_finite() || !i.is_finite() || i < 0.0 {
                return invalid(format!("bad rain sample ({t}, {i})"));
            }
        }
        Ok(RainEvent { samples })
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    /// Time-weighted mean intensity (mm/h) over [a, b) minutes.
    pub fn mean_intensity(&self, a: f64, b: f64) -> f64 {
        let mut acc = 0.0;
        for (k, &(t, i)) in self.samples.iter().enumerate() {
            let end = self.samples.get(k + 1).map_or(f64::INFINITY, |s| s.0);
            let lo = t.max(a);
            let hi = end.min(b);
            if hi > lo {
                acc += i * (hi - lo);
            }
        }
        acc / (b - a)
    }
}

/// Clips an event to one hour and averages it over 5-minute bins.
///
/// Before its first sample the event is dry; the last sample holds to the end
/// of the hour.
pub fn resample_event(e: &RainEvent) -> Result<Hyetograph> {
    if e.samples.is_empty() {
        return invalid("empty rain event");
    }
    let mut intensities = [0.0; N_BINS];
    for (j, slot) in intensities.iter_mut().enumerate() {
        let a = j as f64 * BIN_MINUTES;
        *slot = e.mean_intensity(a, a + BIN_MINUTES);
    }
    Hyetograph::new("event", 0.0, false, intensities)
}

/// Divides intensities by `r_ref` mm/h.
pub fn normalize_rain(h: &Hyetograph, r_ref: f64) -> Result<[f64; N_BINS]> {
    if !(r_ref > 0.0) {
        return invalid(format!("r_ref must be positive, got {r_ref}"));
    }
    Ok(h.intensities.map(|v| v / r_ref))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn table1_shape_and_flags() {
        let t = table1();
        assert_eq!(t.len(), 18);
        let tests: Vec<&str> = t.iter().filter(|h| h.is_test).map(|h| h.name.as_str()).collect();
        assert_eq!(tests, ["tr2", "tr10", "tr100", "tr5-2", "tr20-3", "tr50-3"]);
        let tr100 = find(&t, "tr100").unwrap();
        assert_eq!(
            tr100.intensities,
            [24.1, 26.8, 30.7, 37.0, 50.1, 161.4, 65.6, 42.1, 33.4, 28.6, 25.3, 23.0]
        );
        assert_eq!(tr100.return_period, 100.0);
        assert!(tr100.is_test);
    }

    #[test]
    fn short_row_is_error() {
        let text = "tr2,yes,2,1,2,3,4,5,6,7,8,9,10,11\n";
        assert!(matches!(parse_hyetograph_csv(text), Err(Error::Parse { line: 1, .. })));
        let neg = "a,no,2,1,2,3,4,5,6,7,8,9,10,11,-1\n";
        assert!(parse_hyetograph_csv(neg).is_err());
    }

    #[test]
    fn total_depths() {
        let zero = Hyetograph::new("z", 1.0, false, [0.0; 12]).unwrap();
        assert_eq!(total_depth_mm(&zero), 0.0);
        let c = Hyetograph::new("c", 1.0, false, [12.0; 12]).unwrap();
        assert_eq!(total_depth_mm(&c), 12.0);
        let t = table1();
        // 548.1 mm/h summed over twelve 5-minute bins
        let hand = 24.1 + 26.8 + 30.7 + 37.0 + 50.1 + 161.4 + 65.6 + 42.1 + 33.4 + 28.6 + 25.3 + 23.0;
        assert!((hand - 548.1f64).abs() < 1e-9);
        assert!((total_depth_mm(find(&t, "tr100").unwrap()) - 45.675).abs() < 1e-12);
    }

    #[test]
    fn resample_cases() {
        let ints = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0, 3.0, 5.0, 8.0];
        let e = RainEvent::new(ints.iter().enumerate().map(|(k, &v)| (k as f64 * 5.0, v)).collect()).unwrap();
        assert_eq!(resample_event(&e).unwrap().intensities, ints);

        let single = RainEvent::new(vec![(0.0, 24.0)]).unwrap();
        assert_eq!(resample_event(&single).unwrap().intensities, [24.0; 12]);

        assert!(resample_event(&RainEvent::new(vec![]).unwrap()).is_err());
        assert!(RainEvent::new(vec![(1.0, 1.0), (1.0, 2.0)]).is_err());
    }

    /// Integrates a left-held event minute by minute.
    fn minute_oracle(samples: &[(f64, f64)], a: usize, b: usize) -> f64 {
        (a..b)
            .map(|m| {
                let t = m as f64;
                samples.iter().rev().find(|s| s.0 <= t).map_or(0.0, |s| s.1) / 60.0
            })
            .sum()
    }

    #[test]
    fn per_minute_event_matches_oracle() {
        let samples: Vec<(f64, f64)> = (0..70).map(|m| (m as f64, ((m * 37) % 23) as f64 * 2.5)).collect();
        let e = RainEvent::new(samples.clone()).unwrap();
        let h = resample_event(&e).unwrap();
        for j in 0..12 {
            let mean = samples[5 * j..5 * j + 5].iter().map(|s| s.1).sum::<f64>() / 5.0;
            assert!((h.intensities[j] - mean).abs() < 1e-12);
            let oracle = minute_oracle(&samples, 5 * j, 5 * j + 5) * 12.0;
            assert!((h.intensities[j] - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization() {
        let t = table1();
        let tr100 = find(&t, "tr100").unwrap();
        let n = normalize_rain(tr100, DEFAULT_R_REF).unwrap();
        assert!((n[5] - 0.807).abs() < 1e-15);
        let z = Hyetograph::new("z", 1.0, false, [0.0; 12]).unwrap();
        assert_eq!(normalize_rain(&z, 200.0).unwrap(), [0.0; 12]);
        for (a, b) in n.iter().zip(&tr100.intensities) {
            assert_eq!(a * DEFAULT_R_REF, *b);
        }
        assert!(normalize_rain(tr100, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn resample_preserves_clipped_depth(
            raw in prop::collection::vec((1u32..6, 0u32..200), 1..30),
            start in 0u32..10,
        ) {
            let mut t = start;
            let samples: Vec<(f64, f64)> = raw.iter().map(|&(dt, i)| {
                let s = (t as f64, i as f64 * 0.5);
                t += dt;
                s
            }).collect();
            let e = RainEvent::new(samples.clone()).unwrap();
            let h = resample_event(&e).unwrap();
            let oracle = minute_oracle(&samples, 0, 60);
            let got = total_depth_mm(&h);
            prop_assert!((got - oracle).abs() <= 1e-9 * oracle.max(1e-300), "{} vs {}", got, oracle);
        }

        #[test]
        fn resample_idempotent(v in prop::array::uniform12(0.0f64..150.0)) {
            let e = RainEvent::new(v.iter().enumerate().map(|(k, &i)| (k as f64 * 5.0, i)).collect()).unwrap();
            let h = resample_event(&e).unwrap();
            let again = RainEvent::new(h.intensities.iter().enumerate().map(|(k, &i)| (k as f64 * 5.0, i)).collect()).unwrap();
            prop_assert_eq!(resample_event(&again).unwrap().intensities, h.intensities);
        }
    }
}
