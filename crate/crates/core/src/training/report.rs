use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Per-epoch loss curves plus final summary values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub series: BTreeMap<String, Vec<(usize, f64)>>,
    pub summary: BTreeMap<String, f64>,
    /// Seconds spent; kept out of the CSV so reports compare byte-for-byte.
    pub wall_clock: f64,
}

impl TrainReport {
    pub fn record(&mut self, series: &str, epoch: usize, value: f64) {
        self.series.entry(series.to_string()).or_default().push((epoch, value));
    }

    pub fn values(&self, series: &str) -> Vec<f64> {
        self.series.get(series).map(|v| v.iter().map(|p| p.1).collect()).unwrap_or_default()
    }

    pub fn last(&self, series: &str) -> Option<f64> {
        self.series.get(series).and_then(|v| v.last()).map(|p| p.1)
    }

    pub fn is_finite(&self) -> bool {
        self.series.values().flatten().all(|p| p.1.is_finite()) && self.summary.values().all(|v| v.is_finite())
    }

    /// `epoch,series,value` rows, series in name order; summary rows use epoch `final`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,series,value\n");
        for (name, points) in &self.series {
            for (epoch, value) in points {
                let _ = writeln!(s, "{epoch},{name},{value:?}");
            }
        }
        for (name, value) in &self.summary {
            let _ = writeln!(s, "final,{name},{value:?}");
        }
        s
    }

    pub fn merge(&mut self, prefix: &str, other: &TrainReport) {
        for (k, v) in &other.series {
            self.series.insert(format!("{prefix}{k}"), v.clone());
        }
        for (k, v) in &other.summary {
            self.summary.insert(format!("{prefix}{k}"), *v);
        }
        self.wall_clock += other.wall_clock;
    }
}
