use std::io::{Read, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Volt,
    Ampere,
    Watt,
    Var,
    Hertz,
    PerUnit,
}

impl Unit {
    pub fn suffix(self) -> &'static str {
        match self {
            Unit::Volt => "V",
            Unit::Ampere => "A",
            Unit::Watt => "W",
            Unit::Var => "VAr",
            Unit::Hertz => "Hz",
            Unit::PerUnit => "pu",
        }
    }

    /// Unit named by the suffix of a channel name such as `p_ac_W`.
    pub fn from_channel_name(name: &str) -> Option<Unit> {
        let suffix = name.rsplit('_').next()?;
        [Unit::Volt, Unit::Ampere, Unit::Watt, Unit::Var, Unit::Hertz, Unit::PerUnit]
            .into_iter()
            .find(|u| u.suffix() == suffix)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    /// Name with unit suffix, e.g. `v_link_V`.
    pub name: String,
    pub unit: Unit,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMarker {
    /// Scheduled time.
    pub time: f64,
    /// Start time of the step on which it took effect.
    pub effective: f64,
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub time: Vec<f64>,
    pub channels: Vec<Channel>,
    pub events: Vec<EventMarker>,
}

impl Trace {
    pub fn with_channels(names: &[&str]) -> Self {
        let channels = names
            .iter()
            .map(|n| Channel {
                name: (*n).to_string(),
                unit: Unit::from_channel_name(n).unwrap_or(Unit::PerUnit),
                data: Vec::new(),
            })
            .collect();
        Trace { time: Vec::new(), channels, events: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// Append one sample; `values` follows the channel order.
    pub fn push(&mut self, t: f64, values: &[f64]) {
        debug_assert_eq!(values.len(), self.channels.len());
        self.time.push(t);
        for (c, v) in self.channels.iter_mut().zip(values) {
            c.data.push(*v);
        }
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels.iter().find(|c| c.name == name).map(|c| c.data.as_slice())
    }

    pub fn require(&self, name: &str) -> Result<&[f64]> {
        self.channel(name).ok_or_else(|| Error::config(format!("trace has no channel {name}")))
    }

    pub fn names(&self) -> Vec<&str> {
        self.channels.iter().map(|c| c.name.as_str()).collect()
    }

    /// Keep only the listed channels, in the listed order.
    pub fn select(&mut self, names: &[String]) -> Result<()> {
        let mut kept = Vec::with_capacity(names.len());
        for n in names {
            let c = self
                .channels
                .iter()
                .find(|c| &c.name == n)
                .ok_or_else(|| Error::config(format!("trace has no channel {n}")))?;
            kept.push(c.clone());
        }
        self.channels = kept;
        Ok(())
    }

    /// Indices of the samples with `t1 <= t <= t2`.
    pub fn window(&self, t1: f64, t2: f64) -> Result<Range<usize>> {
        let (first, last) = match (self.time.first(), self.time.last()) {
            (Some(a), Some(b)) => (*a, *b),
            _ => return Err(Error::config("empty trace")),
        };
        let eps = 1e-9 * (last - first).abs().max(1e-12);
        if !(t1 < t2) || t1 < first - eps || t2 > last + eps {
            return Err(Error::config(format!(
                "window [{t1}, {t2}] lies outside the trace [{first}, {last}]"
            )));
        }
        let lo = self.time.partition_point(|&t| t < t1 - eps);
        let hi = self.time.partition_point(|&t| t <= t2 + eps);
        if lo >= hi {
            return Err(Error::config(format!("window [{t1}, {t2}] holds no samples")));
        }
        Ok(lo..hi)
    }

    pub fn header(&self) -> Vec<String> {
        std::iter::once("time_s".to_string()).chain(self.channels.iter().map(|c| c.name.clone())).collect()
    }

    /// CSV with a `time_s` column and one column per channel, shortest
    /// round-trip float formatting.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let to_io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        out.write_record(self.header()).map_err(to_io)?;
        let mut row: Vec<String> = Vec::with_capacity(self.channels.len() + 1);
        for (k, t) in self.time.iter().enumerate() {
            row.clear();
            row.push(format!("{t}"));
            row.extend(self.channels.iter().map(|c| format!("{}", c.data[k])));
            out.write_record(&row).map_err(to_io)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let parse_err = |m: String| Error::Parse { source_name: "trace csv".into(), message: m };
        let header: Vec<String> = rd.headers().map_err(|e| parse_err(e.to_string()))?.iter().map(String::from).collect();
        if header.first().map(String::as_str) != Some("time_s") {
            return Err(parse_err("first column must be time_s".into()));
        }
        let names: Vec<&str> = header[1..].iter().map(String::as_str).collect();
        let mut trace = Trace::with_channels(&names);
        let mut values = vec![0.0; names.len()];
        for (line, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| parse_err(e.to_string()))?;
            let mut it = rec.iter().map(|s| s.parse::<f64>());
            let t = it
                .next()
                .and_then(|r| r.ok())
                .ok_or_else(|| parse_err(format!("row {}: bad time", line + 2)))?;
            for (slot, v) in values.iter_mut().zip(it) {
                *slot = v.map_err(|e| parse_err(format!("row {}: {e}", line + 2)))?;
            }
            trace.push(t, &values);
        }
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let mut t = Trace::with_channels(&["v_link_V", "p_ac_W"]);
        t.push(0.0, &[250.0, 1.0 / 3.0]);
        t.push(1e-5, &[249.999_999_999_9, -2.5e-300]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("time_s,v_link_V,p_ac_W\n"));
        let back = Trace::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.time, t.time);
        assert_eq!(back.channels, t.channels);
    }

    #[test]
    fn window_bounds() {
        let mut t = Trace::with_channels(&["x_pu"]);
        for k in 0..11 {
            t.push(k as f64 * 0.1, &[k as f64]);
        }
        assert_eq!(t.window(0.2, 0.5).unwrap(), 2..6);
        assert!(t.window(0.5, 1.2).is_err());
        assert!(t.window(0.5, 0.5).is_err());
        assert_eq!(Unit::from_channel_name("q_ac_VAr"), Some(Unit::Var));
    }
}
