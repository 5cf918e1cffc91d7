//! Line-delimited structured event log, loosely modeled on qlog.
//!
//! Each line is one JSON object `{"time_us", "category", "event", "fields"}`.
//! Field maps serialize with sorted keys, so two runs with the same seed
//! produce byte-identical logs.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::time::SimTime;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub time_us: u64,
    pub category: String,
    pub event: String,
    pub fields: Value,
}

#[derive(Serialize)]
struct RecordRef<'a> {
    time_us: u64,
    category: &'a str,
    event: &'a str,
    fields: &'a Value,
}

#[derive(Debug, Default)]
pub struct EventLog {
    enabled: bool,
    buf: Vec<u8>,
    records: u64,
}

impl EventLog {
    pub fn disabled() -> Self {
        EventLog::default()
    }

    pub fn enabled() -> Self {
        EventLog {
            enabled: true,
            ..EventLog::default()
        }
    }

    /// Callers should check this before building `fields`.
    #[inline]
    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    pub fn record(&mut self, time: SimTime, category: &str, event: &str, fields: Value) {
        if !self.enabled {
            return;
        }
        let rec = RecordRef {
            time_us: time.as_micros(),
            category,
            event,
            fields: &fields,
        };
        serde_json::to_writer(&mut self.buf, &rec).expect("in-memory JSON write cannot fail");
        self.buf.push(b'\n');
        self.records += 1;
    }

    pub fn len(&self) -> u64 {
        self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.buf
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    /// Parses the log back into records.
    pub fn records(&self) -> Vec<LogRecord> {
        parse_log(&self.buf).expect("log produced by this module is valid")
    }
}

pub fn parse_log(bytes: &[u8]) -> Result<Vec<LogRecord>, serde_json::Error> {
    serde_json::Deserializer::from_slice(bytes)
        .into_iter::<LogRecord>()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn disabled_log_stays_empty() {
        let mut log = EventLog::disabled();
        log.record(SimTime::ZERO, "net", "packet_dropped", json!({}));
        assert!(log.is_empty());
        assert!(log.as_bytes().is_empty());
    }

    #[test]
    fn roundtrip_and_key_order() {
        let mut log = EventLog::enabled();
        log.record(
            SimTime::from_millis(3),
            "transport",
            "packet_sent",
            json!({"pn": 4, "endpoint": 1}),
        );
        let text = String::from_utf8(log.as_bytes().to_vec()).unwrap();
        assert_eq!(
            text,
            "{\"time_us\":3000,\"category\":\"transport\",\"event\":\"packet_sent\",\"fields\":{\"endpoint\":1,\"pn\":4}}\n"
        );
        let recs = log.records();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].fields["pn"], 4);
    }
}
