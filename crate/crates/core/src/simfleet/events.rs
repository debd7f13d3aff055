//! Event log records: JSON-lines, one event per line, deterministic field
//! order (tick, event, then data keys sorted).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub tick: u64,
    pub event: String,
    #[serde(flatten)]
    pub data: serde_json::Map<String, serde_json::Value>,
}

impl Event {
    pub fn new(tick: u64, event: &str, data: serde_json::Value) -> Self {
        let data = match data {
            serde_json::Value::Object(map) => map,
            serde_json::Value::Null => serde_json::Map::new(),
            other => {
                let mut map = serde_json::Map::new();
                map.insert("value".to_string(), other);
                map
            }
        };
        Event { tick, event: event.to_string(), data }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("event encodes")
    }
}

/// Render events as a JSON-lines document (trailing newline included when
/// non-empty).
pub fn to_json_lines(events: &[Event]) -> String {
    let mut out = String::new();
    for event in events {
        out.push_str(&event.to_json_line());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_order_is_stable() {
        let e = Event::new(3, "power", serde_json::json!({"node": "n1", "power": "ready"}));
        assert_eq!(e.to_json_line(), r#"{"tick":3,"event":"power","node":"n1","power":"ready"}"#);
    }

    #[test]
    fn json_lines_round_trip() {
        let events = vec![
            Event::new(1, "tick", serde_json::json!({})),
            Event::new(2, "job", serde_json::json!({"job": "job-000001"})),
        ];
        let text = to_json_lines(&events);
        assert_eq!(text.lines().count(), 2);
        for line in text.lines() {
            let _: Event = serde_json::from_str(line).unwrap();
        }
    }
}
