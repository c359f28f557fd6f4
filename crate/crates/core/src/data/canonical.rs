use std::io::{BufRead, Write};

use crate::data::Event;
use crate::error::{EtlpError, Result};

pub const CANONICAL_HEADER: &str = "timestamp_us,channel";

/// Parses the canonical event CSV: a `timestamp_us,channel` header followed by
/// one `timestamp,channel` pair of non-negative integers per line, with
/// non-decreasing timestamps.
pub fn read_canonical_events(reader: impl BufRead) -> Result<Vec<Event>> {
    let mut lines = reader.lines();
    let line_err = |line: usize, msg: String| EtlpError::Line { line, msg };
    match lines.next() {
        Some(Ok(h)) if h.trim_end_matches('\r') == CANONICAL_HEADER => {}
        Some(Ok(h)) => {
            return Err(line_err(
                1,
                format!("expected header `{CANONICAL_HEADER}`, got `{h}`"),
            ))
        }
        Some(Err(e)) => return Err(line_err(1, e.to_string())),
        None => return Err(line_err(1, "missing header".into())),
    }
    let mut events = Vec::new();
    let mut last = 0u64;
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line.map_err(|e| line_err(lineno, e.to_string()))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let (ts, ch) = line
            .split_once(',')
            .ok_or_else(|| line_err(lineno, format!("expected two fields, got `{line}`")))?;
        let timestamp_us: u64 = ts
            .trim()
            .parse()
            .map_err(|e| line_err(lineno, format!("bad timestamp `{ts}`: {e}")))?;
        let channel: u32 = ch
            .trim()
            .parse()
            .map_err(|e| line_err(lineno, format!("bad channel `{ch}`: {e}")))?;
        if timestamp_us < last {
            return Err(line_err(
                lineno,
                format!("timestamp {timestamp_us} precedes previous event at {last}"),
            ));
        }
        last = timestamp_us;
        events.push(Event {
            timestamp_us,
            channel,
        });
    }
    Ok(events)
}

pub fn write_canonical_events(mut writer: impl Write, events: &[Event]) -> std::io::Result<()> {
    writeln!(writer, "{CANONICAL_HEADER}")?;
    for e in events {
        writeln!(writer, "{},{}", e.timestamp_us, e.channel)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_examples() {
        let ev = read_canonical_events("timestamp_us,channel\n100,3\n250,3".as_bytes()).unwrap();
        assert_eq!(
            ev,
            vec![
                Event {
                    timestamp_us: 100,
                    channel: 3
                },
                Event {
                    timestamp_us: 250,
                    channel: 3
                }
            ]
        );
        assert!(read_canonical_events("timestamp_us,channel\n".as_bytes())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn rejects_out_of_order_with_line_number() {
        match read_canonical_events("timestamp_us,channel\n250,3\n100,3\n".as_bytes()) {
            Err(EtlpError::Line { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected line error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed() {
        for text in [
            "ts,ch\n1,2",
            "timestamp_us,channel\n1;2",
            "timestamp_us,channel\n-1,2",
            "timestamp_us,channel\n1,x",
            "",
        ] {
            assert!(read_canonical_events(text.as_bytes()).is_err(), "{text:?}");
        }
    }

    #[test]
    fn write_then_read() {
        let events = vec![
            Event {
                timestamp_us: 0,
                channel: 9,
            },
            Event {
                timestamp_us: 7,
                channel: 1,
            },
        ];
        let mut buf = Vec::new();
        write_canonical_events(&mut buf, &events).unwrap();
        assert_eq!(read_canonical_events(buf.as_slice()).unwrap(), events);
    }
}
