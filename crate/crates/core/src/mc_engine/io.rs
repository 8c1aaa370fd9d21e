use std::io::{BufRead, Write};

use super::{DetectionRecord, Origin};
use crate::error::{Error, Result};

pub const RECORDS_CSV_HEADER: &str = "gate_index,time_ps,origin,accepted";

pub fn write_records_csv<W: Write>(mut out: W, records: &[DetectionRecord]) -> Result<()> {
    writeln!(out, "{RECORDS_CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{}",
            r.gate_index,
            r.time * 1e12,
            r.origin.as_str(),
            r.accepted as u8
        )?;
    }
    Ok(())
}

pub fn read_records_csv<R: BufRead>(input: R) -> Result<Vec<DetectionRecord>> {
    let mut lines = input.lines();
    match lines.next().transpose()? {
        Some(h) if h.trim() == RECORDS_CSV_HEADER => {}
        other => {
            return Err(Error::Parse(format!(
                "expected header `{RECORDS_CSV_HEADER}`, found {other:?}"
            )))
        }
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Parse(format!("line {}: bad {what}", n + 2));
        let mut f = line.split(',');
        let gate_index = f.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("gate_index"))?;
        let time_ps: f64 = f.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("time_ps"))?;
        let origin: Origin = f.next().ok_or_else(|| bad("origin"))?.parse()?;
        let accepted = match f.next() {
            Some("1") => true,
            Some("0") => false,
            _ => return Err(bad("accepted")),
        };
        out.push(DetectionRecord {
            gate_index,
            time: time_ps * 1e-12,
            origin,
            accepted,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let recs = vec![
            DetectionRecord {
                gate_index: 40,
                time: 32.00001e-9,
                origin: Origin::Photon,
                accepted: true,
            },
            DetectionRecord {
                gate_index: 45,
                time: 36.8e-9,
                origin: Origin::Tail,
                accepted: false,
            },
        ];
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("gate_index,time_ps,origin,accepted\n40,"));
        let back = read_records_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!(a.gate_index, b.gate_index);
            assert_eq!(a.origin, b.origin);
            assert_eq!(a.accepted, b.accepted);
            assert!((a.time - b.time).abs() < 1e-21);
        }
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(read_records_csv(&b"gate,time\n"[..]).is_err());
        assert!(read_records_csv(&b"gate_index,time_ps,origin,accepted\n1,2,ghost,1\n"[..]).is_err());
    }
}
