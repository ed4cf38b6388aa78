//! CSV persistence for datasets, traces, metric tables and training curves.
//!
//! Floats are written in Rust's shortest round-trip form, so every reader
//! here returns bit-identical values. Column order is fixed; readers check the
//! header and report malformed rows with their 1-based line number.

use std::io::{Read, Write};
use std::path::Path;

use crate::control::{OBSERVATION_CHANNELS, OBSERVATION_DIM};
use crate::ddpg::{EpochStats, Transition};
use crate::error::{Error, Result};
use crate::pipeline::{ControllerId, EpisodeTrace, MetricsRow, TraceRecord};

pub const TRACE_COLUMNS: [&str; 14] = [
    "t",
    "ph",
    "setpoint",
    "u",
    "irradiance",
    "do",
    "temp",
    "q_air",
    "q_dil",
    "e",
    "integral_e",
    "reward",
    "gate_active",
    "u_applied",
];
pub const METRICS_COLUMNS: [&str; 3] = ["controller", "iae", "cce"];
pub const LOSS_COLUMNS: [&str; 4] = ["epoch", "phase", "critic_loss", "actor_metric"];

pub fn dataset_columns() -> Vec<String> {
    let mut cols: Vec<String> = OBSERVATION_CHANNELS.iter().map(|c| format!("obs_{c}")).collect();
    cols.push("action".into());
    cols.push("reward".into());
    cols.extend(OBSERVATION_CHANNELS.iter().map(|c| format!("next_{c}")));
    cols
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn finish<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush()?;
    Ok(())
}

fn write_row<W: Write, I, S>(w: &mut csv::Writer<W>, row: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(row).map_err(std::io::Error::from)?;
    Ok(())
}

fn num(v: f64) -> String {
    v.to_string()
}

/// Rows of a CSV body with the line number each starts on.
struct Table {
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    /// Parses `text` whose first line sits at `first_line` in the file.
    fn parse(text: &str, first_line: u64, columns: &[&str]) -> Result<Table> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
        let mut records = rdr.records();
        let line_of = |pos: Option<&csv::Position>| pos.map_or(first_line, |p| p.line() + first_line - 1);
        let header = match records.next() {
            None => return Err(Error::Csv { line: first_line, message: "missing header row".into() }),
            Some(r) => r.map_err(|e| Error::Csv { line: line_of(e.position()), message: e.to_string() })?,
        };
        if header.iter().ne(columns.iter().copied()) {
            return Err(Error::Csv {
                line: first_line,
                message: format!(
                    "expected header `{}`, found `{}`",
                    columns.join(","),
                    header.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }
        let mut rows = Vec::new();
        for r in records {
            let r = r.map_err(|e| Error::Csv { line: line_of(e.position()), message: e.to_string() })?;
            let line = line_of(r.position());
            if r.len() != columns.len() {
                return Err(Error::Csv {
                    line,
                    message: format!("expected {} fields, found {}", columns.len(), r.len()),
                });
            }
            rows.push((line, r));
        }
        Ok(Table { rows })
    }
}

fn field<T: std::str::FromStr>(line: u64, rec: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    let raw = &rec[i];
    raw.parse().map_err(|_| Error::Csv { line, message: format!("column `{name}`: cannot parse `{raw}`") })
}

fn float(line: u64, rec: &csv::StringRecord, i: usize, name: &str) -> Result<f64> {
    let v: f64 = field(line, rec, i, name)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Csv { line, message: format!("column `{name}` is not finite") })
    }
}

fn read_all<R: Read>(mut r: R) -> Result<String> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    Ok(text)
}

pub fn write_dataset<W: Write>(w: W, data: &[Transition]) -> Result<()> {
    let mut w = csv_writer(w);
    write_row(&mut w, dataset_columns())?;
    for t in data {
        if t.obs.len() != OBSERVATION_DIM || t.next_obs.len() != OBSERVATION_DIM {
            return Err(Error::DimensionMismatch {
                context: "dataset row",
                expected: OBSERVATION_DIM,
                got: t.obs.len(),
            });
        }
        let row = t.obs.iter().chain([&t.action, &t.reward]).chain(&t.next_obs).map(|&v| num(v));
        write_row(&mut w, row)?;
    }
    finish(w)
}

pub fn read_dataset<R: Read>(r: R) -> Result<Vec<Transition>> {
    let text = read_all(r)?;
    let cols = dataset_columns();
    let names: Vec<&str> = cols.iter().map(String::as_str).collect();
    let table = Table::parse(&text, 1, &names)?;
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let values = (0..names.len()).map(|i| float(*line, rec, i, names[i])).collect::<Result<Vec<f64>>>()?;
        out.push(Transition {
            obs: values[..OBSERVATION_DIM].to_vec(),
            action: values[OBSERVATION_DIM],
            reward: values[OBSERVATION_DIM + 1],
            next_obs: values[OBSERVATION_DIM + 2..].to_vec(),
            active: true,
        });
    }
    Ok(out)
}

/// The first line is a `#` comment carrying the run metadata.
pub fn write_trace<W: Write>(mut w: W, trace: &EpisodeTrace) -> Result<()> {
    writeln!(
        w,
        "# controller={} seed={} config_hash={:016x} ts={} ph_clamp_steps={} clipped_observations={} fine_tune_events={}",
        trace.controller,
        trace.seed,
        trace.config_hash,
        num(trace.ts),
        trace.ph_clamp_steps,
        trace.clipped_observations,
        trace.fine_tune_events
    )?;
    let mut w = csv_writer(w);
    write_row(&mut w, TRACE_COLUMNS)?;
    for r in &trace.records {
        let vals = [
            r.t,
            r.ph,
            r.setpoint,
            r.u,
            r.irradiance,
            r.do_conc,
            r.temp,
            r.q_air,
            r.q_dil,
            r.e,
            r.integral_e,
            r.reward,
        ];
        let mut row: Vec<String> = vals.iter().map(|&v| num(v)).collect();
        row.push(u8::from(r.gate_active).to_string());
        row.push(num(r.u_applied));
        write_row(&mut w, row)?;
    }
    finish(w)
}

fn parse_trace_meta(line: &str) -> Result<EpisodeTrace> {
    let bad = |m: String| Error::Csv { line: 1, message: m };
    let body = line.strip_prefix('#').ok_or_else(|| bad("missing `#` metadata line".into()))?;
    let mut trace = EpisodeTrace {
        controller: ControllerId::Pid,
        seed: 0,
        config_hash: 0,
        ts: 0.0,
        records: Vec::new(),
        ph_clamp_steps: 0,
        clipped_observations: 0,
        fine_tune_events: 0,
    };
    let mut seen = 0;
    for item in body.split_whitespace() {
        let (key, value) =
            item.split_once('=').ok_or_else(|| bad(format!("metadata item `{item}` is not key=value")))?;
        let err = |_| bad(format!("metadata `{key}`: cannot parse `{value}`"));
        match key {
            "controller" => trace.controller = value.parse().map_err(|m: String| bad(m))?,
            "seed" => trace.seed = value.parse().map_err(err)?,
            "config_hash" => trace.config_hash = u64::from_str_radix(value, 16).map_err(err)?,
            "ts" => trace.ts = value.parse().map_err(|_| bad(format!("metadata `ts`: cannot parse `{value}`")))?,
            "ph_clamp_steps" => trace.ph_clamp_steps = value.parse().map_err(err)?,
            "clipped_observations" => trace.clipped_observations = value.parse().map_err(err)?,
            "fine_tune_events" => trace.fine_tune_events = value.parse().map_err(err)?,
            other => return Err(bad(format!("unknown metadata key `{other}`"))),
        }
        seen += 1;
    }
    if seen != 7 {
        return Err(bad(format!("expected 7 metadata items, found {seen}")));
    }
    if !(trace.ts > 0.0 && trace.ts.is_finite()) {
        return Err(bad("metadata `ts` must be a positive number".into()));
    }
    Ok(trace)
}

pub fn read_trace<R: Read>(r: R) -> Result<EpisodeTrace> {
    let text = read_all(r)?;
    let (meta, body) = text.split_once('\n').unwrap_or((&text, ""));
    let mut trace = parse_trace_meta(meta.trim_end_matches('\r'))?;
    let table = Table::parse(body, 2, &TRACE_COLUMNS)?;
    for (line, rec) in &table.rows {
        let f = |i: usize| float(*line, rec, i, TRACE_COLUMNS[i]);
        let gate_active = match &rec[12] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Csv {
                    line: *line,
                    message: format!("column `gate_active`: expected 0 or 1, found `{other}`"),
                })
            }
        };
        trace.records.push(TraceRecord {
            t: f(0)?,
            ph: f(1)?,
            setpoint: f(2)?,
            u: f(3)?,
            irradiance: f(4)?,
            do_conc: f(5)?,
            temp: f(6)?,
            q_air: f(7)?,
            q_dil: f(8)?,
            e: f(9)?,
            integral_e: f(10)?,
            reward: f(11)?,
            gate_active,
            u_applied: f(13)?,
        });
    }
    Ok(trace)
}

pub fn write_metrics<W: Write>(w: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv_writer(w);
    write_row(&mut w, METRICS_COLUMNS)?;
    for r in rows {
        write_row(&mut w, [r.controller.to_string(), num(r.iae), num(r.cce)])?;
    }
    finish(w)
}

pub fn read_metrics<R: Read>(r: R) -> Result<Vec<MetricsRow>> {
    let text = read_all(r)?;
    let table = Table::parse(&text, 1, &METRICS_COLUMNS)?;
    table
        .rows
        .iter()
        .map(|(line, rec)| {
            let controller = rec[0].parse().map_err(|m: String| Error::Csv { line: *line, message: m })?;
            Ok(MetricsRow { controller, iae: float(*line, rec, 1, "iae")?, cce: float(*line, rec, 2, "cce")? })
        })
        .collect()
}

pub fn write_loss_curve<W: Write>(w: W, history: &[EpochStats]) -> Result<()> {
    let mut w = csv_writer(w);
    write_row(&mut w, LOSS_COLUMNS)?;
    for s in history {
        write_row(&mut w, [s.epoch.to_string(), s.phase.to_string(), num(s.critic_loss), num(s.actor_metric)])?;
    }
    finish(w)
}

pub fn read_loss_curve<R: Read>(r: R) -> Result<Vec<EpochStats>> {
    let text = read_all(r)?;
    let table = Table::parse(&text, 1, &LOSS_COLUMNS)?;
    table
        .rows
        .iter()
        .map(|(line, rec)| {
            Ok(EpochStats {
                epoch: field(*line, rec, 0, "epoch")?,
                phase: rec[1].parse().map_err(|m: String| Error::Csv { line: *line, message: m })?,
                critic_loss: float(*line, rec, 2, "critic_loss")?,
                actor_metric: float(*line, rec, 3, "actor_metric")?,
            })
        })
        .collect()
}

/// Writes through a buffered file created at `path`.
pub fn save<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<()>,
{
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Opens `path` for one of the readers above.
pub fn open(path: &Path) -> Result<std::io::BufReader<std::fs::File>> {
    Ok(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddpg::Phase;

    fn transition(k: f64) -> Transition {
        Transition {
            obs: (0..OBSERVATION_DIM).map(|i| k + i as f64 * 0.1).collect(),
            action: 0.1 + 0.2,
            reward: 13.815510557964274,
            next_obs: (0..OBSERVATION_DIM).map(|i| -k / (i as f64 + 3.0)).collect(),
            active: true,
        }
    }

    fn sample_trace() -> EpisodeTrace {
        let rec = |t: f64, active: bool| TraceRecord {
            t,
            ph: 8.0123,
            setpoint: 8.0,
            u: if active { 2.5 } else { 0.0 },
            irradiance: 431.7,
            do_conc: 12.0,
            temp: 21.3,
            q_air: 30.0,
            q_dil: 0.0,
            e: -0.0123,
            integral_e: -1.0 / 3.0,
            reward: 8.7,
            gate_active: active,
            u_applied: 2.31,
        };
        EpisodeTrace {
            controller: ControllerId::RlFt,
            seed: 42,
            config_hash: 0xdead_beef_0000_0001,
            ts: 10.0,
            records: vec![rec(0.0, false), rec(10.0, true)],
            ph_clamp_steps: 1,
            clipped_observations: 2,
            fine_tune_events: 3,
        }
    }

    #[test]
    fn dataset_round_trip_is_exact() {
        let data = vec![transition(1.0), transition(-2.5e-7)];
        let mut buf = Vec::new();
        write_dataset(&mut buf, &data).unwrap();
        let back = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(back, data);
        let mut again = Vec::new();
        write_dataset(&mut again, &back).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn dataset_errors_carry_line_numbers() {
        let mut buf = Vec::new();
        write_dataset(&mut buf, &[transition(1.0), transition(2.0), transition(3.0)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let rest = lines[2].split_once(',').unwrap().1.to_string();
        lines[2] = format!("abc,{rest}");
        match read_dataset(lines.join("\n").as_bytes()) {
            Err(Error::Csv { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("abc"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        lines[2] = "1,2,3".into();
        assert!(matches!(read_dataset(lines.join("\n").as_bytes()), Err(Error::Csv { line: 3, .. })));
        assert!(matches!(read_dataset("a,b\n".as_bytes()), Err(Error::Csv { line: 1, .. })));
        assert!(matches!(read_dataset("".as_bytes()), Err(Error::Csv { line: 1, .. })));
    }

    #[test]
    fn trace_round_trip_keeps_metadata() {
        let trace = sample_trace();
        let mut buf = Vec::new();
        write_trace(&mut buf, &trace).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# controller=RL-FT seed=42 config_hash=deadbeef00000001 ts=10 "));
        assert_eq!(text.lines().nth(1).unwrap(), TRACE_COLUMNS.join(","));
        assert_eq!(read_trace(buf.as_slice()).unwrap(), trace);
    }

    #[test]
    fn trace_errors_count_the_metadata_line() {
        let mut buf = Vec::new();
        write_trace(&mut buf, &sample_trace()).unwrap();
        let text = String::from_utf8(buf).unwrap().replace(",1,2.31", ",yes,2.31");
        assert!(matches!(read_trace(text.as_bytes()), Err(Error::Csv { line: 4, .. })));
        assert!(matches!(read_trace("t,ph\n".as_bytes()), Err(Error::Csv { line: 1, .. })));
    }

    #[test]
    fn metrics_and_loss_round_trip() {
        let rows = vec![
            MetricsRow { controller: ControllerId::Pid, iae: 2339.1, cce: 302.43 },
            MetricsRow { controller: ControllerId::Rl, iae: 2276.9, cce: 149.53 },
            MetricsRow { controller: ControllerId::RlFt, iae: 2162.0, cce: 140.3 },
        ];
        let mut buf = Vec::new();
        write_metrics(&mut buf, &rows).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().next().unwrap(), "controller,iae,cce");
        assert_eq!(read_metrics(buf.as_slice()).unwrap(), rows);

        let history = vec![
            EpochStats { epoch: 1, phase: Phase::Imitation, critic_loss: 0.5, actor_metric: 1e-3 },
            EpochStats { epoch: 2, phase: Phase::PolicyGradient, critic_loss: 0.25, actor_metric: 120.0 },
        ];
        let mut buf = Vec::new();
        write_loss_curve(&mut buf, &history).unwrap();
        assert_eq!(read_loss_curve(buf.as_slice()).unwrap(), history);
    }
}
