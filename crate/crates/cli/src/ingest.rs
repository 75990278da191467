//! Long-format CSV input: `site_id,lon,lat,time,value`.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use condex::field::Field;
use condex::mesh::Point;
use condex::Error;

use crate::error::{file_error, CliResult};

const HEADER: [&str; 5] = ["site_id", "lon", "lat", "time", "value"];

/// Sites in order of first appearance, the sorted time axis and the values.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub site_ids: Vec<String>,
    pub coords: Vec<Point>,
    pub times: Vec<String>,
    /// Indices into `times` where a new year begins (ISO dates only).
    pub year_starts: Vec<usize>,
    pub values: Field,
}

fn parse_error(line: u64, message: impl Into<String>) -> Error {
    Error::Parse { line: line as usize, message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum TimeKey {
    Index(i64),
    Label(String),
}

fn year_of(label: &str) -> Option<&str> {
    let (y, rest) = label.split_once('-')?;
    (y.len() == 4 && y.chars().all(|c| c.is_ascii_digit()) && !rest.is_empty()).then_some(y)
}

pub fn read_dataset<R: Read>(input: R) -> CliResult<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(parse_error(1, format!("expected header {}", HEADER.join(","))).into());
    }
    let mut site_index: HashMap<String, usize> = HashMap::new();
    let mut site_ids = Vec::new();
    let mut coords: Vec<Point> = Vec::new();
    let mut entries: Vec<(usize, String, Option<f64>, u64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 5 {
            return Err(parse_error(line, format!("expected 5 fields, found {}", rec.len())).into());
        }
        let num = |k: usize, name: &str| -> Result<f64, Error> {
            let v: f64 = rec[k].parse().map_err(|_| parse_error(line, format!("{name} '{}' is not a number", &rec[k])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_error(line, format!("{name} is not finite")))
            }
        };
        let p = [num(1, "lon")?, num(2, "lat")?];
        let value = match &rec[4] {
            "" | "NA" | "NaN" => None,
            _ => Some(num(4, "value")?),
        };
        if rec[0].is_empty() || rec[3].is_empty() {
            return Err(parse_error(line, "empty site_id or time").into());
        }
        let site = match site_index.get(&rec[0]) {
            Some(&s) => {
                if coords[s] != p {
                    return Err(parse_error(line, format!("site '{}' has conflicting coordinates", &rec[0])).into());
                }
                s
            }
            None => {
                site_index.insert(rec[0].to_string(), site_ids.len());
                site_ids.push(rec[0].to_string());
                coords.push(p);
                site_ids.len() - 1
            }
        };
        entries.push((site, rec[3].to_string(), value, line));
    }
    if entries.is_empty() {
        return Err(Error::Data("input has no data rows".into()).into());
    }
    let numeric = entries.iter().all(|e| e.1.parse::<i64>().is_ok());
    let key = |t: &str| if numeric { TimeKey::Index(t.parse().unwrap()) } else { TimeKey::Label(t.to_string()) };
    let mut time_index: BTreeMap<TimeKey, String> = BTreeMap::new();
    for e in &entries {
        time_index.entry(key(&e.1)).or_insert_with(|| e.1.clone());
    }
    let times: Vec<String> = time_index.into_values().collect();
    let position: HashMap<&str, usize> = times.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let mut values = Field::missing(site_ids.len(), times.len());
    let mut seen: HashMap<(usize, usize), u64> = HashMap::new();
    for (site, time, value, line) in &entries {
        let t = position[time.as_str()];
        if let Some(first) = seen.insert((*site, t), *line) {
            return Err(parse_error(
                *line,
                format!("duplicate entry for site '{}' at time '{time}' (first on line {first})", site_ids[*site]),
            )
            .into());
        }
        if let Some(v) = value {
            values.set(*site, t, *v);
        }
    }
    let mut year_starts = Vec::new();
    if !numeric {
        for t in 1..times.len() {
            if let (Some(a), Some(b)) = (year_of(&times[t - 1]), year_of(&times[t])) {
                if a != b {
                    year_starts.push(t);
                }
            }
        }
    }
    Ok(Dataset { site_ids, coords, times, year_starts, values })
}

pub fn load_dataset(path: &Path) -> CliResult<Dataset> {
    let file = std::fs::File::open(path).map_err(file_error(path))?;
    read_dataset(std::io::BufReader::new(file))
}

/// Writes a field in the same long format, skipping missing entries.
pub fn write_long<W: Write>(data: &Dataset, values: &Field, value_name: &str, out: W) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["site_id", "lon", "lat", "time", value_name])?;
    for (s, id) in data.site_ids.iter().enumerate() {
        for (t, time) in data.times.iter().enumerate() {
            if let Some(v) = values.get(s, t) {
                let p = data.coords[s];
                w.write_record([id.clone(), p[0].to_string(), p[1].to_string(), time.clone(), v.to_string()])?;
            }
        }
    }
    w.flush().map_err(Error::Io)?;
    Ok(())
}
