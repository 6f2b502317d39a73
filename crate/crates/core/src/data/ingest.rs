use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Catalog, FeedbackEvent, FeedbackType};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Column {
    User,
    Session,
    Song,
    Station,
    Feedback,
    Timestamp,
    /// Present in the file but unused.
    Ignore,
}

impl Column {
    fn name(self) -> &'static str {
        match self {
            Column::User => "user",
            Column::Session => "session",
            Column::Song => "song",
            Column::Station => "station",
            Column::Feedback => "feedback",
            Column::Timestamp => "timestamp",
            Column::Ignore => "ignore",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    #[default]
    User,
    /// Each session id is its own sequence ("user").
    Session,
}

/// Dataset descriptor file contents (flat key-value TOML).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetDescriptor {
    pub name: String,
    pub columns: Vec<Column>,
    pub delimiter: char,
    pub granularity: Granularity,
    /// Map `play` feedback onto `up` (plays-and-skips datasets).
    pub plays_as_positive: bool,
    pub max_len: usize,
}

impl Default for DatasetDescriptor {
    fn default() -> Self {
        DatasetDescriptor {
            name: "dataset".into(),
            columns: vec![
                Column::User,
                Column::Song,
                Column::Station,
                Column::Feedback,
                Column::Timestamp,
            ],
            delimiter: ',',
            granularity: Granularity::User,
            plays_as_positive: false,
            max_len: 400,
        }
    }
}

impl DatasetDescriptor {
    pub fn from_toml(text: &str) -> Result<Self> {
        let d: DatasetDescriptor = toml::from_str(text).map_err(|e| Error::Config(format!("descriptor: {e}")))?;
        d.validate()?;
        Ok(d)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        for required in [Column::Song, Column::Feedback, Column::Timestamp] {
            if !self.columns.contains(&required) {
                return Err(Error::Config(format!(
                    "descriptor lacks a `{}` column",
                    required.name()
                )));
            }
        }
        let key = match self.granularity {
            Granularity::User => self.columns.contains(&Column::User),
            Granularity::Session => self.columns.contains(&Column::Session) || self.columns.contains(&Column::User),
        };
        if !key {
            return Err(Error::Config("descriptor lacks a user/session column".into()));
        }
        if self.max_len == 0 {
            return Err(Error::Config("max_len must be positive".into()));
        }
        Ok(())
    }

    fn is_header(&self, fields: &[&str]) -> bool {
        fields.len() == self.columns.len()
            && fields
                .iter()
                .zip(&self.columns)
                .all(|(f, c)| *c == Column::Ignore || f.trim().eq_ignore_ascii_case(c.name()))
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub malformed: usize,
    /// Up to five malformed rows, prefixed with their 1-based line number.
    pub samples: Vec<String>,
}

const MAX_MALFORMED_FRACTION: f64 = 0.01;

/// Reads a delimited event file. New user/song/station names are interned
/// into `catalog`.
pub fn ingest(
    path: &Path,
    descriptor: &DatasetDescriptor,
    catalog: &mut Catalog,
) -> Result<(Vec<FeedbackEvent>, IngestReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(BufReader::new(file), descriptor, catalog).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn ingest_reader<R: BufRead>(
    reader: R,
    descriptor: &DatasetDescriptor,
    catalog: &mut Catalog,
) -> Result<(Vec<FeedbackEvent>, IngestReport)> {
    descriptor.validate()?;
    let mut events = Vec::new();
    let mut report = IngestReport::default();
    let mut first = true;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<input>", e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(descriptor.delimiter).collect();
        if std::mem::take(&mut first) && descriptor.is_header(&fields) {
            continue;
        }
        report.rows += 1;
        match parse_row(&fields, descriptor, catalog) {
            Some(ev) => events.push(ev),
            None => {
                report.malformed += 1;
                if report.samples.len() < 5 {
                    report.samples.push(format!("{}: {}", lineno + 1, line));
                }
            }
        }
    }

    if report.malformed as f64 > MAX_MALFORMED_FRACTION * report.rows as f64 {
        return Err(Error::MalformedInput {
            bad: report.malformed,
            total: report.rows,
            samples: report.samples,
        });
    }
    Ok((events, report))
}

fn parse_row(fields: &[&str], d: &DatasetDescriptor, catalog: &mut Catalog) -> Option<FeedbackEvent> {
    if fields.len() != d.columns.len() {
        return None;
    }
    let (mut user, mut session, mut song, mut station) = (None, None, None, "");
    let (mut feedback, mut timestamp) = (None, None);
    for (&c, f) in d.columns.iter().zip(fields) {
        let f = f.trim();
        match c {
            Column::User => user = Some(f),
            Column::Session => session = Some(f),
            Column::Song => song = Some(f),
            Column::Station => station = f,
            Column::Feedback => feedback = Some(FeedbackType::parse(f, d.plays_as_positive)?),
            Column::Timestamp => timestamp = Some(f.parse::<i64>().ok().filter(|t| *t >= 0)?),
            Column::Ignore => {}
        }
    }
    let key = match d.granularity {
        Granularity::Session => session.or(user)?,
        Granularity::User => user?,
    };
    let song = song?;
    if key.is_empty() || song.is_empty() {
        return None;
    }
    Some(FeedbackEvent {
        user: catalog.user(key),
        song: catalog.song(song),
        station: catalog.station(station),
        feedback: feedback?,
        timestamp: timestamp?,
    })
}

/// Writes events in the descriptor's column order, with a header line.
/// Session columns are written with the sequence key.
pub fn write_events<W: Write>(
    mut out: W,
    catalog: &Catalog,
    events: &[FeedbackEvent],
    descriptor: &DatasetDescriptor,
) -> std::io::Result<()> {
    let delim = descriptor.delimiter.to_string();
    let header: Vec<&str> = descriptor.columns.iter().map(|c| c.name()).collect();
    writeln!(out, "{}", header.join(&delim))?;
    let mut row = Vec::with_capacity(descriptor.columns.len());
    for ev in events {
        row.clear();
        for c in &descriptor.columns {
            row.push(match c {
                Column::User | Column::Session => catalog.user_name(ev.user).to_owned(),
                Column::Song => catalog.song_name(ev.song).to_owned(),
                Column::Station => catalog.station_name(ev.station).to_owned(),
                Column::Feedback => ev.feedback.as_str().to_owned(),
                Column::Timestamp => ev.timestamp.to_string(),
                Column::Ignore => String::new(),
            });
        }
        writeln!(out, "{}", row.join(&delim))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::StationId;

    fn read(text: &str, d: &DatasetDescriptor) -> Result<(Vec<FeedbackEvent>, Catalog)> {
        let mut c = Catalog::default();
        let (ev, _) = ingest_reader(text.as_bytes(), d, &mut c)?;
        Ok((ev, c))
    }

    #[test]
    fn down_row_maps_fields() {
        let (ev, c) = read("u1,s9,st2,down,1700000000\n", &DatasetDescriptor::default()).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].feedback, FeedbackType::Down);
        assert_eq!(c.song_name(ev[0].song), "s9");
        assert_eq!(c.station_name(ev[0].station), "st2");
        assert_eq!(c.user_name(ev[0].user), "u1");
        assert_eq!(ev[0].timestamp, 1_700_000_000);
    }

    #[test]
    fn missing_station_is_null() {
        let (ev, _) = read("u1,s9,,skip,1700000001\n", &DatasetDescriptor::default()).unwrap();
        assert_eq!(ev[0].feedback, FeedbackType::Skip);
        assert_eq!(ev[0].station, StationId::NULL);
    }

    #[test]
    fn plays_as_positive_maps_to_up() {
        let d = DatasetDescriptor {
            plays_as_positive: true,
            ..Default::default()
        };
        let (ev, _) = read("sess1,t1,,play,5\n", &d).unwrap();
        assert_eq!(ev[0].feedback, FeedbackType::Up);
        let (ev, _) = read("sess1,t1,,play,5\n", &DatasetDescriptor::default()).unwrap();
        assert_eq!(ev[0].feedback, FeedbackType::Play);
    }

    #[test]
    fn header_is_skipped() {
        let text = "user,song,station,feedback,timestamp\nu1,s1,,up,1\n";
        let (ev, _) = read(text, &DatasetDescriptor::default()).unwrap();
        assert_eq!(ev.len(), 1);
    }

    #[test]
    fn too_many_malformed_rows_fail_with_samples() {
        let mut text = String::new();
        for i in 0..98 {
            text.push_str(&format!("u1,s{i},,up,{i}\n"));
        }
        text.push_str("u1,s1,,sideways,3\n");
        text.push_str("u1,s1,,up,-4\n");
        match read(&text, &DatasetDescriptor::default()) {
            Err(Error::MalformedInput { bad, total, samples }) => {
                assert_eq!((bad, total), (2, 100));
                assert_eq!(samples.len(), 2);
                assert!(samples[0].starts_with("99:"));
            }
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn stray_malformed_row_is_tolerated() {
        let mut text = String::new();
        for i in 0..199 {
            text.push_str(&format!("u1,s{i},,up,{i}\n"));
        }
        text.push_str("garbage\n");
        let mut c = Catalog::default();
        let (ev, rep) = ingest_reader(text.as_bytes(), &DatasetDescriptor::default(), &mut c).unwrap();
        assert_eq!(ev.len(), 199);
        assert_eq!(rep.malformed, 1);
    }

    #[test]
    fn session_granularity_keys_on_session() {
        let d = DatasetDescriptor {
            columns: vec![
                Column::User,
                Column::Session,
                Column::Song,
                Column::Feedback,
                Column::Timestamp,
            ],
            granularity: Granularity::Session,
            ..Default::default()
        };
        let (ev, c) = read("u1,a,s1,up,1\nu1,b,s2,up,2\n", &d).unwrap();
        assert_ne!(ev[0].user, ev[1].user);
        assert_eq!(c.user_name(ev[1].user), "b");
    }

    #[test]
    fn missing_file_is_io_error() {
        let mut c = Catalog::default();
        let err = ingest(
            Path::new("/nonexistent/events.csv"),
            &DatasetDescriptor::default(),
            &mut c,
        )
        .unwrap_err();
        assert_eq!(err.category(), "io");
    }

    #[test]
    fn descriptor_from_toml() {
        let d = DatasetDescriptor::from_toml(
            "name = \"spotify\"\ncolumns = [\"session\", \"song\", \"feedback\", \"timestamp\"]\n\
             granularity = \"session\"\nplays_as_positive = true\nmax_len = 20\n",
        )
        .unwrap();
        assert_eq!(d.max_len, 20);
        assert_eq!(d.granularity, Granularity::Session);
        assert!(DatasetDescriptor::from_toml("columns = [\"user\"]").is_err());
    }
}
