//! `papers.csv` / `authors.csv` reading and writing.

use std::path::Path;
use std::str::FromStr;

use super::records::{AuthorId, AuthorRecord, Corpus, PaperId, PaperRecord, Tier};
use crate::fsio::write_atomic;
use crate::{Error, Result};

pub const PAPERS_HEADER: [&str; 6] = ["paper_id", "title", "conference", "accepted", "author_ids", "tier"];
pub const AUTHORS_HEADER: [&str; 6] = ["author_id", "gender", "race", "country_class", "career_stage", "h_index"];

struct Cells<'a> {
    file: &'a str,
    row: usize,
    record: &'a csv::StringRecord,
    header: &'a [&'a str],
}

impl Cells<'_> {
    fn raw(&self, column: &str) -> &str {
        let i = self.header.iter().position(|&h| h == column).expect("known column");
        self.record.get(i).unwrap_or("")
    }

    fn error(&self, column: &str, message: impl Into<String>) -> Error {
        Error::Parse {
            file: self.file.to_string(),
            row: self.row,
            column: column.to_string(),
            message: message.into(),
        }
    }

    fn parse<T: FromStr>(&self, column: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(column);
        raw.parse::<T>()
            .map_err(|e| self.error(column, format!("cannot parse `{raw}`: {e}")))
    }
}

fn read_table(
    path: &Path,
    header: &[&str],
    mut row_fn: impl FnMut(&Cells<'_>) -> Result<()>,
) -> Result<()> {
    let file_label = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let found = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(Error::Parse {
            file: file_label,
            row: 1,
            column: "header".into(),
            message: format!(
                "expected `{}`, found `{}`",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let cells = Cells {
            file: &file_label,
            // header is line 1
            row: i + 2,
            record: &record,
            header,
        };
        row_fn(&cells)?;
    }
    Ok(())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            file: path.display().to_string(),
            row: 0,
            column: String::new(),
            message: format!("{other:?}"),
        },
    }
}

fn parse_bool01(cells: &Cells<'_>, column: &str) -> Result<bool> {
    match cells.raw(column) {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(cells.error(column, format!("expected 0 or 1, got `{other}`"))),
    }
}

/// Loads and validates both tables and checks that every referenced author exists.
pub fn load_records(papers_path: &Path, authors_path: &Path) -> Result<Corpus> {
    let mut authors = Vec::new();
    let mut seen_authors = std::collections::HashSet::new();
    read_table(authors_path, &AUTHORS_HEADER, |c| {
        let author_id = AuthorId(c.parse::<u64>("author_id")?);
        if !seen_authors.insert(author_id) {
            return Err(c.error("author_id", format!("duplicate author id {author_id}")));
        }
        let h_index: f64 = c.parse("h_index")?;
        if !(h_index.is_finite() && h_index >= 0.0) {
            return Err(c.error("h_index", format!("must be >= 0, got {h_index}")));
        }
        authors.push(AuthorRecord {
            author_id,
            gender: c.parse("gender")?,
            race: c.parse("race")?,
            country_class: c.parse("country_class")?,
            career_stage: c.parse("career_stage")?,
            h_index,
        });
        Ok(())
    })?;

    let mut papers = Vec::new();
    let mut seen_papers = std::collections::HashSet::new();
    read_table(papers_path, &PAPERS_HEADER, |c| {
        let paper_id = PaperId(c.parse::<u64>("paper_id")?);
        if !seen_papers.insert(paper_id) {
            return Err(c.error("paper_id", format!("duplicate paper id {paper_id}")));
        }
        let author_ids = c
            .raw("author_ids")
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                let id = s
                    .parse::<u64>()
                    .map(AuthorId)
                    .map_err(|e| c.error("author_ids", format!("cannot parse `{s}`: {e}")))?;
                if seen_authors.contains(&id) {
                    Ok(id)
                } else {
                    Err(c.error("author_ids", format!("unknown author id {id}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if author_ids.is_empty() {
            return Err(c.error("author_ids", "paper needs at least one author"));
        }
        let tier = match c.raw("tier") {
            "" => None,
            _ => Some(c.parse::<Tier>("tier")?),
        };
        papers.push(PaperRecord {
            paper_id,
            title: c.raw("title").to_string(),
            author_ids,
            conference: c.parse("conference")?,
            accepted: parse_bool01(c, "accepted")?,
            tier,
        });
        Ok(())
    })?;

    Corpus::new(papers, authors)
}

fn to_csv_bytes<F>(header: &[&str], rows: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)
        .and_then(|_| rows(&mut w))
        .map_err(|e| Error::Serde(e.to_string()))?;
    w.into_inner().map_err(|e| Error::Serde(e.to_string()))
}

/// Writes `papers.csv` and `authors.csv` into `dir` (atomically, each file).
pub fn write_records(corpus: &Corpus, dir: &Path) -> Result<()> {
    crate::fsio::ensure_writable_dir(dir)?;
    let papers = to_csv_bytes(&PAPERS_HEADER, |w| {
        for p in corpus.papers() {
            let ids: Vec<String> = p.author_ids.iter().map(|a| a.to_string()).collect();
            w.write_record([
                p.paper_id.to_string(),
                p.title.clone(),
                p.conference.as_str().to_string(),
                if p.accepted { "1" } else { "0" }.to_string(),
                ids.join(";"),
                p.tier.map(|t| t.as_str().to_string()).unwrap_or_default(),
            ])?;
        }
        Ok(())
    })?;
    let authors = to_csv_bytes(&AUTHORS_HEADER, |w| {
        for a in corpus.authors() {
            w.write_record([
                a.author_id.to_string(),
                a.gender.as_str().to_string(),
                a.race.as_str().to_string(),
                a.country_class.as_str().to_string(),
                a.career_stage.as_str().to_string(),
                a.h_index.to_string(),
            ])?;
        }
        Ok(())
    })?;
    write_atomic(&dir.join("papers.csv"), &papers)?;
    write_atomic(&dir.join("authors.csv"), &authors)?;
    Ok(())
}
