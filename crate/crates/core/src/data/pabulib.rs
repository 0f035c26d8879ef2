//! Importer for the `.pb` text format used by the Pabulib repository.
//!
//! A `.pb` file has three `;`-delimited sections (`META`, `PROJECTS`, `VOTES`),
//! each introduced by its name on a line of its own and followed by a header
//! row. Individual ballots in `VOTES` are only used to count approvals per
//! project and are dropped afterwards; voter-level columns (age, sex, ...) are
//! never read.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use log::warn;

use super::campaign::{validate_campaign, Campaign, CampaignMeta, Project};
use super::{DataError, Money};

const DEFAULT_DISTRICT: &str = "citywide";

#[derive(Default)]
struct Section {
    /// 1-based file line of the header row.
    header_line: usize,
    header: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

impl Section {
    fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

fn split_row(line: &str, line_no: usize) -> Result<Vec<String>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b';')
        .has_headers(false)
        .flexible(true)
        .from_reader(line.as_bytes());
    match rdr.records().next() {
        Some(Ok(rec)) => Ok(rec.iter().map(|f| f.trim().to_string()).collect()),
        Some(Err(e)) => Err(DataError::Pabulib { line: line_no, message: e.to_string() }),
        None => Ok(Vec::new()),
    }
}

fn parse_sections(text: &str) -> Result<BTreeMap<String, Section>, DataError> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let upper = line.trim().to_uppercase();
        if matches!(upper.as_str(), "META" | "PROJECTS" | "VOTES") {
            sections.insert(upper.clone(), Section::default());
            current = Some(upper);
            continue;
        }
        let Some(name) = current.as_ref() else {
            return Err(DataError::Pabulib {
                line: line_no,
                message: "content before the first section marker".into(),
            });
        };
        let section = sections.get_mut(name).expect("section inserted on marker");
        let fields = split_row(line, line_no)?;
        if section.header.is_empty() {
            section.header_line = line_no;
            section.header = fields.into_iter().map(|h| h.to_lowercase()).collect();
        } else {
            section.rows.push((line_no, fields));
        }
    }
    Ok(sections)
}

/// Reads a `.pb` file and aggregates its ballots into per-project counts.
///
/// `language` tags the project text (Pabulib files do not declare it).
pub fn load_pabulib(path: &Path, language: &str) -> Result<Campaign, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_pabulib(&text, language)
}

pub fn parse_pabulib(text: &str, language: &str) -> Result<Campaign, DataError> {
    let sections = parse_sections(text)?;
    let meta_section = sections.get("META").ok_or_else(|| missing("META"))?;
    let projects_section = sections.get("PROJECTS").ok_or_else(|| missing("PROJECTS"))?;

    let meta: HashMap<String, String> = meta_section
        .rows
        .iter()
        .filter(|(_, r)| r.len() >= 2)
        .map(|(_, r)| (r[0].to_lowercase(), r[1].clone()))
        .collect();
    // The META header row is itself a key/value pair in some files.
    let meta_get = |key: &str| -> Option<String> {
        meta.get(key).cloned().or_else(|| {
            (meta_section.header.first().map(String::as_str) == Some(key))
                .then(|| meta_section.header.get(1).cloned())
                .flatten()
        })
    };

    let col = |name: &str| {
        projects_section.column(name).ok_or_else(|| DataError::Pabulib {
            line: projects_section.header_line,
            message: format!("PROJECTS section lacks column {name:?}"),
        })
    };
    let id_col = col("project_id")?;
    let cost_col = col("cost")?;
    let name_col = projects_section.column("name");
    let category_col = projects_section.column("category");
    let district_col = projects_section.column("district");
    let description_col = projects_section.column("description");
    let votes_col = projects_section.column("votes");

    let meta_district = meta_get("district").or_else(|| meta_get("subunit"));
    let mut projects = Vec::new();
    let mut index_of: HashMap<String, usize> = HashMap::new();
    let mut listed_votes: Vec<Option<u64>> = Vec::new();
    let mut missing_descriptions = 0usize;
    for (line, row) in &projects_section.rows {
        let get = |c: Option<usize>| c.and_then(|c| row.get(c)).cloned().unwrap_or_default();
        let id = get(Some(id_col));
        let cost_text = get(Some(cost_col));
        let cost: Money = cost_text.parse().map_err(|_| DataError::Pabulib {
            line: *line,
            message: format!("cannot parse cost {cost_text:?}"),
        })?;
        let title = match get(name_col) {
            t if t.is_empty() => format!("Project {id}"),
            t => t,
        };
        let description = match get(description_col) {
            d if d.is_empty() => {
                missing_descriptions += 1;
                title.clone()
            }
            d => d,
        };
        let category = match get(category_col) {
            c if c.is_empty() => "uncategorized".to_string(),
            c => c,
        };
        let district = match get(district_col) {
            d if d.is_empty() => meta_district.clone().unwrap_or_else(|| DEFAULT_DISTRICT.into()),
            d => d,
        };
        listed_votes.push(match get(votes_col) {
            v if v.is_empty() => None,
            v => Some(v.parse().map_err(|_| DataError::Pabulib {
                line: *line,
                message: format!("cannot parse votes {v:?}"),
            })?),
        });
        if index_of.insert(id.clone(), projects.len()).is_some() {
            return Err(DataError::Pabulib { line: *line, message: format!("duplicate project id {id:?}") });
        }
        projects.push(Project { id, title, description, category, cost, district, votes: None });
    }
    if projects.is_empty() {
        return Err(DataError::Empty);
    }
    if missing_descriptions > 0 {
        warn!("{missing_descriptions} projects have no description; using titles instead");
    }

    let mut voters = 0u64;
    let mut longest_ballot = 0usize;
    match sections.get("VOTES") {
        Some(votes_section) => {
            let vote_col = votes_section.column("vote").ok_or_else(|| DataError::Pabulib {
                line: votes_section.header_line,
                message: "VOTES section lacks column \"vote\"".into(),
            })?;
            let mut counts = vec![0u64; projects.len()];
            for (line, row) in &votes_section.rows {
                let ballot = row.get(vote_col).map(String::as_str).unwrap_or("");
                let approved: Vec<&str> =
                    ballot.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
                if approved.is_empty() {
                    continue;
                }
                voters += 1;
                longest_ballot = longest_ballot.max(approved.len());
                for pid in approved {
                    let idx = index_of.get(pid).ok_or_else(|| DataError::Pabulib {
                        line: *line,
                        message: format!("ballot approves unknown project {pid:?}"),
                    })?;
                    counts[*idx] += 1;
                }
            }
            for (p, n) in projects.iter_mut().zip(counts) {
                p.votes = Some(n);
            }
        }
        None => {
            for (p, n) in projects.iter_mut().zip(&listed_votes) {
                p.votes = *n;
            }
            voters = meta_get("num_votes").and_then(|v| v.parse().ok()).unwrap_or(0);
        }
    }

    let city = meta_get("unit").or_else(|| meta_get("city")).unwrap_or_else(|| "unknown".into());
    let year = meta_get("instance")
        .or_else(|| meta_get("year"))
        .and_then(|s| s.chars().take(4).collect::<String>().parse().ok())
        .unwrap_or(0);
    let currency = meta_get("currency").unwrap_or_else(|| {
        match meta_get("country").map(|c| c.to_lowercase()).as_deref() {
            Some("poland") => "PLN".into(),
            _ => "EUR".into(),
        }
    });
    let budget: Money = meta_get("budget")
        .map(|b| b.replace(',', "."))
        .and_then(|b| b.parse().ok())
        .unwrap_or(Money::ZERO);
    let max_approvals = meta_get("max_length")
        .and_then(|m| m.parse().ok())
        .unwrap_or(longest_ballot.max(1) as u32);
    let total_votes = projects.iter().filter_map(|p| p.votes).sum();

    let campaign = Campaign {
        meta: CampaignMeta {
            id: None,
            city,
            year,
            currency,
            budget,
            voters,
            total_votes,
            max_approvals,
            language: language.to_string(),
            translated: false,
        },
        projects,
    };
    let report = validate_campaign(&campaign);
    if !report.is_clean() {
        return Err(DataError::Invalid(report));
    }
    Ok(campaign)
}

fn missing(section: &str) -> DataError {
    DataError::Pabulib { line: 0, message: format!("missing {section} section") }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
META
key;value
description;Test
country;Poland
unit;Wrocław
instance;2017
num_projects;3
num_votes;4
budget;1000
vote_type;approval
max_length;3
PROJECTS
project_id;cost;votes;name;category;district
1;600;3;Park;environment;Krzyki
2;300;2;\"Library; new wing\";culture;Psie Pole
3;500;1;Bikes;transport;
VOTES
voter_id;age;sex;vote
1;30;M;1,2
2;41;F;1
3;25;F;3,1,2
4;60;M;
";

    #[test]
    fn aggregates_ballots_into_counts() {
        let c = parse_pabulib(SAMPLE, "pl").unwrap();
        assert_eq!(c.meta.city, "Wrocław");
        assert_eq!(c.meta.year, 2017);
        assert_eq!(c.meta.currency, "PLN");
        assert_eq!(c.meta.budget, Money::from_major(1000));
        assert_eq!(c.meta.voters, 3, "empty ballots are not voters");
        assert_eq!(c.meta.total_votes, 6);
        assert_eq!(c.meta.max_approvals, 3);
        let votes: Vec<_> = c.projects.iter().map(|p| p.votes.unwrap()).collect();
        assert_eq!(votes, vec![3, 2, 1]);
        assert_eq!(c.projects[1].title, "Library; new wing");
        assert_eq!(c.projects[2].district, "citywide");
        assert_eq!(c.projects[0].description, "Park");
        assert_eq!(c.id(), "wroclaw-2017");
    }

    #[test]
    fn unknown_project_in_ballot_names_line() {
        let text = SAMPLE.replace("2;41;F;1", "2;41;F;9");
        match parse_pabulib(&text, "pl").unwrap_err() {
            DataError::Pabulib { line, message } => {
                assert_eq!(line, 20);
                assert!(message.contains("\"9\""));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_projects_section() {
        assert!(matches!(
            parse_pabulib("META\nkey;value\nunit;X\n", "pl").unwrap_err(),
            DataError::Pabulib { .. }
        ));
    }
}
