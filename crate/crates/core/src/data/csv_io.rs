use std::collections::HashMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use super::campaign::{validate_campaign, Campaign, CampaignMeta, Project};
use super::{DataError, Money};

pub const PROJECTS_FILE: &str = "projects.csv";
pub const META_FILE: &str = "meta.json";

const REQUIRED_COLUMNS: [&str; 6] = ["id", "title", "description", "category", "cost", "district"];
const VOTES_COLUMN: &str = "votes";

/// Loads a project table plus its metadata and validates the result.
///
/// Column order does not matter and every field is whitespace-trimmed. The
/// returned campaign is guaranteed clean; any broken invariant becomes
/// [`DataError::Invalid`].
pub fn load_campaign(csv_path: &Path, meta: CampaignMeta) -> Result<Campaign, DataError> {
    let file = fs::File::open(csv_path).map_err(|e| DataError::io(csv_path, e))?;
    let projects = read_projects(file).map_err(|e| e.with_path(csv_path))?;
    let campaign = Campaign { meta, projects };
    let report = validate_campaign(&campaign);
    if !report.is_clean() {
        return Err(DataError::Invalid(report));
    }
    Ok(campaign)
}

/// Loads `<dir>/projects.csv` with `<dir>/meta.json`.
pub fn load_campaign_dir(dir: &Path) -> Result<Campaign, DataError> {
    let meta = read_meta(&dir.join(META_FILE))?;
    load_campaign(&dir.join(PROJECTS_FILE), meta)
}

pub fn read_meta(path: &Path) -> Result<CampaignMeta, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| DataError::Meta { path: path.to_path_buf(), source })
}

/// Parses project rows. Fails on missing columns, unparseable numbers,
/// duplicate ids and an empty table.
pub fn read_projects<R: Read>(reader: R) -> Result<Vec<Project>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);

    let headers = rdr.headers().map_err(DataError::csv)?.clone();
    let index: HashMap<String, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim_start_matches('\u{feff}').to_lowercase(), i))
        .collect();
    for col in REQUIRED_COLUMNS {
        if !index.contains_key(col) {
            return Err(DataError::MissingColumn { column: col.to_string() });
        }
    }
    let col = |name: &str| index[name];
    let votes_col = index.get(VOTES_COLUMN).copied();

    let mut projects = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(DataError::csv)?;
        let field = |name: &str| record.get(col(name)).unwrap_or("").to_string();

        let cost_text = field("cost");
        let cost: Money = cost_text.parse().map_err(|_| DataError::Row {
            row,
            column: "cost".into(),
            message: format!("cannot parse {cost_text:?} as an amount"),
        })?;
        let votes = match votes_col.map(|c| record.get(c).unwrap_or("")) {
            None | Some("") => None,
            Some(text) => Some(text.parse::<u64>().map_err(|_| DataError::Row {
                row,
                column: VOTES_COLUMN.into(),
                message: format!("cannot parse {text:?} as a non-negative integer"),
            })?),
        };

        let id = field("id");
        if let Some(first) = seen.insert(id.clone(), row) {
            return Err(DataError::DuplicateId { id, rows: vec![first, row] });
        }
        projects.push(Project {
            id,
            title: field("title"),
            description: field("description"),
            category: field("category"),
            cost,
            district: field("district"),
            votes,
        });
    }
    if projects.is_empty() {
        return Err(DataError::Empty);
    }
    Ok(projects)
}

/// Writes `projects.csv` and `meta.json` into `dir` (created if missing).
pub fn write_campaign(campaign: &Campaign, dir: &Path) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let csv_path = dir.join(PROJECTS_FILE);
    let file = fs::File::create(&csv_path).map_err(|e| DataError::io(&csv_path, e))?;
    write_projects(&campaign.projects, file)?;
    let meta_path = dir.join(META_FILE);
    let json = serde_json::to_string_pretty(&campaign.meta).expect("metadata serializes");
    fs::write(&meta_path, json + "\n").map_err(|e| DataError::io(&meta_path, e))
}

pub fn write_projects<W: std::io::Write>(projects: &[Project], writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REQUIRED_COLUMNS.iter().chain(std::iter::once(&VOTES_COLUMN)))
        .map_err(DataError::csv)?;
    for p in projects {
        let cost = p.cost.to_string();
        let votes = p.votes.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([
            p.id.as_str(),
            &p.title,
            &p.description,
            &p.category,
            &cost,
            &p.district,
            &votes,
        ])
        .map_err(DataError::csv)?;
    }
    w.flush().map_err(|e| DataError::io(Path::new("<csv>"), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::campaign::tests::{meta, project};
    use proptest::prelude::*;

    const SAMPLE: &str = "\
votes,district,id,title,description,category,cost
 100 , Centre ,a, Bench , New benches in the park ,Parks,1200
50,Nord,b,Pool,Open the pool in summer,Sport,25000.50
";

    #[test]
    fn column_order_insensitive_and_trimmed() {
        let projects = read_projects(SAMPLE.as_bytes()).unwrap();
        assert_eq!(projects.len(), 2);
        assert_eq!(projects[0].title, "Bench");
        assert_eq!(projects[0].description, "New benches in the park");
        assert_eq!(projects[0].votes, Some(100));
        assert_eq!(projects[1].cost, Money::from_minor(2_500_050));
    }

    #[test]
    fn missing_column_is_named() {
        let err = read_projects("id,title,description,cost,district\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::MissingColumn { ref column } if column == "category"));
        assert!(err.to_string().contains("category"));
    }

    #[test]
    fn bad_cost_reports_row() {
        let text = "id,title,description,category,cost,district\na,t,d,c,10,x\nb,t,d,c,ten,x\n";
        match read_projects(text.as_bytes()).unwrap_err() {
            DataError::Row { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "cost");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_votes_reports_row() {
        let text = "id,title,description,category,cost,district,votes\na,t,d,c,10,x,-4\n";
        assert!(matches!(
            read_projects(text.as_bytes()).unwrap_err(),
            DataError::Row { row: 1, ref column, .. } if column == "votes"
        ));
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let text = "id,title,description,category,cost,district\na,t,d,c,10,x\na,t,d,c,10,x\n";
        assert!(matches!(
            read_projects(text.as_bytes()).unwrap_err(),
            DataError::DuplicateId { ref id, ref rows } if id == "a" && rows == &vec![1, 2]
        ));
    }

    #[test]
    fn empty_table_is_an_error() {
        let text = "id,title,description,category,cost,district,votes\n";
        assert!(matches!(read_projects(text.as_bytes()).unwrap_err(), DataError::Empty));
    }

    #[test]
    fn missing_votes_column_means_drafts() {
        let text = "id,title,description,category,cost,district\na,t,d,c,10,x\n";
        assert_eq!(read_projects(text.as_bytes()).unwrap()[0].votes, None);
    }

    #[test]
    fn load_validates_invariants() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = meta();
        m.total_votes = 999;
        let c = Campaign { meta: m, projects: vec![project("a", 10, Some(5))] };
        write_campaign(&c, dir.path()).unwrap();
        assert!(matches!(load_campaign_dir(dir.path()).unwrap_err(), DataError::Invalid(_)));
    }

    fn arb_text() -> impl Strategy<Value = String> {
        // Leading/trailing whitespace is trimmed on load, so generate trimmed text.
        "[A-Za-zÀ-ÿ0-9,;\"' ]{0,30}[A-Za-z]".prop_map(|s| s.trim().to_string())
    }

    proptest! {
        #[test]
        fn write_then_load_is_identity(
            rows in prop::collection::vec((arb_text(), arb_text(), 1i64..10_000_000, 0u64..50), 1..12)
        ) {
            let projects: Vec<Project> = rows
                .into_iter()
                .enumerate()
                .map(|(i, (title, description, cost, votes))| Project {
                    id: format!("p{i}"),
                    title,
                    description,
                    category: "Cat".into(),
                    cost: Money::from_minor(cost),
                    district: "D".into(),
                    votes: Some(votes),
                })
                .collect();
            let mut m = meta();
            m.voters = 1000;
            m.total_votes = projects.iter().filter_map(|p| p.votes).sum();
            let c = Campaign { meta: m, projects };
            let dir = tempfile::tempdir().unwrap();
            write_campaign(&c, dir.path()).unwrap();
            prop_assert_eq!(load_campaign_dir(dir.path()).unwrap(), c);
        }
    }
}
