use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use super::{AuxQMatrix, Dataset, Interaction, QMatrix, StudentSequence};
use crate::error::{Error, Result};

/// Column mapping for an interaction log. The defaults match the native
/// header `student_id,exercise_id,kc_ids,correct,order_index`; other corpora
/// are ingested by renaming columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvFormat {
    pub student_col: String,
    pub exercise_col: String,
    pub kc_col: String,
    pub correct_col: String,
    pub order_col: String,
    pub kc_delimiter: char,
    /// When set, KC ids must be below this bound.
    pub kc_universe: Option<u64>,
}

impl Default for CsvFormat {
    fn default() -> Self {
        CsvFormat {
            student_col: "student_id".into(),
            exercise_col: "exercise_id".into(),
            kc_col: "kc_ids".into(),
            correct_col: "correct".into(),
            order_col: "order_index".into(),
            kc_delimiter: ';',
            kc_universe: None,
        }
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_kcs(field: &str, delim: char) -> std::result::Result<Vec<u64>, String> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(delim)
        .map(|t| {
            t.trim()
                .parse::<u64>()
                .map_err(|_| format!("KC id {t:?} is not a non-negative integer"))
        })
        .collect()
}

struct Indexer {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Indexer {
    fn new() -> Self {
        Indexer {
            names: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn get(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }
}

/// Reads an interaction log. Students and exercises are numbered in order of
/// first appearance, KCs in ascending numeric order. Rows may appear in any
/// order; each student's history is sorted by `order_index`.
pub fn load_csv(path: impl AsRef<Path>, format: &CsvFormat) -> Result<Dataset> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, 1, e.to_string()))?;
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(parse_err(path, 1, "empty file"));
    }
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(path, 1, format!("missing column {name:?}")))
    };
    let (cs, ce, ck, cy, co) = (
        col(&format.student_col)?,
        col(&format.exercise_col)?,
        col(&format.kc_col)?,
        col(&format.correct_col)?,
        col(&format.order_col)?,
    );

    let mut students = Indexer::new();
    let mut exercises = Indexer::new();
    let mut raw_tags: Vec<BTreeSet<u64>> = Vec::new();
    // student → order → (exercise, correct, line)
    let mut rows: BTreeMap<usize, BTreeMap<u64, (usize, bool)>> = BTreeMap::new();
    let mut n_rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| {
            rec.get(i)
                .ok_or_else(|| parse_err(path, line, format!("missing field {}", i + 1)))
        };
        let student = field(cs)?;
        let exercise = field(ce)?;
        if student.is_empty() || exercise.is_empty() {
            return Err(parse_err(path, line, "empty student or exercise id"));
        }
        let kcs = parse_kcs(field(ck)?, format.kc_delimiter).map_err(|m| parse_err(path, line, m))?;
        if let Some(limit) = format.kc_universe {
            if let Some(bad) = kcs.iter().find(|&&k| k >= limit) {
                return Err(parse_err(path, line, format!("unknown KC id {bad} (universe has {limit})")));
            }
        }
        let correct = match field(cy)? {
            "1" => true,
            "0" => false,
            other => {
                return Err(parse_err(path, line, format!("correct must be 0 or 1, got {other:?}")))
            }
        };
        let order: u64 = field(co)?
            .parse()
            .map_err(|_| parse_err(path, line, "order_index must be a non-negative integer"))?;

        let s = students.get(student);
        let e = exercises.get(exercise);
        if e == raw_tags.len() {
            raw_tags.push(BTreeSet::new());
        }
        raw_tags[e].extend(kcs);
        // logs that list one row per KC repeat the interaction; those merge
        if let Some(prev) = rows.entry(s).or_default().insert(order, (e, correct)) {
            if prev == (e, correct) {
                continue;
            }
            return Err(parse_err(
                path,
                line,
                format!("duplicate order_index {order} for student {student:?}"),
            ));
        }
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(parse_err(path, 1, "empty file (no interaction rows)"));
    }

    let kc_ids: BTreeSet<u64> = raw_tags.iter().flatten().copied().collect();
    let kc_index: HashMap<u64, usize> = kc_ids.iter().enumerate().map(|(i, &k)| (k, i)).collect();
    let tags = raw_tags
        .iter()
        .map(|set| set.iter().map(|k| kc_index[k]).collect())
        .collect();
    let qmatrix = QMatrix::new(kc_ids.len(), tags)?;
    let sequences = rows
        .into_iter()
        .map(|(student, hist)| StudentSequence {
            student,
            interactions: hist
                .into_iter()
                .map(|(order, (exercise, correct))| Interaction {
                    exercise,
                    correct,
                    order,
                })
                .collect(),
        })
        .collect();
    Ok(Dataset {
        sequences,
        n_human_kcs: qmatrix.n_kcs(),
        qmatrix,
        aux: None,
        exercise_names: exercises.names,
        student_names: students.names,
        kc_names: kc_ids.iter().map(u64::to_string).collect(),
    })
}

fn join_kcs(kcs: &[usize], names: &[String]) -> String {
    kcs.iter()
        .map(|&k| names[k].as_str())
        .collect::<Vec<_>>()
        .join(";")
}

/// Writes the native interaction format with the original identifiers.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("student_id,exercise_id,kc_ids,correct,order_index\n");
    for seq in &dataset.sequences {
        for it in &seq.interactions {
            let kcs: Vec<usize> = dataset
                .qmatrix
                .kcs(it.exercise)?
                .iter()
                .copied()
                .filter(|&k| k < dataset.n_human_kcs)
                .collect();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                dataset.student_names[seq.student],
                dataset.exercise_names[it.exercise],
                join_kcs(&kcs, &dataset.kc_names),
                u8::from(it.correct),
                it.order
            ));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// `exercise_id,aux_kc_ids`, one row per exercise in index order.
pub fn write_aux_csv(
    aux: &AuxQMatrix,
    exercise_names: &[String],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("exercise_id,aux_kc_ids\n");
    for (e, name) in exercise_names.iter().enumerate() {
        let ids: Vec<String> = aux.kcs(e).iter().map(usize::to_string).collect();
        out.push_str(&format!("{name},{}\n", ids.join(";")));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads an auxiliary tag file against a dataset's exercise vocabulary.
/// Exercises absent from the file get an empty set; indices must be below
/// `n_aux` and sets no larger than `c_max`.
pub fn read_aux_csv(
    path: impl AsRef<Path>,
    dataset: &Dataset,
    n_aux: usize,
    c_max: usize,
) -> Result<AuxQMatrix> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, 1, e.to_string()))?;
    let headers = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["exercise_id", "aux_kc_ids"] {
        return Err(parse_err(path, 1, "expected header exercise_id,aux_kc_ids"));
    }
    let lookup: HashMap<&str, usize> = dataset
        .exercise_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut tags = vec![Vec::new(); dataset.n_exercises()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            parse_err(path, e.position().map_or(0, |p| p.line() as usize), e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let name = rec.get(0).unwrap_or("");
        let e = *lookup
            .get(name)
            .ok_or_else(|| parse_err(path, line, format!("unknown exercise {name:?}")))?;
        let ids = parse_kcs(rec.get(1).unwrap_or(""), ';').map_err(|m| parse_err(path, line, m))?;
        if let Some(bad) = ids.iter().find(|&&k| k as usize >= n_aux) {
            return Err(parse_err(path, line, format!("auxiliary KC {bad} out of range (M = {n_aux})")));
        }
        tags[e] = ids.into_iter().map(|k| k as usize).collect();
    }
    AuxQMatrix::new(n_aux, c_max, tags)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    const HEADER: &str = "student_id,exercise_id,kc_ids,correct,order_index\n";

    #[test]
    fn three_row_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", &format!("{HEADER}s1,q1,0;1,1,0\ns1,q2,1,0,1\ns1,q1,0;1,1,2\n"));
        let d = load_csv(&p, &CsvFormat::default()).unwrap();
        assert_eq!(d.n_kcs(), 2);
        assert_eq!(d.sequences.len(), 1);
        assert_eq!(d.sequences[0].len(), 3);
        assert_eq!(d.qmatrix.kcs(0).unwrap(), &[0, 1]);
        assert_eq!(d.qmatrix.kcs(1).unwrap(), &[1]);
    }

    #[test]
    fn bad_correct_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", &format!("{HEADER}s1,q1,0,1,0\ns1,q2,1,2,1\n"));
        let err = load_csv(&p, &CsvFormat::default()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn empty_file_and_unknown_kc() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "e.csv", "");
        assert!(load_csv(&p, &CsvFormat::default()).is_err());
        let p = write(&dir, "h.csv", HEADER);
        assert!(load_csv(&p, &CsvFormat::default()).is_err());
        let p = write(&dir, "k.csv", &format!("{HEADER}s1,q1,7,1,0\n"));
        let fmt = CsvFormat {
            kc_universe: Some(5),
            ..CsvFormat::default()
        };
        assert!(load_csv(&p, &fmt).is_err());
        let p = write(&dir, "x.csv", &format!("{HEADER}s1,q1,a,1,0\n"));
        assert!(load_csv(&p, &CsvFormat::default()).is_err());
    }

    #[test]
    fn duplicate_order_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", &format!("{HEADER}s1,q1,0,1,4\ns1,q2,0,1,4\n"));
        assert!(load_csv(&p, &CsvFormat::default()).is_err());
    }

    #[test]
    fn repeated_rows_merge_their_kcs() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", &format!("{HEADER}s1,q1,0,1,4\ns1,q1,2,1,4\ns1,q2,1,0,5\n"));
        let d = load_csv(&p, &CsvFormat::default()).unwrap();
        assert_eq!(d.sequences[0].len(), 2);
        assert_eq!(d.qmatrix.kcs(0).unwrap(), &[0, 2]);
    }

    #[test]
    fn renamed_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "a.csv",
            "user,problem,skills,ok,t\nu,p,3|4,1,0\nu,p,3|4,0,1\n",
        );
        let fmt = CsvFormat {
            student_col: "user".into(),
            exercise_col: "problem".into(),
            kc_col: "skills".into(),
            correct_col: "ok".into(),
            order_col: "t".into(),
            kc_delimiter: '|',
            kc_universe: None,
        };
        let d = load_csv(&p, &fmt).unwrap();
        assert_eq!(d.kc_names, vec!["3", "4"]);
    }

    #[test]
    fn export_import_preserves_quadruples() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{HEADER}b,q9,5,1,10\na,q1,0;5,0,3\nb,q1,0;5,0,2\na,q2,,1,7\n");
        let p = write(&dir, "a.csv", &body);
        let d = load_csv(&p, &CsvFormat::default()).unwrap();
        let out = dir.path().join("b.csv");
        write_csv(&d, &out).unwrap();
        let d2 = load_csv(&out, &CsvFormat::default()).unwrap();
        let quads = |d: &Dataset| {
            let mut v: Vec<(String, String, bool, u64)> = d
                .sequences
                .iter()
                .flat_map(|s| {
                    s.interactions.iter().map(move |i| {
                        (
                            d.student_names[s.student].clone(),
                            d.exercise_names[i.exercise].clone(),
                            i.correct,
                            i.order,
                        )
                    })
                })
                .collect();
            v.sort();
            v
        };
        assert_eq!(quads(&d), quads(&d2));
        assert_eq!(quads(&d).len(), 4);
    }

    #[test]
    fn aux_csv_round_trip_and_range_check() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", &format!("{HEADER}s,q1,0,1,0\ns,q2,0,1,1\ns,q3,0,0,2\n"));
        let d = load_csv(&p, &CsvFormat::default()).unwrap();
        let aux = AuxQMatrix::new(32, 4, vec![vec![0, 31], vec![], vec![2, 3, 4, 5]]).unwrap();
        let out = dir.path().join("aux.csv");
        write_aux_csv(&aux, &d.exercise_names, &out).unwrap();
        assert_eq!(read_aux_csv(&out, &d, 32, 4).unwrap(), aux);
        assert!(read_aux_csv(&out, &d, 16, 4).is_err());
    }
}
