use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SsmError};
use crate::synth::{NoiseSpec, SynthInstance};

/// Parses comma-separated numeric rows. A non-numeric first line is taken as
/// a header and skipped; blank lines are ignored.
pub fn parse_matrix_csv(text: &str, path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| SsmError::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(idx + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if rows.is_empty() && width.is_none() && line == 1 => {
                // header
                width = Some(record.len());
                continue;
            }
            Err(_) => {
                let (col, cell) = record
                    .iter()
                    .enumerate()
                    .find(|(_, c)| c.parse::<f64>().is_err())
                    .expect("some cell failed");
                return Err(SsmError::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("non-numeric cell {cell:?} in column {}", col + 1),
                });
            }
        };
        match width {
            Some(w) if w != values.len() => {
                return Err(SsmError::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("ragged row: {} cells, expected {w}", values.len()),
                })
            }
            _ => width = Some(values.len()),
        }
        rows.push(values);
    }
    let ncols = width.unwrap_or(0);
    if rows.is_empty() || ncols == 0 {
        return Err(SsmError::Format {
            path: path.to_path_buf(),
            msg: "no numeric rows".into(),
        });
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn load_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| SsmError::io(path, e))?;
    parse_matrix_csv(&text, path)
}

/// Writes one line per matrix row using shortest round-trip formatting.
pub fn write_matrix_csv(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| SsmError::io(path, e))
}

/// Binary greyscale PGM (`P5`, maxval ≤ 255), returned row-major and scaled
/// to `[0, 1]` along with `(width, height)`.
pub fn parse_pgm(bytes: &[u8], path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let bad = |msg: &str| SsmError::Format {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    let mut pos = 0;
    let next_token = |pos: &mut usize| -> Option<String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
            *pos += 1;
        }
        (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    if next_token(&mut pos).as_deref() != Some("P5") {
        return Err(bad("unsupported format (expected binary PGM, magic P5)"));
    }
    let mut header = [0usize; 3];
    for h in header.iter_mut() {
        *h = next_token(&mut pos)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("malformed PGM header"))?;
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 {
        return Err(bad("empty image"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(bad("unsupported maxval (expected 1..=255)"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let len = width * height;
    let raster = bytes
        .get(pos..pos + len)
        .ok_or_else(|| bad("truncated raster"))?;
    let scale = maxval as f64;
    Ok((raster.iter().map(|&b| b as f64 / scale).collect(), width, height))
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<(Vec<f64>, usize, usize)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| SsmError::io(path, e))?;
    parse_pgm(&bytes, path)
}

fn sorted_entries(dir: &Path, want_dirs: bool) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| SsmError::io(dir, e))? {
        let entry = entry.map_err(|e| SsmError::io(dir, e))?;
        let path = entry.path();
        if entry.file_name().to_string_lossy().starts_with('.') {
            continue;
        }
        if path.is_dir() == want_dirs {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// One matrix per class subdirectory (lexicographic order), one column per
/// image. Returns the matrices and the subdirectory names.
pub fn load_image_dir(root: impl AsRef<Path>) -> Result<(Vec<DMatrix<f64>>, Vec<String>)> {
    let root = root.as_ref();
    let mut classes = Vec::new();
    let mut names = Vec::new();
    let mut reference: Option<(PathBuf, usize, usize)> = None;
    for dir in sorted_entries(root, true)? {
        let files = sorted_entries(&dir, false)?;
        if files.is_empty() {
            return Err(SsmError::Format {
                path: dir,
                msg: "class directory has no images".into(),
            });
        }
        let mut columns = Vec::with_capacity(files.len());
        for file in files {
            let (pixels, w, h) = load_pgm(&file)?;
            match &reference {
                Some((first, rw, rh)) if (*rw, *rh) != (w, h) => {
                    return Err(SsmError::Format {
                        path: file.clone(),
                        msg: format!(
                            "image is {w}x{h} but {} is {rw}x{rh}",
                            first.display()
                        ),
                    })
                }
                Some(_) => {}
                None => reference = Some((file.clone(), w, h)),
            }
            columns.push(pixels);
        }
        let d = columns[0].len();
        classes.push(DMatrix::from_fn(d, columns.len(), |i, j| columns[j][i]));
        names.push(dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
    }
    if classes.is_empty() {
        return Err(SsmError::Format {
            path: root.to_path_buf(),
            msg: "no class subdirectories".into(),
        });
    }
    Ok((classes, names))
}

/// Sidecar describing a synthetic instance written by [`write_instance`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub layout: Vec<usize>,
    pub dim: usize,
    pub num_queries: usize,
    pub true_support: Vec<usize>,
    pub true_labels: Vec<usize>,
    pub noise: NoiseSpec,
    pub seed: u64,
}

/// Writes `dictionary.csv`, `queries.csv` and `truth.json` into `dir`.
pub fn write_instance(dir: impl AsRef<Path>, instance: &SynthInstance, seed: u64) -> Result<GroundTruth> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| SsmError::io(dir, e))?;
    write_matrix_csv(dir.join("dictionary.csv"), instance.dictionary.data())?;
    write_matrix_csv(dir.join("queries.csv"), &instance.queries)?;
    let truth = GroundTruth {
        layout: instance.dictionary.layout().sizes().to_vec(),
        dim: instance.dim(),
        num_queries: instance.queries.ncols(),
        true_support: instance.true_support.clone(),
        true_labels: instance.true_labels.clone(),
        noise: instance.noise.clone(),
        seed,
    };
    let path = dir.join("truth.json");
    fs::write(&path, serde_json::to_string_pretty(&truth)?).map_err(|e| SsmError::io(&path, e))?;
    Ok(truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("test.csv")
    }

    #[test]
    fn csv_basic() {
        let m = parse_matrix_csv("1,2\n3,4", p()).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    }

    #[test]
    fn csv_header() {
        let m = parse_matrix_csv("a,b\n1,2\n", p()).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(1, 2, &[1.0, 2.0]));
    }

    #[test]
    fn csv_ragged() {
        match parse_matrix_csv("1,2\n3", p()) {
            Err(SsmError::Parse { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("ragged"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_non_numeric_reports_line() {
        match parse_matrix_csv("1,2\n3,x\n", p()) {
            Err(SsmError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_matrix_csv("", p()).is_err());
        assert!(parse_matrix_csv("a,b\n", p()).is_err());
    }

    #[test]
    fn csv_write_read_exact() {
        let dir = tempfile::tempdir().unwrap();
        let m = DMatrix::from_fn(3, 2, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0));
        let path = dir.path().join("m.csv");
        write_matrix_csv(&path, &m).unwrap();
        assert_eq!(load_matrix_csv(&path).unwrap(), m);
    }

    fn pgm(w: usize, h: usize, px: &[u8]) -> Vec<u8> {
        let mut b = format!("P5\n# comment\n{w} {h}\n255\n").into_bytes();
        b.extend_from_slice(px);
        b
    }

    #[test]
    fn pgm_2x2() {
        let (v, w, h) = parse_pgm(&pgm(2, 2, &[0, 255, 255, 0]), p()).unwrap();
        assert_eq!((w, h), (2, 2));
        assert_eq!(v, vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn pgm_rejects() {
        assert!(parse_pgm(b"P2\n2 2\n255\n0 1 2 3", p()).is_err());
        assert!(parse_pgm(&pgm(2, 2, &[0, 1, 2]), p()).is_err());
        assert!(parse_pgm(b"P5\n2 2\n65535\n", p()).is_err());
    }

    #[test]
    fn image_dir_layout() {
        let dir = tempfile::tempdir().unwrap();
        for (c, n) in [("b_class", 2), ("a_class", 3)] {
            let sub = dir.path().join(c);
            fs::create_dir(&sub).unwrap();
            for i in 0..n {
                fs::write(sub.join(format!("{i}.pgm")), pgm(3, 2, &[i as u8; 6])).unwrap();
            }
        }
        let (classes, names) = load_image_dir(dir.path()).unwrap();
        assert_eq!(names, vec!["a_class", "b_class"]);
        assert_eq!(classes[0].shape(), (6, 3));
        assert_eq!(classes[1].shape(), (6, 2));
        assert_eq!(classes[0][(0, 2)], 2.0 / 255.0);
    }

    #[test]
    fn image_dir_size_mismatch_names_both() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("c");
        fs::create_dir(&sub).unwrap();
        fs::write(sub.join("0.pgm"), pgm(2, 2, &[0; 4])).unwrap();
        fs::write(sub.join("1.pgm"), pgm(3, 2, &[0; 6])).unwrap();
        let msg = load_image_dir(dir.path()).unwrap_err().to_string();
        assert!(msg.contains("0.pgm") && msg.contains("1.pgm"), "{msg}");
    }
}
