//! Golden sequence corpora under `tests/corpus` plus the built-in templates.

use std::fs;
use std::path::{Path, PathBuf};
use vsi_core::seq::{compile, compile_source, parse, serialize, ErrorKind, SequenceSource};

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).filter(|p| p.extension().is_some_and(|e| e == "seq")).collect();
    v.sort();
    v
}

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn valid_files() -> Vec<PathBuf> {
    let mut paths = files(&root().join("tests/corpus/valid"));
    paths.extend(files(&root().join("templates")));
    paths
}

pub fn invalid_files() -> Vec<PathBuf> {
    files(&root().join("tests/corpus/invalid"))
}

/// Parses, compiles and round-trips one valid file.
pub fn check_valid(path: &Path) -> Result<(), String> {
    let src = SequenceSource::read(path).map_err(|e| e.to_string())?;
    let ast = parse(&src).map_err(|e| e.to_string())?;
    let family = compile(&ast).map_err(|e| format!("{}: {e}", path.display()))?;
    let text = serialize(&ast);
    let again = parse(&SequenceSource::new(text.clone(), "canonical")).map_err(|e| format!("{}:\n{text}\n{e}", path.display()))?;
    if again != ast || serialize(&again) != text {
        return Err(format!("{}: canonical text does not round-trip", path.display()));
    }
    if compile(&again).map_err(|e| e.to_string())? != family {
        return Err(format!("{}: recompiled family differs", path.display()));
    }
    Ok(())
}

pub struct Expect {
    pub kind: ErrorKind,
    pub line: u32,
    pub col: u32,
    pub grid: Option<usize>,
}

/// Reads the `# expect: kind line:col [grid i]` first line.
pub fn expectation(text: &str) -> Expect {
    let spec = text.lines().next().and_then(|l| l.strip_prefix("# expect: ")).expect("first line is '# expect: kind line:col'");
    let parts: Vec<&str> = spec.split_whitespace().collect();
    let kind = ErrorKind::parse(parts[0]).unwrap_or_else(|| panic!("unknown kind {}", parts[0]));
    let (line, col) = parts[1].split_once(':').unwrap();
    let grid = match parts.get(2..) {
        Some(["grid", i]) => Some(i.parse().unwrap()),
        _ => None,
    };
    Expect { kind, line: line.parse().unwrap(), col: col.parse().unwrap(), grid }
}

/// Checks that an invalid file fails with its designated kind and position;
/// returns the kind.
pub fn check_invalid(path: &Path) -> Result<ErrorKind, String> {
    let src = SequenceSource::read(path).map_err(|e| e.to_string())?;
    let want = expectation(&src.text);
    match compile_source(&src) {
        Ok(_) => Err(format!("{}: accepted", path.display())),
        Err(e) => {
            if (e.kind, e.line, e.col, e.grid_index) != (want.kind, want.line, want.col, want.grid) {
                return Err(format!("{}: got {} {}:{} grid {:?}\n{e}", path.display(), e.kind, e.line, e.col, e.grid_index));
            }
            let shown = e.to_string();
            if !(shown.contains(&format!(":{}:{}: ", e.line, e.col)) && shown.ends_with('^')) {
                return Err(format!("{}: diagnostic lacks position or caret:\n{shown}", path.display()));
            }
            Ok(e.kind)
        }
    }
}
