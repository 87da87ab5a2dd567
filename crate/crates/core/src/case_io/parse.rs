use std::path::Path;

use super::{BranchRecord, BusRecord, CaseError, GenRecord, NetworkCase};

const BUS_COLS: usize = 13;
const GEN_COLS: usize = 10;
const BRANCH_COLS: usize = 11;

/// Reads and parses a MATPOWER `.m` file.
pub fn read_matpower_case(path: impl AsRef<Path>) -> Result<NetworkCase, CaseError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CaseError::Io(format!("{}: {e}", path.display())))?;
    let mut case = parse_matpower_case(&text)?;
    if case.name.is_empty() {
        case.name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    Ok(case)
}

/// Parses MATPOWER case text (`mpc.baseMVA`, `mpc.bus`, `mpc.gen`,
/// `mpc.branch`). Other assignments are skipped.
pub fn parse_matpower_case(text: &str) -> Result<NetworkCase, CaseError> {
    let mut scanner = Scanner::new(text);
    let mut name = String::new();
    let mut base_mva = None;
    let mut bus = None;
    let mut gen = None;
    let mut branch = None;

    loop {
        scanner.skip_separators();
        let Some(c) = scanner.peek() else { break };
        if !is_ident_start(c) {
            return Err(scanner.error(format!("unexpected character `{}`", c as char)));
        }
        let word = scanner.ident();
        if word == "function" {
            // `function mpc = case14`
            let line = scanner.rest_of_line();
            if let Some(n) = line.rsplit('=').next() {
                name = n.trim().trim_end_matches(';').to_string();
            }
            continue;
        }
        let Some(field) = word.strip_prefix("mpc.") else {
            log::debug!("skipping statement starting with `{word}`");
            scanner.rest_of_line();
            continue;
        };
        scanner.skip_blanks();
        if !scanner.eat(b'=') {
            return Err(scanner.error(format!("expected `=` after `{word}`")));
        }
        scanner.skip_blanks();
        let value = scanner.value()?;
        match (field, value) {
            ("baseMVA", Value::Number(v)) => base_mva = Some(v),
            ("bus", Value::Matrix(m)) => bus = Some(m),
            ("gen", Value::Matrix(m)) => gen = Some(m),
            ("branch", Value::Matrix(m)) => branch = Some(m),
            ("baseMVA" | "bus" | "gen" | "branch", _) => {
                return Err(scanner.error(format!("`mpc.{field}` has the wrong value kind")));
            }
            ("version", _) => {}
            (other, _) => log::info!("skipping unsupported field `mpc.{other}`"),
        }
    }

    let base_mva = base_mva.ok_or(CaseError::MissingMatrix("baseMVA"))?;
    let bus = bus.ok_or(CaseError::MissingMatrix("bus"))?;
    let gen = gen.ok_or(CaseError::MissingMatrix("gen"))?;
    let branch = branch.ok_or(CaseError::MissingMatrix("branch"))?;

    let buses = bus
        .iter()
        .enumerate()
        .map(|(i, row)| {
            check_width("bus", i, row, BUS_COLS)?;
            Ok(BusRecord {
                id: bus_id(row[0])?,
                matpower_type: row[1] as u8,
                pd: row[2],
                qd: row[3],
                gs: row[4],
                bs: row[5],
                vm: row[7],
                va: row[8],
                base_kv: row[9],
                vmax: row[11],
                vmin: row[12],
            })
        })
        .collect::<Result<Vec<_>, CaseError>>()?;
    let gens = gen
        .iter()
        .enumerate()
        .map(|(i, row)| {
            check_width("gen", i, row, GEN_COLS)?;
            Ok(GenRecord {
                bus: bus_id(row[0])?,
                pg: row[1],
                qg: row[2],
                qmax: row[3],
                qmin: row[4],
                vg: row[5],
                status: row[7] > 0.0,
                pmax: row[8],
                pmin: row[9],
            })
        })
        .collect::<Result<Vec<_>, CaseError>>()?;
    let branches = branch
        .iter()
        .enumerate()
        .map(|(i, row)| {
            check_width("branch", i, row, BRANCH_COLS)?;
            Ok(BranchRecord {
                from_bus: bus_id(row[0])?,
                to_bus: bus_id(row[1])?,
                r: row[2],
                x: row[3],
                b_charge: row[4],
                tap: if row[8] == 0.0 { 1.0 } else { row[8] },
                shift: row[9],
                status: row[10] != 0.0,
            })
        })
        .collect::<Result<Vec<_>, CaseError>>()?;

    NetworkCase::new(name, base_mva, buses, gens, branches)
}

fn check_width(matrix: &'static str, row: usize, values: &[f64], required: usize) -> Result<(), CaseError> {
    if values.len() < required {
        return Err(CaseError::ShortRow {
            matrix,
            row: row + 1,
            found: values.len(),
            required,
        });
    }
    Ok(())
}

fn bus_id(v: f64) -> Result<u32, CaseError> {
    if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as u32)
    } else {
        Err(CaseError::InvalidBusId(v))
    }
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_'
}

enum Value {
    Number(f64),
    Matrix(Vec<Vec<f64>>),
    Other,
}

struct Scanner<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    line_start: usize,
}

impl<'a> Scanner<'a> {
    fn new(text: &'a str) -> Self {
        Scanner {
            src: text.as_bytes(),
            pos: 0,
            line: 1,
            line_start: 0,
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.line_start = self.pos;
        }
        Some(c)
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn error(&self, message: String) -> CaseError {
        CaseError::Syntax {
            line: self.line,
            column: self.pos - self.line_start + 1,
            message,
        }
    }

    fn skip_comment(&mut self) {
        while let Some(c) = self.peek() {
            if c == b'\n' {
                break;
            }
            self.bump();
        }
    }

    /// Spaces and tabs only.
    fn skip_blanks(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\r')) {
            self.bump();
        }
    }

    /// Whitespace, comments and statement separators between assignments.
    fn skip_separators(&mut self) {
        while let Some(c) = self.peek() {
            match c {
                b' ' | b'\t' | b'\r' | b'\n' | b';' | b',' => {
                    self.bump();
                }
                b'%' | b'#' => self.skip_comment(),
                _ => break,
            }
        }
    }

    fn ident(&mut self) -> String {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_' || c == b'.') {
            self.bump();
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn rest_of_line(&mut self) -> String {
        let start = self.pos;
        self.skip_comment();
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn value(&mut self) -> Result<Value, CaseError> {
        match self.peek() {
            Some(b'[') => {
                self.bump();
                self.matrix().map(Value::Matrix)
            }
            Some(b'{') => {
                self.bump();
                self.skip_cell()?;
                Ok(Value::Other)
            }
            Some(q @ (b'\'' | b'"')) => {
                self.bump();
                self.skip_string(q)?;
                Ok(Value::Other)
            }
            Some(_) => self.number().map(Value::Number),
            None => Err(self.error("unexpected end of input".into())),
        }
    }

    fn number(&mut self) -> Result<f64, CaseError> {
        let (line, col) = (self.line, self.pos - self.line_start + 1);
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || matches!(c, b'.' | b'+' | b'-')) {
            self.bump();
        }
        let token = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        let parsed = match token {
            "Inf" | "inf" | "+Inf" => Some(f64::INFINITY),
            "-Inf" | "-inf" => Some(f64::NEG_INFINITY),
            "NaN" | "nan" => Some(f64::NAN),
            t => t.parse::<f64>().ok(),
        };
        parsed.ok_or_else(|| CaseError::Syntax {
            line,
            column: col,
            message: if token.is_empty() {
                format!("expected a number, found `{}`", self.peek().map(|c| c as char).unwrap_or(' '))
            } else {
                format!("invalid number `{token}`")
            },
        })
    }

    fn matrix(&mut self) -> Result<Vec<Vec<f64>>, CaseError> {
        let mut rows = Vec::new();
        let mut row = Vec::new();
        loop {
            match self.peek() {
                None => return Err(self.error("unterminated matrix".into())),
                Some(b' ' | b'\t' | b'\r' | b',') => {
                    self.bump();
                }
                Some(b'%' | b'#') => self.skip_comment(),
                Some(b'\n' | b';') => {
                    self.bump();
                    if !row.is_empty() {
                        rows.push(std::mem::take(&mut row));
                    }
                }
                Some(b']') => {
                    self.bump();
                    if !row.is_empty() {
                        rows.push(row);
                    }
                    return Ok(rows);
                }
                Some(b'.') if self.src[self.pos..].starts_with(b"...") => {
                    // line continuation
                    self.skip_comment();
                    self.bump();
                }
                Some(_) => row.push(self.number()?),
            }
        }
    }

    fn skip_string(&mut self, quote: u8) -> Result<(), CaseError> {
        loop {
            match self.bump() {
                Some(c) if c == quote => return Ok(()),
                Some(b'\n') | None => return Err(self.error("unterminated string".into())),
                Some(_) => {}
            }
        }
    }

    fn skip_cell(&mut self) -> Result<(), CaseError> {
        let mut depth = 1usize;
        while depth > 0 {
            match self.bump() {
                None => return Err(self.error("unterminated cell array".into())),
                Some(b'{') => depth += 1,
                Some(b'}') => depth -= 1,
                Some(q @ (b'\'' | b'"')) => self.skip_string(q)?,
                Some(b'%') => self.skip_comment(),
                Some(_) => {}
            }
        }
        Ok(())
    }
}
