use std::collections::BTreeMap;
use std::fmt;

use super::{CircuitSpec, DetectorDecl, HeraldDecl, SourceDecl, Statement, MAX_MODES};
use crate::fock::Pol;
use crate::sources::{PairState, MAX_PAIRS};

/// First problem found in a `.qc` text. `line` and `column` are 1-based
/// and count characters, not bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub token: String,
    pub message: String,
    pub suggestion: Option<String>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)?;
        if !self.token.is_empty() {
            write!(f, " (at `{}`)", self.token)?;
        }
        if let Some(s) = &self.suggestion {
            write!(f, "; {s}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseError {}

#[derive(Clone, Debug, PartialEq)]
enum Kind {
    Word,
    Eq,
    Open,
    Close,
    Comma,
}

#[derive(Clone, Debug)]
struct Token {
    kind: Kind,
    text: String,
    column: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '+' | '-')
}

fn tokenize(line: &str, line_no: usize) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let single = match c {
            '=' => Some(Kind::Eq),
            '(' => Some(Kind::Open),
            ')' => Some(Kind::Close),
            ',' => Some(Kind::Comma),
            _ => None,
        };
        if let Some(kind) = single {
            out.push(Token { kind, text: c.to_string(), column });
            i += 1;
            continue;
        }
        if is_word_char(c) {
            let start = i;
            while i < chars.len() && is_word_char(chars[i]) {
                i += 1;
            }
            out.push(Token {
                kind: Kind::Word,
                text: chars[start..i].iter().collect(),
                column,
            });
            continue;
        }
        return Err(ParseError {
            line: line_no,
            column,
            token: c.to_string(),
            message: format!("unexpected character {c:?}"),
            suggestion: None,
        });
    }
    Ok(out)
}

const KEYWORDS: [&str; 12] = [
    "modes", "truncation", "source", "hwp", "qwp", "phase", "pbs", "cpbs", "loss", "overlap",
    "detector", "herald",
];

fn edit_distance(a: &str, b: &str) -> usize {
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.chars().enumerate() {
        let mut cur = vec![i + 1];
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != *cb);
            cur.push(sub.min(prev[j + 1] + 1).min(cur[j] + 1));
        }
        prev = cur;
    }
    prev[b.len()]
}

fn closest<'a>(word: &str, options: &[&'a str]) -> Option<&'a str> {
    let lower = word.to_ascii_lowercase();
    options
        .iter()
        .map(|o| (edit_distance(&lower, o), *o))
        .filter(|(d, o)| *d <= 2.max(o.len() / 3))
        .min_by_key(|(d, _)| *d)
        .map(|(_, o)| o)
}

struct Line<'a> {
    no: usize,
    tokens: &'a [Token],
    pos: usize,
}

impl<'a> Line<'a> {
    fn err(&self, tok: &Token, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.no,
            column: tok.column,
            token: tok.text.clone(),
            message: message.into(),
            suggestion: None,
        }
    }

    fn keyword(&self) -> &'a Token {
        &self.tokens[0]
    }

    /// Error for a missing argument, reported at the statement keyword.
    fn missing(&self, what: &str) -> ParseError {
        let kw = self.keyword();
        let mut e = self.err(kw, format!("`{}` is missing {what}", kw.text));
        e.suggestion = Some(format!("expected: {}", usage(&kw.text)));
        e
    }

    fn next(&mut self) -> Option<&'a Token> {
        let t = self.tokens.get(self.pos);
        self.pos += 1;
        t
    }

    fn word(&mut self, what: &str) -> Result<&'a Token, ParseError> {
        match self.next() {
            Some(t) if t.kind == Kind::Word => Ok(t),
            Some(t) => Err(self.err(t, format!("expected {what}"))),
            None => Err(self.missing(what)),
        }
    }

    fn mode(&mut self) -> Result<u32, ParseError> {
        let t = self.word("a spatial mode number")?;
        parse_mode(self, t)
    }

    fn end(&mut self) -> Result<(), ParseError> {
        match self.next() {
            None => Ok(()),
            Some(t) => {
                let mut e = self.err(t, "unexpected trailing input");
                e.suggestion = Some(format!("expected: {}", usage(&self.keyword().text)));
                Err(e)
            }
        }
    }

    /// Remaining `key=value` pairs; keys must come from `allowed`.
    fn options(&mut self, allowed: &[&str]) -> Result<BTreeMap<String, &'a Token>, ParseError> {
        let mut out = BTreeMap::new();
        while let Some(key) = self.next() {
            if key.kind != Kind::Word {
                return Err(self.err(key, "expected a key=value option"));
            }
            if !allowed.contains(&key.text.as_str()) {
                let mut e = self.err(
                    key,
                    format!("unknown key `{}` for `{}`", key.text, self.keyword().text),
                );
                e.suggestion = Some(match closest(&key.text, allowed) {
                    Some(s) => format!("did you mean `{s}`?"),
                    None => format!("allowed keys: {}", allowed.join(", ")),
                });
                return Err(e);
            }
            match self.next() {
                Some(t) if t.kind == Kind::Eq => {}
                Some(t) => return Err(self.err(t, format!("expected `=` after `{}`", key.text))),
                None => return Err(self.err(key, format!("`{}` has no value", key.text))),
            }
            let value = match self.next() {
                Some(t) if t.kind == Kind::Word => t,
                Some(t) => return Err(self.err(t, format!("expected a value for `{}`", key.text))),
                None => return Err(self.err(key, format!("`{}` has no value", key.text))),
            };
            if out.insert(key.text.clone(), value).is_some() {
                return Err(self.err(key, format!("key `{}` given twice", key.text)));
            }
        }
        Ok(out)
    }
}

fn usage(keyword: &str) -> &'static str {
    match keyword {
        "modes" => "modes N",
        "truncation" => "truncation K",
        "source" => "source a b epsilon=E [gamma=G] [state=phi+]",
        "hwp" => "hwp m angle=DEG",
        "qwp" => "qwp m angle=DEG",
        "phase" => "phase m pol=H|V phi=RAD",
        "pbs" => "pbs a b",
        "cpbs" => "cpbs a b",
        "loss" => "loss m eta=X",
        "overlap" => "overlap m v=X",
        "detector" => "detector m eff=X [dark=Y] [pol=H|V]",
        "herald" => "herald name = clicks(d1,d2,...)",
        _ => "a statement",
    }
}

fn parse_mode(line: &Line, t: &Token) -> Result<u32, ParseError> {
    match t.text.parse::<u32>() {
        Ok(0) => Err(line.err(t, "spatial modes are numbered from 1")),
        Ok(n) => Ok(n),
        Err(_) => Err(line.err(t, "expected a positive integer mode number")),
    }
}

fn number(line: &Line, t: &Token) -> Result<f64, ParseError> {
    let ok = t
        .text
        .chars()
        .all(|c| c.is_ascii_digit() || matches!(c, '.' | '+' | '-' | 'e' | 'E'));
    match t.text.parse::<f64>() {
        Ok(v) if ok && v.is_finite() => Ok(v),
        _ => Err(line.err(t, format!("`{}` is not a number", t.text))),
    }
}

fn ranged(line: &Line, t: &Token, key: &str, lo: f64, hi: f64, open_lo: bool) -> Result<f64, ParseError> {
    let v = number(line, t)?;
    let below = if open_lo { v <= lo } else { v < lo };
    if below || v > hi {
        let lb = if open_lo { "(" } else { "[" };
        return Err(line.err(t, format!("{key}={v} is outside {lb}{lo}, {hi}]")));
    }
    Ok(v)
}

fn required<'a>(
    line: &Line,
    opts: &BTreeMap<String, &'a Token>,
    key: &str,
) -> Result<&'a Token, ParseError> {
    opts.get(key)
        .copied()
        .ok_or_else(|| line.missing(&format!("`{key}=`")))
}

fn pol(line: &Line, t: &Token) -> Result<Pol, ParseError> {
    match t.text.as_str() {
        "H" => Ok(Pol::H),
        "V" => Ok(Pol::V),
        _ => {
            let mut e = line.err(t, format!("polarization must be H or V, got `{}`", t.text));
            if t.text.eq_ignore_ascii_case("h") || t.text.eq_ignore_ascii_case("v") {
                e.suggestion = Some(format!("use `{}`", t.text.to_ascii_uppercase()));
            }
            Err(e)
        }
    }
}

fn statement(line: &mut Line) -> Result<StatementOrHeader, ParseError> {
    let kw = line.keyword();
    if kw.kind != Kind::Word {
        return Err(line.err(kw, "expected a statement keyword"));
    }
    line.pos = 1;
    let st = match kw.text.as_str() {
        "modes" => {
            let t = line.word("a mode count")?;
            let n = match t.text.parse::<u32>() {
                Ok(n) if (1..=MAX_MODES).contains(&n) => n,
                _ => {
                    return Err(line.err(
                        t,
                        format!("mode count must be an integer in [1, {MAX_MODES}]"),
                    ))
                }
            };
            line.end()?;
            return Ok(StatementOrHeader::Modes(n, kw.clone()));
        }
        "truncation" => {
            let t = line.word("a pair truncation")?;
            let n = match t.text.parse::<u8>() {
                Ok(n) if (1..=MAX_PAIRS).contains(&n) => n,
                _ => {
                    return Err(line.err(
                        t,
                        format!("truncation must be an integer in [1, {MAX_PAIRS}]"),
                    ))
                }
            };
            line.end()?;
            return Ok(StatementOrHeader::Truncation(n, kw.clone()));
        }
        "source" => {
            let a = line.mode()?;
            let b = line.mode()?;
            let o = line.options(&["epsilon", "gamma", "state"])?;
            let epsilon = ranged(line, required(line, &o, "epsilon")?, "epsilon", 0.0, 0.25, true)?;
            if epsilon >= 0.25 {
                let t = o["epsilon"];
                return Err(line.err(t, format!("epsilon={epsilon} is outside (0, 0.25)")));
            }
            let gamma = match o.get("gamma") {
                Some(t) => Some(ranged(line, t, "gamma", 0.0, 1.0, false)?),
                None => None,
            };
            let state = match o.get("state") {
                Some(t) => Some(PairState::from_label(&t.text).ok_or_else(|| {
                    let mut e = line.err(t, format!("unknown pair state `{}`", t.text));
                    e.suggestion = Some("one of phi+, phi-, psi+, psi-".into());
                    e
                })?),
                None => None,
            };
            Statement::Source(SourceDecl { a, b, epsilon, gamma, state })
        }
        "hwp" | "qwp" => {
            let mode = line.mode()?;
            let o = line.options(&["angle"])?;
            let angle_deg = number(line, required(line, &o, "angle")?)?;
            if kw.text == "hwp" {
                Statement::Hwp { mode, angle_deg }
            } else {
                Statement::Qwp { mode, angle_deg }
            }
        }
        "phase" => {
            let mode = line.mode()?;
            let o = line.options(&["phi", "pol"])?;
            let p = pol(line, required(line, &o, "pol")?)?;
            let phi = number(line, required(line, &o, "phi")?)?;
            Statement::Phase { mode, pol: p, phi }
        }
        "pbs" | "cpbs" => {
            let a = line.mode()?;
            let b = line.mode()?;
            line.end()?;
            if kw.text == "pbs" {
                Statement::Pbs { a, b }
            } else {
                Statement::Cpbs { a, b }
            }
        }
        "loss" => {
            let mode = line.mode()?;
            let o = line.options(&["eta"])?;
            let eta = ranged(line, required(line, &o, "eta")?, "eta", 0.0, 1.0, false)?;
            Statement::Loss { mode, eta }
        }
        "overlap" => {
            let mode = line.mode()?;
            let o = line.options(&["v"])?;
            let v = ranged(line, required(line, &o, "v")?, "v", 0.0, 1.0, false)?;
            Statement::Overlap { mode, v }
        }
        "detector" => {
            let mode = line.mode()?;
            let o = line.options(&["dark", "eff", "pol"])?;
            let eff = ranged(line, required(line, &o, "eff")?, "eff", 0.0, 1.0, false)?;
            let dark = match o.get("dark") {
                Some(t) => Some(ranged(line, t, "dark", 0.0, 1.0, false)?),
                None => None,
            };
            let p = match o.get("pol") {
                Some(t) => Some(pol(line, t)?),
                None => None,
            };
            Statement::Detector(DetectorDecl { mode, pol: p, eff, dark })
        }
        "herald" => {
            let name = line.word("a herald name")?;
            match line.next() {
                Some(t) if t.kind == Kind::Eq => {}
                Some(t) => return Err(line.err(t, "expected `=` after the herald name")),
                None => return Err(line.missing("`= clicks(...)`")),
            }
            let f = line.word("`clicks(...)`")?;
            if f.text != "clicks" {
                let mut e = line.err(f, format!("expected `clicks`, got `{}`", f.text));
                e.suggestion = Some("herald name = clicks(d1,d2,...)".into());
                return Err(e);
            }
            match line.next() {
                Some(t) if t.kind == Kind::Open => {}
                Some(t) => return Err(line.err(t, "expected `(`")),
                None => return Err(line.err(f, "expected `(` after `clicks`")),
            }
            let mut clicks = Vec::new();
            loop {
                let t = match line.next() {
                    Some(t) => t,
                    None => return Err(line.err(f, "unclosed `clicks(`")),
                };
                match t.kind {
                    Kind::Word => clicks.push(t.text.clone()),
                    Kind::Close if clicks.is_empty() => {
                        return Err(line.err(t, "a herald needs at least one detector"))
                    }
                    _ => return Err(line.err(t, "expected a detector label")),
                }
                match line.next() {
                    Some(t) if t.kind == Kind::Comma => {}
                    Some(t) if t.kind == Kind::Close => break,
                    Some(t) => return Err(line.err(t, "expected `,` or `)`")),
                    None => return Err(line.err(f, "unclosed `clicks(`")),
                }
            }
            line.end()?;
            Statement::Herald(HeraldDecl { name: name.text.clone(), clicks })
        }
        other => {
            let mut e = line.err(kw, format!("unknown statement `{other}`"));
            e.suggestion = closest(other, &KEYWORDS).map(|s| format!("did you mean `{s}`?"));
            return Err(e);
        }
    };
    Ok(StatementOrHeader::Statement(st))
}

enum StatementOrHeader {
    Modes(u32, Token),
    Truncation(u8, Token),
    Statement(Statement),
}

/// Parses a complete `.qc` text. Returns the first error; never a partial
/// spec.
pub fn parse(text: &str) -> Result<CircuitSpec, ParseError> {
    let mut spec = CircuitSpec::default();
    for (i, raw) in text.split('\n').enumerate() {
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        let tokens = tokenize(raw, i + 1)?;
        if tokens.is_empty() {
            continue;
        }
        let mut line = Line { no: i + 1, tokens: &tokens, pos: 0 };
        match statement(&mut line)? {
            StatementOrHeader::Modes(n, kw) => {
                if spec.modes.is_some() {
                    return Err(line.err(&kw, "`modes` declared twice"));
                }
                spec.modes = Some(n);
            }
            StatementOrHeader::Truncation(n, kw) => {
                if spec.truncation.is_some() {
                    return Err(line.err(&kw, "`truncation` declared twice"));
                }
                spec.truncation = Some(n);
            }
            StatementOrHeader::Statement(s) => {
                line.end()?;
                spec.statements.push(s);
            }
        }
    }
    Ok(spec)
}
