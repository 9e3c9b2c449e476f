//! CPLEX-style LP text format.
//!
//! Section order is fixed: a `\` comment header, `Minimize` (feasibility
//! models write `obj: 0`), `Subject To` (one constraint per line, constant
//! folded into the right-hand side), `Bounds` (every continuous variable gets
//! an explicit line, `free` for unbounded ones), `Binaries` (space separated,
//! wrapped at eight names per line), then `End`. Numbers use Rust's shortest
//! round-trip `f64` formatting so the text is lossless.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use super::model::{LinExpr, MilpError, MilpModel, ObjectiveSense, Sense, VarId, VarKind};

const NAME_SPECIALS: &str = "!\"#$%&()/,.;?@_`'{}|~";
const RESERVED: [&str; 8] = ["free", "inf", "infinity", "st", "bounds", "binaries", "end", "minimize"];

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    let Some(first) = chars.next() else { return false };
    if name.len() > 255 || first.is_ascii_digit() || first == '.' {
        return false;
    }
    if RESERVED.contains(&name.to_ascii_lowercase().as_str()) {
        return false;
    }
    name.chars().all(|c| c.is_ascii_alphanumeric() || NAME_SPECIALS.contains(c))
}

fn unique_names<'a>(raw: impl Iterator<Item = &'a str>, prefix: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    raw.enumerate()
        .map(|(i, n)| {
            let name = if valid_name(n) && !seen.contains(n) { n.to_string() } else { format!("{prefix}{i}") };
            let name = if seen.contains(&name) { format!("{prefix}{i}_") } else { name };
            seen.insert(name.clone());
            name
        })
        .collect()
}

fn write_terms(out: &mut String, terms: &[(VarId, f64)], names: &[String]) {
    for (k, (v, c)) in terms.iter().enumerate() {
        let sign = if *c < 0.0 { "-" } else { "+" };
        let mag = c.abs();
        if k == 0 && sign == "+" {
            out.push(' ');
        } else {
            let _ = write!(out, " {sign} ");
        }
        if mag == 1.0 {
            out.push_str(&names[v.index()]);
        } else {
            let _ = write!(out, "{mag} {}", names[v.index()]);
        }
    }
}

/// Renders the model in LP format.
pub fn write_lp(model: &MilpModel) -> String {
    let names = unique_names(model.vars().iter().map(|v| v.name.as_str()), "x");
    let cnames = unique_names(model.constraints().iter().map(|c| c.name.as_str()), "c");
    let mut out = String::new();
    let _ = writeln!(out, "\\ Model: {}", model.name.replace('\n', " "));
    out.push_str("Minimize\n obj:");
    match model.sense() {
        ObjectiveSense::Feasibility => out.push_str(" 0"),
        ObjectiveSense::Minimize => {
            let obj = model.objective();
            if obj.is_empty() {
                let _ = write!(out, " {}", model.objective_constant());
            } else {
                write_terms(&mut out, obj, &names);
                let k = model.objective_constant();
                if k != 0.0 {
                    let _ = write!(out, " {} {}", if k < 0.0 { "-" } else { "+" }, k.abs());
                }
            }
        }
    }
    out.push('\n');
    out.push_str("Subject To\n");
    for (c, cname) in model.constraints().iter().zip(&cnames) {
        let _ = write!(out, " {cname}:");
        write_terms(&mut out, &c.terms, &names);
        let _ = writeln!(out, " {} {}", c.sense.symbol(), c.rhs);
    }
    out.push_str("Bounds\n");
    for (v, name) in model.vars().iter().zip(&names) {
        if v.kind == VarKind::Binary {
            continue;
        }
        let (lo, hi) = (v.lower, v.upper);
        let line = match (lo.is_finite(), hi.is_finite()) {
            (false, false) => format!(" {name} free"),
            (true, false) => format!(" {name} >= {lo}"),
            (false, true) => format!(" -inf <= {name} <= {hi}"),
            (true, true) if lo == hi => format!(" {name} = {lo}"),
            (true, true) => format!(" {lo} <= {name} <= {hi}"),
        };
        out.push_str(&line);
        out.push('\n');
    }
    let bins: Vec<&String> =
        model.vars().iter().zip(&names).filter(|(v, _)| v.kind == VarKind::Binary).map(|(_, n)| n).collect();
    if !bins.is_empty() {
        out.push_str("Binaries\n");
        for chunk in bins.chunks(8) {
            let line: Vec<&str> = chunk.iter().map(|s| s.as_str()).collect();
            let _ = writeln!(out, " {}", line.join(" "));
        }
    }
    out.push_str("End\n");
    out
}

#[derive(Clone, Copy, PartialEq, Debug)]
enum Section {
    Header,
    Objective,
    Constraints,
    Bounds,
    Binaries,
    End,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Plus,
    Minus,
    Colon,
    Cmp(Sense),
}

fn parse_number(s: &str) -> Option<f64> {
    match s.to_ascii_lowercase().as_str() {
        "inf" | "infinity" => Some(f64::INFINITY),
        _ => {
            let first = s.chars().next()?;
            if first.is_ascii_digit() || first == '.' {
                s.parse().ok()
            } else {
                None
            }
        }
    }
}

fn tokenize(line: &str, lineno: usize) -> Result<Vec<Tok>, MilpError> {
    let mut toks = Vec::new();
    let b: Vec<char> = line.chars().collect();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '+' {
            toks.push(Tok::Plus);
            i += 1;
        } else if c == '-' {
            toks.push(Tok::Minus);
            i += 1;
        } else if c == ':' {
            toks.push(Tok::Colon);
            i += 1;
        } else if c == '<' || c == '>' || c == '=' {
            let mut j = i + 1;
            while j < b.len() && matches!(b[j], '<' | '>' | '=') {
                j += 1;
            }
            let op: String = b[i..j].iter().collect();
            let sense = match op.as_str() {
                "<=" | "=<" | "<" => Sense::Le,
                ">=" | "=>" | ">" => Sense::Ge,
                "=" => Sense::Eq,
                _ => return Err(MilpError::Parse { line: lineno, msg: format!("bad operator `{op}`") }),
            };
            toks.push(Tok::Cmp(sense));
            i = j;
        } else {
            let mut j = i;
            while j < b.len() && !b[j].is_whitespace() && !matches!(b[j], '+' | '-' | ':' | '<' | '>' | '=') {
                // exponent sign inside a number, e.g. 1e-7
                j += 1;
                if j < b.len()
                    && matches!(b[j], '+' | '-')
                    && matches!(b[j - 1], 'e' | 'E')
                    && b[i].is_ascii_digit()
                {
                    j += 1;
                }
            }
            let word: String = b[i..j].iter().collect();
            match parse_number(&word) {
                Some(v) => toks.push(Tok::Num(v)),
                None => toks.push(Tok::Name(word)),
            }
            i = j;
        }
    }
    Ok(toks)
}

struct Reader {
    model: MilpModel,
    by_name: HashMap<String, VarId>,
    lower: HashMap<VarId, f64>,
}

impl Reader {
    fn var(&mut self, name: &str) -> VarId {
        if let Some(v) = self.by_name.get(name) {
            return *v;
        }
        // LP default bounds are [0, +inf)
        let v = self.model.add_continuous(name, 0.0, f64::INFINITY).expect("default bounds valid");
        self.by_name.insert(name.to_string(), v);
        v
    }

    /// Parses `[sign] [coef] name | [sign] number` terms.
    fn expr(&mut self, toks: &[Tok], line: usize) -> Result<LinExpr, MilpError> {
        let mut e = LinExpr::new();
        let mut sign = 1.0;
        let mut coef: Option<f64> = None;
        for t in toks {
            match t {
                Tok::Plus => {}
                Tok::Minus => sign = -sign,
                Tok::Num(v) => {
                    if let Some(c) = coef {
                        e.constant += sign * c;
                        sign = 1.0;
                    }
                    coef = Some(*v);
                }
                Tok::Name(n) => {
                    let v = self.var(n);
                    e.add_term(v, sign * coef.unwrap_or(1.0));
                    sign = 1.0;
                    coef = None;
                }
                other => return Err(MilpError::Parse { line, msg: format!("unexpected token {other:?}") }),
            }
        }
        if let Some(c) = coef {
            e.constant += sign * c;
        }
        Ok(e)
    }
}

fn strip_label(toks: &[Tok]) -> (Option<String>, &[Tok]) {
    match toks {
        [Tok::Name(n), Tok::Colon, rest @ ..] => (Some(n.clone()), rest),
        _ => (None, toks),
    }
}

fn signed_number(toks: &[Tok], line: usize) -> Result<f64, MilpError> {
    match toks {
        [Tok::Num(v)] => Ok(*v),
        [Tok::Plus, Tok::Num(v)] => Ok(*v),
        [Tok::Minus, Tok::Num(v)] => Ok(-*v),
        _ => Err(MilpError::Parse { line, msg: "expected a number".into() }),
    }
}

/// Parses LP text produced by [`write_lp`] (and the common subset of the
/// format: multi-line constraints, `free` bounds, `Binaries`).
pub fn read_lp(text: &str) -> Result<MilpModel, MilpError> {
    let mut r = Reader { model: MilpModel::new("lp"), by_name: HashMap::new(), lower: HashMap::new() };
    let mut section = Section::Header;
    let mut obj_toks: Vec<Tok> = Vec::new();
    let mut pending: Vec<Tok> = Vec::new();
    let mut bins: Vec<String> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('\\').next().unwrap_or("").trim();
        if raw.trim_start().starts_with('\\') {
            if let Some(name) = raw.trim_start().strip_prefix("\\ Model:") {
                r.model.name = name.trim().to_string();
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let lower = line.to_ascii_lowercase();
        let next = match lower.as_str() {
            "minimize" | "minimise" | "min" => Some(Section::Objective),
            "maximize" | "maximise" | "max" => {
                return Err(MilpError::Parse { line: lineno, msg: "maximization is not supported".into() })
            }
            "subject to" | "such that" | "st" | "s.t." => Some(Section::Constraints),
            "bounds" | "bound" => Some(Section::Bounds),
            "binaries" | "binary" | "bin" => Some(Section::Binaries),
            "generals" | "general" | "gen" | "semi-continuous" => {
                return Err(MilpError::Parse { line: lineno, msg: "general integers are not supported".into() })
            }
            "end" => Some(Section::End),
            _ => None,
        };
        if let Some(s) = next {
            section = s;
            continue;
        }
        match section {
            Section::Header | Section::End => {
                return Err(MilpError::Parse { line: lineno, msg: format!("unexpected content `{line}`") })
            }
            Section::Objective => obj_toks.extend(tokenize(line, lineno)?),
            Section::Constraints => {
                pending.extend(tokenize(line, lineno)?);
                let cmp = pending.iter().position(|t| matches!(t, Tok::Cmp(_)));
                if let Some(k) = cmp {
                    let tail = &pending[k + 1..];
                    let complete = matches!(tail.last(), Some(Tok::Num(_)));
                    if complete {
                        let Tok::Cmp(sense) = pending[k] else { unreachable!() };
                        let rhs = signed_number(tail, lineno)?;
                        let (label, lhs) = strip_label(&pending[..k]);
                        let lhs = lhs.to_vec();
                        let e = r.expr(&lhs, lineno)?;
                        let name = label.unwrap_or_else(|| format!("c{}", r.model.constraints().len()));
                        r.model
                            .add_named_constraint(name, &e, sense, rhs)
                            .map_err(|e| MilpError::Parse { line: lineno, msg: e.to_string() })?;
                        pending.clear();
                    }
                }
            }
            Section::Bounds => parse_bound(&mut r, &tokenize(line, lineno)?, lineno)?,
            Section::Binaries => bins.extend(line.split_whitespace().map(str::to_string)),
        }
    }
    if !pending.is_empty() {
        return Err(MilpError::Parse { line: text.lines().count(), msg: "unterminated constraint".into() });
    }
    let (_, obj) = strip_label(&obj_toks);
    let obj = obj.to_vec();
    let e = r.expr(&obj, 0)?;
    if e.terms.is_empty() && e.constant == 0.0 {
        r.model.set_feasibility();
    } else {
        r.model.set_objective(&e)?;
    }
    let mut model = r.model;
    for b in bins {
        let v = match r.by_name.get(&b) {
            Some(v) => *v,
            None => {
                let v = model.add_continuous(&b, 0.0, 1.0)?;
                r.by_name.insert(b.clone(), v);
                v
            }
        };
        model.set_binary(v);
    }
    Ok(model)
}

fn parse_bound(r: &mut Reader, toks: &[Tok], line: usize) -> Result<(), MilpError> {
    let err = |msg: &str| MilpError::Parse { line, msg: msg.to_string() };
    // `x free`
    if let [Tok::Name(n), Tok::Name(kw)] = toks {
        if kw.eq_ignore_ascii_case("free") {
            let v = r.var(n);
            return r.model.set_bounds(v, f64::NEG_INFINITY, f64::INFINITY);
        }
    }
    let cmps: Vec<usize> = toks.iter().enumerate().filter(|(_, t)| matches!(t, Tok::Cmp(_))).map(|(i, _)| i).collect();
    match cmps.as_slice() {
        [k] => {
            let Tok::Cmp(sense) = toks[*k] else { unreachable!() };
            let (left, right) = (&toks[..*k], &toks[*k + 1..]);
            let (name, value, sense) = match (left, right) {
                ([Tok::Name(n)], rhs) => (n.clone(), signed_number(rhs, line)?, sense),
                (lhs, [Tok::Name(n)]) => {
                    let flipped = match sense {
                        Sense::Le => Sense::Ge,
                        Sense::Ge => Sense::Le,
                        Sense::Eq => Sense::Eq,
                    };
                    (n.clone(), signed_number(lhs, line)?, flipped)
                }
                _ => return Err(err("malformed bound")),
            };
            let v = r.var(&name);
            let cur = r.model.var(v).clone();
            let (mut lo, mut hi) = (cur.lower, cur.upper);
            match sense {
                Sense::Le => {
                    hi = value;
                    // a negative upper bound with the default lower bound makes the lower bound -inf
                    if value < 0.0 && !r.lower.contains_key(&v) && lo == 0.0 {
                        lo = f64::NEG_INFINITY;
                    }
                }
                Sense::Ge => {
                    lo = value;
                    r.lower.insert(v, value);
                }
                Sense::Eq => {
                    lo = value;
                    hi = value;
                    r.lower.insert(v, value);
                }
            }
            r.model.set_bounds(v, lo, hi)
        }
        [k1, k2] => {
            let (Tok::Cmp(s1), Tok::Cmp(s2)) = (&toks[*k1], &toks[*k2]) else { unreachable!() };
            if *s1 != Sense::Le || *s2 != Sense::Le {
                return Err(err("double bound must use <="));
            }
            let lo = signed_number(&toks[..*k1], line)?;
            let Tok::Name(n) = &toks[k1 + 1] else { return Err(err("expected a variable name")) };
            if k1 + 2 != *k2 {
                return Err(err("malformed double bound"));
            }
            let hi = signed_number(&toks[k2 + 1..], line)?;
            let v = r.var(n);
            r.lower.insert(v, lo);
            r.model.set_bounds(v, lo, hi)
        }
        _ => Err(err("malformed bound")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feasibility_model_has_subject_to_and_zero_objective() {
        let mut m = MilpModel::new("f");
        let x = m.add_continuous("x", 0.0, 10.0).unwrap();
        m.add_constraint(&LinExpr::var(x), Sense::Ge, 3.0).unwrap();
        let text = write_lp(&m);
        assert!(text.contains("Subject To"));
        assert!(text.contains("Minimize\n obj: 0\n"));
        assert!(text.contains(" 0 <= x <= 10"));
        assert!(text.ends_with("End\n"));
    }

    #[test]
    fn binaries_section_lists_binaries() {
        let mut m = MilpModel::new("b");
        let a = m.add_binary("z_0_0_1");
        let b = m.add_binary("z_0_0_2");
        m.add_constraint(&LinExpr::var(a).term(b, 1.0), Sense::Eq, 1.0).unwrap();
        let text = write_lp(&m);
        let bin = text.split("Binaries\n").nth(1).unwrap();
        assert!(bin.starts_with(" z_0_0_1 z_0_0_2\n"));
    }

    #[test]
    fn section_order_is_fixed() {
        let mut m = MilpModel::new("o");
        let a = m.add_binary("a");
        let x = m.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY).unwrap();
        m.add_constraint(&LinExpr::var(a).term(x, -2.5), Sense::Le, 1e-7).unwrap();
        m.set_objective(&LinExpr::var(x).plus_const(2.0)).unwrap();
        let text = write_lp(&m);
        let pos: Vec<usize> =
            ["Minimize", "Subject To", "Bounds", "Binaries", "End"].iter().map(|s| text.find(s).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(text.contains(" x free"));
        assert!(text.contains(" c0: a - 2.5 x <= 0.0000001"));
        let back = read_lp(&text).unwrap();
        assert_eq!(back.objective_constant(), 2.0);
        assert_eq!(back.constraints()[0].rhs, 1e-7);
    }

    #[test]
    fn invalid_and_duplicate_names_are_replaced() {
        let mut m = MilpModel::new("n");
        let a = m.add_continuous("1bad", 0.0, 1.0).unwrap();
        let b = m.add_continuous("dup", 0.0, 1.0).unwrap();
        let c = m.add_continuous("dup", 0.0, 1.0).unwrap();
        m.add_constraint(&LinExpr::var(a).term(b, 1.0).term(c, 1.0), Sense::Le, 1.0).unwrap();
        let text = write_lp(&m);
        assert!(text.contains("x0 + dup + x2 <= 1"));
        let back = read_lp(&text).unwrap();
        assert_eq!(back.vars().len(), 3);
    }

    #[test]
    fn reader_handles_multiline_and_default_bounds() {
        let text = "Minimize\n obj: x + 2 y\nSubject To\n c1: x\n + y\n >= 2\nBounds\n y <= 5\n -3 <= w <= 3\n v <= -1\nBinaries\n z\nEnd\n";
        let m = read_lp(text).unwrap();
        let y = &m.vars()[1];
        assert_eq!((y.lower, y.upper), (0.0, 5.0));
        let w = m.vars().iter().find(|v| v.name == "w").unwrap();
        assert_eq!((w.lower, w.upper), (-3.0, 3.0));
        let v = m.vars().iter().find(|v| v.name == "v").unwrap();
        assert_eq!((v.lower, v.upper), (f64::NEG_INFINITY, -1.0));
        assert_eq!(m.num_binaries(), 1);
        assert_eq!(m.constraints()[0].sense, Sense::Ge);
        assert!(read_lp("Maximize\n obj: x\nEnd\n").is_err());
        assert!(read_lp("Subject To\n c: x + y >=\n").is_err());
    }
}
