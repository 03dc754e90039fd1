//! SMT-LIB2 text: term rendering with `let`-sharing and a small
//! s-expression reader for solver responses.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::term::{Node, Term};

/// Symbol text, `|quoted|` only when it is not a simple symbol.
pub fn symbol(name: &str) -> String {
    let simple = !name.is_empty()
        && !name.starts_with(|c: char| c.is_ascii_digit())
        && name.chars().all(|c| c.is_ascii_alphanumeric() || "~!@$%^&*_-+=<>.?/".contains(c));
    if simple {
        name.to_string()
    } else {
        format!("|{name}|")
    }
}

pub fn literal(value: u128, width: u32) -> String {
    if width % 4 == 0 {
        format!("#x{:0w$x}", value, w = (width / 4) as usize)
    } else {
        format!("#b{:0w$b}", value, w = width as usize)
    }
}

pub fn sort_text(width: u32) -> String {
    format!("(_ BitVec {width})")
}

fn node_text(t: &Term, name: &dyn Fn(&Term) -> String) -> String {
    match t.node() {
        Node::Var(n, _) => symbol(n),
        Node::Const(v, w) => literal(*v, *w),
        Node::Bool(b) => b.to_string(),
        Node::Bv(op, a, b) => format!("({} {} {})", op.smt(), name(a), name(b)),
        Node::BvNot(a) => format!("(bvnot {})", name(a)),
        Node::BvNeg(a) => format!("(bvneg {})", name(a)),
        Node::Concat(a, b) => format!("(concat {} {})", name(a), name(b)),
        Node::Extract(h, l, a) => format!("((_ extract {h} {l}) {})", name(a)),
        Node::ZeroExt(by, a) => format!("((_ zero_extend {by}) {})", name(a)),
        Node::SignExt(by, a) => format!("((_ sign_extend {by}) {})", name(a)),
        Node::Ite(c, a, b) => format!("(ite {} {} {})", name(c), name(a), name(b)),
        Node::Cmp(op, a, b) => format!("({} {} {})", op.smt(), name(a), name(b)),
        Node::Not(a) => format!("(not {})", name(a)),
        Node::Logic(op, a, b) => format!("({} {} {})", op.smt(), name(a), name(b)),
    }
}

fn is_leaf(t: &Term) -> bool {
    matches!(t.node(), Node::Var(..) | Node::Const(..) | Node::Bool(_))
}

/// Renders `t`; inner nodes referenced more than once are bound with `let`
/// so the text stays linear in the DAG size.
pub fn render(t: &Term) -> String {
    let order = t.postorder();
    let mut refs: HashMap<*const Node, usize> = HashMap::new();
    for n in &order {
        for c in n.children() {
            *refs.entry(c.node() as *const Node).or_default() += 1;
        }
    }
    let mut names: HashMap<*const Node, String> = HashMap::new();
    let mut bindings = Vec::new();
    for n in &order {
        if is_leaf(n) || refs.get(&(n.node() as *const Node)).copied().unwrap_or(0) < 2 {
            continue;
        }
        let text = inline(n, &names);
        let name = format!("?s{}", bindings.len());
        names.insert(n.node() as *const Node, name.clone());
        bindings.push((name, text));
    }
    let mut out = String::new();
    for (name, text) in &bindings {
        let _ = write!(out, "(let (({name} {text})) ");
    }
    out.push_str(&inline(t, &names));
    out.push_str(&")".repeat(bindings.len()));
    out
}

fn inline(t: &Term, names: &HashMap<*const Node, String>) -> String {
    fn go(t: &Term, names: &HashMap<*const Node, String>) -> String {
        if let Some(n) = names.get(&(t.node() as *const Node)) {
            return n.clone();
        }
        node_text(t, &|c| go(c, names))
    }
    node_text(t, &|c| go(c, names))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed solver response: {0}")]
pub struct SexpError(pub String);

impl Sexp {
    pub fn parse(text: &str) -> Result<Sexp, SexpError> {
        let mut tokens = tokenize(text)?.into_iter().peekable();
        let s = parse_one(&mut tokens)?;
        if let Some(extra) = tokens.next() {
            return Err(SexpError(format!("trailing token {extra:?}")));
        }
        Ok(s)
    }

    pub fn atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(a) => Some(a),
            Sexp::List(_) => None,
        }
    }
}

#[derive(Debug, PartialEq)]
enum Tok {
    Open,
    Close,
    Atom(String),
}

fn tokenize(text: &str) -> Result<Vec<Tok>, SexpError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            '(' => {
                chars.next();
                out.push(Tok::Open);
            }
            ')' => {
                chars.next();
                out.push(Tok::Close);
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            '|' | '"' => {
                chars.next();
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some(d) if d == c => {
                            // "" escapes a quote inside strings
                            if c == '"' && chars.peek() == Some(&'"') {
                                chars.next();
                                s.push('"');
                                continue;
                            }
                            break;
                        }
                        Some(d) => s.push(d),
                        None => return Err(SexpError("unterminated quoted token".into())),
                    }
                }
                out.push(Tok::Atom(s));
            }
            _ => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if d == '(' || d == ')' || d.is_whitespace() {
                        break;
                    }
                    s.push(d);
                    chars.next();
                }
                out.push(Tok::Atom(s));
            }
        }
    }
    Ok(out)
}

fn parse_one(tokens: &mut std::iter::Peekable<std::vec::IntoIter<Tok>>) -> Result<Sexp, SexpError> {
    match tokens.next() {
        Some(Tok::Atom(a)) => Ok(Sexp::Atom(a)),
        Some(Tok::Open) => {
            let mut items = Vec::new();
            loop {
                match tokens.peek() {
                    Some(Tok::Close) => {
                        tokens.next();
                        return Ok(Sexp::List(items));
                    }
                    None => return Err(SexpError("unbalanced parentheses".into())),
                    _ => items.push(parse_one(tokens)?),
                }
            }
        }
        Some(Tok::Close) => Err(SexpError("unexpected ')'".into())),
        None => Err(SexpError("empty input".into())),
    }
}

/// Value of a bit-vector or boolean literal: `#x..`, `#b..`, `(_ bvN w)`,
/// `true`, `false`.
pub fn parse_value(s: &Sexp) -> Option<u128> {
    match s {
        Sexp::Atom(a) => {
            if let Some(h) = a.strip_prefix("#x") {
                u128::from_str_radix(h, 16).ok()
            } else if let Some(b) = a.strip_prefix("#b") {
                u128::from_str_radix(b, 2).ok()
            } else {
                match a.as_str() {
                    "true" => Some(1),
                    "false" => Some(0),
                    _ => None,
                }
            }
        }
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(u), Sexp::Atom(bv), Sexp::Atom(_)] if u == "_" => bv.strip_prefix("bv")?.parse().ok(),
            _ => None,
        },
    }
}

/// True once `text` holds at least one complete s-expression or atom.
pub fn is_complete(text: &str) -> bool {
    let mut depth = 0i64;
    let mut seen = false;
    let mut quote: Option<char> = None;
    for c in text.chars() {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => {}
            None => match c {
                '|' | '"' => quote = Some(c),
                '(' => {
                    depth += 1;
                    seen = true;
                }
                ')' => depth -= 1,
                c if !c.is_whitespace() => seen = true,
                _ => {}
            },
        }
    }
    seen && depth <= 0 && quote.is_none()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literals() {
        assert_eq!(literal(1, 8), "#x01");
        assert_eq!(literal(5, 3), "#b101");
        assert_eq!(literal(0xabc, 16), "#x0abc");
    }

    #[test]
    fn symbols_are_quoted_only_when_needed() {
        assert_eq!(symbol("len!142"), "len!142");
        assert_eq!(symbol("op!b0"), "op!b0");
        assert_eq!(symbol("9lives"), "|9lives|");
        assert_eq!(symbol("has space"), "|has space|");
    }

    #[test]
    fn equality_rendering() {
        let t = Term::var("len!142", 8).eq(&Term::constant(1, 8));
        assert_eq!(render(&t), "(= len!142 #x01)");
    }

    #[test]
    fn shared_nodes_are_let_bound() {
        let x = Term::var("x", 8);
        let s = x.add(&Term::var("y", 8));
        let t = Term::bv(super::super::term::BvOp::Mul, &s, &s);
        assert_eq!(render(&t), "(let ((?s0 (bvadd x y))) (bvmul ?s0 ?s0))");
    }

    #[test]
    fn parses_get_value_responses() {
        let s = Sexp::parse("((num1 #x05)\n (|op!b0| #b00101011) (k (_ bv7 8)))").unwrap();
        let Sexp::List(pairs) = s else { panic!() };
        let vals: Vec<(String, u128)> = pairs
            .iter()
            .map(|p| match p {
                Sexp::List(kv) => (kv[0].atom().unwrap().to_string(), parse_value(&kv[1]).unwrap()),
                _ => panic!(),
            })
            .collect();
        assert_eq!(vals, vec![("num1".into(), 5), ("op!b0".into(), 0x2b), ("k".into(), 7)]);
    }

    #[test]
    fn parse_errors_and_completeness() {
        assert!(Sexp::parse("((a)").is_err());
        assert!(Sexp::parse("a b").is_err());
        assert!(!is_complete("((a #x01)"));
        assert!(is_complete("((a #x01))"));
        assert!(is_complete("sat"));
        assert!(!is_complete("   "));
        assert!(is_complete("(error \"line 1: unknown (constant\")"));
    }
}
