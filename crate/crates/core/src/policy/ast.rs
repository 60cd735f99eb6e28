use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::attribute::{normalize, validate_name, validate_value, AttributeSet, AttributeValue};
use super::date;
use super::PolicyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn holds(self, lhs: u64, rhs: u64) -> bool {
        match self {
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
        }
    }
}

/// Parsed attribute policy.
///
/// `And` and `Or` always hold at least two children.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyAst {
    And(Vec<PolicyAst>),
    Or(Vec<PolicyAst>),
    /// `name = value`
    Eq { name: String, value: String },
    /// `name op bound`; `date` records that the bound was written as MM/DD/YYYY.
    Cmp {
        name: String,
        op: CmpOp,
        bound: u64,
        date: bool,
    },
    /// Bare `name`, satisfied by `name=True`.
    Flag(String),
}

impl PolicyAst {
    pub fn eq(name: &str, value: &str) -> Self {
        PolicyAst::Eq {
            name: normalize(name),
            value: normalize(value),
        }
    }

    pub fn flag(name: &str) -> Self {
        PolicyAst::Flag(normalize(name))
    }

    pub fn cmp(name: &str, op: CmpOp, bound: u64) -> Self {
        PolicyAst::Cmp {
            name: normalize(name),
            op,
            bound,
            date: false,
        }
    }

    /// Conjunction of `parts`; a single part is returned unchanged.
    pub fn all(mut parts: Vec<PolicyAst>) -> Self {
        if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            PolicyAst::And(parts)
        }
    }

    /// Disjunction of `parts`; a single part is returned unchanged.
    pub fn any(mut parts: Vec<PolicyAst>) -> Self {
        if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            PolicyAst::Or(parts)
        }
    }

    pub fn is_leaf(&self) -> bool {
        !matches!(self, PolicyAst::And(_) | PolicyAst::Or(_))
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            PolicyAst::And(c) | PolicyAst::Or(c) => c.iter().map(PolicyAst::leaf_count).sum(),
            _ => 1,
        }
    }

    /// Every attribute name the policy refers to.
    pub fn attribute_names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_names(&mut out);
        out
    }

    fn collect_names(&self, out: &mut BTreeSet<String>) {
        match self {
            PolicyAst::And(c) | PolicyAst::Or(c) => c.iter().for_each(|n| n.collect_names(out)),
            PolicyAst::Eq { name, .. } | PolicyAst::Cmp { name, .. } | PolicyAst::Flag(name) => {
                out.insert(name.clone());
            }
        }
    }

    /// Checks the structural invariants: arity of gates and leaf tokens.
    pub fn validate(&self) -> Result<(), PolicyError> {
        match self {
            PolicyAst::And(c) | PolicyAst::Or(c) => {
                if c.len() < 2 {
                    return Err(PolicyError::InvalidAst("gate with fewer than two children"));
                }
                c.iter().try_for_each(PolicyAst::validate)
            }
            PolicyAst::Eq { name, value } => {
                validate_name(name)?;
                validate_value(value)
            }
            PolicyAst::Cmp { name, .. } | PolicyAst::Flag(name) => validate_name(name),
        }
    }
}

/// Evaluates the policy directly against a set of attributes.
///
/// A missing attribute, or one of the wrong type, makes its leaf false.
pub fn evaluate(ast: &PolicyAst, attrs: &AttributeSet) -> bool {
    match ast {
        PolicyAst::And(c) => c.iter().all(|n| evaluate(n, attrs)),
        PolicyAst::Or(c) => c.iter().any(|n| evaluate(n, attrs)),
        PolicyAst::Eq { name, value } => {
            attrs.get(name).and_then(|a| a.as_str()) == Some(value.as_str())
        }
        PolicyAst::Flag(name) => attrs.get(name).and_then(|a| a.as_str()) == Some("True"),
        PolicyAst::Cmp { name, op, bound, .. } => match attrs.get(name).map(|a| a.value()) {
            Some(AttributeValue::Int { value, .. }) => op.holds(*value, *bound),
            _ => false,
        },
    }
}

/// Canonical text of a policy.
pub fn print_policy(ast: &PolicyAst) -> String {
    ast.to_string()
}

impl fmt::Display for PolicyAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyAst::And(c) | PolicyAst::Or(c) => {
                let sep = if matches!(self, PolicyAst::And(_)) {
                    " and "
                } else {
                    " or "
                };
                for (i, child) in c.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    if child.is_leaf() {
                        write!(f, "{child}")?;
                    } else {
                        write!(f, "({child})")?;
                    }
                }
                Ok(())
            }
            PolicyAst::Eq { name, value } => write!(f, "{name} = {value}"),
            PolicyAst::Flag(name) => f.write_str(name),
            PolicyAst::Cmp {
                name,
                op,
                bound,
                date,
            } => {
                if *date {
                    write!(f, "{name} {} {}", op.symbol(), date::format_mdy(*bound))
                } else {
                    write!(f, "{name} {} {bound}", op.symbol())
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    Assign,
    Cmp(CmpOp),
    Word(String),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: usize,
}

fn lex(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        let single = match c {
            c if c.is_whitespace() => {
                chars.next();
                continue;
            }
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '=' => Some(Tok::Assign),
            '<' | '>' => {
                chars.next();
                let or_equal = matches!(chars.peek(), Some(&(_, '=')));
                if or_equal {
                    chars.next();
                }
                let op = match (c, or_equal) {
                    ('<', false) => CmpOp::Lt,
                    ('<', true) => CmpOp::Le,
                    ('>', false) => CmpOp::Gt,
                    _ => CmpOp::Ge,
                };
                out.push(Token {
                    tok: Tok::Cmp(op),
                    pos,
                });
                continue;
            }
            _ => None,
        };
        if let Some(tok) = single {
            chars.next();
            out.push(Token { tok, pos });
            continue;
        }
        let mut word = String::new();
        while let Some(&(_, c)) = chars.peek() {
            if c.is_whitespace() || matches!(c, '(' | ')' | '=' | '<' | '>') {
                break;
            }
            word.push(c);
            chars.next();
        }
        out.push(Token {
            tok: Tok::Word(word),
            pos,
        });
    }
    out
}

fn is_keyword(word: &str, kw: &str) -> bool {
    word.eq_ignore_ascii_case(kw)
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.at).map(|t| &t.tok)
    }

    fn pos(&self) -> usize {
        self.tokens.get(self.at).map_or(self.end, |t| t.pos)
    }

    fn error(&self, expected: &'static str) -> PolicyError {
        PolicyError::Syntax {
            position: self.pos(),
            expected,
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if is_keyword(w, kw))
    }

    fn or_expr(&mut self) -> Result<PolicyAst, PolicyError> {
        let mut parts = vec![self.and_expr()?];
        while self.at_keyword("or") {
            self.at += 1;
            parts.push(self.and_expr()?);
        }
        Ok(PolicyAst::any(parts))
    }

    fn and_expr(&mut self) -> Result<PolicyAst, PolicyError> {
        let mut parts = vec![self.primary()?];
        while self.at_keyword("and") {
            self.at += 1;
            parts.push(self.primary()?);
        }
        Ok(PolicyAst::all(parts))
    }

    fn primary(&mut self) -> Result<PolicyAst, PolicyError> {
        if self.peek() == Some(&Tok::LParen) {
            self.at += 1;
            let inner = self.or_expr()?;
            if self.peek() != Some(&Tok::RParen) {
                return Err(self.error("')'"));
            }
            self.at += 1;
            return Ok(inner);
        }
        self.leaf()
    }

    /// Consumes consecutive non-keyword words and joins them with spaces.
    fn words(&mut self) -> Option<String> {
        let mut words = Vec::new();
        while let Some(Tok::Word(w)) = self.peek() {
            if is_keyword(w, "and") || is_keyword(w, "or") {
                break;
            }
            words.push(w.clone());
            self.at += 1;
        }
        (!words.is_empty()).then(|| words.join(" "))
    }

    fn leaf(&mut self) -> Result<PolicyAst, PolicyError> {
        let start = self.pos();
        let name = self.words().ok_or_else(|| self.error("attribute name or '('"))?;
        if validate_name(&name).is_err() {
            return Err(PolicyError::Syntax {
                position: start,
                expected: "attribute name without '/' or ':'",
            });
        }
        match self.peek() {
            Some(Tok::Assign) => {
                self.at += 1;
                let vstart = self.pos();
                let value = self.words().ok_or_else(|| self.error("attribute value"))?;
                if validate_value(&value).is_err() {
                    return Err(PolicyError::Syntax {
                        position: vstart,
                        expected: "attribute value without '/'",
                    });
                }
                Ok(PolicyAst::Eq { name, value })
            }
            Some(Tok::Cmp(op)) => {
                let op = *op;
                self.at += 1;
                let bound = match self.peek() {
                    Some(Tok::Word(w)) => w.clone(),
                    _ => return Err(self.error("integer or MM/DD/YYYY date")),
                };
                let (bound, date) = if bound.bytes().all(|b| b.is_ascii_digit()) {
                    match bound.parse::<u64>() {
                        Ok(n) => (n, false),
                        Err(_) => return Err(self.error("integer that fits in 64 bits")),
                    }
                } else if let Some(days) = date::parse_mdy(&bound) {
                    (days, true)
                } else {
                    return Err(self.error("integer or MM/DD/YYYY date"));
                };
                self.at += 1;
                Ok(PolicyAst::Cmp {
                    name,
                    op,
                    bound,
                    date,
                })
            }
            _ => Ok(PolicyAst::Flag(name)),
        }
    }
}

/// Parses policy text.
///
/// ```text
/// or-expr  := and-expr ("or" and-expr)*
/// and-expr := primary ("and" primary)*
/// primary  := "(" or-expr ")" | leaf
/// leaf     := NAME (("=" VALUE) | (CMP INTEGER-OR-DATE))?
/// ```
pub fn parse_policy(text: &str) -> Result<PolicyAst, PolicyError> {
    if text.trim().is_empty() {
        return Err(PolicyError::EmptyPolicy);
    }
    let mut parser = Parser {
        tokens: lex(text),
        at: 0,
        end: text.len(),
    };
    let ast = parser.or_expr()?;
    if parser.at != parser.tokens.len() {
        return Err(parser.error("'and', 'or' or end of input"));
    }
    Ok(ast)
}

impl std::str::FromStr for PolicyAst {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_policy(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Attribute;

    fn attrs(items: &[(&str, &str)]) -> AttributeSet {
        AttributeSet::try_from_iter(items.iter().map(|(k, v)| Attribute::string(k, v).unwrap()))
            .unwrap()
    }

    #[test]
    fn bare_tokens_become_flags() {
        let ast = parse_policy("Genome1 and John Smith and Graduate Assistant").unwrap();
        assert_eq!(
            ast,
            PolicyAst::And(vec![
                PolicyAst::flag("Genome1"),
                PolicyAst::flag("John Smith"),
                PolicyAst::flag("Graduate Assistant"),
            ])
        );
        assert_eq!(ast.leaf_count(), 3);
    }

    #[test]
    fn parentheses_elided() {
        assert_eq!(parse_policy("(A=1)").unwrap(), PolicyAst::eq("A", "1"));
        assert_eq!(parse_policy("((A))").unwrap(), PolicyAst::flag("A"));
    }

    #[test]
    fn dates_become_day_counts() {
        assert_eq!(
            parse_policy("Date <= 05/01/2021").unwrap(),
            PolicyAst::Cmp {
                name: "Date".into(),
                op: CmpOp::Le,
                bound: 18748,
                date: true
            }
        );
    }

    #[test]
    fn keywords_are_case_insensitive() {
        let a = parse_policy("A AND B Or C").unwrap();
        let b = parse_policy("a and B or C").unwrap();
        assert_eq!(
            a,
            PolicyAst::Or(vec![
                PolicyAst::And(vec![PolicyAst::flag("A"), PolicyAst::flag("B")]),
                PolicyAst::flag("C"),
            ])
        );
        assert_ne!(a, b, "operands stay case-sensitive");
    }

    #[test]
    fn printing() {
        assert_eq!(
            print_policy(&PolicyAst::eq("Project", "Genome1")),
            "Project = Genome1"
        );
        let ast = PolicyAst::And(vec![
            PolicyAst::Or(vec![PolicyAst::flag("a"), PolicyAst::flag("b")]),
            PolicyAst::flag("c"),
        ]);
        assert_eq!(print_policy(&ast), "(a or b) and c");
        let date = parse_policy("Date<=05/01/2021 and x>3").unwrap();
        assert_eq!(print_policy(&date), "Date <= 05/01/2021 and x > 3");
    }

    #[test]
    fn nested_same_operator_keeps_structure() {
        let ast = PolicyAst::And(vec![
            PolicyAst::And(vec![PolicyAst::flag("a"), PolicyAst::flag("b")]),
            PolicyAst::flag("c"),
        ]);
        assert_eq!(parse_policy(&print_policy(&ast)).unwrap(), ast);
    }

    #[test]
    fn syntax_errors() {
        assert_eq!(parse_policy("   "), Err(PolicyError::EmptyPolicy));
        assert!(matches!(
            parse_policy("(A and B"),
            Err(PolicyError::Syntax { position: 8, .. })
        ));
        assert!(matches!(
            parse_policy("A and"),
            Err(PolicyError::Syntax { position: 5, .. })
        ));
        assert!(matches!(parse_policy("A ="), Err(PolicyError::Syntax { .. })));
        assert!(matches!(parse_policy("A < x"), Err(PolicyError::Syntax { .. })));
        assert!(matches!(parse_policy("A < 13/45/2020"), Err(PolicyError::Syntax { .. })));
        assert!(matches!(parse_policy("A B )"), Err(PolicyError::Syntax { position: 4, .. })));
        assert!(matches!(parse_policy("and"), Err(PolicyError::Syntax { position: 0, .. })));
        assert!(matches!(parse_policy("a/b"), Err(PolicyError::Syntax { .. })));
    }

    #[test]
    fn scenario_one_outcomes() {
        let rule = parse_policy(
            "(Project = Genome1) and (PI = John Smith) and (Role = Graduate Assistant)",
        )
        .unwrap();
        let s1 = attrs(&[
            ("Project", "Genome1"),
            ("PI", "John Smith"),
            ("Role", "Graduate Assistant"),
        ]);
        let s2 = attrs(&[
            ("Project", "Biology1"),
            ("PI", "John Smith"),
            ("Role", "Graduate Assistant"),
        ]);
        assert!(evaluate(&rule, &s1));
        assert!(!evaluate(&rule, &s2));
    }

    #[test]
    fn scenario_five_invalid_student() {
        let rule = parse_policy(
            "(Project = Genome1) and (PI = John Smith) and (Role = Graduate Assistant) \
             and (Date <= 05/01/2021) and IS_VALID",
        )
        .unwrap();
        let mut s = attrs(&[
            ("Project", "Genome1"),
            ("PI", "John Smith"),
            ("Role", "Graduate Assistant"),
            ("IS_VALID", "False"),
        ]);
        s.insert(Attribute::int("Date", 18758).unwrap()).unwrap();
        assert!(!evaluate(&rule, &s));
        s.set(Attribute::flag("IS_VALID").unwrap());
        assert!(!evaluate(&rule, &s), "date is past the bound");
        s.set(Attribute::int("Date", 18738).unwrap());
        assert!(evaluate(&rule, &s));
    }

    #[test]
    fn type_mismatch_is_false() {
        let rule = parse_policy("x >= 1").unwrap();
        assert!(!evaluate(&rule, &attrs(&[("x", "5")])));
        assert!(!evaluate(&rule, &AttributeSet::new()));
        let flag = parse_policy("x").unwrap();
        let mut ints = AttributeSet::new();
        ints.insert(Attribute::int("x", 1).unwrap()).unwrap();
        assert!(!evaluate(&flag, &ints));
    }
}
