//! Textual s-expression format for behavior trees, plus DOT export.
//!
//! Grammar (whitespace-insensitive, `;` comments run to end of line):
//!
//! ```text
//! tree   := node
//! node   := "(" head args ")" | leaf
//! head   := "sel" | "seq" | "par" NAT          ; NAT is the parallel threshold
//! args   := node+
//! leaf   := "(" "act" ACTION ")" | "(" "cond" PRED "@" NAT "," NAT ")"
//!         | "(" "inv" node ")" | "(" "force-ok" node ")" | "(" "force-fail" node ")"
//! ACTION := "right" | "left" | "crouch" | "shoot" | "jump"
//! PRED   := "enemy" | "obstacle"
//! ```
//!
//! The printer is canonical: one node per line, two-space indent per depth,
//! so `parse . print` is the identity and printed artifacts are reproducible
//! byte for byte.

use crate::bt::{
    ActionId, BehaviorTree, ConditionId, DecoratorPolicy, Node, NodeIndex, NodeKind, Predicate,
};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

/// A parsed tree plus the source position of each node's opening paren,
/// indexed by arena node index.
#[derive(Debug, Clone)]
pub struct BtDocument {
    pub tree: BehaviorTree,
    pub spans: Vec<(u32, u32)>,
}

// ---- lexer ------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    LParen,
    RParen,
    Word(String),
    Nat(u32),
    At,
    Comma,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: u32,
    col: u32,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(input: &'a str) -> Lexer<'a> {
        Lexer {
            chars: input.chars().peekable(),
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn tokenize(mut self) -> Result<Vec<Token>, ParseError> {
        let mut tokens = Vec::new();
        loop {
            // skip whitespace and comments
            loop {
                match self.chars.peek() {
                    Some(c) if c.is_whitespace() => {
                        self.bump();
                    }
                    Some(';') => {
                        while let Some(&c) = self.chars.peek() {
                            if c == '\n' {
                                break;
                            }
                            self.bump();
                        }
                    }
                    _ => break,
                }
            }
            let (line, col) = (self.line, self.col);
            let Some(&c) = self.chars.peek() else {
                tokens.push(Token {
                    tok: Tok::Eof,
                    line,
                    col,
                });
                return Ok(tokens);
            };
            let tok = match c {
                '(' => {
                    self.bump();
                    Tok::LParen
                }
                ')' => {
                    self.bump();
                    Tok::RParen
                }
                '@' => {
                    self.bump();
                    Tok::At
                }
                ',' => {
                    self.bump();
                    Tok::Comma
                }
                c if c.is_ascii_digit() => {
                    let mut value: u64 = 0;
                    while let Some(&d) = self.chars.peek() {
                        if !d.is_ascii_digit() {
                            break;
                        }
                        value = value * 10 + (d as u64 - '0' as u64);
                        if value > u32::MAX as u64 {
                            return Err(ParseError {
                                line,
                                col,
                                message: "number too large".to_string(),
                            });
                        }
                        self.bump();
                    }
                    Tok::Nat(value as u32)
                }
                c if c.is_ascii_lowercase() => {
                    let mut word = String::new();
                    while let Some(&w) = self.chars.peek() {
                        if !(w.is_ascii_lowercase() || w == '-') {
                            break;
                        }
                        word.push(w);
                        self.bump();
                    }
                    Tok::Word(word)
                }
                other => {
                    return Err(ParseError {
                        line,
                        col,
                        message: format!("unexpected character {other:?}"),
                    })
                }
            };
            tokens.push(Token { tok, line, col });
        }
    }
}

// ---- parser -----------------------------------------------------------------

const MAX_DEPTH: usize = 4096;

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    nodes: Vec<Node>,
    spans: Vec<(u32, u32)>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        let t = self.peek();
        Err(ParseError {
            line: t.line,
            col: t.col,
            message: message.into(),
        })
    }

    fn expect_lparen(&mut self) -> Result<(u32, u32), ParseError> {
        let t = self.advance();
        if t.tok == Tok::LParen {
            Ok((t.line, t.col))
        } else {
            Err(ParseError {
                line: t.line,
                col: t.col,
                message: "expected '('".to_string(),
            })
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        let t = self.advance();
        if t.tok == Tok::RParen {
            Ok(())
        } else {
            Err(ParseError {
                line: t.line,
                col: t.col,
                message: "expected ')'".to_string(),
            })
        }
    }

    fn expect_nat(&mut self, what: &str) -> Result<(u32, u32, u32), ParseError> {
        let t = self.advance();
        if let Tok::Nat(n) = t.tok {
            Ok((n, t.line, t.col))
        } else {
            Err(ParseError {
                line: t.line,
                col: t.col,
                message: format!("expected {what}"),
            })
        }
    }

    fn expect_word(&mut self, what: &str) -> Result<(String, u32, u32), ParseError> {
        let t = self.advance();
        if let Tok::Word(w) = t.tok {
            Ok((w, t.line, t.col))
        } else {
            Err(ParseError {
                line: t.line,
                col: t.col,
                message: format!("expected {what}"),
            })
        }
    }

    fn push_node(&mut self, kind: NodeKind, span: (u32, u32)) -> NodeIndex {
        let idx = self.nodes.len();
        self.nodes.push(BehaviorTree::raw_node(kind, Vec::new(), None));
        self.spans.push(span);
        idx
    }

    fn parse_node(&mut self, depth: usize) -> Result<NodeIndex, ParseError> {
        if depth > MAX_DEPTH {
            return self.error("nesting too deep");
        }
        let span = self.expect_lparen()?;
        let (head, hline, hcol) = self.expect_word("a node head")?;
        match head.as_str() {
            "sel" | "seq" => {
                let kind = if head == "sel" {
                    NodeKind::Selector
                } else {
                    NodeKind::Sequence
                };
                let idx = self.push_node(kind, span);
                let children = self.parse_children(idx, depth)?;
                if children == 0 {
                    return Err(ParseError {
                        line: hline,
                        col: hcol,
                        message: format!("'{head}' needs at least one child"),
                    });
                }
                Ok(idx)
            }
            "par" => {
                let (m, mline, mcol) = self.expect_nat("parallel threshold")?;
                let idx = self.push_node(
                    NodeKind::Parallel {
                        success_threshold: m as usize,
                    },
                    span,
                );
                let children = self.parse_children(idx, depth)?;
                if children == 0 {
                    return Err(ParseError {
                        line: hline,
                        col: hcol,
                        message: "'par' needs at least one child".to_string(),
                    });
                }
                if m == 0 || m as usize > children {
                    return Err(ParseError {
                        line: mline,
                        col: mcol,
                        message: format!("threshold {m} out of range for {children} children"),
                    });
                }
                Ok(idx)
            }
            "inv" | "force-ok" | "force-fail" => {
                let policy = match head.as_str() {
                    "inv" => DecoratorPolicy::Invert,
                    "force-ok" => DecoratorPolicy::ForceSuccess,
                    _ => DecoratorPolicy::ForceFailure,
                };
                let idx = self.push_node(NodeKind::Decorator(policy), span);
                let child = self.parse_node(depth + 1)?;
                self.nodes[child].parent = Some(idx);
                self.nodes[idx].children.push(child);
                self.expect_rparen()?;
                Ok(idx)
            }
            "act" => {
                let (word, wline, wcol) = self.expect_word("an action name")?;
                let action = ActionId::from_name(&word).ok_or(ParseError {
                    line: wline,
                    col: wcol,
                    message: format!("unknown action '{word}'"),
                })?;
                let idx = self.push_node(NodeKind::Action(action), span);
                self.expect_rparen()?;
                Ok(idx)
            }
            "cond" => {
                let (word, wline, wcol) = self.expect_word("a predicate name")?;
                let predicate = match word.as_str() {
                    "enemy" => Predicate::EnemyAt,
                    "obstacle" => Predicate::ObstacleAt,
                    _ => {
                        return Err(ParseError {
                            line: wline,
                            col: wcol,
                            message: format!("unknown predicate '{word}'"),
                        })
                    }
                };
                let t = self.advance();
                if t.tok != Tok::At {
                    return Err(ParseError {
                        line: t.line,
                        col: t.col,
                        message: "expected '@'".to_string(),
                    });
                }
                let (row, rline, rcol) = self.expect_nat("a row in 0..=4")?;
                let t = self.advance();
                if t.tok != Tok::Comma {
                    return Err(ParseError {
                        line: t.line,
                        col: t.col,
                        message: "expected ','".to_string(),
                    });
                }
                let (col_v, cline, ccol) = self.expect_nat("a column in 0..=4")?;
                if row >= ConditionId::GRID as u32 {
                    return Err(ParseError {
                        line: rline,
                        col: rcol,
                        message: format!("row {row} out of range 0..=4"),
                    });
                }
                if col_v >= ConditionId::GRID as u32 {
                    return Err(ParseError {
                        line: cline,
                        col: ccol,
                        message: format!("column {col_v} out of range 0..=4"),
                    });
                }
                let condition = ConditionId::new(row as u8, col_v as u8, predicate)
                    .expect("range checked above");
                let idx = self.push_node(NodeKind::Condition(condition), span);
                self.expect_rparen()?;
                Ok(idx)
            }
            other => Err(ParseError {
                line: hline,
                col: hcol,
                message: format!("unknown node head '{other}'"),
            }),
        }
    }

    /// Parse child nodes until the closing paren of `parent`; returns how
    /// many children were attached.
    fn parse_children(&mut self, parent: NodeIndex, depth: usize) -> Result<usize, ParseError> {
        let mut count = 0;
        loop {
            match self.peek().tok {
                Tok::RParen => {
                    self.advance();
                    return Ok(count);
                }
                Tok::LParen => {
                    let child = self.parse_node(depth + 1)?;
                    self.nodes[child].parent = Some(parent);
                    self.nodes[parent].children.push(child);
                    count += 1;
                }
                _ => return self.error("expected a child node or ')'"),
            }
        }
    }
}

/// Parse a tree and keep per-node source positions.
pub fn parse_document(input: &str) -> Result<BtDocument, ParseError> {
    let tokens = Lexer::new(input).tokenize()?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        nodes: Vec::new(),
        spans: Vec::new(),
    };
    let root = parser.parse_node(0)?;
    let trailing = parser.peek();
    if trailing.tok != Tok::Eof {
        return Err(ParseError {
            line: trailing.line,
            col: trailing.col,
            message: "trailing input after the tree".to_string(),
        });
    }
    let tree = BehaviorTree::from_parts(parser.nodes, root);
    debug_assert!(tree.is_valid());
    Ok(BtDocument {
        tree,
        spans: parser.spans,
    })
}

pub fn parse(input: &str) -> Result<BehaviorTree, ParseError> {
    parse_document(input).map(|d| d.tree)
}

// ---- printer ------------------------------------------------------------------

fn head(kind: NodeKind) -> String {
    match kind {
        NodeKind::Selector => "sel".to_string(),
        NodeKind::Sequence => "seq".to_string(),
        NodeKind::Parallel { success_threshold } => format!("par {success_threshold}"),
        NodeKind::Decorator(DecoratorPolicy::Invert) => "inv".to_string(),
        NodeKind::Decorator(DecoratorPolicy::ForceSuccess) => "force-ok".to_string(),
        NodeKind::Decorator(DecoratorPolicy::ForceFailure) => "force-fail".to_string(),
        NodeKind::Action(a) => format!("act {}", a.name()),
        NodeKind::Condition(c) => format!("cond {c}"),
    }
}

/// Canonical form: one node per line, two-space indent per depth. Fixpoint of
/// `print . parse`.
pub fn print(tree: &BehaviorTree) -> String {
    fn rec(tree: &BehaviorTree, node: NodeIndex, depth: usize, out: &mut String) {
        for _ in 0..depth {
            out.push_str("  ");
        }
        let n = tree.node(node).expect("valid tree");
        let _ = write!(out, "({}", head(n.kind()));
        for &child in n.children() {
            out.push('\n');
            rec(tree, child, depth + 1, out);
        }
        out.push(')');
    }
    let mut out = String::new();
    rec(tree, tree.root(), 0, &mut out);
    out
}

/// Single-line form used in logs and prune reports.
pub fn print_compact(tree: &BehaviorTree) -> String {
    fn rec(tree: &BehaviorTree, node: NodeIndex, out: &mut String) {
        let n = tree.node(node).expect("valid tree");
        let _ = write!(out, "({}", head(n.kind()));
        for &child in n.children() {
            out.push(' ');
            rec(tree, child, out);
        }
        out.push(')');
    }
    let mut out = String::new();
    rec(tree, tree.root(), &mut out);
    out
}

// ---- DOT export ------------------------------------------------------------------

fn dot_label(kind: NodeKind) -> String {
    match kind {
        NodeKind::Selector => "?".to_string(),
        NodeKind::Sequence => "\u{2192}".to_string(),
        NodeKind::Parallel { success_threshold } => format!("\u{21c9} {success_threshold}"),
        NodeKind::Decorator(DecoratorPolicy::Invert) => "inv".to_string(),
        NodeKind::Decorator(DecoratorPolicy::ForceSuccess) => "force-ok".to_string(),
        NodeKind::Decorator(DecoratorPolicy::ForceFailure) => "force-fail".to_string(),
        NodeKind::Action(a) => a.name().to_string(),
        NodeKind::Condition(c) => c.to_string(),
    }
}

/// Render the tree as a DOT digraph with the usual graphical conventions
/// ("?" selector, arrow sequence).
pub fn to_dot(tree: &BehaviorTree) -> String {
    let mut out = String::from("digraph bt {\n  node [shape=box];\n");
    for (i, node) in tree.nodes() {
        let _ = writeln!(out, "  n{i} [label=\"{}\"];", dot_label(node.kind()));
    }
    for (i, node) in tree.nodes() {
        for &child in node.children() {
            let _ = writeln!(out, "  n{i} -> n{child};");
        }
    }
    out.push_str("}\n");
    out
}

/// Indented outline with one node per line, for terminal inspection.
pub fn to_ascii_outline(tree: &BehaviorTree) -> String {
    fn rec(tree: &BehaviorTree, node: NodeIndex, depth: usize, out: &mut String) {
        for _ in 0..depth {
            out.push_str("  ");
        }
        let n = tree.node(node).expect("valid tree");
        out.push_str(&dot_label(n.kind()));
        out.push('\n');
        for &child in n.children() {
            rec(tree, child, depth + 1, out);
        }
    }
    let mut out = String::new();
    rec(tree, tree.root(), 0, &mut out);
    out
}
