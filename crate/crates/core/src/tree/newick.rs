//! Newick reading and writing for ultrametric binary trees.
//!
//! Lengths are written with 15 significant digits, so a tree read from text
//! with at most that many digits is written back unchanged.

use thiserror::Error;

use super::{ReconTree, TreeBuilder, TreeError};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum NewickError {
    #[error("unexpected {found} at byte {pos}, expected {expected}")]
    Unexpected {
        pos: usize,
        found: String,
        expected: &'static str,
    },
    #[error("invalid branch length {text:?} at byte {pos}")]
    BadLength { pos: usize, text: String },
    #[error("missing branch length for the node ending at byte {pos}")]
    MissingLength { pos: usize },
    #[error("node ending at byte {pos} has {count} children, only binary trees are supported")]
    NotBinary { pos: usize, count: usize },
    #[error("root has a non-zero stem length {0}, reconstructed trees have no stem")]
    RootStem(f64),
    #[error("tips are not contemporaneous: root-to-tip paths differ by {spread:e} (tolerance {tol:e})")]
    NotUltrametric { spread: f64, tol: f64 },
    #[error(transparent)]
    Tree(#[from] TreeError),
}

const ULTRAMETRIC_RTOL: f64 = 1e-9;

fn is_label_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, b'_' | b'.' | b'-')
}

struct ParsedNode {
    children: Vec<usize>,
    label: Option<String>,
    length: Option<f64>,
    end: usize,
}

struct Cursor<'a> {
    text: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    /// Skips whitespace and `[...]` comments. An unterminated comment runs
    /// to the end of the input and surfaces as an unexpected end.
    fn skip_ws(&mut self) {
        while let Some(&c) = self.text.get(self.pos) {
            if c.is_ascii_whitespace() {
                self.pos += 1;
            } else if c == b'[' {
                match self.text[self.pos..].iter().position(|&b| b == b']') {
                    Some(off) => self.pos += off + 1,
                    None => self.pos = self.text.len(),
                }
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.text.get(self.pos).copied()
    }

    fn unexpected(&mut self, expected: &'static str) -> NewickError {
        let found = match self.peek() {
            Some(c) => format!("{:?}", c as char),
            None => "end of input".to_string(),
        };
        NewickError::Unexpected {
            pos: self.pos,
            found,
            expected,
        }
    }

    fn label(&mut self) -> Option<String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.text.len() && is_label_char(self.text[self.pos]) {
            self.pos += 1;
        }
        (self.pos > start).then(|| String::from_utf8_lossy(&self.text[start..self.pos]).into_owned())
    }

    fn length(&mut self) -> Result<Option<f64>, NewickError> {
        if self.peek() != Some(b':') {
            return Ok(None);
        }
        self.pos += 1;
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.text.len()
            && matches!(self.text[self.pos], b'0'..=b'9' | b'.' | b'e' | b'E' | b'+' | b'-')
        {
            self.pos += 1;
        }
        let text = String::from_utf8_lossy(&self.text[start..self.pos]).into_owned();
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => Ok(Some(v)),
            _ => Err(NewickError::BadLength { pos: start, text }),
        }
    }
}

/// Parses a single Newick tree terminated by `;`.
pub fn from_newick(text: &str) -> Result<ReconTree, NewickError> {
    let mut cur = Cursor {
        text: text.as_bytes(),
        pos: 0,
    };
    let mut parsed: Vec<ParsedNode> = Vec::new();
    // stack of open internal nodes
    let mut open: Vec<usize> = Vec::new();
    loop {
        // expect the start of a subtree
        if cur.peek() == Some(b'(') {
            cur.pos += 1;
            parsed.push(ParsedNode {
                children: Vec::new(),
                label: None,
                length: None,
                end: 0,
            });
            open.push(parsed.len() - 1);
            continue;
        }
        let label = cur.label();
        if label.is_none() && !matches!(cur.peek(), Some(b':' | b',' | b')')) {
            return Err(cur.unexpected("'(' or a leaf label"));
        }
        let length = cur.length()?;
        parsed.push(ParsedNode {
            children: Vec::new(),
            label,
            length,
            end: cur.pos,
        });
        let mut done = parsed.len() - 1;
        // close as many groups as the text closes
        loop {
            let Some(&parent) = open.last() else {
                break;
            };
            parsed[parent].children.push(done);
            match cur.peek() {
                Some(b',') => {
                    cur.pos += 1;
                    break;
                }
                Some(b')') => {
                    cur.pos += 1;
                    open.pop();
                    parsed[parent].label = cur.label();
                    parsed[parent].length = cur.length()?;
                    parsed[parent].end = cur.pos;
                    done = parent;
                }
                _ => return Err(cur.unexpected("',' or ')'")),
            }
        }
        if open.is_empty() {
            break;
        }
    }
    if cur.peek() != Some(b';') {
        return Err(cur.unexpected("';'"));
    }
    cur.pos += 1;
    if cur.peek().is_some() {
        return Err(cur.unexpected("end of input"));
    }
    // the first node read is the root
    build(parsed, 0)
}

fn build(parsed: Vec<ParsedNode>, root: usize) -> Result<ReconTree, NewickError> {
    for (i, node) in parsed.iter().enumerate() {
        if !node.children.is_empty() && node.children.len() != 2 {
            return Err(NewickError::NotBinary {
                pos: node.end,
                count: node.children.len(),
            });
        }
        if i != root && node.length.is_none() {
            return Err(NewickError::MissingLength { pos: node.end });
        }
    }
    if let Some(stem) = parsed[root].length.filter(|&l| l != 0.0) {
        return Err(NewickError::RootStem(stem));
    }
    // children are always pushed after their parent, so a reverse sweep sees
    // every child before its parent
    let mut time = vec![0.0; parsed.len()];
    let mut spread: f64 = 0.0;
    for i in (0..parsed.len()).rev() {
        if let [a, b] = parsed[i].children[..] {
            let via_a = time[a] + parsed[a].length.unwrap();
            let via_b = time[b] + parsed[b].length.unwrap();
            time[i] = via_a;
            spread = spread.max((via_a - via_b).abs());
        }
    }
    let tol = ULTRAMETRIC_RTOL * time[root];
    if spread > tol {
        return Err(NewickError::NotUltrametric { spread, tol });
    }
    let mut b = TreeBuilder::with_capacity(parsed.len() / 2 + 1);
    for (i, node) in parsed.iter().enumerate() {
        if node.children.is_empty() {
            b.add_leaf(node.label.clone());
        } else {
            b.add_internal_labelled(time[i], node.label.clone());
        }
    }
    for (i, node) in parsed.iter().enumerate() {
        for &c in &node.children {
            b.attach(i, c)?;
        }
    }
    Ok(b.build()?)
}

fn format_length(x: f64) -> String {
    let rounded: f64 = format!("{x:.14e}").parse().expect("formatted float parses");
    format!("{rounded:?}")
}

pub fn to_newick(tree: &ReconTree) -> String {
    let mut out = String::with_capacity(tree.nodes().len() * 12);
    // (node, children already written)
    let mut stack = vec![(tree.root(), false)];
    while let Some((v, closing)) = stack.pop() {
        let node = tree.node(v);
        match (node.children, closing) {
            (Some([a, b]), false) => {
                out.push('(');
                stack.push((v, true));
                stack.push((b, false));
                stack.push((a, false));
                continue;
            }
            (Some(_), true) => {
                // drop the ',' written after the last child
                out.pop();
                out.push(')');
            }
            (None, _) => {}
        }
        if let Some(label) = &node.label {
            out.push_str(label);
        }
        if let Some(len) = tree.edge_length(v) {
            out.push(':');
            out.push_str(&format_length(len));
            out.push(',');
        }
    }
    out.push(';');
    out
}
