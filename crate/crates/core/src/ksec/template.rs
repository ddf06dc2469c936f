//! Structure templates and their line-oriented file format.
//!
//! ```text
//! TEMPLATE a
//! n1 NAND2 in:x0,x1
//! n2 NAND2 in:x2,x3
//! n3 NAND2
//! n1 -> n3.pin0
//! n2 -> n3.pin1
//! END
//! ```
//!
//! Boundary inputs named on a node line fill that node's pins not driven by
//! an edge line, in ascending pin order. A boundary name used twice refers
//! to the same external net. Nodes flagged `out` are outputs; without any
//! flag, nodes with no internal fanout are.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::KsecError;
use crate::netlist::CellType;

pub const MAX_TEMPLATE_NODES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PinSource {
    Node(usize),
    Boundary(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateNode {
    pub name: String,
    pub cell: CellType,
    /// One entry per input pin.
    pub pins: Vec<PinSource>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureTemplate {
    pub id: String,
    pub nodes: Vec<TemplateNode>,
    pub boundary: Vec<String>,
    pub outputs: Vec<usize>,
}

impl StructureTemplate {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_output(&self, node: usize) -> bool {
        self.outputs.contains(&node)
    }

    /// Number of internal edges leaving `node`.
    pub fn internal_fanout(&self, node: usize) -> usize {
        self.nodes
            .iter()
            .flat_map(|t| &t.pins)
            .filter(|p| **p == PinSource::Node(node))
            .count()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("TEMPLATE {}\n", self.id);
        let implicit: Vec<usize> = (0..self.nodes.len()).filter(|&i| self.internal_fanout(i) == 0).collect();
        let flag_outputs = implicit != self.outputs;
        for (i, node) in self.nodes.iter().enumerate() {
            let _ = write!(s, "{} {}", node.name, node.cell);
            let ins: Vec<&str> = node
                .pins
                .iter()
                .filter_map(|p| match p {
                    PinSource::Boundary(b) => Some(self.boundary[*b].as_str()),
                    PinSource::Node(_) => None,
                })
                .collect();
            if !ins.is_empty() {
                let _ = write!(s, " in:{}", ins.join(","));
            }
            if flag_outputs && self.is_output(i) {
                s.push_str(" out");
            }
            s.push('\n');
        }
        for node in &self.nodes {
            for (pin, p) in node.pins.iter().enumerate() {
                if let PinSource::Node(src) = p {
                    let _ = writeln!(s, "{} -> {}.pin{pin}", self.nodes[*src].name, node.name);
                }
            }
        }
        s.push_str("END\n");
        s
    }

    fn validate(&self, line: usize) -> Result<(), KsecError> {
        let err = |msg: String| KsecError::Template { line, msg };
        if self.nodes.is_empty() || self.nodes.len() > MAX_TEMPLATE_NODES {
            return Err(err(format!(
                "template `{}` has {} nodes, expected 1..={MAX_TEMPLATE_NODES}",
                self.id,
                self.nodes.len()
            )));
        }
        // connectivity over undirected internal edges
        let k = self.nodes.len();
        let mut parent: Vec<usize> = (0..k).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for (i, node) in self.nodes.iter().enumerate() {
            for p in &node.pins {
                if let PinSource::Node(j) = p {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, *j));
                    parent[a] = b;
                }
            }
        }
        let root = find(&mut parent, 0);
        if (0..k).any(|i| find(&mut parent, i) != root) {
            return Err(err(format!("template `{}` is not connected", self.id)));
        }
        // acyclic: repeatedly strip nodes whose internal sources are stripped
        let mut done = vec![false; k];
        for _ in 0..k {
            for i in 0..k {
                if !done[i]
                    && self.nodes[i].pins.iter().all(|p| match p {
                        PinSource::Node(j) => done[*j],
                        PinSource::Boundary(_) => true,
                    })
                {
                    done[i] = true;
                }
            }
        }
        if done.iter().any(|d| !d) {
            return Err(err(format!("template `{}` has a cycle", self.id)));
        }
        if self.outputs.is_empty() {
            return Err(err(format!("template `{}` has no outputs", self.id)));
        }
        Ok(())
    }
}

struct Draft {
    id: String,
    line: usize,
    nodes: Vec<(String, CellType, Vec<String>, bool, usize)>,
    edges: Vec<(String, String, usize, usize)>,
}

impl Draft {
    fn finish(self) -> Result<StructureTemplate, KsecError> {
        let index: HashMap<&str, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.0.as_str(), i))
            .collect();
        let mut pins: Vec<Vec<Option<PinSource>>> = self
            .nodes
            .iter()
            .map(|n| vec![None; n.1.arity as usize])
            .collect();
        for (src, dst, pin, line) in &self.edges {
            let err = |msg: String| KsecError::Template { line: *line, msg };
            let s = *index.get(src.as_str()).ok_or_else(|| err(format!("unknown node `{src}`")))?;
            let d = *index.get(dst.as_str()).ok_or_else(|| err(format!("unknown node `{dst}`")))?;
            let slot = pins[d]
                .get_mut(*pin)
                .ok_or_else(|| err(format!("`{dst}` has no pin {pin}")))?;
            if slot.is_some() {
                return Err(err(format!("`{dst}.pin{pin}` driven twice")));
            }
            *slot = Some(PinSource::Node(s));
        }
        let mut boundary: Vec<String> = Vec::new();
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (i, (name, cell, ins, _, line)) in self.nodes.iter().enumerate() {
            let free: Vec<usize> = (0..pins[i].len()).filter(|&p| pins[i][p].is_none()).collect();
            if free.len() != ins.len() {
                return Err(KsecError::Template {
                    line: *line,
                    msg: format!("`{name}` has {} unconnected pins but {} boundary inputs", free.len(), ins.len()),
                });
            }
            for (p, b) in free.into_iter().zip(ins) {
                let bi = match boundary.iter().position(|x| x == b) {
                    Some(bi) => bi,
                    None => {
                        boundary.push(b.clone());
                        boundary.len() - 1
                    }
                };
                pins[i][p] = Some(PinSource::Boundary(bi));
            }
            nodes.push(TemplateNode {
                name: name.clone(),
                cell: *cell,
                pins: pins[i].iter().map(|p| p.expect("filled")).collect(),
            });
        }
        let flagged: Vec<usize> = (0..nodes.len()).filter(|&i| self.nodes[i].3).collect();
        let mut t = StructureTemplate {
            id: self.id,
            nodes,
            boundary,
            outputs: flagged,
        };
        if t.outputs.is_empty() {
            t.outputs = (0..t.nodes.len()).filter(|&i| t.internal_fanout(i) == 0).collect();
        }
        t.validate(self.line)?;
        Ok(t)
    }
}

/// Parses a template file. `#` starts a comment.
pub fn parse_templates(text: &str) -> Result<Vec<StructureTemplate>, KsecError> {
    let mut out: Vec<StructureTemplate> = Vec::new();
    let mut cur: Option<Draft> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |msg: String| KsecError::Template { line, msg };
        let words: Vec<&str> = content.split_whitespace().collect();
        match (words[0], cur.as_mut()) {
            ("TEMPLATE", None) => {
                let id = words.get(1).ok_or_else(|| err("missing template id".into()))?;
                if out.iter().any(|t| t.id == *id) {
                    return Err(err(format!("duplicate template `{id}`")));
                }
                cur = Some(Draft {
                    id: id.to_string(),
                    line,
                    nodes: Vec::new(),
                    edges: Vec::new(),
                });
            }
            ("TEMPLATE", Some(_)) => return Err(err("TEMPLATE inside a template".into())),
            ("END", Some(_)) => out.push(cur.take().expect("open").finish()?),
            (_, None) => return Err(err(format!("`{content}` outside a template"))),
            (_, Some(d)) if words.len() == 3 && words[1] == "->" => {
                let (dst, pin) = words[2]
                    .split_once(".pin")
                    .ok_or_else(|| err(format!("expected `<node>.pin<k>`, got `{}`", words[2])))?;
                let pin: usize = pin.parse().map_err(|_| err(format!("bad pin `{pin}`")))?;
                d.edges.push((words[0].to_string(), dst.to_string(), pin, line));
            }
            (name, Some(d)) => {
                let cell = words
                    .get(1)
                    .and_then(|c| CellType::from_lib_name(c))
                    .ok_or_else(|| err(format!("bad cell on node `{name}`")))?;
                if d.nodes.iter().any(|n| n.0 == name) {
                    return Err(err(format!("duplicate node `{name}`")));
                }
                let mut ins = Vec::new();
                let mut out_flag = false;
                for w in &words[2..] {
                    if let Some(list) = w.strip_prefix("in:") {
                        ins.extend(list.split(',').filter(|s| !s.is_empty()).map(str::to_string));
                    } else if *w == "out" {
                        out_flag = true;
                    } else {
                        return Err(err(format!("unexpected `{w}`")));
                    }
                }
                d.nodes.push((name.to_string(), cell, ins, out_flag, line));
            }
        }
    }
    if let Some(d) = cur {
        return Err(KsecError::Template {
            line: d.line,
            msg: format!("template `{}` lacks END", d.id),
        });
    }
    Ok(out)
}

/// Seven representative NAND/NOR/INV structures of three or four cells.
pub const DEFAULT_TEMPLATES: &str = "\
# a: NAND-NAND sum of products
TEMPLATE a
n1 NAND2 in:x0,x1
n2 NAND2 in:x2,x3
n3 NAND2
n1 -> n3.pin0
n2 -> n3.pin1
END
# b: NOR-NOR product of sums
TEMPLATE b
n1 NOR2 in:x0,x1
n2 NOR2 in:x2,x3
n3 NOR2
n1 -> n3.pin0
n2 -> n3.pin1
END
# c: OR from inverted inputs
TEMPLATE c
n1 INV in:x0
n2 INV in:x1
n3 NAND2
n1 -> n3.pin0
n2 -> n3.pin1
END
# d: AND from inverted inputs
TEMPLATE d
n1 INV in:x0
n2 INV in:x1
n3 NOR2
n1 -> n3.pin0
n2 -> n3.pin1
END
# e: four-NAND XOR
TEMPLATE e
n1 NAND2 in:x0,x1
n2 NAND2 in:x0
n3 NAND2 in:x1
n4 NAND2
n1 -> n2.pin1
n1 -> n3.pin0
n2 -> n4.pin0
n3 -> n4.pin1
END
# f: three-input AND chain
TEMPLATE f
n1 NAND2 in:x0,x1
n2 INV
n3 NAND2 in:x2
n1 -> n2.pin0
n2 -> n3.pin0
END
# g: 2:1 multiplexer
TEMPLATE g
n1 INV in:s
n2 NAND2 in:x0,s
n3 NAND2 in:x1
n4 NAND2
n1 -> n3.pin1
n2 -> n4.pin0
n3 -> n4.pin1
END
";

pub fn default_templates() -> Vec<StructureTemplate> {
    parse_templates(DEFAULT_TEMPLATES).expect("bundled templates parse")
}

/// Template id → count, over all ids in `templates` (zero-filled).
pub fn zero_census(templates: &[StructureTemplate]) -> BTreeMap<String, usize> {
    templates.iter().map(|t| (t.id.clone(), 0)).collect()
}
