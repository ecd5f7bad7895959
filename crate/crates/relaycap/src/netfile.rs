//! The line-oriented network description format.
//!
//! One directive per line, `#` starts a comment. A linear erasure example:
//!
//! ```text
//! field 2
//! nodes 4
//! source 1
//! destinations 4
//! mode linear
//! edge 1 3 state iid 0:0.5,1:0.5
//! edge 2 3 state iid 0:0.5,1:0.5
//! edge 2 4 state iid 0:0.5,1:0.5
//! edge 3 4 state iid 0:0.5,1:0.5
//! ```
//!
//! General-mode networks add `alphabet <v> in <k> out <l>` lines and one
//! `table <v> begin ... table end` block per node with in-edges; each table
//! row is `<x tuple> <s tuple> -> <y>` with inputs ordered by in-neighbor id
//! and states by the same in-edge order. A `statejoint begin ... end` block
//! (rows `<per-edge assignment> <prob>`) replaces per-edge `state iid`
//! clauses when edge states are correlated.

use crate::field::Field;
use crate::info::Pmf;
use crate::network::{ChannelTable, Mode, Network, NodeIo, StateModel};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct ParseIssue {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ParseIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "line {n}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

fn issue(line: usize, message: impl Into<String>) -> ParseIssue {
    ParseIssue { line: Some(line), message: message.into() }
}

#[derive(Debug)]
struct RawEdge {
    line: usize,
    from: usize,
    to: usize,
    iid: Option<Vec<(u32, f64)>>,
}

#[derive(Debug, Default)]
struct RawTable {
    rows: Vec<(usize, Vec<u32>, Vec<u32>, u32)>,
}

/// Parses a network description; errors carry line numbers.
pub fn parse_network(text: &str) -> Result<Network, Vec<ParseIssue>> {
    let mut errors: Vec<ParseIssue> = Vec::new();
    let mut field: Option<(Field, usize)> = None;
    let mut nodes: Option<usize> = None;
    let mut destinations: Option<Vec<usize>> = None;
    let mut mode: Option<(bool, usize)> = None; // (is_linear, line)
    let mut edges: Vec<RawEdge> = Vec::new();
    let mut joint_rows: Vec<(usize, Vec<u32>, f64)> = Vec::new();
    let mut saw_joint = false;
    let mut alphabets: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut tables: BTreeMap<usize, RawTable> = BTreeMap::new();
    let mut block: Option<(String, usize)> = None; // (kind or "table:<v>", start line)

    for (idx, raw_line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();

        if let Some((kind, _start)) = &block {
            if tokens[0] == "statejoint" || tokens[0] == "table" {
                if tokens.last() == Some(&"end") {
                    block = None;
                    continue;
                }
                errors.push(issue(lineno, "nested block inside an open block"));
                continue;
            }
            if kind == "statejoint" {
                match parse_joint_row(&tokens) {
                    Ok((assignment, p)) => joint_rows.push((lineno, assignment, p)),
                    Err(m) => errors.push(issue(lineno, m)),
                }
            } else {
                let v: usize = kind["table:".len()..].parse().unwrap();
                match parse_table_row(&tokens) {
                    Ok((xs, ss, y)) => {
                        tables.entry(v).or_default().rows.push((lineno, xs, ss, y))
                    }
                    Err(m) => errors.push(issue(lineno, m)),
                }
            }
            continue;
        }

        match tokens[0] {
            "field" => match parse_field(&tokens) {
                Ok(f) => {
                    if field.is_some() {
                        errors.push(issue(lineno, "field declared twice"));
                    }
                    field = Some((f, lineno));
                }
                Err(m) => errors.push(issue(lineno, m)),
            },
            "nodes" => match tokens.get(1).and_then(|t| t.parse::<usize>().ok()) {
                Some(n) if n >= 1 => nodes = Some(n),
                _ => errors.push(issue(lineno, "usage: nodes <count>")),
            },
            "source" => {
                if tokens.get(1) != Some(&"1") {
                    errors.push(issue(lineno, "the source is fixed at node 1"));
                }
            }
            "destinations" => {
                let parsed: Option<Vec<usize>> = tokens
                    .get(1)
                    .map(|t| t.split(',').map(|x| x.parse::<usize>()).collect::<Result<_, _>>())
                    .and_then(|r| r.ok());
                match parsed {
                    Some(d) if !d.is_empty() => destinations = Some(d),
                    _ => errors.push(issue(lineno, "usage: destinations <id>[,<id>...]")),
                }
            }
            "mode" => match tokens.get(1) {
                Some(&"linear") => mode = Some((true, lineno)),
                Some(&"general") => mode = Some((false, lineno)),
                _ => errors.push(issue(lineno, "usage: mode linear|general")),
            },
            "edge" => match parse_edge(&tokens) {
                Ok((from, to, iid)) => edges.push(RawEdge { line: lineno, from, to, iid }),
                Err(m) => errors.push(issue(lineno, m)),
            },
            "statejoint" => {
                if tokens.get(1) == Some(&"begin") {
                    saw_joint = true;
                    block = Some(("statejoint".into(), lineno));
                } else {
                    errors.push(issue(lineno, "usage: statejoint begin"));
                }
            }
            "table" => match (tokens.get(1).and_then(|t| t.parse::<usize>().ok()), tokens.get(2)) {
                (Some(v), Some(&"begin")) => block = Some((format!("table:{v}"), lineno)),
                _ => errors.push(issue(lineno, "usage: table <v> begin")),
            },
            "alphabet" => match parse_alphabet(&tokens) {
                Ok((v, input, output)) => {
                    alphabets.insert(v, (input, output));
                }
                Err(m) => errors.push(issue(lineno, m)),
            },
            other => errors.push(issue(lineno, format!("unknown directive `{other}`"))),
        }
    }
    if let Some((kind, start)) = block {
        errors.push(issue(start, format!("unterminated `{kind}` block")));
    }

    // Assembly. Missing essentials are fatal before network validation.
    let linear = match mode {
        Some((is_linear, _)) => is_linear,
        None => {
            errors.push(ParseIssue { line: None, message: "missing `mode` directive".into() });
            return Err(errors);
        }
    };
    let Some(node_count) = nodes else {
        errors.push(ParseIssue { line: None, message: "missing `nodes` directive".into() });
        return Err(errors);
    };
    let Some(dests) = destinations else {
        errors.push(ParseIssue { line: None, message: "missing `destinations` directive".into() });
        return Err(errors);
    };
    if linear && field.is_none() {
        errors.push(ParseIssue { line: None, message: "linear mode needs a `field`".into() });
        return Err(errors);
    }
    if let (false, Some((_, line))) = (linear, field) {
        errors.push(issue(line, "general mode takes no `field`"));
    }

    // Duplicate edges: report both lines.
    let mut seen: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for e in &edges {
        if let Some(&first) = seen.get(&(e.from, e.to)) {
            errors.push(issue(
                e.line,
                format!("duplicate edge ({}, {}); first declared on line {first}", e.from, e.to),
            ));
        } else {
            seen.insert((e.from, e.to), e.line);
        }
    }

    let q = field.map(|(f, _)| f.order() as usize);
    let state = if saw_joint {
        for e in &edges {
            if e.iid.is_some() {
                errors.push(issue(e.line, "edge has `state iid` but a statejoint block exists"));
            }
        }
        let rows: Vec<(Vec<u32>, f64)> =
            joint_rows.iter().map(|(_, a, p)| (a.clone(), *p)).collect();
        StateModel::Joint(rows)
    } else {
        let mut pmfs = Vec::with_capacity(edges.len());
        for e in &edges {
            match &e.iid {
                Some(pairs) => match build_pmf(pairs, q) {
                    Ok(p) => pmfs.push(p),
                    Err(m) => {
                        errors.push(issue(e.line, m));
                        pmfs.push(Pmf::point(1, 0));
                    }
                },
                None => {
                    errors.push(issue(e.line, "edge needs `state iid ...` (no statejoint block)"));
                    pmfs.push(Pmf::point(1, 0));
                }
            }
        }
        StateModel::PerEdgeIid(pmfs)
    };

    let edge_list: Vec<(usize, usize)> = edges.iter().map(|e| (e.from, e.to)).collect();
    let mode = if linear {
        Mode::Linear { field: field.unwrap().0 }
    } else {
        let mut io = Vec::with_capacity(node_count);
        for v in 1..=node_count {
            match alphabets.get(&v) {
                Some(&(input, output)) => io.push(NodeIo { input_size: input, output_size: output }),
                None => {
                    errors.push(ParseIssue {
                        line: None,
                        message: format!("general mode needs `alphabet {v} in .. out ..`"),
                    });
                    io.push(NodeIo { input_size: 1, output_size: 1 });
                }
            }
        }
        // Channel tables need edge context to compute shapes.
        let probe = Network::new(
            node_count,
            edge_list.clone(),
            dests.clone(),
            Mode::General { io: io.clone(), tables: vec![None; node_count] },
            state.clone(),
        );
        let mut built: Vec<Option<ChannelTable>> = vec![None; node_count];
        for (&v, raw) in &tables {
            if v == 0 || v > node_count {
                errors.push(ParseIssue {
                    line: None,
                    message: format!("table for unknown node {v}"),
                });
                continue;
            }
            match assemble_table(&probe, &io, v, raw) {
                Ok(t) => built[v - 1] = Some(t),
                Err(e) => errors.push(e),
            }
        }
        Mode::General { io, tables: built }
    };

    let net = Network::new(node_count, edge_list, dests, mode, state);
    for d in net.validate() {
        errors.push(ParseIssue { line: None, message: d.to_string() });
    }
    if errors.is_empty() {
        Ok(net)
    } else {
        Err(errors)
    }
}

fn parse_field(tokens: &[&str]) -> Result<Field, String> {
    let spec = tokens.get(1).ok_or("usage: field <p> | field 2^<m> [poly <hex>]")?;
    if let Some(m) = spec.strip_prefix("2^") {
        let m: u32 = m.parse().map_err(|_| format!("bad extension degree `{m}`"))?;
        let poly = match (tokens.get(2), tokens.get(3)) {
            (Some(&"poly"), Some(hex)) => {
                let digits = hex.strip_prefix("0x").unwrap_or(hex);
                Some(
                    u32::from_str_radix(digits, 16)
                        .map_err(|_| format!("bad polynomial `{hex}`"))?,
                )
            }
            (None, _) => None,
            _ => return Err("usage: field 2^<m> [poly <hex>]".into()),
        };
        Field::new(2, m, poly).map_err(|e| e.to_string())
    } else {
        let p: u64 = spec
            .parse()
            .map_err(|_| format!("order `{spec}` is not a prime or 2^<m> form"))?;
        Field::prime(p).map_err(|e| e.to_string())
    }
}

fn parse_edge(tokens: &[&str]) -> Result<(usize, usize, Option<Vec<(u32, f64)>>), String> {
    let usage = "usage: edge <u> <v> [state iid <elem>:<prob>[,...]]";
    let from: usize = tokens.get(1).and_then(|t| t.parse().ok()).ok_or(usage)?;
    let to: usize = tokens.get(2).and_then(|t| t.parse().ok()).ok_or(usage)?;
    match tokens.get(3) {
        None => Ok((from, to, None)),
        Some(&"state") => {
            if tokens.get(4) != Some(&"iid") {
                return Err(usage.into());
            }
            let spec = tokens.get(5).ok_or(usage)?;
            let mut pairs = Vec::new();
            for part in spec.split(',') {
                let (elem, prob) =
                    part.split_once(':').ok_or(format!("bad state atom `{part}`"))?;
                let e: u32 = elem.parse().map_err(|_| format!("bad state value `{elem}`"))?;
                let p: f64 = prob.parse().map_err(|_| format!("bad probability `{prob}`"))?;
                pairs.push((e, p));
            }
            Ok((from, to, Some(pairs)))
        }
        Some(other) => Err(format!("unexpected token `{other}`; {usage}")),
    }
}

fn build_pmf(pairs: &[(u32, f64)], q: Option<usize>) -> Result<Pmf, String> {
    let max_elem = pairs.iter().map(|&(e, _)| e as usize).max().unwrap_or(0);
    let len = match q {
        Some(q) => {
            if max_elem >= q {
                return Err(format!("state value {max_elem} is outside the field"));
            }
            q
        }
        None => max_elem + 1,
    };
    let mut probs = vec![0.0; len];
    for &(e, p) in pairs {
        if probs[e as usize] != 0.0 {
            return Err(format!("state value {e} listed twice"));
        }
        if p < 0.0 {
            return Err(format!("negative probability {p}"));
        }
        probs[e as usize] = p;
    }
    // File probabilities may carry rounded decimals: accept a 1e-9 slack
    // and renormalize only when the stricter pmf invariant needs it, so
    // already-exact pmfs survive render/parse round trips untouched.
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(format!("state probabilities sum to {total}, not 1"));
    }
    if (total - 1.0).abs() > crate::info::PMF_SUM_TOL {
        for p in &mut probs {
            *p /= total;
        }
    }
    Pmf::new(probs).map_err(|e| e.to_string())
}

fn parse_joint_row(tokens: &[&str]) -> Result<(Vec<u32>, f64), String> {
    if tokens.len() != 2 {
        return Err("usage: <s1,s2,...> <prob>".into());
    }
    let assignment: Result<Vec<u32>, _> = tokens[0].split(',').map(|t| t.parse()).collect();
    let assignment = assignment.map_err(|_| format!("bad assignment `{}`", tokens[0]))?;
    let p: f64 = tokens[1].parse().map_err(|_| format!("bad probability `{}`", tokens[1]))?;
    Ok((assignment, p))
}

fn parse_table_row(tokens: &[&str]) -> Result<(Vec<u32>, Vec<u32>, u32), String> {
    let usage = "usage: <x1,x2,...> <s1,s2,...> -> <y>";
    if tokens.len() != 4 || tokens[2] != "->" {
        return Err(usage.into());
    }
    let xs: Result<Vec<u32>, _> = tokens[0].split(',').map(|t| t.parse()).collect();
    let ss: Result<Vec<u32>, _> = tokens[1].split(',').map(|t| t.parse()).collect();
    let y: u32 = tokens[3].parse().map_err(|_| format!("bad output `{}`", tokens[3]))?;
    Ok((
        xs.map_err(|_| format!("bad input tuple `{}`", tokens[0]))?,
        ss.map_err(|_| format!("bad state tuple `{}`", tokens[1]))?,
        y,
    ))
}

fn parse_alphabet(tokens: &[&str]) -> Result<(usize, usize, usize), String> {
    let usage = "usage: alphabet <v> in <size> out <size>";
    if tokens.len() != 6 || tokens[2] != "in" || tokens[4] != "out" {
        return Err(usage.into());
    }
    let v: usize = tokens[1].parse().map_err(|_| usage.to_string())?;
    let input: usize = tokens[3].parse().map_err(|_| usage.to_string())?;
    let output: usize = tokens[5].parse().map_err(|_| usage.to_string())?;
    if input == 0 || output == 0 {
        return Err("alphabet sizes must be at least 1".into());
    }
    Ok((v, input, output))
}

fn assemble_table(
    probe: &Network,
    io: &[NodeIo],
    v: usize,
    raw: &RawTable,
) -> Result<ChannelTable, ParseIssue> {
    let in_edges = probe.in_edge_indices(v);
    let input_sizes: Vec<usize> =
        in_edges.iter().map(|&e| io[probe.edges()[e].0 - 1].input_size).collect();
    let state_sizes: Vec<usize> = in_edges.iter().map(|&e| probe.edge_state_size(e)).collect();
    let output_size = io[v - 1].output_size;
    let cells: usize = input_sizes.iter().chain(state_sizes.iter()).product();
    let mut map: Vec<Option<u32>> = vec![None; cells];
    let shape = ChannelTable::new(
        input_sizes.clone(),
        state_sizes.clone(),
        output_size.max(1),
        vec![0; cells],
    )
    .map_err(|m| ParseIssue { line: None, message: format!("table {v}: {m}") })?;
    for (line, xs, ss, y) in &raw.rows {
        if xs.len() != input_sizes.len() || ss.len() != state_sizes.len() {
            return Err(issue(
                *line,
                format!(
                    "table {v} row needs {} inputs and {} states",
                    input_sizes.len(),
                    state_sizes.len()
                ),
            ));
        }
        for (k, &x) in xs.iter().enumerate() {
            if x as usize >= input_sizes[k] {
                return Err(issue(*line, format!("input {x} exceeds alphabet")));
            }
        }
        for (k, &s) in ss.iter().enumerate() {
            if s as usize >= state_sizes[k] {
                return Err(issue(*line, format!("state {s} exceeds alphabet")));
            }
        }
        if *y as usize >= output_size {
            return Err(issue(*line, format!("output {y} exceeds alphabet")));
        }
        let idx = shape.flat_index(xs, ss);
        if map[idx].is_some() {
            return Err(issue(*line, format!("table {v} repeats an entry")));
        }
        map[idx] = Some(*y);
    }
    let mut flat = Vec::with_capacity(cells);
    for (idx, entry) in map.into_iter().enumerate() {
        match entry {
            Some(y) => flat.push(y),
            None => {
                return Err(ParseIssue {
                    line: None,
                    message: format!("table {v} is missing entry #{idx}; it must be total"),
                })
            }
        }
    }
    ChannelTable::new(input_sizes, state_sizes, output_size, flat)
        .map_err(|m| ParseIssue { line: None, message: format!("table {v}: {m}") })
}

/// Renders a network in the same format; `parse_network(render_network(n))`
/// reproduces `n` exactly (floats use shortest round-trip formatting).
pub fn render_network(net: &Network) -> String {
    let mut out = String::new();
    if let Some(field) = net.field() {
        if field.degree() == 1 {
            out.push_str(&format!("field {}\n", field.order()));
        } else {
            out.push_str(&format!(
                "field 2^{} poly 0x{:x}\n",
                field.degree(),
                field.reduction_poly().unwrap()
            ));
        }
    }
    out.push_str(&format!("nodes {}\n", net.node_count()));
    out.push_str("source 1\n");
    let dests: Vec<String> = net.destinations().iter().map(|d| d.to_string()).collect();
    out.push_str(&format!("destinations {}\n", dests.join(",")));
    out.push_str(&format!("mode {}\n", if net.is_linear() { "linear" } else { "general" }));
    if let Mode::General { io, .. } = net.mode() {
        for (v0, n) in io.iter().enumerate() {
            out.push_str(&format!(
                "alphabet {} in {} out {}\n",
                v0 + 1,
                n.input_size,
                n.output_size
            ));
        }
    }
    let joint = matches!(net.state_model(), StateModel::Joint(_));
    for (e, &(u, v)) in net.edges().iter().enumerate() {
        if joint {
            out.push_str(&format!("edge {u} {v}\n"));
        } else {
            let pmf = match net.state_model() {
                StateModel::PerEdgeIid(pmfs) => &pmfs[e],
                StateModel::Joint(_) => unreachable!(),
            };
            let atoms: Vec<String> = if net.is_linear() {
                pmf.probs()
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p != 0.0)
                    .map(|(s, &p)| format!("{s}:{p:?}"))
                    .collect()
            } else {
                pmf.probs().iter().enumerate().map(|(s, &p)| format!("{s}:{p:?}")).collect()
            };
            out.push_str(&format!("edge {u} {v} state iid {}\n", atoms.join(",")));
        }
    }
    if let StateModel::Joint(rows) = net.state_model() {
        out.push_str("statejoint begin\n");
        for (assignment, p) in rows {
            let parts: Vec<String> = assignment.iter().map(|s| s.to_string()).collect();
            out.push_str(&format!("{} {p:?}\n", parts.join(",")));
        }
        out.push_str("statejoint end\n");
    }
    if let Mode::General { tables, .. } = net.mode() {
        for v in net.nodes() {
            let Some(table) = &tables[v - 1] else { continue };
            out.push_str(&format!("table {v} begin\n"));
            let in_count = table.input_sizes().len();
            let sizes: Vec<usize> =
                table.input_sizes().iter().chain(table.state_sizes().iter()).copied().collect();
            let mut digits = vec![0u32; sizes.len()];
            let cells: usize = sizes.iter().product();
            for _ in 0..cells {
                let xs = &digits[..in_count];
                let ss = &digits[in_count..];
                let y = table.eval(xs, ss);
                let xs_s: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
                let ss_s: Vec<String> = ss.iter().map(|s| s.to_string()).collect();
                out.push_str(&format!("{} {} -> {y}\n", xs_s.join(","), ss_s.join(",")));
                for pos in (0..digits.len()).rev() {
                    digits[pos] += 1;
                    if (digits[pos] as usize) < sizes[pos] {
                        break;
                    }
                    digits[pos] = 0;
                }
            }
            out.push_str("table end\n");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::fig1;
    use crate::rng::Stream;

    const FIG1: &str = "\
# erasure example
field 2
nodes 4
source 1
destinations 4
mode linear
edge 1 3 state iid 0:0.5,1:0.5
edge 2 3 state iid 0:0.5,1:0.5
edge 2 4 state iid 0:0.5,1:0.5
edge 3 4 state iid 0:0.5,1:0.5
";

    #[test]
    fn parses_fig1() {
        let net = parse_network(FIG1).unwrap();
        assert_eq!(net.node_count(), 4);
        assert_eq!(net.edges().len(), 4);
        assert!(net.is_linear());
        assert_eq!(net, fig1(Field::prime(2).unwrap(), 0.5));
    }

    #[test]
    fn rejects_non_prime_field() {
        let text = FIG1.replace("field 2", "field 6");
        let errors = parse_network(&text).unwrap_err();
        assert!(errors.iter().any(|e| e.message.contains("not prime")), "{errors:?}");
    }

    #[test]
    fn duplicate_edge_reports_both_lines() {
        let text = format!("{FIG1}edge 1 3 state iid 0:0.5,1:0.5\n");
        let errors = parse_network(&text).unwrap_err();
        let dup = errors.iter().find(|e| e.message.contains("duplicate")).unwrap();
        assert_eq!(dup.line, Some(11));
        assert!(dup.message.contains("line 7"), "{}", dup.message);
    }

    #[test]
    fn unknown_directive_is_an_error() {
        let text = format!("{FIG1}frobnicate 1\n");
        let errors = parse_network(&text).unwrap_err();
        assert!(errors.iter().any(|e| e.message.contains("unknown directive")));
    }

    #[test]
    fn extension_field_with_poly() {
        let text = "\
field 2^3 poly 0xb
nodes 2
source 1
destinations 2
mode linear
edge 1 2 state iid 0:0.25,1:0.75
";
        let net = parse_network(text).unwrap();
        let f = net.field().unwrap();
        assert_eq!(f.order(), 8);
        assert_eq!(f.reduction_poly(), Some(0xb));
    }

    #[test]
    fn statejoint_block() {
        let text = "\
field 2
nodes 3
source 1
destinations 3
mode linear
edge 1 2
edge 2 3
statejoint begin
0,0 0.5
1,1 0.5
statejoint end
";
        let net = parse_network(text).unwrap();
        match net.state_model() {
            StateModel::Joint(rows) => assert_eq!(rows.len(), 2),
            _ => panic!("expected joint model"),
        }
    }

    const GENERAL: &str = "\
nodes 2
source 1
destinations 2
mode general
alphabet 1 in 2 out 1
alphabet 2 in 1 out 2
edge 1 2 state iid 0:0.25,1:0.75
table 2 begin
0 0 -> 0
0 1 -> 0
1 0 -> 0
1 1 -> 1
table end
";

    #[test]
    fn rounded_decimal_probabilities_accepted() {
        let text = "\
field 2
nodes 2
source 1
destinations 2
mode linear
edge 1 2 state iid 0:0.333333333,1:0.666666667
";
        let net = parse_network(text).unwrap();
        match net.state_model() {
            StateModel::PerEdgeIid(pmfs) => {
                let total: f64 = pmfs[0].probs().iter().sum();
                assert_eq!(total, 1.0);
            }
            _ => unreachable!(),
        }
        let off = text.replace("0.666666667", "0.6666");
        assert!(parse_network(&off).is_err());
    }

    #[test]
    fn joint_state_round_trip() {
        let text = "\
field 2
nodes 3
source 1
destinations 3
mode linear
edge 1 2
edge 2 3
statejoint begin
0,0 0.5
1,1 0.25
0,1 0.25
statejoint end
";
        let net = parse_network(text).unwrap();
        let again = parse_network(&render_network(&net)).unwrap();
        assert_eq!(net, again);
    }

    #[test]
    fn general_mode_round_trip() {
        let net = parse_network(GENERAL).unwrap();
        assert!(!net.is_linear());
        assert_eq!(net.observe(2, &[1, 0], &[1]), 1);
        let rendered = render_network(&net);
        let again = parse_network(&rendered).unwrap();
        assert_eq!(net, again);
    }

    #[test]
    fn incomplete_table_rejected() {
        let text = GENERAL.replace("1 1 -> 1\n", "");
        let errors = parse_network(&text).unwrap_err();
        assert!(errors.iter().any(|e| e.message.contains("missing entry")));
    }

    #[test]
    fn linear_round_trip_random_networks() {
        let mut rng = Stream::derive(0x10AD, &[0]);
        for _ in 0..50 {
            let n = 2 + rng.next_below(4) as usize;
            let field = if rng.next_below(2) == 0 {
                Field::prime(2).unwrap()
            } else {
                Field::prime(3).unwrap()
            };
            let mut edges = Vec::new();
            for u in 1..=n {
                for v in 1..=n {
                    if u != v && rng.next_f64() < 0.4 {
                        edges.push((u, v));
                    }
                }
            }
            if edges.is_empty() {
                edges.push((1, n.max(2)));
            }
            let pmfs: Vec<Pmf> = edges
                .iter()
                .map(|_| {
                    let w = rng.next_f64();
                    let mut probs = vec![0.0; field.order() as usize];
                    probs[0] = w;
                    probs[1] = 1.0 - w;
                    Pmf::new(probs).unwrap()
                })
                .collect();
            let net = Network::new(
                n.max(2),
                edges,
                [n.max(2)],
                Mode::Linear { field },
                StateModel::PerEdgeIid(pmfs),
            );
            let rendered = render_network(&net);
            match parse_network(&rendered) {
                Ok(parsed) => assert_eq!(net, parsed),
                Err(errors) => {
                    // Random nets may be invalid (unreachable destination);
                    // those must fail for that reason only.
                    assert!(
                        errors.iter().any(|e| e.message.contains("unreachable")),
                        "{errors:?}"
                    );
                }
            }
        }
    }
}
