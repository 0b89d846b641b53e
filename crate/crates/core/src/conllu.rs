//! Minimal CoNLL-U reader: only the ID (1) and HEAD (7) columns matter.
//!
//! Each sentence becomes one [`TokenGraph`] with an edge `head-1 → id-1` for
//! every non-root token. Multiword ranges (`1-2`) and empty nodes (`1.1`) are
//! skipped.

use std::fmt::Write;

use crate::error::{GwtError, Result};
use crate::graph::TokenGraph;

const COLUMNS: usize = 10;

struct Token {
    id: usize,
    head: usize,
    form: String,
    line: usize,
}

fn parse_err<T>(line: usize, msg: impl Into<String>) -> Result<T> {
    Err(GwtError::Parse { line, msg: msg.into() })
}

pub fn parse_conllu(text: &str) -> Result<Vec<TokenGraph>> {
    let mut graphs = Vec::new();
    let mut sentence: Vec<Token> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            flush(&mut sentence, &mut graphs)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != COLUMNS {
            return parse_err(line_no, format!("expected {COLUMNS} columns, found {}", cols.len()));
        }
        let id_col = cols[0];
        if id_col.contains('-') || id_col.contains('.') {
            continue;
        }
        let id: usize = match id_col.parse() {
            Ok(v) if v >= 1 => v,
            _ => return parse_err(line_no, format!("bad token id {id_col:?}")),
        };
        let head: usize = match cols[6].parse() {
            Ok(v) => v,
            Err(_) => return parse_err(line_no, format!("bad head id {:?}", cols[6])),
        };
        sentence.push(Token {
            id,
            head,
            form: cols[1].to_string(),
            line: line_no,
        });
    }
    flush(&mut sentence, &mut graphs)?;
    Ok(graphs)
}

fn flush(sentence: &mut Vec<Token>, graphs: &mut Vec<TokenGraph>) -> Result<()> {
    if sentence.is_empty() {
        return Ok(());
    }
    let n = sentence.len();
    let mut edges = Vec::with_capacity(n);
    for (pos, tok) in sentence.iter().enumerate() {
        if tok.id != pos + 1 {
            return parse_err(
                tok.line,
                format!("token id {} out of sequence (expected {})", tok.id, pos + 1),
            );
        }
        if tok.head > n {
            return parse_err(tok.line, format!("head id {} out of range for {n} tokens", tok.head));
        }
        if tok.head == tok.id {
            return parse_err(tok.line, "token is its own head");
        }
        if tok.head > 0 {
            edges.push((tok.head - 1, tok.id - 1));
        }
    }
    let labels = sentence.drain(..).map(|t| t.form).collect();
    graphs.push(TokenGraph::new(n, edges, Some(labels))?);
    Ok(())
}

/// Writes graphs back as CoNLL-U. Each node may have at most one incoming
/// edge (its head); nodes without one are attached to the root.
pub fn to_conllu(graphs: &[TokenGraph]) -> Result<String> {
    let mut out = String::new();
    for (s, g) in graphs.iter().enumerate() {
        let mut heads = vec![0usize; g.n()];
        for &(h, d) in g.edges() {
            if heads[d] != 0 {
                return Err(GwtError::InvalidArgument(format!(
                    "sentence {s}: node {d} has more than one head"
                )));
            }
            heads[d] = h + 1;
        }
        let _ = writeln!(out, "# sent_id = {}", s + 1);
        for (i, &head) in heads.iter().enumerate() {
            let form = g.labels().map_or("_", |l| l[i].as_str());
            let rel = if head == 0 { "root" } else { "dep" };
            let _ = writeln!(out, "{}\t{form}\t_\t_\t_\t_\t{head}\t{rel}\t_\t_", i + 1);
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, form: &str, head: &str) -> String {
        format!("{id}\t{form}\t_\t_\t_\t_\t{head}\t_\t_\t_\n")
    }

    #[test]
    fn two_token_sentence() {
        let text = line("1", "the", "2") + &line("2", "cat", "0");
        let g = parse_conllu(&text).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].n(), 2);
        assert_eq!(g[0].edges(), &[(1, 0)]);
        assert_eq!(g[0].labels().unwrap(), &["the".to_string(), "cat".to_string()]);
    }

    #[test]
    fn root_only_sentence() {
        let g = parse_conllu(&line("1", "hi", "0")).unwrap();
        assert_eq!(g[0].n(), 1);
        assert!(g[0].edges().is_empty());
    }

    #[test]
    fn four_token_heads() {
        let text: String = ["2", "0", "2", "3"]
            .iter()
            .enumerate()
            .map(|(i, h)| line(&(i + 1).to_string(), "w", h))
            .collect();
        let g = parse_conllu(&text).unwrap();
        assert_eq!(g[0].edges(), &[(1, 0), (1, 2), (2, 3)]);
    }

    #[test]
    fn skips_ranges_empty_nodes_and_comments() {
        let text = String::from("# text = don't go\r\n")
            + &line("1-2", "don't", "_")
            + &line("1", "do", "3")
            + &line("2", "n't", "3")
            + &line("2.1", "x", "_")
            + &line("3", "go", "0")
            + "\n\n"
            + &line("1", "ok", "0");
        let g = parse_conllu(&text).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].n(), 3);
        assert_eq!(g[0].edges(), &[(2, 0), (2, 1)]);
        assert_eq!(g[1].n(), 1);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = line("1", "a", "0") + "2\tb\t_\n";
        match parse_conllu(&text) {
            Err(GwtError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let text = line("1", "a", "0") + &line("2", "b", "7");
        match parse_conllu(&text) {
            Err(GwtError::Parse { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("out of range"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_document_is_empty() {
        assert!(parse_conllu("").unwrap().is_empty());
        assert!(parse_conllu("\n# only a comment\n\n").unwrap().is_empty());
    }

    #[test]
    fn serialize_round_trip() {
        let text = line("1", "a", "2") + &line("2", "b", "0") + &line("3", "c", "2") + "\n";
        let graphs = parse_conllu(&text).unwrap();
        let again = parse_conllu(&to_conllu(&graphs).unwrap()).unwrap();
        assert_eq!(again, graphs);
    }
}
