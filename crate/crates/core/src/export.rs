//! File formats: edge-list TSV, GraphML, and the CSV tables produced by each
//! analysis stage. Numbers use Rust's locale-independent `Display`.

use std::io::{BufRead, BufReader, Read, Write};

use thiserror::Error;

use crate::backbone::{BackboneNetwork, BackboneStats};
use crate::diffusion::{AbsorptionMatrix, RankingTable};
use crate::disparity::ProfileRow;
use crate::network::{Edge, HistogramBin, ImbalanceNetwork, NetworkError, NodeAccount};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("edge list line {line}: {reason}")]
    EdgeList { line: usize, reason: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const EDGE_LIST_HEADER: &str = "src\tdst\tweight";

pub fn write_edge_list<S: Scalar, W: Write>(net: &ImbalanceNetwork<S>, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{EDGE_LIST_HEADER}")?;
    for e in net.edges() {
        writeln!(out, "{}\t{}\t{}", net.country(e.source), net.country(e.target), e.weight)?;
    }
    Ok(())
}

/// Reads `src dst weight` rows separated by tabs or spaces. A header row and
/// `#` comment lines are skipped; extra columns are ignored. The node set is
/// the codes appearing in the edges.
pub fn read_edge_list<S: Scalar, R: Read>(input: R) -> Result<ImbalanceNetwork<S>, FormatError> {
    let mut countries: Vec<String> = Vec::new();
    let mut index = std::collections::HashMap::new();
    let mut edges = Vec::new();
    for (idx, line) in BufReader::new(input).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(FormatError::EdgeList {
                line: line_no,
                reason: "expected src, dst and weight".into(),
            });
        }
        if edges.is_empty() && fields[..3] == ["src", "dst", "weight"] {
            continue;
        }
        let weight: S = fields[2].parse().map_err(|_| FormatError::EdgeList {
            line: line_no,
            reason: format!("bad weight {:?}", fields[2]),
        })?;
        let mut node = |code: &str| {
            *index.entry(code.to_string()).or_insert_with(|| {
                countries.push(code.to_string());
                countries.len() - 1
            })
        };
        let (source, target) = (node(fields[0]), node(fields[1]));
        edges.push(Edge {
            source,
            target,
            weight,
        });
    }
    Ok(ImbalanceNetwork::from_edges(countries, edges)?)
}

pub fn write_accounts_csv<S: Scalar, W: Write>(accounts: &[NodeAccount<S>], mut out: W) -> std::io::Result<()> {
    writeln!(out, "country,k_in,k_out,s_in,s_out,delta_s,class")?;
    for a in accounts {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            a.country,
            a.k_in,
            a.k_out,
            a.s_in,
            a.s_out,
            a.delta_s,
            a.class()
        )?;
    }
    Ok(())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
        .replace('\'', "&apos;")
}

type GraphEdge<'a, S> = (&'a Edge<S>, Option<(S, S)>);

fn graphml<S: Scalar, W: Write>(
    net: &ImbalanceNetwork<S>,
    edges: &[GraphEdge<'_, S>],
    with_alpha: bool,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
    writeln!(out, r#"<graphml xmlns="http://graphml.graphdrawing.org/xmlns">"#)?;
    for (id, target, name) in [
        ("s_in", "node", "s_in"),
        ("s_out", "node", "s_out"),
        ("delta_s", "node", "delta_s"),
        ("weight", "edge", "weight"),
    ] {
        writeln!(out, r#"  <key id="{id}" for="{target}" attr.name="{name}" attr.type="double"/>"#)?;
    }
    if with_alpha {
        for id in ["alpha_at_source", "alpha_at_target"] {
            writeln!(out, r#"  <key id="{id}" for="edge" attr.name="{id}" attr.type="double"/>"#)?;
        }
    }
    writeln!(out, r#"  <graph id="G" edgedefault="directed">"#)?;
    for a in net.node_accounts() {
        writeln!(out, r#"    <node id="{}">"#, xml_escape(&a.country))?;
        writeln!(out, r#"      <data key="s_in">{}</data>"#, a.s_in.to_f64_lossy())?;
        writeln!(out, r#"      <data key="s_out">{}</data>"#, a.s_out.to_f64_lossy())?;
        writeln!(out, r#"      <data key="delta_s">{}</data>"#, a.delta_s.to_f64_lossy())?;
        writeln!(out, "    </node>")?;
    }
    for (e, alpha) in edges {
        writeln!(
            out,
            r#"    <edge source="{}" target="{}">"#,
            xml_escape(net.country(e.source)),
            xml_escape(net.country(e.target))
        )?;
        writeln!(out, r#"      <data key="weight">{}</data>"#, e.weight.to_f64_lossy())?;
        if let Some((src, dst)) = alpha {
            writeln!(out, r#"      <data key="alpha_at_source">{}</data>"#, src.to_f64_lossy())?;
            writeln!(out, r#"      <data key="alpha_at_target">{}</data>"#, dst.to_f64_lossy())?;
        }
        writeln!(out, "    </edge>")?;
    }
    writeln!(out, "  </graph>")?;
    writeln!(out, "</graphml>")
}

/// GraphML with node strengths and edge weights.
pub fn write_graphml<S: Scalar, W: Write>(net: &ImbalanceNetwork<S>, out: W) -> std::io::Result<()> {
    let edges: Vec<_> = net.edges().iter().map(|e| (e, None)).collect();
    graphml(net, &edges, false, out)
}

/// GraphML of a backbone. Node attributes are those of the base network.
pub fn write_backbone_graphml<S: Scalar, W: Write>(bb: &BackboneNetwork<'_, S>, out: W) -> std::io::Result<()> {
    let edges: Vec<_> = bb
        .edges()
        .zip(&bb.significance)
        .map(|(e, t)| (e, Some((t.alpha_at_source, t.alpha_at_target))))
        .collect();
    graphml(bb.base, &edges, true, out)
}

/// Edge-list TSV of a backbone with the two endpoint test values.
pub fn write_backbone_edge_list<S: Scalar, W: Write>(bb: &BackboneNetwork<'_, S>, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{EDGE_LIST_HEADER}\talpha_at_source\talpha_at_target")?;
    for (e, t) in bb.edges().zip(&bb.significance) {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            bb.base.country(e.source),
            bb.base.country(e.target),
            e.weight,
            t.alpha_at_source,
            t.alpha_at_target
        )?;
    }
    Ok(())
}

pub fn write_histogram_csv<W: Write>(bins: &[HistogramBin], mut out: W) -> std::io::Result<()> {
    writeln!(out, "lower,upper,count")?;
    for b in bins {
        writeln!(out, "{},{},{}", b.lower, b.upper, b.count)?;
    }
    Ok(())
}

pub fn write_profile_csv<W: Write>(rows: &[ProfileRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "direction,k,mean_kY,null_mean,null_p2sigma,n_nodes")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.direction, r.k, r.mean_k_y, r.null_mean, r.null_p2sigma, r.n_nodes
        )?;
    }
    Ok(())
}

pub fn write_stats_csv<W: Write>(rows: &[BackboneStats], mut out: W) -> std::io::Result<()> {
    writeln!(out, "alpha,pct_flux,pct_nodes,pct_edges")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.alpha, r.pct_flux, r.pct_nodes, r.pct_edges)?;
    }
    Ok(())
}

pub fn write_absorption_csv<S: Scalar, W: Write>(m: &AbsorptionMatrix<S>, mut out: W) -> std::io::Result<()> {
    writeln!(out, "start,end,share,non_absorbed")?;
    for (r, &start) in m.starts.iter().enumerate() {
        for (c, &end) in m.ends.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{}",
                m.countries[start], m.countries[end], m.rows[r][c], m.non_absorbed[r]
            )?;
        }
    }
    Ok(())
}

/// Ranking table with shares in percent.
pub fn write_ranking_csv<S: Scalar, W: Write>(table: &RankingTable<S>, mut out: W) -> std::io::Result<()> {
    writeln!(out, "rank,partner,global_share_pct,local_share_pct,direct")?;
    for (i, r) in table.rows.iter().enumerate() {
        writeln!(
            out,
            "{},{},{:.4},{:.4},{}",
            i + 1,
            r.partner,
            100.0 * r.global_share.to_f64_lossy(),
            100.0 * r.local_share.to_f64_lossy(),
            r.direct
        )?;
    }
    Ok(())
}
