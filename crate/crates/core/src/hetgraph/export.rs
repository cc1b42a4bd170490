use std::io::Write;

use super::{EdgeKind, HeteroGraph, LabelStore, NodeKind};

/// One line per undirected edge: `src_key,dst_key,kind`, no header.
pub fn write_edge_list<W: Write>(g: &HeteroGraph, w: W) -> csv::Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for kind in EdgeKind::ALL {
        for (u, v) in g.edges(kind) {
            out.write_record([g.key(u), g.key(v), kind.as_str()])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Node table `key,kind,label,category` for layout tools.
pub fn write_node_table<W: Write>(g: &HeteroGraph, labels: &LabelStore, w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["key", "kind", "label", "category"])?;
    for node in g.nodes() {
        let label = match node.kind {
            NodeKind::Product => labels.class_of(&node.key).map(|c| c.as_str()).unwrap_or(""),
            _ => "",
        };
        let category = node.attrs.main_category.as_deref().unwrap_or("");
        out.write_record([node.key.as_str(), node.kind.as_str(), label, category])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hetgraph::{GraphBuilder, PoliticalClass, PoliticalLabel};

    #[test]
    fn exports_each_edge_once() {
        let mut b = GraphBuilder::new();
        let p = b.add_node(NodeKind::Product, "p1");
        let q = b.add_node(NodeKind::Product, "p2");
        let c = b.add_node(NodeKind::Category, "Arts, Crafts & Sewing");
        b.add_edge(p, q, EdgeKind::AlsoBought, None).unwrap();
        b.add_edge(q, c, EdgeKind::InCategory, None).unwrap();
        b.attrs_mut(p).unwrap().main_category = Some("Books".into());
        let g = b.freeze();

        let mut buf = Vec::new();
        write_edge_list(&g, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "p1,p2,also_bought\np2,\"Arts, Crafts & Sewing\",in_category\n"
        );

        let mut labels = LabelStore::new();
        labels.offer(PoliticalLabel::seed("p1", PoliticalClass::Liberal));
        let mut buf = Vec::new();
        write_node_table(&g, &labels, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("key,kind,label,category\np1,product,liberal,Books\n"));
    }
}
