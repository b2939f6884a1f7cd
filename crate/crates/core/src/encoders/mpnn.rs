//! Directed-edge message passing.
//!
//! For `l = 1..=L` every directed edge `u→v` carries
//! `m_uv = f1(e_u ⊕ e_uv ⊕ Σ_{w ∈ N(u)\v} m_wu)` with `m^(0) = 0`; node
//! embeddings are `h_u = f2(e_u ⊕ Σ_{v ∈ N(u)} m_vu^(L))` and the graph
//! embedding is the sum (or mean) of all `h_u`.

use super::{names, EncodeError, EncoderConfig, Hidden, Mlp, Readout};
use crate::diffcore::{ParameterStore, Tape, Var};
use crate::molgraph::{atom_features, bond_feature, MolGraph};

struct DirectedEdge {
    from: usize,
    to: usize,
    code: u8,
}

/// Final node embeddings `h_u`, in atom order.
pub fn mpnn_node_embeddings(
    tape: &mut Tape,
    store: &ParameterStore,
    graph: &MolGraph,
    cfg: &EncoderConfig,
) -> Result<Vec<Var>, EncodeError> {
    let d = cfg.dim;
    let proj_w = tape.param(store, names::ATOM_PROJ_W)?;
    let proj_b = tape.param(store, names::ATOM_PROJ_B)?;
    let f1 = Mlp::bind(tape, store, "f1", Hidden::Relu)?;
    let f2 = Mlp::bind(tape, store, "f2", Hidden::Relu)?;

    let mut atom_emb = Vec::with_capacity(graph.atom_count());
    for atom in graph.atoms() {
        let x = tape.vector(atom_features(atom).to_vec())?;
        atom_emb.push(tape.linear(proj_w, proj_b, x)?);
    }

    let mut bond_vars = [None; 5];
    let mut edges = Vec::with_capacity(2 * graph.bond_count());
    for b in graph.bonds() {
        edges.push(DirectedEdge { from: b.begin, to: b.end, code: b.code });
        edges.push(DirectedEdge { from: b.end, to: b.begin, code: b.code });
    }
    // incoming[u] = edges w→u
    let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); graph.atom_count()];
    for (i, e) in edges.iter().enumerate() {
        incoming[e.to].push(i);
    }

    let zero = tape.zeros(d);
    let mut messages = vec![zero; edges.len()];
    for _ in 0..cfg.depth {
        let mut next = Vec::with_capacity(edges.len());
        for e in &edges {
            let inbound: Vec<Var> = incoming[e.from]
                .iter()
                .filter(|&&k| edges[k].from != e.to)
                .map(|&k| messages[k])
                .collect();
            let agg = if inbound.is_empty() { zero } else { tape.sum(&inbound)? };
            let bond = match bond_vars[e.code as usize] {
                Some(v) => v,
                None => {
                    let f = bond_feature(e.code).map_err(|err| {
                        crate::diffcore::DiffError::shape("mpnn", err.to_string())
                    })?;
                    let v = tape.vector(f.to_vec())?;
                    bond_vars[e.code as usize] = Some(v);
                    v
                }
            };
            let input = tape.concat(&[atom_emb[e.from], bond, agg])?;
            next.push(f1.apply(tape, input)?);
        }
        messages = next;
    }

    let mut nodes = Vec::with_capacity(graph.atom_count());
    for (u, inc) in incoming.iter().enumerate() {
        let inbound: Vec<Var> = inc.iter().map(|&k| messages[k]).collect();
        let agg = if inbound.is_empty() { zero } else { tape.sum(&inbound)? };
        let input = tape.concat(&[atom_emb[u], agg])?;
        nodes.push(f2.apply(tape, input)?);
    }
    Ok(nodes)
}

/// Graph-level drug embedding `h_G` of length `d`.
pub fn mpnn_encode(
    tape: &mut Tape,
    store: &ParameterStore,
    graph: &MolGraph,
    cfg: &EncoderConfig,
) -> Result<Var, EncodeError> {
    let nodes = mpnn_node_embeddings(tape, store, graph, cfg)?;
    let out = match cfg.readout {
        Readout::Sum => tape.sum(&nodes)?,
        Readout::Mean => tape.mean(&nodes)?,
    };
    Ok(out)
}
