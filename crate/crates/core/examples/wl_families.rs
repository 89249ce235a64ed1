//! Build circulant skip-link families and show that color refinement
//! cannot tell the members apart while a single marked node can.
//!
//! Run with: cargo run --example wl_families

use subgraph_lab::graph::{connected_components, csl, csl_union};
use subgraph_lab::wl;

fn main() {
    let a = csl(13, 5).unwrap();
    let b = csl(13, 3).unwrap();
    println!(
        "CSL(13,5): {} nodes, {} edges, all degree 4",
        a.num_nodes(),
        a.num_edges()
    );
    println!("plain refinement separates CSL(13,5) from CSL(13,3)? {}", wl::distinguish(&a, &b));
    println!(
        "marked certificates differ? {}",
        wl::marked_certificate(&a, 0).unwrap() != wl::marked_certificate(&b, 0).unwrap()
    );
    println!();

    let members = [
        csl_union(13, &[2, 3]).unwrap(),
        csl_union(13, &[2, 5]).unwrap(),
        csl_union(13, &[3, 5]).unwrap(),
    ];
    println!("two-component family over skips {{2, 3, 5}}:");
    for (i, member) in members.iter().enumerate() {
        let partition = connected_components(member);
        println!(
            "  member {i}: {} nodes, {} components",
            member.num_nodes(),
            partition.count()
        );
    }
    for i in 0..members.len() {
        for j in (i + 1)..members.len() {
            println!(
                "  refinement separates members {i} and {j}? {}",
                wl::distinguish(&members[i], &members[j])
            );
        }
    }
    println!();
    println!("stable coloring of member 0 from constant colors:");
    let coloring = wl::refine(&members[0], &wl::uniform_init(26));
    println!(
        "  {} color class(es) after {} round(s)",
        coloring.class_count(),
        coloring.rounds()
    );
    let marked = wl::refine(&members[0], &wl::marked_init(26, 0));
    println!(
        "  marking node 0 yields {} classes after {} rounds",
        marked.class_count(),
        marked.rounds()
    );
}
