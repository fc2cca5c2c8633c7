//! The invertible building blocks on their own: Shiesh, an EL layer and
//! sorted triangular attention, each run forward and back.

use profiti::data::{Query, SortCriterion};
use profiti::flow::attention::{a_tri, attn_scores, sita_fwd, sita_inv, tri_log_det, AttnKind, AttnParams};
use profiti::flow::shiesh::{shiesh_dfwd, shiesh_fwd, shiesh_inv};
use profiti_autodiff::Tensor;

fn main() -> anyhow::Result<()> {
    println!("{:>6} {:>10} {:>10} {:>8}", "u", "shiesh", "inverse", "slope");
    for u in [-8.0, -2.0, -0.5, 0.0, 0.5, 2.0, 8.0] {
        let v = shiesh_fwd(u, 1.0);
        println!("{u:>6.2} {v:>10.5} {:>10.5} {:>8.5}", shiesh_inv(v, 1.0), shiesh_dfwd(u, 1.0));
    }

    // three queries given out of time order
    let queries = vec![
        Query { t: 2.0, channel: 0 },
        Query { t: 0.5, channel: 1 },
        Query { t: 1.0, channel: 0 },
    ];
    let x = Tensor::from_rows(&[vec![0.2, -0.4], vec![1.0, 0.3], vec![-0.6, 0.8]])?;
    let p = AttnParams {
        w_q: Tensor::from_rows(&[vec![0.9, 0.1], vec![-0.3, 0.7]])?,
        w_k: Tensor::from_rows(&[vec![0.5, -0.2], vec![0.4, 1.1]])?,
        epsilon: 1e-5,
        kind: AttnKind::Tri,
    };
    let a = attn_scores(&x, &p.w_q, &p.w_k)?;
    let tri = a_tri(&a, p.epsilon);
    println!("\nscores (unsorted):\n{a:?}\ntriangular matrix (unsorted rows):\n{tri:?}");
    println!("log|det| in O(K): {:.6}", tri_log_det(&tri));

    let sort = SortCriterion::default();
    let z = [0.3, -1.2, 0.7];
    let fwd = sita_fwd(&z, &x, &queries, &sort, &p)?;
    let back = sita_inv(&fwd.values, &x, &queries, &sort, &p)?;
    println!("\nSITA forward {:?} (log|det| {:.6})", fwd.values, fwd.logdet);
    println!("SITA inverse {:?} (log|det| {:.6})", back.values, back.logdet);
    Ok(())
}
