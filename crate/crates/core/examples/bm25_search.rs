//! Builds a BM25 index over a handful of snippets and runs a query.

use chronorag::model::{Channel, Snippet};
use chronorag::text_index::{Bm25Index, Bm25Params};

fn main() -> chronorag::Result<()> {
    let docs = vec![
        Snippet::new("a", Channel::Asr, "the ferry leaves the harbor at noon", 10.0, 14.0),
        Snippet::new("b", Channel::Asr, "lanterns line the harbor wall", 40.0, 43.0),
        Snippet::new("c", Channel::Asr, "the market sells bread and fish", 70.0, 75.0),
        Snippet::new("d", Channel::Asr, "harbor harbor harbor", 90.0, 91.0),
    ];
    let index = Bm25Index::build(&docs, Bm25Params::default())?;
    println!("{} docs, avgdl {:.2}", index.n_docs(), index.avg_dl());
    for (id, score) in index.search("harbor lanterns", 10) {
        println!("{id}  {score:.4}");
    }
    Ok(())
}
