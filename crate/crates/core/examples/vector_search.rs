//! Exact inner-product search over hash embeddings.

use chronorag::vector_index::{EmbeddingProvider, FlatVectorIndex, HashEmbedder};

fn main() -> chronorag::Result<()> {
    let embedder = HashEmbedder::new(64, 7);
    let texts = [
        "red lantern over the water",
        "fishing boats at the pier",
        "a crowd watches lanterns float",
        "empty street at night",
    ];
    let mut index = FlatVectorIndex::new(embedder.dim());
    for (i, t) in texts.iter().enumerate() {
        index.add(&format!("t{i}"), &embedder.embed_one(t)?)?;
    }
    let q = embedder.embed_one("lantern")?;
    for (id, sim) in index.search(&q, 3, 0.0)? {
        println!("{id}  cos={sim:.3}");
    }
    Ok(())
}
