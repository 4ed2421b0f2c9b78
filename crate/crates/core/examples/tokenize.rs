//! Shows the token streams for one generated sketch and decodes them back.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sketch_align::datagen::{generate_sketch, Template};
use sketch_align::tokenizer::{decode, encode_constraints, encode_geometry, Vocabulary};

fn main() -> sketch_align::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (sketch, constraints) = generate_sketch(Template::Slot, &mut rng);
    println!("vocabulary: {} tokens", Vocabulary::new().len());

    for (i, prim) in encode_geometry(&sketch)?.iter().enumerate() {
        println!("primitive {i}: {prim:?}");
    }
    let tokens = encode_constraints(&constraints)?;
    let names: Vec<String> = tokens.iter().map(|t| t.name()).collect();
    println!("constraints: {}", names.join(" "));

    let back = decode(&tokens, &sketch)?;
    assert_eq!(back.len(), constraints.len());
    println!("decoded {} constraints back", back.len());
    Ok(())
}
