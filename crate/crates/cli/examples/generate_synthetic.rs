//! Regenerate the shipped synthetic data set:
//! `cargo run -p n400 --example generate_synthetic -- data/synthetic`

fn main() -> anyhow::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "data/synthetic".to_owned());
    std::fs::create_dir_all(&dir)?;
    for (name, body) in n400::synth::generate() {
        std::fs::write(std::path::Path::new(&dir).join(name), body)?;
    }
    Ok(())
}
