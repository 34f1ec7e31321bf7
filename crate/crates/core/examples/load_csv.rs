//! Loads an interaction log from CSV, preprocesses it and splits it by
//! student. Pass a path, or run without one to use a generated file.

use auxkc::data::{generate_synthetic, load_csv, split, write_csv, CsvFormat, SyntheticConfig};

fn main() -> auxkc::Result<()> {
    let path = match std::env::args().nth(1) {
        Some(p) => p.into(),
        None => {
            let (data, _) = generate_synthetic(&SyntheticConfig::small(0));
            let p = std::env::temp_dir().join("auxkc_example_log.csv");
            write_csv(&data, &p)?;
            p
        }
    };
    let data = load_csv(&path, &CsvFormat::default())?;
    println!(
        "{}: {} students, {} exercises, {} KCs, {} interactions",
        path.display(),
        data.students().len(),
        data.n_exercises(),
        data.n_kcs(),
        data.n_interactions()
    );
    let s = split(&data.preprocessed(), (0.8, 0.1, 0.1), 0)?;
    for (name, d) in [("train", &s.train), ("val", &s.val), ("test", &s.test)] {
        println!("{name:<5} {} sequences", d.sequences.len());
    }
    Ok(())
}
