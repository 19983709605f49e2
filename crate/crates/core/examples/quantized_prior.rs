//! Description length of weight sets under the quantized category prior.

use netrecon::prior::Categories;

fn main() -> netrecon::Result<()> {
    let delta = 0.01;
    // same number of edges, fewer distinct values costs less
    let sets: [(&str, Vec<f64>); 3] = [
        ("one value", vec![0.5; 12]),
        ("two values", [vec![0.5; 6], vec![-0.25; 6]].concat()),
        ("all distinct", (1..=12).map(|k| k as f64 * 0.07).collect()),
    ];
    for (name, values) in sets {
        let c = Categories::from_values(false, 1.0, delta, values.iter().copied())?;
        println!("{name:<13} categories {:>2}  ln P = {:8.2}", c.k(), c.log_prior());
    }
    Ok(())
}
