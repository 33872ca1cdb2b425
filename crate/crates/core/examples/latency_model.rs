//! Theoretical frame latency over a sweep of frame sizes, links and
//! inference costs.
//!
//! cargo run --example latency_model

use screenome::service::theoretical_latency;

fn main() -> screenome::Result<()> {
    println!("{:>9} {:>10} {:>12} {:>12} {:>12}", "frame kB", "link Mbps", "inference", "one-way ms", "two-way ms");
    for kb in [1.0, 50.0, 200.0] {
        for mbps in [25.0, 250.0, 1000.0] {
            for inference in [0.0, 5.0] {
                let bits = kb * 1024.0 * 8.0;
                let one = theoretical_latency(bits, mbps * 1e6, inference, 1)?;
                let two = theoretical_latency(bits, mbps * 1e6, inference, 2)?;
                println!("{kb:>9.0} {mbps:>10.0} {inference:>12.1} {one:>12.6} {two:>12.6}");
            }
        }
    }
    Ok(())
}
